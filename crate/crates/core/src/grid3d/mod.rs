//! 3D volume and mask primitives.

mod components;
mod metrics;
mod morphology;
mod resample;
pub mod rvol;
mod volume;

pub use components::{connected_components, Component, Connectivity};
pub use metrics::{dice, hd95, squared_distance_transform};
pub(crate) use metrics::nearest_rank;
pub use morphology::{boundary_interior_split, dilate, erode, surface, BoundarySplit};
pub use resample::{resample, resample_mask, Interpolation};
pub use volume::{
    linear_index, normalize_hu, voxel_coords, voxel_count, BoxRegion, Dims, LabelMask, NormalizationWindow,
    VolumeGrid,
};
