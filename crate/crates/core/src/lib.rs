//! Scan-level out-of-distribution detection for 3D tumor segmentation.
//!
//! The pipeline places fixed-size ROIs around predicted tumors, pools encoder
//! feature maps into one descriptor per ROI, and scores each scan with a
//! detector trained on those descriptors. [`eval`] implements the
//! matched-seed resampling protocol used to compare detectors.

pub mod detectors;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forest;
pub mod grid3d;
pub mod matrix;
pub mod roi;
pub mod seed;

pub use detectors::{Detector, GaussianOodModel, LogitVolume, StrategyConfig, StrategyMode};
pub use error::{Error, Result};
pub use eval::{EvalProtocol, EvalReport, ScoreRecord};
pub use features::{Label, ScanDescriptor, SynthConfig};
pub use forest::{ForestModel, ForestParams};
pub use grid3d::{BoxRegion, Dims, LabelMask, VolumeGrid};
pub use matrix::SampleMatrix;
pub use roi::{RoiConfig, RoiSpec};
