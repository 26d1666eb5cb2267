//! Binary erosion and dilation with the 6-neighbourhood cross.
//!
//! A radius `r` structuring element is the L1 ball `|dx| + |dy| + |dz| <= r`,
//! realised as `r` passes of the radius-1 cross. Voxels outside the grid count
//! as background.

use super::volume::{linear_index, LabelMask};
use crate::error::{Error, Result};

const FACE_OFFSETS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

fn step(mask: &LabelMask, dilate: bool) -> LabelMask {
    let dims = mask.dims();
    let mut out = mask.clone();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let here = mask.get(i, j, k);
                // Dilation can only add, erosion can only remove.
                if here == dilate {
                    continue;
                }
                let mut hit = false;
                for off in FACE_OFFSETS {
                    let p = [i as isize + off[0], j as isize + off[1], k as isize + off[2]];
                    let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < dims[a]);
                    let neighbour = inside && mask.get(p[0] as usize, p[1] as usize, p[2] as usize);
                    if neighbour == dilate {
                        hit = true;
                        break;
                    }
                }
                if hit {
                    out.set(i, j, k, dilate);
                }
            }
        }
    }
    out
}

pub fn erode(mask: &LabelMask, radius_vox: usize) -> LabelMask {
    (0..radius_vox).fold(mask.clone(), |m, _| step(&m, false))
}

pub fn dilate(mask: &LabelMask, radius_vox: usize) -> LabelMask {
    (0..radius_vox).fold(mask.clone(), |m, _| step(&m, true))
}

/// Interior and boundary band of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySplit {
    /// `dilate(mask, 1)` minus the interior: a band about three voxels thick.
    pub boundary: LabelMask,
    /// `erode(mask, 1)`.
    pub interior: LabelMask,
    /// Set when the mask is too thin to have any interior voxel.
    pub interior_empty: bool,
}

pub fn boundary_interior_split(mask: &LabelMask) -> Result<BoundarySplit> {
    if mask.is_empty() {
        return Err(Error::NoSegmentation("boundary split of an empty mask".into()));
    }
    let interior = erode(mask, 1);
    let boundary = dilate(mask, 1).minus(&interior)?;
    let interior_empty = interior.is_empty();
    Ok(BoundarySplit {
        boundary,
        interior,
        interior_empty,
    })
}

/// Foreground voxels with at least one background (or out-of-grid) face neighbour.
pub fn surface(mask: &LabelMask) -> LabelMask {
    let eroded = erode(mask, 1);
    let dims = mask.dims();
    let mut bits = mask.bits().to_vec();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let idx = linear_index(dims, i, j, k);
                bits[idx] = bits[idx] && !eroded.bits()[idx];
            }
        }
    }
    LabelMask::new(dims, bits).expect("same dims")
}
