use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::volume::{linear_index, voxel_coords, BoxRegion, LabelMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => l1 == 1,
                        Connectivity::TwentySix => l1 > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// One connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Linear voxel indices, ascending.
    pub voxel_list: Vec<usize>,
    pub bbox: BoxRegion,
    pub volume_mm3: f64,
}

impl Component {
    pub fn len(&self) -> usize {
        self.voxel_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_list.is_empty()
    }
}

/// Labels the connected foreground regions of `mask`.
///
/// Components come back largest first; equal sizes are ordered by the linear
/// index of their bounding-box corner.
pub fn connected_components(mask: &LabelMask, connectivity: Connectivity, spacing_mm: [f64; 3]) -> Vec<Component> {
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let voxel_mm3 = spacing_mm[0] * spacing_mm[1] * spacing_mm[2];
    let mut visited = vec![false; mask.bits().len()];
    let mut queue = VecDeque::new();
    let mut comps = Vec::new();

    for start in 0..mask.bits().len() {
        if !mask.bits()[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        while let Some(idx) = queue.pop_front() {
            voxels.push(idx);
            let p = voxel_coords(dims, idx);
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            for off in &offsets {
                let q = [p[0] as isize + off[0], p[1] as isize + off[1], p[2] as isize + off[2]];
                if (0..3).any(|a| q[a] < 0 || q[a] as usize >= dims[a]) {
                    continue;
                }
                let n = linear_index(dims, q[0] as usize, q[1] as usize, q[2] as usize);
                if mask.bits()[n] && !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        voxels.sort_unstable();
        let bbox = BoxRegion {
            corner: lo,
            size: [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1],
        };
        comps.push(Component {
            volume_mm3: voxels.len() as f64 * voxel_mm3,
            voxel_list: voxels,
            bbox,
        });
    }

    comps.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| {
                let ca = linear_index(dims, a.bbox.corner[0], a.bbox.corner[1], a.bbox.corner[2]);
                let cb = linear_index(dims, b.bbox.corner[0], b.bbox.corner[1], b.bbox.corner[2]);
                ca.cmp(&cb)
            })
            .then_with(|| a.voxel_list[0].cmp(&b.voxel_list[0]))
    });
    comps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(dims: [usize; 3], pts: &[[usize; 3]]) -> LabelMask {
        let mut m = LabelMask::empty(dims).unwrap();
        for p in pts {
            m.set(p[0], p[1], p[2], true);
        }
        m
    }

    #[test]
    fn disjoint_singletons() {
        let m = mask_with([6, 6, 6], &[[0, 0, 0], [5, 5, 5]]);
        let c = connected_components(&m, Connectivity::TwentySix, [1.0; 3]);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].bbox.corner, [0, 0, 0]);
        assert_eq!(c[1].bbox.corner, [5, 5, 5]);
    }

    #[test]
    fn solid_cube() {
        let m = LabelMask::from_box([5, 5, 5], [1, 1, 1], [3, 3, 3]).unwrap();
        let c = connected_components(&m, Connectivity::Six, [2.0, 1.0, 1.0]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox.size, [3, 3, 3]);
        assert_eq!(c[0].bbox.corner, [1, 1, 1]);
        assert_eq!(c[0].volume_mm3, 54.0);
    }

    #[test]
    fn face_diagonal_pair() {
        let m = mask_with([3, 3, 3], &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&m, Connectivity::Six, [1.0; 3]).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::TwentySix, [1.0; 3]).len(), 1);
    }

    #[test]
    fn ordered_by_size() {
        let mut m = LabelMask::from_box([10, 10, 10], [6, 6, 6], [3, 3, 3]).unwrap();
        m.set(0, 0, 0, true);
        let c = connected_components(&m, Connectivity::TwentySix, [1.0; 3]);
        assert_eq!(c[0].len(), 27);
        assert_eq!(c[1].len(), 1);
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = LabelMask::empty([4, 4, 4]).unwrap();
        assert!(connected_components(&m, Connectivity::TwentySix, [1.0; 3]).is_empty());
    }
}
