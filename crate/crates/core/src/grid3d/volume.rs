use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts per axis, `[nx, ny, nz]`.
pub type Dims = [usize; 3];

/// Linear index of voxel `(i, j, k)`; x varies fastest.
#[inline]
pub fn linear_index(dims: Dims, i: usize, j: usize, k: usize) -> usize {
    i + dims[0] * (j + dims[1] * k)
}

/// Inverse of [`linear_index`].
#[inline]
pub fn voxel_coords(dims: Dims, idx: usize) -> [usize; 3] {
    let i = idx % dims[0];
    let rest = idx / dims[0];
    [i, rest % dims[1], rest / dims[1]]
}

pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("grid dims must be >= 1, got {dims:?}")));
    }
    Ok(())
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::invalid(format!(
            "spacing must be finite and > 0, got {spacing:?}"
        )));
    }
    Ok(())
}

/// A scalar intensity volume with physical voxel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    dims: Dims,
    spacing_mm: [f64; 3],
    values: Vec<f32>,
}

impl VolumeGrid {
    pub fn new(dims: Dims, spacing_mm: [f64; 3], values: Vec<f32>) -> Result<Self> {
        check_dims(dims)?;
        check_spacing(spacing_mm)?;
        if values.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch {
                expected: voxel_count(dims),
                got: values.len(),
            });
        }
        Ok(Self {
            dims,
            spacing_mm,
            values,
        })
    }

    pub fn filled(dims: Dims, spacing_mm: [f64; 3], value: f32) -> Result<Self> {
        Self::new(dims, spacing_mm, vec![value; voxel_count(dims)])
    }

    /// Builds a volume by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(
        dims: Dims,
        spacing_mm: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        check_dims(dims)?;
        let mut values = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, spacing_mm, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.values[linear_index(self.dims, i, j, k)]
    }
}

/// Intensity clamp window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationWindow {
    pub lo_hu: f32,
    pub hi_hu: f32,
}

impl NormalizationWindow {
    /// The lung window, [-400, 400] HU.
    pub const LUNG: NormalizationWindow = NormalizationWindow {
        lo_hu: -400.0,
        hi_hu: 400.0,
    };

    pub fn new(lo_hu: f32, hi_hu: f32) -> Result<Self> {
        if !(lo_hu.is_finite() && hi_hu.is_finite() && lo_hu < hi_hu) {
            return Err(Error::invalid(format!(
                "normalization window requires lo < hi, got [{lo_hu}, {hi_hu}]"
            )));
        }
        Ok(Self { lo_hu, hi_hu })
    }

    #[inline]
    pub fn apply(&self, v: f32) -> f32 {
        (v.clamp(self.lo_hu, self.hi_hu) - self.lo_hu) / (self.hi_hu - self.lo_hu)
    }
}

impl Default for NormalizationWindow {
    fn default() -> Self {
        Self::LUNG
    }
}

/// Clamps intensities to the window and rescales them to [0, 1].
pub fn normalize_hu(volume: &VolumeGrid, window: NormalizationWindow) -> VolumeGrid {
    VolumeGrid {
        dims: volume.dims,
        spacing_mm: volume.spacing_mm,
        values: volume.values.iter().map(|&v| window.apply(v)).collect(),
    }
}

/// A binary voxel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl LabelMask {
    pub fn new(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        if bits.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch {
                expected: voxel_count(dims),
                got: bits.len(),
            });
        }
        Ok(Self { dims, bits })
    }

    pub fn empty(dims: Dims) -> Result<Self> {
        Self::new(dims, vec![false; voxel_count(dims)])
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        check_dims(dims)?;
        let mut bits = Vec::with_capacity(voxel_count(dims));
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    bits.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, bits })
    }

    /// A mask whose foreground is the given box, clipped to the grid.
    pub fn from_box(dims: Dims, corner: [usize; 3], size: [usize; 3]) -> Result<Self> {
        Self::from_fn(dims, |i, j, k| {
            let p = [i, j, k];
            (0..3).all(|a| p[a] >= corner[a] && p[a] < corner[a] + size[a])
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bits[linear_index(self.dims, i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = linear_index(self.dims, i, j, k);
        self.bits[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn not(&self) -> LabelMask {
        LabelMask {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &LabelMask, f: impl Fn(bool, bool) -> bool) -> Result<LabelMask> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "mask dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(LabelMask {
            dims: self.dims,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Voxels in `self` but not in `other`.
    pub fn minus(&self, other: &LabelMask) -> Result<LabelMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// `true` when every foreground voxel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &LabelMask) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn foreground(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// An axis-aligned box of voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRegion {
    pub corner: [usize; 3],
    pub size: [usize; 3],
}

impl BoxRegion {
    pub fn new(corner: [usize; 3], size: [usize; 3]) -> Result<Self> {
        if size.contains(&0) {
            return Err(Error::invalid(format!("box size must be >= 1, got {size:?}")));
        }
        Ok(Self { corner, size })
    }

    /// Exclusive upper corner.
    pub fn end(&self) -> [usize; 3] {
        [
            self.corner[0] + self.size[0],
            self.corner[1] + self.size[1],
            self.corner[2] + self.size[2],
        ]
    }

    pub fn contains_voxel(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.corner[a] && p[a] < self.corner[a] + self.size[a])
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        let (e, oe) = (self.end(), other.end());
        (0..3).all(|a| other.corner[a] >= self.corner[a] && oe[a] <= e[a])
    }

    pub fn fits_in(&self, dims: Dims) -> bool {
        let e = self.end();
        (0..3).all(|a| e[a] <= dims[a])
    }

    pub fn volume(&self) -> usize {
        self.size.iter().product()
    }
}
