//! Segmentation-logit OOD scores.
//!
//! Each score averages a per-voxel quantity over the predicted tumor voxels
//! `V+` and negates it, so that higher means more OOD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid3d::{boundary_interior_split, Dims, LabelMask, VolumeGrid};

/// Background and tumor logits `f0`, `f1` of a two-class segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    dims: Dims,
    f0: Vec<f64>,
    f1: Vec<f64>,
    /// Optional minimum tumor probability for a voxel to enter `V+`.
    pub foreground_threshold: Option<f64>,
}

impl LogitVolume {
    pub fn new(dims: Dims, f0: Vec<f64>, f1: Vec<f64>) -> Result<Self> {
        let n = dims.iter().product::<usize>();
        for f in [&f0, &f1] {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: f.len(),
                });
            }
        }
        if f0.iter().chain(&f1).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(Self {
            dims,
            f0,
            f1,
            foreground_threshold: None,
        })
    }

    pub fn from_grids(f0: &VolumeGrid, f1: &VolumeGrid) -> Result<Self> {
        if f0.dims() != f1.dims() {
            return Err(Error::invalid(format!(
                "logit grids differ in shape: {:?} vs {:?}",
                f0.dims(),
                f1.dims()
            )));
        }
        let widen = |g: &VolumeGrid| g.values().iter().map(|&v| f64::from(v)).collect();
        Self::new(f0.dims(), widen(f0), widen(f1))
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.foreground_threshold = threshold;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    fn in_tumor(&self, i: usize) -> bool {
        // argmax ties go to the tumor class
        self.f1[i] >= self.f0[i] && self.foreground_threshold.is_none_or(|t| tumor_probability(self.f0[i], self.f1[i]) >= t)
    }

    /// Predicted tumor mask `V+`.
    pub fn predicted_mask(&self) -> LabelMask {
        let bits = (0..self.f0.len()).map(|i| self.in_tumor(i)).collect();
        LabelMask::new(self.dims, bits).expect("dims checked at construction")
    }

    fn tumor_voxels(&self) -> Result<Vec<usize>> {
        let v: Vec<usize> = (0..self.f0.len()).filter(|&i| self.in_tumor(i)).collect();
        if v.is_empty() {
            return Err(Error::NoSegmentation("no voxel is predicted as tumor".into()));
        }
        Ok(v)
    }
}

/// Softmax probability of class 1.
pub fn tumor_probability(f0: f64, f1: f64) -> f64 {
    let d = f0 - f1;
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// `log(exp(f0) + exp(f1))` without overflow.
pub fn log_sum_exp(f0: f64, f1: f64) -> f64 {
    let m = f0.max(f1);
    m + ((f0 - m).exp() + (f1 - m).exp()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitMethod {
    MaxSoftmax,
    MaxLogit,
    Energy,
}

impl LogitMethod {
    pub const ALL: [LogitMethod; 3] = [LogitMethod::MaxSoftmax, LogitMethod::MaxLogit, LogitMethod::Energy];

    pub fn name(self) -> &'static str {
        match self {
            LogitMethod::MaxSoftmax => "maxsoftmax",
            LogitMethod::MaxLogit => "maxlogit",
            LogitMethod::Energy => "energy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn voxel_value(self, f0: f64, f1: f64) -> f64 {
        match self {
            LogitMethod::MaxSoftmax => tumor_probability(f0, f1),
            LogitMethod::MaxLogit => f1,
            LogitMethod::Energy => log_sum_exp(f0, f1),
        }
    }

    /// Negated mean of the per-voxel value over `V+`.
    pub fn score(self, lv: &LogitVolume) -> Result<f64> {
        let voxels = lv.tumor_voxels()?;
        let sum: f64 = voxels.iter().map(|&i| self.voxel_value(lv.f0[i], lv.f1[i])).sum();
        Ok(-sum / voxels.len() as f64)
    }
}

pub fn maxsoftmax_score(lv: &LogitVolume) -> Result<f64> {
    LogitMethod::MaxSoftmax.score(lv)
}

pub fn maxlogit_score(lv: &LogitVolume) -> Result<f64> {
    LogitMethod::MaxLogit.score(lv)
}

pub fn energy_score(lv: &LogitVolume) -> Result<f64> {
    LogitMethod::Energy.score(lv)
}

/// Mean and population standard deviation of a voxel region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

impl RegionStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let count = values.clone().count();
        if count == 0 {
            return None;
        }
        let mean = values.clone().sum::<f64>() / count as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
        Some(Self {
            mean,
            sd: var.sqrt(),
            count,
        })
    }
}

/// Raw tumor-logit statistics over `V+` and its boundary band and interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInteriorStats {
    pub overall: RegionStats,
    pub boundary: RegionStats,
    /// `None` when `V+` is too thin to have an interior.
    pub interior: Option<RegionStats>,
}

impl BoundaryInteriorStats {
    pub fn interior_to_boundary_ratio(&self) -> Option<f64> {
        self.interior.map(|i| i.mean / self.boundary.mean)
    }
}

pub fn boundary_interior_stats(lv: &LogitVolume) -> Result<BoundaryInteriorStats> {
    let tumor = lv.predicted_mask();
    let split = boundary_interior_split(&tumor)?;
    let region = |m: &LabelMask| {
        let bits = m.bits();
        let t = tumor.bits();
        let f1 = &lv.f1;
        RegionStats::of((0..bits.len()).filter(move |&i| bits[i] && t[i]).map(move |i| f1[i]))
    };
    let overall = region(&tumor).expect("tumor mask is nonempty");
    // every tumor voxel is interior or boundary, and the interior is eroded
    // from the tumor, so a nonempty tumor always has boundary voxels
    let boundary = region(&split.boundary).expect("nonempty tumor has a boundary");
    Ok(BoundaryInteriorStats {
        overall,
        boundary,
        interior: region(&split.interior),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(f0: f64, f1: f64) -> LogitVolume {
        LogitVolume::new([1, 1, 1], vec![f0], vec![f1]).unwrap()
    }

    #[test]
    fn single_voxel_examples() {
        let lv = single(0.0, 2.0);
        let e2 = 2f64.exp();
        assert!((maxlogit_score(&lv).unwrap() + 2.0).abs() < 1e-12);
        assert!((maxsoftmax_score(&lv).unwrap() + e2 / (1.0 + e2)).abs() < 1e-12);
        assert!((energy_score(&lv).unwrap() + (1.0 + e2).ln()).abs() < 1e-12);
        assert!((maxsoftmax_score(&lv).unwrap() + 0.881).abs() < 1e-3);
        assert!((energy_score(&lv).unwrap() + 2.127).abs() < 1e-3);
    }

    #[test]
    fn tie_goes_to_tumor() {
        let lv = single(0.0, 0.0);
        assert_eq!(maxsoftmax_score(&lv).unwrap(), -0.5);
        assert!((energy_score(&lv).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mean_over_tumor_only() {
        let lv = LogitVolume::new([3, 1, 1], vec![0.0, 0.0, 5.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(maxlogit_score(&lv).unwrap(), -2.0);
    }

    #[test]
    fn empty_tumor_is_no_segmentation() {
        let lv = single(1.0, 0.0);
        assert!(matches!(maxlogit_score(&lv), Err(Error::NoSegmentation(_))));
        assert!(matches!(boundary_interior_stats(&lv), Err(Error::NoSegmentation(_))));
    }

    #[test]
    fn energy_is_stable() {
        let lv = single(1000.0, 1000.0);
        assert!((energy_score(&lv).unwrap() + 1000.0 + std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(tumor_probability(0.0, 800.0), 1.0);
        assert_eq!(tumor_probability(800.0, 0.0), 0.0);
    }

    #[test]
    fn threshold_shrinks_tumor() {
        let lv = LogitVolume::new([2, 1, 1], vec![0.0, 0.0], vec![0.1, 4.0]).unwrap();
        assert_eq!(lv.predicted_mask().count(), 2);
        let lv = lv.with_threshold(Some(0.9));
        assert_eq!(lv.predicted_mask().count(), 1);
        assert_eq!(maxlogit_score(&lv).unwrap(), -4.0);
    }

    #[test]
    fn constant_logit_stats() {
        let dims = [6, 6, 6];
        let n = 216;
        let f1: Vec<f64> = (0..n).map(|i| {
            let [x, y, z] = crate::grid3d::voxel_coords(dims, i);
            if (1..5).contains(&x) && (1..5).contains(&y) && (1..5).contains(&z) { 2.5 } else { -1.0 }
        }).collect();
        let lv = LogitVolume::new(dims, vec![0.0; n], f1).unwrap();
        let s = boundary_interior_stats(&lv).unwrap();
        assert_eq!(s.overall.count, 64);
        assert_eq!(s.interior.unwrap().count, 8);
        assert_eq!(s.boundary.count, 56);
        for r in [s.overall, s.boundary, s.interior.unwrap()] {
            assert_eq!(r.mean, 2.5);
            assert_eq!(r.sd, 0.0);
        }
    }
}
