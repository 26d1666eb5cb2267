use serde::{Deserialize, Serialize};

use super::volume::{voxel_count, Dims, LabelMask, VolumeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Source sample position along one axis for each output voxel: a lower
/// index, an upper index and the fractional weight of the upper one.
#[derive(Debug, Clone, Copy)]
struct AxisSample {
    lo: usize,
    hi: usize,
    t: f64,
}

fn output_extent(n: usize, spacing: f64, target: f64) -> usize {
    ((n as f64 * spacing / target).round() as usize).max(1)
}

/// Voxel centers are aligned in physical space: source voxel `i` sits at
/// `(i + 0.5) * spacing`. Positions outside the source are clamped to the edge.
fn axis_samples(n_in: usize, spacing: f64, target: f64, n_out: usize) -> Vec<AxisSample> {
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|j| {
            let pos = ((j as f64 + 0.5) * target / spacing - 0.5).clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            AxisSample {
                lo,
                hi,
                t: pos - lo as f64,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

fn check_target(target: [f64; 3]) -> Result<()> {
    if target.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::invalid(format!(
            "target spacing must be finite and > 0, got {target:?}"
        )));
    }
    Ok(())
}

/// Resamples `volume` onto a grid with the given voxel spacing.
pub fn resample(volume: &VolumeGrid, target_spacing_mm: [f64; 3], mode: Interpolation) -> Result<VolumeGrid> {
    check_target(target_spacing_mm)?;
    let spacing = volume.spacing_mm();
    if spacing == target_spacing_mm {
        return Ok(volume.clone());
    }
    let dims = volume.dims();
    let out: Dims = [0, 1, 2].map(|a| output_extent(dims[a], spacing[a], target_spacing_mm[a]));
    let axes: Vec<Vec<AxisSample>> = (0..3)
        .map(|a| axis_samples(dims[a], spacing[a], target_spacing_mm[a], out[a]))
        .collect();

    let mut values = Vec::with_capacity(voxel_count(out));
    for sk in &axes[2] {
        for sj in &axes[1] {
            for si in &axes[0] {
                let v = match mode {
                    Interpolation::Nearest => {
                        let pick = |s: &AxisSample| if s.t >= 0.5 { s.hi } else { s.lo };
                        volume.get(pick(si), pick(sj), pick(sk)) as f64
                    }
                    Interpolation::Trilinear => {
                        let g = |i, j, k| volume.get(i, j, k) as f64;
                        let plane = |k| {
                            let r0 = lerp(g(si.lo, sj.lo, k), g(si.hi, sj.lo, k), si.t);
                            let r1 = lerp(g(si.lo, sj.hi, k), g(si.hi, sj.hi, k), si.t);
                            lerp(r0, r1, sj.t)
                        };
                        lerp(plane(sk.lo), plane(sk.hi), sk.t)
                    }
                };
                values.push(v as f32);
            }
        }
    }
    VolumeGrid::new(out, target_spacing_mm, values)
}

/// Nearest-neighbour resampling of a mask given its current spacing.
pub fn resample_mask(mask: &LabelMask, spacing_mm: [f64; 3], target_spacing_mm: [f64; 3]) -> Result<LabelMask> {
    let as_volume = VolumeGrid::new(
        mask.dims(),
        spacing_mm,
        mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    let out = resample(&as_volume, target_spacing_mm, Interpolation::Nearest)?;
    LabelMask::new(out.dims(), out.values().iter().map(|&v| v > 0.5).collect())
}
