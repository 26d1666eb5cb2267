//! Tumor-anchored and background crop geometry.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid3d::{connected_components, voxel_coords, BoxRegion, Connectivity, Dims, LabelMask, VolumeGrid};
use crate::seed;

/// Background crops are redrawn while more than this fraction of their voxels is tumor.
pub const MAX_BACKGROUND_TUMOR_FRACTION: f64 = 0.10;
pub const MAX_BACKGROUND_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiKind {
    TumorAnchored,
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    #[serde(flatten)]
    pub region: BoxRegion,
    /// Index into the size-ordered component list; `None` for background crops.
    pub anchor_component: Option<usize>,
    pub kind: RoiKind,
    /// Index of the random draw that produced this crop.
    pub seed_draw: u64,
    /// Fraction of tumor voxels inside a background crop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tumor_fraction: Option<f64>,
    /// Background crop accepted after exhausting redraws above the overlap limit.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub overlap_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub n_rois: usize,
    pub crop_size_vox: usize,
    pub rng_seed: u64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            n_rois: 4,
            crop_size_vox: 128,
            rng_seed: 0,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rois == 0 {
            return Err(Error::invalid("n_rois must be >= 1"));
        }
        if self.crop_size_vox < 8 {
            return Err(Error::invalid(format!(
                "crop size must be >= 8 voxels, got {}",
                self.crop_size_vox
            )));
        }
        Ok(())
    }
}

fn crop_extent(cfg: &RoiConfig, dims: Dims) -> [usize; 3] {
    dims.map(|d| cfg.crop_size_vox.min(d))
}

/// Places `n_rois` crops so that each contains a predicted tumor.
///
/// Components (26-connected) are assigned round-robin, largest first. Along
/// each axis where the component's bounding box fits in the crop, the corner
/// is uniform over all positions that keep the box inside both the crop and
/// the grid. Along axes where it does not fit the crop is centred on the box.
/// Grids smaller than the crop shrink the crop to the grid on that axis.
pub fn anchor_rois(mask: &LabelMask, grid_dims: Dims, cfg: &RoiConfig) -> Result<Vec<RoiSpec>> {
    cfg.validate()?;
    if mask.dims() != grid_dims {
        return Err(Error::invalid(format!(
            "mask dims {:?} differ from grid dims {grid_dims:?}",
            mask.dims()
        )));
    }
    let comps = connected_components(mask, Connectivity::TwentySix, [1.0; 3]);
    if comps.is_empty() {
        return Err(Error::NoSegmentation("mask has no foreground voxels".into()));
    }
    let size = crop_extent(cfg, grid_dims);
    let stream = seed::derive_named(cfg.rng_seed, "anchor_rois");

    let rois = (0..cfg.n_rois)
        .map(|draw| {
            let anchor = draw % comps.len();
            let bbox = comps[anchor].bbox;
            let mut rng = seed::rng(seed::derive(stream, draw as u64));
            let mut corner = [0usize; 3];
            for a in 0..3 {
                let max_corner = grid_dims[a] - size[a];
                corner[a] = if bbox.size[a] <= size[a] {
                    let lo = (bbox.corner[a] + bbox.size[a]).saturating_sub(size[a]);
                    let hi = bbox.corner[a].min(max_corner);
                    rng.random_range(lo..=hi)
                } else {
                    let centre = bbox.corner[a] as f64 + bbox.size[a] as f64 / 2.0;
                    ((centre - size[a] as f64 / 2.0).round().max(0.0) as usize).min(max_corner)
                };
            }
            RoiSpec {
                region: BoxRegion { corner, size },
                anchor_component: Some(anchor),
                kind: RoiKind::TumorAnchored,
                seed_draw: draw as u64,
                tumor_fraction: None,
                overlap_violation: false,
            }
        })
        .collect();
    Ok(rois)
}

/// Draws `n` crops away from the tumor, for anatomical diversity.
///
/// Corners are uniform over all in-grid positions. A draw with more than
/// [`MAX_BACKGROUND_TUMOR_FRACTION`] tumor voxels is redrawn, up to
/// [`MAX_BACKGROUND_ATTEMPTS`] times, after which the least-overlapping draw is
/// kept and flagged.
pub fn sample_background_rois(mask: &LabelMask, grid_dims: Dims, n: usize, cfg: &RoiConfig) -> Result<Vec<RoiSpec>> {
    cfg.validate()?;
    if mask.dims() != grid_dims {
        return Err(Error::invalid(format!(
            "mask dims {:?} differ from grid dims {grid_dims:?}",
            mask.dims()
        )));
    }
    if grid_dims.iter().any(|&d| d < cfg.crop_size_vox) {
        return Err(Error::invalid(format!(
            "grid {grid_dims:?} is smaller than the {} voxel crop",
            cfg.crop_size_vox
        )));
    }
    let size = [cfg.crop_size_vox; 3];
    let volume = (size[0] * size[1] * size[2]) as f64;
    let tumor: Vec<[usize; 3]> = mask
        .foreground()
        .into_iter()
        .map(|i| voxel_coords(grid_dims, i))
        .collect();
    let stream = seed::derive_named(cfg.rng_seed, "background_rois");

    let rois = (0..n)
        .map(|draw| {
            let mut rng = seed::rng(seed::derive(stream, draw as u64));
            let mut best: Option<(BoxRegion, f64)> = None;
            for _ in 0..MAX_BACKGROUND_ATTEMPTS {
                let corner = [0, 1, 2].map(|a| rng.random_range(0..=grid_dims[a] - size[a]));
                let region = BoxRegion { corner, size };
                let inside = tumor.iter().filter(|p| region.contains_voxel(**p)).count();
                let fraction = inside as f64 / volume;
                if best.is_none_or(|(_, f)| fraction < f) {
                    best = Some((region, fraction));
                }
                if fraction <= MAX_BACKGROUND_TUMOR_FRACTION {
                    break;
                }
            }
            let (region, fraction) = best.expect("at least one attempt");
            RoiSpec {
                region,
                anchor_component: None,
                kind: RoiKind::Background,
                seed_draw: draw as u64,
                tumor_fraction: Some(fraction),
                overlap_violation: fraction > MAX_BACKGROUND_TUMOR_FRACTION,
            }
        })
        .collect();
    Ok(rois)
}

/// Extracts `region` from `volume`; voxels beyond the grid take `pad_value`.
pub fn crop(volume: &VolumeGrid, region: &BoxRegion, pad_value: f32) -> Result<VolumeGrid> {
    let dims = volume.dims();
    VolumeGrid::from_fn(region.size, volume.spacing_mm(), |i, j, k| {
        let p = [region.corner[0] + i, region.corner[1] + j, region.corner[2] + k];
        if (0..3).all(|a| p[a] < dims[a]) {
            volume.get(p[0], p[1], p[2])
        } else {
            pad_value
        }
    })
}

/// One line of an ROI manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiRecord {
    pub scan_id: String,
    #[serde(flatten)]
    pub roi: RoiSpec,
}

pub fn write_manifest(path: &Path, records: &[RoiRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<RoiRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, crop: usize, seed: u64) -> RoiConfig {
        RoiConfig {
            n_rois: n,
            crop_size_vox: crop,
            rng_seed: seed,
        }
    }

    #[test]
    fn centred_tumor_rois_contain_bbox() {
        let dims = [256, 256, 256];
        let mask = LabelMask::from_box(dims, [118, 118, 118], [20, 20, 20]).unwrap();
        let bbox = BoxRegion::new([118, 118, 118], [20, 20, 20]).unwrap();
        let rois = anchor_rois(&mask, dims, &cfg(4, 128, 11)).unwrap();
        assert_eq!(rois.len(), 4);
        for r in &rois {
            assert!(r.region.contains_box(&bbox));
            assert!(r.region.fits_in(dims));
            assert_eq!(r.kind, RoiKind::TumorAnchored);
        }
        for a in 0..4 {
            for b in a + 1..4 {
                assert_ne!(rois[a].region, rois[b].region);
            }
        }
    }

    #[test]
    fn oversized_tumor_is_centred() {
        let dims = [256, 256, 256];
        let mask = LabelMask::from_box(dims, [50, 60, 70], [150, 150, 150]).unwrap();
        let rois = anchor_rois(&mask, dims, &cfg(4, 128, 3)).unwrap();
        for r in &rois {
            // centres 125, 135, 145 minus 64
            assert_eq!(r.region.corner, [61, 71, 81]);
        }
    }

    #[test]
    fn oversized_tumor_near_border_is_clamped() {
        let dims = [160, 160, 160];
        let mask = LabelMask::from_box(dims, [10, 10, 10], [150, 150, 150]).unwrap();
        let rois = anchor_rois(&mask, dims, &cfg(2, 128, 3)).unwrap();
        for r in &rois {
            assert_eq!(r.region.corner, [21, 21, 21]);
            assert!(r.region.fits_in(dims));
        }
        let edge = LabelMask::from_box(dims, [0, 0, 0], [150, 150, 150]).unwrap();
        let rois = anchor_rois(&edge, dims, &cfg(1, 128, 3)).unwrap();
        assert_eq!(rois[0].region.corner, [11, 11, 11]);
    }

    #[test]
    fn round_robin_over_components() {
        let dims = [64, 64, 64];
        let mut mask = LabelMask::from_box(dims, [2, 2, 2], [6, 6, 6]).unwrap();
        for (i, j, k) in [(40, 40, 40), (41, 40, 40)] {
            mask.set(i, j, k, true);
        }
        let rois = anchor_rois(&mask, dims, &cfg(4, 16, 9)).unwrap();
        let anchors: Vec<_> = rois.iter().map(|r| r.anchor_component.unwrap()).collect();
        assert_eq!(anchors, vec![0, 1, 0, 1]);
        let big = BoxRegion::new([2, 2, 2], [6, 6, 6]).unwrap();
        assert!(rois[0].region.contains_box(&big));
    }

    #[test]
    fn empty_mask_has_no_segmentation() {
        let mask = LabelMask::empty([32, 32, 32]).unwrap();
        let err = anchor_rois(&mask, [32, 32, 32], &cfg(4, 16, 0)).unwrap_err();
        assert!(matches!(err, Error::NoSegmentation(_)));
    }

    #[test]
    fn small_grid_shrinks_crop() {
        let dims = [20, 40, 40];
        let mask = LabelMask::from_box(dims, [5, 5, 5], [3, 3, 3]).unwrap();
        let rois = anchor_rois(&mask, dims, &cfg(3, 32, 1)).unwrap();
        for r in rois {
            assert_eq!(r.region.size, [20, 32, 32]);
            assert!(r.region.fits_in(dims));
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, 128, 0).validate().is_err());
        assert!(cfg(1, 7, 0).validate().is_err());
        assert!(cfg(1, 8, 0).validate().is_ok());
    }

    #[test]
    fn background_on_empty_mask_accepts_first_draw() {
        let dims = [32, 32, 32];
        let mask = LabelMask::empty(dims).unwrap();
        let rois = sample_background_rois(&mask, dims, 3, &cfg(4, 16, 5)).unwrap();
        assert_eq!(rois.len(), 3);
        for r in &rois {
            assert_eq!(r.kind, RoiKind::Background);
            assert_eq!(r.tumor_fraction, Some(0.0));
            assert!(!r.overlap_violation);
            assert!(r.region.fits_in(dims));
        }
    }

    #[test]
    fn background_on_full_mask_is_flagged() {
        let dims = [16, 16, 16];
        let mask = LabelMask::from_box(dims, [0, 0, 0], dims).unwrap();
        let rois = sample_background_rois(&mask, dims, 2, &cfg(4, 8, 5)).unwrap();
        assert!(rois.iter().all(|r| r.overlap_violation && r.tumor_fraction == Some(1.0)));
    }

    #[test]
    fn background_rejects_small_grid() {
        let dims = [16, 16, 7];
        let mask = LabelMask::empty(dims).unwrap();
        assert!(sample_background_rois(&mask, dims, 1, &cfg(4, 8, 5)).is_err());
    }

    #[test]
    fn crop_inside_and_padded() {
        let v = VolumeGrid::from_fn([4, 4, 4], [1.0; 3], |i, j, k| (i + 10 * j + 100 * k) as f32).unwrap();
        let inside = crop(&v, &BoxRegion::new([1, 1, 1], [2, 2, 2]).unwrap(), -1.0).unwrap();
        assert_eq!(inside.values(), &[111.0, 112.0, 121.0, 122.0, 211.0, 212.0, 221.0, 222.0]);
        let past = crop(&v, &BoxRegion::new([3, 0, 0], [2, 4, 4]).unwrap(), 0.0).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(past.get(1, j, k), 0.0);
                assert_eq!(past.get(0, j, k), v.get(3, j, k));
            }
        }
        let c = VolumeGrid::filled([5, 5, 5], [1.0; 3], 2.5).unwrap();
        let out = crop(&c, &BoxRegion::new([1, 0, 2], [3, 5, 2]).unwrap(), 2.5).unwrap();
        assert!(out.values().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn manifest_roundtrip() {
        let dims = [32, 32, 32];
        let mask = LabelMask::from_box(dims, [10, 10, 10], [4, 4, 4]).unwrap();
        let mut records: Vec<RoiRecord> = anchor_rois(&mask, dims, &cfg(2, 16, 4))
            .unwrap()
            .into_iter()
            .map(|roi| RoiRecord {
                scan_id: "scan-1".into(),
                roi,
            })
            .collect();
        records.extend(
            sample_background_rois(&mask, dims, 1, &cfg(2, 16, 4))
                .unwrap()
                .into_iter()
                .map(|roi| RoiRecord {
                    scan_id: "scan-1".into(),
                    roi,
                }),
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rois.jsonl");
        write_manifest(&p, &records).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), records);
        let first = std::fs::read_to_string(&p).unwrap();
        let line: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        for key in ["scan_id", "kind", "corner", "size", "anchor_component", "seed_draw"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }
}
