//! Synthetic descriptor cohorts for desk-scale experiments.
//!
//! In-distribution ROIs are drawn from a zero-mean unit-variance diagonal
//! Gaussian. Each OOD cohort shifts the mean by `shift` (with a random sign)
//! on its own random subset of dimensions. ROIs of one scan share a scan-level
//! latent; `roi_jitter` is the fraction of per-dimension variance that varies
//! between ROIs of the same scan.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::descriptor::{Label, ScanDescriptor};
use super::pool::FULL_DESCRIPTOR_LEN;
use crate::error::{Error, Result};
use crate::seed;

pub const ID_DATASET: &str = "ID";
pub const BACKGROUND_DATASET: &str = "background";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub name: String,
    /// Mean offset on informative dimensions, in ID standard deviations.
    pub shift: f64,
}

impl CohortSpec {
    pub fn new(name: &str, shift: f64) -> Self {
        Self {
            name: name.into(),
            shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    /// ID scans.
    pub n_id: usize,
    /// Scans per OOD cohort.
    pub n_ood: usize,
    pub n_rois: usize,
    pub cohorts: Vec<CohortSpec>,
    /// Per-dimension standard deviation of OOD cohorts (ID is 1).
    pub overlap: f64,
    pub informative_fraction: f64,
    pub roi_jitter: f64,
    /// Background ROIs generated per ID scan.
    pub n_background: usize,
    /// Standard deviation of background descriptors.
    pub background_scale: f64,
    pub rng_seed: u64,
    /// Sample stream label. Splits share cohort structure but not samples.
    pub split: String,
}

/// Two near cohorts (small shift) and two far cohorts (large shift).
pub fn default_cohorts() -> Vec<CohortSpec> {
    vec![
        CohortSpec::new("RSNA-PE", 0.6),
        CohortSpec::new("MIDRC-C19", 0.6),
        CohortSpec::new("KiTS", 3.0),
        CohortSpec::new("PancreasCT", 3.0),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dim: FULL_DESCRIPTOR_LEN,
            n_id: 100,
            n_ood: 100,
            n_rois: 4,
            cohorts: default_cohorts(),
            overlap: 1.0,
            informative_fraction: 0.02,
            roi_jitter: 0.5,
            n_background: 0,
            background_scale: 2.0,
            rng_seed: 0,
            split: "all".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_rois == 0 {
            return Err(Error::invalid("synthetic dim and n_rois must be >= 1"));
        }
        if !(self.informative_fraction > 0.0 && self.informative_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "informative_fraction must lie in (0, 1], got {}",
                self.informative_fraction
            )));
        }
        if self.cohorts.iter().any(|c| !c.shift.is_finite() || c.shift < 0.0) {
            return Err(Error::invalid("cohort shifts must be finite and >= 0"));
        }
        if !(self.overlap > 0.0 && self.background_scale > 0.0) {
            return Err(Error::invalid("overlap and background_scale must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.roi_jitter) {
            return Err(Error::invalid("roi_jitter must lie in [0, 1]"));
        }
        let mut names: Vec<&str> = self.cohorts.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.cohorts.len() || names.contains(&ID_DATASET) || names.contains(&BACKGROUND_DATASET) {
            return Err(Error::invalid("cohort names must be unique and not reserved"));
        }
        Ok(())
    }

    pub fn informative_count(&self) -> usize {
        ((self.informative_fraction * self.dim as f64).round() as usize).clamp(1, self.dim)
    }

    /// Mean vector of a cohort: `±shift` on its informative dimensions.
    pub fn cohort_mean(&self, cohort: &CohortSpec) -> Vec<f64> {
        let mut rng = seed::rng(seed::derive_named(self.rng_seed, &format!("cohort:{}", cohort.name)));
        let mut mean = vec![0.0; self.dim];
        let mut dims = sample(&mut rng, self.dim, self.informative_count()).into_vec();
        dims.sort_unstable();
        for d in dims {
            mean[d] = if rng.random_bool(0.5) { cohort.shift } else { -cohort.shift };
        }
        mean
    }

    /// Informative dimensions of a cohort, ascending. Empty when the shift is zero.
    pub fn informative_dims(&self, cohort: &CohortSpec) -> Vec<usize> {
        self.cohort_mean(cohort)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (m != 0.0).then_some(i))
            .collect()
    }
}

/// Output of [`synth_generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub id: Vec<ScanDescriptor>,
    /// One entry per configured cohort, in configuration order.
    pub ood: Vec<(String, Vec<ScanDescriptor>)>,
    pub background: Vec<ScanDescriptor>,
}

impl SynthData {
    pub fn cohort(&self, name: &str) -> Option<&[ScanDescriptor]> {
        self.ood.iter().find(|(n, _)| n == name).map(|(_, rows)| rows.as_slice())
    }
}

struct CohortSampler<'a> {
    cfg: &'a SynthConfig,
    dataset: &'a str,
    label: Label,
    mean: Vec<f64>,
    sd: f64,
}

impl CohortSampler<'_> {
    fn scans(&self, n_scans: usize) -> Vec<ScanDescriptor> {
        let cfg = self.cfg;
        let stream = seed::derive_named(cfg.rng_seed, &format!("samples:{}:{}", cfg.split, self.dataset));
        let between = self.sd * (1.0 - cfg.roi_jitter).sqrt();
        let within = self.sd * cfg.roi_jitter.sqrt();
        let mut rows = Vec::with_capacity(n_scans * cfg.n_rois);
        for s in 0..n_scans {
            let mut rng = seed::rng(seed::derive(stream, s as u64));
            let latent: Vec<f64> = self
                .mean
                .iter()
                .map(|&m| m + between * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for r in 0..cfg.n_rois {
                let vector = latent
                    .iter()
                    .map(|&z| (z + within * rng.sample::<f64, _>(StandardNormal)) as f32)
                    .collect();
                rows.push(ScanDescriptor {
                    scan_id: format!("{}-{}-{s:04}", self.dataset, cfg.split),
                    roi_index: r as u32,
                    dataset: self.dataset.to_string(),
                    label: self.label,
                    vector,
                });
            }
        }
        rows
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let id = CohortSampler {
        cfg,
        dataset: ID_DATASET,
        label: Label::Id,
        mean: vec![0.0; cfg.dim],
        sd: 1.0,
    }
    .scans(cfg.n_id);

    let ood = cfg
        .cohorts
        .iter()
        .map(|c| {
            let rows = CohortSampler {
                cfg,
                dataset: &c.name,
                label: Label::Ood,
                mean: cfg.cohort_mean(c),
                sd: cfg.overlap,
            }
            .scans(cfg.n_ood);
            (c.name.clone(), rows)
        })
        .collect();

    let stream = seed::derive_named(cfg.rng_seed, &format!("samples:{}:{BACKGROUND_DATASET}", cfg.split));
    let mut background = Vec::with_capacity(cfg.n_id * cfg.n_background);
    for s in 0..cfg.n_id {
        let mut rng = seed::rng(seed::derive(stream, s as u64));
        for r in 0..cfg.n_background {
            background.push(ScanDescriptor {
                scan_id: format!("{ID_DATASET}-{}-{s:04}-bg", cfg.split),
                roi_index: r as u32,
                dataset: BACKGROUND_DATASET.into(),
                label: Label::Ood,
                vector: (0..cfg.dim)
                    .map(|_| (cfg.background_scale * rng.sample::<f64, _>(StandardNormal)) as f32)
                    .collect(),
            });
        }
    }
    Ok(SynthData { id, ood, background })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            dim: 20,
            n_id: 50,
            n_ood: 40,
            n_rois: 3,
            informative_fraction: 0.25,
            rng_seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shapes_and_tags() {
        let cfg = SynthConfig {
            n_background: 2,
            ..small()
        };
        let d = synth_generate(&cfg).unwrap();
        assert_eq!(d.id.len(), 150);
        assert_eq!(d.ood.len(), 4);
        assert_eq!(d.background.len(), 100);
        for (name, rows) in &d.ood {
            assert_eq!(rows.len(), 120);
            assert!(rows.iter().all(|r| &r.dataset == name && r.label == Label::Ood && r.vector.len() == 20));
        }
        assert!(d.id.iter().all(|r| r.label == Label::Id && r.dataset == ID_DATASET));
        assert!(d.background.iter().all(|r| r.label == Label::Ood && r.dataset == BACKGROUND_DATASET));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        assert_eq!(synth_generate(&small()).unwrap(), synth_generate(&small()).unwrap());
        let other = SynthConfig {
            rng_seed: 43,
            ..small()
        };
        assert_ne!(synth_generate(&small()).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn splits_share_structure_not_samples() {
        let train = SynthConfig {
            split: "train".into(),
            ..small()
        };
        let test = SynthConfig {
            split: "test".into(),
            ..small()
        };
        let c = &train.cohorts[0];
        assert_eq!(train.cohort_mean(c), test.cohort_mean(c));
        assert_ne!(synth_generate(&train).unwrap().id, synth_generate(&test).unwrap().id);
    }

    #[test]
    fn informative_dims_carry_the_shift() {
        let cfg = small();
        for c in &cfg.cohorts {
            let mean = cfg.cohort_mean(c);
            let dims = cfg.informative_dims(c);
            assert_eq!(dims.len(), 5);
            for (i, m) in mean.iter().enumerate() {
                assert_eq!(m.abs(), if dims.contains(&i) { c.shift } else { 0.0 });
            }
        }
    }

    #[test]
    fn sample_means_converge() {
        let cfg = SynthConfig {
            n_id: 2000,
            n_ood: 2000,
            n_rois: 1,
            ..small()
        };
        let d = synth_generate(&cfg).unwrap();
        let n = 2000.0f64;
        let check = |rows: &[ScanDescriptor], mean: &[f64], sd: f64| {
            for dim in 0..cfg.dim {
                let m = rows.iter().map(|r| f64::from(r.vector[dim])).sum::<f64>() / n;
                assert!((m - mean[dim]).abs() <= 4.0 * sd / n.sqrt(), "dim {dim}: {m} vs {}", mean[dim]);
            }
        };
        check(&d.id, &vec![0.0; cfg.dim], 1.0);
        for c in &cfg.cohorts {
            check(d.cohort(&c.name).unwrap(), &cfg.cohort_mean(c), cfg.overlap);
        }
    }

    #[test]
    fn zero_shift_matches_id_distribution() {
        let cfg = SynthConfig {
            cohorts: vec![CohortSpec::new("null", 0.0)],
            ..small()
        };
        assert!(cfg.cohort_mean(&cfg.cohorts[0]).iter().all(|&m| m == 0.0));
        assert!(cfg.informative_dims(&cfg.cohorts[0]).is_empty());
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut SynthConfig)| {
            let mut c = small();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.informative_fraction = 0.0));
        assert!(bad(|c| c.informative_fraction = 1.5));
        assert!(bad(|c| c.cohorts[0].shift = -1.0));
        assert!(bad(|c| c.cohorts[1].name = c.cohorts[0].name.clone()));
        assert!(bad(|c| c.cohorts[0].name = "ID".into()));
        assert!(bad(|c| c.dim = 0));
    }
}
