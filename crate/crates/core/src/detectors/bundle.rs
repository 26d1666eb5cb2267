//! Fitted detectors, table scoring and on-disk bundles.
//!
//! A bundle is a directory holding `manifest.json`, one `forest_<i>.json`
//! per forest and, for the Gaussian detector, `gaussian.json` plus
//! `gaussian.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gaussian::{md_score, GaussianOodModel};
use super::strategy::{StrategyConfig, StrategyModel};
use crate::error::{Error, Result};
use crate::eval::ScoreRecord;
use crate::features::{group_by_scan, ScanDescriptor};
use crate::forest::ForestModel;

pub const RF_DEEP: &str = "rf-deep";
pub const MD_DEEP: &str = "md-deep";

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    RfDeep(StrategyModel),
    MdDeep(GaussianOodModel),
}

impl Detector {
    pub fn method(&self) -> &'static str {
        match self {
            Detector::RfDeep(_) => RF_DEEP,
            Detector::MdDeep(_) => MD_DEEP,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Detector::RfDeep(m) => m.forests.values().next().map_or(0, |f| f.feature_dim),
            Detector::MdDeep(g) => g.dim(),
        }
    }

    fn score_scan(&self, target: &str, rois: &[&ScanDescriptor]) -> Result<f64> {
        match self {
            Detector::RfDeep(m) => m.score(target, rois),
            Detector::MdDeep(g) => md_score(g, rois),
        }
    }

    /// Scores every scan in `rows`.
    ///
    /// OOD scans are scored against their own dataset. Under the
    /// dataset-specific strategy each ID scan is scored once per OOD dataset
    /// the bundle has a forest for, and those records carry that dataset name.
    pub fn score_table(&self, rows: &[ScanDescriptor]) -> Result<Vec<ScoreRecord>> {
        let targets: Vec<&str> = match self {
            Detector::RfDeep(m) if m.per_target() => m.forests.keys().map(String::as_str).collect(),
            _ => Vec::new(),
        };
        let scans = group_by_scan(rows);
        let per_scan: Vec<Vec<ScoreRecord>> = scans
            .par_iter()
            .map(|(scan_id, rois)| {
                let first = rois[0];
                if rois.iter().any(|r| r.dataset != first.dataset || r.label != first.label) {
                    return Err(Error::invalid(format!("scan {scan_id} mixes datasets or labels")));
                }
                let record = |dataset: &str, score: f64| ScoreRecord {
                    scan_id: scan_id.to_string(),
                    dataset: dataset.to_string(),
                    label: first.label,
                    method: self.method().to_string(),
                    score,
                    group: None,
                };
                if first.label.is_ood() || targets.is_empty() {
                    Ok(vec![record(&first.dataset, self.score_scan(&first.dataset, rois)?)])
                } else {
                    targets
                        .iter()
                        .map(|t| Ok(record(t, self.score_scan(t, rois)?)))
                        .collect()
                }
            })
            .collect::<Result<_>>()?;
        Ok(per_scan.into_iter().flatten().collect())
    }
}

const BUNDLE_FORMAT: &str = "scanood-bundle";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    method: String,
    feature_dim: usize,
    #[serde(default)]
    strategy: Option<StrategyConfig>,
    /// Forest key to file name.
    #[serde(default)]
    forests: BTreeMap<String, String>,
    #[serde(default)]
    gaussian: Option<String>,
}

pub fn save_bundle(dir: &Path, detector: &Detector) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        format: BUNDLE_FORMAT.into(),
        version: 1,
        method: detector.method().into(),
        feature_dim: detector.feature_dim(),
        strategy: None,
        forests: BTreeMap::new(),
        gaussian: None,
    };
    match detector {
        Detector::RfDeep(m) => {
            manifest.strategy = Some(m.config.clone());
            for (i, (key, forest)) in m.forests.iter().enumerate() {
                let name = format!("forest_{i}.json");
                forest.save(&dir.join(&name))?;
                manifest.forests.insert(key.clone(), name);
            }
        }
        Detector::MdDeep(g) => {
            g.save(&dir.join("gaussian.json"))?;
            manifest.gaussian = Some("gaussian.json".into());
        }
    }
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<Detector> {
    let path = dir.join(MANIFEST);
    let manifest: Manifest =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.format != BUNDLE_FORMAT || manifest.version != 1 {
        return Err(Error::format(&path, "not a version 1 detector bundle"));
    }
    let detector = match manifest.method.as_str() {
        RF_DEEP => {
            let config = manifest
                .strategy
                .ok_or_else(|| Error::format(&path, "rf-deep bundle without strategy"))?;
            if manifest.forests.is_empty() {
                return Err(Error::format(&path, "rf-deep bundle without forests"));
            }
            let mut forests = BTreeMap::new();
            for (key, file) in manifest.forests {
                forests.insert(key, ForestModel::load(&dir.join(file))?);
            }
            Detector::RfDeep(StrategyModel { config, forests })
        }
        MD_DEEP => {
            let file = manifest
                .gaussian
                .ok_or_else(|| Error::format(&path, "md-deep bundle without gaussian model"))?;
            Detector::MdDeep(GaussianOodModel::load(&dir.join(file))?)
        }
        other => return Err(Error::format(&path, format!("unknown method {other:?}"))),
    };
    if detector.feature_dim() != manifest.feature_dim {
        return Err(Error::format(&path, "feature_dim does not match the stored models"));
    }
    Ok(detector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{md_fit, run_strategy, Cohorts, StrategyMode};
    use crate::features::{synth_generate, SynthConfig, BACKGROUND_DATASET};
    use crate::forest::ForestParams;

    fn data() -> Vec<ScanDescriptor> {
        let cfg = SynthConfig {
            dim: 10,
            n_id: 6,
            n_ood: 5,
            n_rois: 2,
            informative_fraction: 0.3,
            rng_seed: 9,
            ..SynthConfig::default()
        };
        let d = synth_generate(&cfg).unwrap();
        let mut rows = d.id;
        rows.extend(d.ood.into_iter().flat_map(|(_, r)| r));
        rows
    }

    #[test]
    fn dataset_specific_scores_id_per_target() {
        let rows = data();
        let cohorts = Cohorts::from_rows(rows.clone(), BACKGROUND_DATASET);
        let params = ForestParams {
            n_trees: 4,
            ..ForestParams::default()
        };
        let m = run_strategy(&StrategyConfig::new(StrategyMode::DatasetSpecific), &cohorts, &params).unwrap();
        let recs = Detector::RfDeep(m).score_table(&rows).unwrap();
        // 6 ID scans x 4 targets + 4 cohorts x 5 scans
        assert_eq!(recs.len(), 24 + 20);
        let u = run_strategy(&StrategyConfig::new(StrategyMode::Unified), &cohorts, &params).unwrap();
        assert_eq!(Detector::RfDeep(u).score_table(&rows).unwrap().len(), 6 + 20);
    }

    #[test]
    fn bundles_roundtrip() {
        let rows = data();
        let cohorts = Cohorts::from_rows(rows.clone(), BACKGROUND_DATASET);
        let params = ForestParams {
            n_trees: 3,
            ..ForestParams::default()
        };
        let rf = Detector::RfDeep(
            run_strategy(&StrategyConfig::held_out(StrategyMode::Lodo, "KiTS"), &cohorts, &params).unwrap(),
        );
        let md = Detector::MdDeep(md_fit(&cohorts.id).unwrap());
        for det in [rf, md] {
            let dir = tempfile::tempdir().unwrap();
            save_bundle(dir.path(), &det).unwrap();
            let back = load_bundle(dir.path()).unwrap();
            assert_eq!(back, det);
            assert_eq!(back.score_table(&rows).unwrap(), det.score_table(&rows).unwrap());
        }
    }

    #[test]
    fn missing_manifest_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_bundle(dir.path()).is_err());
    }
}
