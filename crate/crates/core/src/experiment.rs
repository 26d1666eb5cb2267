//! End-to-end runs on synthetic cohorts: generate, train, score, evaluate.

use serde::{Deserialize, Serialize};

use crate::detectors::{md_fit, run_strategy, Cohorts, Detector, StrategyConfig, StrategyMode};
use crate::error::Result;
use crate::eval::{auroc, evaluate, fpr_at_tpr, EvalProtocol, EvalReport, ScoreRecord};
use crate::features::{synth_generate, ScanDescriptor, SynthConfig, BACKGROUND_DATASET};
use crate::forest::ForestParams;
use crate::seed;

pub const TRAIN_SPLIT: &str = "train";
pub const TEST_SPLIT: &str = "test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub forest: ForestParams,
    pub protocol: EvalProtocol,
}

impl ExperimentConfig {
    /// Same configuration with every seed derived from `master`.
    pub fn with_seed(&self, master: u64) -> Self {
        let mut c = self.clone();
        c.synth.rng_seed = seed::derive_named(master, "synth");
        c.forest.rng_seed = seed::derive_named(master, "forest");
        c.protocol.master_seed = seed::derive_named(master, "eval");
        c
    }
}

/// All rows of one split: ID, OOD cohorts, then background.
pub fn split_rows(synth: &SynthConfig, split: &str) -> Result<Vec<ScanDescriptor>> {
    let cfg = SynthConfig {
        split: split.into(),
        ..synth.clone()
    };
    let d = synth_generate(&cfg)?;
    let mut rows = d.id;
    rows.extend(d.ood.into_iter().flat_map(|(_, r)| r));
    rows.extend(d.background);
    Ok(rows)
}

fn test_rows(synth: &SynthConfig) -> Result<Vec<ScanDescriptor>> {
    let cfg = SynthConfig {
        n_background: 0,
        ..synth.clone()
    };
    split_rows(&cfg, TEST_SPLIT)
}

/// RF-Deep (dataset-specific) and MD-Deep fitted on the training split,
/// scored on the test split.
pub fn pipeline_scores(cfg: &ExperimentConfig) -> Result<Vec<ScoreRecord>> {
    let cohorts = Cohorts::from_rows(split_rows(&cfg.synth, TRAIN_SPLIT)?, BACKGROUND_DATASET);
    let rf = Detector::RfDeep(run_strategy(
        &StrategyConfig::new(StrategyMode::DatasetSpecific),
        &cohorts,
        &cfg.forest,
    )?);
    let md = Detector::MdDeep(md_fit(&cohorts.id)?);
    let test = test_rows(&cfg.synth)?;
    let mut records = rf.score_table(&test)?;
    records.extend(md.score_table(&test)?);
    Ok(records)
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<EvalReport> {
    evaluate(&pipeline_scores(cfg)?, &cfg.protocol)
}

/// Held-out test metrics of one strategy for one target cohort, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub mode: StrategyMode,
    pub target: String,
    pub auroc: f64,
    pub fpr95: f64,
}

/// Trains every strategy on the training split and measures AUROC and FPR95
/// of each OOD cohort against the ID test scans. LODO modes hold out the
/// cohort being measured.
pub fn strategy_comparison(synth: &SynthConfig, forest: &ForestParams) -> Result<Vec<StrategyOutcome>> {
    let cohorts = Cohorts::from_rows(split_rows(synth, TRAIN_SPLIT)?, BACKGROUND_DATASET);
    let test = test_rows(synth)?;
    let targets: Vec<String> = cohorts.ood.keys().cloned().collect();

    let mut outcomes = Vec::new();
    let mut measure = |mode: StrategyMode, target: &str, det: &Detector| -> Result<()> {
        let recs = det.score_table(&test)?;
        let per_target = matches!(det, Detector::RfDeep(m) if m.per_target());
        let mut id = Vec::new();
        let mut ood = Vec::new();
        for r in &recs {
            if r.label.is_ood() {
                if r.dataset == target {
                    ood.push(r.score);
                }
            } else if !per_target || r.dataset == target {
                id.push(r.score);
            }
        }
        outcomes.push(StrategyOutcome {
            mode,
            target: target.to_string(),
            auroc: auroc(&id, &ood)?,
            fpr95: fpr_at_tpr(&id, &ood, 0.95)?,
        });
        Ok(())
    };

    for mode in [StrategyMode::DatasetSpecific, StrategyMode::Ensemble, StrategyMode::Unified] {
        let det = Detector::RfDeep(run_strategy(&StrategyConfig::new(mode), &cohorts, forest)?);
        for t in &targets {
            measure(mode, t, &det)?;
        }
    }
    for mode in [StrategyMode::Lodo, StrategyMode::LodoPlus] {
        for t in &targets {
            let det = Detector::RfDeep(run_strategy(&StrategyConfig::held_out(mode, t), &cohorts, forest)?);
            measure(mode, t, &det)?;
        }
    }
    Ok(outcomes)
}

/// Mean of `f` over the outcomes of one mode.
pub fn mode_mean(outcomes: &[StrategyOutcome], mode: StrategyMode, f: impl Fn(&StrategyOutcome) -> f64) -> f64 {
    let picked: Vec<f64> = outcomes.iter().filter(|o| o.mode == mode).map(f).collect();
    picked.iter().sum::<f64>() / picked.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            synth: SynthConfig {
                dim: 16,
                n_id: 12,
                n_ood: 10,
                n_rois: 2,
                n_background: 1,
                informative_fraction: 0.25,
                ..SynthConfig::default()
            },
            forest: ForestParams {
                n_trees: 5,
                ..ForestParams::default()
            },
            protocol: EvalProtocol {
                n_runs: 4,
                ..EvalProtocol::default()
            },
        }
        .with_seed(11)
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = tiny();
        let a = run_pipeline(&cfg).unwrap();
        assert_eq!(a, run_pipeline(&cfg).unwrap());
        // 2 methods x 4 cohorts
        assert_eq!(a.entries.len(), 8);
    }

    #[test]
    fn comparison_covers_every_mode_and_target() {
        let cfg = tiny();
        let out = strategy_comparison(&cfg.synth, &cfg.forest).unwrap();
        assert_eq!(out.len(), 5 * 4);
        for o in &out {
            assert!((0.0..=1.0).contains(&o.auroc) && (0.0..=1.0).contains(&o.fpr95));
        }
    }
}
