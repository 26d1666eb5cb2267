//! Training strategies over several OOD cohorts.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::rf_deep::{rf_deep_score, rf_deep_train};
use crate::error::{Error, Result};
use crate::features::ScanDescriptor;
use crate::forest::{ForestModel, ForestParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// One forest per OOD dataset, each scored against its own dataset.
    DatasetSpecific,
    /// The dataset-specific forests, averaged at test time.
    Ensemble,
    /// One forest on ID versus all OOD datasets pooled.
    Unified,
    /// One forest with the held-out dataset excluded from training.
    Lodo,
    /// LODO plus background (non-tumor) ROI descriptors as OOD rows.
    LodoPlus,
}

impl StrategyMode {
    pub const ALL: [StrategyMode; 5] = [
        StrategyMode::DatasetSpecific,
        StrategyMode::Ensemble,
        StrategyMode::Unified,
        StrategyMode::Lodo,
        StrategyMode::LodoPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyMode::DatasetSpecific => "ds",
            StrategyMode::Ensemble => "ensemble",
            StrategyMode::Unified => "unified",
            StrategyMode::Lodo => "lodo",
            StrategyMode::LodoPlus => "lodo_plus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dataset_specific" | "dataset-specific" => Some(StrategyMode::DatasetSpecific),
            "lodo+" | "lodo-plus" => Some(StrategyMode::LodoPlus),
            _ => Self::ALL.into_iter().find(|m| m.name() == s),
        }
    }

    pub fn is_lodo(self) -> bool {
        matches!(self, StrategyMode::Lodo | StrategyMode::LodoPlus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub mode: StrategyMode,
    pub held_out: Option<String>,
    /// Background rows added under LODO+; `None` uses all of them.
    pub background_roi_count: Option<usize>,
}

impl StrategyConfig {
    pub fn new(mode: StrategyMode) -> Self {
        Self {
            mode,
            held_out: None,
            background_roi_count: None,
        }
    }

    pub fn held_out(mode: StrategyMode, dataset: &str) -> Self {
        Self {
            mode,
            held_out: Some(dataset.into()),
            background_roi_count: None,
        }
    }
}

/// Labelled training descriptors grouped by dataset.
#[derive(Debug, Clone, Default)]
pub struct Cohorts {
    pub id: Vec<ScanDescriptor>,
    pub ood: BTreeMap<String, Vec<ScanDescriptor>>,
    pub background: Vec<ScanDescriptor>,
}

impl Cohorts {
    /// Splits rows by label and dataset; `background_dataset` rows go to
    /// `background` whatever their label.
    pub fn from_rows(rows: Vec<ScanDescriptor>, background_dataset: &str) -> Self {
        let mut c = Cohorts::default();
        for r in rows {
            if r.dataset == background_dataset {
                c.background.push(r);
            } else if r.label.is_ood() {
                c.ood.entry(r.dataset.clone()).or_default().push(r);
            } else {
                c.id.push(r);
            }
        }
        c
    }
}

fn check_cohorts(cfg: &StrategyConfig, cohorts: &Cohorts) -> Result<()> {
    if cohorts.id.is_empty() {
        return Err(Error::invalid("ID cohort is empty"));
    }
    if cohorts.ood.is_empty() {
        return Err(Error::invalid("no OOD cohorts"));
    }
    if let Some((name, _)) = cohorts.ood.iter().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::invalid(format!("OOD cohort {name} is empty")));
    }
    if cfg.mode.is_lodo() {
        let held = cfg
            .held_out
            .as_deref()
            .ok_or_else(|| Error::invalid("LODO strategies need a held-out dataset"))?;
        if !cohorts.ood.contains_key(held) {
            return Err(Error::invalid(format!("held-out dataset {held} is not among the OOD cohorts")));
        }
        if cohorts.ood.len() < 2 {
            return Err(Error::invalid("LODO strategies need at least two OOD cohorts"));
        }
        if cfg.mode == StrategyMode::LodoPlus && cohorts.background.is_empty() {
            return Err(Error::invalid("LODO+ needs background ROI descriptors"));
        }
    }
    Ok(())
}

/// OOD-side training rows of one forest of the strategy, keyed as in
/// [`StrategyModel::forests`].
pub fn training_ood_rows<'a>(
    cfg: &StrategyConfig,
    cohorts: &'a Cohorts,
    rng_seed: u64,
) -> Result<BTreeMap<String, Vec<&'a ScanDescriptor>>> {
    check_cohorts(cfg, cohorts)?;
    let mut out = BTreeMap::new();
    match cfg.mode {
        StrategyMode::DatasetSpecific | StrategyMode::Ensemble => {
            for (name, rows) in &cohorts.ood {
                out.insert(name.clone(), rows.iter().collect());
            }
        }
        StrategyMode::Unified => {
            out.insert(UNIFIED_KEY.to_string(), cohorts.ood.values().flatten().collect());
        }
        StrategyMode::Lodo | StrategyMode::LodoPlus => {
            let held = cfg.held_out.as_deref().expect("checked");
            let mut rows: Vec<&ScanDescriptor> = cohorts
                .ood
                .iter()
                .filter(|(name, _)| name.as_str() != held)
                .flat_map(|(_, rows)| rows)
                .collect();
            if cfg.mode == StrategyMode::LodoPlus {
                let bg = &cohorts.background;
                let k = cfg.background_roi_count.unwrap_or(bg.len()).min(bg.len());
                let mut rng = seed::rng(seed::derive_named(rng_seed, "background"));
                let mut picked = sample(&mut rng, bg.len(), k).into_vec();
                picked.sort_unstable();
                rows.extend(picked.into_iter().map(|i| &bg[i]));
            }
            out.insert(held.to_string(), rows);
        }
    }
    Ok(out)
}

const UNIFIED_KEY: &str = "unified";

/// Forests trained under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyModel {
    pub config: StrategyConfig,
    /// Dataset-specific and ensemble: one per OOD dataset. Unified: a single
    /// `unified` entry. LODO modes: a single entry keyed by the held-out dataset.
    pub forests: BTreeMap<String, ForestModel>,
}

pub fn run_strategy(cfg: &StrategyConfig, cohorts: &Cohorts, params: &ForestParams) -> Result<StrategyModel> {
    let sets = training_ood_rows(cfg, cohorts, params.rng_seed)?;
    let id: Vec<&ScanDescriptor> = cohorts.id.iter().collect();
    let mut forests = BTreeMap::new();
    for (key, ood) in sets {
        let p = ForestParams {
            rng_seed: seed::derive_named(params.rng_seed, &format!("{}:{key}", cfg.mode.name())),
            ..params.clone()
        };
        forests.insert(key, rf_deep_train(&id, &ood, &p)?);
    }
    Ok(StrategyModel {
        config: cfg.clone(),
        forests,
    })
}

impl StrategyModel {
    /// Scan score when evaluating against OOD dataset `target`.
    pub fn score(&self, target: &str, scan_rois: &[&ScanDescriptor]) -> Result<f64> {
        match self.config.mode {
            StrategyMode::DatasetSpecific => {
                let f = self
                    .forests
                    .get(target)
                    .ok_or_else(|| Error::invalid(format!("no dataset-specific forest for {target}")))?;
                rf_deep_score(f, scan_rois)
            }
            StrategyMode::Ensemble => {
                let mut sum = 0.0;
                for f in self.forests.values() {
                    sum += rf_deep_score(f, scan_rois)?;
                }
                Ok(sum / self.forests.len() as f64)
            }
            _ => {
                let f = self.forests.values().next().expect("strategy has a forest");
                rf_deep_score(f, scan_rois)
            }
        }
    }

    /// Whether ID scans need a separate score per target dataset.
    pub fn per_target(&self) -> bool {
        self.config.mode == StrategyMode::DatasetSpecific
    }
}
