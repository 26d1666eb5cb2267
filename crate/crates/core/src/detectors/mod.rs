//! OOD detectors: RF-Deep, MD-Deep and the segmentation-logit scores.
//!
//! All scores are oriented so that higher means more likely OOD.

mod bundle;
mod gaussian;
mod logit;
mod rf_deep;
mod strategy;

pub use bundle::{load_bundle, save_bundle, Detector, MD_DEEP, RF_DEEP};
pub use gaussian::{ledoit_wolf, md_fit, md_score, GaussianOodModel, Shrinkage};
pub use logit::{
    boundary_interior_stats, energy_score, log_sum_exp, maxlogit_score, maxsoftmax_score, tumor_probability,
    BoundaryInteriorStats, LogitMethod, LogitVolume, RegionStats,
};
pub use rf_deep::{rf_deep_score, rf_deep_train};
pub use strategy::{run_strategy, training_ood_rows, Cohorts, StrategyConfig, StrategyMode, StrategyModel};
