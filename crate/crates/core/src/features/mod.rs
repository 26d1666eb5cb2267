//! Feature descriptors: pooling, stage selection, tables and synthetic cohorts.

mod descriptor;
mod pool;
mod synth;
mod table;

pub use descriptor::{group_by_scan, Label, ScanDescriptor};
pub use pool::{
    gap_pool, read_stage_map, stage_subset, write_stage_map, StageFeatureMap, StageMapHeader, StageSelection,
    FULL_DESCRIPTOR_LEN, STAGE_OFFSETS, STAGE_WIDTHS,
};
pub use synth::{
    default_cohorts, synth_generate, CohortSpec, SynthConfig, SynthData, BACKGROUND_DATASET, ID_DATASET,
};
pub use table::{feature_column, load_feature_table, save_feature_table, TableFormat};
