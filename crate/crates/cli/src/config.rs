//! Optional TOML run configuration. Command-line flags take precedence.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [synth]         # any SynthConfig field
//! n_id = 50
//!
//! [forest]        # any ForestParams field
//! n_trees = 200
//!
//! [eval]          # any EvalProtocol field
//! n_runs = 100
//!
//! [roi]           # any RoiConfig field
//! crop_size_vox = 96
//! ```

use std::fs;
use std::path::Path;

use scanood::eval::EvalProtocol;
use scanood::features::SynthConfig;
use scanood::forest::ForestParams;
use scanood::roi::RoiConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub synth: SynthConfig,
    pub forest: ForestParams,
    pub eval: EvalProtocol,
    pub roi: RoiConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
