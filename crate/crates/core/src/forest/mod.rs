//! Random forest classifier for the two-class ID/OOD problem.
//!
//! Trees are CART with Gini impurity, grown on bootstrap resamples with a
//! random subset of features examined at every node. Class weighting follows
//! the usual "balanced" rule `n / (2 * n_class)`, computed once on the full
//! training set. Every tree draws from its own random stream derived from the
//! master seed and the tree index, so the fitted model does not depend on the
//! number of worker threads.

mod importance;
mod rfe;
mod tree;

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Label;
use crate::matrix::SampleMatrix;
use crate::seed;

pub use importance::{feature_importance, permutation_importance, PERMUTATION_REPEATS};
pub use rfe::{rfe, DEFAULT_RFE_STEP};
pub use tree::{Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `ceil(sqrt(d))`.
    Sqrt,
    All,
    Fixed(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::Sqrt => (d as f64).sqrt().ceil() as usize,
            FeaturesPerSplit::All => d,
            FeaturesPerSplit::Fixed(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub class_weight: ClassWeight,
    pub features_per_split: FeaturesPerSplit,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl Default for ForestParams {
    /// 1000 trees of depth at most 20 with balanced class weights.
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: Some(20),
            class_weight: ClassWeight::Balanced,
            features_per_split: FeaturesPerSplit::Sqrt,
            min_samples_leaf: 1,
            bootstrap: true,
            rng_seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be >= 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::invalid("max_depth must be >= 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        if self.features_per_split == FeaturesPerSplit::Fixed(0) {
            return Err(Error::invalid("features_per_split must be >= 1"));
        }
        Ok(())
    }
}

/// Per-class sample weights `[id, ood]`.
pub fn class_weights(labels: &[Label], mode: ClassWeight) -> [f64; 2] {
    match mode {
        ClassWeight::Uniform => [1.0, 1.0],
        ClassWeight::Balanced => {
            let n = labels.len() as f64;
            let n1 = labels.iter().filter(|l| l.is_ood()).count() as f64;
            let n0 = n - n1;
            [n / (2.0 * n0), n / (2.0 * n1)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub feature_dim: usize,
    /// Weights applied to ID and OOD samples during training.
    pub class_weights: [f64; 2],
    pub trees: Vec<Tree>,
}

fn check_training_data(x: &SampleMatrix, y: &[Label]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::invalid("need at least two training samples"));
    }
    if x.cols() == 0 {
        return Err(Error::invalid("training samples have no features"));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("training matrix".into()));
    }
    let n1 = y.iter().filter(|l| l.is_ood()).count();
    if n1 == 0 || n1 == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Fits a forest. Trees are grown in parallel on the current rayon pool.
pub fn fit(x: &SampleMatrix, y: &[Label], params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    check_training_data(x, y)?;
    let cw = class_weights(y, params.class_weight);
    let labels: Vec<u8> = y.iter().map(|l| l.as_u8()).collect();
    let k = params.features_per_split.resolve(x.cols());
    let n = x.rows();
    let tree_stream = seed::derive_named(params.rng_seed, "forest");

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(tree_stream, t as u64));
            let mut weights: Vec<f64> = labels.iter().map(|&l| cw[l as usize]).collect();
            if params.bootstrap {
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                for (w, c) in weights.iter_mut().zip(&counts) {
                    *w *= f64::from(*c);
                }
            }
            tree::grow_tree(x, &labels, &weights, params, k, rng)
        })
        .collect();

    Ok(ForestModel {
        params: params.clone(),
        feature_dim: x.cols(),
        class_weights: cw,
        trees,
    })
}

impl ForestModel {
    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query vector".into()));
        }
        Ok(())
    }

    /// Mean over trees of the OOD fraction of the reached leaf.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_proba_batch(&self, x: &SampleMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.cols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("query matrix".into()));
        }
        Ok((0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(x.row(i)))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = ForestFile {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            model: self.clone(),
        };
        fs::write(path, serde_json::to_string(&doc)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let doc: ForestFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if doc.format != FOREST_FORMAT || doc.version != FOREST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported forest file {} v{}", doc.format, doc.version),
            ));
        }
        doc.model.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(doc.model)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::invalid("forest has no trees"));
        }
        for t in &self.trees {
            for node in &t.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        if *feature >= self.feature_dim
                            || !threshold.is_finite()
                            || *left >= t.nodes.len()
                            || *right >= t.nodes.len()
                        {
                            return Err(Error::invalid("malformed split node"));
                        }
                    }
                    TreeNode::Leaf { mass } => {
                        if mass.iter().any(|m| *m < 0.0 || !m.is_finite()) || mass[0] + mass[1] <= 0.0 {
                            return Err(Error::invalid("malformed leaf node"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

const FOREST_FORMAT: &str = "scanood-forest";
const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: ForestModel,
}
