use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ForestParams;
use crate::matrix::SampleMatrix;
use crate::seed::Rng;

/// Gains within this relative distance count as ties.
const GAIN_TIE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted Gini decrease achieved by this split.
        decrease: f64,
    },
    /// Weighted class mass `[id, ood]` of the training samples in the leaf.
    Leaf { mass: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_mass(&self, x: &[f64]) -> [f64; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { mass } => return *mass,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Fraction of leaf mass belonging to the OOD class.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let m = self.leaf_mass(x);
        m[1] / (m[0] + m[1])
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Sum of squared class masses over total mass; the Gini "purity" term.
#[inline]
fn purity(m0: f64, m1: f64) -> f64 {
    let w = m0 + m1;
    if w > 0.0 {
        (m0 * m0 + m1 * m1) / w
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// `W * gini(parent) - W_l * gini(left) - W_r * gini(right)`.
    pub decrease: f64,
}

/// Best threshold on one feature for the given node samples.
///
/// `scratch` is filled with `(value, sample)` pairs. Thresholds are midpoints
/// between consecutive distinct values; the lowest threshold wins ties.
pub(crate) fn best_threshold(
    x: &SampleMatrix,
    labels: &[u8],
    weights: &[f64],
    samples: &[usize],
    feature: usize,
    min_samples_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<SplitChoice> {
    scratch.clear();
    scratch.extend(samples.iter().map(|&s| (x.get(s, feature), s)));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut total = [0.0f64; 2];
    for &(_, s) in scratch.iter() {
        total[labels[s] as usize] += weights[s];
    }
    let w = total[0] + total[1];
    let parent = purity(total[0], total[1]);
    let n = scratch.len();

    let mut left = [0.0f64; 2];
    let mut best: Option<SplitChoice> = None;
    for i in 0..n.saturating_sub(1) {
        let (v, s) = scratch[i];
        left[labels[s] as usize] += weights[s];
        let next = scratch[i + 1].0;
        if v == next || i + 1 < min_samples_leaf || n - i - 1 < min_samples_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let decrease = purity(left[0], left[1]) + purity(right[0], right[1]) - parent;
        if best.is_none_or(|b| decrease > b.decrease + GAIN_TIE_EPS * w) {
            let mut threshold = v / 2.0 + next / 2.0;
            if threshold >= next || !threshold.is_finite() {
                threshold = v;
            }
            best = Some(SplitChoice {
                feature,
                threshold,
                decrease: decrease.max(0.0),
            });
        }
    }
    best
}

struct Builder<'a> {
    x: &'a SampleMatrix,
    labels: &'a [u8],
    weights: &'a [f64],
    params: &'a ForestParams,
    features_per_split: usize,
    rng: Rng,
    nodes: Vec<TreeNode>,
    feature_order: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn leaf(&self, samples: &[usize]) -> TreeNode {
        let mut mass = [0.0; 2];
        for &s in samples {
            mass[self.labels[s] as usize] += self.weights[s];
        }
        TreeNode::Leaf { mass }
    }

    fn is_constant(&self, samples: &[usize], feature: usize) -> bool {
        let first = self.x.get(samples[0], feature);
        samples.iter().all(|&s| self.x.get(s, feature) == first)
    }

    fn choose_split(&mut self, samples: &[usize]) -> Option<SplitChoice> {
        let d = self.x.cols();
        let mut best: Option<SplitChoice> = None;
        let mut w = 0.0;
        for &s in samples {
            w += self.weights[s];
        }
        let mut visited = 0;
        // Features are drawn without replacement; constant ones do not count
        // towards the per-node budget.
        for t in 0..d {
            if visited == self.features_per_split {
                break;
            }
            let j = self.rng.random_range(t..d);
            self.feature_order.swap(t, j);
            let feature = self.feature_order[t];
            if self.is_constant(samples, feature) {
                continue;
            }
            visited += 1;
            let Some(cand) = best_threshold(
                self.x,
                self.labels,
                self.weights,
                samples,
                feature,
                self.params.min_samples_leaf,
                &mut self.scratch,
            ) else {
                continue;
            };
            let replace = match best {
                None => true,
                Some(b) => {
                    cand.decrease > b.decrease + GAIN_TIE_EPS * w
                        || (cand.decrease >= b.decrease - GAIN_TIE_EPS * w && cand.feature < b.feature)
                }
            };
            if replace {
                best = Some(cand);
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let leaf = self.leaf(&samples);
        self.nodes.push(leaf);
        let TreeNode::Leaf { mass } = self.nodes[at] else { unreachable!() };

        let pure = mass[0] == 0.0 || mass[1] == 0.0;
        let depth_reached = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_reached || samples.len() < 2 * self.params.min_samples_leaf.max(1) {
            return at;
        }
        let Some(split) = self.choose_split(&samples) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x.get(s, split.feature) <= split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
            decrease: split.decrease,
        };
        at
    }
}

/// Grows one tree on the samples with nonzero weight.
pub(crate) fn grow_tree(
    x: &SampleMatrix,
    labels: &[u8],
    weights: &[f64],
    params: &ForestParams,
    features_per_split: usize,
    rng: Rng,
) -> Tree {
    let samples: Vec<usize> = (0..x.rows()).filter(|&i| weights[i] > 0.0).collect();
    let mut b = Builder {
        x,
        labels,
        weights,
        params,
        features_per_split,
        rng,
        nodes: Vec::new(),
        feature_order: (0..x.cols()).collect(),
        scratch: Vec::with_capacity(samples.len()),
    };
    b.grow(samples, 0);
    Tree { nodes: b.nodes }
}
