use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{ForestModel, TreeNode};
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::features::Label;
use crate::matrix::SampleMatrix;
use crate::seed;

/// Shuffles per feature in [`permutation_importance`].
pub const PERMUTATION_REPEATS: usize = 5;

/// Mean decrease in weighted Gini impurity per feature, summing to 1.
///
/// Each tree's decreases are normalised before averaging so that every tree
/// contributes equally. A forest made only of leaves yields all zeros.
pub fn feature_importance(model: &ForestModel) -> Result<Vec<f64>> {
    if model.trees.is_empty() {
        return Err(Error::invalid("forest has no trees"));
    }
    let mut total = vec![0.0; model.feature_dim];
    for tree in &model.trees {
        let mut per_tree = vec![0.0; model.feature_dim];
        for node in &tree.nodes {
            if let TreeNode::Split { feature, decrease, .. } = node {
                per_tree[*feature] += decrease;
            }
        }
        let sum: f64 = per_tree.iter().sum();
        if sum > 0.0 {
            for (t, p) in total.iter_mut().zip(&per_tree) {
                *t += p / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|t| *t /= sum);
    }
    Ok(total)
}

/// Drop in AUROC when one feature column is shuffled, averaged over
/// [`PERMUTATION_REPEATS`] shuffles.
pub fn permutation_importance(model: &ForestModel, x: &SampleMatrix, y: &[Label], rng_seed: u64) -> Result<Vec<f64>> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    let split = |scores: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut id = Vec::new();
        let mut ood = Vec::new();
        for (s, l) in scores.iter().zip(y) {
            if l.is_ood() { ood.push(*s) } else { id.push(*s) }
        }
        (id, ood)
    };
    let (id, ood) = split(&model.predict_proba_batch(x)?);
    let baseline = auroc(&id, &ood)?;
    let stream = seed::derive_named(rng_seed, "permutation_importance");

    (0..x.cols())
        .into_par_iter()
        .map(|j| {
            let mut drop = 0.0;
            let mut shuffled = x.clone();
            let mut column = x.column(j);
            for r in 0..PERMUTATION_REPEATS {
                let mut rng = seed::rng(seed::derive(seed::derive(stream, j as u64), r as u64));
                column.shuffle(&mut rng);
                for (i, v) in column.iter().enumerate() {
                    shuffled.set(i, j, *v);
                }
                let scores: Vec<f64> = (0..x.rows()).map(|i| model.predict_unchecked(shuffled.row(i))).collect();
                let (id, ood) = split(&scores);
                drop += baseline - auroc(&id, &ood)?;
            }
            Ok(drop / PERMUTATION_REPEATS as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit, ForestParams, Tree};
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    /// Feature 0 carries the label; the rest is noise; feature 3 is constant.
    fn single_informative(n: usize, seed_: u64) -> (SampleMatrix, Vec<Label>) {
        let mut rng = seed::rng(seed_);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let ood = i % 2 == 1;
            let mut row: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            row[0] += if ood { 3.0 } else { 0.0 };
            row[3] = 1.0;
            rows.push(row);
            y.push(if ood { Label::Ood } else { Label::Id });
        }
        (SampleMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn impurity_importance_finds_the_signal() {
        let (x, y) = single_informative(200, 1);
        let params = ForestParams {
            n_trees: 50,
            rng_seed: 2,
            ..ForestParams::default()
        };
        let m = fit(&x, &y, &params).unwrap();
        let imp = feature_importance(&m).unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(imp.iter().all(|&v| v >= 0.0));
        for j in 1..6 {
            assert!(imp[0] > imp[j], "{imp:?}");
        }
        assert_eq!(imp[3], 0.0);
    }

    #[test]
    fn permutation_of_constant_feature_is_noop() {
        let (x, y) = single_informative(200, 5);
        let params = ForestParams {
            n_trees: 30,
            rng_seed: 6,
            ..ForestParams::default()
        };
        let m = fit(&x, &y, &params).unwrap();
        let (xt, yt) = single_informative(200, 7);
        let imp = permutation_importance(&m, &xt, &yt, 8).unwrap();
        assert!(imp[3].abs() <= 0.02);
        assert!(imp[0] > 0.2, "{imp:?}");
    }

    #[test]
    fn leaf_only_forest_has_zero_importance() {
        let m = ForestModel {
            params: ForestParams::default(),
            feature_dim: 3,
            class_weights: [1.0, 1.0],
            trees: vec![Tree {
                nodes: vec![TreeNode::Leaf { mass: [1.0, 1.0] }],
            }],
        };
        assert_eq!(feature_importance(&m).unwrap(), vec![0.0; 3]);
        let empty = ForestModel { trees: vec![], ..m };
        assert!(feature_importance(&empty).is_err());
    }
}
