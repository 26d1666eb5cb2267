use super::{feature_importance, fit, ForestParams};
use crate::error::{Error, Result};
use crate::features::Label;
use crate::matrix::SampleMatrix;

/// Fraction of the remaining features dropped per elimination round.
pub const DEFAULT_RFE_STEP: f64 = 0.1;

/// Recursive feature elimination driven by impurity importance.
///
/// Each round refits the forest on the surviving columns and drops the
/// `ceil(step_fraction * remaining)` least important ones (never going below
/// `target_k`). Equal importances drop the higher original index first.
/// Returns surviving column indices in ascending order.
pub fn rfe(x: &SampleMatrix, y: &[Label], params: &ForestParams, target_k: usize, step_fraction: f64) -> Result<Vec<usize>> {
    let d = x.cols();
    if target_k == 0 || target_k > d {
        return Err(Error::invalid(format!("target_k must lie in 1..={d}, got {target_k}")));
    }
    if !(step_fraction > 0.0 && step_fraction <= 1.0) {
        return Err(Error::invalid(format!("step_fraction must lie in (0, 1], got {step_fraction}")));
    }
    let mut remaining: Vec<usize> = (0..d).collect();
    while remaining.len() > target_k {
        let sub = x.select_columns(&remaining);
        let model = fit(&sub, y, params)?;
        let imp = feature_importance(&model)?;
        let n_drop = ((step_fraction * remaining.len() as f64).ceil() as usize)
            .max(1)
            .min(remaining.len() - target_k);
        let mut order: Vec<usize> = (0..remaining.len()).collect();
        order.sort_by(|&a, &b| imp[a].total_cmp(&imp[b]).then(remaining[b].cmp(&remaining[a])));
        let mut dropped: Vec<usize> = order[..n_drop].to_vec();
        dropped.sort_unstable();
        for pos in dropped.into_iter().rev() {
            remaining.remove(pos);
        }
    }
    Ok(remaining)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn data(d: usize, informative: usize) -> (SampleMatrix, Vec<Label>) {
        let mut rng = seed::rng(99);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..160 {
            let ood = i % 2 == 0;
            let mut row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if ood {
                row[informative] += 4.0;
            }
            rows.push(row);
            y.push(if ood { Label::Ood } else { Label::Id });
        }
        (SampleMatrix::from_rows(&rows).unwrap(), y)
    }

    fn params() -> ForestParams {
        ForestParams {
            n_trees: 40,
            rng_seed: 4,
            ..ForestParams::default()
        }
    }

    #[test]
    fn informative_feature_survives() {
        let (x, y) = data(10, 6);
        assert_eq!(rfe(&x, &y, &params(), 1, DEFAULT_RFE_STEP).unwrap(), vec![6]);
    }

    #[test]
    fn full_target_is_identity() {
        let (x, y) = data(10, 2);
        assert_eq!(rfe(&x, &y, &params(), 10, DEFAULT_RFE_STEP).unwrap(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn bad_targets() {
        let (x, y) = data(5, 0);
        assert!(rfe(&x, &y, &params(), 0, DEFAULT_RFE_STEP).is_err());
        assert!(rfe(&x, &y, &params(), 6, DEFAULT_RFE_STEP).is_err());
        assert!(rfe(&x, &y, &params(), 2, 0.0).is_err());
    }

    #[test]
    fn deterministic() {
        let (x, y) = data(12, 3);
        let a = rfe(&x, &y, &params(), 4, 0.25).unwrap();
        let b = rfe(&x, &y, &params(), 4, 0.25).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.contains(&3));
    }
}
