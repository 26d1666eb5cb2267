//! Rank tests and confidence intervals.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid3d::nearest_rank;
use crate::seed;

/// Result of a two-sided rank test under the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    /// `U` of the first sample (Mann-Whitney) or `min(W+, W-)` (Wilcoxon).
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
    /// `z / sqrt(N)`.
    pub effect_r: f64,
}

/// Signed-rank sums behind a Wilcoxon test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRankSums {
    pub w_plus: f64,
    pub w_minus: f64,
    /// Nonzero differences that entered the test.
    pub n: usize,
}

/// Mid-ranks (1-based) of `values` plus the tie correction `sum(t^3 - t)`.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 2) as f64 / 2.0;
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        let t = (end - start + 1) as f64;
        ties += t * t * t - t;
        start = end + 1;
    }
    (ranks, ties)
}

/// Continuity-corrected z for a statistic with the given null mean and variance.
fn corrected_z(stat: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 0.0;
    }
    let diff = stat - mean;
    let corrected = if diff.abs() <= 0.5 { 0.0 } else { diff - 0.5 * diff.signum() };
    corrected / var.sqrt()
}

fn two_sided_p(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * normal.sf(z.abs())).min(1.0)
}

/// Mann-Whitney U test of `a` against `b`.
///
/// `U` counts pairs where `a` exceeds `b` (ties count one half), so a negative
/// `z` means `a` tends to be smaller.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<RankTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Mann-Whitney U needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney sample".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let n = na + nb;
    let var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let z = corrected_z(u, na * nb / 2.0, var);
    Ok(RankTest {
        statistic: u,
        z,
        p_value: two_sided_p(z),
        effect_r: z / n.sqrt(),
    })
}

/// Signed-rank sums of paired differences, with zero differences dropped.
pub fn signed_rank_sums(diffs: &[f64]) -> Result<SignedRankSums> {
    if diffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired differences".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::invalid("all paired differences are zero"));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, _) = mid_ranks(&abs);
    let (mut w_plus, mut w_minus) = (0.0, 0.0);
    for (d, r) in nonzero.iter().zip(&ranks) {
        if *d > 0.0 {
            w_plus += r;
        } else {
            w_minus += r;
        }
    }
    Ok(SignedRankSums {
        w_plus,
        w_minus,
        n: nonzero.len(),
    })
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
///
/// `z` is computed from `W+`, so it is negative when differences are mostly negative.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<RankTest> {
    let sums = signed_rank_sums(diffs)?;
    let abs: Vec<f64> = diffs.iter().filter(|&&d| d != 0.0).map(|d| d.abs()).collect();
    let (_, ties) = mid_ranks(&abs);
    let n = sums.n as f64;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let z = corrected_z(sums.w_plus, n * (n + 1.0) / 4.0, var);
    Ok(RankTest {
        statistic: sums.w_plus.min(sums.w_minus),
        z,
        p_value: two_sided_p(z),
        effect_r: z / n.sqrt(),
    })
}

/// How run values are turned into an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Nearest-rank percentiles of the per-run values.
    #[default]
    Percentile,
    /// Nearest-rank percentiles of means of resampled run values.
    BootstrapMean,
}

/// Resamples used by [`CiMethod::BootstrapMean`].
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean of the run values with a nearest-rank percentile interval.
pub fn bootstrap_ci(runs: &[f64], ci_level: f64) -> Result<Estimate> {
    check_runs(runs, ci_level)?;
    let point = runs.iter().sum::<f64>() / runs.len() as f64;
    let mut sorted = runs.to_vec();
    let tail = (1.0 - ci_level) / 2.0;
    Ok(Estimate {
        point,
        lo: nearest_rank(&mut sorted, tail),
        hi: nearest_rank(&mut sorted, 1.0 - tail),
    })
}

/// Interval from resampling the run values with replacement.
pub fn bootstrap_ci_resampled(runs: &[f64], ci_level: f64, rng_seed: u64) -> Result<Estimate> {
    check_runs(runs, ci_level)?;
    let n = runs.len();
    let point = runs.iter().sum::<f64>() / n as f64;
    let mut rng = seed::rng(seed::derive_named(rng_seed, "bootstrap_ci"));
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| runs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let tail = (1.0 - ci_level) / 2.0;
    Ok(Estimate {
        point,
        lo: nearest_rank(&mut means, tail),
        hi: nearest_rank(&mut means, 1.0 - tail),
    })
}

fn check_runs(runs: &[f64], ci_level: f64) -> Result<()> {
    if runs.len() < 2 {
        return Err(Error::invalid(format!(
            "confidence intervals need at least 2 runs, got {}",
            runs.len()
        )));
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::invalid(format!("ci level must lie in (0, 1), got {ci_level}")));
    }
    if runs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("run values".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mwu_examples() {
        let t = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!(t.z < 0.0);
        let same = [1.0, 2.0, 2.0, 5.0];
        let t = mann_whitney_u(&same, &same).unwrap();
        assert_eq!(t.statistic, 8.0);
        assert_eq!(t.z, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn mwu_matches_reference_values() {
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic"): U = 6, p = 0.065552
        let a = [1.1, 2.3, 0.7, 3.1, 1.9, 2.2];
        let b = [3.5, 4.1, 2.9, 5.0, 3.3, 1.0];
        let t = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(t.statistic, 6.0);
        assert!((t.p_value - 0.065_552_161_165_502_57).abs() < 1e-9);
        let z = (6.0 - 18.0 + 0.5) / (36.0f64 * 13.0 / 12.0).sqrt();
        assert!((t.z - z).abs() < 1e-12);
        assert!((t.effect_r - z / 12.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_matches_reference_values() {
        // scipy.stats.wilcoxon(d, correction=True, method="approx"): W = 4, p = 0.058707
        let d = [-1.5, 2.0, -3.0, -4.0, -5.0, 0.5, -6.0, -7.0];
        let t = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(t.statistic, 4.0);
        assert!((t.p_value - 0.058_707_408_431_205).abs() < 1e-9);
        assert!(t.z < 0.0);
    }

    #[test]
    fn wilcoxon_examples() {
        let t = wilcoxon_signed_rank(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!(t.z > 0.0);
        let s = signed_rank_sums(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.w_plus, s.w_minus), (6.0, 0.0));
        let s = signed_rank_sums(&[0.0, -1.0, 2.0, -2.0]).unwrap();
        assert_eq!(s.n, 3);
        assert_eq!((s.w_plus, s.w_minus), (2.5, 3.5));
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn wilcoxon_strong_negative_shift() {
        let diffs: Vec<f64> = (1..=30).map(|i| -(i as f64)).collect();
        let t = wilcoxon_signed_rank(&diffs).unwrap();
        assert!(t.p_value < 1e-5);
        assert!(t.effect_r < -0.8);
    }

    #[test]
    fn ci_examples() {
        let e = bootstrap_ci(&[0.7; 5], 0.95).unwrap();
        assert_eq!((e.point, e.lo, e.hi), (0.7, 0.7, 0.7));
        let runs: Vec<f64> = (1..=100).map(f64::from).collect();
        let e = bootstrap_ci(&runs, 0.95).unwrap();
        assert_eq!((e.point, e.lo, e.hi), (50.5, 3.0, 98.0));
        let e = bootstrap_ci(&[0.0, 1.0], 0.95).unwrap();
        assert_eq!((e.point, e.lo, e.hi), (0.5, 0.0, 1.0));
        assert!(bootstrap_ci(&[1.0], 0.95).is_err());
    }

    #[test]
    fn resampled_ci_brackets_mean() {
        let runs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let e = bootstrap_ci_resampled(&runs, 0.95, 3).unwrap();
        assert!(e.lo <= e.point && e.point <= e.hi);
        assert_eq!(e, bootstrap_ci_resampled(&runs, 0.95, 3).unwrap());
    }
}
