use crate::error::{Error, Result};

fn check_scores(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(Error::invalid("metrics need at least one ID and one OOD score"));
    }
    if id.iter().chain(ood).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    Ok(())
}

/// Area under the ROC curve with OOD as the positive class.
///
/// Equals the fraction of (ID, OOD) pairs where the OOD score is higher,
/// counting ties as one half. Computed from rank sums in integer arithmetic
/// (doubled mid-ranks), so the result is bit-identical to the pairwise count.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start;
        while end + 1 < all.len() && all[end + 1].0 == all[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end+1 share the mid-rank (start + end + 2) / 2
        let n_ood = all[start..=end].iter().filter(|(_, o)| *o).count() as u128;
        doubled_rank_sum += (start + end + 2) as u128 * n_ood;
        start = end + 1;
    }
    let n_ood = ood_scores.len() as u128;
    let n_id = id_scores.len() as u128;
    let doubled_u = doubled_rank_sum - n_ood * (n_ood + 1);
    Ok(doubled_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Threshold, achieved TPR and FPR at a sensitivity target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprAtTpr {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Smallest count `k` of `n` with `k / n >= target`, evaluated in `f64`.
fn required_hits(target: f64, n: usize) -> usize {
    let nf = n as f64;
    let mut k = ((target * nf).floor() as usize).min(n);
    while k > 0 && (k - 1) as f64 / nf >= target {
        k -= 1;
    }
    while k < n && (k as f64 / nf) < target {
        k += 1;
    }
    k.max(1)
}

/// False positive rate at the largest threshold that flags at least
/// `tpr_target` of the OOD scores (a score `>= threshold` is flagged).
pub fn fpr_at_tpr_detail(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<FprAtTpr> {
    check_scores(id_scores, ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::invalid(format!("TPR target must lie in (0, 1], got {tpr_target}")));
    }
    let mut ood: Vec<f64> = ood_scores.to_vec();
    ood.sort_by(|a, b| b.total_cmp(a));
    let k = required_hits(tpr_target, ood.len());
    let threshold = ood[k - 1];
    let hits = ood.iter().filter(|&&s| s >= threshold).count();
    let false_pos = id_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(FprAtTpr {
        threshold,
        tpr: hits as f64 / ood.len() as f64,
        fpr: false_pos as f64 / id_scores.len() as f64,
    })
}

pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    fpr_at_tpr_detail(id_scores, ood_scores, tpr_target).map(|r| r.fpr)
}

/// FPR at 95% TPR.
pub fn fpr95(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    fpr_at_tpr(id_scores, ood_scores, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.3, 0.9]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3, 0.9], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(auroc(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.4], &[0.3, 0.5, 0.6]).unwrap(), 8.0 / 9.0);
        assert_eq!(auroc(&[5.0], &[5.0]).unwrap(), 0.5);
    }

    #[test]
    fn auroc_errors() {
        assert!(auroc(&[], &[1.0]).is_err());
        assert!(auroc(&[1.0], &[]).is_err());
        assert!(auroc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr95(&[0.0, 0.1], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let ood: Vec<f64> = (1..=20).map(f64::from).collect();
        let id = [0.5, 2.5, 3.5, 10.5];
        let r = fpr_at_tpr_detail(&id, &ood, 0.95).unwrap();
        assert_eq!(r.threshold, 2.0);
        assert_eq!(r.tpr, 0.95);
        // 2.5, 3.5 and 10.5 are all >= 2
        assert_eq!(r.fpr, 0.75);
        let same: Vec<f64> = (0..40).map(|i| f64::from(i % 13)).collect();
        let r = fpr_at_tpr_detail(&same, &same, 0.95).unwrap();
        assert_eq!(r.fpr, r.tpr);
        assert!(r.fpr >= 0.95);
    }

    #[test]
    fn required_hits_is_exact() {
        assert_eq!(required_hits(0.95, 20), 19);
        assert_eq!(required_hits(0.95, 100), 95);
        assert_eq!(required_hits(0.95, 1), 1);
        assert_eq!(required_hits(0.95, 21), 20);
        assert_eq!(required_hits(1.0, 7), 7);
        assert_eq!(required_hits(0.01, 7), 1);
    }

    #[test]
    fn fpr_target_validation() {
        assert!(fpr_at_tpr(&[1.0], &[2.0], 0.0).is_err());
        assert!(fpr_at_tpr(&[1.0], &[2.0], 1.5).is_err());
    }
}
