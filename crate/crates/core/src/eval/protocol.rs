use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auroc, fpr_at_tpr};
use super::report::{EvalReport, PairedComparison, ReportEntry, REPORT_VERSION};
use super::scores::ScoreRecord;
use super::stats::{bootstrap_ci, bootstrap_ci_resampled, wilcoxon_signed_rank, CiMethod, Estimate};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    /// OOD scores drawn per resample. `None` matches the number of ID scores.
    pub n_id: Option<usize>,
    pub n_draws: usize,
    pub n_runs: usize,
    pub ci_level: f64,
    pub ci_method: CiMethod,
    pub tpr_target: f64,
    pub master_seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            n_id: None,
            n_draws: 10,
            n_runs: 100,
            ci_level: 0.95,
            ci_method: CiMethod::Percentile,
            tpr_target: 0.95,
            master_seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 2 {
            return Err(Error::invalid(format!(
                "confidence intervals need n_runs >= 2, got {}",
                self.n_runs
            )));
        }
        if self.n_draws == 0 || self.n_id == Some(0) {
            return Err(Error::invalid("n_draws and n_id must be >= 1"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::invalid("ci_level must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Seed of run `run`, shared by every method and dataset.
    pub fn run_seed(&self, run: usize) -> u64 {
        seed::derive(seed::derive_named(self.master_seed, "eval_runs"), run as u64)
    }
}

/// AUROC and FPR at the TPR target, as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub auroc: f64,
    pub fpr: f64,
}

/// Scores of one OOD pool, optionally tagged with a group (patient) per score.
#[derive(Debug, Clone, Copy)]
pub struct OodPool<'a> {
    pub scores: &'a [f64],
    pub groups: Option<&'a [String]>,
}

impl<'a> OodPool<'a> {
    pub fn new(scores: &'a [f64]) -> Self {
        Self { scores, groups: None }
    }

    fn draw(&self, size: usize, rng: &mut seed::Rng) -> Vec<f64> {
        let n = self.scores.len();
        match self.groups {
            None => (0..size).map(|_| self.scores[rng.random_range(0..n)]).collect(),
            Some(groups) => {
                let mut members: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for (g, s) in groups.iter().zip(self.scores) {
                    members.entry(g).or_default().push(*s);
                }
                let members: Vec<Vec<f64>> = members.into_values().collect();
                let mut out = Vec::with_capacity(size);
                while out.len() < size {
                    out.extend_from_slice(&members[rng.random_range(0..members.len())]);
                }
                out.truncate(size);
                out
            }
        }
    }
}

/// Mean AUROC and FPR over `n_draws` resamples of `draw_size` OOD scores
/// drawn with replacement from the pool.
pub fn balanced_eval(
    id_scores: &[f64],
    pool: OodPool<'_>,
    draw_size: usize,
    n_draws: usize,
    tpr_target: f64,
    rng_seed: u64,
) -> Result<MetricPair> {
    if pool.scores.is_empty() {
        return Err(Error::invalid("OOD pool is empty"));
    }
    if let Some(g) = pool.groups {
        if g.len() != pool.scores.len() {
            return Err(Error::DimensionMismatch {
                expected: pool.scores.len(),
                got: g.len(),
            });
        }
    }
    if n_draws == 0 || draw_size == 0 {
        return Err(Error::invalid("n_draws and draw size must be >= 1"));
    }
    let mut rng = seed::rng(rng_seed);
    let (mut a, mut f) = (0.0, 0.0);
    for _ in 0..n_draws {
        let drawn = pool.draw(draw_size, &mut rng);
        a += auroc(id_scores, &drawn)?;
        f += fpr_at_tpr(id_scores, &drawn, tpr_target)?;
    }
    Ok(MetricPair {
        auroc: a / n_draws as f64,
        fpr: f / n_draws as f64,
    })
}

/// Scores of one method split into ID sets and per-dataset OOD pools, each
/// ordered by scan id so that matched seeds draw matched scans.
///
/// ID rows whose dataset names an OOD dataset belong to that dataset only
/// (detectors trained per cohort score the ID scans once per cohort); all
/// other ID rows form the shared ID set.
#[derive(Debug, Default)]
struct MethodScores {
    id: BTreeMap<String, Vec<f64>>,
    ood: BTreeMap<String, (Vec<f64>, Vec<String>, bool)>,
}

impl MethodScores {
    fn id_for(&self, dataset: &str) -> Vec<f64> {
        if let Some(own) = self.id.get(dataset) {
            return own.clone();
        }
        self.id
            .iter()
            .filter(|(name, _)| !self.ood.contains_key(*name))
            .flat_map(|(_, scores)| scores.iter().copied())
            .collect()
    }
}

fn collect(records: &[ScoreRecord]) -> Result<BTreeMap<String, MethodScores>> {
    let mut sorted = records.to_vec();
    super::scores::sort_scores(&mut sorted);
    let mut by_method: BTreeMap<String, MethodScores> = BTreeMap::new();
    for r in &sorted {
        if !r.score.is_finite() {
            return Err(Error::NonFinite(format!("score of scan {}", r.scan_id)));
        }
        let m = by_method.entry(r.method.clone()).or_default();
        if r.label.is_ood() {
            let slot = m.ood.entry(r.dataset.clone()).or_default();
            slot.0.push(r.score);
            slot.1.push(r.group.clone().unwrap_or_else(|| r.scan_id.clone()));
            slot.2 |= r.group.is_some();
        } else {
            m.id.entry(r.dataset.clone()).or_default().push(r.score);
        }
    }
    for (name, m) in &by_method {
        if m.ood.is_empty() {
            return Err(Error::invalid(format!("method {name} has no OOD scores")));
        }
        for dataset in m.ood.keys() {
            if m.id_for(dataset).is_empty() {
                return Err(Error::invalid(format!("method {name} has no ID scores for {dataset}")));
            }
        }
    }
    Ok(by_method)
}

fn estimate(runs: &[f64], protocol: &EvalProtocol, label: &str) -> Result<Estimate> {
    let mut e = match protocol.ci_method {
        CiMethod::Percentile => bootstrap_ci(runs, protocol.ci_level)?,
        CiMethod::BootstrapMean => {
            bootstrap_ci_resampled(runs, protocol.ci_level, seed::derive_named(protocol.master_seed, label))?
        }
    };
    // Heavily skewed run values can put the mean outside the percentile band.
    e.lo = e.lo.min(e.point);
    e.hi = e.hi.max(e.point);
    Ok(e)
}

/// Runs the matched-seed evaluation over every (method, OOD dataset) pair.
///
/// Run `r` uses the same resample seed for every method, so per-run metric
/// differences between methods are paired. Metrics are reported in percent.
pub fn evaluate(records: &[ScoreRecord], protocol: &EvalProtocol) -> Result<EvalReport> {
    protocol.validate()?;
    let by_method = collect(records)?;

    let mut entries = Vec::new();
    for (method, scores) in &by_method {
        for (dataset, (pool_scores, groups, grouped)) in &scores.ood {
            let id_scores = scores.id_for(dataset);
            let draw_size = protocol.n_id.unwrap_or(id_scores.len());
            let pool = OodPool {
                scores: pool_scores,
                groups: grouped.then_some(groups.as_slice()),
            };
            let runs: Vec<MetricPair> = (0..protocol.n_runs)
                .into_par_iter()
                .map(|r| {
                    let s = seed::derive_named(protocol.run_seed(r), dataset);
                    balanced_eval(&id_scores, pool, draw_size, protocol.n_draws, protocol.tpr_target, s)
                })
                .collect::<Result<_>>()?;
            let runs_auroc: Vec<f64> = runs.iter().map(|m| 100.0 * m.auroc).collect();
            let runs_fpr: Vec<f64> = runs.iter().map(|m| 100.0 * m.fpr).collect();
            entries.push(ReportEntry {
                method: method.clone(),
                dataset: dataset.clone(),
                auroc: estimate(&runs_auroc, protocol, &format!("{method}/{dataset}/auroc"))?,
                fpr95: estimate(&runs_fpr, protocol, &format!("{method}/{dataset}/fpr95"))?,
                n_runs: protocol.n_runs,
                runs_auroc,
                runs_fpr95: runs_fpr,
            });
        }
    }
    let comparisons = paired_comparisons(&entries);
    Ok(EvalReport {
        version: REPORT_VERSION,
        protocol: protocol.clone(),
        entries,
        comparisons,
    })
}

/// Wilcoxon tests on per-run AUROC differences for every pair of methods
/// evaluated on the same dataset.
pub fn paired_comparisons(entries: &[ReportEntry]) -> Vec<PairedComparison> {
    let mut out = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            if a.dataset != b.dataset || a.method == b.method || a.runs_auroc.len() != b.runs_auroc.len() {
                continue;
            }
            let diffs: Vec<f64> = a.runs_auroc.iter().zip(&b.runs_auroc).map(|(x, y)| x - y).collect();
            out.push(PairedComparison {
                dataset: a.dataset.clone(),
                method_a: a.method.clone(),
                method_b: b.method.clone(),
                runs_a_better: diffs.iter().filter(|&&d| d > 0.0).count(),
                wilcoxon: wilcoxon_signed_rank(&diffs).ok(),
            });
        }
    }
    out.sort_by(|x, y| {
        (x.dataset.as_str(), x.method_a.as_str(), x.method_b.as_str()).cmp(&(
            y.dataset.as_str(),
            y.method_a.as_str(),
            y.method_b.as_str(),
        ))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Label;

    fn rec(scan: &str, dataset: &str, label: Label, method: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            scan_id: scan.into(),
            dataset: dataset.into(),
            label,
            method: method.into(),
            score,
            group: None,
        }
    }

    #[test]
    fn single_score_pool() {
        let id = [0.1, 0.5, 0.9];
        let m = balanced_eval(&id, OodPool::new(&[0.5]), 3, 4, 0.95, 1).unwrap();
        // every draw is {0.5, 0.5, 0.5}: one win, one tie, one loss
        assert_eq!(m.auroc, (1.0 + 0.5) / 3.0);
        assert_eq!(m.fpr, 2.0 / 3.0);
    }

    #[test]
    fn single_draw_equals_direct_metric() {
        let id = [0.1, 0.4, 0.35, 0.8];
        let pool = [0.3, 0.9, 0.6, 0.2];
        let m = balanced_eval(&id, OodPool::new(&pool), 4, 1, 0.95, 77).unwrap();
        let mut rng = seed::rng(77);
        let drawn: Vec<f64> = (0..4).map(|_| pool[rng.random_range(0..4)]).collect();
        assert_eq!(m.auroc, auroc(&id, &drawn).unwrap());
        assert_eq!(m.fpr, fpr_at_tpr(&id, &drawn, 0.95).unwrap());
    }

    #[test]
    fn separable_pool_is_perfect() {
        let id: Vec<f64> = (0..20).map(|i| i as f64 / 100.0).collect();
        let pool: Vec<f64> = (0..7).map(|i| 5.0 + i as f64).collect();
        let m = balanced_eval(&id, OodPool::new(&pool), 20, 10, 0.95, 3).unwrap();
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.fpr, 0.0);
    }

    #[test]
    fn empty_pool_is_error() {
        assert!(balanced_eval(&[1.0], OodPool::new(&[]), 1, 1, 0.95, 0).is_err());
    }

    #[test]
    fn grouped_draws_take_whole_groups() {
        let scores = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let groups: Vec<String> = ["a", "a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let pool = OodPool {
            scores: &scores,
            groups: Some(&groups),
        };
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let d = pool.draw(3, &mut rng);
            assert!(d == vec![1.0; 3] || d == vec![2.0; 3], "{d:?}");
        }
    }

    #[test]
    fn evaluate_matched_and_deterministic() {
        let mut recs = Vec::new();
        for i in 0..10 {
            for m in ["a", "b"] {
                recs.push(rec(&format!("id{i}"), "ID", Label::Id, m, i as f64));
                let s = if m == "a" { 20.0 + i as f64 } else { 5.0 + i as f64 };
                recs.push(rec(&format!("o{i}"), "X", Label::Ood, m, s));
            }
        }
        let p = EvalProtocol {
            n_runs: 5,
            ..EvalProtocol::default()
        };
        let r1 = evaluate(&recs, &p).unwrap();
        let r2 = evaluate(&recs, &p).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.entries.len(), 2);
        assert_eq!(r1.entries[0].auroc.point, 100.0);
        assert!(r1.entries[1].auroc.point < 100.0);
        assert_eq!(r1.comparisons.len(), 1);
        assert_eq!(r1.comparisons[0].runs_a_better, 5);
        for e in &r1.entries {
            assert!(e.auroc.lo <= e.auroc.point && e.auroc.point <= e.auroc.hi);
        }
    }

    #[test]
    fn dataset_specific_id_rows() {
        let mut recs = Vec::new();
        for i in 0..6 {
            // shared ID rows would give a perfect AUROC; the target-specific ones do not
            recs.push(rec(&format!("id{i}"), "ID", Label::Id, "m", -10.0));
            recs.push(rec(&format!("id{i}"), "X", Label::Id, "m", 10.0));
            recs.push(rec(&format!("o{i}"), "X", Label::Ood, "m", 0.0));
            recs.push(rec(&format!("o{i}"), "Y", Label::Ood, "m", 0.0));
        }
        let p = EvalProtocol {
            n_runs: 3,
            ..EvalProtocol::default()
        };
        let r = evaluate(&recs, &p).unwrap();
        assert_eq!(r.entry("m", "X").unwrap().auroc.point, 0.0);
        assert_eq!(r.entry("m", "Y").unwrap().auroc.point, 100.0);
    }

    #[test]
    fn one_run_is_rejected() {
        let recs = vec![rec("a", "ID", Label::Id, "m", 0.0), rec("b", "X", Label::Ood, "m", 1.0)];
        let p = EvalProtocol {
            n_runs: 1,
            ..EvalProtocol::default()
        };
        assert!(evaluate(&recs, &p).is_err());
    }
}
