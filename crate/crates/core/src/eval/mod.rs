//! Detection metrics, matched-seed resampling protocol and reports.

mod metrics;
mod protocol;
mod report;
mod scores;
mod stats;

pub use metrics::{auroc, fpr95, fpr_at_tpr, fpr_at_tpr_detail, FprAtTpr};
pub use protocol::{balanced_eval, evaluate, paired_comparisons, EvalProtocol, MetricPair, OodPool};
pub use report::{
    emit_report, read_report, report_csv, to_canonical_json, EvalReport, PairedComparison, ReportEntry,
    ReportFormat, REPORT_CSV_HEADER, REPORT_VERSION,
};
pub use scores::{read_scores, sort_scores, write_scores, ScoreRecord, SCORE_HEADER};
pub use stats::{
    bootstrap_ci, bootstrap_ci_resampled, mann_whitney_u, signed_rank_sums, wilcoxon_signed_rank, CiMethod,
    Estimate, RankTest, SignedRankSums, BOOTSTRAP_RESAMPLES,
};
