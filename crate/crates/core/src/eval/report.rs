//! Evaluation reports and their canonical JSON / CSV forms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::protocol::EvalProtocol;
use super::stats::{Estimate, RankTest};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

pub const REPORT_CSV_HEADER: &str = "method,dataset,auroc,auroc_lo,auroc_hi,fpr95,fpr95_lo,fpr95_hi,n_runs";

/// Metrics of one method on one OOD dataset, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub method: String,
    pub dataset: String,
    pub auroc: Estimate,
    pub fpr95: Estimate,
    pub n_runs: usize,
    pub runs_auroc: Vec<f64>,
    pub runs_fpr95: Vec<f64>,
}

/// Paired test of per-run AUROC, `method_a - method_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub dataset: String,
    pub method_a: String,
    pub method_b: String,
    pub runs_a_better: usize,
    /// `None` when every paired difference is zero.
    pub wilcoxon: Option<RankTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub protocol: EvalProtocol,
    pub entries: Vec<ReportEntry>,
    pub comparisons: Vec<PairedComparison>,
}

impl EvalReport {
    pub fn entry(&self, method: &str, dataset: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.method == method && e.dataset == dataset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::invalid(format!("unknown report format {other:?}"))),
        }
    }
}

fn fixed(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', 2 * n));
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => write!(out, "{u}").unwrap(),
            (None, Some(i)) => write!(out, "{i}").unwrap(),
            _ => out.push_str(&fixed(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // numeric arrays stay on one line
            let flat = items.iter().all(Value::is_number);
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if flat {
                    if i > 0 {
                        out.push(' ');
                    }
                } else {
                    out.push('\n');
                    pad(out, indent + 1);
                }
                write_value(out, item, indent + 1);
            }
            if !flat {
                out.push('\n');
                pad(out, indent);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(out, indent + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
            }
            out.push('\n');
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Canonical JSON: sorted keys, two-space indent, floats with six decimals.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut rows: Vec<&ReportEntry> = report.entries.iter().collect();
    rows.sort_by(|a, b| (a.method.as_str(), a.dataset.as_str()).cmp(&(b.method.as_str(), b.dataset.as_str())));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER.split(',')).unwrap();
    for e in rows {
        w.write_record([
            e.method.clone(),
            e.dataset.clone(),
            fixed(e.auroc.point),
            fixed(e.auroc.lo),
            fixed(e.auroc.hi),
            fixed(e.fpr95.point),
            fixed(e.fpr95.lo),
            fixed(e.fpr95.hi),
            e.n_runs.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => to_canonical_json(report)?,
        ReportFormat::Csv => report_csv(report),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(Error::format(path, format!("unsupported report version {}", report.version)));
    }
    Ok(report)
}
