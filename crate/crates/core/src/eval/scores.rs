//! Per-scan OOD score files.
//!
//! CSV with header `scan_id,dataset,label,method,score,group`, sorted by
//! `scan_id` then `method`. `group` (e.g. a patient id) may be empty.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Label;

pub const SCORE_HEADER: [&str; 6] = ["scan_id", "dataset", "label", "method", "score", "group"];

/// One scan's score under one method. Higher means more likely OOD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub scan_id: String,
    pub dataset: String,
    pub label: Label,
    pub method: String,
    pub score: f64,
    #[serde(default)]
    pub group: Option<String>,
}

pub fn sort_scores(records: &mut [ScoreRecord]) {
    records.sort_by(|a, b| {
        a.scan_id
            .cmp(&b.scan_id)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.dataset.cmp(&b.dataset))
    });
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_scores(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(SCORE_HEADER).map_err(err)?;
    for r in &sorted {
        if !r.score.is_finite() {
            return Err(Error::NonFinite(format!("score of scan {}", r.scan_id)));
        }
        w.write_record([
            r.scan_id.as_str(),
            r.dataset.as_str(),
            &r.label.as_u8().to_string(),
            r.method.as_str(),
            &r.score.to_string(),
            r.group.as_deref().unwrap_or(""),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let bytes = fs::read(path)?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(&bytes[..]);
    let header = reader.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if header.iter().ne(SCORE_HEADER.iter().copied()) {
        return Err(Error::format(path, format!("score header must be {}", SCORE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        if rec.len() != SCORE_HEADER.len() {
            return Err(Error::format(path, format!("row {row} has {} fields", rec.len())));
        }
        let label = rec[2]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| Error::format(path, format!("row {row}: bad label")))?;
        let score: f64 = rec[4]
            .parse()
            .map_err(|_| Error::format(path, format!("row {row}: bad score")))?;
        if !score.is_finite() {
            return Err(Error::format(path, format!("row {row}: non-finite score")));
        }
        out.push(ScoreRecord {
            scan_id: rec[0].to_string(),
            dataset: rec[1].to_string(),
            label,
            method: rec[3].to_string(),
            score,
            group: (!rec[5].is_empty()).then(|| rec[5].to_string()),
        });
    }
    Ok(out)
}
