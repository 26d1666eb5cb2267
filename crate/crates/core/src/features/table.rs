//! Feature tables on disk.
//!
//! CSV tables carry the header `scan_id,roi_index,dataset,label,f0000,...`.
//! Binary tables start with the magic `SCANOODT`, a little-endian `u64`
//! header length, a JSON header holding row count, dimension and provenance
//! columns, then a row-major block of little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::descriptor::{Label, ScanDescriptor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SCANOODT";
const BINARY_VERSION: u32 = 1;
const PROVENANCE_COLUMNS: [&str; 4] = ["scan_id", "roi_index", "dataset", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// `.csv` files are text; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TableFormat::Csv,
            _ => TableFormat::Binary,
        }
    }
}

fn common_dim(rows: &[ScanDescriptor]) -> Result<usize> {
    let dim = rows.first().map_or(0, |r| r.vector.len());
    for r in rows {
        if r.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.vector.len(),
            });
        }
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("descriptor of scan {}", r.scan_id)));
        }
    }
    Ok(dim)
}

pub fn save_feature_table(rows: &[ScanDescriptor], path: &Path) -> Result<()> {
    match TableFormat::from_path(path) {
        TableFormat::Csv => save_csv(rows, path),
        TableFormat::Binary => save_binary(rows, path),
    }
}

pub fn load_feature_table(path: &Path) -> Result<Vec<ScanDescriptor>> {
    match TableFormat::from_path(path) {
        TableFormat::Csv => load_csv(path),
        TableFormat::Binary => load_binary(path),
    }
}

pub fn feature_column(i: usize) -> String {
    format!("f{i:04}")
}

fn save_csv(rows: &[ScanDescriptor], path: &Path) -> Result<()> {
    let dim = common_dim(rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = PROVENANCE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(feature_column))
        .collect();
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.scan_id.clone(),
            r.roi_index.to_string(),
            r.dataset.clone(),
            r.label.as_u8().to_string(),
        ];
        // `Display` for f32 prints the shortest string that parses back exactly.
        rec.extend(r.vector.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, bytes)?;
    Ok(())
}

fn load_csv(path: &Path) -> Result<Vec<ScanDescriptor>> {
    let text = fs::read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(&text[..]);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| Error::format(path, e.to_string()))?,
    };
    if header.len() < 4 || (0..4).any(|i| &header[i] != PROVENANCE_COLUMNS[i]) {
        return Err(Error::format(
            path,
            format!("header must start with {}", PROVENANCE_COLUMNS.join(",")),
        ));
    }
    let dim = header.len() - 4;
    for (i, name) in header.iter().skip(4).enumerate() {
        if name != feature_column(i) {
            return Err(Error::format(path, format!("unexpected feature column {name:?} at position {i}")));
        }
    }

    let mut rows = Vec::new();
    for (n, rec) in records.enumerate() {
        let row_no = n + 1;
        let rec = rec.map_err(|e| Error::format(path, format!("row {row_no}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::format(
                path,
                format!("row {row_no} has {} fields, expected {}", rec.len(), header.len()),
            ));
        }
        let bad = |what: &str| Error::format(path, format!("row {row_no}: bad {what}"));
        let roi_index = rec[1].parse().map_err(|_| bad("roi_index"))?;
        let label = rec[3]
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| bad("label"))?;
        let mut vector = Vec::with_capacity(dim);
        for (i, field) in rec.iter().skip(4).enumerate() {
            let v: f32 = field.parse().map_err(|_| bad(&feature_column(i)))?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("row {row_no}: non-finite {}", feature_column(i))));
            }
            vector.push(v);
        }
        rows.push(ScanDescriptor {
            scan_id: rec[0].to_string(),
            roi_index,
            dataset: rec[2].to_string(),
            label,
            vector,
        });
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct BinaryHeader {
    version: u32,
    rows: usize,
    dim: usize,
    scan_id: Vec<String>,
    roi_index: Vec<u32>,
    dataset: Vec<String>,
    label: Vec<Label>,
}

fn save_binary(rows: &[ScanDescriptor], path: &Path) -> Result<()> {
    let dim = common_dim(rows)?;
    let header = BinaryHeader {
        version: BINARY_VERSION,
        rows: rows.len(),
        dim,
        scan_id: rows.iter().map(|r| r.scan_id.clone()).collect(),
        roi_index: rows.iter().map(|r| r.roi_index).collect(),
        dataset: rows.iter().map(|r| r.dataset.clone()).collect(),
        label: rows.iter().map(|r| r.label).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + rows.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for r in rows {
        for v in &r.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<Vec<ScanDescriptor>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::format(path, "not a binary feature table"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let header: BinaryHeader = serde_json::from_slice(body).map_err(|e| Error::format(path, e.to_string()))?;
    if header.version != BINARY_VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header.version)));
    }
    let n = header.rows;
    if [header.scan_id.len(), header.roi_index.len(), header.dataset.len(), header.label.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::format(path, "provenance columns disagree with row count"));
    }
    let data = &bytes[16 + len..];
    if data.len() != n * header.dim * 4 {
        return Err(Error::format(
            path,
            format!("data block has {} bytes, expected {}", data.len(), n * header.dim * 4),
        ));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let vector: Vec<f32> = values.by_ref().take(header.dim).collect();
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("row {}: non-finite value", i + 1)));
        }
        rows.push(ScanDescriptor {
            scan_id: header.scan_id[i].clone(),
            roi_index: header.roi_index[i],
            dataset: header.dataset[i].clone(),
            label: header.label[i],
            vector,
        });
    }
    Ok(rows)
}
