use serde::{Deserialize, Serialize};

/// Scan label. Out-of-distribution is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Id = 0,
    Ood = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Id),
            1 => Some(Label::Ood),
            _ => None,
        }
    }

    pub fn is_ood(self) -> bool {
        self == Label::Ood
    }
}

/// Pooled feature vector of one ROI, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanDescriptor {
    pub scan_id: String,
    pub roi_index: u32,
    pub dataset: String,
    pub label: Label,
    pub vector: Vec<f32>,
}

/// Groups ROI descriptors by scan, preserving first-seen scan order.
pub fn group_by_scan(rows: &[ScanDescriptor]) -> Vec<(&str, Vec<&ScanDescriptor>)> {
    let mut order: Vec<(&str, Vec<&ScanDescriptor>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for row in rows {
        let slot = *index.entry(row.scan_id.as_str()).or_insert_with(|| {
            order.push((row.scan_id.as_str(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push(row);
    }
    order
}
