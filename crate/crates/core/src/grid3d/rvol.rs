//! The RVOL raw volume format: a JSON sidecar (`name.json`) describing the
//! grid and a little-endian payload (`name.raw`) with exactly nx*ny*nz
//! elements in x-fastest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::volume::{voxel_count, Dims, LabelMask, VolumeGrid};
use crate::error::{Error, Result};

pub const ORDER_X_FASTEST: &str = "x-fastest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvolHeader {
    pub dims: Dims,
    pub spacing_mm: [f64; 3],
    pub dtype: Dtype,
    pub order: String,
}

/// Sidecar and payload paths for a volume named by either file.
pub fn rvol_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("raw"))
}

fn read_header(sidecar: &Path) -> Result<RvolHeader> {
    let text = fs::read_to_string(sidecar)?;
    let header: RvolHeader =
        serde_json::from_str(&text).map_err(|e| Error::format(sidecar, format!("bad RVOL sidecar: {e}")))?;
    if header.order != ORDER_X_FASTEST {
        return Err(Error::format(sidecar, format!("unsupported order {:?}", header.order)));
    }
    if header.dims.contains(&0) {
        return Err(Error::format(sidecar, "dims must be >= 1"));
    }
    Ok(header)
}

fn read_payload(path: &Path, header: &RvolHeader) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let expected = voxel_count(header.dims) * header.dtype.size();
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {expected}", bytes.len()),
        ));
    }
    Ok(bytes)
}

fn write_pair(path: &Path, header: &RvolHeader, payload: &[u8]) -> Result<()> {
    let (sidecar, raw) = rvol_paths(path);
    fs::write(&sidecar, serde_json::to_string_pretty(header)? + "\n")?;
    fs::write(raw, payload)?;
    Ok(())
}

pub fn write_volume(path: &Path, volume: &VolumeGrid) -> Result<()> {
    let header = RvolHeader {
        dims: volume.dims(),
        spacing_mm: volume.spacing_mm(),
        dtype: Dtype::F32,
        order: ORDER_X_FASTEST.into(),
    };
    let payload: Vec<u8> = volume.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path, &header, &payload)
}

/// Reads an intensity volume. `u8` payloads are widened to `f32`.
pub fn read_volume(path: &Path) -> Result<VolumeGrid> {
    let (sidecar, raw) = rvol_paths(path);
    let header = read_header(&sidecar)?;
    let bytes = read_payload(&raw, &header)?;
    let values: Vec<f32> = match header.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::U8 => bytes.iter().map(|&b| f32::from(b)).collect(),
    };
    VolumeGrid::new(header.dims, header.spacing_mm, values).map_err(|e| Error::format(&sidecar, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &LabelMask, spacing_mm: [f64; 3]) -> Result<()> {
    let header = RvolHeader {
        dims: mask.dims(),
        spacing_mm,
        dtype: Dtype::U8,
        order: ORDER_X_FASTEST.into(),
    };
    let payload: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    write_pair(path, &header, &payload)
}

/// Reads a binary mask and its spacing. Any nonzero voxel is foreground.
pub fn read_mask(path: &Path) -> Result<(LabelMask, [f64; 3])> {
    let (sidecar, raw) = rvol_paths(path);
    let header = read_header(&sidecar)?;
    let bytes = read_payload(&raw, &header)?;
    let bits: Vec<bool> = match header.dtype {
        Dtype::U8 => bytes.iter().map(|&b| b != 0).collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) != 0.0)
            .collect(),
    };
    let mask = LabelMask::new(header.dims, bits).map_err(|e| Error::format(&sidecar, e.to_string()))?;
    Ok((mask, header.spacing_mm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = VolumeGrid::from_fn([3, 2, 4], [0.5, 1.0, 2.5], |i, j, k| {
            (i as f32 - 1.3) * 1e-3 + j as f32 * 17.0 - k as f32 / 3.0
        })
        .unwrap();
        let p = dir.path().join("ct.json");
        write_volume(&p, &v).unwrap();
        assert_eq!(std::fs::metadata(dir.path().join("ct.raw")).unwrap().len(), 24 * 4);
        let back = read_volume(&p).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn mask_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = LabelMask::from_box([4, 4, 3], [1, 0, 1], [2, 3, 1]).unwrap();
        let p = dir.path().join("seg.raw");
        write_mask(&p, &m, [1.0, 1.0, 2.0]).unwrap();
        let (back, spacing) = read_mask(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(spacing, [1.0, 1.0, 2.0]);
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("seg.json")).unwrap()).unwrap();
        assert_eq!(sidecar["dtype"], "u8");
        assert_eq!(sidecar["order"], "x-fastest");
    }

    #[test]
    fn short_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = VolumeGrid::filled([2, 2, 2], [1.0; 3], 1.0).unwrap();
        let p = dir.path().join("v.json");
        write_volume(&p, &v).unwrap();
        std::fs::write(dir.path().join("v.raw"), [0u8; 5]).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::Format { .. })));
    }
}
