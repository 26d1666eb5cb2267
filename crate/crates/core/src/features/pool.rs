use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid3d::{voxel_count, Dims};

/// Channel width of each encoder stage: patch embedding then four transformer stages.
pub const STAGE_WIDTHS: [usize; 5] = [48, 96, 192, 384, 768];
/// Start of each stage's slice in a full descriptor.
pub const STAGE_OFFSETS: [usize; 5] = [0, 48, 144, 336, 720];
/// Length of a descriptor pooled from all five stages.
pub const FULL_DESCRIPTOR_LEN: usize = 1488;

/// A channel-major feature map from one encoder stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFeatureMap {
    stage_index: usize,
    grid: Dims,
    values: Vec<f32>,
}

impl StageFeatureMap {
    pub fn new(stage_index: usize, grid: Dims, values: Vec<f32>) -> Result<Self> {
        if stage_index >= STAGE_WIDTHS.len() {
            return Err(Error::invalid(format!("stage index {stage_index} out of range 0..5")));
        }
        if grid.contains(&0) {
            return Err(Error::invalid(format!("stage map grid must be nonempty, got {grid:?}")));
        }
        let expected = STAGE_WIDTHS[stage_index] * voxel_count(grid);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            stage_index,
            grid,
            values,
        })
    }

    pub fn stage_index(&self) -> usize {
        self.stage_index
    }

    pub fn channels(&self) -> usize {
        STAGE_WIDTHS[self.stage_index]
    }

    pub fn grid(&self) -> Dims {
        self.grid
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = voxel_count(self.grid);
        &self.values[c * n..(c + 1) * n]
    }
}

/// A nonempty subset of the five encoder stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSelection([bool; 5]);

impl StageSelection {
    pub fn all() -> Self {
        StageSelection([true; 5])
    }

    pub fn new(stages: &[usize]) -> Result<Self> {
        let mut sel = [false; 5];
        for &s in stages {
            if s >= 5 {
                return Err(Error::invalid(format!("stage {s} out of range 0..5")));
            }
            sel[s] = true;
        }
        if !sel.iter().any(|&b| b) {
            return Err(Error::invalid("stage selection must be nonempty"));
        }
        Ok(StageSelection(sel))
    }

    /// Parses a comma-separated list such as `"0,3,4"` or `"all"`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim() == "all" {
            return Ok(Self::all());
        }
        let stages = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad stage {s:?} in {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&stages)
    }

    pub fn stages(&self) -> impl Iterator<Item = usize> + '_ {
        (0..5).filter(|&s| self.0[s])
    }

    pub fn contains(&self, stage: usize) -> bool {
        stage < 5 && self.0[stage]
    }

    pub fn descriptor_len(&self) -> usize {
        self.stages().map(|s| STAGE_WIDTHS[s]).sum()
    }
}

impl Default for StageSelection {
    fn default() -> Self {
        Self::all()
    }
}

/// Global average pooling: one mean per channel, concatenated in stage order.
///
/// Each channel is summed in ascending value order, so the result is
/// bit-identical under any permutation of voxel positions.
pub fn gap_pool(maps: &[StageFeatureMap], selection: &StageSelection) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(selection.descriptor_len());
    for stage in selection.stages() {
        let map = maps
            .iter()
            .find(|m| m.stage_index == stage)
            .ok_or_else(|| Error::invalid(format!("missing feature map for stage {stage}")))?;
        if map.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("stage {stage} feature map")));
        }
        let n = voxel_count(map.grid) as f64;
        let mut sorted = Vec::with_capacity(voxel_count(map.grid));
        for c in 0..map.channels() {
            sorted.clear();
            sorted.extend(map.channel(c).iter().map(|&v| f64::from(v)));
            sorted.sort_by(f64::total_cmp);
            let sum: f64 = sorted.iter().sum();
            out.push((sum / n) as f32);
        }
    }
    Ok(out)
}

/// Selects stage slices from a full-length descriptor.
pub fn stage_subset(vector: &[f32], selection: &StageSelection) -> Result<Vec<f32>> {
    if vector.len() != FULL_DESCRIPTOR_LEN {
        return Err(Error::DimensionMismatch {
            expected: FULL_DESCRIPTOR_LEN,
            got: vector.len(),
        });
    }
    let mut out = Vec::with_capacity(selection.descriptor_len());
    for s in selection.stages() {
        out.extend_from_slice(&vector[STAGE_OFFSETS[s]..STAGE_OFFSETS[s] + STAGE_WIDTHS[s]]);
    }
    Ok(out)
}

/// Sidecar of a stage feature map file; the payload sits next to it as `.raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMapHeader {
    pub stage_index: usize,
    pub channels: usize,
    pub dims: Dims,
    pub dtype: String,
    pub order: String,
}

const STAGE_MAP_ORDER: &str = "channel-major,x-fastest";

pub fn write_stage_map(path: &Path, map: &StageFeatureMap) -> Result<()> {
    let header = StageMapHeader {
        stage_index: map.stage_index,
        channels: map.channels(),
        dims: map.grid,
        dtype: "f32".into(),
        order: STAGE_MAP_ORDER.into(),
    };
    fs::write(path.with_extension("json"), serde_json::to_string_pretty(&header)? + "\n")?;
    let payload: Vec<u8> = map.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path.with_extension("raw"), payload)?;
    Ok(())
}

pub fn read_stage_map(path: &Path) -> Result<StageFeatureMap> {
    let sidecar = path.with_extension("json");
    let header: StageMapHeader = serde_json::from_str(&fs::read_to_string(&sidecar)?)
        .map_err(|e| Error::format(&sidecar, format!("bad stage map sidecar: {e}")))?;
    if header.dtype != "f32" || header.order != STAGE_MAP_ORDER {
        return Err(Error::format(&sidecar, "stage maps must be f32, channel-major, x-fastest"));
    }
    if header.stage_index >= 5 || header.channels != STAGE_WIDTHS[header.stage_index] {
        return Err(Error::format(
            &sidecar,
            format!("stage {} cannot have {} channels", header.stage_index, header.channels),
        ));
    }
    let raw = path.with_extension("raw");
    let bytes = fs::read(&raw)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(&raw, "payload is not a whole number of f32 values"));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    StageFeatureMap::new(header.stage_index, header.dims, values).map_err(|e| Error::format(&raw, e.to_string()))
}
