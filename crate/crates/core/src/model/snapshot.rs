//! Parameter snapshots: raw little-endian `f64` values in a `.bin` file and a
//! TOML sidecar naming each block.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::params::{NamedBlock, ParamState, TaskHead};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    /// `"shared"` or the owning task id.
    pub group: String,
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in values (not bytes) into the `.bin` file.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLayout {
    pub total: usize,
    pub blocks: Vec<BlockEntry>,
}

const SHARED: &str = "shared";

impl SnapshotLayout {
    pub fn of(params: &ParamState) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |group: &str, b: &NamedBlock| {
            blocks.push(BlockEntry {
                group: group.to_string(),
                name: b.name.clone(),
                shape: b.tensor.shape().to_vec(),
                offset,
            });
            offset += b.tensor.len();
        };
        for b in &params.shared {
            push(SHARED, b);
        }
        for h in &params.heads {
            for b in &h.blocks {
                push(&h.task_id, b);
            }
        }
        Self { total: offset, blocks }
    }
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("toml")
}

/// Write `params` to `bin` and its layout next to it. Returns the sidecar path.
pub fn write_snapshot(bin: &Path, params: &ParamState) -> Result<PathBuf> {
    let flat = params.to_flat();
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin, bytes)?;
    let layout = toml::to_string(&SnapshotLayout::of(params)).map_err(|e| invalid(e.to_string()))?;
    let side = sidecar(bin);
    fs::write(&side, layout)?;
    Ok(side)
}

pub fn read_snapshot(bin: &Path) -> Result<ParamState> {
    let text = fs::read_to_string(sidecar(bin))?;
    let layout: SnapshotLayout = toml::from_str(&text).map_err(|e| invalid(format!("snapshot layout: {e}")))?;
    let bytes = fs::read(bin)?;
    if bytes.len() != layout.total * 8 {
        return Err(Error::Shape {
            context: "read_snapshot",
            expected: format!("{} bytes", layout.total * 8),
            actual: format!("{} bytes", bytes.len()),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = ParamState { shared: Vec::new(), heads: Vec::new() };
    for e in &layout.blocks {
        let n: usize = e.shape.iter().product();
        let data = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| invalid(format!("block `{}` overruns the snapshot", e.name)))?
            .to_vec();
        let block = NamedBlock { name: e.name.clone(), tensor: DenseTensor::new(e.shape.clone(), data)? };
        if e.group == SHARED {
            params.shared.push(block);
        } else {
            match params.heads.iter_mut().find(|h| h.task_id == e.group) {
                Some(h) => h.blocks.push(block),
                None => params.heads.push(TaskHead { task_id: e.group.clone(), blocks: vec![block] }),
            }
        }
    }
    Ok(params)
}
