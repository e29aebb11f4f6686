//! Field snapshot files: raw little-endian binary64 values in grid order plus a JSON
//! sidecar `{n, resolution, time, name}`.

use super::{ScalarField, TorusGrid};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub n: usize,
    pub resolution: usize,
    pub time: f64,
    pub name: String,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (binary, conventionally `*.f64`) and its `*.json` sidecar.
pub fn write_snapshot(path: &Path, field: &ScalarField, time: f64, name: &str) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let meta = SnapshotMeta {
        n: field.grid().n(),
        resolution: field.grid().resolution(),
        time,
        name: name.to_string(),
    };
    fs::write(sidecar(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_slice(&fs::read(sidecar(path))?)?;
    let grid = TorusGrid::new(meta.n, meta.resolution)?;
    let bytes = fs::read(path)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::GridMismatch(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(grid, values)?, meta))
}
