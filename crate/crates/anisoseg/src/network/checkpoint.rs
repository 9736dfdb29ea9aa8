//! Parameter checkpoints: a JSON manifest plus a little-endian f32 blob.
//!
//! The manifest lists every tensor (learnable parameters and batch-norm
//! running statistics) with its shape and byte range into `<stem>.bin`.
//! Entries are written in BTreeMap key order, so saving the same parameters
//! twice yields bitwise-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::exec::NetworkParams;
use crate::error::{Error, Result};
use crate::tensor::{BnState, Tensor};

/// Stored dtype; values are converted from/to the in-memory f64 buffers.
pub const CHECKPOINT_DTYPE: &str = "f32";

/// One tensor's placement inside the blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset of the first element in the blob.
    pub offset: usize,
    /// Element count (f32 values, 4 bytes each).
    pub len: usize,
}

/// Checkpoint manifest, serialized as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dtype: String,
    pub entries: Vec<ManifestEntry>,
}

fn blob_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

fn manifest_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn running_names(node: &str) -> (String, String) {
    (format!("{node}.running_mean"), format!("{node}.running_var"))
}

/// Writes `<stem>.json` and `<stem>.bin` for the given parameters.
pub fn save(stem: &Path, params: &NetworkParams) -> Result<()> {
    // assemble (name, shape, values) in deterministic key order
    let mut flat: Vec<(String, Vec<usize>, &[f64])> = params
        .tensors
        .iter()
        .map(|(name, t)| (name.clone(), t.shape().to_vec(), t.data()))
        .collect();
    for (node, state) in &params.bn_states {
        let (mean_name, var_name) = running_names(node);
        flat.push((
            mean_name,
            vec![state.running_mean.len()],
            &state.running_mean,
        ));
        flat.push((var_name, vec![state.running_var.len()], &state.running_var));
    }
    flat.sort_by(|a, b| a.0.cmp(&b.0));

    let mut blob: Vec<u8> = Vec::new();
    let mut entries = Vec::with_capacity(flat.len());
    for (name, shape, values) in flat {
        let offset = blob.len();
        for &v in values {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
        entries.push(ManifestEntry { name, shape, offset, len: values.len() });
    }
    let manifest = Manifest { dtype: CHECKPOINT_DTYPE.into(), entries };
    fs::write(manifest_path(stem), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(blob_path(stem), blob)?;
    Ok(())
}

/// Reads a checkpoint back into named f64 tensors and batch-norm states.
pub fn load(stem: &Path) -> Result<NetworkParams> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path(stem))?)?;
    if manifest.dtype != CHECKPOINT_DTYPE {
        return Err(Error::CorruptFile(format!(
            "checkpoint dtype '{}', expected '{}'",
            manifest.dtype, CHECKPOINT_DTYPE
        )));
    }
    let blob = fs::read(blob_path(stem))?;
    let mut tensors = BTreeMap::new();
    let mut running: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for entry in &manifest.entries {
        let n_elems: usize = entry.shape.iter().product();
        if n_elems != entry.len {
            return Err(Error::CorruptFile(format!(
                "entry '{}': shape {:?} disagrees with len {}",
                entry.name, entry.shape, entry.len
            )));
        }
        let end = entry
            .offset
            .checked_add(entry.len * 4)
            .filter(|&e| e <= blob.len())
            .ok_or_else(|| {
                Error::CorruptFile(format!(
                    "entry '{}': byte range {}..+{} exceeds blob of {} bytes",
                    entry.name,
                    entry.offset,
                    entry.len * 4,
                    blob.len()
                ))
            })?;
        let values: Vec<f64> = blob[entry.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptFile(format!(
                "entry '{}': non-finite value",
                entry.name
            )));
        }
        if entry.name.ends_with(".running_mean") || entry.name.ends_with(".running_var") {
            running.insert(entry.name.clone(), values);
        } else {
            tensors.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), values)?);
        }
    }
    // pair running means with variances into per-node states
    let mut bn_states = BTreeMap::new();
    for (name, mean) in &running {
        if let Some(node) = name.strip_suffix(".running_mean") {
            let var = running.get(&format!("{node}.running_var")).ok_or_else(|| {
                Error::CorruptFile(format!("'{name}' lacks a matching running_var"))
            })?;
            if var.len() != mean.len() {
                return Err(Error::CorruptFile(format!(
                    "'{node}': running_mean and running_var lengths differ"
                )));
            }
            bn_states.insert(
                node.to_string(),
                BnState { running_mean: mean.clone(), running_var: var.clone() },
            );
        }
    }
    for name in running.keys() {
        if let Some(node) = name.strip_suffix(".running_var") {
            if !bn_states.contains_key(node) {
                return Err(Error::CorruptFile(format!(
                    "'{name}' lacks a matching running_mean"
                )));
            }
        }
    }
    Ok(NetworkParams { tensors, bn_states })
}
