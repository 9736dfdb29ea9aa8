//! "vraw" on-disk format: a JSON sidecar header plus a raw little-endian
//! payload. Volumes store f32 samples, masks store u8 labels; both payloads
//! are x-fastest. Round trips are bit-exact at the file level.

use super::{Grid3, Mask, Volume};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Sidecar header written next to the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VrawHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
}

fn header_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

fn payload_path(stem: &Path) -> PathBuf {
    stem.with_extension("raw")
}

/// Strips a trailing `.json`/`.raw` so either file (or the bare stem) works.
fn normalize_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn read_header(stem: &Path) -> Result<VrawHeader> {
    let text = fs::read_to_string(header_path(stem))?;
    let h: VrawHeader = serde_json::from_str(&text)?;
    if h.order != "x-fastest" {
        return Err(Error::CorruptFile(format!("unsupported order `{}`", h.order)));
    }
    Ok(h)
}

fn grid_of(h: &VrawHeader) -> Result<Grid3> {
    Grid3::new(h.dims, h.spacing_mm, h.origin_mm)
}

/// Writes `<stem>.json` and `<stem>.raw` with f32 little-endian samples.
pub fn write_volume(v: &Volume, stem: &Path) -> Result<()> {
    let stem = normalize_stem(stem);
    let h = VrawHeader {
        dims: v.grid.dims,
        spacing_mm: v.grid.spacing,
        origin_mm: v.grid.origin,
        dtype: "f32".into(),
        order: "x-fastest".into(),
    };
    fs::write(header_path(&stem), serde_json::to_string_pretty(&h)?)?;
    let mut bytes = Vec::with_capacity(v.samples.len() * 4);
    for &s in &v.samples {
        bytes.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(payload_path(&stem), bytes)?;
    Ok(())
}

/// Reads a volume written by `write_volume`; accepts the stem or either file.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let stem = normalize_stem(path);
    let h = read_header(&stem)?;
    if h.dtype != "f32" {
        return Err(Error::CorruptFile(format!(
            "expected dtype f32 for a volume, found `{}`",
            h.dtype
        )));
    }
    let grid = grid_of(&h)?;
    let bytes = fs::read(payload_path(&stem))?;
    if bytes.len() != grid.len() * 4 {
        return Err(Error::CorruptFile(format!(
            "payload is {} bytes, expected {}",
            bytes.len(),
            grid.len() * 4
        )));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(grid, samples)
}

/// Writes `<stem>.json` and `<stem>.raw` with u8 labels.
pub fn write_mask(m: &Mask, stem: &Path) -> Result<()> {
    let stem = normalize_stem(stem);
    let h = VrawHeader {
        dims: m.grid.dims,
        spacing_mm: m.grid.spacing,
        origin_mm: m.grid.origin,
        dtype: "u8".into(),
        order: "x-fastest".into(),
    };
    fs::write(header_path(&stem), serde_json::to_string_pretty(&h)?)?;
    fs::write(payload_path(&stem), &m.labels)?;
    Ok(())
}

/// Reads a mask written by `write_mask`; accepts the stem or either file.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let stem = normalize_stem(path);
    let h = read_header(&stem)?;
    if h.dtype != "u8" {
        return Err(Error::CorruptFile(format!(
            "expected dtype u8 for a mask, found `{}`",
            h.dtype
        )));
    }
    let grid = grid_of(&h)?;
    let labels = fs::read(payload_path(&stem))?;
    if labels.len() != grid.len() {
        return Err(Error::CorruptFile(format!(
            "payload is {} bytes, expected {}",
            labels.len(),
            grid.len()
        )));
    }
    Mask::new(grid, labels)
}
