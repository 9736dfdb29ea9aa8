//! Physical-space 3D grids, scalar volumes and binary masks.
//!
//! A `Grid3` places voxel (0,0,0)'s center at `origin` (mm) and subsequent
//! centers at `origin + index * spacing` per axis. Grids are axis-aligned;
//! sample buffers are linearized x-fastest: `idx = x + nx*(y + ny*z)`.

mod resample;
pub mod vraw;

pub use resample::{intersect_grids, resample_linear, resample_nearest};
pub use resample::{sample_linear_world, sample_nearest_world};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axis-aligned voxel grid in world (mm) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    /// Voxel counts per axis (x, y, z).
    pub dims: [usize; 3],
    /// Voxel size in mm per axis.
    pub spacing: [f64; 3],
    /// World position (mm) of the center of voxel (0,0,0).
    pub origin: [f64; 3],
}

impl Grid3 {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Grid3 { dims, spacing, origin };
        g.validate()?;
        Ok(g)
    }

    /// Isotropic grid with origin at half a voxel (extent starts at 0 mm).
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        let half = spacing * 0.5;
        Grid3::new(dims, [spacing; 3], [half, half, half])
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if self.dims[a] < 1 {
                return Err(Error::InvalidGrid(format!("dims[{a}] must be >= 1")));
            }
            if !(self.spacing[a] > 0.0) || !self.spacing[a].is_finite() {
                return Err(Error::InvalidGrid(format!("spacing[{a}] must be > 0")));
            }
            if !self.origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("origin[{a}] must be finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of voxel (x, y, z); x varies fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// World coordinates (mm) of the center of voxel (x, y, z).
    #[inline]
    pub fn world(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            self.origin[0] + x as f64 * self.spacing[0],
            self.origin[1] + y as f64 * self.spacing[1],
            self.origin[2] + z as f64 * self.spacing[2],
        ]
    }

    /// Low edge of the world extent per axis (half a voxel below the first center).
    pub fn extent_lo(&self) -> [f64; 3] {
        [
            self.origin[0] - 0.5 * self.spacing[0],
            self.origin[1] - 0.5 * self.spacing[1],
            self.origin[2] - 0.5 * self.spacing[2],
        ]
    }

    /// High edge of the world extent per axis; extent length is dims * spacing.
    pub fn extent_hi(&self) -> [f64; 3] {
        let lo = self.extent_lo();
        [
            lo[0] + self.dims[0] as f64 * self.spacing[0],
            lo[1] + self.dims[1] as f64 * self.spacing[1],
            lo[2] + self.dims[2] as f64 * self.spacing[2],
        ]
    }

    /// Euclidean length (mm) of the grid's world-extent diagonal.
    pub fn diagonal(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            let e = self.dims[a] as f64 * self.spacing[a];
            s += e * e;
        }
        s.sqrt()
    }
}

/// Dense scalar field on a `Grid3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid3,
    /// x-fastest sample buffer, length = product of dims.
    pub samples: Vec<f64>,
}

impl Volume {
    pub fn new(grid: Grid3, samples: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "volume has {} samples for grid of {} voxels",
                samples.len(),
                grid.len()
            )));
        }
        Ok(Volume { grid, samples })
    }

    pub fn filled(grid: Grid3, value: f64) -> Result<Self> {
        let n = grid.len();
        Volume::new(grid, vec![value; n])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.samples[self.grid.index(x, y, z)]
    }
}

/// Dense binary field on a `Grid3`; 0 = background, 1 = foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub grid: Grid3,
    /// x-fastest label buffer; values are exactly 0 or 1.
    pub labels: Vec<u8>,
}

impl Mask {
    pub fn new(grid: Grid3, labels: Vec<u8>) -> Result<Self> {
        grid.validate()?;
        if labels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} labels for grid of {} voxels",
                labels.len(),
                grid.len()
            )));
        }
        if let Some(v) = labels.iter().find(|&&v| v > 1) {
            return Err(Error::ShapeMismatch(format!("mask label {v} is not binary")));
        }
        Ok(Mask { grid, labels })
    }

    pub fn filled(grid: Grid3, value: u8) -> Result<Self> {
        let n = grid.len();
        Mask::new(grid, vec![value; n])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.grid.index(x, y, z)]
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1).count()
    }
}

/// Center crop/pad of a buffer; returns (buffer, crop_lo, pad_lo) per axis.
fn crop_or_pad_buf<T: Copy>(
    dims: [usize; 3],
    buf: &[T],
    target: [usize; 3],
    fill: T,
) -> (Vec<T>, [usize; 3], [usize; 3]) {
    let mut crop_lo = [0usize; 3];
    let mut pad_lo = [0usize; 3];
    for a in 0..3 {
        if target[a] <= dims[a] {
            // extra removed voxel goes to the high-index side
            crop_lo[a] = (dims[a] - target[a]) / 2;
        } else {
            // extra padded voxel goes to the high-index side
            pad_lo[a] = (target[a] - dims[a]) / 2;
        }
    }
    let mut out = vec![fill; target[0] * target[1] * target[2]];
    for tz in 0..target[2] {
        let sz = tz as isize + crop_lo[2] as isize - pad_lo[2] as isize;
        if sz < 0 || sz as usize >= dims[2] {
            continue;
        }
        for ty in 0..target[1] {
            let sy = ty as isize + crop_lo[1] as isize - pad_lo[1] as isize;
            if sy < 0 || sy as usize >= dims[1] {
                continue;
            }
            for tx in 0..target[0] {
                let sx = tx as isize + crop_lo[0] as isize - pad_lo[0] as isize;
                if sx < 0 || sx as usize >= dims[0] {
                    continue;
                }
                out[tx + target[0] * (ty + target[1] * tz)] =
                    buf[sx as usize + dims[0] * (sy as usize + dims[1] * sz as usize)];
            }
        }
    }
    (out, crop_lo, pad_lo)
}

fn shifted_origin(grid: &Grid3, crop_lo: [usize; 3], pad_lo: [usize; 3]) -> [f64; 3] {
    let mut o = grid.origin;
    for a in 0..3 {
        o[a] += (crop_lo[a] as f64 - pad_lo[a] as f64) * grid.spacing[a];
    }
    o
}

/// Center crop (when larger) or symmetric pad with `fill` (when smaller).
///
/// Odd remainders place the extra voxel on the high-index side. The origin is
/// shifted so retained voxels keep their world coordinates.
pub fn crop_or_pad(v: &Volume, target_dims: [usize; 3], fill: f64) -> Result<Volume> {
    if target_dims.iter().any(|&d| d < 1) {
        return Err(Error::InvalidGrid("target dims must be >= 1".into()));
    }
    let (samples, crop_lo, pad_lo) = crop_or_pad_buf(v.grid.dims, &v.samples, target_dims, fill);
    let grid = Grid3 {
        dims: target_dims,
        spacing: v.grid.spacing,
        origin: shifted_origin(&v.grid, crop_lo, pad_lo),
    };
    Volume::new(grid, samples)
}

/// `crop_or_pad` for masks; pads with background.
pub fn crop_or_pad_mask(m: &Mask, target_dims: [usize; 3]) -> Result<Mask> {
    if target_dims.iter().any(|&d| d < 1) {
        return Err(Error::InvalidGrid("target dims must be >= 1".into()));
    }
    let (labels, crop_lo, pad_lo) = crop_or_pad_buf(m.grid.dims, &m.labels, target_dims, 0u8);
    let grid = Grid3 {
        dims: target_dims,
        spacing: m.grid.spacing,
        origin: shifted_origin(&m.grid, crop_lo, pad_lo),
    };
    Mask::new(grid, labels)
}

/// Clamps samples to the [p_lo, p_hi] percentiles and maps them affinely to [0,1].
///
/// Percentiles interpolate linearly between order statistics. A constant
/// volume (equal percentiles) normalizes to all zeros.
pub fn normalize_percentile(v: &Volume, p_lo: f64, p_hi: f64) -> Result<Volume> {
    if !(0.0..=100.0).contains(&p_lo) || !(0.0..=100.0).contains(&p_hi) || p_lo > p_hi {
        return Err(Error::InvalidRate(format!(
            "percentiles ({p_lo}, {p_hi}) must satisfy 0 <= lo <= hi <= 100"
        )));
    }
    let a = crate::stats::percentile_of(&v.samples, p_lo);
    let b = crate::stats::percentile_of(&v.samples, p_hi);
    let samples = if a == b {
        vec![0.0; v.samples.len()]
    } else {
        let scale = b - a;
        v.samples.iter().map(|&s| (s.clamp(a, b) - a) / scale).collect()
    };
    Volume::new(v.grid, samples)
}

/// One random crop offset applied identically to every volume and the mask.
///
/// All inputs must share one grid; `size` must not exceed the grid dims
/// (use `crop_or_pad` to grow smaller inputs first).
pub fn random_crop<R: rand::Rng>(
    vols: &[Volume],
    mask: &Mask,
    size: [usize; 3],
    rng: &mut R,
) -> Result<(Vec<Volume>, Mask)> {
    let grid = mask.grid;
    for v in vols {
        if v.grid != grid {
            return Err(Error::GridMismatch(
                "random_crop inputs must share one grid".into(),
            ));
        }
    }
    for a in 0..3 {
        if size[a] < 1 || size[a] > grid.dims[a] {
            return Err(Error::ShapeMismatch(format!(
                "crop size {} exceeds dims {} on axis {a}",
                size[a], grid.dims[a]
            )));
        }
    }
    let mut lo = [0usize; 3];
    for a in 0..3 {
        lo[a] = rng.gen_range(0..=grid.dims[a] - size[a]);
    }
    let out_grid = Grid3 {
        dims: size,
        spacing: grid.spacing,
        origin: [
            grid.origin[0] + lo[0] as f64 * grid.spacing[0],
            grid.origin[1] + lo[1] as f64 * grid.spacing[1],
            grid.origin[2] + lo[2] as f64 * grid.spacing[2],
        ],
    };
    let copy_region = |buf: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(size[0] * size[1] * size[2]);
        for z in 0..size[2] {
            for y in 0..size[1] {
                let start = grid.index(lo[0], lo[1] + y, lo[2] + z);
                out.extend_from_slice(&buf[start..start + size[0]]);
            }
        }
        out
    };
    let out_vols = vols
        .iter()
        .map(|v| Volume::new(out_grid, copy_region(&v.samples)))
        .collect::<Result<Vec<_>>>()?;
    let mut out_labels = Vec::with_capacity(out_grid.len());
    for z in 0..size[2] {
        for y in 0..size[1] {
            let start = grid.index(lo[0], lo[1] + y, lo[2] + z);
            out_labels.extend_from_slice(&mask.labels[start..start + size[0]]);
        }
    }
    let out_mask = Mask::new(out_grid, out_labels)?;
    Ok((out_vols, out_mask))
}
