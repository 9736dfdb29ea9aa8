//! Grid resampling and world-extent intersection.
//!
//! Scalars resample with trilinear interpolation, labels with nearest
//! neighbour. Points outside the source extent clamp to the border value.

use super::{Grid3, Mask, Volume};
use crate::error::{Error, Result};

/// Continuous voxel coordinate of world point `p`, clamped to the grid.
#[inline]
fn continuous_index(grid: &Grid3, p: [f64; 3]) -> [f64; 3] {
    let mut q = [0.0; 3];
    for a in 0..3 {
        let raw = (p[a] - grid.origin[a]) / grid.spacing[a];
        q[a] = raw.clamp(0.0, (grid.dims[a] - 1) as f64);
    }
    q
}

#[inline]
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + f * (b - a)
}

/// Trilinear sample of `v` at world point `p` (mm), border-clamped.
///
/// Interpolates by nested lerp along x, then y, then z, which is exact on
/// constant fields and at integer voxel coordinates.
pub fn sample_linear_world(v: &Volume, p: [f64; 3]) -> f64 {
    let g = &v.grid;
    let q = continuous_index(g, p);
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut f = [0.0; 3];
    for a in 0..3 {
        let fl = q[a].floor();
        i0[a] = fl as usize;
        i1[a] = (i0[a] + 1).min(g.dims[a] - 1);
        f[a] = q[a] - fl;
    }
    let at = |x: usize, y: usize, z: usize| v.samples[g.index(x, y, z)];
    let c00 = lerp(at(i0[0], i0[1], i0[2]), at(i1[0], i0[1], i0[2]), f[0]);
    let c10 = lerp(at(i0[0], i1[1], i0[2]), at(i1[0], i1[1], i0[2]), f[0]);
    let c01 = lerp(at(i0[0], i0[1], i1[2]), at(i1[0], i0[1], i1[2]), f[0]);
    let c11 = lerp(at(i0[0], i1[1], i1[2]), at(i1[0], i1[1], i1[2]), f[0]);
    let c0 = lerp(c00, c10, f[1]);
    let c1 = lerp(c01, c11, f[1]);
    lerp(c0, c1, f[2])
}

/// Nearest-center sample of `m` at world point `p` (mm), border-clamped.
///
/// Per-axis rounding; exact half distances round to the higher index.
pub fn sample_nearest_world(m: &Mask, p: [f64; 3]) -> u8 {
    let g = &m.grid;
    let q = continuous_index(g, p);
    let mut i = [0usize; 3];
    for a in 0..3 {
        i[a] = ((q[a] + 0.5).floor() as usize).min(g.dims[a] - 1);
    }
    m.labels[g.index(i[0], i[1], i[2])]
}

/// Resamples `src` onto `target` by trilinear interpolation at voxel centers.
pub fn resample_linear(src: &Volume, target: &Grid3) -> Result<Volume> {
    target.validate()?;
    if *target == src.grid {
        return Ok(src.clone()); // identity fast path: bitwise-equal samples
    }
    let mut samples = Vec::with_capacity(target.len());
    for z in 0..target.dims[2] {
        for y in 0..target.dims[1] {
            for x in 0..target.dims[0] {
                samples.push(sample_linear_world(src, target.world(x, y, z)));
            }
        }
    }
    Volume::new(*target, samples)
}

/// Resamples a mask onto `target` by nearest-neighbour lookup; stays binary.
pub fn resample_nearest(src: &Mask, target: &Grid3) -> Result<Mask> {
    target.validate()?;
    if *target == src.grid {
        return Ok(src.clone());
    }
    let mut labels = Vec::with_capacity(target.len());
    for z in 0..target.dims[2] {
        for y in 0..target.dims[1] {
            for x in 0..target.dims[0] {
                labels.push(sample_nearest_world(src, target.world(x, y, z)));
            }
        }
    }
    Mask::new(*target, labels)
}

/// Grid covering the intersection of all world extents at `spacing`.
///
/// dims = floor(intersection extent / spacing) per axis; the first voxel
/// center sits half a voxel inside the intersection's low edge.
pub fn intersect_grids(grids: &[Grid3], spacing: [f64; 3]) -> Result<Grid3> {
    if grids.is_empty() {
        return Err(Error::EmptyInput("intersect_grids needs >= 1 grid".into()));
    }
    for g in grids {
        g.validate()?;
    }
    let mut lo = grids[0].extent_lo();
    let mut hi = grids[0].extent_hi();
    for g in &grids[1..] {
        let glo = g.extent_lo();
        let ghi = g.extent_hi();
        for a in 0..3 {
            lo[a] = lo[a].max(glo[a]);
            hi[a] = hi[a].min(ghi[a]);
        }
    }
    let mut dims = [0usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..3 {
        if !(spacing[a] > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing[{a}] must be > 0")));
        }
        let ext = hi[a] - lo[a];
        if ext <= 0.0 {
            return Err(Error::NoOverlap { axis: a });
        }
        let n = (ext / spacing[a]).floor() as usize;
        if n < 1 {
            return Err(Error::NoOverlap { axis: a });
        }
        dims[a] = n;
        origin[a] = lo[a] + 0.5 * spacing[a];
    }
    Grid3::new(dims, spacing, origin)
}
