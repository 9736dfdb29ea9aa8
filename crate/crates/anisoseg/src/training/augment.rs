//! Spatial data augmentation shared across input streams and the mask.
//!
//! One transform is drawn per example and applied to every stream volume and
//! the target mask. The transform is defined in world coordinates, so grids
//! with different spacings (the anisotropic streams) see the same motion.
//! Components: left-right (x) flips, in-plane rotations about the world z
//! axis, translations in integer multiples of a configured step, and elastic
//! deformation from a coarse displacement lattice. Volumes are resampled
//! trilinearly, masks by nearest neighbor; positions outside the source grid
//! read as background.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid3, Mask, Volume};

/// Enable flags and ranges for the augmentation families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Left-right mirroring with probability 1/2 (top-bottom and
    /// front-back flips are deliberately not offered).
    pub axial_flip: bool,
    /// In-plane rotation range in degrees; 0 disables.
    pub max_rotation_deg: f64,
    /// World step of one translation unit; must be an integer number of
    /// voxels on every grid it is applied to.
    pub translation_step_mm: [f64; 3],
    /// Maximum translation in steps per axis; 0 disables.
    pub max_translation_steps: i64,
    /// Elastic displacement bound in mm; 0 disables.
    pub elastic_max_mm: f64,
}

impl AugmentationSpec {
    /// No-op configuration.
    pub fn identity() -> AugmentationSpec {
        AugmentationSpec {
            axial_flip: false,
            max_rotation_deg: 0.0,
            translation_step_mm: [1.0, 1.0, 1.0],
            max_translation_steps: 0,
            elastic_max_mm: 0.0,
        }
    }

    /// Default mix; `coarse_mm` is the thick-axis spacing, so translations
    /// stay integer on thin and thick grids alike.
    pub fn standard(coarse_mm: f64) -> AugmentationSpec {
        AugmentationSpec {
            axial_flip: true,
            max_rotation_deg: 10.0,
            translation_step_mm: [coarse_mm; 3],
            max_translation_steps: 2,
            elastic_max_mm: coarse_mm / 2.0,
        }
    }
}

/// Nodes per axis of the elastic displacement lattice.
pub const ELASTIC_NODES: usize = 4;

/// Coarse displacement lattice; values in mm, indexed x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticField {
    pub disp_mm: Vec<[f64; 3]>,
}

impl ElasticField {
    /// Displacement at a normalized position (each axis in [0, 1]).
    pub fn displacement(&self, u: [f64; 3]) -> [f64; 3] {
        let n = ELASTIC_NODES;
        let mut i0 = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let pos = u[a].clamp(0.0, 1.0) * (n - 1) as f64;
            i0[a] = (pos.floor() as usize).min(n - 2);
            frac[a] = pos - i0[a] as f64;
        }
        let mut out = [0.0; 3];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let w = (if dx == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if dy == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if dz == 0 { 1.0 - frac[2] } else { frac[2] });
                    let node =
                        (i0[0] + dx) + n * ((i0[1] + dy) + n * (i0[2] + dz));
                    for a in 0..3 {
                        out[a] += w * self.disp_mm[node][a];
                    }
                }
            }
        }
        out
    }
}

/// One drawn transform, reusable across grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTransform {
    pub flip_x: bool,
    pub rotation_rad: f64,
    pub translation_steps: [i64; 3],
    pub translation_step_mm: [f64; 3],
    pub elastic: Option<ElasticField>,
}

impl SpatialTransform {
    pub fn identity() -> SpatialTransform {
        SpatialTransform {
            flip_x: false,
            rotation_rad: 0.0,
            translation_steps: [0; 3],
            translation_step_mm: [1.0, 1.0, 1.0],
            elastic: None,
        }
    }
}

/// Draws one transform from the spec's enabled families.
pub fn draw_transform(spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> SpatialTransform {
    let flip_x = spec.axial_flip && rng.gen_bool(0.5);
    let rotation_rad = if spec.max_rotation_deg > 0.0 {
        rng.gen_range(-spec.max_rotation_deg..=spec.max_rotation_deg)
            .to_radians()
    } else {
        0.0
    };
    let mut translation_steps = [0i64; 3];
    if spec.max_translation_steps > 0 {
        for t in &mut translation_steps {
            *t = rng.gen_range(-spec.max_translation_steps..=spec.max_translation_steps);
        }
    }
    let elastic = if spec.elastic_max_mm > 0.0 {
        let m = spec.elastic_max_mm;
        let disp_mm = (0..ELASTIC_NODES.pow(3))
            .map(|_| [rng.gen_range(-m..=m), rng.gen_range(-m..=m), rng.gen_range(-m..=m)])
            .collect();
        Some(ElasticField { disp_mm })
    } else {
        None
    };
    SpatialTransform {
        flip_x,
        rotation_rad,
        translation_steps,
        translation_step_mm: spec.translation_step_mm,
        elastic,
    }
}

/// Per-grid constants of one transform application.
struct GridPlan {
    /// Integer voxels per translation step on this grid.
    vox_per_step: [i64; 3],
    /// World center (mm) of the grid's extent, the rotation pivot.
    center_mm: [f64; 3],
    lo_mm: [f64; 3],
    size_mm: [f64; 3],
}

impl GridPlan {
    fn new(t: &SpatialTransform, grid: &Grid3) -> Result<GridPlan> {
        let mut vox_per_step = [0i64; 3];
        for a in 0..3 {
            let ratio = t.translation_step_mm[a] / grid.spacing[a];
            let snapped = ratio.round();
            if t.translation_steps[a] != 0 && ((ratio - snapped).abs() > 1e-9 || snapped < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "translation step {} mm is not an integer voxel count at spacing {} mm",
                    t.translation_step_mm[a], grid.spacing[a]
                )));
            }
            vox_per_step[a] = snapped as i64;
        }
        let lo = grid.extent_lo();
        let hi = grid.extent_hi();
        Ok(GridPlan {
            vox_per_step,
            center_mm: [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a])),
            lo_mm: lo,
            size_mm: [0, 1, 2].map(|a| hi[a] - lo[a]),
        })
    }

    /// Source voxel coordinate sampled for output voxel `out`.
    fn source(&self, t: &SpatialTransform, grid: &Grid3, out: [usize; 3]) -> [f64; 3] {
        let mut p = [out[0] as f64, out[1] as f64, out[2] as f64];
        if t.flip_x {
            p[0] = (grid.dims[0] - 1) as f64 - p[0];
        }
        if t.rotation_rad != 0.0 {
            // rotate about the world z axis around the extent center
            let dx = p[0] * grid.spacing[0] + grid.origin[0] - self.center_mm[0];
            let dy = p[1] * grid.spacing[1] + grid.origin[1] - self.center_mm[1];
            let (sin, cos) = t.rotation_rad.sin_cos();
            let rx = cos * dx + sin * dy;
            let ry = -sin * dx + cos * dy;
            p[0] = (self.center_mm[0] + rx - grid.origin[0]) / grid.spacing[0];
            p[1] = (self.center_mm[1] + ry - grid.origin[1]) / grid.spacing[1];
        }
        for a in 0..3 {
            let shift = t.translation_steps[a] * self.vox_per_step[a];
            p[a] -= shift as f64;
        }
        if let Some(field) = &t.elastic {
            // field position from the undistorted output voxel, world-normalized
            let u = [0, 1, 2].map(|a| {
                let w = out[a] as f64 * grid.spacing[a] + grid.origin[a];
                (w - self.lo_mm[a]) / self.size_mm[a]
            });
            let d = field.displacement(u);
            for a in 0..3 {
                p[a] += d[a] / grid.spacing[a];
            }
        }
        p
    }
}

/// Trilinear sample at a fractional voxel coordinate; outside reads 0.
fn sample_trilinear(v: &Volume, p: [f64; 3]) -> f64 {
    let base = [p[0].floor(), p[1].floor(), p[2].floor()];
    let frac = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if dy == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if dz == 0 { 1.0 - frac[2] } else { frac[2] });
                if w == 0.0 {
                    continue;
                }
                let ix = base[0] as i64 + dx as i64;
                let iy = base[1] as i64 + dy as i64;
                let iz = base[2] as i64 + dz as i64;
                if ix < 0
                    || iy < 0
                    || iz < 0
                    || ix >= v.grid.dims[0] as i64
                    || iy >= v.grid.dims[1] as i64
                    || iz >= v.grid.dims[2] as i64
                {
                    continue;
                }
                acc += w * v.at(ix as usize, iy as usize, iz as usize);
            }
        }
    }
    acc
}

/// Nearest-neighbor label sample; outside reads background.
fn sample_nearest(m: &Mask, p: [f64; 3]) -> u8 {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let r = p[a].round();
        if r < 0.0 || r >= m.grid.dims[a] as f64 {
            return 0;
        }
        idx[a] = r as usize;
    }
    m.at(idx[0], idx[1], idx[2])
}

/// Applies the transform to a scalar volume (trilinear resampling).
pub fn apply_to_volume(t: &SpatialTransform, v: &Volume) -> Result<Volume> {
    let plan = GridPlan::new(t, &v.grid)?;
    let [nx, ny, nz] = v.grid.dims;
    let mut samples = vec![0.0; v.samples.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = plan.source(t, &v.grid, [x, y, z]);
                samples[v.grid.index(x, y, z)] = sample_trilinear(v, p);
            }
        }
    }
    Ok(Volume { grid: v.grid, samples })
}

/// Applies the transform to a label mask (nearest-neighbor resampling).
pub fn apply_to_mask(t: &SpatialTransform, m: &Mask) -> Result<Mask> {
    let plan = GridPlan::new(t, &m.grid)?;
    let [nx, ny, nz] = m.grid.dims;
    let mut labels = vec![0u8; m.labels.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = plan.source(t, &m.grid, [x, y, z]);
                labels[m.grid.index(x, y, z)] = sample_nearest(m, p);
            }
        }
    }
    Ok(Mask { grid: m.grid, labels })
}

/// Draws one transform and applies it to every stream and the mask.
pub fn augment(
    vols: &[Volume],
    mask: &Mask,
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Volume>, Mask)> {
    let t = draw_transform(spec, rng);
    let out_vols = vols
        .iter()
        .map(|v| apply_to_volume(&t, v))
        .collect::<Result<Vec<_>>>()?;
    let out_mask = apply_to_mask(&t, mask)?;
    Ok((out_vols, out_mask))
}
