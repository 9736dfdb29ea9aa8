//! Synthetic anisotropic phantoms: ground-truth generation and scan
//! simulation.
//!
//! A phantom is a smoothly deformed ellipsoid ("gland") in a uniform
//! background, defined on an isotropic grid. Scans are simulated per
//! acquisition orientation by box-averaging over slabs of one slice
//! thickness along the orientation's thick axis — the partial-volume
//! mechanism that makes thick-slice boundaries ambiguous — then adding
//! noise and an optional rigid misalignment of the subject.

pub mod experiment;
pub mod report;
#[cfg(test)]
mod tests;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Orientation;
use crate::training::augment::{ElasticField, ELASTIC_NODES};
use crate::volume::{sample_linear_world, Grid3, Mask, Volume};

/// Ground-truth phantom: grid, gland geometry, and intensity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    /// Isotropic grid dimensions (x, y, z).
    pub dims: [usize; 3],
    /// Isotropic voxel edge in mm.
    pub spacing_mm: f64,
    /// Ellipsoid semi-axes in mm before deformation.
    pub radii_mm: [f64; 3],
    /// Max per-axis displacement (mm) of the smooth deformation field.
    pub deformation_mm: f64,
    /// Mean intensity inside the gland.
    pub gland_mean: f64,
    /// Mean intensity of the background.
    pub background_mean: f64,
    /// Additive Gaussian texture noise sigma.
    pub texture_sigma: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [64, 64, 64],
            spacing_mm: 0.5,
            radii_mm: [10.0, 9.0, 8.0],
            deformation_mm: 1.5,
            gland_mean: 0.75,
            background_mean: 0.25,
            texture_sigma: 0.03,
        }
    }
}

impl PhantomSpec {
    /// Isotropic grid of this phantom.
    pub fn grid(&self) -> Result<Grid3> {
        Grid3::isotropic(self.dims, self.spacing_mm)
    }

    /// Checks positivity and the two-voxel field-of-view margin.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if !(self.deformation_mm >= 0.0) || !(self.texture_sigma >= 0.0) {
            return Err(Error::InvalidConfig(
                "deformation and texture sigma must be >= 0".into(),
            ));
        }
        if !self.gland_mean.is_finite() || !self.background_mean.is_finite() {
            return Err(Error::InvalidConfig("intensity means must be finite".into()));
        }
        for a in 0..3 {
            if !(self.radii_mm[a] > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "radius {a} must be > 0, got {}",
                    self.radii_mm[a]
                )));
            }
            let half_extent = grid.dims[a] as f64 * grid.spacing[a] / 2.0;
            let reach = self.radii_mm[a] + self.deformation_mm;
            if reach > half_extent - 2.0 * grid.spacing[a] {
                return Err(Error::InvalidConfig(format!(
                    "gland reach {reach} mm on axis {a} leaves less than a \
                     2-voxel margin inside the {half_extent} mm half-extent"
                )));
            }
        }
        Ok(())
    }
}

/// Generates the isotropic ground-truth volume and mask.
///
/// The gland interior is the set of points p with ||(p + d(p) - c) / r|| <= 1,
/// where d is a smooth displacement field interpolated from a coarse lattice
/// of draws in [-deformation, +deformation] mm. Deterministic per rng state.
pub fn generate_phantom(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<(Volume, Mask)> {
    spec.validate()?;
    let grid = spec.grid()?;
    // lattice draws come first so voxel noise cannot shift the geometry
    let disp_mm: Vec<[f64; 3]> = (0..ELASTIC_NODES.pow(3))
        .map(|_| {
            let mut d = [0.0; 3];
            for v in &mut d {
                *v = rng.gen_range(-spec.deformation_mm..=spec.deformation_mm);
            }
            d
        })
        .collect();
    let field = ElasticField { disp_mm };
    let lo = grid.extent_lo();
    let hi = grid.extent_hi();
    let center = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let mut samples = Vec::with_capacity(grid.len());
    let mut labels = Vec::with_capacity(grid.len());
    for z in 0..grid.dims[2] {
        for y in 0..grid.dims[1] {
            for x in 0..grid.dims[0] {
                let p = grid.world(x, y, z);
                let u = [
                    (p[0] - lo[0]) / (hi[0] - lo[0]),
                    (p[1] - lo[1]) / (hi[1] - lo[1]),
                    (p[2] - lo[2]) / (hi[2] - lo[2]),
                ];
                let d = field.displacement(u);
                let mut rho = 0.0;
                for a in 0..3 {
                    let t = (p[a] + d[a] - center[a]) / spec.radii_mm[a];
                    rho += t * t;
                }
                let inside = rho <= 1.0;
                labels.push(u8::from(inside));
                samples.push(if inside { spec.gland_mean } else { spec.background_mean });
            }
        }
    }
    if spec.texture_sigma > 0.0 {
        for s in &mut samples {
            let n: f64 = rng.sample(StandardNormal);
            *s += spec.texture_sigma * n;
        }
    }
    Ok((Volume::new(grid, samples)?, Mask::new(grid, labels)?))
}

/// Rigid subject motion applied to one scan: translation plus an in-plane
/// rotation about the world z axis at the field-of-view center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidMisalignment {
    pub translation_mm: [f64; 3],
    pub rotation_deg: f64,
}

/// One simulated acquisition: orientation, resolution, noise, misalignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    pub orientation: Orientation,
    /// In-plane spacing in mm.
    pub in_plane_mm: f64,
    /// Slice thickness (thick-axis spacing) in mm.
    pub slice_thickness_mm: f64,
    /// Additive Gaussian noise sigma on the acquired samples.
    pub noise_sigma: f64,
    pub misalignment: Option<RigidMisalignment>,
}

impl AcquisitionSpec {
    /// Clinical default: 0.5 mm in-plane, 2 mm slices, clean, aligned.
    pub fn standard(orientation: Orientation) -> AcquisitionSpec {
        AcquisitionSpec {
            orientation,
            in_plane_mm: 0.5,
            slice_thickness_mm: 2.0,
            noise_sigma: 0.0,
            misalignment: None,
        }
    }

    /// Checks resolution positivity and anisotropy >= 1.
    pub fn validate(&self) -> Result<()> {
        if !(self.in_plane_mm > 0.0) || !self.in_plane_mm.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "in-plane spacing must be > 0, got {}",
                self.in_plane_mm
            )));
        }
        if self.slice_thickness_mm < self.in_plane_mm {
            return Err(Error::InvalidConfig(format!(
                "slice thickness {} mm is below the in-plane spacing {} mm \
                 (anisotropy must be >= 1)",
                self.slice_thickness_mm, self.in_plane_mm
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Acquisition grid covering the source extent: in-plane spacing on the thin
/// axes, slice thickness on the thick axis, voxel centers inside the extent.
pub fn acquisition_grid(iso: &Grid3, acq: &AcquisitionSpec) -> Result<Grid3> {
    acq.validate()?;
    let thick = acq.orientation.thick_axis();
    let lo = iso.extent_lo();
    let hi = iso.extent_hi();
    let mut dims = [0usize; 3];
    let mut spacing = [0.0; 3];
    let mut origin = [0.0; 3];
    for a in 0..3 {
        spacing[a] = if a == thick { acq.slice_thickness_mm } else { acq.in_plane_mm };
        dims[a] = (((hi[a] - lo[a]) / spacing[a]).round() as usize).max(1);
        origin[a] = lo[a] + spacing[a] / 2.0;
    }
    Grid3::new(dims, spacing, origin)
}

/// Simulates one scan of an isotropic volume.
///
/// Each output voxel is the mean of one slab of sub-samples along the thick
/// axis (box slice profile); sub-sample spacing matches the source grid, so
/// aligned grids average source voxels exactly. Noise and misalignment draws
/// are deterministic per rng state.
pub fn simulate_acquisition(
    iso: &Volume,
    acq: &AcquisitionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Volume> {
    acq.validate()?;
    for a in 0..3 {
        if iso.grid.spacing[a] > acq.in_plane_mm + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "source spacing {} mm on axis {a} is coarser than the \
                 in-plane target {} mm",
                iso.grid.spacing[a], acq.in_plane_mm
            )));
        }
    }
    let target = acquisition_grid(&iso.grid, acq)?;
    let thick = acq.orientation.thick_axis();
    let t = acq.slice_thickness_mm;
    let subs = ((t / iso.grid.spacing[thick]).round() as usize).max(1);
    let lo = iso.grid.extent_lo();
    let hi = iso.grid.extent_hi();
    let center = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let map = |p: [f64; 3]| -> [f64; 3] {
        match &acq.misalignment {
            None => p,
            Some(m) => {
                let theta = m.rotation_deg.to_radians();
                let (s, c) = theta.sin_cos();
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                [
                    center[0] + c * dx - s * dy + m.translation_mm[0],
                    center[1] + s * dx + c * dy + m.translation_mm[1],
                    p[2] + m.translation_mm[2],
                ]
            }
        }
    };
    let mut samples = Vec::with_capacity(target.len());
    for z in 0..target.dims[2] {
        for y in 0..target.dims[1] {
            for x in 0..target.dims[0] {
                let w = target.world(x, y, z);
                let mut acc = 0.0;
                for j in 0..subs {
                    let mut p = w;
                    p[thick] = w[thick] - t / 2.0 + (j as f64 + 0.5) * t / subs as f64;
                    acc += sample_linear_world(iso, map(p));
                }
                samples.push(acc / subs as f64);
            }
        }
    }
    if acq.noise_sigma > 0.0 {
        for s in &mut samples {
            let n: f64 = rng.sample(StandardNormal);
            *s += acq.noise_sigma * n;
        }
    }
    Volume::new(target, samples)
}
