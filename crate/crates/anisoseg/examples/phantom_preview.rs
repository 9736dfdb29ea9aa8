//! Renders a synthetic phantom and its three anisotropic scans as ASCII.
//!
//! The sagittal view through the gland center shows the partial-volume
//! blur each thick-slice acquisition introduces along its own slice axis.

use anisoseg::network::Orientation;
use anisoseg::phantom::{generate_phantom, simulate_acquisition, AcquisitionSpec, PhantomSpec};
use anisoseg::volume::{sample_linear_world, Volume};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHADES: &[u8] = b" .:-=+*#%@";

/// ASCII sagittal section: world (y, z) plane at fixed x, nearest sampling.
fn render_yz(v: &Volume, x_mm: f64, rows: usize, cols: usize) {
    let lo = v.grid.extent_lo();
    let hi = v.grid.extent_hi();
    for r in 0..rows {
        let z = lo[2] + (hi[2] - lo[2]) * (r as f64 + 0.5) / rows as f64;
        let mut line = String::with_capacity(cols);
        for c in 0..cols {
            let y = lo[1] + (hi[1] - lo[1]) * (c as f64 + 0.5) / cols as f64;
            let s = sample_linear_world(v, [x_mm, y, z]).clamp(0.0, 1.0);
            let shade = ((s * (SHADES.len() - 1) as f64).round()) as usize;
            line.push(SHADES[shade] as char);
        }
        println!("  {line}");
    }
}

fn main() -> anisoseg::Result<()> {
    let spec = PhantomSpec {
        dims: [48, 48, 48],
        radii_mm: [8.0, 7.0, 6.0],
        deformation_mm: 1.2,
        ..PhantomSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (volume, truth) = generate_phantom(&spec, &mut rng)?;
    let center = 0.5 * spec.dims[0] as f64 * spec.spacing_mm;
    println!(
        "isotropic phantom {:?} at {} mm, gland {} voxels:",
        spec.dims,
        spec.spacing_mm,
        truth.foreground_count()
    );
    render_yz(&volume, center, 24, 48);

    for orientation in [Orientation::Axial, Orientation::Sagittal, Orientation::Coronal] {
        let acq = AcquisitionSpec {
            noise_sigma: 0.02,
            ..AcquisitionSpec::standard(orientation)
        };
        let scan = simulate_acquisition(&volume, &acq, &mut rng)?;
        println!(
            "\n{} scan, dims {:?}, spacing {:?} mm:",
            orientation.name(),
            scan.grid.dims,
            scan.grid.spacing
        );
        render_yz(&scan, center, 24, 48);
    }
    Ok(())
}
