//! Volumetric overlap and surface-distance metrics with regional breakdown.
//!
//! Compares a shifted prediction against an ellipsoid reference, prints the
//! whole/apex/mid/base table, and runs the exact Wilcoxon signed-rank test
//! on paired per-case scores.

use std::io;

use anisoseg::metrics::wilcoxon::{wilcoxon_signed_rank, Alternative};
use anisoseg::metrics::{regional_metrics, write_reports_csv};
use anisoseg::volume::{Grid3, Mask};

/// Ellipsoid mask centered at `c` mm with semi-axes `r` mm.
fn ellipsoid(grid: Grid3, c: [f64; 3], r: [f64; 3]) -> Mask {
    let mut labels = vec![0u8; grid.len()];
    for z in 0..grid.dims[2] {
        for y in 0..grid.dims[1] {
            for x in 0..grid.dims[0] {
                let p = grid.world(x, y, z);
                let rho: f64 = (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum();
                if rho <= 1.0 {
                    labels[grid.index(x, y, z)] = 1;
                }
            }
        }
    }
    Mask::new(grid, labels).expect("labels are binary")
}

fn main() -> anisoseg::Result<()> {
    let grid = Grid3::isotropic([40, 40, 40], 0.5)?;
    let reference = ellipsoid(grid, [10.0, 10.0, 10.0], [6.0, 5.0, 4.5]);
    // The prediction is the same shape shifted 1 mm toward the base (high z).
    let prediction = ellipsoid(grid, [10.0, 10.0, 11.0], [6.0, 5.0, 4.5]);

    let report = regional_metrics(&prediction, &reference, "shifted", true)?;
    write_reports_csv(std::slice::from_ref(&report), io::stdout())?;
    println!(
        "a 1 mm shift costs more DSC at the apex ({:.3}) than mid-gland ({:.3})",
        report.apex.dsc, report.mid.dsc
    );

    // Paired per-case scores: approach B is consistently slightly better.
    let a = [0.91, 0.89, 0.93, 0.90, 0.88, 0.92, 0.90, 0.91, 0.89, 0.93];
    let b = [0.93, 0.90, 0.94, 0.92, 0.91, 0.92, 0.93, 0.92, 0.91, 0.95];
    let test = wilcoxon_signed_rank(&b, &a, Alternative::Greater)?;
    println!(
        "Wilcoxon signed-rank (n = {}): W+ = {}, exact one-sided p = {:.5}",
        test.n_used, test.w_plus, test.p_value
    );
    Ok(())
}
