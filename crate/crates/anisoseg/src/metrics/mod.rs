//! Volumetric overlap and surface-distance metrics with regional breakdown.
//!
//! Surfaces are extracted as foreground voxels with at least one background
//! 6-neighbor; the volume border counts as background. Surface points are
//! voxel centers in world millimeters, so all distance metrics are reported
//! in millimeters. The regional partition splits the reference foreground's
//! z-extent into thirds (apex / mid / base), assigning remainder slices to
//! the apex first, then the base.

pub mod nn;
pub mod wilcoxon;

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{Grid3, Mask};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub use nn::{directed_distances, PointIndex};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, TestMethod, WilcoxonResult};

/// Dice similarity coefficient of two masks on the same grid.
///
/// Both masks empty yields 1.0; exactly one empty yields 0.0.
pub fn dsc(x: &Mask, y: &Mask) -> Result<f64> {
    if x.grid != y.grid {
        return Err(Error::GridMismatch("dsc over differing grids".into()));
    }
    let mut inter = 0u64;
    let mut nx = 0u64;
    let mut ny = 0u64;
    for (a, b) in x.labels.iter().zip(&y.labels) {
        nx += *a as u64;
        ny += *b as u64;
        inter += (*a & *b) as u64;
    }
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (nx + ny) as f64)
}

/// Surface voxel centers of a mask, in world millimeters.
#[derive(Debug, Clone)]
pub struct SurfacePointSet {
    pub points: Vec<[f64; 3]>,
}

/// Extracts the surface of `mask`: foreground voxels with a background
/// 6-neighbor (voxels on the volume border always qualify).
pub fn surface_points(mask: &Mask) -> Result<SurfacePointSet> {
    let [nx, ny, nz] = mask.grid.dims;
    let at = |x: i64, y: i64, z: i64| -> u8 {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            0
        } else {
            mask.labels[mask.grid.index(x as usize, y as usize, z as usize)]
        }
    };
    let mut points = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.labels[mask.grid.index(x, y, z)] == 0 {
                    continue;
                }
                let (xi, yi, zi) = (x as i64, y as i64, z as i64);
                let boundary = at(xi - 1, yi, zi) == 0
                    || at(xi + 1, yi, zi) == 0
                    || at(xi, yi - 1, zi) == 0
                    || at(xi, yi + 1, zi) == 0
                    || at(xi, yi, zi - 1) == 0
                    || at(xi, yi, zi + 1) == 0;
                if boundary {
                    points.push(mask.grid.world(x, y, z));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(SurfacePointSet { points })
}

/// Average boundary distance: symmetric sum of directed nearest-neighbor
/// distances normalized by the total number of surface points.
pub fn abd(xs: &SurfacePointSet, ys: &SurfacePointSet) -> Result<f64> {
    if xs.points.is_empty() || ys.points.is_empty() {
        return Err(Error::EmptySurface);
    }
    let fwd: f64 = directed_distances(&xs.points, &ys.points).iter().sum();
    let bwd: f64 = directed_distances(&ys.points, &xs.points).iter().sum();
    Ok((fwd + bwd) / (xs.points.len() + ys.points.len()) as f64)
}

/// 95th-percentile Hausdorff distance: the larger of the two directed
/// 95th-percentile nearest-neighbor distances.
pub fn hd95(xs: &SurfacePointSet, ys: &SurfacePointSet) -> Result<f64> {
    if xs.points.is_empty() || ys.points.is_empty() {
        return Err(Error::EmptySurface);
    }
    let mut fwd = directed_distances(&xs.points, &ys.points);
    let mut bwd = directed_distances(&ys.points, &xs.points);
    fwd.sort_by(f64::total_cmp);
    bwd.sort_by(f64::total_cmp);
    let p_fwd = stats::percentile_linear(&fwd, 95.0);
    let p_bwd = stats::percentile_linear(&bwd, 95.0);
    Ok(p_fwd.max(p_bwd))
}

/// Half-open z-slice ranges of the apex / mid / base thirds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub apex: [usize; 2],
    pub mid: [usize; 2],
    pub base: [usize; 2],
}

/// Region labels used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Whole,
    Apex,
    Mid,
    Base,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Apex => "apex",
            Region::Mid => "mid",
            Region::Base => "base",
        }
    }
}

/// Splits the reference mask's foreground z-extent into thirds.
///
/// Remainder slices go to the apex first, then the base. `apex_at_low_z`
/// selects which end of the z-axis is the apex.
pub fn partition_regions(reference: &Mask, apex_at_low_z: bool) -> Result<RegionPartition> {
    let [nx, ny, nz] = reference.grid.dims;
    let mut z_min = None;
    let mut z_max = 0usize;
    for z in 0..nz {
        let any = (0..ny).any(|y| {
            (0..nx).any(|x| reference.labels[reference.grid.index(x, y, z)] != 0)
        });
        if any {
            if z_min.is_none() {
                z_min = Some(z);
            }
            z_max = z;
        }
    }
    let z_min = z_min.ok_or(Error::DegeneratePartition { extent: 0 })?;
    let extent = z_max - z_min + 1;
    if extent < 3 {
        return Err(Error::DegeneratePartition { extent });
    }
    let n = extent / 3;
    let r = extent % 3;
    let apex_n = n + usize::from(r >= 1);
    let mid_n = n;
    let base_n = n + usize::from(r == 2);
    let (apex, mid, base) = if apex_at_low_z {
        let a = [z_min, z_min + apex_n];
        let m = [a[1], a[1] + mid_n];
        let b = [m[1], m[1] + base_n];
        (a, m, b)
    } else {
        let b = [z_min, z_min + base_n];
        let m = [b[1], b[1] + mid_n];
        let a = [m[1], m[1] + apex_n];
        (a, m, b)
    };
    debug_assert_eq!(apex[1].max(mid[1]).max(base[1]), z_max + 1);
    Ok(RegionPartition { apex, mid, base })
}

/// Why a metric value is missing or pinned for a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricFlag {
    Ok,
    EmptyPred,
    EmptyRef,
    EmptyBoth,
}

impl MetricFlag {
    pub fn name(self) -> &'static str {
        match self {
            MetricFlag::Ok => "ok",
            MetricFlag::EmptyPred => "empty_pred",
            MetricFlag::EmptyRef => "empty_ref",
            MetricFlag::EmptyBoth => "empty_both",
        }
    }
}

/// Metrics for one region; distances are undefined when either side is empty.
#[derive(Debug, Clone)]
pub struct RegionMetrics {
    pub dsc: f64,
    pub abd_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub flag: MetricFlag,
}

/// Whole-volume plus per-region metrics for one case.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub case_id: String,
    pub whole: RegionMetrics,
    pub apex: RegionMetrics,
    pub mid: RegionMetrics,
    pub base: RegionMetrics,
}

impl MetricsReport {
    /// Region rows in report order.
    pub fn rows(&self) -> [(Region, &RegionMetrics); 4] {
        [
            (Region::Whole, &self.whole),
            (Region::Apex, &self.apex),
            (Region::Mid, &self.mid),
            (Region::Base, &self.base),
        ]
    }
}

/// Restricts a mask to a half-open z-slice range, keeping world coordinates.
fn crop_z(mask: &Mask, range: [usize; 2]) -> Mask {
    let [nx, ny, _] = mask.grid.dims;
    let nz = range[1] - range[0];
    let mut origin = mask.grid.origin;
    origin[2] += range[0] as f64 * mask.grid.spacing[2];
    let grid = Grid3::new([nx, ny, nz], mask.grid.spacing, origin)
        .expect("z-slice of a valid grid stays valid");
    let plane = nx * ny;
    let labels = mask.labels[range[0] * plane..range[1] * plane].to_vec();
    Mask::new(grid, labels).expect("slice of a valid mask stays binary")
}

fn region_metrics_for(pred: &Mask, reference: &Mask) -> RegionMetrics {
    let pred_empty = pred.labels.iter().all(|&v| v == 0);
    let ref_empty = reference.labels.iter().all(|&v| v == 0);
    let flag = match (pred_empty, ref_empty) {
        (false, false) => MetricFlag::Ok,
        (true, false) => MetricFlag::EmptyPred,
        (false, true) => MetricFlag::EmptyRef,
        (true, true) => MetricFlag::EmptyBoth,
    };
    let dsc_value = dsc(pred, reference).expect("grids already checked");
    if pred_empty || ref_empty {
        return RegionMetrics {
            dsc: dsc_value,
            abd_mm: None,
            hd95_mm: None,
            flag,
        };
    }
    let ps = surface_points(pred).expect("nonempty mask has a surface");
    let rs = surface_points(reference).expect("nonempty mask has a surface");
    RegionMetrics {
        dsc: dsc_value,
        abd_mm: Some(abd(&ps, &rs).expect("both surfaces nonempty")),
        hd95_mm: Some(hd95(&ps, &rs).expect("both surfaces nonempty")),
        flag,
    }
}

/// Computes whole-gland and regional metrics for a prediction against a
/// reference on the same grid. The partition is derived from the reference.
pub fn regional_metrics(
    pred: &Mask,
    reference: &Mask,
    case_id: &str,
    apex_at_low_z: bool,
) -> Result<MetricsReport> {
    if pred.grid != reference.grid {
        return Err(Error::GridMismatch(
            "prediction and reference grids differ".into(),
        ));
    }
    let partition = partition_regions(reference, apex_at_low_z)?;
    let whole = region_metrics_for(pred, reference);
    let region = |range: [usize; 2]| -> RegionMetrics {
        region_metrics_for(&crop_z(pred, range), &crop_z(reference, range))
    };
    Ok(MetricsReport {
        case_id: case_id.to_string(),
        whole,
        apex: region(partition.apex),
        mid: region(partition.mid),
        base: region(partition.base),
    })
}

/// Writes reports as CSV with columns case, region, dsc, abd_mm, hd95_mm,
/// flags. Undefined distances are left empty; flags explain why.
pub fn write_reports_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "region", "dsc", "abd_mm", "hd95_mm", "flags"])?;
    for report in reports {
        for (region, m) in report.rows() {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            w.write_record([
                report.case_id.as_str(),
                region.name(),
                &format!("{:.6}", m.dsc),
                &fmt(m.abd_mm),
                &fmt(m.hd95_mm),
                m.flag.name(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Mask {
        let grid = Grid3::new(dims, spacing, [0.0; 3]).unwrap();
        let mut labels = vec![0u8; grid.len()];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if f(x, y, z) {
                        labels[grid.index(x, y, z)] = 1;
                    }
                }
            }
        }
        Mask::new(grid, labels).unwrap()
    }

    fn box_mask(dims: [usize; 3], lo: [usize; 3], hi: [usize; 3]) -> Mask {
        mask_from_fn(dims, [1.0; 3], |x, y, z| {
            x >= lo[0] && x < hi[0] && y >= lo[1] && y < hi[1] && z >= lo[2] && z < hi[2]
        })
    }

    #[test]
    fn dsc_conventions() {
        let a = box_mask([8; 3], [1, 1, 1], [5, 5, 5]);
        assert!((dsc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let empty = box_mask([8; 3], [0; 3], [0; 3]);
        assert!((dsc(&empty, &empty).unwrap() - 1.0).abs() < 1e-15);
        assert!((dsc(&a, &empty).unwrap() - 0.0).abs() < 1e-15);
        assert!((dsc(&empty, &a).unwrap() - 0.0).abs() < 1e-15);
        // hand value: |a| = 64, b = same box shifted +1 in x: overlap 3*4*4 = 48
        let b = box_mask([8; 3], [2, 1, 1], [6, 5, 5]);
        assert_eq!(dsc(&a, &b).unwrap(), 2.0 * 48.0 / 128.0);
    }

    #[test]
    fn dsc_grows_with_intersection_at_fixed_sizes() {
        // two masks of 8 voxels each; overlap 2 vs overlap 4
        let base = |shift: usize| {
            mask_from_fn([16, 1, 1], [1.0; 3], move |x, _, _| x >= shift && x < shift + 8)
        };
        let a = base(0);
        let d_low = dsc(&a, &base(6)).unwrap();
        let d_high = dsc(&a, &base(4)).unwrap();
        assert!(d_high > d_low);
    }

    #[test]
    fn solid_cube_surface_is_the_shell() {
        // 3x3x3 solid block: the center voxel is interior, 26 on the shell
        let m = box_mask([5; 3], [1, 1, 1], [4, 4, 4]);
        let s = surface_points(&m).unwrap();
        assert_eq!(s.points.len(), 26);
        // full-volume mask: border voxels are surface, the lone center is not
        let full = box_mask([3; 3], [0; 3], [3; 3]);
        assert_eq!(surface_points(&full).unwrap().points.len(), 26);
        // a slab of thickness 1 is all surface
        let slab = box_mask([6, 6, 6], [0, 0, 2], [6, 6, 3]);
        assert_eq!(surface_points(&slab).unwrap().points.len(), 36);
        let empty = box_mask([4; 3], [0; 3], [0; 3]);
        assert!(matches!(
            surface_points(&empty).unwrap_err(),
            Error::EmptySurface
        ));
    }

    #[test]
    fn abd_and_hd95_hand_values() {
        let xs = SurfacePointSet {
            points: vec![[0.0, 0.0, 0.0]],
        };
        let ys = SurfacePointSet {
            points: vec![[3.0, 0.0, 0.0]],
        };
        // both directed distances are 3 -> (3 + 3) / 2
        assert!((abd(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
        assert!((hd95(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
        // identical sets -> zero everywhere
        assert_eq!(abd(&xs, &xs).unwrap(), 0.0);
        assert_eq!(hd95(&xs, &xs).unwrap(), 0.0);
    }

    #[test]
    fn identical_masks_score_perfectly() {
        let m = box_mask([10; 3], [2, 3, 2], [8, 7, 9]);
        let s = surface_points(&m).unwrap();
        assert_eq!(abd(&s, &s).unwrap(), 0.0);
        assert_eq!(hd95(&s, &s).unwrap(), 0.0);
        assert!((dsc(&m, &m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_metrics_match_the_all_pairs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for trial in 0..15 {
            let n = rng.gen_range(1..=150);
            let m = rng.gen_range(1..=150);
            let point = |rng: &mut ChaCha8Rng| {
                [
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                ]
            };
            let xs = SurfacePointSet {
                points: (0..n).map(|_| point(&mut rng)).collect(),
            };
            let ys = SurfacePointSet {
                points: (0..m).map(|_| point(&mut rng)).collect(),
            };
            let abd_got = abd(&xs, &ys).unwrap();
            let abd_want = reference::abd_all_pairs(&xs.points, &ys.points);
            assert!(
                (abd_got - abd_want).abs() < 1e-9,
                "trial {trial}: abd {abd_got} vs {abd_want}"
            );
            let hd_got = hd95(&xs, &ys).unwrap();
            let hd_want = reference::hd95_all_pairs(&xs.points, &ys.points);
            assert!(
                (hd_got - hd_want).abs() < 1e-9,
                "trial {trial}: hd95 {hd_got} vs {hd_want}"
            );
            // the 95th percentile can never exceed the true Hausdorff max
            let hd_max = reference::hausdorff_all_pairs(&xs.points, &ys.points);
            assert!(hd_got <= hd_max + 1e-12);
        }
    }

    #[test]
    fn spacing_scales_distances() {
        // same index geometry, doubled z spacing: a one-slice z gap is 2 mm
        let a = mask_from_fn([4, 4, 4], [1.0, 1.0, 2.0], |_, _, z| z == 0);
        let b = mask_from_fn([4, 4, 4], [1.0, 1.0, 2.0], |_, _, z| z == 1);
        let sa = surface_points(&a).unwrap();
        let sb = surface_points(&b).unwrap();
        assert!((abd(&sa, &sb).unwrap() - 2.0).abs() < 1e-12);
        assert!((hd95(&sa, &sb).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn partition_splits_extent_into_thirds_with_apex_priority() {
        // extents 30 / 31 / 32 starting at z = 4
        for (extent, want) in [
            (30usize, [10usize, 10, 10]),
            (31, [11, 10, 10]),
            (32, [11, 10, 11]),
        ] {
            let m = box_mask([4, 4, 44], [0, 0, 4], [4, 4, 4 + extent]);
            let p = partition_regions(&m, true).unwrap();
            assert_eq!(p.apex, [4, 4 + want[0]]);
            assert_eq!(p.mid, [4 + want[0], 4 + want[0] + want[1]]);
            assert_eq!(
                p.base,
                [4 + want[0] + want[1], 4 + want[0] + want[1] + want[2]]
            );
            assert_eq!(p.base[1], 4 + extent);

            // apex at high z mirrors the layout; sizes stay with their roles
            let q = partition_regions(&m, false).unwrap();
            assert_eq!(q.base, [4, 4 + want[2]]);
            assert_eq!(q.mid, [4 + want[2], 4 + want[2] + want[1]]);
            assert_eq!(q.apex[1] - q.apex[0], want[0]);
            assert_eq!(q.apex[1], 4 + extent);
        }
    }

    #[test]
    fn thin_references_cannot_be_partitioned() {
        let m = box_mask([4, 4, 10], [0, 0, 3], [4, 4, 5]);
        match partition_regions(&m, true).unwrap_err() {
            Error::DegeneratePartition { extent } => assert_eq!(extent, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let empty = box_mask([4, 4, 10], [0; 3], [0; 3]);
        assert!(matches!(
            partition_regions(&empty, true).unwrap_err(),
            Error::DegeneratePartition { extent: 0 }
        ));
    }

    #[test]
    fn perfect_prediction_reports_all_ones_and_zeros() {
        let m = box_mask([12; 3], [2, 2, 1], [10, 10, 11]);
        let rep = regional_metrics(&m, &m, "case_0", true).unwrap();
        for (_, r) in rep.rows() {
            assert!((r.dsc - 1.0).abs() < 1e-15);
            assert_eq!(r.abd_mm.unwrap(), 0.0);
            assert_eq!(r.hd95_mm.unwrap(), 0.0);
            assert_eq!(r.flag, MetricFlag::Ok);
        }
    }

    #[test]
    fn shifted_prediction_matches_the_counting_oracle_per_region() {
        // reference box spans z in [2, 32) (extent 30 -> regions 10/10/10);
        // prediction is the same box shifted +1 slice in z
        let dims = [10, 10, 36];
        let r = box_mask(dims, [2, 2, 2], [8, 8, 32]);
        let p = box_mask(dims, [2, 2, 3], [8, 8, 33]);
        let rep = regional_metrics(&p, &r, "shifted", true).unwrap();

        // counting oracle: per z-range, intersection and sizes of the boxes
        let count = |z0: usize, z1: usize, lo: usize, hi: usize| -> f64 {
            let overlap = z1.min(hi).saturating_sub(z0.max(lo));
            (overlap * 6 * 6) as f64
        };
        let expect = |z0: usize, z1: usize| -> f64 {
            let np = count(z0, z1, 3, 33);
            let nr = count(z0, z1, 2, 32);
            let inter = count(z0, z1, 3, 32);
            2.0 * inter / (np + nr)
        };
        assert_eq!(rep.whole.dsc, expect(0, 36));
        assert_eq!(rep.apex.dsc, expect(2, 12));
        assert_eq!(rep.mid.dsc, expect(12, 22));
        assert_eq!(rep.base.dsc, expect(22, 32));
        // apex loses a slice of prediction, so it must be imperfect
        assert!(rep.apex.dsc < 1.0);
        assert!(rep.whole.dsc < 1.0);
    }

    #[test]
    fn empty_region_prediction_is_flagged() {
        // reference spans z in [0, 30); prediction misses the apex third
        let dims = [8, 8, 30];
        let r = box_mask(dims, [1, 1, 0], [7, 7, 30]);
        let p = box_mask(dims, [1, 1, 10], [7, 7, 30]);
        let rep = regional_metrics(&p, &r, "apexless", true).unwrap();
        assert_eq!(rep.apex.flag, MetricFlag::EmptyPred);
        assert_eq!(rep.apex.dsc, 0.0);
        assert!(rep.apex.abd_mm.is_none());
        assert!(rep.apex.hd95_mm.is_none());
        assert_eq!(rep.mid.flag, MetricFlag::Ok);
        assert_eq!(rep.base.flag, MetricFlag::Ok);
        assert!((rep.mid.dsc - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_report_has_the_documented_columns() {
        let m = box_mask([8; 3], [1, 1, 1], [7, 7, 7]);
        let rep = regional_metrics(&m, &m, "case_7", true).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "case,region,dsc,abd_mm,hd95_mm,flags"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].starts_with("case_7,whole,1.000000,"));
        assert!(rows.iter().all(|r| r.ends_with(",ok")));
        let regions: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
        assert_eq!(regions, ["whole", "apex", "mid", "base"]);
    }

    #[test]
    fn undefined_distances_leave_empty_csv_fields() {
        let dims = [8, 8, 30];
        let r = box_mask(dims, [1, 1, 0], [7, 7, 30]);
        let p = box_mask(dims, [1, 1, 10], [7, 7, 30]);
        let rep = regional_metrics(&p, &r, "apexless", true).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[rep], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let apex_row = text
            .lines()
            .find(|l| l.contains(",apex,"))
            .expect("apex row present");
        assert!(apex_row.ends_with(",,,empty_pred"), "row: {apex_row}");
    }
}
