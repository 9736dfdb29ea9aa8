//! Phantom generation, acquisition physics, experiment plumbing, and
//! report rendering tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::experiment::{
    inverse_perm, permute_mask, permute_volume, to_thick_z_perm, Approach, ExperimentConfig,
    ResultRow, Role,
};
use super::report::{box_stats, emit_report, render_boxplot_svg, summarize};
use super::*;
use crate::network::Orientation;
use crate::training::TrainConfig;
use crate::volume::{Grid3, Volume};

fn tiny_spec() -> PhantomSpec {
    PhantomSpec {
        dims: [32, 32, 32],
        spacing_mm: 0.5,
        radii_mm: [5.0, 4.5, 4.0],
        deformation_mm: 1.0,
        gland_mean: 0.8,
        background_mean: 0.2,
        texture_sigma: 0.05,
    }
}

#[test]
fn zero_deformation_gives_the_analytic_ellipsoid() {
    let spec = PhantomSpec {
        deformation_mm: 0.0,
        texture_sigma: 0.0,
        ..tiny_spec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (vol, mask) = generate_phantom(&spec, &mut rng).unwrap();
    let grid = spec.grid().unwrap();
    let c = 8.0; // 32 voxels * 0.5 mm / 2
    for z in 0..32 {
        for y in 0..32 {
            for x in 0..32 {
                let p = grid.world(x, y, z);
                let rho: f64 = (0..3)
                    .map(|a| ((p[a] - c) / spec.radii_mm[a]).powi(2))
                    .sum();
                let inside = rho <= 1.0;
                assert_eq!(mask.at(x, y, z), u8::from(inside));
                let expected = if inside { 0.8 } else { 0.2 };
                assert_eq!(vol.at(x, y, z), expected);
            }
        }
    }
}

#[test]
fn same_seed_reproduces_the_phantom_bitwise() {
    let spec = tiny_spec();
    let gen = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_phantom(&spec, &mut rng).unwrap()
    };
    let (v1, m1) = gen(9);
    let (v2, m2) = gen(9);
    assert_eq!(v1, v2);
    assert_eq!(m1, m2);
    let (v3, _) = gen(10);
    assert_ne!(v1.samples, v3.samples);
}

#[test]
fn mask_volume_matches_the_analytic_ellipsoid_volume() {
    // radii of at least 10 voxels keep the voxelization error small
    let spec = PhantomSpec {
        dims: [64, 64, 64],
        spacing_mm: 0.5,
        radii_mm: [6.0, 5.5, 5.0],
        deformation_mm: 0.0,
        texture_sigma: 0.0,
        ..PhantomSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (_, mask) = generate_phantom(&spec, &mut rng).unwrap();
    let voxel_mm3 = spec.spacing_mm.powi(3);
    let measured = mask.foreground_count() as f64 * voxel_mm3;
    let analytic = 4.0 / 3.0 * std::f64::consts::PI * 6.0 * 5.5 * 5.0;
    assert!(
        (measured - analytic).abs() / analytic < 0.05,
        "measured {measured} vs analytic {analytic}"
    );
}

#[test]
fn an_oversized_gland_is_rejected() {
    let spec = PhantomSpec {
        radii_mm: [7.9, 4.0, 4.0], // 7.9 + 1 deformation > 8 - 2 * 0.5
        ..tiny_spec()
    };
    assert!(spec.validate().is_err());
    // the margin rule counts the deformation reach
    let spec = PhantomSpec {
        radii_mm: [6.5, 4.0, 4.0],
        deformation_mm: 0.6,
        ..tiny_spec()
    };
    assert!(spec.validate().is_err());
    assert!(tiny_spec().validate().is_ok());
}

#[test]
fn identity_resolution_acquisition_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (vol, _) = generate_phantom(&tiny_spec(), &mut rng).unwrap();
    let acq = AcquisitionSpec {
        orientation: Orientation::Axial,
        in_plane_mm: 0.5,
        slice_thickness_mm: 0.5,
        noise_sigma: 0.0,
        misalignment: None,
    };
    let scan = simulate_acquisition(&vol, &acq, &mut rng).unwrap();
    assert_eq!(scan.grid, vol.grid);
    assert_eq!(scan.samples, vol.samples);
}

#[test]
fn step_edge_spreads_over_exactly_one_thick_voxel() {
    let grid = Grid3::isotropic([32, 32, 32], 0.5).unwrap();
    // edge strictly inside the fifth 2 mm slab (source slices 16..=19)
    let samples: Vec<f64> = (0..grid.len())
        .map(|i| f64::from(i / (32 * 32) >= 17))
        .collect();
    let vol = Volume::new(grid, samples).unwrap();
    let acq = AcquisitionSpec::standard(Orientation::Axial);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scan = simulate_acquisition(&vol, &acq, &mut rng).unwrap();
    assert_eq!(scan.grid.dims, [32, 32, 8]);
    for y in 0..32 {
        for x in 0..32 {
            for z in 0..8 {
                let expected = match z {
                    0..=3 => 0.0,
                    4 => 0.75, // (0 + 1 + 1 + 1) / 4 inside the mixed slab
                    _ => 1.0,
                };
                assert_eq!(scan.at(x, y, z), expected, "at ({x},{y},{z})");
            }
        }
    }
}

#[test]
fn constant_volume_stays_constant_without_noise() {
    let grid = Grid3::isotropic([16, 16, 16], 0.5).unwrap();
    let vol = Volume::filled(grid, 0.37).unwrap();
    for orientation in [Orientation::Axial, Orientation::Sagittal, Orientation::Coronal] {
        let acq = AcquisitionSpec::standard(orientation);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let scan = simulate_acquisition(&vol, &acq, &mut rng).unwrap();
        assert_eq!(scan.grid.dims[orientation.thick_axis()], 4);
        assert!(scan.samples.iter().all(|&s| s == 0.37));
    }
}

#[test]
fn acquisition_preserves_the_mean_intensity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (vol, _) = generate_phantom(&tiny_spec(), &mut rng).unwrap();
    let acq = AcquisitionSpec::standard(Orientation::Sagittal);
    let scan = simulate_acquisition(&vol, &acq, &mut rng).unwrap();
    let mean = |v: &Volume| v.samples.iter().sum::<f64>() / v.samples.len() as f64;
    assert!((mean(&vol) - mean(&scan)).abs() < 1e-3);
}

#[test]
fn misalignment_moves_the_scan_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (vol, _) = generate_phantom(&tiny_spec(), &mut rng).unwrap();
    let aligned = AcquisitionSpec::standard(Orientation::Axial);
    let moved = AcquisitionSpec {
        misalignment: Some(RigidMisalignment {
            translation_mm: [1.0, -0.5, 0.5],
            rotation_deg: 3.0,
        }),
        ..aligned.clone()
    };
    let scan = |acq: &AcquisitionSpec| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        simulate_acquisition(&vol, acq, &mut r).unwrap()
    };
    let a = scan(&aligned);
    let b = scan(&moved);
    assert_eq!(a.grid, b.grid);
    assert_ne!(a.samples, b.samples);
    assert_eq!(b.samples, scan(&moved).samples);
}

#[test]
fn invalid_acquisitions_are_rejected() {
    // anisotropy below 1
    let acq = AcquisitionSpec {
        slice_thickness_mm: 0.25,
        ..AcquisitionSpec::standard(Orientation::Axial)
    };
    assert!(acq.validate().is_err());
    // source coarser than the in-plane resolution
    let coarse = Volume::filled(Grid3::isotropic([8, 8, 8], 1.0).unwrap(), 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = simulate_acquisition(
        &coarse,
        &AcquisitionSpec::standard(Orientation::Axial),
        &mut rng,
    );
    assert!(err.is_err());
}

#[test]
fn axis_permutation_reorients_and_round_trips() {
    let grid = Grid3::new([4, 3, 2], [2.0, 0.5, 0.5], [1.0, 0.25, 0.25]).unwrap();
    let samples: Vec<f64> = (0..grid.len()).map(|i| i as f64).collect();
    let vol = Volume::new(grid, samples).unwrap();
    let perm = to_thick_z_perm(Orientation::Sagittal);
    let turned = permute_volume(&vol, perm);
    // thick axis (x, 2 mm) lands on z
    assert_eq!(turned.grid.dims, [3, 2, 4]);
    assert_eq!(turned.grid.spacing, [0.5, 0.5, 2.0]);
    // output (x', y', z') reads input (y, z, x)
    assert_eq!(turned.at(2, 1, 3), vol.at(3, 2, 1));
    let back = permute_volume(&turned, inverse_perm(perm));
    assert_eq!(back, vol);
    for o in [Orientation::Axial, Orientation::Sagittal, Orientation::Coronal] {
        let p = to_thick_z_perm(o);
        // the thick axis always lands on z
        assert_eq!(p[2], o.thick_axis());
        let mask = crate::volume::Mask::filled(grid, 1).unwrap();
        assert_eq!(
            permute_mask(&permute_mask(&mask, p), inverse_perm(p)).labels,
            mask.labels
        );
    }
}

fn smoke_config(approaches: Vec<Approach>, max_epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        cases: 5,
        train_cases: 2,
        val_cases: 1,
        approaches,
        iso_dims: [16, 16, 16],
        iso_spacing_mm: 0.5,
        radii_range_mm: [2.0, 2.5],
        deformation_mm: 0.4,
        texture_sigma: 0.02,
        scan_noise_sigma: 0.02,
        misalignment_mm: 0.2,
        misalignment_deg: 1.0,
        base_width: 2,
        train: TrainConfig {
            learning_rate: 1e-3,
            max_epochs,
            patience: max_epochs,
            ..TrainConfig::default()
        },
        augment: false,
        seed: 7,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_only_smoke_run_completes_and_reproduces() {
    let cfg = smoke_config(vec![Approach::Single], 5);
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("run1");
    let summary = super::experiment::run_experiment(&cfg, &out1).unwrap();
    // two test cases, four regions each
    assert_eq!(summary.rows.len(), 2 * 4);
    assert!(summary.rows.iter().all(|r| r.approach == "single"));
    assert!(summary.failures.is_empty());
    // split audit: roles partition the cases, test is disjoint from train
    let role = |r: Role| -> Vec<&str> {
        summary
            .split
            .iter()
            .filter(|(_, x)| *x == r)
            .map(|(c, _)| c.as_str())
            .collect()
    };
    assert_eq!(role(Role::Train).len(), 2);
    assert_eq!(role(Role::Val).len(), 1);
    let test_ids = role(Role::Test);
    assert_eq!(test_ids.len(), 2);
    for id in &test_ids {
        assert!(!role(Role::Train).contains(id));
    }
    for row in &summary.rows {
        assert!(test_ids.contains(&row.case.as_str()));
    }
    // loss history: header plus one line per epoch
    let history = std::fs::read_to_string(out1.join("history_single.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);

    // identical config and seed reproduce the results byte for byte
    let out2 = dir.path().join("run2");
    super::experiment::run_experiment(&cfg, &out2).unwrap();
    let bytes = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(
        bytes(&out1.join("results.csv")),
        bytes(&out2.join("results.csv"))
    );
    assert_eq!(
        bytes(&out1.join("significance.csv")),
        bytes(&out2.join("significance.csv"))
    );
}

#[test]
fn all_approaches_smoke_run_emits_the_full_tables() {
    let cfg = smoke_config(
        vec![
            Approach::Single,
            Approach::Dual,
            Approach::Triple,
            Approach::Ensemble,
        ],
        3,
    );
    let dir = tempfile::tempdir().unwrap();
    let summary = super::experiment::run_experiment(&cfg, dir.path()).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    assert_eq!(summary.rows.len(), 2 * 4 * 4);
    // three comparisons, each over 4 regions x 3 metrics
    assert_eq!(summary.significance.len(), 3 * 12);
    for s in &summary.significance {
        if let Some(p) = s.p_value {
            assert!(p > 0.0 && p <= 1.0, "{s:?}");
        }
    }
    let comparisons: Vec<&str> = summary
        .significance
        .iter()
        .map(|s| s.comparison.as_str())
        .collect();
    for c in ["dual_vs_single", "triple_vs_single", "ensemble_vs_triple"] {
        assert!(comparisons.contains(&c));
    }
    for file in [
        "results.csv",
        "significance.csv",
        "split.csv",
        "failures.csv",
        "history_single.csv",
        "history_dual.csv",
        "history_triple.csv",
        "history_single_sagittal.csv",
        "history_single_coronal.csv",
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn experiment_config_validation_catches_bad_splits() {
    let mut cfg = smoke_config(vec![Approach::Single], 1);
    cfg.train_cases = 4; // 4 + 1 leaves no test case
    assert!(cfg.validate().is_err());
    let mut cfg = smoke_config(vec![Approach::Single, Approach::Single], 1);
    assert!(cfg.validate().is_err());
    cfg = smoke_config(vec![Approach::Single], 1);
    cfg.slice_thickness_mm = 1.0; // anisotropy 2 does not fit the network family
    assert!(cfg.validate().is_err());
}

fn row(case: &str, approach: &str, region: &str, dsc: f64) -> ResultRow {
    ResultRow {
        case: case.to_string(),
        approach: approach.to_string(),
        region: region.to_string(),
        dsc,
        abd_mm: Some(1.0 + dsc),
        hd95_mm: None,
    }
}

#[test]
fn quartiles_match_the_hand_computation() {
    let stats = box_stats(&[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
    assert_eq!(stats.n, 5);
    assert_eq!(stats.min, 1.0);
    assert_eq!(stats.q1, 2.0);
    assert_eq!(stats.median, 3.0);
    assert_eq!(stats.q3, 4.0);
    assert_eq!(stats.max, 5.0);
    // even count interpolates between the middle pair
    let even = box_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(even.median, 2.5);
    assert_eq!(even.q1, 1.75);
    assert!(box_stats(&[]).is_none());
}

#[test]
fn single_row_degenerates_to_its_value() {
    let rows = vec![row("c0", "single", "whole", 0.9)];
    let summary = summarize(&rows);
    // one dsc group and one abd group survive; hd95 is undefined
    assert_eq!(summary.len(), 2);
    let s = &summary[0].stats;
    assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (0.9, 0.9, 0.9, 0.9, 0.9));
    let svg = render_boxplot_svg(&rows, "dsc", "DSC");
    assert!(svg.contains("<svg"));
}

fn parse_xml(text: &str) {
    let mut reader = quick_xml::Reader::from_str(text);
    loop {
        match reader.read_event() {
            Ok(quick_xml::events::Event::Eof) => break,
            Ok(_) => {}
            Err(e) => panic!("malformed XML: {e}"),
        }
    }
}

#[test]
fn report_files_are_written_and_svg_is_wellformed() {
    let mut rows = Vec::new();
    for (i, dsc) in [0.91, 0.87, 0.95, 0.89, 0.93].iter().enumerate() {
        rows.push(row(&format!("c{i}"), "single", "whole", *dsc));
        rows.push(row(&format!("c{i}"), "triple", "whole", dsc + 0.02));
        rows.push(row(&format!("c{i}"), "single", "apex", dsc - 0.1));
    }
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    {
        let mut w = csv::Writer::from_path(&results).unwrap();
        w.write_record(["case", "approach", "region", "dsc", "abd_mm", "hd95_mm"])
            .unwrap();
        for r in &rows {
            w.write_record([
                r.case.as_str(),
                r.approach.as_str(),
                r.region.as_str(),
                &format!("{:.6}", r.dsc),
                &r.abd_mm.map(|v| format!("{v:.6}")).unwrap_or_default(),
                &r.hd95_mm.map(|v| format!("{v:.6}")).unwrap_or_default(),
            ])
            .unwrap();
        }
        w.flush().unwrap();
    }
    let report_dir = dir.path().join("report");
    emit_report(&results, &report_dir).unwrap();
    assert!(report_dir.join("summary.csv").exists());
    for metric in ["dsc", "abd_mm", "hd95_mm"] {
        let svg = std::fs::read_to_string(report_dir.join(format!("boxplot_{metric}.svg"))).unwrap();
        parse_xml(&svg);
        assert!(svg.starts_with("<?xml"));
    }
    // quartiles in summary.csv match an independent computation
    let summary_text = std::fs::read_to_string(report_dir.join("summary.csv")).unwrap();
    let line = summary_text
        .lines()
        .find(|l| l.starts_with("single,whole,dsc"))
        .unwrap();
    assert!(line.contains("0.910000"), "median field in {line}");
}

#[test]
fn empty_results_table_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    std::fs::write(&results, "case,approach,region,dsc,abd_mm,hd95_mm\n").unwrap();
    let err = emit_report(&results, &dir.path().join("report")).err().unwrap();
    assert!(matches!(err, crate::error::Error::EmptyInput(_)));
}
