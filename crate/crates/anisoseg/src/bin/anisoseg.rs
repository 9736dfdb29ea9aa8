//! Command-line front end: mask fusion, post-processing, metric evaluation,
//! hyperparameter search, and the synthetic phantom experiment.
//!
//! Volumes and masks travel as "vraw" pairs (`<stem>.json` header +
//! `<stem>.raw` little-endian payload); every other input is JSON and every
//! tabular output is CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use anisoseg::fusion::{fuse_planes, largest_component, Connectivity};
use anisoseg::hpo::synthetic::noisy_categorical_objective;
use anisoseg::hpo::{run_hpo, write_ledger, HpoConfig, SearchSpace};
use anisoseg::metrics::{regional_metrics, write_reports_csv, MetricsReport};
use anisoseg::network::{Orientation, ANISOTROPY_RATIO};
use anisoseg::phantom::experiment::{run_experiment, ExperimentConfig};
use anisoseg::phantom::report::emit_report;
use anisoseg::phantom::{generate_phantom, simulate_acquisition, AcquisitionSpec, PhantomSpec};
use anisoseg::volume::{vraw, Grid3};
use anisoseg::{Error, Result};

#[derive(Parser)]
#[command(name = "anisoseg", version, about = "Anisotropic multi-plane segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fuse per-orientation masks by averaging signed distance fields.
    Fuse {
        /// Input vraw mask (stem or .json/.raw path); repeat per orientation.
        #[arg(long = "mask", required = true)]
        masks: Vec<PathBuf>,
        /// Target grid JSON: {"dims":[..], "spacing":[..], "origin":[..]}.
        #[arg(long)]
        grid: PathBuf,
        /// Output vraw stem for the fused mask.
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep only the largest connected component of a mask.
    Postproc {
        /// Input vraw mask.
        #[arg(long)]
        mask: PathBuf,
        /// Output vraw stem.
        #[arg(long)]
        out: PathBuf,
        /// Voxel connectivity: 6 or 26.
        #[arg(long, default_value_t = 26)]
        connectivity: u8,
    },
    /// Whole and regional DSC/ABD/95-HD for prediction-reference pairs.
    Evaluate {
        /// Prediction vraw mask; repeat per case, paired with --ref by order.
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// Reference vraw mask; one per --pred.
        #[arg(long = "ref", required = true)]
        refs: Vec<PathBuf>,
        /// Output CSV (case, region, dsc, abd_mm, hd95_mm, flags).
        #[arg(long)]
        out: PathBuf,
        /// Treat the high-z end of the reference as the apex.
        #[arg(long)]
        apex_high_z: bool,
    },
    /// Hyperband + model-guided search over a built-in benchmark objective.
    Hpo {
        /// Search-space JSON; omitted fields use the published support.
        #[arg(long)]
        space: Option<PathBuf>,
        /// Optimization iterations (one bracket each).
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        /// Configurations sampled per iteration.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Budget (epochs) of the first rung.
        #[arg(long, default_value_t = 5.0)]
        min_budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trial ledger output, one JSON trial per line.
        #[arg(long, default_value = "trials.jsonl")]
        ledger: PathBuf,
        /// Disable the configuration model (pure random sampling).
        #[arg(long)]
        no_model: bool,
        /// Noise scale of the benchmark objective.
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
    },
    /// Synthetic phantom utilities.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// End-to-end single- vs multi-plane experiment.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Summarize a results CSV into quartile tables and box plots.
    Report {
        /// Results CSV (case, approach, region, dsc, abd_mm, hd95_mm).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for summary.csv and per-metric SVGs.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PhantomCmd {
    /// Generate ground-truth phantoms plus anisotropic scans in vraw.
    Gen {
        /// Phantom spec JSON; missing fields take the defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory; one subdirectory per case.
        #[arg(long)]
        out: PathBuf,
        /// Number of cases.
        #[arg(long, default_value_t = 1)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Generate cases, train every approach, and write results CSVs.
    Run {
        /// Experiment config JSON; missing fields take the defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results, significance, split, and histories.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Case label for evaluate rows: the file stem of the prediction path.
fn case_label(path: &Path) -> String {
    vraw_stem(path)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Strips a `.json`/`.raw` extension so either sidecar names the case.
fn vraw_stem(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn cmd_fuse(masks: &[PathBuf], grid: &Path, out: &Path) -> Result<()> {
    let grid: Grid3 = read_json(grid)?;
    grid.validate()?;
    let inputs = masks.iter().map(|p| vraw::read_mask(p)).collect::<Result<Vec<_>>>()?;
    let fused = fuse_planes(&inputs, &grid)?;
    vraw::write_mask(&fused, out)?;
    let fg = fused.labels.iter().filter(|&&v| v != 0).count();
    println!("fused {} masks -> {} ({fg} foreground voxels)", inputs.len(), out.display());
    Ok(())
}

fn cmd_postproc(mask: &Path, out: &Path, connectivity: u8) -> Result<()> {
    let conn = match connectivity {
        6 => Connectivity::Six,
        26 => Connectivity::TwentySix,
        other => {
            return Err(Error::InvalidConfig(format!(
                "connectivity must be 6 or 26, got {other}"
            )))
        }
    };
    let input = vraw::read_mask(mask)?;
    let kept = largest_component(&input, conn);
    vraw::write_mask(&kept, out)?;
    let before = input.labels.iter().filter(|&&v| v != 0).count();
    let after = kept.labels.iter().filter(|&&v| v != 0).count();
    println!("largest component kept {after} of {before} foreground voxels -> {}", out.display());
    Ok(())
}

fn cmd_evaluate(preds: &[PathBuf], refs: &[PathBuf], out: &Path, apex_high_z: bool) -> Result<()> {
    if preds.len() != refs.len() {
        return Err(Error::InvalidConfig(format!(
            "{} predictions but {} references; --pred and --ref pair by order",
            preds.len(),
            refs.len()
        )));
    }
    let reports = preds
        .iter()
        .zip(refs)
        .map(|(p, r)| {
            let pred = vraw::read_mask(p)?;
            let reference = vraw::read_mask(r)?;
            regional_metrics(&pred, &reference, &case_label(p), !apex_high_z)
        })
        .collect::<Result<Vec<MetricsReport>>>()?;
    write_reports_csv(&reports, fs::File::create(out)?)?;
    println!("evaluated {} case(s) -> {}", reports.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_hpo(
    space: Option<&Path>,
    iterations: usize,
    n: usize,
    min_budget: f64,
    seed: u64,
    ledger: &Path,
    no_model: bool,
    noise: f64,
) -> Result<()> {
    let space: SearchSpace = match space {
        Some(path) => read_json(path)?,
        None => SearchSpace::default(),
    };
    let cfg = HpoConfig {
        iterations,
        n_per_iteration: n,
        min_budget,
        use_model: !no_model,
        seed,
        ..HpoConfig::default()
    };
    let mut objective = noisy_categorical_objective(noise);
    let outcome = run_hpo(&mut objective, &space, &cfg)?;
    write_ledger(ledger, &outcome.trials)?;
    println!(
        "{} trials -> {}; best loss {:.6} at {}",
        outcome.trials.len(),
        ledger.display(),
        outcome.best.loss.unwrap_or(f64::NAN),
        serde_json::to_string(&outcome.best.config)?
    );
    Ok(())
}

fn cmd_phantom_gen(spec: Option<&Path>, out: &Path, cases: usize, seed: u64) -> Result<()> {
    let spec: PhantomSpec = match spec {
        Some(path) => read_json(path)?,
        None => PhantomSpec::default(),
    };
    spec.validate()?;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(case as u64 + 1);
        let (volume, truth) = generate_phantom(&spec, &mut rng)?;
        let dir = out.join(format!("case{case:02}"));
        fs::create_dir_all(&dir)?;
        vraw::write_volume(&volume, &dir.join("volume"))?;
        vraw::write_mask(&truth, &dir.join("truth"))?;
        for orientation in [Orientation::Axial, Orientation::Sagittal, Orientation::Coronal] {
            let acq = AcquisitionSpec {
                orientation,
                in_plane_mm: spec.spacing_mm,
                slice_thickness_mm: spec.spacing_mm * ANISOTROPY_RATIO as f64,
                noise_sigma: 0.0,
                misalignment: None,
            };
            let scan = simulate_acquisition(&volume, &acq, &mut rng)?;
            vraw::write_volume(&scan, &dir.join(format!("scan_{}", orientation.name())))?;
        }
        println!("case{case:02}: volume, truth, and 3 scans -> {}", dir.display());
    }
    Ok(())
}

fn cmd_experiment_run(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_json_file(config)?;
    let summary = run_experiment(&cfg, out)?;
    for approach in &cfg.approaches {
        if let Some(mean) = summary.mean_dsc(approach.name(), "whole") {
            println!("mean whole-gland DSC {:9} = {mean:.4}", approach.name());
        }
    }
    for row in &summary.significance {
        if row.region == "whole" && row.metric == "dsc" {
            match row.p_value {
                Some(p) => println!("{} whole-gland DSC p = {p:.4e}", row.comparison),
                None => println!("{} whole-gland DSC p undefined", row.comparison),
            }
        }
    }
    if !summary.failures.is_empty() {
        println!("{} case(s) failed; see failures.csv", summary.failures.len());
    }
    println!(
        "{} result rows, {} significance rows -> {}",
        summary.rows.len(),
        summary.significance.len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Fuse { masks, grid, out } => cmd_fuse(&masks, &grid, &out),
        Cmd::Postproc { mask, out, connectivity } => cmd_postproc(&mask, &out, connectivity),
        Cmd::Evaluate { preds, refs, out, apex_high_z } => {
            cmd_evaluate(&preds, &refs, &out, apex_high_z)
        }
        Cmd::Hpo { space, iterations, n, min_budget, seed, ledger, no_model, noise } => cmd_hpo(
            space.as_deref(),
            iterations,
            n,
            min_budget,
            seed,
            &ledger,
            no_model,
            noise,
        ),
        Cmd::Phantom(PhantomCmd::Gen { spec, out, cases, seed }) => {
            cmd_phantom_gen(spec.as_deref(), &out, cases, seed)
        }
        Cmd::Experiment(ExperimentCmd::Run { config, out }) => cmd_experiment_run(&config, &out),
        Cmd::Report { input, out } => {
            emit_report(&input, &out)?;
            println!("report -> {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
