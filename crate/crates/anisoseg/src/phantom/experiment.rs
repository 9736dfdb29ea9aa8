//! End-to-end comparison experiment: phantom cases, per-approach training,
//! prediction, post-processing, regional evaluation, and paired statistics.
//!
//! Approaches share one generated case set and one train/val/test split;
//! test cases never enter training. Every random draw derives from the
//! experiment seed through fixed stream ids, so a (config, seed) pair
//! reproduces byte-identical result files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_phantom, simulate_acquisition, AcquisitionSpec, PhantomSpec, RigidMisalignment};
use crate::error::{Error, Result};
use crate::fusion::{largest_component, majority_vote, Connectivity};
use crate::metrics::regional_metrics;
use crate::metrics::wilcoxon::{wilcoxon_signed_rank, Alternative};
use crate::network::exec::{self, volume_to_tensor, NetworkParams};
use crate::network::{
    build_multistream, HyperParams, NetworkSpec, Orientation, PlaneConfig, PlaneVariant,
    UpsamplingMode, DROPOUT_GRID,
};
use crate::tensor::{Mode, Tensor};
use crate::training::augment::AugmentationSpec;
use crate::training::{train, write_history_csv, Dataset, TrainConfig, TrainExample};
use crate::volume::{normalize_percentile, Grid3, Mask, Volume};

/// One compared segmentation approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// Axial-only single-stream network.
    Single,
    /// Axial + sagittal dual-stream network.
    Dual,
    /// All three orientations in one triple-stream network.
    Triple,
    /// Majority vote over three per-orientation single-stream networks.
    Ensemble,
}

impl Approach {
    pub fn name(self) -> &'static str {
        match self {
            Approach::Single => "single",
            Approach::Dual => "dual",
            Approach::Triple => "triple",
            Approach::Ensemble => "ensemble",
        }
    }
}

/// Split role of one case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

/// Full experiment description; JSON-loadable for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cases: usize,
    pub train_cases: usize,
    pub val_cases: usize,
    pub approaches: Vec<Approach>,
    /// Isotropic phantom grid (x, y, z).
    pub iso_dims: [usize; 3],
    pub iso_spacing_mm: f64,
    /// Per-axis gland radius range, drawn uniformly per case and axis.
    pub radii_range_mm: [f64; 2],
    pub deformation_mm: f64,
    pub gland_mean: f64,
    pub background_mean: f64,
    pub texture_sigma: f64,
    pub slice_thickness_mm: f64,
    pub scan_noise_sigma: f64,
    /// Max per-axis subject translation of non-axial scans. Zero models the
    /// rigidly registered protocol.
    pub misalignment_mm: f64,
    /// Max in-plane subject rotation of non-axial scans.
    pub misalignment_deg: f64,
    pub base_width: usize,
    /// Dropout rate shared by every approach (identical training protocol).
    pub dropout_rate: f64,
    /// Use each variant's search-selected hyperparameters instead of the
    /// shared ones; breaks the identical-protocol property.
    pub tuned_per_variant: bool,
    pub train: TrainConfig,
    /// Standard spatial augmentation during training (off: identity).
    pub augment: bool,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: 64^3 phantoms, width-4 networks, <= 50 epochs.
    fn default() -> Self {
        ExperimentConfig {
            cases: 20,
            train_cases: 8,
            val_cases: 2,
            approaches: vec![
                Approach::Single,
                Approach::Dual,
                Approach::Triple,
                Approach::Ensemble,
            ],
            iso_dims: [64, 64, 64],
            iso_spacing_mm: 0.5,
            radii_range_mm: [8.0, 12.0],
            deformation_mm: 1.5,
            gland_mean: 0.75,
            background_mean: 0.25,
            texture_sigma: 0.03,
            slice_thickness_mm: 2.0,
            scan_noise_sigma: 0.1,
            misalignment_mm: 0.0,
            misalignment_deg: 0.0,
            base_width: 4,
            dropout_rate: 0.2,
            tuned_per_variant: false,
            train: TrainConfig {
                max_epochs: 50,
                patience: 10,
                ..TrainConfig::default()
            },
            augment: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_cases < 1 || self.val_cases < 1 {
            return Err(Error::InvalidConfig(
                "need at least one training and one validation case".into(),
            ));
        }
        if self.train_cases + self.val_cases >= self.cases {
            return Err(Error::InvalidConfig(format!(
                "{} cases leave no test set after {} train + {} val",
                self.cases, self.train_cases, self.val_cases
            )));
        }
        if self.approaches.is_empty() {
            return Err(Error::InvalidConfig("no approaches selected".into()));
        }
        for (i, a) in self.approaches.iter().enumerate() {
            if self.approaches[..i].contains(a) {
                return Err(Error::InvalidConfig(format!(
                    "approach `{}` listed twice",
                    a.name()
                )));
            }
        }
        if !(self.radii_range_mm[0] > 0.0) || self.radii_range_mm[0] > self.radii_range_mm[1] {
            return Err(Error::InvalidConfig(format!(
                "radius range [{}, {}] must be positive and ordered",
                self.radii_range_mm[0], self.radii_range_mm[1]
            )));
        }
        if self.base_width < 1 {
            return Err(Error::InvalidConfig("base width must be >= 1".into()));
        }
        if !DROPOUT_GRID.contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} is not in the supported grid {:?}",
                self.dropout_rate, DROPOUT_GRID
            )));
        }
        let ratio = self.slice_thickness_mm / self.iso_spacing_mm;
        if (ratio - crate::network::ANISOTROPY_RATIO as f64).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "slice thickness / spacing = {ratio}, but the network family \
                 is built for anisotropy {}",
                crate::network::ANISOTROPY_RATIO
            )));
        }
        self.train.validate()
    }

    pub fn from_json_file(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn phantom_spec(&self, radii_mm: [f64; 3]) -> PhantomSpec {
        PhantomSpec {
            dims: self.iso_dims,
            spacing_mm: self.iso_spacing_mm,
            radii_mm,
            deformation_mm: self.deformation_mm,
            gland_mean: self.gland_mean,
            background_mean: self.background_mean,
            texture_sigma: self.texture_sigma,
        }
    }
}

/// One result line: a metric row of one case under one approach.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub case: String,
    pub approach: String,
    pub region: String,
    pub dsc: f64,
    pub abd_mm: Option<f64>,
    pub hd95_mm: Option<f64>,
}

/// One paired-test line of the significance table.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceRow {
    pub comparison: String,
    pub region: String,
    pub metric: String,
    /// Absent when the test is undefined (e.g. all paired differences zero).
    pub p_value: Option<f64>,
}

/// A case whose pipeline failed under one approach; the run continues.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureRow {
    pub case: String,
    pub approach: String,
    pub error: String,
}

/// Everything run_experiment writes, kept for in-process inspection.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub rows: Vec<ResultRow>,
    pub significance: Vec<SignificanceRow>,
    pub failures: Vec<FailureRow>,
    /// (case id, split role), covering every generated case.
    pub split: Vec<(String, Role)>,
}

impl ExperimentSummary {
    /// Mean of one metric over all test cases of an approach and region.
    pub fn mean_dsc(&self, approach: &str, region: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.approach == approach && r.region == region)
            .map(|r| r.dsc)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

const ORIENTATIONS: [Orientation; 3] = [
    Orientation::Axial,
    Orientation::Sagittal,
    Orientation::Coronal,
];

fn orientation_index(o: Orientation) -> usize {
    ORIENTATIONS.iter().position(|&x| x == o).expect("listed")
}

/// Axis permutation sending the orientation's thick axis to z.
///
/// Output axis i reads input axis perm[i]; axial is the identity.
pub(crate) fn to_thick_z_perm(o: Orientation) -> [usize; 3] {
    match o {
        Orientation::Axial => [0, 1, 2],
        Orientation::Sagittal => [1, 2, 0],
        Orientation::Coronal => [2, 0, 1],
    }
}

pub(crate) fn inverse_perm(perm: [usize; 3]) -> [usize; 3] {
    let mut inv = [0; 3];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub(crate) fn permute_grid(g: &Grid3, perm: [usize; 3]) -> Grid3 {
    Grid3 {
        dims: [g.dims[perm[0]], g.dims[perm[1]], g.dims[perm[2]]],
        spacing: [g.spacing[perm[0]], g.spacing[perm[1]], g.spacing[perm[2]]],
        origin: [g.origin[perm[0]], g.origin[perm[1]], g.origin[perm[2]]],
    }
}

fn permute_index_copy<T: Copy>(src: &[T], grid: &Grid3, perm: [usize; 3]) -> (Grid3, Vec<T>) {
    let out_grid = permute_grid(grid, perm);
    let mut out = Vec::with_capacity(src.len());
    for z in 0..out_grid.dims[2] {
        for y in 0..out_grid.dims[1] {
            for x in 0..out_grid.dims[0] {
                let o = [x, y, z];
                let mut c = [0usize; 3];
                for (i, &p) in perm.iter().enumerate() {
                    c[p] = o[i];
                }
                out.push(src[grid.index(c[0], c[1], c[2])]);
            }
        }
    }
    (out_grid, out)
}

pub(crate) fn permute_volume(v: &Volume, perm: [usize; 3]) -> Volume {
    let (grid, samples) = permute_index_copy(&v.samples, &v.grid, perm);
    Volume::new(grid, samples).expect("permutation preserves counts")
}

pub(crate) fn permute_mask(m: &Mask, perm: [usize; 3]) -> Mask {
    let (grid, labels) = permute_index_copy(&m.labels, &m.grid, perm);
    Mask::new(grid, labels).expect("permutation preserves counts")
}

/// One generated case: ground truth plus its three preprocessed scans.
struct PhantomCase {
    id: String,
    truth: Mask,
    /// Indexed like ORIENTATIONS: axial, sagittal, coronal.
    scans: Vec<Volume>,
}

fn case_rng(seed: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64 + 1);
    rng
}

fn generate_case(cfg: &ExperimentConfig, i: usize) -> Result<PhantomCase> {
    let mut rng = case_rng(cfg.seed, i);
    let mut radii = [0.0; 3];
    for r in &mut radii {
        *r = rng.gen_range(cfg.radii_range_mm[0]..=cfg.radii_range_mm[1]);
    }
    let (vol, truth) = generate_phantom(&cfg.phantom_spec(radii), &mut rng)?;
    let mut scans = Vec::with_capacity(3);
    for &o in &ORIENTATIONS {
        // the axial scan defines the case frame; the others may be moved
        let misaligned = o != Orientation::Axial
            && (cfg.misalignment_mm > 0.0 || cfg.misalignment_deg > 0.0);
        let misalignment = misaligned.then(|| RigidMisalignment {
            translation_mm: [
                rng.gen_range(-cfg.misalignment_mm..=cfg.misalignment_mm),
                rng.gen_range(-cfg.misalignment_mm..=cfg.misalignment_mm),
                rng.gen_range(-cfg.misalignment_mm..=cfg.misalignment_mm),
            ],
            rotation_deg: rng.gen_range(-cfg.misalignment_deg..=cfg.misalignment_deg),
        });
        let acq = AcquisitionSpec {
            orientation: o,
            in_plane_mm: cfg.iso_spacing_mm,
            slice_thickness_mm: cfg.slice_thickness_mm,
            noise_sigma: cfg.scan_noise_sigma,
            misalignment,
        };
        let scan = simulate_acquisition(&vol, &acq, &mut rng)?;
        scans.push(normalize_percentile(&scan, 1.0, 99.0)?);
    }
    Ok(PhantomCase {
        id: format!("case{i:02}"),
        truth,
        scans,
    })
}

/// One network to train: either a native multi-stream variant or a
/// single-stream model fed one orientation reoriented to thick-z.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ModelPlan {
    name: &'static str,
    variant: PlaneVariant,
    reorient: Option<Orientation>,
}

fn model_plans(approaches: &[Approach]) -> Vec<ModelPlan> {
    let has = |a: Approach| approaches.contains(&a);
    let mut plans = Vec::new();
    if has(Approach::Single) || has(Approach::Ensemble) {
        plans.push(ModelPlan {
            name: "single",
            variant: PlaneVariant::Single,
            reorient: Some(Orientation::Axial),
        });
    }
    if has(Approach::Dual) {
        plans.push(ModelPlan {
            name: "dual",
            variant: PlaneVariant::Dual,
            reorient: None,
        });
    }
    if has(Approach::Triple) {
        plans.push(ModelPlan {
            name: "triple",
            variant: PlaneVariant::Triple,
            reorient: None,
        });
    }
    if has(Approach::Ensemble) {
        plans.push(ModelPlan {
            name: "single_sagittal",
            variant: PlaneVariant::Single,
            reorient: Some(Orientation::Sagittal),
        });
        plans.push(ModelPlan {
            name: "single_coronal",
            variant: PlaneVariant::Single,
            reorient: Some(Orientation::Coronal),
        });
    }
    plans
}

fn model_example(plan: &ModelPlan, case: &PhantomCase) -> TrainExample {
    match plan.reorient {
        Some(o) => {
            let perm = to_thick_z_perm(o);
            TrainExample {
                inputs: vec![permute_volume(&case.scans[orientation_index(o)], perm)],
                target: permute_mask(&case.truth, perm),
            }
        }
        None => TrainExample {
            inputs: plan
                .variant
                .orientations()
                .iter()
                .map(|&o| case.scans[orientation_index(o)].clone())
                .collect(),
            target: case.truth.clone(),
        },
    }
}

struct TrainedModel {
    spec: NetworkSpec,
    params: NetworkParams,
}

/// Thresholds sigmoid outputs at 1/2.
fn binarize(v: &Volume, threshold: f64) -> Mask {
    let labels = v.samples.iter().map(|&s| u8::from(s >= threshold)).collect();
    Mask::new(v.grid, labels).expect("same grid")
}

/// Runs one trained model on a case and returns its binary prediction on
/// the ground-truth grid (reoriented models are permuted back).
fn predict(model: &TrainedModel, plan: &ModelPlan, case: &PhantomCase) -> Result<Mask> {
    let example = model_example(plan, case);
    let tensors: Vec<Tensor> = example.inputs.iter().map(volume_to_tensor).collect();
    let mut params = model.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = exec::forward(&model.spec, &mut params, &tensors, Mode::Infer, &mut rng)?;
    let out = exec::tensor_to_volume(pass.tape.value(pass.output), example.target.grid)?;
    let pred = binarize(&out, 0.5);
    match plan.reorient {
        Some(o) => Ok(permute_mask(&pred, inverse_perm(to_thick_z_perm(o)))),
        None => Ok(pred),
    }
}

/// Distinct per-model training seed derived from the experiment seed.
fn model_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Approach-to-prediction assembly for one test case.
fn approach_prediction(
    approach: Approach,
    case: &PhantomCase,
    models: &BTreeMap<&'static str, (ModelPlan, TrainedModel)>,
) -> Result<Mask> {
    let model = |name: &str| -> Result<&(ModelPlan, TrainedModel)> {
        models
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("model `{name}` was not trained")))
    };
    let raw = match approach {
        Approach::Single => {
            let (plan, m) = model("single")?;
            predict(m, plan, case)?
        }
        Approach::Dual => {
            let (plan, m) = model("dual")?;
            predict(m, plan, case)?
        }
        Approach::Triple => {
            let (plan, m) = model("triple")?;
            predict(m, plan, case)?
        }
        Approach::Ensemble => {
            let mut votes = Vec::with_capacity(3);
            for name in ["single", "single_sagittal", "single_coronal"] {
                let (plan, m) = model(name)?;
                votes.push(predict(m, plan, case)?);
            }
            majority_vote(&votes)?
        }
    };
    Ok(largest_component(&raw, Connectivity::TwentySix))
}

const REGIONS: [&str; 4] = ["whole", "apex", "mid", "base"];
const METRICS: [&str; 3] = ["dsc", "abd_mm", "hd95_mm"];

fn metric_value(row: &ResultRow, metric: &str) -> Option<f64> {
    match metric {
        "dsc" => Some(row.dsc),
        "abd_mm" => row.abd_mm,
        "hd95_mm" => row.hd95_mm,
        _ => None,
    }
}

/// Paired Wilcoxon rows for one approach pair over all regions and metrics.
fn compare_approaches(
    rows: &[ResultRow],
    comparison: &str,
    challenger: Approach,
    baseline: Approach,
    two_sided: bool,
) -> Vec<SignificanceRow> {
    let mut out = Vec::new();
    for region in REGIONS {
        for metric in METRICS {
            let pick = |a: Approach| -> BTreeMap<&str, f64> {
                rows.iter()
                    .filter(|r| r.approach == a.name() && r.region == region)
                    .filter_map(|r| metric_value(r, metric).map(|v| (r.case.as_str(), v)))
                    .collect()
            };
            let xs = pick(challenger);
            let ys = pick(baseline);
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (case, &x) in &xs {
                if let Some(&y) = ys.get(case) {
                    a.push(x);
                    b.push(y);
                }
            }
            let alternative = if two_sided {
                Alternative::TwoSided
            } else if metric == "dsc" {
                // improvement means higher overlap but lower distances
                Alternative::Greater
            } else {
                Alternative::Less
            };
            let p_value = if a.is_empty() {
                None
            } else {
                wilcoxon_signed_rank(&a, &b, alternative)
                    .ok()
                    .map(|r| r.p_value)
            };
            out.push(SignificanceRow {
                comparison: comparison.to_string(),
                region: region.to_string(),
                metric: metric.to_string(),
                p_value,
            });
        }
    }
    out
}

fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["case", "approach", "region", "dsc", "abd_mm", "hd95_mm"])?;
    for r in rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        w.write_record([
            r.case.as_str(),
            r.approach.as_str(),
            r.region.as_str(),
            &format!("{:.6}", r.dsc),
            &fmt(r.abd_mm),
            &fmt(r.hd95_mm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_significance_csv(path: &Path, rows: &[SignificanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["comparison", "region", "metric", "p_value"])?;
    for r in rows {
        let p = r.p_value.map(|p| format!("{p:.6e}")).unwrap_or_default();
        w.write_record([r.comparison.as_str(), r.region.as_str(), r.metric.as_str(), &p])?;
    }
    w.flush()?;
    Ok(())
}

fn write_split_csv(path: &Path, split: &[(String, Role)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["case", "role"])?;
    for (case, role) in split {
        w.write_record([case.as_str(), role.name()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_failures_csv(path: &Path, rows: &[FailureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["case", "approach", "error"])?;
    for r in rows {
        w.write_record([r.case.as_str(), r.approach.as_str(), r.error.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full comparison and writes results.csv, significance.csv,
/// split.csv, failures.csv, and per-model loss histories into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;

    // cases are independent given their per-case rng streams
    let cases: Vec<PhantomCase> = (0..cfg.cases)
        .into_par_iter()
        .map(|i| generate_case(cfg, i))
        .collect::<Result<_>>()?;
    let split: Vec<(String, Role)> = cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let role = if i < cfg.train_cases {
                Role::Train
            } else if i < cfg.train_cases + cfg.val_cases {
                Role::Val
            } else {
                Role::Test
            };
            (c.id.clone(), role)
        })
        .collect();
    let train_set = &cases[..cfg.train_cases];
    let val_set = &cases[cfg.train_cases..cfg.train_cases + cfg.val_cases];
    let test_set = &cases[cfg.train_cases + cfg.val_cases..];

    let aug = if cfg.augment {
        AugmentationSpec::standard(cfg.slice_thickness_mm)
    } else {
        AugmentationSpec::identity()
    };

    let mut models: BTreeMap<&'static str, (ModelPlan, TrainedModel)> = BTreeMap::new();
    let mut failures: Vec<FailureRow> = Vec::new();
    for (idx, plan) in model_plans(&cfg.approaches).into_iter().enumerate() {
        let hp = if cfg.tuned_per_variant {
            HyperParams::tuned(plan.variant)
        } else {
            HyperParams {
                dropout_rate: cfg.dropout_rate,
                use_batchnorm: false,
                upsampling_mode: UpsamplingMode::Trilinear,
            }
        };
        let spec = build_multistream(&PlaneConfig::standard(plan.variant), cfg.base_width, hp)?;
        let data = Dataset {
            train: train_set.iter().map(|c| model_example(&plan, c)).collect(),
            val: val_set.iter().map(|c| model_example(&plan, c)).collect(),
        };
        match train(&spec, &data, &cfg.train, &aug, model_seed(cfg.seed, idx)) {
            Ok(outcome) => {
                let history_path = out_dir.join(format!("history_{}.csv", plan.name));
                write_history_csv(&history_path, &outcome.history)?;
                models.insert(plan.name, (plan, TrainedModel { spec, params: outcome.params }));
            }
            Err(e) => {
                // every test case of the affected approaches is flagged
                for approach in &cfg.approaches {
                    let affected = match approach {
                        Approach::Single => plan.name == "single",
                        Approach::Dual => plan.name == "dual",
                        Approach::Triple => plan.name == "triple",
                        Approach::Ensemble => plan.name.starts_with("single"),
                    };
                    if affected {
                        for case in test_set {
                            failures.push(FailureRow {
                                case: case.id.clone(),
                                approach: approach.name().to_string(),
                                error: format!("training `{}` failed: {e}", plan.name),
                            });
                        }
                    }
                }
            }
        }
    }

    let mut rows: Vec<ResultRow> = Vec::new();
    for approach in [Approach::Single, Approach::Dual, Approach::Triple, Approach::Ensemble] {
        if !cfg.approaches.contains(&approach) {
            continue;
        }
        if failures.iter().any(|f| f.approach == approach.name()) {
            continue;
        }
        // per-case work is independent; evaluation parallelizes over cases
        let evaluated: Vec<(String, Result<Vec<ResultRow>>)> = test_set
            .par_iter()
            .map(|case| {
                let result = approach_prediction(approach, case, &models).and_then(|pred| {
                    let report = regional_metrics(&pred, &case.truth, &case.id, true)?;
                    Ok(report
                        .rows()
                        .iter()
                        .map(|(region, m)| ResultRow {
                            case: case.id.clone(),
                            approach: approach.name().to_string(),
                            region: region.name().to_string(),
                            dsc: m.dsc,
                            abd_mm: m.abd_mm,
                            hd95_mm: m.hd95_mm,
                        })
                        .collect())
                });
                (case.id.clone(), result)
            })
            .collect();
        for (case_id, result) in evaluated {
            match result {
                Ok(mut case_rows) => rows.append(&mut case_rows),
                Err(e) => failures.push(FailureRow {
                    case: case_id,
                    approach: approach.name().to_string(),
                    error: e.to_string(),
                }),
            }
        }
    }

    let mut significance: Vec<SignificanceRow> = Vec::new();
    let has = |a: Approach| {
        cfg.approaches.contains(&a) && rows.iter().any(|r| r.approach == a.name())
    };
    if has(Approach::Dual) && has(Approach::Single) {
        significance.extend(compare_approaches(
            &rows,
            "dual_vs_single",
            Approach::Dual,
            Approach::Single,
            false,
        ));
    }
    if has(Approach::Triple) && has(Approach::Single) {
        significance.extend(compare_approaches(
            &rows,
            "triple_vs_single",
            Approach::Triple,
            Approach::Single,
            false,
        ));
    }
    if has(Approach::Ensemble) && has(Approach::Triple) {
        significance.extend(compare_approaches(
            &rows,
            "ensemble_vs_triple",
            Approach::Ensemble,
            Approach::Triple,
            true,
        ));
    }

    write_results_csv(&out_dir.join("results.csv"), &rows)?;
    write_significance_csv(&out_dir.join("significance.csv"), &significance)?;
    write_split_csv(&out_dir.join("split.csv"), &split)?;
    write_failures_csv(&out_dir.join("failures.csv"), &failures)?;
    Ok(ExperimentSummary {
        rows,
        significance,
        failures,
        split,
    })
}
