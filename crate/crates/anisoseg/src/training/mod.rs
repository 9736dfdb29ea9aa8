//! Soft-Dice training: Adam optimization, early stopping, augmentation, and
//! the epoch loop with best-epoch parameter selection.
//!
//! One training run is sequential over epochs; randomness (augmentation and
//! dropout) is drawn from a per-(epoch, example) rng stream, so the loss
//! history is a pure function of the seed.

pub mod augment;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::exec::{self, volume_to_tensor, NetworkParams};
use crate::network::{infer_shapes, NetworkSpec};
use crate::tensor::{Gradients, Mode, Tape, Tensor, TensorId};
use crate::volume::{Mask, Volume};
use augment::AugmentationSpec;

/// Optimizer and stopping-rule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub batch_size: usize,
    pub epsilon_dice: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            max_epochs: 270,
            patience: 100,
            min_delta: 0.001,
            batch_size: 1,
            epsilon_dice: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("min_delta", self.min_delta),
            ("epsilon_dice", self.epsilon_dice),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be in [0, 1), got {v}"
                )));
            }
        }
        if self.max_epochs == 0 || self.batch_size != 1 {
            return Err(Error::InvalidConfig(
                "max_epochs must be >= 1 and batch_size must be 1".into(),
            ));
        }
        Ok(())
    }

    /// Reads a config from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<TrainConfig> {
        let cfg: TrainConfig = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// First/second moment estimates per named parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }
}

/// One Adam update over all named gradients; aborts on non-finite gradients.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, grad) in grads {
        if !grad.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient for '{name}' at step {}",
                state.step + 1
            )));
        }
        let p = params
            .tensors
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("parameters lack tensor '{name}'")))?;
        if p.shape() != grad.shape() {
            return Err(Error::ShapeMismatch(format!(
                "gradient for '{name}' has shape {:?}, parameter {:?}",
                grad.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);
    for (name, grad) in grads {
        let p = params.tensors.get_mut(name).expect("validated above");
        let n = p.len();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let pd = p.data_mut();
        let gd = grad.data();
        for i in 0..n {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * gd[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gd[i] * gd[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            pd[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Stop when the best validation loss has not improved by at least
/// `min_delta` (inclusive) within the last `patience` epochs.
pub fn early_stop_check(history: &[f64], min_delta: f64, patience: usize) -> bool {
    let mut best = f64::INFINITY;
    let mut wait = 0usize;
    for &loss in history {
        // an improvement of exactly min_delta counts ("at least")
        if loss <= best - min_delta {
            best = loss;
            wait = 0;
        } else {
            wait += 1;
        }
    }
    wait >= patience
}

/// One training case: per-stream inputs plus the target on the output grid.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub inputs: Vec<Volume>,
    pub target: Mask,
}

/// Train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TrainExample>,
    pub val: Vec<TrainExample>,
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of a training run: best-epoch parameters plus the full history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn mask_to_tensor(m: &Mask) -> Tensor {
    let [nx, ny, nz] = m.grid.dims;
    let data = m.labels.iter().map(|&l| f64::from(l)).collect();
    Tensor::new(vec![1, 1, nz, ny, nx], data).expect("mask buffer matches its grid")
}

/// Records forward + loss for one example; returns the tape and loss node.
fn example_loss(
    spec: &NetworkSpec,
    params: &mut NetworkParams,
    example: &TrainExample,
    eps: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Tape, TensorId, BTreeMap<String, TensorId>)> {
    let inputs: Vec<Tensor> = example.inputs.iter().map(volume_to_tensor).collect();
    let pass = exec::forward(spec, params, &inputs, mode, rng)?;
    let mut tape = pass.tape;
    let g = tape.leaf(mask_to_tensor(&example.target), false);
    let loss = tape.soft_dice_loss(pass.output, g, eps)?;
    Ok((tape, loss, pass.param_ids))
}

/// Mean validation loss in infer mode (no augmentation, no dropout).
pub fn evaluate(
    spec: &NetworkSpec,
    params: &mut NetworkParams,
    examples: &[TrainExample],
    eps: f64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for ex in examples {
        let (tape, loss, _) = example_loss(spec, params, ex, eps, Mode::Infer, &mut rng)?;
        total += tape.value(loss).item();
    }
    Ok(total / examples.len() as f64)
}

fn collect_grads(
    tape: &Tape,
    grads: &Gradients,
    param_ids: &BTreeMap<String, TensorId>,
) -> BTreeMap<String, Tensor> {
    param_ids
        .iter()
        .map(|(name, &id)| (name.clone(), grads.get_or_zeros(tape, id)))
        .collect()
}

fn check_dataset(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::EmptyInput(
            "training needs nonempty train and validation sets".into(),
        ));
    }
    for ex in data.train.iter().chain(&data.val) {
        let dims: Vec<[usize; 3]> = ex.inputs.iter().map(|v| v.grid.dims).collect();
        let report = infer_shapes(spec, &dims)?;
        if report.output_dims != ex.target.grid.dims {
            return Err(Error::ShapeMismatch(format!(
                "target grid {:?} does not match network output {:?}",
                ex.target.grid.dims, report.output_dims
            )));
        }
    }
    Ok(())
}

/// Per-(epoch, example) rng: same seed, distinct ChaCha stream.
fn stream_rng(seed: u64, epoch: usize, example: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | (example as u64 + 1));
    rng
}

/// Full training run; deterministic given `seed`.
///
/// Parameters are initialized from the seed, each epoch optimizes every
/// train example once (batch size 1), validation runs in infer mode, and the
/// returned parameters are a snapshot of the best validation epoch.
pub fn train(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    aug: &AugmentationSpec,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(spec, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = exec::init_params(spec, &mut rng);
    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut val_history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    for epoch in 1..=cfg.max_epochs {
        let mut train_total = 0.0;
        for (i, ex) in data.train.iter().enumerate() {
            let mut ex_rng = stream_rng(seed, epoch, i);
            let (vols, target) = augment::augment(&ex.inputs, &ex.target, aug, &mut ex_rng)?;
            let augmented = TrainExample { inputs: vols, target };
            let (tape, loss, param_ids) =
                example_loss(spec, &mut params, &augmented, cfg.epsilon_dice, Mode::Train, &mut ex_rng)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch}, example {i}"
                )));
            }
            train_total += loss_value;
            let grads = tape.backward(loss)?;
            let named = collect_grads(&tape, &grads, &param_ids);
            adam_step(&mut params, &named, &mut adam, cfg)?;
        }
        let train_loss = train_total / data.train.len() as f64;
        let val_loss = evaluate(spec, &mut params, &data.val, cfg.epsilon_dice)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss diverged at epoch {epoch}"
            )));
        }
        history.push(EpochLoss { epoch, train_loss, val_loss });
        val_history.push(val_loss);
        if val_loss < best {
            best = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if early_stop_check(&val_history, cfg.min_delta, cfg.patience) {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_loss: best,
    })
}

/// Writes the loss history as `epoch,train_loss,val_loss` CSV.
pub fn write_history_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for row in history {
        w.write_record([
            row.epoch.to_string(),
            format!("{:.17e}", row.train_loss),
            format!("{:.17e}", row.val_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}
