//! Hyperparameter optimization: a successive-halving budget ladder fed by a
//! density-ratio configuration model.
//!
//! Each iteration samples half its configurations from the model (once
//! enough trials exist) and half at random, then runs them through one
//! bracket: everyone starts on the minimum budget, the best half survives,
//! survivors re-run at doubled budget, until one configuration remains. The
//! model splits completed trials at the γ-quantile of loss into good/bad
//! sets and fits per-dimension densities (Gaussian kernels in log learning
//! rate, Laplace-smoothed tables for the categorical dimensions); sampling
//! draws candidates from the good densities and keeps the candidate with the
//! highest good/bad density ratio.

pub mod model;
pub mod synthetic;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{UpsamplingMode, DROPOUT_GRID};
pub use model::{fit_model, sample_model, ConfigModel};

/// Supports of the searched dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Learning-rate bounds; sampling is log-uniform between them.
    pub lr_min: f64,
    pub lr_max: f64,
    /// Allowed dropout rates.
    pub dropout_grid: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr_min: 1e-6,
            lr_max: 1e-3,
            dropout_grid: DROPOUT_GRID.to_vec(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning-rate range [{}, {}] must be positive and ordered",
                self.lr_min, self.lr_max
            )));
        }
        if self.dropout_grid.is_empty()
            || self.dropout_grid.iter().any(|&d| !(0.0..1.0).contains(&d))
        {
            return Err(Error::InvalidConfig(
                "dropout grid must be nonempty with rates in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub upsampling_mode: UpsamplingMode,
    pub batch_normalization: bool,
}

/// Terminal state of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialStatus {
    Completed,
    Failed,
}

/// One objective evaluation at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub config: Configuration,
    /// Budget in epochs.
    pub budget: f64,
    /// Validation loss; present iff completed.
    pub loss: Option<f64>,
    pub status: TrialStatus,
    /// Seed handed to the objective.
    pub seed: u64,
}

/// Successive-halving ladder: (configurations, budget) per rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub rungs: Vec<(usize, f64)>,
}

/// Halve survivors (ceiling) and double budgets until one config remains.
pub fn make_bracket(n: usize, min_budget: f64) -> Bracket {
    assert!(n >= 1, "bracket needs at least one configuration");
    let mut rungs = Vec::new();
    let mut count = n;
    let mut budget = min_budget;
    loop {
        rungs.push((count, budget));
        if count == 1 {
            break;
        }
        count = count.div_ceil(2);
        budget *= 2.0;
    }
    Bracket { rungs }
}

/// Scheduler settings; defaults follow the documented non-paper choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoConfig {
    pub iterations: usize,
    pub n_per_iteration: usize,
    pub min_budget: f64,
    /// Disable to fall back to pure random sampling (schedule unchanged).
    pub use_model: bool,
    /// Quantile splitting trials into good/bad for the model.
    pub gamma: f64,
    /// Completed trials needed at one budget level before the model fits.
    pub n_min: usize,
    /// Candidates drawn per model sample.
    pub k_candidates: usize,
    pub seed: u64,
}

impl Default for HpoConfig {
    fn default() -> Self {
        HpoConfig {
            iterations: 5,
            n_per_iteration: 8,
            min_budget: 5.0,
            use_model: true,
            gamma: 0.25,
            n_min: 6,
            k_candidates: 16,
            seed: 0,
        }
    }
}

impl HpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.n_per_iteration == 0 || self.k_candidates == 0 {
            return Err(Error::InvalidConfig(
                "iterations, n_per_iteration, and k_candidates must be >= 1".into(),
            ));
        }
        if !(self.min_budget > 0.0 && self.min_budget.is_finite()) {
            return Err(Error::InvalidConfig("min_budget must be positive".into()));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::InvalidConfig("gamma must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Uniform draw: log-uniform learning rate, uniform categoricals.
pub fn sample_random(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Configuration {
    let log_lr = rng.gen_range(space.lr_min.log10()..=space.lr_max.log10());
    let dropout = space.dropout_grid[rng.gen_range(0..space.dropout_grid.len())];
    let upsampling = if rng.gen_bool(0.5) {
        UpsamplingMode::Trilinear
    } else {
        UpsamplingMode::Transposed
    };
    Configuration {
        learning_rate: 10f64.powf(log_lr),
        dropout_rate: dropout,
        upsampling_mode: upsampling,
        batch_normalization: rng.gen_bool(0.5),
    }
}

/// Indices of the `keep` lowest-loss entries, ties broken by index.
pub fn select_survivors(losses: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    kept
}

/// Result of an optimization run: the best trial plus the full ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoOutcome {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// Runs the full schedule against an objective `(config, budget, seed) -> loss`.
///
/// Failed evaluations are recorded in the ledger and excluded from both
/// survivor selection and model fitting; the run continues.
pub fn run_hpo<F>(objective: &mut F, space: &SearchSpace, cfg: &HpoConfig) -> Result<HpoOutcome>
where
    F: FnMut(&Configuration, f64, u64) -> Result<f64>,
{
    space.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ledger: Vec<Trial> = Vec::new();
    for _ in 0..cfg.iterations {
        let model = if cfg.use_model {
            fit_model(&ledger, space, cfg.gamma, cfg.n_min)
        } else {
            None
        };
        let n = cfg.n_per_iteration;
        let n_model = if model.is_some() { n / 2 } else { 0 };
        let mut configs: Vec<Configuration> = Vec::with_capacity(n);
        if let Some(m) = &model {
            for _ in 0..n_model {
                configs.push(sample_model(m, cfg.k_candidates, &mut rng));
            }
        }
        while configs.len() < n {
            configs.push(sample_random(space, &mut rng));
        }
        let bracket = make_bracket(n, cfg.min_budget);
        let mut current = configs;
        for (rung_idx, &(rung_n, budget)) in bracket.rungs.iter().enumerate() {
            debug_assert_eq!(current.len().min(rung_n), current.len());
            let mut losses: Vec<f64> = Vec::with_capacity(current.len());
            for config in &current {
                let seed = rng.gen::<u64>();
                match objective(config, budget, seed) {
                    Ok(loss) if loss.is_finite() => {
                        losses.push(loss);
                        ledger.push(Trial {
                            config: *config,
                            budget,
                            loss: Some(loss),
                            status: TrialStatus::Completed,
                            seed,
                        });
                    }
                    _ => {
                        losses.push(f64::INFINITY);
                        ledger.push(Trial {
                            config: *config,
                            budget,
                            loss: None,
                            status: TrialStatus::Failed,
                            seed,
                        });
                    }
                }
            }
            let Some(&(next_n, _)) = bracket.rungs.get(rung_idx + 1) else {
                break;
            };
            let survivors = select_survivors(&losses, next_n);
            // failed trials never advance
            let alive: Vec<Configuration> = survivors
                .into_iter()
                .filter(|&i| losses[i].is_finite())
                .map(|i| current[i])
                .collect();
            if alive.is_empty() {
                break;
            }
            current = alive;
        }
    }
    let best = ledger
        .iter()
        .filter(|t| t.status == TrialStatus::Completed)
        .min_by(|a, b| {
            a.loss
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.loss.unwrap_or(f64::INFINITY))
        })
        .cloned()
        .ok_or_else(|| Error::EmptyInput("every trial failed".into()))?;
    Ok(HpoOutcome { best, trials: ledger })
}

/// Writes the ledger as JSON lines, one trial per line.
pub fn write_ledger(path: &Path, trials: &[Trial]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines ledger back.
pub fn read_ledger(path: &Path) -> Result<Vec<Trial>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut trials = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trials.push(serde_json::from_str(&line)?);
    }
    Ok(trials)
}
