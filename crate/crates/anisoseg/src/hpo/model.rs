//! Density-ratio configuration model over completed trials.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Configuration, SearchSpace, Trial, TrialStatus};
use crate::network::UpsamplingMode;

/// Gaussian kernel density estimate in one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    pub points: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde1d {
    /// Silverman plug-in bandwidth with a floor for degenerate samples.
    pub fn fit(points: Vec<f64>, floor: f64) -> Kde1d {
        assert!(!points.is_empty(), "kde needs data");
        let n = points.len() as f64;
        let mean = points.iter().sum::<f64>() / n;
        let var = points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let bandwidth = (1.06 * var.sqrt() * n.powf(-0.2)).max(floor);
        Kde1d { points, bandwidth }
    }

    /// Mixture density at `x`; integrates to 1 over the real line.
    pub fn pdf(&self, x: f64) -> f64 {
        let norm = 1.0 / (self.bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let mut acc = 0.0;
        for &p in &self.points {
            let u = (x - p) / self.bandwidth;
            acc += norm * (-0.5 * u * u).exp();
        }
        acc / self.points.len() as f64
    }

    /// Draws from the mixture: a random kernel plus Gaussian noise.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let p = self.points[rng.gen_range(0..self.points.len())];
        let z: f64 = rng.sample(StandardNormal);
        p + self.bandwidth * z
    }
}

/// Laplace-smoothed categorical frequency table; probabilities sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CatTable {
    pub probs: Vec<f64>,
}

impl CatTable {
    pub fn fit(counts: &[usize]) -> CatTable {
        let total: usize = counts.iter().sum();
        let k = counts.len();
        let probs = counts
            .iter()
            .map(|&c| (c + 1) as f64 / (total + k) as f64)
            .collect();
        CatTable { probs }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let mut u: f64 = rng.gen_range(0.0..1.0);
        for (i, &p) in self.probs.iter().enumerate() {
            if u < p {
                return i;
            }
            u -= p;
        }
        self.probs.len() - 1
    }
}

/// Good/bad densities per dimension; learning rate modeled in log10 space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigModel {
    pub space: SearchSpace,
    /// Budget level the model was fitted at.
    pub budget_level: f64,
    pub lr_good: Kde1d,
    pub lr_bad: Kde1d,
    pub dropout_good: CatTable,
    pub dropout_bad: CatTable,
    pub upsampling_good: CatTable,
    pub upsampling_bad: CatTable,
    pub batchnorm_good: CatTable,
    pub batchnorm_bad: CatTable,
}

/// Bandwidth floor in log10-learning-rate decades.
const LR_BANDWIDTH_FLOOR: f64 = 0.05;

fn dropout_index(space: &SearchSpace, rate: f64) -> usize {
    space
        .dropout_grid
        .iter()
        .position(|&d| d == rate)
        .expect("configuration dropout comes from the grid")
}

fn upsampling_index(mode: UpsamplingMode) -> usize {
    match mode {
        UpsamplingMode::Trilinear => 0,
        UpsamplingMode::Transposed => 1,
    }
}

struct DimCounts {
    lr_log10: Vec<f64>,
    dropout: Vec<usize>,
    upsampling: Vec<usize>,
    batchnorm: Vec<usize>,
}

fn collect_counts(space: &SearchSpace, configs: &[&Configuration]) -> DimCounts {
    let mut c = DimCounts {
        lr_log10: Vec::with_capacity(configs.len()),
        dropout: vec![0; space.dropout_grid.len()],
        upsampling: vec![0; 2],
        batchnorm: vec![0; 2],
    };
    for cfg in configs {
        c.lr_log10.push(cfg.learning_rate.log10());
        c.dropout[dropout_index(space, cfg.dropout_rate)] += 1;
        c.upsampling[upsampling_index(cfg.upsampling_mode)] += 1;
        c.batchnorm[usize::from(cfg.batch_normalization)] += 1;
    }
    c
}

/// Fits the model from the ledger, or `None` when no budget level has
/// accumulated at least `n_min` completed trials yet.
///
/// Uses the highest such budget level; trials there are split at the
/// `gamma` quantile of loss (ties broken by ledger order) into good/bad.
pub fn fit_model(
    trials: &[Trial],
    space: &SearchSpace,
    gamma: f64,
    n_min: usize,
) -> Option<ConfigModel> {
    let completed: Vec<&Trial> = trials
        .iter()
        .filter(|t| t.status == TrialStatus::Completed && t.loss.is_some_and(f64::is_finite))
        .collect();
    let mut levels: Vec<f64> = completed.iter().map(|t| t.budget).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let level = levels
        .into_iter()
        .rev()
        .find(|&b| completed.iter().filter(|t| t.budget == b).count() >= n_min)?;
    let at_level: Vec<&Trial> = completed.into_iter().filter(|t| t.budget == level).collect();

    let mut order: Vec<usize> = (0..at_level.len()).collect();
    order.sort_by(|&a, &b| {
        at_level[a]
            .loss
            .unwrap()
            .total_cmp(&at_level[b].loss.unwrap())
            .then(a.cmp(&b))
    });
    let n_good = ((gamma * at_level.len() as f64).ceil() as usize).max(1);
    let good: Vec<&Configuration> = order[..n_good].iter().map(|&i| &at_level[i].config).collect();
    let bad: Vec<&Configuration> = order[n_good..].iter().map(|&i| &at_level[i].config).collect();
    // all trials in one bucket (tiny gamma*n): reuse it, ratios degenerate to 1
    let bad = if bad.is_empty() { good.clone() } else { bad };

    let g = collect_counts(space, &good);
    let b = collect_counts(space, &bad);
    Some(ConfigModel {
        space: space.clone(),
        budget_level: level,
        lr_good: Kde1d::fit(g.lr_log10, LR_BANDWIDTH_FLOOR),
        lr_bad: Kde1d::fit(b.lr_log10, LR_BANDWIDTH_FLOOR),
        dropout_good: CatTable::fit(&g.dropout),
        dropout_bad: CatTable::fit(&b.dropout),
        upsampling_good: CatTable::fit(&g.upsampling),
        upsampling_bad: CatTable::fit(&b.upsampling),
        batchnorm_good: CatTable::fit(&g.batchnorm),
        batchnorm_bad: CatTable::fit(&b.batchnorm),
    })
}

fn ratio(good: f64, bad: f64) -> f64 {
    good / bad.max(1e-300)
}

/// Draws `k` candidates from the good densities and keeps the candidate with
/// the highest good/bad density ratio. Never leaves the search space.
pub fn sample_model(model: &ConfigModel, k: usize, rng: &mut ChaCha8Rng) -> Configuration {
    let lo = model.space.lr_min.log10();
    let hi = model.space.lr_max.log10();
    let mut best: Option<(f64, Configuration)> = None;
    for _ in 0..k.max(1) {
        let log_lr = model.lr_good.sample(rng).clamp(lo, hi);
        let dropout_idx = model.dropout_good.sample(rng);
        let ups_idx = model.upsampling_good.sample(rng);
        let bn_idx = model.batchnorm_good.sample(rng);
        let score = ratio(model.lr_good.pdf(log_lr), model.lr_bad.pdf(log_lr))
            * ratio(model.dropout_good.probs[dropout_idx], model.dropout_bad.probs[dropout_idx])
            * ratio(model.upsampling_good.probs[ups_idx], model.upsampling_bad.probs[ups_idx])
            * ratio(model.batchnorm_good.probs[bn_idx], model.batchnorm_bad.probs[bn_idx]);
        let config = Configuration {
            learning_rate: 10f64.powf(log_lr),
            dropout_rate: model.space.dropout_grid[dropout_idx],
            upsampling_mode: if ups_idx == 0 {
                UpsamplingMode::Trilinear
            } else {
                UpsamplingMode::Transposed
            },
            batch_normalization: bn_idx == 1,
        };
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, config));
        }
    }
    best.expect("k >= 1").1
}
