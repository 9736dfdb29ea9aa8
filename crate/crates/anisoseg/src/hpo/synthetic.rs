//! Cheap synthetic objectives for exercising the optimizer end to end.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Configuration;
use crate::error::Result;
use crate::network::UpsamplingMode;

/// Noise-free convex bowl in log10 learning rate centered at `center_log10`.
pub fn convex_lr_objective(
    center_log10: f64,
) -> impl FnMut(&Configuration, f64, u64) -> Result<f64> {
    move |config, _budget, _seed| Ok((config.learning_rate.log10() - center_log10).powi(2))
}

/// Bowl at lr = 1e-4 plus penalties for off-target categorical choices and
/// seeded noise that shrinks as the budget grows.
pub fn noisy_categorical_objective(
    noise_scale: f64,
) -> impl FnMut(&Configuration, f64, u64) -> Result<f64> {
    move |config, budget, seed| {
        let mut loss = (config.learning_rate.log10() + 4.0).powi(2);
        if config.dropout_rate != 0.2 {
            loss += 0.3;
        }
        if config.upsampling_mode != UpsamplingMode::Transposed {
            loss += 0.3;
        }
        if !config.batch_normalization {
            loss += 0.3;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loss += rng.gen_range(-1.0..1.0) * noise_scale / budget.sqrt();
        Ok(loss)
    }
}
