//! Hyperband scheduling with a model-guided sampler on an analytic objective.
//!
//! Prints the successive-halving ladder, then optimizes a noisy bowl in
//! log learning rate with and without the configuration model, at equal
//! total budget.

use anisoseg::hpo::synthetic::noisy_categorical_objective;
use anisoseg::hpo::{make_bracket, run_hpo, HpoConfig, SearchSpace};

fn main() -> anisoseg::Result<()> {
    // Halve the survivors and double their budget until one remains.
    let bracket = make_bracket(8, 5.0);
    println!("bracket for n=8, min budget 5:");
    for (n, b) in &bracket.rungs {
        println!("  {n} configuration(s) at budget {b}");
    }

    // The objective's optimum: lr 1e-4, dropout 0.2, transposed, batch norm.
    let space = SearchSpace::default();
    for use_model in [false, true] {
        let label = if use_model { "model-guided" } else { "pure random" };
        let mut best_losses = Vec::new();
        for seed in 0..10 {
            let mut objective = noisy_categorical_objective(0.2);
            let cfg = HpoConfig { use_model, seed, ..HpoConfig::default() };
            let outcome = run_hpo(&mut objective, &space, &cfg)?;
            best_losses.push(outcome.best.loss.expect("completed best"));
        }
        best_losses.sort_by(f64::total_cmp);
        println!(
            "{label:13} over 10 seeds: median best loss {:.4}, worst {:.4}",
            (best_losses[4] + best_losses[5]) / 2.0,
            best_losses[9]
        );
    }

    // One full run's winning configuration.
    let mut objective = noisy_categorical_objective(0.2);
    let outcome = run_hpo(&mut objective, &space, &HpoConfig { seed: 3, ..HpoConfig::default() })?;
    let c = &outcome.best.config;
    println!(
        "seed 3 best: lr {:.2e}, dropout {}, {:?}, batch norm {} (loss {:.4}, {} trials)",
        c.learning_rate,
        c.dropout_rate,
        c.upsampling_mode,
        c.batch_normalization,
        outcome.best.loss.unwrap(),
        outcome.trials.len()
    );
    Ok(())
}
