//! Watch the EM objective climb on a synthetic world and compare the MAP fit
//! with the unsmoothed maximum-likelihood fit.

use stableval::em::{fit, EmConfig};
use stableval::synth::{sample_world, SynthConfig};

fn main() -> stableval::Result<()> {
    let world = sample_world(&SynthConfig {
        n_items_per_agent: 60,
        adversarial_frac: 0.2,
        seed: 3,
        ..SynthConfig::default()
    })?;

    for (name, alpha) in [("MAP (alpha = 2)", 2.0), ("ML (alpha = 1)", 1.0)] {
        let config = EmConfig {
            alpha_mu: alpha,
            alpha_pi: alpha,
            ..EmConfig::default()
        };
        let result = fit(&world.dataset, &config)?;
        println!(
            "{name}: {} iterations, converged={}",
            result.iterations, result.converged
        );
        for (t, v) in result.log_likelihood_trace.iter().enumerate().take(6) {
            println!("  iter {t:>2}  objective {v:.4}");
        }
        println!("  final log-likelihood {:.4}", result.log_likelihood);
        let mu: Vec<String> = result.params.mu.iter().map(|m| format!("{m:.3}")).collect();
        println!("  class prior [{}]\n", mu.join(", "));
    }
    Ok(())
}
