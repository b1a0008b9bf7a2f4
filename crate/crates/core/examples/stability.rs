//! Ranking stability under annotator subsampling. With a large adversarial
//! share, majority-vote rankings tend to wobble more than PEC rankings.

use stableval::stability::{stability_run, StabilityConfig, SubsetSize};
use stableval::synth::{sample_world, QualityPreset, SynthConfig};

fn main() -> stableval::Result<()> {
    let world = sample_world(&SynthConfig {
        agent_qualities: QualityPreset::Tight.qualities().to_vec(),
        adversarial_frac: 0.4,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let config = StabilityConfig {
        subset: SubsetSize::Fraction(0.8),
        repeats: 20,
        seed: 9,
        ..StabilityConfig::default()
    };
    let report = stability_run(&world.dataset, &config)?;

    println!(
        "{} replicates of {} annotators",
        report.repeats, report.subset_size
    );
    for m in &report.methods {
        let tau = m
            .mean_tau_b
            .map_or("n/a".to_string(), |t| format!("{t:.3}"));
        println!(
            "{:>3}: mean tau_b {tau}, rank std {:.3}, rank range {:.3}",
            m.method.name(),
            m.mean_rank_std,
            m.mean_rank_range
        );
    }
    for (method, ranking) in &report.full_rankings {
        println!(
            "{:>3} full-data ranking: {}",
            method.name(),
            ranking.join(" > ")
        );
    }
    Ok(())
}
