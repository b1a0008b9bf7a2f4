//! Agent scores with percentile bootstrap intervals for all three methods,
//! plus the PEC minus MV shift per agent.

use stableval::em::{fit, EmConfig};
use stableval::scoring::{score_all, Method};
use stableval::synth::{sample_world, SynthConfig};

fn main() -> stableval::Result<()> {
    let world = sample_world(&SynthConfig {
        n_items_per_agent: 80,
        adversarial_frac: 0.3,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let em = fit(&world.dataset, &EmConfig::default())?;
    let summary = score_all(&world.dataset, &Method::ALL, Some(&em), 1000, 7)?;

    println!(
        "{:<8} {:>4} {:>7} {:>17}",
        "agent", "", "score", "95% interval"
    );
    for r in &summary.reports {
        println!(
            "{:<8} {:>4} {:>7.3}   [{:.3}, {:.3}]",
            r.agent_id,
            r.method.name(),
            r.score,
            r.ci_low,
            r.ci_high
        );
    }
    println!("\ntrue scores:");
    for (agent, s) in world.true_scores() {
        println!("  {agent:<8} {s:.3}");
    }
    println!("\nPEC - MV:");
    for d in &summary.deltas {
        println!("  {:<8} {:+.3}", d.agent_id, d.delta);
    }
    Ok(())
}
