//! Sweep the adversarial fraction and print the mean MSE of each method.

use stableval::em::EmConfig;
use stableval::scoring::Method;
use stableval::synth::{run_ablation, Axis, Metric, SynthConfig};

fn main() -> stableval::Result<()> {
    let base = SynthConfig {
        n_items_per_agent: 100,
        repetitions: 4,
        stability_repeats: 0,
        seed: 1,
        ..SynthConfig::default()
    };
    let axis = Axis::Adversarial;
    let result = run_ablation(axis, &axis.default_settings(), &base, &EmConfig::default())?;

    println!("{:<8} {:>9} {:>9} {:>9}", axis.name(), "MV", "DS", "PEC");
    for setting in &result.settings {
        let cells: Vec<String> = Method::ALL
            .iter()
            .map(|&m| {
                format!(
                    "{:>9.5}",
                    result.mean(setting, m, Metric::Mse).unwrap_or(f64::NAN)
                )
            })
            .collect();
        println!("{:<8} {}", setting.to_string(), cells.join(" "));
    }
    Ok(())
}
