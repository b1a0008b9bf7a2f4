//! Annotator profiles and item ambiguity from a fitted model. The synthetic
//! population mixes reliable, strict, lenient and adversarial raters, so the
//! profiles should separate them.

use stableval::diagnostics::{annotator_profiles, high_ambiguity_rate, item_ambiguity};
use stableval::em::{fit, EmConfig};
use stableval::synth::{sample_world, SynthConfig};

fn main() -> stableval::Result<()> {
    let world = sample_world(&SynthConfig {
        n_annotators: 12,
        adversarial_frac: 0.25,
        strict_frac: 0.25,
        lenient_frac: 0.25,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let em = fit(&world.dataset, &EmConfig::default())?;

    println!(
        "{:<8} {:<12} {:>8} {:>9} {:>10}",
        "rater", "archetype", "accuracy", "leniency", "strictness"
    );
    let profiles = annotator_profiles(&em.params, &world.dataset);
    for p in &profiles {
        let r = world
            .dataset
            .annotator_index(&p.annotator_id)
            .expect("known annotator");
        println!(
            "{:<8} {:<12} {:>8.3} {:>9.3} {:>10.3}",
            p.annotator_id,
            world.annotator_types[r].name(),
            p.accuracy,
            p.leniency,
            p.strictness
        );
    }

    let ambiguity = item_ambiguity(&em.posteriors, world.dataset.items());
    println!(
        "\nhighly ambiguous items: {:.1}%",
        100.0 * high_ambiguity_rate(&ambiguity)
    );
    for rec in ambiguity.iter().take(5) {
        println!(
            "  {}  ambiguity {:.3}  entropy {:.3}  predicted {}",
            rec.item_id, rec.ambiguity, rec.entropy, rec.predicted
        );
    }
    Ok(())
}
