//! Build a small dataset by hand and compare majority vote, Dawid–Skene hard
//! labels and posterior expected credit.

use stableval::em::{fit, EmConfig};
use stableval::mvote::majority_labels;
use stableval::scoring::{agent_scores, Method};
use stableval::{Annotation, AnnotationDataset, LabelScheme};

fn main() -> stableval::Result<()> {
    // (item, agent, [labels from r0, r1, r2]); r2 is harsh on everything.
    let rows = [
        ("q1", "alpha", [2, 2, 1]),
        ("q2", "alpha", [2, 2, 1]),
        ("q3", "alpha", [1, 2, 0]),
        ("q4", "beta", [1, 1, 0]),
        ("q5", "beta", [0, 1, 0]),
        ("q6", "beta", [2, 1, 1]),
    ];
    let mut raw = Vec::new();
    for (item, agent, labels) in rows {
        for (r, label) in labels.into_iter().enumerate() {
            raw.push(Annotation::new(item, agent, format!("r{r}"), label));
        }
    }
    let dataset = AnnotationDataset::new(raw, LabelScheme::ternary())?;
    println!("{}\n", dataset.summarize());

    let mv = majority_labels(&dataset);
    for (i, item) in dataset.items().iter().enumerate() {
        println!("{item}: MV label {} (tie: {})", mv.labels[i], mv.ties[i]);
    }

    let em = fit(&dataset, &EmConfig::default())?;
    println!(
        "\nEM converged={} after {} iterations",
        em.converged, em.iterations
    );
    for method in Method::ALL {
        let scores = agent_scores(&dataset, method, Some(&em))?;
        let line: Vec<String> = dataset
            .agents()
            .iter()
            .zip(&scores)
            .map(|(a, s)| format!("{a}={s:.3}"))
            .collect();
        println!("{:>3}: {}", method.name(), line.join("  "));
    }
    Ok(())
}
