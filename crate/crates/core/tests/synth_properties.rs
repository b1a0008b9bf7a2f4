use proptest::prelude::*;
use stableval::synth::{
    expected_agent_score, make_confusion, ranking_accuracy, run_ablation, sample_world, score_mse,
    Archetype, ArchetypeParams, Axis, Metric, QualityPreset, SynthConfig,
};
use stableval::{fit, EmConfig, LabelScheme, Method};

fn archetype() -> impl Strategy<Value = Archetype> {
    prop_oneof![
        Just(Archetype::Reliable),
        Just(Archetype::Strict),
        Just(Archetype::Lenient),
        Just(Archetype::Adversarial),
    ]
}

proptest! {
    #[test]
    fn confusion_rows_are_distributions(
        a in archetype(),
        k in 2usize..7,
        p in 0.0f64..=1.0,
        shift_frac in 0.0f64..=1.0,
        adv in 0.0f64..=1.0,
    ) {
        let params = ArchetypeParams { reliable_p: p, shift: shift_frac * p, adversarial_mass: adv };
        let m = make_confusion(a, k, &params).unwrap();
        for row in m.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn generated_labels_fit_the_scheme(seed in 0u64..1000, k in 2usize..5, adv in 0.0f64..0.5) {
        let cfg = SynthConfig {
            n_items_per_agent: 10,
            k,
            adversarial_frac: adv,
            seed,
            ..SynthConfig::default()
        };
        let w = sample_world(&cfg).unwrap();
        prop_assert!(w.dataset.annotations().iter().all(|a| a.label < k));
        prop_assert!(w.latent.iter().all(|&z| z < k));
        let scheme = w.dataset.scheme();
        for (a, score) in w.true_agent_scores.iter().enumerate() {
            let items = w.dataset.agent_items(a);
            let direct = items.iter().map(|&i| scheme.value(w.latent[i])).sum::<f64>() / items.len() as f64;
            prop_assert!((score - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn true_scores_approach_the_analytic_value() {
    let cfg = SynthConfig {
        n_items_per_agent: 10_000,
        labels_per_item: 1,
        seed: 3,
        ..SynthConfig::default()
    };
    let w = sample_world(&cfg).unwrap();
    let scheme = LabelScheme::ternary();
    for (q, s) in w.agent_qualities.iter().zip(&w.true_agent_scores) {
        let want = expected_agent_score(*q, &scheme);
        // Credit per item is bounded in [0, 1], so sd <= 0.5 and 4 sd / sqrt(n) = 0.02.
        assert!((s - want).abs() < 0.02, "q={q}: {s} vs {want}");
    }
}

#[test]
fn noiseless_world_is_scored_perfectly() {
    // Well-separated qualities and enough items that the realised latent
    // scores keep the quality order; annotation noise is then the only
    // possible source of error, and there is none.
    let cfg = SynthConfig {
        n_items_per_agent: 400,
        agent_qualities: QualityPreset::Tight.qualities(),
        hard_item_prob: 0.0,
        archetypes: ArchetypeParams {
            reliable_p: 1.0,
            ..ArchetypeParams::default()
        },
        seed: 4,
        ..SynthConfig::default()
    };
    let w = sample_world(&cfg).unwrap();
    let em = fit(&w.dataset, &EmConfig::default()).unwrap();
    let truth = w.true_scores();
    for m in Method::ALL {
        let scores = stableval::scoring::agent_scores(&w.dataset, m, Some(&em)).unwrap();
        let est = w.dataset.agents().iter().cloned().zip(scores).collect();
        let mse = score_mse(&est, &truth).unwrap();
        assert!(mse < 1e-20, "{m}: {mse}");
        assert_eq!(ranking_accuracy(&est, &truth).unwrap(), 1.0, "{m}");
        assert_eq!(ranking_accuracy(&est, &w.qualities()).unwrap(), 1.0, "{m}");
    }
}

fn small_base() -> SynthConfig {
    SynthConfig {
        n_items_per_agent: 40,
        repetitions: 3,
        stability_repeats: 3,
        seed: 21,
        ..SynthConfig::default()
    }
}

#[test]
fn ablation_is_reproducible_under_any_parallelism() {
    let axis = Axis::Adversarial;
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_ablation(
                    axis,
                    &axis.default_settings(),
                    &small_base(),
                    &EmConfig::default(),
                )
                .unwrap()
            })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one.settings.len(), 5);
    assert_eq!(one.rows.len(), 5 * 3 * 4);
    for row in &one.rows {
        assert!(row.ci_low <= row.mean && row.mean <= row.ci_high);
        if row.metric == Metric::Mse.name() {
            assert!(row.mean >= 0.0);
        }
        if row.metric == Metric::RankingAccuracy.name() {
            assert!((0.0..=1.0).contains(&row.mean));
        }
    }
}

#[test]
fn labels_axis_builds_a_four_by_three_grid() {
    let axis = Axis::LabelsPerItem;
    let res = run_ablation(
        axis,
        &axis.default_settings(),
        &SynthConfig {
            stability_repeats: 0,
            ..small_base()
        },
        &EmConfig::default(),
    )
    .unwrap();
    assert_eq!(res.settings, ["3", "5", "7", "9"]);
    let mse_rows = res.rows.iter().filter(|r| r.metric == "mse").count();
    assert_eq!(mse_rows, 4 * 3);
    assert!(res.rows.iter().all(|r| r.metric != "stability"));
}
