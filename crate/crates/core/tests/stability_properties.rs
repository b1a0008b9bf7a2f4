mod common;

use proptest::prelude::*;
use stableval::stability::{
    kendall_tau_b, ordinal_ranks, stability_run, StabilityConfig, SubsetSize,
};
use stableval::synth::{sample_world, SynthConfig};
use stableval::{Annotation, AnnotationDataset, Error, LabelScheme, Method};

fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec((0i32..6).prop_map(f64::from), n),
            prop::collection::vec((0i32..6).prop_map(f64::from), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tau_matches_pair_counting((x, y) in arb_pair()) {
        match (kendall_tau_b(&x, &y), common::tau_b_pairs(&x, &y)) {
            (Ok(t), Some(o)) => {
                prop_assert!((t - o).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&t));
                prop_assert_eq!(kendall_tau_b(&y, &x).unwrap(), t);
            }
            (Err(Error::DegenerateRanking), None) => {}
            (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
        }
    }

    #[test]
    fn tau_ignores_monotone_transforms((x, y) in arb_pair()) {
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v.powi(3) - 7.0).collect();
        match (kendall_tau_b(&x, &y), kendall_tau_b(&x2, &y)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn ranks_are_a_permutation(scores in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("a{i:02}")).collect();
        let mut ranks = ordinal_ranks(&scores, &ids);
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (1..=scores.len()).collect::<Vec<_>>());
    }
}

#[test]
fn unanimous_crossed_dataset_is_perfectly_stable() {
    let mut raw = Vec::new();
    for (a, label_of) in [[2, 2, 2, 2], [2, 2, 1, 1], [1, 0, 0, 0]]
        .iter()
        .enumerate()
    {
        for (i, &l) in label_of.iter().enumerate() {
            for r in 0..5 {
                raw.push(Annotation::new(
                    format!("a{a}-{i}"),
                    format!("a{a}"),
                    format!("r{r}"),
                    l,
                ));
            }
        }
    }
    let ds = AnnotationDataset::new(raw, LabelScheme::ternary()).unwrap();
    let report = stability_run(&ds, &StabilityConfig::default()).unwrap();
    for m in &report.methods {
        assert_eq!(m.mean_tau_b, Some(1.0), "{:?}", m.method);
        assert_eq!(m.mean_rank_std, 0.0);
        assert_eq!(m.mean_rank_range, 0.0);
    }
}

#[test]
fn report_is_independent_of_thread_count() {
    let world = sample_world(&SynthConfig {
        n_items_per_agent: 40,
        adversarial_frac: 0.3,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = StabilityConfig {
        subset: SubsetSize::Count(12),
        repeats: 8,
        seed: 5,
        methods: Method::ALL.to_vec(),
        ..StabilityConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| stability_run(&world.dataset, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one.subset_size, 12);
    assert_eq!(one.replicates.len(), 8);
}
