use std::fs;

use proptest::prelude::*;
use stableval::ingest::{
    convert, convert_mslr, convert_mtbench, read_records, ConversionScheme, DatasetKind, Record,
};

fn rec(pairs: &[(&str, String)]) -> Record {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn mt_row(q: u32, a: &str, b: &str, judge: &str, winner: &str) -> Record {
    rec(&[
        ("question_id", q.to_string()),
        ("turn", "2".into()),
        ("model_a", a.into()),
        ("model_b", b.into()),
        ("judge", judge.into()),
        ("winner", winner.into()),
    ])
}

const WINNERS: [&str; 4] = ["model_a", "model_b", "tie", "tie (bothbad)"];

proptest! {
    #[test]
    fn mtbench_baseline_preserves_order(choices in prop::collection::vec((0usize..4, 0u32..5, 0usize..3), 1..30)) {
        let models = ["m0", "m1", "m2"];
        let rows: Vec<Record> = choices
            .iter()
            .map(|&(w, q, j)| mt_row(q, models[j], models[(j + 1) % 3], &format!("j{j}"), WINNERS[w]))
            .collect();
        let c = convert_mtbench(&rows, ConversionScheme::Baseline).unwrap();
        prop_assert_eq!(c.annotations.len(), 2 * rows.len());
        for (row, pair) in rows.iter().zip(c.annotations.chunks(2)) {
            let (la, lb) = (pair[0].label, pair[1].label);
            match row["winner"].as_str() {
                "model_a" => prop_assert!(la > lb),
                "model_b" => prop_assert!(la < lb),
                _ => prop_assert!(la == lb && la == 1),
            }
        }
        prop_assert!(c.clone().into_dataset().is_ok());
        prop_assert_eq!(convert_mtbench(&rows, ConversionScheme::Baseline).unwrap(), c);
    }

    #[test]
    fn mslr_labels_stay_in_scheme(facets in prop::collection::vec(prop::collection::vec(0.0f64..=2.0, 3), 2..10)) {
        let rows: Vec<Record> = facets
            .iter()
            .enumerate()
            .map(|(r, f)| {
                rec(&[
                    ("item_id", "d".into()),
                    ("agent_id", "s".into()),
                    ("annotator_id", format!("r{r}")),
                    ("population", f[0].to_string()),
                    ("outcome", f[1].to_string()),
                    ("fluency", f[2].to_string()),
                ])
            })
            .collect();
        let c = convert_mslr(&rows).unwrap();
        prop_assert_eq!(c.annotations.len(), rows.len());
        prop_assert!(c.annotations.iter().all(|a| a.label < 3));
    }
}

#[test]
fn file_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.csv");
    let json = dir.path().join("raw.json");
    let jsonl = dir.path().join("raw.jsonl");
    fs::write(
        &csv,
        "item_id,dataset,annotator_id,label\ns1,cnn,r1,1\ns1,cnn,r2,0\ns2,xsum,r1,0\n",
    )
    .unwrap();
    fs::write(
        &json,
        r#"[{"item_id":"s1","dataset":"cnn","annotator_id":"r1","label":1},
            {"item_id":"s1","dataset":"cnn","annotator_id":"r2","label":0},
            {"item_id":"s2","dataset":"xsum","annotator_id":"r1","label":0}]"#,
    )
    .unwrap();
    fs::write(
        &jsonl,
        "{\"item_id\":\"s1\",\"dataset\":\"cnn\",\"annotator_id\":\"r1\",\"label\":1}\n\
         {\"item_id\":\"s1\",\"dataset\":\"cnn\",\"annotator_id\":\"r2\",\"label\":0}\n\n\
         {\"item_id\":\"s2\",\"dataset\":\"xsum\",\"annotator_id\":\"r1\",\"label\":0}\n",
    )
    .unwrap();
    let convert_file = |p| {
        convert(
            DatasetKind::Qags,
            &read_records(p).unwrap(),
            ConversionScheme::Baseline,
        )
        .unwrap()
    };
    let a = convert_file(&csv);
    assert_eq!(a, convert_file(&json));
    assert_eq!(a, convert_file(&jsonl));
    let agents: Vec<&str> = a.annotations.iter().map(|x| x.agent_id.as_str()).collect();
    assert_eq!(agents, ["CNN", "CNN", "XSUM"]);
}

#[test]
fn tie_variants() {
    let rows = [
        mt_row(1, "x", "y", "j", "tie"),
        mt_row(1, "x", "z", "j", "model_b"),
    ];
    let labels = |s| -> Vec<usize> {
        convert_mtbench(&rows, s)
            .unwrap()
            .annotations
            .iter()
            .map(|a| a.label)
            .collect()
    };
    assert_eq!(labels(ConversionScheme::Baseline), [1, 1, 0, 2]);
    assert_eq!(labels(ConversionScheme::TieToWin), [2, 2, 0, 2]);
    assert_eq!(labels(ConversionScheme::TieToLoss), [0, 0, 0, 2]);
    assert_eq!(labels(ConversionScheme::DropTies), [0, 2]);
    let weighted = convert_mtbench(&rows, ConversionScheme::TieWeight(0.75)).unwrap();
    assert_eq!(weighted.scheme.credit(), &[0.0, 0.75, 1.0]);
    // x is judged twice by j, so the second judgment gets its own annotator id.
    let ds = convert_mtbench(&rows, ConversionScheme::Baseline)
        .unwrap()
        .into_dataset()
        .unwrap();
    assert!(ds.annotator_index("j#2").is_some());
}
