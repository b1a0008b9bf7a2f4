//! Converters from benchmark exports to canonical annotations.
//!
//! Each converter reads flat records (CSV with a header, a JSON array of
//! objects, or JSON lines) and emits [`Annotation`]s together with the
//! [`LabelScheme`] they are meant to be scored under.
//!
//! | dataset   | required fields                                                  | K |
//! |-----------|------------------------------------------------------------------|---|
//! | mtbench   | `question_id, turn, model_a, model_b, judge, winner`             | 3 |
//! | convabuse | `item_id, agent_id, annotator_id, severity`                      | 3 |
//! | qags      | `item_id, dataset, annotator_id, label`                          | 2 |
//! | mslr      | `item_id, agent_id, annotator_id` plus one column per facet      | 3 |
//!
//! MT-Bench also accepts `annotator` in place of `judge`; `turn` defaults to 1
//! when absent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, AnnotationDataset, LabelScheme};
use crate::error::{Error, Result};

/// One raw record; field names map to their textual values.
pub type Record = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mtbench,
    Convabuse,
    Qags,
    Mslr,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::Mtbench,
        DatasetKind::Convabuse,
        DatasetKind::Qags,
        DatasetKind::Mslr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mtbench => "mtbench",
            DatasetKind::Convabuse => "convabuse",
            DatasetKind::Qags => "qags",
            DatasetKind::Mslr => "mslr",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        DatasetKind::ALL
            .into_iter()
            .find(|d| d.name() == norm)
            .ok_or_else(|| Error::UnknownDataset(s.to_string()))
    }
}

/// How MT-Bench ties are turned into labels or credit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConversionScheme {
    /// Win 2, tie 1, loss 0.
    #[default]
    Baseline,
    DropTies,
    TieToWin,
    TieToLoss,
    /// Baseline labels scored with `v(1) = w`.
    TieWeight(f64),
}

impl ConversionScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConversionScheme::TieWeight(w) if !(w > 0.0 && w < 1.0) => Err(Error::Config(format!(
                "tie weight must lie in (0, 1), got {w}"
            ))),
            _ => Ok(()),
        }
    }

    /// Credit vector the converted labels should be scored with.
    pub fn label_scheme(&self) -> Result<LabelScheme> {
        self.validate()?;
        match *self {
            ConversionScheme::TieWeight(w) => LabelScheme::new(3, vec![0.0, w, 1.0]),
            _ => Ok(LabelScheme::ternary()),
        }
    }
}

impl fmt::Display for ConversionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConversionScheme::Baseline => f.write_str("baseline"),
            ConversionScheme::DropTies => f.write_str("drop_ties"),
            ConversionScheme::TieToWin => f.write_str("tie_to_win"),
            ConversionScheme::TieToLoss => f.write_str("tie_to_loss"),
            ConversionScheme::TieWeight(w) => write!(f, "tie_weight:{w}"),
        }
    }
}

/// Accepts `baseline`, `drop_ties`, `tie_to_win`, `tie_to_loss` and
/// `tie_weight:<w>` (hyphens work as well as underscores).
impl FromStr for ConversionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let scheme = match norm.as_str() {
            "baseline" => ConversionScheme::Baseline,
            "drop_ties" => ConversionScheme::DropTies,
            "tie_to_win" => ConversionScheme::TieToWin,
            "tie_to_loss" => ConversionScheme::TieToLoss,
            other => {
                let w = other
                    .strip_prefix("tie_weight")
                    .map(|rest| rest.trim_start_matches([':', '=']))
                    .and_then(|w| w.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown MT-Bench conversion `{s}`")))?;
                ConversionScheme::TieWeight(w)
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Converter output: annotations plus the scheme they are scored under.
#[derive(Debug, Clone, PartialEq)]
pub struct Converted {
    pub annotations: Vec<Annotation>,
    pub scheme: LabelScheme,
}

impl Converted {
    pub fn into_dataset(self) -> Result<AnnotationDataset> {
        AnnotationDataset::new(self.annotations, self.scheme)
    }
}

/// Reads records from CSV, a JSON array (`.json`) or JSON lines (`.jsonl`).
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("json") => {
            let values: Vec<serde_json::Map<String, serde_json::Value>> =
                serde_json::from_reader(reader)?;
            Ok(values.into_iter().map(json_record).collect())
        }
        Some("jsonl") | Some("ndjson") => {
            let mut out = Vec::new();
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(json_record(serde_json::from_str(&line)?));
            }
            Ok(out)
        }
        _ => parse_records_csv(reader),
    }
}

pub fn parse_records_csv<R: Read>(reader: R) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

fn json_record(obj: serde_json::Map<String, serde_json::Value>) -> Record {
    obj.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => String::new(),
                other => other.to_string(),
            };
            (k, s)
        })
        .collect()
}

/// Non-empty value of the first present field among `names`.
fn field<'a>(rec: &'a Record, row: usize, names: &[&str]) -> Result<&'a str> {
    names
        .iter()
        .find_map(|n| rec.get(*n).map(|v| v.trim()).filter(|v| !v.is_empty()))
        .ok_or_else(|| Error::MalformedRow {
            row,
            reason: format!("missing field `{}`", names[0]),
        })
}

/// Parses an integer that may be written as `2`, `2.0` or `"2"`.
fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim().trim_matches('"');
    s.parse::<i64>().ok().or_else(|| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && v.abs() < 1e15)
            .map(|v| v as i64)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    WinA,
    WinB,
    Tie,
}

/// `model_a`, `model_b`, `tie` and `tie (bothbad)`; case-insensitive.
pub fn parse_winner(token: &str, row: usize) -> Result<Outcome> {
    match token.trim().to_ascii_lowercase().as_str() {
        "model_a" => Ok(Outcome::WinA),
        "model_b" => Ok(Outcome::WinB),
        "tie" | "tie (bothbad)" => Ok(Outcome::Tie),
        _ => Err(Error::UnknownWinnerToken {
            row,
            token: token.to_string(),
        }),
    }
}

/// Labels for `(model_a, model_b)`, or `None` when the row is dropped.
pub fn mtbench_labels(outcome: Outcome, scheme: ConversionScheme) -> Option<(usize, usize)> {
    match (outcome, scheme) {
        (Outcome::WinA, _) => Some((2, 0)),
        (Outcome::WinB, _) => Some((0, 2)),
        (Outcome::Tie, ConversionScheme::DropTies) => None,
        (Outcome::Tie, ConversionScheme::TieToWin) => Some((2, 2)),
        (Outcome::Tie, ConversionScheme::TieToLoss) => Some((0, 0)),
        (Outcome::Tie, ConversionScheme::Baseline | ConversionScheme::TieWeight(_)) => Some((1, 1)),
    }
}

pub fn mtbench_item_id(question: &str, turn: &str, model: &str) -> String {
    format!("mtbench_{question}_turn{turn}_{model}")
}

/// Pairwise judgments to per-response labels.
///
/// A judge who sees the same response more than once (against different
/// opponents, or position-swapped) keeps every judgment: repeats of the same
/// `(item, judge)` pair are attributed to `judge#2`, `judge#3`, and so on,
/// in file order.
pub fn convert_mtbench(records: &[Record], scheme: ConversionScheme) -> Result<Converted> {
    let label_scheme = scheme.label_scheme()?;
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut out = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        let row = idx + 1;
        let question = field(rec, row, &["question_id"])?;
        let turn = rec
            .get("turn")
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .unwrap_or("1");
        let model_a = field(rec, row, &["model_a"])?;
        let model_b = field(rec, row, &["model_b"])?;
        let judge = field(rec, row, &["judge", "annotator", "annotator_id"])?;
        let winner = field(rec, row, &["winner"])?;
        if model_a == model_b {
            return Err(Error::MalformedRow {
                row,
                reason: format!("model_a and model_b are both `{model_a}`"),
            });
        }
        let Some((la, lb)) = mtbench_labels(parse_winner(winner, row)?, scheme) else {
            continue;
        };
        for (model, label) in [(model_a, la), (model_b, lb)] {
            let item_id = mtbench_item_id(question, turn, model);
            let n = seen
                .entry((item_id.clone(), judge.to_string()))
                .or_insert(0);
            *n += 1;
            let annotator = if *n == 1 {
                judge.to_string()
            } else {
                format!("{judge}#{n}")
            };
            out.push(Annotation::new(item_id, model, annotator, label));
        }
    }
    Ok(Converted {
        annotations: out,
        scheme: label_scheme,
    })
}

/// `{1, 0} -> 0`, `-1 -> 1`, `{-2, -3} -> 2`.
pub fn convabuse_label(severity: i64) -> Option<usize> {
    match severity {
        1 | 0 => Some(0),
        -1 => Some(1),
        -2 | -3 => Some(2),
        _ => None,
    }
}

pub fn convert_convabuse(records: &[Record]) -> Result<Converted> {
    let mut out = Vec::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        let row = idx + 1;
        let raw = field(rec, row, &["severity", "label"])?;
        let label =
            parse_int(raw)
                .and_then(convabuse_label)
                .ok_or_else(|| Error::UnknownSeverity {
                    row,
                    value: raw.to_string(),
                })?;
        out.push(Annotation::new(
            field(rec, row, &["item_id"])?,
            field(rec, row, &["agent_id"])?,
            field(rec, row, &["annotator_id", "annotator"])?,
            label,
        ));
    }
    Ok(Converted {
        annotations: out,
        scheme: LabelScheme::ternary(),
    })
}

/// Dataset names are upper-cased, so `cnn` and `xsum` become the agents
/// `CNN` and `XSUM`.
pub fn convert_qags(records: &[Record]) -> Result<Converted> {
    let mut out = Vec::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        let row = idx + 1;
        let raw = field(rec, row, &["label"])?;
        let label = match parse_int(raw) {
            Some(0) => 0,
            Some(1) => 1,
            _ => {
                return Err(Error::UnknownLabel {
                    row,
                    value: raw.to_string(),
                })
            }
        };
        out.push(Annotation::new(
            field(rec, row, &["item_id"])?,
            field(rec, row, &["dataset"])?.to_ascii_uppercase(),
            field(rec, row, &["annotator_id", "annotator"])?,
            label,
        ));
    }
    Ok(Converted {
        annotations: out,
        scheme: LabelScheme::binary(),
    })
}

/// Mean facet score to a level: `>= 1.5 -> 2`, `>= 0.75 -> 1`, else 0.
pub fn mslr_label(mean: f64) -> usize {
    if mean >= 1.5 {
        2
    } else if mean >= 0.75 {
        1
    } else {
        0
    }
}

const MSLR_ID_FIELDS: [&str; 3] = ["item_id", "agent_id", "annotator_id"];

/// Facet columns are every field other than the three id fields. Only
/// `(item, agent)` pairs rated by at least two distinct annotators are kept.
pub fn convert_mslr(records: &[Record]) -> Result<Converted> {
    let mut out = Vec::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        let row = idx + 1;
        let facets: Vec<(&String, &String)> = rec
            .iter()
            .filter(|(k, _)| !MSLR_ID_FIELDS.contains(&k.as_str()))
            .collect();
        if facets.is_empty() {
            return Err(Error::MalformedRow {
                row,
                reason: "no facet columns".into(),
            });
        }
        let mut sum = 0.0;
        for (facet, raw) in &facets {
            let value: f64 = raw.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("facet `{facet}` is not a number: `{raw}`"),
            })?;
            if !(0.0..=2.0).contains(&value) {
                return Err(Error::FacetOutOfRange {
                    row,
                    facet: facet.to_string(),
                    value,
                });
            }
            sum += value;
        }
        out.push(Annotation::new(
            field(rec, row, &["item_id"])?,
            field(rec, row, &["agent_id"])?,
            field(rec, row, &["annotator_id"])?,
            mslr_label(sum / facets.len() as f64),
        ));
    }
    let mut raters: HashMap<(&str, &str), BTreeSet<&str>> = HashMap::new();
    for a in &out {
        raters
            .entry((a.item_id.as_str(), a.agent_id.as_str()))
            .or_default()
            .insert(a.annotator_id.as_str());
    }
    let keep: Vec<bool> = out
        .iter()
        .map(|a| raters[&(a.item_id.as_str(), a.agent_id.as_str())].len() >= 2)
        .collect();
    let annotations = out
        .into_iter()
        .zip(keep)
        .filter_map(|(a, k)| k.then_some(a))
        .collect();
    Ok(Converted {
        annotations,
        scheme: LabelScheme::ternary(),
    })
}

/// Dispatches on `kind`; `mtbench` is only used for MT-Bench.
pub fn convert(
    kind: DatasetKind,
    records: &[Record],
    mtbench: ConversionScheme,
) -> Result<Converted> {
    match kind {
        DatasetKind::Mtbench => convert_mtbench(records, mtbench),
        DatasetKind::Convabuse => convert_convabuse(records),
        DatasetKind::Qags => convert_qags(records),
        DatasetKind::Mslr => convert_mslr(records),
    }
}
