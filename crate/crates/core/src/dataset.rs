//! Canonical data model: label schemes, annotations, the indexed dataset and
//! per-item posterior tables.
//!
//! Every index in an [`AnnotationDataset`] is built from identifiers sorted
//! lexicographically, so two datasets built from permutations of the same
//! annotation list are identical, down to the order of floating-point sums
//! performed over them.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of correctness levels plus the credit assigned to each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScheme {
    k: usize,
    credit: Vec<f64>,
}

impl LabelScheme {
    pub fn new(k: usize, credit: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidScheme(format!(
                "need at least 2 levels, got {k}"
            )));
        }
        if credit.len() != k {
            return Err(Error::InvalidScheme(format!(
                "credit vector has {} entries for K={k}",
                credit.len()
            )));
        }
        if let Some(bad) = credit.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidScheme(format!("non-finite credit {bad}")));
        }
        if credit.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidScheme(format!(
                "credit must be non-decreasing, got {credit:?}"
            )));
        }
        Ok(Self { k, credit })
    }

    /// Evenly spaced credit from 0 to 1: `[0, 1]` for K=2, `[0, 0.5, 1]` for K=3.
    pub fn evenly_spaced(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidScheme(format!(
                "need at least 2 levels, got {k}"
            )));
        }
        let step = (k - 1) as f64;
        Self::new(k, (0..k).map(|c| c as f64 / step).collect())
    }

    pub fn ternary() -> Self {
        Self::evenly_spaced(3).expect("K=3 is valid")
    }

    pub fn binary() -> Self {
        Self::evenly_spaced(2).expect("K=2 is valid")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn credit(&self) -> &[f64] {
        &self.credit
    }

    /// Credit of level `c`.
    pub fn value(&self, c: usize) -> f64 {
        self.credit[c]
    }

    pub fn min_credit(&self) -> f64 {
        self.credit[0]
    }

    pub fn max_credit(&self) -> f64 {
        self.credit[self.k - 1]
    }
}

impl Default for LabelScheme {
    fn default() -> Self {
        Self::ternary()
    }
}

/// One observed label: annotator `annotator_id` judged item `item_id`, which
/// is a response produced by agent `agent_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    pub agent_id: String,
    pub annotator_id: String,
    pub label: usize,
}

impl Annotation {
    pub fn new(
        item_id: impl Into<String>,
        agent_id: impl Into<String>,
        annotator_id: impl Into<String>,
        label: usize,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            agent_id: agent_id.into(),
            annotator_id: annotator_id.into(),
            label,
        }
    }
}

/// A label on an item, with the annotator given by dataset index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemLabel {
    pub annotator: usize,
    pub label: usize,
}

/// A label by an annotator, with the item given by dataset index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotatorLabel {
    pub item: usize,
    pub label: usize,
}

/// Validated, indexed, immutable set of annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationDataset {
    scheme: LabelScheme,
    annotations: Vec<Annotation>,
    items: Vec<String>,
    item_agent: Vec<usize>,
    item_labels: Vec<Vec<ItemLabel>>,
    agents: Vec<String>,
    agent_items: Vec<Vec<usize>>,
    annotators: Vec<String>,
    annotator_labels: Vec<Vec<AnnotatorLabel>>,
}

impl AnnotationDataset {
    /// Validates `raw` against `scheme` and builds every index.
    pub fn new(raw: Vec<Annotation>, scheme: LabelScheme) -> Result<Self> {
        validate_dataset(raw, scheme)
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn k(&self) -> usize {
        self.scheme.k
    }

    /// The flat annotation list, sorted by `(item_id, annotator_id)`.
    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn item_agent(&self, item: usize) -> usize {
        self.item_agent[item]
    }

    /// Labels on `item`, ordered by annotator index.
    pub fn item_labels(&self, item: usize) -> &[ItemLabel] {
        &self.item_labels[item]
    }

    /// Items produced by `agent`, ordered by item index.
    pub fn agent_items(&self, agent: usize) -> &[usize] {
        &self.agent_items[agent]
    }

    pub fn annotator_labels(&self, annotator: usize) -> &[AnnotatorLabel] {
        &self.annotator_labels[annotator]
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.items
            .binary_search_by(|s| s.as_str().cmp(item_id))
            .ok()
    }

    pub fn agent_index(&self, agent_id: &str) -> Option<usize> {
        self.agents
            .binary_search_by(|s| s.as_str().cmp(agent_id))
            .ok()
    }

    pub fn annotator_index(&self, annotator_id: &str) -> Option<usize> {
        self.annotators
            .binary_search_by(|s| s.as_str().cmp(annotator_id))
            .ok()
    }

    /// Same annotations under a different credit vector. `K` must not change.
    pub fn with_scheme(&self, scheme: LabelScheme) -> Result<Self> {
        if scheme.k != self.scheme.k {
            return Err(Error::InvalidScheme(format!(
                "cannot change K from {} to {}",
                self.scheme.k, scheme.k
            )));
        }
        let mut out = self.clone();
        out.scheme = scheme;
        Ok(out)
    }

    /// Keeps only annotations whose annotator passes `keep`. Items left without
    /// annotations disappear; `None` if nothing survives.
    pub fn retain_annotators(&self, keep: impl Fn(usize) -> bool) -> Option<Self> {
        let raw: Vec<Annotation> = self
            .annotations
            .iter()
            .filter(|a| {
                let idx = self
                    .annotator_index(&a.annotator_id)
                    .expect("annotation refers to an indexed annotator");
                keep(idx)
            })
            .cloned()
            .collect();
        if raw.is_empty() {
            return None;
        }
        Some(
            validate_dataset(raw, self.scheme.clone()).expect("subset of a valid dataset is valid"),
        )
    }

    pub fn summarize(&self) -> DatasetSummary {
        summarize(self)
    }
}

/// Validates raw annotations and builds the item, agent and annotator indexes.
pub fn validate_dataset(
    mut raw: Vec<Annotation>,
    scheme: LabelScheme,
) -> Result<AnnotationDataset> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = raw.iter().find(|a| a.label >= scheme.k) {
        return Err(Error::LabelOutOfRange {
            item_id: bad.item_id.clone(),
            annotator_id: bad.annotator_id.clone(),
            label: bad.label,
            k: scheme.k,
        });
    }

    raw.sort_by(|a, b| {
        (
            a.item_id.as_str(),
            a.annotator_id.as_str(),
            a.agent_id.as_str(),
            a.label,
        )
            .cmp(&(
                b.item_id.as_str(),
                b.annotator_id.as_str(),
                b.agent_id.as_str(),
                b.label,
            ))
    });

    let mut item_to_agent: BTreeMap<&str, &str> = BTreeMap::new();
    for pair in raw.windows(2) {
        if pair[0].item_id == pair[1].item_id && pair[0].annotator_id == pair[1].annotator_id {
            return Err(Error::DuplicateAnnotation {
                item_id: pair[1].item_id.clone(),
                annotator_id: pair[1].annotator_id.clone(),
            });
        }
    }
    for a in &raw {
        match item_to_agent.get(a.item_id.as_str()) {
            Some(existing) if *existing != a.agent_id => {
                return Err(Error::ItemAgentConflict {
                    item_id: a.item_id.clone(),
                    first: existing.to_string(),
                    second: a.agent_id.clone(),
                });
            }
            Some(_) => {}
            None => {
                item_to_agent.insert(&a.item_id, &a.agent_id);
            }
        }
    }

    let items: Vec<String> = item_to_agent.keys().map(|s| s.to_string()).collect();
    let agents: Vec<String> = sorted_unique(raw.iter().map(|a| a.agent_id.as_str()));
    let annotators: Vec<String> = sorted_unique(raw.iter().map(|a| a.annotator_id.as_str()));

    let lookup = |v: &[String], key: &str| {
        v.binary_search_by(|s| s.as_str().cmp(key))
            .expect("key collected from the same list")
    };

    let item_agent: Vec<usize> = item_to_agent
        .values()
        .map(|agent| lookup(&agents, agent))
        .collect();
    let mut agent_items = vec![Vec::new(); agents.len()];
    for (item, &agent) in item_agent.iter().enumerate() {
        agent_items[agent].push(item);
    }

    let mut item_labels = vec![Vec::new(); items.len()];
    let mut annotator_labels = vec![Vec::new(); annotators.len()];
    // raw is sorted by item then annotator id, so both index lists come out ordered.
    for a in &raw {
        let item = lookup(&items, &a.item_id);
        let annotator = lookup(&annotators, &a.annotator_id);
        item_labels[item].push(ItemLabel {
            annotator,
            label: a.label,
        });
        annotator_labels[annotator].push(AnnotatorLabel {
            item,
            label: a.label,
        });
    }

    Ok(AnnotationDataset {
        scheme,
        annotations: raw,
        items,
        item_agent,
        item_labels,
        agents,
        agent_items,
        annotators,
        annotator_labels,
    })
}

fn sorted_unique<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<&str> = it.collect();
    v.sort_unstable();
    v.dedup();
    v.into_iter().map(str::to_string).collect()
}

/// Descriptive statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_annotations: usize,
    pub n_items: usize,
    pub n_agents: usize,
    pub n_annotators: usize,
    pub mean_annotations_per_item: f64,
    /// Fraction of items whose labels are all identical.
    pub unanimous_agreement: f64,
    /// Mean over items (with at least two labels) of the fraction of agreeing
    /// annotator pairs. `None` when no item has two labels.
    pub pairwise_agreement: Option<f64>,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "annotations            {}", self.n_annotations)?;
        writeln!(f, "items                  {}", self.n_items)?;
        writeln!(f, "agents                 {}", self.n_agents)?;
        writeln!(f, "annotators             {}", self.n_annotators)?;
        writeln!(
            f,
            "annotations per item   {:.2}",
            self.mean_annotations_per_item
        )?;
        writeln!(
            f,
            "unanimous agreement    {:.1}%",
            100.0 * self.unanimous_agreement
        )?;
        match self.pairwise_agreement {
            Some(p) => write!(f, "pairwise agreement     {:.1}%", 100.0 * p),
            None => write!(f, "pairwise agreement     n/a"),
        }
    }
}

pub fn summarize(dataset: &AnnotationDataset) -> DatasetSummary {
    let k = dataset.k();
    let mut unanimous = 0usize;
    let mut pairwise_sum = 0.0;
    let mut pairwise_items = 0usize;
    let mut counts = vec![0usize; k];
    for labels in &dataset.item_labels {
        counts.iter_mut().for_each(|c| *c = 0);
        for l in labels {
            counts[l.label] += 1;
        }
        let n = labels.len();
        if counts.contains(&n) {
            unanimous += 1;
        }
        if n >= 2 {
            let agreeing: usize = counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
            pairwise_sum += agreeing as f64 / (n * (n - 1) / 2) as f64;
            pairwise_items += 1;
        }
    }
    let n_items = dataset.n_items();
    DatasetSummary {
        n_annotations: dataset.annotations.len(),
        n_items,
        n_agents: dataset.n_agents(),
        n_annotators: dataset.n_annotators(),
        mean_annotations_per_item: dataset.annotations.len() as f64 / n_items as f64,
        unanimous_agreement: unanimous as f64 / n_items as f64,
        pairwise_agreement: (pairwise_items > 0).then(|| pairwise_sum / pairwise_items as f64),
    }
}

/// Per-item probability distributions over the K correctness levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    k: usize,
    gamma: Vec<f64>,
}

impl PosteriorTable {
    /// Tolerance on row sums accepted by [`PosteriorTable::from_rows`].
    pub const ROW_SUM_TOL: f64 = 1e-9;

    pub(crate) fn from_flat(k: usize, gamma: Vec<f64>) -> Self {
        debug_assert_eq!(gamma.len() % k, 0);
        Self { k, gamma }
    }

    pub fn from_rows(k: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut gamma = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidScheme(format!(
                    "posterior row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidScheme(format!(
                    "posterior row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::InvalidScheme(format!(
                    "posterior row {i} sums to {sum}"
                )));
            }
            gamma.extend_from_slice(row);
        }
        Ok(Self { k, gamma })
    }

    /// One-hot posteriors at the given labels.
    pub fn one_hot(k: usize, labels: &[usize]) -> Self {
        let mut gamma = vec![0.0; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            gamma[i * k + l] = 1.0;
        }
        Self { k, gamma }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_items(&self) -> usize {
        self.gamma.len() / self.k
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.gamma[item * self.k..(item + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.gamma.chunks_exact(self.k)
    }
}

/// Reads canonical annotations from CSV (`item_id,agent_id,annotator_id,label`)
/// or, for `.json` files, from a JSON array of records.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_annotations_json(reader)
    } else {
        parse_annotations_csv(reader)
    }
}

pub fn parse_annotations_csv<R: Read>(reader: R) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn parse_annotations_json<R: Read>(reader: R) -> Result<Vec<Annotation>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_annotations_csv<W: Write>(writer: W, annotations: &[Annotation]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for a in annotations {
        wtr.serialize(a)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(item: &str, agent: &str, annotator: &str, label: usize) -> Annotation {
        Annotation::new(item, agent, annotator, label)
    }

    #[test]
    fn scheme_defaults() {
        assert_eq!(LabelScheme::ternary().credit(), &[0.0, 0.5, 1.0]);
        assert_eq!(LabelScheme::binary().credit(), &[0.0, 1.0]);
        assert!(LabelScheme::new(3, vec![0.0, 1.0]).is_err());
        assert!(LabelScheme::new(3, vec![0.0, 1.0, 0.5]).is_err());
        assert!(LabelScheme::new(2, vec![0.0, f64::NAN]).is_err());
        assert!(LabelScheme::new(1, vec![0.0]).is_err());
    }

    #[test]
    fn three_valid_rows() {
        let ds = AnnotationDataset::new(
            vec![
                ann("i1", "a", "r1", 2),
                ann("i1", "a", "r2", 1),
                ann("i2", "b", "r1", 0),
            ],
            LabelScheme::ternary(),
        )
        .unwrap();
        assert_eq!(ds.annotations().len(), 3);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.agents(), &["a", "b"]);
        assert_eq!(ds.item_labels(0).len(), 2);
        assert_eq!(ds.agent_items(1), &[1]);
        assert_eq!(ds.annotator_labels(0).len(), 2);
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = AnnotationDataset::new(vec![ann("i1", "a", "r1", 3)], LabelScheme::ternary())
            .unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 3, k: 3, .. }));
    }

    #[test]
    fn rejects_item_agent_conflict() {
        let err = AnnotationDataset::new(
            vec![ann("i1", "a", "r1", 1), ann("i1", "b", "r2", 1)],
            LabelScheme::ternary(),
        )
        .unwrap_err();
        match err {
            Error::ItemAgentConflict { item_id, .. } => assert_eq!(item_id, "i1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        let err = AnnotationDataset::new(
            vec![ann("i1", "a", "r1", 1), ann("i1", "a", "r1", 2)],
            LabelScheme::ternary(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateAnnotation { .. }));
        assert!(matches!(
            AnnotationDataset::new(vec![], LabelScheme::ternary()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn summary_counts_pairs_per_item() {
        let ds = AnnotationDataset::new(
            vec![
                ann("x", "a", "r1", 1),
                ann("x", "a", "r2", 1),
                ann("x", "a", "r3", 0),
            ],
            LabelScheme::ternary(),
        )
        .unwrap();
        let s = ds.summarize();
        assert!((s.pairwise_agreement.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.unanimous_agreement, 0.0);

        let ds = AnnotationDataset::new(
            vec![
                ann("x", "a", "r1", 1),
                ann("x", "a", "r2", 1),
                ann("y", "a", "r1", 0),
                ann("y", "a", "r2", 1),
            ],
            LabelScheme::ternary(),
        )
        .unwrap();
        let s = ds.summarize();
        assert_eq!(s.unanimous_agreement, 0.5);
        assert_eq!(s.pairwise_agreement, Some(0.5));
    }

    #[test]
    fn single_annotation_items_skip_pairwise() {
        let ds = AnnotationDataset::new(
            vec![
                ann("x", "a", "r1", 1),
                ann("y", "a", "r1", 2),
                ann("y", "a", "r2", 2),
            ],
            LabelScheme::ternary(),
        )
        .unwrap();
        let s = ds.summarize();
        assert_eq!(s.unanimous_agreement, 1.0);
        assert_eq!(s.pairwise_agreement, Some(1.0));
        assert!((s.mean_annotations_per_item - 1.5).abs() < 1e-15);
    }

    #[test]
    fn csv_and_json_parse() {
        let csv = "item_id,agent_id,annotator_id,label\ni1,a,r1,2\ni2,b,r1,0\n";
        let rows = parse_annotations_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows[0], ann("i1", "a", "r1", 2));
        let json = r#"[{"item_id":"i1","agent_id":"a","annotator_id":"r1","label":2}]"#;
        assert_eq!(parse_annotations_json(json.as_bytes()).unwrap()[0], rows[0]);
        let mut buf = Vec::new();
        write_annotations_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), csv);
    }

    #[test]
    fn retain_drops_orphaned_items() {
        let ds = AnnotationDataset::new(
            vec![ann("x", "a", "r1", 1), ann("y", "a", "r2", 2)],
            LabelScheme::ternary(),
        )
        .unwrap();
        let sub = ds.retain_annotators(|r| r == 0).unwrap();
        assert_eq!(sub.items(), &["x"]);
        assert!(ds.retain_annotators(|_| false).is_none());
    }
}
