//! Majority-vote aggregation.

use crate::dataset::AnnotationDataset;
use crate::error::{Error, Result};

/// A hard label per item and whether it was decided by a tie-break.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLabelTable {
    pub labels: Vec<usize>,
    pub ties: Vec<bool>,
}

impl HardLabelTable {
    pub fn n_ties(&self) -> usize {
        self.ties.iter().filter(|&&t| t).count()
    }
}

/// Most frequent label; ties go to the smallest class index.
pub fn majority_label(labels: impl IntoIterator<Item = usize>, k: usize) -> Result<(usize, bool)> {
    let mut counts = vec![0usize; k];
    let mut any = false;
    for l in labels {
        counts[l] += 1;
        any = true;
    }
    if !any {
        return Err(Error::EmptyLabels);
    }
    Ok(argmax_lowest(&counts))
}

/// Index of the first maximum and whether another index shares it.
pub(crate) fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> (usize, bool) {
    let mut best = 0;
    let mut tie = false;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
            tie = false;
        } else if v == values[best] {
            tie = true;
        }
    }
    (best, tie)
}

pub fn majority_labels(dataset: &AnnotationDataset) -> HardLabelTable {
    let k = dataset.k();
    let (labels, ties) = (0..dataset.n_items())
        .map(|i| {
            majority_label(dataset.item_labels(i).iter().map(|l| l.label), k)
                .expect("validated items carry at least one label")
        })
        .unzip();
    HardLabelTable { labels, ties }
}

/// Per-item credit `v(majority label)`.
pub fn mv_credit(dataset: &AnnotationDataset) -> Vec<f64> {
    let scheme = dataset.scheme();
    majority_labels(dataset)
        .labels
        .into_iter()
        .map(|l| scheme.value(l))
        .collect()
}
