//! Annotator reliability profiles and item ambiguity.
//!
//! A profile splits an annotator's confusion mass, weighted by the class
//! priors, into the diagonal (accuracy), the part above it (reporting a
//! higher level than the truth: leniency) and the part below it
//! (strictness). The three always sum to one.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationDataset, PosteriorTable};
use crate::em::ModelParams;
use crate::error::{Error, Result};
use crate::mvote::argmax_lowest;

/// Ambiguity above which an item is reported as highly ambiguous.
pub const HIGH_AMBIGUITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    pub accuracy: f64,
    pub leniency: f64,
    pub strictness: f64,
    pub n_annotations: usize,
}

pub fn annotator_profile(
    params: &ModelParams,
    annotator_id: &str,
    dataset: &AnnotationDataset,
) -> Result<AnnotatorProfile> {
    let pi = params
        .confusion(annotator_id)
        .ok_or_else(|| Error::UnknownAnnotator(annotator_id.to_string()))?;
    let (mut accuracy, mut leniency, mut strictness) = (0.0, 0.0, 0.0);
    for (c, &mu) in params.mu.iter().enumerate() {
        let row = pi.row(c);
        accuracy += mu * row[c];
        leniency += mu * row[c + 1..].iter().sum::<f64>();
        strictness += mu * row[..c].iter().sum::<f64>();
    }
    let n_annotations = dataset
        .annotator_index(annotator_id)
        .map_or(0, |r| dataset.annotator_labels(r).len());
    Ok(AnnotatorProfile {
        annotator_id: annotator_id.to_string(),
        accuracy,
        leniency,
        strictness,
        n_annotations,
    })
}

/// Profiles for every annotator in `params`, most accurate first.
pub fn annotator_profiles(
    params: &ModelParams,
    dataset: &AnnotationDataset,
) -> Vec<AnnotatorProfile> {
    let mut out: Vec<AnnotatorProfile> = params
        .annotators
        .iter()
        .map(|id| annotator_profile(params, id, dataset).expect("annotator taken from params"))
        .collect();
    out.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then_with(|| a.annotator_id.cmp(&b.annotator_id))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRecord {
    pub item_id: String,
    pub ambiguity: f64,
    pub confidence: f64,
    pub predicted: usize,
    /// Shannon entropy in nats.
    pub entropy: f64,
    pub highly_ambiguous: bool,
}

/// One record per item, most ambiguous first (ties by item id).
pub fn item_ambiguity(posteriors: &PosteriorTable, item_ids: &[String]) -> Vec<AmbiguityRecord> {
    assert_eq!(
        posteriors.n_items(),
        item_ids.len(),
        "one item id per posterior row"
    );
    let mut out: Vec<AmbiguityRecord> = posteriors
        .rows()
        .zip(item_ids)
        .map(|(row, id)| {
            let (predicted, _) = argmax_lowest(row);
            let confidence = row[predicted];
            let ambiguity = 1.0 - confidence;
            let entropy = -row
                .iter()
                .filter(|&&g| g > 0.0)
                .map(|g| g * g.ln())
                .sum::<f64>();
            AmbiguityRecord {
                item_id: id.clone(),
                ambiguity,
                confidence,
                predicted,
                entropy: entropy.max(0.0),
                highly_ambiguous: ambiguity > HIGH_AMBIGUITY,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.ambiguity
            .total_cmp(&a.ambiguity)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    out
}

/// Fraction of records flagged as highly ambiguous.
pub fn high_ambiguity_rate(records: &[AmbiguityRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.highly_ambiguous).count() as f64 / records.len() as f64
}

pub fn write_profiles_csv<W: Write>(writer: W, profiles: &[AnnotatorProfile]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for p in profiles {
        wtr.serialize(p)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_ambiguity_csv<W: Write>(writer: W, records: &[AmbiguityRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Annotation, LabelScheme};
    use crate::em::ConfusionMatrix;

    fn params(mu: Vec<f64>, pi: ConfusionMatrix) -> ModelParams {
        ModelParams {
            mu,
            annotators: vec!["r".into()],
            pi: vec![pi],
        }
    }

    fn ds() -> AnnotationDataset {
        AnnotationDataset::new(
            vec![Annotation::new("i", "a", "r", 0)],
            LabelScheme::ternary(),
        )
        .unwrap()
    }

    #[test]
    fn identity_profile() {
        let p = params(vec![0.2, 0.3, 0.5], ConfusionMatrix::near_identity(3, 0.0));
        let prof = annotator_profile(&p, "r", &ds()).unwrap();
        assert_eq!(
            (prof.accuracy, prof.leniency, prof.strictness),
            (1.0, 0.0, 0.0)
        );
        assert_eq!(prof.n_annotations, 1);
    }

    #[test]
    fn uniform_profile() {
        let p = params(vec![1.0 / 3.0; 3], ConfusionMatrix::uniform(3));
        let prof = annotator_profile(&p, "r", &ds()).unwrap();
        for x in [prof.accuracy, prof.leniency, prof.strictness] {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_profile() {
        let pi = ConfusionMatrix::from_rows(&[vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let prof = annotator_profile(&params(vec![0.5, 0.5], pi), "r", &ds()).unwrap();
        assert!((prof.accuracy - 0.7).abs() < 1e-12);
        assert!((prof.leniency - 0.1).abs() < 1e-12);
        assert!((prof.strictness - 0.2).abs() < 1e-12);
        assert!(matches!(
            annotator_profile(
                &params(vec![0.5, 0.5], ConfusionMatrix::uniform(2)),
                "x",
                &ds()
            ),
            Err(Error::UnknownAnnotator(_))
        ));
    }

    #[test]
    fn ambiguity_examples() {
        let g = PosteriorTable::from_rows(
            3,
            &[
                vec![0.0, 1.0, 0.0],
                vec![1.0 / 3.0; 3],
                vec![0.403, 0.597, 0.0],
            ],
        )
        .unwrap();
        let ids: Vec<String> = ["hot", "flat", "split"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let recs = item_ambiguity(&g, &ids);
        let by_id = |id: &str| recs.iter().find(|r| r.item_id == id).unwrap();

        let hot = by_id("hot");
        assert_eq!(
            (hot.ambiguity, hot.confidence, hot.entropy),
            (0.0, 1.0, 0.0)
        );
        assert_eq!(hot.predicted, 1);

        let flat = by_id("flat");
        assert!((flat.ambiguity - 2.0 / 3.0).abs() < 1e-12);
        assert!((flat.entropy - 3f64.ln()).abs() < 1e-12);
        assert!(flat.highly_ambiguous);

        let split = by_id("split");
        assert!((split.confidence - 0.597).abs() < 1e-12);
        assert!((split.ambiguity - 0.403).abs() < 1e-12);
        assert!((split.ambiguity + split.confidence - 1.0).abs() < 1e-12);

        assert_eq!(recs[0].item_id, "flat");
        assert_eq!(recs[2].item_id, "hot");
        assert!((high_ambiguity_rate(&recs) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ambiguity_ties_sorted_by_id() {
        let g = PosteriorTable::from_rows(2, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let recs = item_ambiguity(&g, &["b".into(), "a".into()]);
        assert_eq!(recs[0].item_id, "a");
    }
}
