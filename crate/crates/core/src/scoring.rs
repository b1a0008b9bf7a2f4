//! Item credit, agent scores and bootstrap confidence intervals.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationDataset, LabelScheme, PosteriorTable};
use crate::em::{ds_hard_labels, EmResult};
use crate::error::{Error, Result};
use crate::mvote::mv_credit;
use crate::rng::{stable_hash, stream};

/// Default number of bootstrap resamples.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

/// Aggregation method used to turn annotations into item credit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Majority vote.
    #[serde(rename = "MV", alias = "mv")]
    Mv,
    /// Dawid–Skene, argmax of the EM posterior.
    #[serde(rename = "DS", alias = "ds")]
    Ds,
    /// Posterior expected credit.
    #[serde(rename = "PEC", alias = "pec")]
    Pec,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Mv, Method::Ds, Method::Pec];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mv => "MV",
            Method::Ds => "DS",
            Method::Pec => "PEC",
        }
    }

    pub fn needs_em(self) -> bool {
        !matches!(self, Method::Mv)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mv" | "majority" => Ok(Method::Mv),
            "ds" | "dawid-skene" => Ok(Method::Ds),
            "pec" => Ok(Method::Pec),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected mv, ds or pec)"
            ))),
        }
    }
}

/// `credit(i) = Σ_c gamma_ic v(c)`.
pub fn pec_credit(posteriors: &PosteriorTable, scheme: &LabelScheme) -> Vec<f64> {
    posteriors
        .rows()
        .map(|row| row.iter().zip(scheme.credit()).map(|(g, v)| g * v).sum())
        .collect()
}

/// Credit of the argmax posterior level.
pub fn ds_credit(posteriors: &PosteriorTable, scheme: &LabelScheme) -> Vec<f64> {
    ds_hard_labels(posteriors)
        .labels
        .into_iter()
        .map(|l| scheme.value(l))
        .collect()
}

/// Item credits for `method`. DS and PEC need the fitted EM result.
pub fn item_credits(
    dataset: &AnnotationDataset,
    method: Method,
    em: Option<&EmResult>,
) -> Result<Vec<f64>> {
    let scheme = dataset.scheme();
    match (method, em) {
        (Method::Mv, _) => Ok(mv_credit(dataset)),
        (Method::Ds, Some(em)) => Ok(ds_credit(&em.posteriors, scheme)),
        (Method::Pec, Some(em)) => Ok(pec_credit(&em.posteriors, scheme)),
        (m, None) => Err(Error::MissingEmResult(m.name())),
    }
}

fn agent_credits<'a>(
    credits: &'a [f64],
    dataset: &'a AnnotationDataset,
    agent_id: &str,
) -> Result<impl ExactSizeIterator<Item = f64> + 'a> {
    let agent = dataset
        .agent_index(agent_id)
        .ok_or_else(|| Error::UnknownAgent(agent_id.to_string()))?;
    let items = dataset.agent_items(agent);
    if items.is_empty() {
        return Err(Error::AgentHasNoItems(agent_id.to_string()));
    }
    Ok(items.iter().map(move |&i| credits[i]))
}

/// Mean credit over the agent's items.
pub fn agent_score(credits: &[f64], dataset: &AnnotationDataset, agent_id: &str) -> Result<f64> {
    let it = agent_credits(credits, dataset, agent_id)?;
    let n = it.len() as f64;
    Ok(it.sum::<f64>() / n)
}

/// Score of every agent, in dataset agent order.
pub fn agent_scores(
    dataset: &AnnotationDataset,
    method: Method,
    em: Option<&EmResult>,
) -> Result<Vec<f64>> {
    let credits = item_credits(dataset, method, em)?;
    dataset
        .agents()
        .iter()
        .map(|a| agent_score(&credits, dataset, a))
        .collect()
}

/// Linear interpolation between order statistics at `h = (n - 1) p`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Means of `b` resamples (with replacement) of `values`. Resample `j` draws
/// from a stream keyed by `(seed, stream_key, j)`, so the output does not
/// depend on the number of worker threads.
pub fn bootstrap_means(values: &[f64], b: usize, seed: u64, stream_key: u64) -> Vec<f64> {
    let n = values.len();
    (0..b)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, &[stream_key, j as u64]);
            let sum: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
            sum / n as f64
        })
        .collect()
}

/// 95% percentile bootstrap interval of the agent's mean item credit.
pub fn bootstrap_ci(
    credits: &[f64],
    dataset: &AnnotationDataset,
    agent_id: &str,
    b: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if b == 0 {
        return Err(Error::InvalidBootstrap);
    }
    let values: Vec<f64> = agent_credits(credits, dataset, agent_id)?.collect();
    let mut means = bootstrap_means(&values, b, seed, stable_hash(agent_id.as_bytes()));
    means.sort_by(f64::total_cmp);
    Ok((percentile(&means, 0.025), percentile(&means, 0.975)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent_id: String,
    pub method: Method,
    pub score: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_items: usize,
}

/// PEC minus MV score for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub agent_id: String,
    pub mv: f64,
    pub pec: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    /// Reports grouped by method (in request order), each group sorted by
    /// descending score with ties broken by agent id.
    pub reports: Vec<AgentReport>,
    /// Present when both MV and PEC were scored.
    pub deltas: Vec<ScoreDelta>,
}

impl ScoreSummary {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &AgentReport> {
        self.reports.iter().filter(move |r| r.method == method)
    }

    pub fn score(&self, method: Method, agent_id: &str) -> Option<f64> {
        self.for_method(method)
            .find(|r| r.agent_id == agent_id)
            .map(|r| r.score)
    }
}

/// Scores and intervals for every agent under one method.
pub fn score_method(
    dataset: &AnnotationDataset,
    method: Method,
    em: Option<&EmResult>,
    b: usize,
    seed: u64,
) -> Result<Vec<AgentReport>> {
    let credits = item_credits(dataset, method, em)?;
    let mut reports = dataset
        .agents()
        .iter()
        .map(|agent| {
            let score = agent_score(&credits, dataset, agent)?;
            let (ci_low, ci_high) = bootstrap_ci(&credits, dataset, agent, b, seed)?;
            Ok(AgentReport {
                agent_id: agent.clone(),
                method,
                score,
                ci_low,
                ci_high,
                n_items: dataset
                    .agent_items(dataset.agent_index(agent).expect("known agent"))
                    .len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.agent_id.cmp(&b.agent_id))
    });
    Ok(reports)
}

pub fn score_all(
    dataset: &AnnotationDataset,
    methods: &[Method],
    em: Option<&EmResult>,
    b: usize,
    seed: u64,
) -> Result<ScoreSummary> {
    let mut reports = Vec::new();
    for &m in methods {
        reports.extend(score_method(dataset, m, em, b, seed)?);
    }
    let mut summary = ScoreSummary {
        reports,
        deltas: Vec::new(),
    };
    if methods.contains(&Method::Mv) && methods.contains(&Method::Pec) {
        summary.deltas = summary
            .for_method(Method::Pec)
            .map(|pec| {
                let mv = summary
                    .score(Method::Mv, &pec.agent_id)
                    .expect("MV scored for every agent");
                ScoreDelta {
                    agent_id: pec.agent_id.clone(),
                    mv,
                    pec: pec.score,
                    delta: pec.score - mv,
                }
            })
            .collect();
    }
    Ok(summary)
}

pub fn write_reports_csv<W: Write>(writer: W, reports: &[AgentReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in reports {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn write_deltas_csv<W: Write>(writer: W, deltas: &[ScoreDelta]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for d in deltas {
        wtr.serialize(d)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
