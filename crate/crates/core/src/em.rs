//! Latent-class EM over annotator confusion matrices.
//!
//! Each item has an unobserved correctness level `z` in `0..K`. Annotator `r`
//! reports level `o` with probability `pi_r[z][o]`, independently of other
//! annotators given `z`, and levels occur with prior `mu`. EM alternates
//! posterior computation (E-step) with Dirichlet-smoothed MAP updates of
//! `mu` and every `pi_r` (M-step).
//!
//! All products are evaluated as sums of logs and normalised with
//! log-sum-exp. Every reduction runs in dataset index order, so a fit is a
//! pure function of its inputs.

use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeStruct, Serializer};
use serde::Deserialize;

use crate::dataset::{AnnotationDataset, PosteriorTable};
use crate::error::{Error, Result};
use crate::mvote::{argmax_lowest, majority_labels, HardLabelTable};

/// Largest decrease of the traced objective tolerated between iterations.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Row-stochastic K×K matrix, stored row-major. Row = latent level, column =
/// reported label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    data: Vec<f64>,
}

impl ConfusionMatrix {
    /// `(1 - epsilon) I + (epsilon / K) 11^T`.
    pub fn near_identity(k: usize, epsilon: f64) -> Self {
        let off = epsilon / k as f64;
        let mut data = vec![off; k * k];
        for c in 0..k {
            data[c * k + c] = (1.0 - epsilon) + off;
        }
        Self { k, data }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            k,
            data: vec![1.0 / k as f64; k * k],
        }
    }

    /// Builds a matrix from rows, checking shape and that each row is a
    /// probability distribution.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let mut data = Vec::with_capacity(k * k);
        for (c, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidEmConfig(format!(
                    "confusion row {c} has {} entries, expected {k}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidEmConfig(format!(
                    "confusion row {c} is not a distribution: {row:?}"
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { k, data })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, true_level: usize, reported: usize) -> f64 {
        self.data[true_level * self.k + reported]
    }

    pub fn row(&self, true_level: usize) -> &[f64] {
        &self.data[true_level * self.k..(true_level + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

/// Class priors plus one confusion matrix per annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: Vec<f64>,
    /// Annotator ids, parallel to `pi`.
    pub annotators: Vec<String>,
    pub pi: Vec<ConfusionMatrix>,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn confusion(&self, annotator_id: &str) -> Option<&ConfusionMatrix> {
        self.annotators
            .binary_search_by(|a| a.as_str().cmp(annotator_id))
            .ok()
            .map(|i| &self.pi[i])
    }

    /// Map from dataset annotator index to index into `self.pi`.
    fn annotator_map(&self, dataset: &AnnotationDataset) -> Result<Vec<usize>> {
        if self.annotators.as_slice() == dataset.annotators() {
            return Ok((0..self.annotators.len()).collect());
        }
        dataset
            .annotators()
            .iter()
            .map(|id| {
                self.annotators
                    .binary_search(id)
                    .map_err(|_| Error::UnknownAnnotator(id.clone()))
            })
            .collect()
    }

    /// Dirichlet log-density (up to its normalising constant) of `mu` and of
    /// every confusion row.
    pub fn log_prior(&self, alpha_mu: f64, alpha_pi: f64) -> f64 {
        let mut total = 0.0;
        if alpha_mu != 1.0 {
            total += (alpha_mu - 1.0) * self.mu.iter().map(|m| m.ln()).sum::<f64>();
        }
        if alpha_pi != 1.0 {
            for pi in &self.pi {
                total += (alpha_pi - 1.0) * pi.data.iter().map(|p| p.ln()).sum::<f64>();
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(default)]
pub struct EmConfig {
    /// Off-identity mass of the initial confusion matrices.
    pub epsilon_init: f64,
    /// Relative objective improvement below which EM stops.
    pub tol: f64,
    pub max_iters: usize,
    pub alpha_mu: f64,
    pub alpha_pi: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            epsilon_init: 0.1,
            tol: 1e-6,
            max_iters: 500,
            alpha_mu: 2.0,
            alpha_pi: 2.0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon_init) {
            return Err(Error::InvalidEmConfig(format!(
                "epsilon_init must lie in [0, 1], got {}",
                self.epsilon_init
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidEmConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidEmConfig(
                "max_iters must be at least 1".into(),
            ));
        }
        if [self.alpha_mu, self.alpha_pi]
            .iter()
            .any(|a| a.is_nan() || *a < 1.0)
        {
            return Err(Error::InvalidEmConfig(format!(
                "Dirichlet parameters must be >= 1, got alpha_mu={} alpha_pi={}",
                self.alpha_mu, self.alpha_pi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub params: ModelParams,
    /// Posteriors under `params`.
    pub posteriors: PosteriorTable,
    /// Penalised log-likelihood (observed-data log-likelihood plus Dirichlet
    /// log-prior) of the parameters entering each E-step, the last entry
    /// being the returned `params`.
    pub log_likelihood_trace: Vec<f64>,
    /// Observed-data log-likelihood of `params`.
    pub log_likelihood: f64,
    pub converged: bool,
    /// Number of completed E/M pairs.
    pub iterations: usize,
}

impl EmResult {
    pub fn hard_labels(&self) -> HardLabelTable {
        ds_hard_labels(&self.posteriors)
    }
}

impl Serialize for EmResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pi: BTreeMap<&str, Vec<Vec<f64>>> = self
            .params
            .annotators
            .iter()
            .zip(&self.params.pi)
            .map(|(id, m)| (id.as_str(), m.to_rows()))
            .collect();
        let mut s = serializer.serialize_struct("EmResult", 6)?;
        s.serialize_field("mu", &self.params.mu)?;
        s.serialize_field("pi", &pi)?;
        s.serialize_field("log_likelihood", &self.log_likelihood)?;
        s.serialize_field("trace", &self.log_likelihood_trace)?;
        s.serialize_field("converged", &self.converged)?;
        s.serialize_field("iterations", &self.iterations)?;
        s.end()
    }
}

/// Priors from majority-vote label frequencies, confusion matrices near the
/// identity.
pub fn init_params(dataset: &AnnotationDataset, epsilon: f64) -> ModelParams {
    let k = dataset.k();
    let mv = majority_labels(dataset);
    let mut mu = vec![0.0; k];
    for &l in &mv.labels {
        mu[l] += 1.0;
    }
    let n = mv.labels.len() as f64;
    mu.iter_mut().for_each(|m| *m /= n);
    ModelParams {
        mu,
        annotators: dataset.annotators().to_vec(),
        pi: vec![ConfusionMatrix::near_identity(k, epsilon); dataset.n_annotators()],
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Posteriors together with the observed-data log-likelihood of `params`.
fn expectation(dataset: &AnnotationDataset, params: &ModelParams) -> Result<(PosteriorTable, f64)> {
    let k = dataset.k();
    if params.k() != k {
        return Err(Error::InvalidEmConfig(format!(
            "parameters have K={} but the dataset has K={k}",
            params.k()
        )));
    }
    let map = params.annotator_map(dataset)?;
    let log_mu: Vec<f64> = params.mu.iter().map(|m| m.ln()).collect();
    let log_pi: Vec<Vec<f64>> = params
        .pi
        .iter()
        .map(|m| m.data.iter().map(|p| p.ln()).collect())
        .collect();

    let mut gamma = vec![0.0; dataset.n_items() * k];
    let mut scores = vec![0.0; k];
    let mut ll = 0.0;
    for i in 0..dataset.n_items() {
        scores.copy_from_slice(&log_mu);
        for obs in dataset.item_labels(i) {
            let lp = &log_pi[map[obs.annotator]];
            for (c, s) in scores.iter_mut().enumerate() {
                *s += lp[c * k + obs.label];
            }
        }
        let norm = log_sum_exp(&scores);
        if !norm.is_finite() {
            return Err(Error::DegenerateItem {
                item_id: dataset.items()[i].clone(),
            });
        }
        ll += norm;
        for (g, s) in gamma[i * k..(i + 1) * k].iter_mut().zip(&scores) {
            *g = (s - norm).exp();
        }
    }
    Ok((PosteriorTable::from_flat(k, gamma), ll))
}

/// `gamma_ic ∝ mu_c · Π_r pi_r[c, y_ir]`, normalised per item.
pub fn e_step(dataset: &AnnotationDataset, params: &ModelParams) -> Result<PosteriorTable> {
    expectation(dataset, params).map(|(gamma, _)| gamma)
}

/// Observed-data log-likelihood `Σ_i log Σ_c mu_c Π_r pi_r[c, y_ir]`.
pub fn log_likelihood(dataset: &AnnotationDataset, params: &ModelParams) -> Result<f64> {
    expectation(dataset, params).map(|(_, ll)| ll)
}

/// MAP update of priors and confusion matrices under Dirichlet priors with
/// concentrations `alpha_mu` and `alpha_pi`.
///
/// A confusion row with no mass and no smoothing (`alpha_pi == 1`) is set to
/// uniform.
pub fn m_step(
    dataset: &AnnotationDataset,
    posteriors: &PosteriorTable,
    alpha_mu: f64,
    alpha_pi: f64,
) -> ModelParams {
    let k = dataset.k();
    let kf = k as f64;

    let mut class_mass = vec![0.0; k];
    for row in posteriors.rows() {
        for (m, g) in class_mass.iter_mut().zip(row) {
            *m += g;
        }
    }
    let total: f64 = class_mass.iter().sum();
    let mu_denom = total + kf * (alpha_mu - 1.0);
    let mu = class_mass
        .iter()
        .map(|m| (m + alpha_mu - 1.0) / mu_denom)
        .collect();

    let mut counts = vec![0.0; k * k];
    let pi = (0..dataset.n_annotators())
        .map(|r| {
            counts.iter_mut().for_each(|n| *n = 0.0);
            for obs in dataset.annotator_labels(r) {
                let g = posteriors.row(obs.item);
                for c in 0..k {
                    counts[c * k + obs.label] += g[c];
                }
            }
            let mut data = vec![0.0; k * k];
            for c in 0..k {
                let row = &counts[c * k..(c + 1) * k];
                let denom = row.iter().sum::<f64>() + kf * (alpha_pi - 1.0);
                let out = &mut data[c * k..(c + 1) * k];
                if denom > 0.0 {
                    for (o, n) in out.iter_mut().zip(row) {
                        *o = (n + alpha_pi - 1.0) / denom;
                    }
                } else {
                    out.iter_mut().for_each(|o| *o = 1.0 / kf);
                }
            }
            ConfusionMatrix { k, data }
        })
        .collect();

    ModelParams {
        mu,
        annotators: dataset.annotators().to_vec(),
        pi,
    }
}

/// Runs EM from the majority-vote / near-identity initialisation until the
/// relative improvement of the penalised log-likelihood drops below
/// `config.tol` or `config.max_iters` E/M pairs have run.
pub fn fit(dataset: &AnnotationDataset, config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    fit_from(dataset, init_params(dataset, config.epsilon_init), config)
}

/// [`fit`] from caller-supplied starting parameters.
pub fn fit_from(
    dataset: &AnnotationDataset,
    init: ModelParams,
    config: &EmConfig,
) -> Result<EmResult> {
    config.validate()?;
    let objective =
        |params: &ModelParams, ll: f64| ll + params.log_prior(config.alpha_mu, config.alpha_pi);

    let mut params = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (posteriors, ll) = expectation(dataset, &params)?;
        let current = objective(&params, ll);
        if let Some(&previous) = trace.last() {
            if previous.is_finite() {
                if current < previous - MONOTONE_SLACK {
                    return Err(Error::NonMonotoneLikelihood {
                        iteration: iterations,
                        previous,
                        current,
                    });
                }
                let rel = (current - previous).abs() / (current.abs() + 1e-12);
                converged = rel < config.tol;
            }
        }
        trace.push(current);
        if converged || iterations == config.max_iters {
            log::debug!(
                "EM stopped after {iterations} iterations (converged: {converged}, objective {current})"
            );
            return Ok(EmResult {
                params,
                posteriors,
                log_likelihood_trace: trace,
                log_likelihood: ll,
                converged,
                iterations,
            });
        }
        params = m_step(dataset, &posteriors, config.alpha_mu, config.alpha_pi);
        iterations += 1;
    }
}

/// Argmax of each posterior row; ties go to the lowest level.
pub fn ds_hard_labels(posteriors: &PosteriorTable) -> HardLabelTable {
    let (labels, ties) = posteriors.rows().map(argmax_lowest).unzip();
    HardLabelTable { labels, ties }
}
