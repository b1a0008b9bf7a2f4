//! Ranking stability under annotator subsampling.
//!
//! For each replicate a fixed-size subset of annotators is drawn without
//! replacement, every method is rescored on the restricted data (EM refit
//! from scratch) and the resulting agent scores are compared with the
//! full-data scores by Kendall's tau-b. Rank dispersion across replicates is
//! reported alongside.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotationDataset;
use crate::em::{fit, EmConfig, EmResult};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scoring::{agent_scores, Method};

/// Stream tag separating subsampling draws from other users of the seed.
const SUBSAMPLE_STREAM: u64 = 0x5355_4253; // "SUBS"

/// Kendall's tau-b between two score vectors, in O(n log n).
///
/// Pairs tied in both vectors count in neither numerator nor denominator.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewEntries(n));
    }
    let pairs = |t: u64| t * (t.saturating_sub(1)) / 2;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let total = pairs(n as u64);
    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in order.windows(2) {
        let same_x = x[w[0]].total_cmp(&x[w[1]]).is_eq();
        if same_x {
            run_x += 1;
            if y[w[0]].total_cmp(&y[w[1]]).is_eq() {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0].total_cmp(&w[1]).is_eq() {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    if tied_x == total || tied_y == total {
        return Err(Error::DegenerateRanking);
    }
    let numerator =
        total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let denominator = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok(numerator / denominator)
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]).is_lt() {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// 1-based ordinal ranks: highest score gets rank 1, ties broken by agent id.
pub fn ordinal_ranks(scores: &[f64], agent_ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| agent_ids[a].cmp(&agent_ids[b]))
    });
    let mut ranks = vec![0; scores.len()];
    for (pos, &agent) in order.iter().enumerate() {
        ranks[agent] = pos + 1;
    }
    ranks
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean over agents of the rank standard deviation and of the rank range,
/// given one rank vector per replicate.
pub fn rank_dispersion(replicate_ranks: &[Vec<usize>]) -> (f64, f64) {
    let Some(first) = replicate_ranks.first() else {
        return (0.0, 0.0);
    };
    let n_agents = first.len();
    if n_agents == 0 {
        return (0.0, 0.0);
    }
    let (mut std_sum, mut range_sum) = (0.0, 0.0);
    for a in 0..n_agents {
        let ranks: Vec<f64> = replicate_ranks.iter().map(|r| r[a] as f64).collect();
        std_sum += population_std(&ranks);
        let max = ranks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ranks.iter().copied().fold(f64::INFINITY, f64::min);
        range_sum += max - min;
    }
    (std_sum / n_agents as f64, range_sum / n_agents as f64)
}

/// Keeps annotations from `m` annotators drawn uniformly without replacement.
/// Items left without annotations are dropped. The draw depends only on
/// `(seed, replicate)`.
pub fn subsample_annotators(
    dataset: &AnnotationDataset,
    m: usize,
    seed: u64,
    replicate: usize,
) -> Result<AnnotationDataset> {
    let pool = dataset.n_annotators();
    if m < 1 || m > pool {
        return Err(Error::SubsetTooSmall { m, pool });
    }
    if m == pool {
        return Ok(dataset.clone());
    }
    let mut rng = stream(seed, &[SUBSAMPLE_STREAM, replicate as u64]);
    let mut keep = vec![false; pool];
    for r in index::sample(&mut rng, pool, m) {
        keep[r] = true;
    }
    Ok(dataset
        .retain_annotators(|r| keep[r])
        .expect("every annotator has at least one annotation"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSize {
    /// `max(1, floor(fraction * |R|))` annotators.
    Fraction(f64),
    Count(usize),
}

impl SubsetSize {
    pub fn resolve(self, pool: usize) -> Result<usize> {
        match self {
            SubsetSize::Fraction(f) if f > 0.0 && f <= 1.0 => {
                Ok(((f * pool as f64).floor() as usize).max(1))
            }
            SubsetSize::Fraction(f) => Err(Error::InvalidStabilityConfig(format!(
                "subset fraction must lie in (0, 1], got {f}"
            ))),
            SubsetSize::Count(m) if (1..=pool).contains(&m) => Ok(m),
            SubsetSize::Count(m) => Err(Error::SubsetTooSmall { m, pool }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub subset: SubsetSize,
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub em: EmConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            subset: SubsetSize::Fraction(0.8),
            repeats: 10,
            seed: 0,
            methods: Method::ALL.to_vec(),
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStability {
    pub method: Method,
    /// Mean tau-b against the full-data scores; `None` when it is undefined
    /// in every replicate (all scores tied).
    pub mean_tau_b: Option<f64>,
    pub mean_rank_std: f64,
    pub mean_rank_range: f64,
    pub n_valid_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub n_annotators: usize,
    pub n_items: usize,
    /// Set when an agent lost all of its items; such replicates are excluded.
    pub agent_dropped: bool,
    /// Agent ids best first, per method.
    pub rankings: BTreeMap<Method, Vec<String>>,
    pub tau_b: BTreeMap<Method, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub subset_size: usize,
    pub repeats: usize,
    pub seed: u64,
    pub full_rankings: BTreeMap<Method, Vec<String>>,
    pub methods: Vec<MethodStability>,
    pub n_dropped_replicates: usize,
    pub replicates: Vec<ReplicateRecord>,
}

impl StabilityReport {
    pub fn method(&self, method: Method) -> Option<&MethodStability> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Scores of every agent under each method, fitting EM only when needed.
pub fn method_scores(
    dataset: &AnnotationDataset,
    methods: &[Method],
    em: &EmConfig,
) -> Result<Vec<Vec<f64>>> {
    let fitted: Option<EmResult> = if methods.iter().any(|m| m.needs_em()) {
        Some(fit(dataset, em)?)
    } else {
        None
    };
    methods
        .iter()
        .map(|&m| agent_scores(dataset, m, fitted.as_ref()))
        .collect()
}

fn ranking(scores: &[f64], agents: &[String]) -> Vec<String> {
    let ranks = ordinal_ranks(scores, agents);
    let mut out = vec![String::new(); agents.len()];
    for (a, r) in ranks.into_iter().enumerate() {
        out[r - 1] = agents[a].clone();
    }
    out
}

fn tau_or_none(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    match kendall_tau_b(x, y) {
        Ok(t) => Ok(Some(t)),
        Err(Error::DegenerateRanking) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn stability_run(
    dataset: &AnnotationDataset,
    config: &StabilityConfig,
) -> Result<StabilityReport> {
    if dataset.n_agents() < 2 {
        return Err(Error::TooFewEntries(dataset.n_agents()));
    }
    if config.repeats == 0 {
        return Err(Error::InvalidStabilityConfig(
            "repeats must be at least 1".into(),
        ));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidStabilityConfig("no methods requested".into()));
    }
    config.em.validate()?;
    let m = config.subset.resolve(dataset.n_annotators())?;
    let agents = dataset.agents();
    let methods = &config.methods;

    let full = method_scores(dataset, methods, &config.em)?;

    struct Replicate {
        record: ReplicateRecord,
        ranks: Vec<Vec<usize>>,
    }

    let replicates: Vec<Replicate> = (0..config.repeats)
        .into_par_iter()
        .map(|index| -> Result<Replicate> {
            let sub = subsample_annotators(dataset, m, config.seed, index)?;
            let mut record = ReplicateRecord {
                index,
                n_annotators: sub.n_annotators(),
                n_items: sub.n_items(),
                agent_dropped: false,
                rankings: BTreeMap::new(),
                tau_b: BTreeMap::new(),
            };
            if sub.n_agents() < dataset.n_agents() {
                log::warn!(
                    "AgentDropped: replicate {index} lost every item of {} agent(s); excluded",
                    dataset.n_agents() - sub.n_agents()
                );
                record.agent_dropped = true;
                return Ok(Replicate {
                    record,
                    ranks: Vec::new(),
                });
            }
            let scores = method_scores(&sub, methods, &config.em)?;
            let mut ranks = Vec::with_capacity(methods.len());
            for ((&method, sub_scores), full_scores) in methods.iter().zip(&scores).zip(&full) {
                record
                    .tau_b
                    .insert(method, tau_or_none(full_scores, sub_scores)?);
                record.rankings.insert(method, ranking(sub_scores, agents));
                ranks.push(ordinal_ranks(sub_scores, agents));
            }
            Ok(Replicate { record, ranks })
        })
        .collect::<Result<_>>()?;

    let valid: Vec<&Replicate> = replicates
        .iter()
        .filter(|r| !r.record.agent_dropped)
        .collect();
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let taus: Vec<f64> = valid
                .iter()
                .filter_map(|r| r.record.tau_b[&method])
                .collect();
            let mean_tau_b =
                (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64);
            let ranks: Vec<Vec<usize>> = valid.iter().map(|r| r.ranks[mi].clone()).collect();
            let (mean_rank_std, mean_rank_range) = rank_dispersion(&ranks);
            MethodStability {
                method,
                mean_tau_b,
                mean_rank_std,
                mean_rank_range,
                n_valid_replicates: valid.len(),
            }
        })
        .collect();

    Ok(StabilityReport {
        subset_size: m,
        repeats: config.repeats,
        seed: config.seed,
        full_rankings: methods
            .iter()
            .zip(&full)
            .map(|(&method, s)| (method, ranking(s, agents)))
            .collect(),
        methods: summaries,
        n_dropped_replicates: replicates.len() - valid.len(),
        replicates: replicates.into_iter().map(|r| r.record).collect(),
    })
}

/// `method,mean_tau_b,mean_rank_std,mean_rank_range,n_valid_replicates`
pub fn write_stability_csv<W: Write>(writer: W, report: &StabilityReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for m in &report.methods {
        wtr.serialize(m)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
