//! Synthetic annotator populations and ablation sweeps.
//!
//! A world consists of agents with a scalar quality `q`: each of an agent's
//! items has latent level `K-1` with probability `q`, the remaining mass
//! spread evenly over the lower levels. Annotators follow one of four
//! archetypes (reliable, strict, lenient, adversarial), each a fixed
//! confusion matrix. Hard items blend every annotator's confusion row toward
//! uniform. Each item is labelled by `L` annotators drawn without
//! replacement.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, AnnotationDataset, LabelScheme};
use crate::em::{fit, ConfusionMatrix, EmConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stable_hash, stream};
use crate::scoring::{agent_scores, Method};
use crate::stability::{kendall_tau_b, stability_run, StabilityConfig, SubsetSize};

/// Agent qualities of the preset printed as "tight".
pub const TIGHT_QUALITIES: [f64; 6] = [0.85, 0.80, 0.70, 0.55, 0.35, 0.20];
/// Agent qualities of the preset printed as "wide".
pub const WIDE_QUALITIES: [f64; 6] = [0.75, 0.70, 0.65, 0.60, 0.55, 0.50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Reliable,
    Strict,
    Lenient,
    Adversarial,
}

impl Archetype {
    pub fn name(self) -> &'static str {
        match self {
            Archetype::Reliable => "reliable",
            Archetype::Strict => "strict",
            Archetype::Lenient => "lenient",
            Archetype::Adversarial => "adversarial",
        }
    }
}

/// Shape parameters of the archetype confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeParams {
    /// Diagonal mass of a reliable annotator.
    pub reliable_p: f64,
    /// Mass a strict (lenient) annotator moves one level down (up).
    pub shift: f64,
    /// Mass an adversarial annotator puts on the reversed level.
    pub adversarial_mass: f64,
}

impl Default for ArchetypeParams {
    fn default() -> Self {
        Self {
            reliable_p: 0.85,
            shift: 0.3,
            adversarial_mass: 0.7,
        }
    }
}

fn check_unit(archetype: &'static str, name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArchetypeParam {
            archetype,
            reason: format!("{name} must lie in [0, 1], got {v}"),
        })
    }
}

/// Confusion matrix of an archetype.
///
/// * reliable: diagonal `p`, off-diagonal `(1-p)/(K-1)`;
/// * strict: reliable, then `shift` moved from `[c][c]` to `[c][c-1]` for `c > 0`;
/// * lenient: reliable, then `shift` moved from `[c][c]` to `[c][c+1]` for `c < K-1`;
/// * adversarial: `adversarial_mass` on `[c][K-1-c]`, the rest uniform.
pub fn make_confusion(
    archetype: Archetype,
    k: usize,
    params: &ArchetypeParams,
) -> Result<ConfusionMatrix> {
    if k < 2 {
        return Err(Error::InvalidArchetypeParam {
            archetype: archetype.name(),
            reason: format!("K must be at least 2, got {k}"),
        });
    }
    let reliable = |p: f64| -> Vec<Vec<f64>> {
        let off = (1.0 - p) / (k - 1) as f64;
        (0..k)
            .map(|c| (0..k).map(|o| if o == c { p } else { off }).collect())
            .collect()
    };
    let rows = match archetype {
        Archetype::Reliable => {
            check_unit("reliable", "reliable_p", params.reliable_p)?;
            reliable(params.reliable_p)
        }
        Archetype::Strict | Archetype::Lenient => {
            let name = archetype.name();
            check_unit(name, "reliable_p", params.reliable_p)?;
            check_unit(name, "shift", params.shift)?;
            if params.shift > params.reliable_p {
                return Err(Error::InvalidArchetypeParam {
                    archetype: name,
                    reason: format!(
                        "shift {} exceeds the diagonal mass {}",
                        params.shift, params.reliable_p
                    ),
                });
            }
            let mut rows = reliable(params.reliable_p);
            for (c, row) in rows.iter_mut().enumerate() {
                let target = match archetype {
                    Archetype::Strict if c > 0 => c - 1,
                    Archetype::Lenient if c + 1 < k => c + 1,
                    _ => continue,
                };
                row[c] -= params.shift;
                row[target] += params.shift;
            }
            rows
        }
        Archetype::Adversarial => {
            check_unit("adversarial", "adversarial_mass", params.adversarial_mass)?;
            let rest = (1.0 - params.adversarial_mass) / k as f64;
            (0..k)
                .map(|c| {
                    let mut row = vec![rest; k];
                    row[k - 1 - c] += params.adversarial_mass;
                    row
                })
                .collect()
        }
    };
    ConfusionMatrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_items_per_agent: usize,
    pub agent_qualities: Vec<f64>,
    pub n_annotators: usize,
    pub labels_per_item: usize,
    pub adversarial_frac: f64,
    pub strict_frac: f64,
    pub lenient_frac: f64,
    pub hard_item_prob: f64,
    /// Weight of the uniform distribution in a hard item's confusion rows.
    pub hard_blend: f64,
    pub k: usize,
    pub archetypes: ArchetypeParams,
    pub seed: u64,
    pub repetitions: usize,
    /// Annotator fraction kept per stability replicate.
    pub stability_fraction: f64,
    /// Stability replicates per world; 0 skips the stability metric.
    pub stability_repeats: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items_per_agent: 200,
            agent_qualities: WIDE_QUALITIES.to_vec(),
            n_annotators: 30,
            labels_per_item: 5,
            adversarial_frac: 0.0,
            strict_frac: 0.0,
            lenient_frac: 0.0,
            hard_item_prob: 0.2,
            hard_blend: 0.5,
            k: 3,
            archetypes: ArchetypeParams::default(),
            seed: 0,
            repetitions: 10,
            stability_fraction: 0.8,
            stability_repeats: 10,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthConfig(msg));
        if self.agent_qualities.is_empty() {
            return bad("agent_qualities is empty".into());
        }
        if let Some(q) = self
            .agent_qualities
            .iter()
            .find(|q| !(0.0..=1.0).contains(*q))
        {
            return bad(format!("agent quality {q} outside [0, 1]"));
        }
        if self.k < 2 {
            return bad(format!("K must be at least 2, got {}", self.k));
        }
        if self.n_items_per_agent == 0 || self.n_annotators == 0 {
            return bad("need at least one item per agent and one annotator".into());
        }
        if self.labels_per_item == 0 || self.labels_per_item > self.n_annotators {
            return bad(format!(
                "labels_per_item {} must lie in [1, n_annotators={}]",
                self.labels_per_item, self.n_annotators
            ));
        }
        let fracs = [self.adversarial_frac, self.strict_frac, self.lenient_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || fracs.iter().sum::<f64>() > 1.0 + 1e-12
        {
            return bad(format!(
                "annotator fractions {fracs:?} must be >= 0 and sum to <= 1"
            ));
        }
        for (name, v) in [
            ("hard_item_prob", self.hard_item_prob),
            ("hard_blend", self.hard_blend),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.stability_fraction > 0.0 && self.stability_fraction <= 1.0) {
            return bad(format!(
                "stability_fraction must lie in (0, 1], got {}",
                self.stability_fraction
            ));
        }
        Ok(())
    }

    /// Archetype of each annotator, by annotator number: adversarial first,
    /// then strict, lenient and reliable.
    pub fn annotator_types(&self) -> Vec<Archetype> {
        let n = self.n_annotators;
        let count = |f: f64| (f * n as f64).round() as usize;
        let n_adv = count(self.adversarial_frac).min(n);
        let n_strict = count(self.strict_frac).min(n - n_adv);
        let n_len = count(self.lenient_frac).min(n - n_adv - n_strict);
        let mut out = Vec::with_capacity(n);
        out.extend(std::iter::repeat_n(Archetype::Adversarial, n_adv));
        out.extend(std::iter::repeat_n(Archetype::Strict, n_strict));
        out.extend(std::iter::repeat_n(Archetype::Lenient, n_len));
        out.resize(n, Archetype::Reliable);
        out
    }
}

/// Expected credit of an item from an agent of quality `q`.
pub fn expected_agent_score(q: f64, scheme: &LabelScheme) -> f64 {
    let k = scheme.k();
    let lower: f64 = scheme.credit()[..k - 1].iter().sum();
    q * scheme.max_credit() + (1.0 - q) / (k - 1) as f64 * lower
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub dataset: AnnotationDataset,
    /// Latent level per item, in dataset item order.
    pub latent: Vec<usize>,
    /// Mean `v(z)` per agent, in dataset agent order.
    pub true_agent_scores: Vec<f64>,
    /// Generating quality per agent, in dataset agent order.
    pub agent_qualities: Vec<f64>,
    /// Archetype per annotator, in dataset annotator order.
    pub annotator_types: Vec<Archetype>,
    /// Whether each item (dataset order) was generated as hard.
    pub hard: Vec<bool>,
}

impl SynthWorld {
    pub fn true_scores(&self) -> BTreeMap<String, f64> {
        zip_agents(self.dataset.agents(), &self.true_agent_scores)
    }

    pub fn qualities(&self) -> BTreeMap<String, f64> {
        zip_agents(self.dataset.agents(), &self.agent_qualities)
    }
}

fn zip_agents(agents: &[String], values: &[f64]) -> BTreeMap<String, f64> {
    agents.iter().cloned().zip(values.iter().copied()).collect()
}

/// Draws a world. Fully determined by `config.seed`.
pub fn sample_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let k = config.k;
    let scheme = LabelScheme::evenly_spaced(k)?;
    let types = config.annotator_types();
    let confusions: Vec<ConfusionMatrix> = types
        .iter()
        .map(|&t| make_confusion(t, k, &config.archetypes))
        .collect::<Result<_>>()?;
    let uniform = 1.0 / k as f64;
    let blend = config.hard_blend;

    let mut rng = stream(config.seed, &[]);
    let annotator_id = |r: usize| format!("ann{r:03}");
    let mut raw = Vec::new();
    let mut meta = Vec::new();
    for (a, &q) in config.agent_qualities.iter().enumerate() {
        let agent_id = format!("agent{a:02}");
        let mut level_weights = vec![(1.0 - q) / (k - 1) as f64; k];
        level_weights[k - 1] = q;
        let level_dist = WeightedIndex::new(&level_weights)
            .map_err(|e| Error::InvalidSynthConfig(format!("agent quality {q}: {e}")))?;
        for i in 0..config.n_items_per_agent {
            let item_id = format!("{agent_id}-item{i:05}");
            let z = level_dist.sample(&mut rng);
            let hard = rng.random::<f64>() < config.hard_item_prob;
            for r in index::sample(&mut rng, config.n_annotators, config.labels_per_item) {
                let row = confusions[r].row(z);
                let label = if hard {
                    let blended: Vec<f64> = row
                        .iter()
                        .map(|p| (1.0 - blend) * p + blend * uniform)
                        .collect();
                    draw(&mut rng, &blended)
                } else {
                    draw(&mut rng, row)
                };
                raw.push(Annotation::new(
                    item_id.clone(),
                    agent_id.clone(),
                    annotator_id(r),
                    label,
                ));
            }
            meta.push((item_id, z, hard));
        }
    }

    let dataset = AnnotationDataset::new(raw, scheme.clone())?;
    let mut latent = vec![0; dataset.n_items()];
    let mut hard_flags = vec![false; dataset.n_items()];
    for (item_id, z, hard) in meta {
        let i = dataset
            .item_index(&item_id)
            .expect("generated item is indexed");
        latent[i] = z;
        hard_flags[i] = hard;
    }
    let agent_qualities: Vec<f64> = dataset
        .agents()
        .iter()
        .map(|id| {
            let a: usize = id["agent".len()..].parse().expect("generated agent id");
            config.agent_qualities[a]
        })
        .collect();
    let true_agent_scores = (0..dataset.n_agents())
        .map(|a| {
            let items = dataset.agent_items(a);
            items.iter().map(|&i| scheme.value(latent[i])).sum::<f64>() / items.len() as f64
        })
        .collect();
    let annotator_types = dataset
        .annotators()
        .iter()
        .map(|id| {
            types[id["ann".len()..]
                .parse::<usize>()
                .expect("generated annotator id")]
        })
        .collect();
    Ok(SynthWorld {
        dataset,
        latent,
        true_agent_scores,
        agent_qualities,
        annotator_types,
        hard: hard_flags,
    })
}

/// Inverse-CDF draw from a probability row.
fn draw<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

fn check_same_agents(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<()> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::AgentSetMismatch);
    }
    Ok(())
}

/// Mean over agents of the squared score error.
pub fn score_mse(estimated: &BTreeMap<String, f64>, truth: &BTreeMap<String, f64>) -> Result<f64> {
    check_same_agents(estimated, truth)?;
    if truth.is_empty() {
        return Err(Error::AgentSetMismatch);
    }
    let sum: f64 = estimated
        .values()
        .zip(truth.values())
        .map(|(e, t)| (e - t).powi(2))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// Fraction of agent pairs ordered as their true qualities are. Pairs with
/// equal true quality are skipped; tied estimates count one half.
pub fn ranking_accuracy(
    estimated: &BTreeMap<String, f64>,
    true_qualities: &BTreeMap<String, f64>,
) -> Result<f64> {
    check_same_agents(estimated, true_qualities)?;
    let est: Vec<f64> = estimated.values().copied().collect();
    let tru: Vec<f64> = true_qualities.values().copied().collect();
    if est.len() < 2 {
        return Err(Error::TooFewEntries(est.len()));
    }
    let (mut agree, mut total) = (0.0, 0usize);
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let t = tru[i].total_cmp(&tru[j]);
            if t.is_eq() {
                continue;
            }
            total += 1;
            let e = est[i].total_cmp(&est[j]);
            if e.is_eq() {
                agree += 0.5;
            } else if e == t {
                agree += 1.0;
            }
        }
    }
    if total == 0 {
        return Err(Error::DegenerateRanking);
    }
    Ok(agree / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityPreset {
    Tight,
    Wide,
}

impl QualityPreset {
    pub fn qualities(self) -> Vec<f64> {
        match self {
            QualityPreset::Tight => TIGHT_QUALITIES.to_vec(),
            QualityPreset::Wide => WIDE_QUALITIES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Adversarial,
    Strict,
    Lenient,
    HardItems,
    LabelsPerItem,
    AgentGap,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Adversarial,
        Axis::Strict,
        Axis::Lenient,
        Axis::HardItems,
        Axis::LabelsPerItem,
        Axis::AgentGap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Adversarial => "adversarial",
            Axis::Strict => "strict",
            Axis::Lenient => "lenient",
            Axis::HardItems => "hard_items",
            Axis::LabelsPerItem => "labels_per_item",
            Axis::AgentGap => "agent_gap",
        }
    }

    pub fn default_settings(self) -> Vec<Setting> {
        let fractions = |v: &[f64]| v.iter().map(|&f| Setting::Fraction(f)).collect();
        match self {
            Axis::Adversarial | Axis::Strict | Axis::Lenient => {
                fractions(&[0.0, 0.1, 0.2, 0.3, 0.4])
            }
            Axis::HardItems => fractions(&[0.0, 0.1, 0.2]),
            Axis::LabelsPerItem => [3, 5, 7, 9].into_iter().map(Setting::Labels).collect(),
            Axis::AgentGap => vec![
                Setting::Qualities(QualityPreset::Tight),
                Setting::Qualities(QualityPreset::Wide),
            ],
        }
    }

    /// Parses a setting written as in the CLI (`0.2`, `5`, `tight`).
    pub fn parse_setting(self, s: &str) -> Result<Setting> {
        let s = s.trim();
        let invalid =
            || Error::InvalidSynthConfig(format!("invalid {} setting `{s}`", self.name()));
        match self {
            Axis::LabelsPerItem => s.parse().map(Setting::Labels).map_err(|_| invalid()),
            Axis::AgentGap => match s.to_ascii_lowercase().as_str() {
                "tight" => Ok(Setting::Qualities(QualityPreset::Tight)),
                "wide" => Ok(Setting::Qualities(QualityPreset::Wide)),
                _ => Err(invalid()),
            },
            _ => s.parse().map(Setting::Fraction).map_err(|_| invalid()),
        }
    }

    /// `base` with this axis set to `setting`.
    pub fn apply(self, base: &SynthConfig, setting: Setting) -> Result<SynthConfig> {
        let mut cfg = base.clone();
        match (self, setting) {
            (Axis::Adversarial, Setting::Fraction(f)) => cfg.adversarial_frac = f,
            (Axis::Strict, Setting::Fraction(f)) => cfg.strict_frac = f,
            (Axis::Lenient, Setting::Fraction(f)) => cfg.lenient_frac = f,
            (Axis::HardItems, Setting::Fraction(f)) => cfg.hard_item_prob = f,
            (Axis::LabelsPerItem, Setting::Labels(l)) => cfg.labels_per_item = l,
            (Axis::AgentGap, Setting::Qualities(p)) => cfg.agent_qualities = p.qualities(),
            (axis, setting) => {
                return Err(Error::InvalidSynthConfig(format!(
                    "setting {setting} does not apply to axis {}",
                    axis.name()
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::UnknownAxis(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Fraction(f64),
    Labels(usize),
    Qualities(QualityPreset),
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Fraction(x) => write!(f, "{x}"),
            Setting::Labels(l) => write!(f, "{l}"),
            Setting::Qualities(QualityPreset::Tight) => f.write_str("tight"),
            Setting::Qualities(QualityPreset::Wide) => f.write_str("wide"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    RankingAccuracy,
    KendallTau,
    Stability,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Mse,
        Metric::RankingAccuracy,
        Metric::KendallTau,
        Metric::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::RankingAccuracy => "ranking_accuracy",
            Metric::KendallTau => "kendall_tau",
            Metric::Stability => "stability",
        }
    }
}

/// Metrics of one method on one synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMetrics {
    pub method: Method,
    pub mse: f64,
    pub ranking_accuracy: f64,
    /// Tau-b of estimated scores against true qualities.
    pub kendall_tau: Option<f64>,
    /// Mean tau-b under annotator subsampling.
    pub stability: Option<f64>,
}

impl WorldMetrics {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mse => Some(self.mse),
            Metric::RankingAccuracy => Some(self.ranking_accuracy),
            Metric::KendallTau => self.kendall_tau,
            Metric::Stability => self.stability,
        }
    }
}

/// Scores a world with MV, DS and PEC and computes every metric.
pub fn evaluate_world(
    world: &SynthWorld,
    config: &SynthConfig,
    em: &EmConfig,
) -> Result<Vec<WorldMetrics>> {
    let ds = &world.dataset;
    let fitted = fit(ds, em)?;
    let truth = world.true_scores();
    let qualities = world.qualities();
    let stability = if config.stability_repeats > 0 {
        let report = stability_run(
            ds,
            &StabilityConfig {
                subset: SubsetSize::Fraction(config.stability_fraction),
                repeats: config.stability_repeats,
                seed: derive_seed(config.seed, &[stable_hash(b"stability")]),
                methods: Method::ALL.to_vec(),
                em: em.clone(),
            },
        )?;
        Some(report)
    } else {
        None
    };
    Method::ALL
        .iter()
        .map(|&method| {
            let scores = agent_scores(ds, method, Some(&fitted))?;
            let est = zip_agents(ds.agents(), &scores);
            let q: Vec<f64> = qualities.values().copied().collect();
            let kendall_tau = match kendall_tau_b(&scores, &q) {
                Ok(t) => Some(t),
                Err(Error::DegenerateRanking) | Err(Error::TooFewEntries(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(WorldMetrics {
                method,
                mse: score_mse(&est, &truth)?,
                ranking_accuracy: ranking_accuracy(&est, &qualities)?,
                kendall_tau,
                stability: stability
                    .as_ref()
                    .and_then(|r| r.method(method))
                    .and_then(|m| m.mean_tau_b),
            })
        })
        .collect()
}

/// One line of the long-format ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: String,
    pub setting: String,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub setting: String,
    pub repetition: usize,
    pub seed: u64,
    pub metrics: Vec<WorldMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub axis: Axis,
    pub settings: Vec<String>,
    pub rows: Vec<AblationRow>,
    pub repetitions: Vec<RepetitionRecord>,
}

impl AblationResult {
    pub fn get(&self, setting: &str, method: Method, metric: Metric) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.method == method && r.metric == metric.name())
    }

    pub fn mean(&self, setting: &str, method: Method, metric: Metric) -> Option<f64> {
        self.get(setting, method, metric).map(|r| r.mean)
    }
}

/// Mean with a normal-approximation 95% interval (`1.96 sd / sqrt(n)`,
/// sample standard deviation).
pub fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half = 1.96 * var.sqrt() / n.sqrt();
    (mean, mean - half, mean + half)
}

/// Sweeps `axis` over `settings`, sampling `base.repetitions` worlds per
/// setting. World `(s, rep)` is seeded from `(base.seed, axis, s, rep)`.
pub fn run_ablation(
    axis: Axis,
    settings: &[Setting],
    base: &SynthConfig,
    em: &EmConfig,
) -> Result<AblationResult> {
    base.validate()?;
    em.validate()?;
    if settings.is_empty() {
        return Err(Error::InvalidSynthConfig("no settings given".into()));
    }
    let configs: Vec<SynthConfig> = settings
        .iter()
        .map(|&s| axis.apply(base, s))
        .collect::<Result<_>>()?;
    let axis_key = stable_hash(axis.name().as_bytes());
    let tasks: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..base.repetitions).map(move |r| (s, r)))
        .collect();

    let records: Vec<RepetitionRecord> = tasks
        .par_iter()
        .map(|&(s, rep)| {
            let mut cfg = configs[s].clone();
            cfg.seed = derive_seed(base.seed, &[axis_key, s as u64, rep as u64]);
            let world = sample_world(&cfg)?;
            Ok(RepetitionRecord {
                setting: settings[s].to_string(),
                repetition: rep,
                seed: cfg.seed,
                metrics: evaluate_world(&world, &cfg, em)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for setting in settings {
        let label = setting.to_string();
        let reps: Vec<&RepetitionRecord> = records.iter().filter(|r| r.setting == label).collect();
        for method in Method::ALL {
            for metric in Metric::ALL {
                let values: Vec<f64> = reps
                    .iter()
                    .filter_map(|r| r.metrics.iter().find(|m| m.method == method))
                    .filter_map(|m| m.get(metric))
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let (mean, ci_low, ci_high) = mean_ci(&values);
                rows.push(AblationRow {
                    axis: axis.name().to_string(),
                    setting: label.clone(),
                    method,
                    metric: metric.name().to_string(),
                    mean,
                    ci_low,
                    ci_high,
                });
            }
        }
    }
    Ok(AblationResult {
        axis,
        settings: settings.iter().map(Setting::to_string).collect(),
        rows,
        repetitions: records,
    })
}

/// `axis,setting,method,metric,mean,ci_low,ci_high`
pub fn write_ablation_csv<W: Write>(writer: W, result: &AblationResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in &result.rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ArchetypeParams {
        ArchetypeParams::default()
    }

    fn assert_stochastic(m: &ConfusionMatrix) {
        for row in m.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{row:?}");
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn reliable_p1_is_identity() {
        let p = ArchetypeParams {
            reliable_p: 1.0,
            ..params()
        };
        let m = make_confusion(Archetype::Reliable, 3, &p).unwrap();
        assert_eq!(m, ConfusionMatrix::near_identity(3, 0.0));
    }

    #[test]
    fn full_adversary_reverses() {
        let p = ArchetypeParams {
            adversarial_mass: 1.0,
            ..params()
        };
        let m = make_confusion(Archetype::Adversarial, 3, &p).unwrap();
        assert_eq!(
            m.to_rows(),
            vec![
                vec![0.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0]
            ]
        );
    }

    #[test]
    fn strict_shifts_mass_down() {
        let m = make_confusion(Archetype::Strict, 3, &params()).unwrap();
        assert!((m.get(2, 1) - 0.375).abs() < 1e-12);
        assert!((m.get(2, 2) - 0.55).abs() < 1e-12);
        assert!((m.get(2, 0) - 0.075).abs() < 1e-12);
        assert!((m.get(0, 0) - 0.85).abs() < 1e-12);
        for a in [
            Archetype::Reliable,
            Archetype::Strict,
            Archetype::Lenient,
            Archetype::Adversarial,
        ] {
            for k in 2..6 {
                assert_stochastic(&make_confusion(a, k, &params()).unwrap());
            }
        }
        let m = make_confusion(Archetype::Lenient, 3, &params()).unwrap();
        assert!((m.get(0, 1) - 0.375).abs() < 1e-12);
        assert!((m.get(2, 2) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn archetype_params_validated() {
        let p = ArchetypeParams {
            shift: 0.9,
            ..params()
        };
        assert!(matches!(
            make_confusion(Archetype::Strict, 3, &p),
            Err(Error::InvalidArchetypeParam {
                archetype: "strict",
                ..
            })
        ));
        let p = ArchetypeParams {
            adversarial_mass: -0.1,
            ..params()
        };
        assert!(make_confusion(Archetype::Adversarial, 3, &p).is_err());
    }

    #[test]
    fn noiseless_world() {
        let cfg = SynthConfig {
            agent_qualities: vec![1.0],
            hard_item_prob: 0.0,
            n_items_per_agent: 20,
            archetypes: ArchetypeParams {
                reliable_p: 1.0,
                ..params()
            },
            ..SynthConfig::default()
        };
        let w = sample_world(&cfg).unwrap();
        assert!(w.dataset.annotations().iter().all(|a| a.label == 2));
        assert_eq!(w.true_agent_scores, vec![1.0]);
    }

    #[test]
    fn fully_blended_hard_items_ignore_latent() {
        let cfg = SynthConfig {
            agent_qualities: vec![1.0],
            hard_item_prob: 1.0,
            hard_blend: 1.0,
            n_items_per_agent: 2000,
            labels_per_item: 3,
            archetypes: ArchetypeParams {
                reliable_p: 1.0,
                ..params()
            },
            ..SynthConfig::default()
        };
        let w = sample_world(&cfg).unwrap();
        let mut counts = [0usize; 3];
        for a in w.dataset.annotations() {
            counts[a.label] += 1;
        }
        let n = w.dataset.annotations().len() as f64;
        for c in counts {
            assert!((c as f64 / n - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn world_is_seeded() {
        let cfg = SynthConfig {
            n_items_per_agent: 30,
            adversarial_frac: 0.2,
            ..SynthConfig::default()
        };
        assert_eq!(sample_world(&cfg).unwrap(), sample_world(&cfg).unwrap());
        let other = SynthConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            sample_world(&cfg).unwrap().dataset,
            sample_world(&other).unwrap().dataset
        );
        let w = sample_world(&cfg).unwrap();
        assert_eq!(w.dataset.n_items(), 180);
        assert!(w.dataset.item_labels(0).len() == 5);
        assert_eq!(
            w.annotator_types
                .iter()
                .filter(|&&t| t == Archetype::Adversarial)
                .count(),
            6
        );
    }

    #[test]
    fn config_validation() {
        let bad = [
            SynthConfig {
                agent_qualities: vec![],
                ..SynthConfig::default()
            },
            SynthConfig {
                labels_per_item: 31,
                ..SynthConfig::default()
            },
            SynthConfig {
                adversarial_frac: 0.6,
                strict_frac: 0.6,
                ..SynthConfig::default()
            },
            SynthConfig {
                hard_item_prob: 1.5,
                ..SynthConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                sample_world(&cfg),
                Err(Error::InvalidSynthConfig(_))
            ));
        }
    }

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn mse_examples() {
        let t = map(&[("a", 0.5), ("b", 0.7)]);
        assert_eq!(score_mse(&t, &t).unwrap(), 0.0);
        let e = map(&[("b", 0.7), ("a", 0.6)]);
        assert!((score_mse(&e, &t).unwrap() - 0.005).abs() < 1e-15);
        assert!(matches!(
            score_mse(&map(&[("a", 0.5)]), &t),
            Err(Error::AgentSetMismatch)
        ));
    }

    #[test]
    fn ranking_accuracy_examples() {
        let q = map(&[
            ("a", 0.9),
            ("b", 0.8),
            ("c", 0.7),
            ("d", 0.6),
            ("e", 0.5),
            ("f", 0.4),
        ]);
        assert_eq!(ranking_accuracy(&q, &q).unwrap(), 1.0);
        let swapped = map(&[
            ("a", 0.8),
            ("b", 0.9),
            ("c", 0.7),
            ("d", 0.6),
            ("e", 0.5),
            ("f", 0.4),
        ]);
        assert!((ranking_accuracy(&swapped, &q).unwrap() - 14.0 / 15.0).abs() < 1e-15);
        let reversed: BTreeMap<String, f64> = q.iter().map(|(k, v)| (k.clone(), -v)).collect();
        assert_eq!(ranking_accuracy(&reversed, &q).unwrap(), 0.0);
        let tied = map(&[
            ("a", 0.5),
            ("b", 0.5),
            ("c", 0.7),
            ("d", 0.6),
            ("e", 0.5),
            ("f", 0.4),
        ]);
        assert!(ranking_accuracy(&tied, &q).unwrap() < 1.0);
    }

    #[test]
    fn axis_parsing_and_settings() {
        assert_eq!(
            "labels_per_item".parse::<Axis>().unwrap(),
            Axis::LabelsPerItem
        );
        assert!(matches!(
            "bogus".parse::<Axis>(),
            Err(Error::UnknownAxis(_))
        ));
        assert_eq!(Axis::Adversarial.default_settings().len(), 5);
        assert_eq!(
            Axis::AgentGap.parse_setting("Tight").unwrap(),
            Setting::Qualities(QualityPreset::Tight)
        );
        assert!(Axis::LabelsPerItem
            .apply(&SynthConfig::default(), Setting::Fraction(0.1))
            .is_err());
        let cfg = Axis::LabelsPerItem
            .apply(&SynthConfig::default(), Setting::Labels(9))
            .unwrap();
        assert_eq!(cfg.labels_per_item, 9);
    }

    #[test]
    fn mean_ci_normal_approx() {
        let (m, lo, hi) = mean_ci(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((hi - m - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        assert!((m - lo - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_ci(&[4.0]), (4.0, 4.0, 4.0));
    }
}
