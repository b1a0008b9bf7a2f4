//! Independent reference implementations used as test oracles. Everything
//! here works in plain probability space with nested loops, sharing no code
//! with the library.
#![allow(dead_code)]

use stableval::{Annotation, AnnotationDataset, LabelScheme};

/// Observation `(item, annotator, label)` by position.
pub type Obs = (usize, usize, usize);

pub struct Params {
    pub mu: Vec<f64>,
    /// `pi[r][c][o]`
    pub pi: Vec<Vec<Vec<f64>>>,
}

/// Majority label of each item, ties to the lowest label.
pub fn majority(n_items: usize, k: usize, obs: &[Obs]) -> Vec<usize> {
    (0..n_items)
        .map(|i| {
            let mut counts = vec![0usize; k];
            for &(it, _, l) in obs {
                if it == i {
                    counts[l] += 1;
                }
            }
            let best = *counts.iter().max().unwrap();
            counts.iter().position(|&c| c == best).unwrap()
        })
        .collect()
}

pub fn init(n_items: usize, n_ann: usize, k: usize, eps: f64, obs: &[Obs]) -> Params {
    let mv = majority(n_items, k, obs);
    let mut mu = vec![0.0; k];
    for l in mv {
        mu[l] += 1.0 / n_items as f64;
    }
    let pi = (0..n_ann)
        .map(|_| {
            (0..k)
                .map(|c| {
                    (0..k)
                        .map(|o| {
                            if c == o {
                                1.0 - eps + eps / k as f64
                            } else {
                                eps / k as f64
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Params { mu, pi }
}

/// `gamma_ic = mu_c prod_r pi_r[c][y_ir] / sum_c' (...)`, by direct products.
pub fn posteriors(n_items: usize, k: usize, obs: &[Obs], p: &Params) -> Vec<Vec<f64>> {
    (0..n_items)
        .map(|i| {
            let unnorm: Vec<f64> = (0..k)
                .map(|c| {
                    let mut v = p.mu[c];
                    for &(it, r, l) in obs {
                        if it == i {
                            v *= p.pi[r][c][l];
                        }
                    }
                    v
                })
                .collect();
            let z: f64 = unnorm.iter().sum();
            unnorm.iter().map(|v| v / z).collect()
        })
        .collect()
}

pub fn m_step(
    n_ann: usize,
    k: usize,
    obs: &[Obs],
    gamma: &[Vec<f64>],
    a_mu: f64,
    a_pi: f64,
) -> Params {
    let n = gamma.len() as f64;
    let mu = (0..k)
        .map(|c| {
            let s: f64 = gamma.iter().map(|g| g[c]).sum();
            (s + a_mu - 1.0) / (n + k as f64 * (a_mu - 1.0))
        })
        .collect();
    let pi = (0..n_ann)
        .map(|r| {
            (0..k)
                .map(|c| {
                    let counts: Vec<f64> = (0..k)
                        .map(|o| {
                            obs.iter()
                                .filter(|&&(_, rr, l)| rr == r && l == o)
                                .map(|&(i, _, _)| gamma[i][c])
                                .sum()
                        })
                        .collect();
                    let total: f64 = counts.iter().sum();
                    counts
                        .iter()
                        .map(|x| (x + a_pi - 1.0) / (total + k as f64 * (a_pi - 1.0)))
                        .collect()
                })
                .collect()
        })
        .collect();
    Params { mu, pi }
}

/// Builds a dataset whose sorted id order equals position order.
pub fn dataset(
    n_items: usize,
    n_ann: usize,
    k: usize,
    obs: &[Obs],
    agent_of: impl Fn(usize) -> usize,
) -> AnnotationDataset {
    let raw = obs
        .iter()
        .map(|&(i, r, l)| {
            Annotation::new(
                format!("i{i:04}"),
                format!("a{:03}", agent_of(i)),
                format!("r{r:03}"),
                l,
            )
        })
        .collect();
    let ds = AnnotationDataset::new(raw, LabelScheme::evenly_spaced(k).unwrap()).unwrap();
    assert_eq!(ds.n_items(), n_items);
    assert_eq!(ds.n_annotators(), n_ann);
    ds
}

/// Kendall tau-b by counting all pairs.
pub fn tau_b_pairs(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tie_x += 1;
            }
            if dy == 0.0 {
                tie_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    conc += 1;
                } else {
                    disc += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - tie_x) * (n0 - tie_y)) as f64).sqrt();
    (denom > 0.0).then(|| (conc - disc) as f64 / denom)
}
