//! Disagreement-aware evaluation of agents from multi-annotator judgments.
//!
//! The crate aggregates graded human labels with three methods (majority
//! vote, Dawid–Skene hard labels, posterior expected credit from a
//! latent-class EM fit), scores agents with bootstrap confidence intervals,
//! measures how stable the resulting rankings are when annotators are
//! subsampled, and ships a synthetic annotator-population harness for stress
//! testing.
//!
//! | module | contents |
//! |---|---|
//! | [`dataset`] | label schemes, annotations, validated datasets, posteriors |
//! | [`mvote`] | majority-vote labels and credit |
//! | [`em`] | confusion-matrix EM, Dawid–Skene hard labels |
//! | [`scoring`] | item credit, agent scores, bootstrap intervals |
//! | [`diagnostics`] | annotator profiles, item ambiguity |
//! | [`stability`] | Kendall tau-b, annotator subsampling, rank dispersion |
//! | [`synth`] | synthetic annotator populations and ablation sweeps |
//! | [`ingest`] | converters for MT-Bench, ConvAbuse, QAGS and MSLR exports |
//! | [`cli`] | the `stableval` command-line driver |
//!
//! Runnable walkthroughs live in `examples/`.

pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod em;
pub mod error;
pub mod ingest;
pub mod mvote;
pub mod rng;
pub mod scoring;
pub mod stability;
pub mod synth;

pub use dataset::{Annotation, AnnotationDataset, DatasetSummary, LabelScheme, PosteriorTable};
pub use em::{fit, EmConfig, EmResult, ModelParams};
pub use error::{Error, ErrorKind, Result};
pub use scoring::{AgentReport, Method, ScoreSummary};
pub use stability::{StabilityConfig, StabilityReport};
