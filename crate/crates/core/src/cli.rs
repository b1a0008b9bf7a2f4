//! Command-line front end.
//!
//! Four subcommands (`eval`, `stability`, `synth`, `ingest`) share one
//! optional TOML config file with a section per command. Flags override the
//! file, and the seed falls back to `STABLEVAL_SEED` when neither sets it.
//! Every run writes a `manifest.toml` holding the resolved parameters, which
//! can be fed back through `--config` to repeat the run. The worker count is
//! deliberately left out of the manifest: outputs do not depend on it.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_annotations, write_annotations_csv, AnnotationDataset, LabelScheme};
use crate::diagnostics::{
    annotator_profiles, high_ambiguity_rate, item_ambiguity, write_ambiguity_csv,
    write_profiles_csv,
};
use crate::em::{fit, EmConfig};
use crate::error::{Error, ErrorKind, Result};
use crate::ingest::{convert, read_records, ConversionScheme, DatasetKind};
use crate::scoring::{
    score_all, write_deltas_csv, write_reports_csv, Method, ScoreSummary, DEFAULT_BOOTSTRAP,
};
use crate::stability::{
    stability_run, write_stability_csv, StabilityConfig, StabilityReport, SubsetSize,
};
use crate::synth::{run_ablation, write_ablation_csv, AblationResult, Axis, SynthConfig};

pub const SEED_ENV: &str = "STABLEVAL_SEED";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(
    name = "stableval",
    version,
    about = "Disagreement-aware scoring of multi-annotator judgments"
)]
pub struct Cli {
    /// TOML file with `[eval]`, `[stability]`, `[synth]` or `[ingest]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed; falls back to the config file, then to STABLEVAL_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score agents with MV, DS and PEC and write diagnostics.
    Eval(EvalArgs),
    /// Measure ranking stability under annotator subsampling.
    Stability(StabilityArgs),
    /// Run a synthetic ablation sweep.
    Synth(SynthArgs),
    /// Convert a benchmark export into canonical annotations.
    Ingest(IngestArgs),
}

#[derive(Debug, Args, Default)]
pub struct EmArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

impl EmArgs {
    fn apply(&self, mut em: EmConfig) -> EmConfig {
        if let Some(m) = self.max_iters {
            em.max_iters = m;
        }
        if let Some(t) = self.tol {
            em.tol = t;
        }
        em
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Canonical annotations (CSV, or JSON by extension).
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of mv,ds,pec.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Bootstrap resamples per agent.
    #[arg(long, short = 'b')]
    pub bootstrap: Option<usize>,
    /// Credit per label level, e.g. `0,0.5,1`; its length sets K.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub credit: Option<Vec<f64>>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction of annotators kept per replicate.
    #[arg(long, conflicts_with = "subset_size")]
    pub fraction: Option<f64>,
    /// Absolute number of annotators kept per replicate.
    #[arg(long)]
    pub subset_size: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub credit: Option<Vec<f64>>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// One of adversarial, strict, lenient, hard_items, labels_per_item, agent_gap.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated settings; defaults to the axis' standard grid.
    #[arg(long, value_delimiter = ',')]
    pub settings: Option<Vec<String>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub stability_repeats: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// mtbench, convabuse, qags or mslr.
    pub dataset: Option<String>,
    /// Raw export (CSV, JSON array or JSON lines).
    pub input: Option<PathBuf>,
    /// MT-Bench tie handling: baseline, drop_ties, tie_to_win, tie_to_loss, tie_weight:<w>.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Output CSV (defaults to `<dataset>_annotations.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolved `eval` parameters; also the `[eval]` section of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub input: PathBuf,
    pub methods: Vec<Method>,
    pub bootstrap: usize,
    pub seed: u64,
    pub credit: Vec<f64>,
    pub em: EmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub input: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub credit: Vec<f64>,
    pub em: EmConfig,
}

impl StabilityParams {
    pub fn subset(&self) -> SubsetSize {
        match (self.subset_size, self.fraction) {
            (Some(m), _) => SubsetSize::Count(m),
            (None, Some(f)) => SubsetSize::Fraction(f),
            (None, None) => SubsetSize::Fraction(0.8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub axis: Axis,
    pub settings: Vec<String>,
    /// Master seed of the sweep; overrides `world.seed`.
    pub seed: u64,
    pub world: SynthConfig,
    pub em: EmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestParams {
    pub dataset: DatasetKind,
    pub input: PathBuf,
    pub scheme: String,
}

/// Optional view of every section, used to read config files and manifests.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub eval: EvalSection,
    pub stability: StabilitySection,
    pub synth: SynthSection,
    pub ingest: IngestSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub bootstrap: Option<usize>,
    pub seed: Option<u64>,
    pub credit: Option<Vec<f64>>,
    pub em: Option<EmConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct StabilitySection {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fraction: Option<f64>,
    pub subset_size: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: Option<u64>,
    pub methods: Option<Vec<Method>>,
    pub credit: Option<Vec<f64>>,
    pub em: Option<EmConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub axis: Option<String>,
    pub settings: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Base world; its own `seed` field is ignored in favour of `seed`.
    pub world: Option<SynthConfig>,
    pub em: Option<EmConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub dataset: Option<String>,
    pub input: Option<PathBuf>,
    pub scheme: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    match flag.or(file) {
        Some(s) => Ok(s),
        None => Ok(env_seed()?.unwrap_or(0)),
    }
}

fn required<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::Config(format!(
            "missing {what} (pass it as a flag or in the config file)"
        ))
    })
}

fn scheme_from_credit(credit: &[f64]) -> Result<LabelScheme> {
    LabelScheme::new(credit.len(), credit.to_vec())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Renders a manifest: a `[tool]` table plus the command's parameters under
/// its own section, so the file parses back as a config.
pub fn render_manifest<T: Serialize>(command: &str, params: &T) -> Result<String> {
    let mut tool = toml::Table::new();
    tool.insert("name".into(), env!("CARGO_PKG_NAME").into());
    tool.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    tool.insert("command".into(), command.into());
    let mut root = toml::Table::new();
    root.insert("tool".into(), tool.into());
    let section = toml::Value::try_from(params).map_err(|e| Error::Config(e.to_string()))?;
    root.insert(command.into(), section);
    toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))
}

fn write_manifest<T: Serialize>(path: &Path, command: &str, params: &T) -> Result<()> {
    write_text(path, &render_manifest(command, params)?)
}

impl EvalParams {
    pub fn resolve(
        args: &EvalArgs,
        file: EvalSection,
        seed: Option<u64>,
    ) -> Result<(Self, PathBuf)> {
        let params = Self {
            input: required(args.input.clone().or(file.input), "input file")?,
            methods: args
                .methods
                .clone()
                .or(file.methods)
                .unwrap_or_else(|| Method::ALL.to_vec()),
            bootstrap: args
                .bootstrap
                .or(file.bootstrap)
                .unwrap_or(DEFAULT_BOOTSTRAP),
            seed: resolve_seed(seed, file.seed)?,
            credit: args
                .credit
                .clone()
                .or(file.credit)
                .unwrap_or_else(|| LabelScheme::ternary().credit().to_vec()),
            em: args.em.apply(file.em.unwrap_or_default()),
        };
        let out = required(args.out.clone().or(file.out), "--out directory")?;
        Ok((params, out))
    }
}

impl StabilityParams {
    pub fn resolve(
        args: &StabilityArgs,
        file: StabilitySection,
        seed: Option<u64>,
    ) -> Result<(Self, PathBuf)> {
        let (fraction, subset_size) = match (args.fraction, args.subset_size) {
            (Some(f), _) => (Some(f), None),
            (None, Some(m)) => (None, Some(m)),
            (None, None) => match (file.fraction, file.subset_size) {
                (_, Some(m)) => (None, Some(m)),
                (f, None) => (Some(f.unwrap_or(0.8)), None),
            },
        };
        let params = Self {
            input: required(args.input.clone().or(file.input), "input file")?,
            fraction,
            subset_size,
            repeats: args.repeats.or(file.repeats).unwrap_or(10),
            seed: resolve_seed(seed, file.seed)?,
            methods: args
                .methods
                .clone()
                .or(file.methods)
                .unwrap_or_else(|| Method::ALL.to_vec()),
            credit: args
                .credit
                .clone()
                .or(file.credit)
                .unwrap_or_else(|| LabelScheme::ternary().credit().to_vec()),
            em: args.em.apply(file.em.unwrap_or_default()),
        };
        let out = required(args.out.clone().or(file.out), "--out directory")?;
        Ok((params, out))
    }
}

impl SynthParams {
    pub fn resolve(
        args: &SynthArgs,
        file: SynthSection,
        seed: Option<u64>,
    ) -> Result<(Self, PathBuf)> {
        let axis: Axis = required(args.axis.clone().or(file.axis), "--axis")?.parse()?;
        let seed = resolve_seed(seed, file.seed)?;
        let mut world = file.world.unwrap_or_default();
        world.seed = seed;
        if let Some(r) = args.repetitions {
            world.repetitions = r;
        }
        if let Some(r) = args.stability_repeats {
            world.stability_repeats = r;
        }
        let settings = match args.settings.clone().or(file.settings) {
            Some(s) => s,
            None => axis
                .default_settings()
                .iter()
                .map(ToString::to_string)
                .collect(),
        };
        let params = Self {
            axis,
            settings,
            seed,
            world,
            em: args.em.apply(file.em.unwrap_or_default()),
        };
        let out = required(args.out.clone().or(file.out), "--out directory")?;
        Ok((params, out))
    }
}

impl IngestParams {
    pub fn resolve(args: &IngestArgs, file: IngestSection) -> Result<(Self, PathBuf)> {
        let dataset: DatasetKind =
            required(args.dataset.clone().or(file.dataset), "dataset name")?.parse()?;
        let scheme: ConversionScheme = args
            .scheme
            .clone()
            .or(file.scheme)
            .unwrap_or_else(|| "baseline".into())
            .parse()?;
        let out = args
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from(format!("{dataset}_annotations.csv")));
        let params = Self {
            dataset,
            input: required(args.input.clone().or(file.input), "raw input file")?,
            scheme: scheme.to_string(),
        };
        Ok((params, out))
    }
}

pub struct EvalOutcome {
    pub dataset: AnnotationDataset,
    pub summary: ScoreSummary,
    pub em_ran: bool,
}

/// Writes `scores.csv`, `scores.json`, `summary.txt` and the manifest, plus
/// `deltas.csv` when MV and PEC are both scored and `annotators.csv`,
/// `ambiguity.csv` and `em.json` whenever EM runs.
pub fn cmd_eval(params: &EvalParams, out: &Path) -> Result<EvalOutcome> {
    let scheme = scheme_from_credit(&params.credit)?;
    let dataset = AnnotationDataset::new(read_annotations(&params.input)?, scheme)?;
    let em = if params.methods.iter().any(|m| m.needs_em()) {
        log::info!("fitting EM on {} items", dataset.n_items());
        Some(fit(&dataset, &params.em)?)
    } else {
        None
    };
    let summary = score_all(
        &dataset,
        &params.methods,
        em.as_ref(),
        params.bootstrap,
        params.seed,
    )?;

    ensure_dir(out)?;
    write_reports_csv(create(&out.join("scores.csv"))?, &summary.reports)?;
    write_json(&out.join("scores.json"), &summary)?;
    if !summary.deltas.is_empty() {
        write_deltas_csv(create(&out.join("deltas.csv"))?, &summary.deltas)?;
    }
    let mut text = format!("{}\n", dataset.summarize());
    if let Some(em) = &em {
        write_profiles_csv(
            create(&out.join("annotators.csv"))?,
            &annotator_profiles(&em.params, &dataset),
        )?;
        let ambiguity = item_ambiguity(&em.posteriors, dataset.items());
        write_ambiguity_csv(create(&out.join("ambiguity.csv"))?, &ambiguity)?;
        write_json(&out.join("em.json"), em)?;
        text.push_str(&format!(
            "EM: {} after {} iterations, objective {:.6}\nhighly ambiguous items: {:.2}%\n",
            if em.converged { "converged" } else { "stopped" },
            em.iterations,
            em.log_likelihood,
            100.0 * high_ambiguity_rate(&ambiguity)
        ));
    }
    write_text(&out.join("summary.txt"), &text)?;
    write_manifest(&out.join(MANIFEST_FILE), "eval", params)?;
    Ok(EvalOutcome {
        dataset,
        summary,
        em_ran: em.is_some(),
    })
}

/// Writes `stability.csv`, `stability.json` and the manifest.
pub fn cmd_stability(params: &StabilityParams, out: &Path) -> Result<StabilityReport> {
    let scheme = scheme_from_credit(&params.credit)?;
    let dataset = AnnotationDataset::new(read_annotations(&params.input)?, scheme)?;
    let report = stability_run(
        &dataset,
        &StabilityConfig {
            subset: params.subset(),
            repeats: params.repeats,
            seed: params.seed,
            methods: params.methods.clone(),
            em: params.em.clone(),
        },
    )?;
    ensure_dir(out)?;
    write_stability_csv(create(&out.join("stability.csv"))?, &report)?;
    write_json(&out.join("stability.json"), &report)?;
    write_manifest(&out.join(MANIFEST_FILE), "stability", params)?;
    Ok(report)
}

/// Writes `ablation.csv`, `ablation.json` and the manifest.
pub fn cmd_synth(params: &SynthParams, out: &Path) -> Result<AblationResult> {
    let settings = params
        .settings
        .iter()
        .map(|s| params.axis.parse_setting(s))
        .collect::<Result<Vec<_>>>()?;
    let result = run_ablation(params.axis, &settings, &params.world, &params.em)?;
    ensure_dir(out)?;
    write_ablation_csv(create(&out.join("ablation.csv"))?, &result)?;
    write_json(&out.join("ablation.json"), &result)?;
    write_manifest(&out.join(MANIFEST_FILE), "synth", params)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub n_records: usize,
    pub n_annotations: usize,
    pub n_items: usize,
    pub n_agents: usize,
    pub n_annotators: usize,
    pub credit: Vec<f64>,
}

/// Writes the canonical CSV at `out` and `<out stem>.manifest.toml` beside it.
pub fn cmd_ingest(params: &IngestParams, out: &Path) -> Result<IngestSummary> {
    let scheme: ConversionScheme = params.scheme.parse()?;
    let records = read_records(&params.input)?;
    let converted = convert(params.dataset, &records, scheme)?;
    let credit = converted.scheme.credit().to_vec();
    let dataset = converted.into_dataset()?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut w = create(out)?;
    write_annotations_csv(&mut w, dataset.annotations())?;
    w.flush().map_err(|e| Error::io(out, e))?;

    let summary = IngestSummary {
        n_records: records.len(),
        n_annotations: dataset.annotations().len(),
        n_items: dataset.n_items(),
        n_agents: dataset.n_agents(),
        n_annotators: dataset.n_annotators(),
        credit,
    };
    let mut manifest = render_manifest("ingest", params)?;
    let summary_table =
        toml::Value::try_from(&summary).map_err(|e| Error::Config(e.to_string()))?;
    let mut wrapper = toml::Table::new();
    wrapper.insert("summary".into(), summary_table);
    manifest.push('\n');
    manifest.push_str(&toml::to_string(&wrapper).map_err(|e| Error::Config(e.to_string()))?);
    write_text(&ingest_manifest_path(out), &manifest)?;
    Ok(summary)
}

pub fn ingest_manifest_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("annotations");
    out.with_file_name(format!("{stem}.manifest.toml"))
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Io => 3,
        ErrorKind::Numerical => 4,
    }
}

/// Runs a parsed command line, printing a short report to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    match cli.workers {
        Some(0) => Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
            pool.install(|| dispatch(&cli, file))
        }
        None => dispatch(&cli, file),
    }
}

fn dispatch(cli: &Cli, file: ConfigFile) -> Result<()> {
    match &cli.command {
        Command::Eval(args) => {
            let (params, out) = EvalParams::resolve(args, file.eval, cli.seed)?;
            let outcome = cmd_eval(&params, &out)?;
            println!("{}", outcome.dataset.summarize());
            for r in &outcome.summary.reports {
                println!(
                    "{:<4} {:<24} {:.4}  [{:.4}, {:.4}]",
                    r.method, r.agent_id, r.score, r.ci_low, r.ci_high
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Stability(args) => {
            let (params, out) = StabilityParams::resolve(args, file.stability, cli.seed)?;
            let report = cmd_stability(&params, &out)?;
            for m in &report.methods {
                let tau = m
                    .mean_tau_b
                    .map_or("n/a".to_string(), |t| format!("{t:.4}"));
                println!(
                    "{:<4} tau_b {tau}  rank std {:.4}  rank range {:.4}",
                    m.method, m.mean_rank_std, m.mean_rank_range
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Synth(args) => {
            let (params, out) = SynthParams::resolve(args, file.synth, cli.seed)?;
            let result = cmd_synth(&params, &out)?;
            println!(
                "{} rows over {} settings; wrote {}",
                result.rows.len(),
                result.settings.len(),
                out.display()
            );
        }
        Command::Ingest(args) => {
            let (params, out) = IngestParams::resolve(args, file.ingest)?;
            let s = cmd_ingest(&params, &out)?;
            println!(
                "{} records -> {} annotations ({} items, {} agents, {} annotators); wrote {}",
                s.n_records,
                s.n_annotations,
                s.n_items,
                s.n_agents,
                s.n_annotators,
                out.display()
            );
        }
    }
    Ok(())
}

/// Entry point shared by the binary: parses `args`, runs, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
