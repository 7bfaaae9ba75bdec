//! The `famsplit` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad input data, infeasible
//! search, degenerate comparison), 2 on a usage error.
//!
//! Every output embeds a [`RunManifest`]. JSON outputs carry it under a
//! `manifest` key; CSV and TSV outputs get a `<file>.manifest.json` sidecar.
//! Manifests record inputs by content digest and leave output paths out, so
//! identical inputs and flags give byte-identical files wherever they land.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ablation::{self, AblationReport, Strategy};
use crate::eval::{self, Aggregation, BenchmarkValidation, EvalResult, PredictionSet};
use crate::manifest::{self, SamplePool};
use crate::matrix::{self, CrossErrorMatrix, SynthParams};
use crate::report::{self, Document, RunManifest};
use crate::rng::derive_seed;
use crate::search::{self, BenchmarkSet, Difficulty, SearchConfig};
use crate::stats::{self, Summary, WilcoxonResult};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "famsplit", version, about = "Build family-disjoint malware benchmark splits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cross-generalization matrix.
    Synth(SynthArgs),
    /// Generate a synthetic sample pool for desk-scale materialization.
    SynthPool(SynthPoolArgs),
    /// Search a benchmark set of train/test splits around a recall target.
    Search(SearchArgs),
    /// Check the surrogate recall of benchmark splits against their bands.
    Validate(ValidateArgs),
    /// Turn a benchmark's family splits into sample lists.
    Materialize(MaterializeArgs),
    /// Run the top-K or worst-K family baseline.
    Ablate(AblateArgs),
    /// Score model predictions on a materialized split.
    Evaluate(EvaluateArgs),
    /// Compare two models' per-split metrics with an exact Wilcoxon test.
    Compare(CompareArgs),
    /// synth, search at Easy/Medium/Hard, validate, and optionally materialize.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggArg {
    Mean,
    Max,
    Min,
}

impl From<AggArg> for Aggregation {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => Aggregation::Mean,
            AggArg::Max => Aggregation::Max,
            AggArg::Min => Aggregation::Min,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DifficultyArg {
    Easy,
    Medium,
    Hard,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Self {
        match d {
            DifficultyArg::Easy => Difficulty::Easy,
            DifficultyArg::Medium => Difficulty::Medium,
            DifficultyArg::Hard => Difficulty::Hard,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Top,
    Worst,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    OverallAccuracy,
    MalwareRecallMean,
    BenignAccuracy,
}

impl MetricArg {
    fn name(self) -> &'static str {
        match self {
            MetricArg::OverallAccuracy => "overall_accuracy",
            MetricArg::MalwareRecallMean => "malware_recall_mean",
            MetricArg::BenignAccuracy => "benign_accuracy",
        }
    }
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long, default_value_t = 0.3)]
    pub generality_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub generality_hi: f64,
    #[arg(long, default_value_t = 0.4)]
    pub detectability_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub detectability_hi: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0.99)]
    pub diag_floor: f64,
    #[arg(long, default_value_t = 0.1)]
    pub loner_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub hermit_fraction: f64,
}

impl GeneratorArgs {
    fn params(&self, k: usize, seed: u64) -> SynthParams {
        SynthParams {
            k,
            seed,
            generality_range: (self.generality_lo, self.generality_hi),
            detectability_range: (self.detectability_lo, self.detectability_hi),
            noise_sd: self.noise_sd,
            diag_floor: self.diag_floor,
            loner_fraction: self.loner_fraction,
            hermit_fraction: self.hermit_fraction,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub families: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub generator: GeneratorArgs,
}

#[derive(Debug, Args)]
pub struct SynthPoolArgs {
    /// Benchmark files whose split families populate the pool.
    #[arg(long, required_unless_present = "matrix", num_args = 1..)]
    pub benchmark: Vec<PathBuf>,
    /// Use every family of this matrix instead.
    #[arg(long, conflicts_with = "benchmark")]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub per_family: usize,
    #[arg(long, default_value_t = 300_000)]
    pub benign_train: usize,
    #[arg(long, default_value_t = 100_000)]
    pub benign_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Target recall; defaults to the difficulty's standard value.
    #[arg(long, required_unless_present = "difficulty")]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub difficulty: Option<DifficultyArg>,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_attempts: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub set_size: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub splits: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, num_args = 1..)]
    pub benchmark: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "mean")]
    pub agg: AggArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `(split index, mean recall)` rows here.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaterializeArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = manifest::DEFAULT_TRAIN_PER_FAMILY)]
    pub train_per_family: usize,
    #[arg(long, default_value_t = manifest::DEFAULT_TEST_PER_FAMILY)]
    pub test_per_family: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, value_enum, default_value = "mean")]
    pub agg: AggArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `(family index, recall)` rows here.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub split_dir: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Evaluation reports of model A, one per split, in split order.
    #[arg(long, required = true, num_args = 1..)]
    pub a: Vec<PathBuf>,
    /// Evaluation reports of model B, paired with `--a` by position.
    #[arg(long, required = true, num_args = 1..)]
    pub b: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "overall-accuracy")]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 184, value_parser = clap::value_parser!(u64).range(2..))]
    pub families: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub splits: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub set_size: u64,
    #[arg(long, value_enum, default_value = "mean")]
    pub agg: AggArg,
    /// Also build a synthetic pool and materialize every split.
    #[arg(long)]
    pub materialize: bool,
    #[arg(long, default_value_t = 10)]
    pub per_family: usize,
    #[arg(long, default_value_t = 8)]
    pub train_per_family: usize,
    #[arg(long, default_value_t = 2)]
    pub test_per_family: usize,
    #[arg(long, default_value_t = 100)]
    pub benign_train: usize,
    #[arg(long, default_value_t = 25)]
    pub benign_test: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Errors surfaced by a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] Error),
    #[error("degenerate comparison: {0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Degenerate(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Domain(Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(io(path))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, text).map_err(io(path))
}

fn write_doc<T: Serialize>(path: &Path, body: &T, manifest: RunManifest) -> CliResult<()> {
    let text = report::to_json(&Document::new(body, Some(manifest))).expect("report serializes");
    write(path, &text)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn write_with_sidecar(path: &Path, text: &str, manifest: &RunManifest) -> CliResult<()> {
    write(path, text)?;
    write(&sidecar(path), &report::to_json(manifest).expect("manifest serializes"))
}

fn load_matrix_text(path: &Path) -> CliResult<(String, CrossErrorMatrix)> {
    let text = read(path)?;
    let m = CrossErrorMatrix::from_csv(&text).map_err(Error::from)?;
    Ok((text, m))
}

fn load_benchmark_text(path: &Path) -> CliResult<(String, BenchmarkSet)> {
    let text = read(path)?;
    let doc: Document<BenchmarkSet> = serde_json::from_str(&text)
        .map_err(|e| io(path)(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    Ok((text, doc.body))
}

fn generator_flags(man: RunManifest, p: &SynthParams) -> RunManifest {
    man.flag("families", p.k)
        .flag("generality", format!("{}..{}", p.generality_range.0, p.generality_range.1))
        .flag("detectability", format!("{}..{}", p.detectability_range.0, p.detectability_range.1))
        .flag("noise_sd", p.noise_sd)
        .flag("diag_floor", p.diag_floor)
        .flag("loner_fraction", p.loner_fraction)
        .flag("hermit_fraction", p.hermit_fraction)
}

fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let p = args.generator.params(args.families as usize, args.seed);
    let m = matrix::synth_matrix(&p).map_err(Error::from)?;
    let man = generator_flags(RunManifest::new("synth"), &p).seed(args.seed);
    write_with_sidecar(&args.out, &m.to_csv(), &man)
}

fn cmd_synth_pool(args: &SynthPoolArgs) -> CliResult<()> {
    let mut man = RunManifest::new("synth-pool")
        .flag("per_family", args.per_family)
        .flag("benign_train", args.benign_train)
        .flag("benign_test", args.benign_test)
        .seed(args.seed);
    let mut families: Vec<String> = Vec::new();
    if let Some(path) = &args.matrix {
        let (text, m) = load_matrix_text(path)?;
        man = man.input("matrix", text.as_bytes());
        families = m.families().to_vec();
    }
    for (i, path) in args.benchmark.iter().enumerate() {
        let (text, bench) = load_benchmark_text(path)?;
        man = man.input(&format!("benchmark[{i}]"), text.as_bytes());
        for s in &bench.splits {
            for f in s.train_families.iter().chain(&s.test_families) {
                if !families.contains(f) {
                    families.push(f.clone());
                }
            }
        }
    }
    let pool = SamplePool::synthetic(&families, args.per_family, args.benign_train, args.benign_test, args.seed);
    write_with_sidecar(&args.out, &pool.to_text(), &man)
}

fn search_config(args: &SearchArgs) -> (SearchConfig, String) {
    let difficulty = args.difficulty.map(Difficulty::from);
    let tau = args.tau.or(difficulty.map(Difficulty::tau)).expect("clap requires tau or difficulty");
    let label = args
        .label
        .clone()
        .or(difficulty.map(|d| d.label().to_string()))
        .unwrap_or_else(|| format!("tau={tau}"));
    let cfg = SearchConfig {
        tau,
        epsilon0: args.epsilon,
        step: args.step,
        max_attempts: args.max_attempts as usize,
        set_size: args.set_size as usize,
        seed: args.seed,
    };
    (cfg, label)
}

fn cmd_search(args: &SearchArgs) -> CliResult<()> {
    let (text, m) = load_matrix_text(&args.matrix)?;
    let (cfg, label) = search_config(args);
    let bench = search::generate_benchmark(&m, &cfg, args.splits as usize, label.clone()).map_err(Error::from)?;
    let man = RunManifest::new("search")
        .flag("tau", cfg.tau)
        .flag("epsilon", cfg.epsilon0)
        .flag("step", cfg.step)
        .flag("max_attempts", cfg.max_attempts)
        .flag("set_size", cfg.set_size)
        .flag("splits", args.splits)
        .flag("label", label)
        .seed(cfg.seed)
        .input("matrix", text.as_bytes());
    write_doc(&args.out, &bench, man)
}

/// Validation of several benchmark sets under one aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub benchmarks: Vec<BenchmarkValidation>,
    pub flag_count: usize,
}

fn validation_plot(benchmarks: &[BenchmarkValidation]) -> String {
    let mut out = String::from("label\tx\ty\n");
    for b in benchmarks {
        for (x, y) in b.plot_points() {
            out.push_str(&format!("{}\t{x}\t{y:.6}\n", b.difficulty_label));
        }
    }
    out
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    if args.benchmark.is_empty() {
        return Err(CliError::Usage("validate needs at least one --benchmark".into()));
    }
    let (text, m) = load_matrix_text(&args.matrix)?;
    let agg = Aggregation::from(args.agg);
    let mut man = RunManifest::new("validate")
        .flag("agg", agg)
        .input("matrix", text.as_bytes());
    let mut benchmarks = Vec::new();
    for (i, path) in args.benchmark.iter().enumerate() {
        let (btext, bench) = load_benchmark_text(path)?;
        man = man.input(&format!("benchmark[{i}]"), btext.as_bytes());
        benchmarks.push(eval::validate_benchmark(&m, &bench, agg).map_err(Error::from)?);
    }
    let flag_count = benchmarks.iter().map(|b| b.flag_count).sum();
    let report = ValidationReport { benchmarks, flag_count };
    if let Some(plot) = &args.plot_data {
        write_with_sidecar(plot, &validation_plot(&report.benchmarks), &man)?;
    }
    write_doc(&args.out, &report, man)
}

fn split_dir_name(label: &str, index: usize) -> String {
    let slug: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    format!("{slug}-{index:02}")
}

/// Materializes every split of `bench`, split `i` seeded with `derive_seed(seed, i)`.
pub fn materialize_benchmark(
    pool: &SamplePool,
    bench: &BenchmarkSet,
    train_per_family: usize,
    test_per_family: usize,
    seed: u64,
    out_dir: &Path,
    manifest: &RunManifest,
) -> CliResult<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for (i, spec) in bench.splits.iter().enumerate() {
        let name = split_dir_name(&bench.difficulty_label, i);
        let split_seed = derive_seed(seed, i as u64);
        let ms = manifest::materialize_split(pool, spec, name.clone(), train_per_family, test_per_family, split_seed)
            .map_err(Error::from)?;
        let dir = out_dir.join(&name);
        let man = manifest.clone().flag("split_index", i).seed(split_seed);
        manifest::write_split(&ms, &dir, Some(&man)).map_err(Error::from)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

fn cmd_materialize(args: &MaterializeArgs) -> CliResult<()> {
    let (btext, bench) = load_benchmark_text(&args.benchmark)?;
    let ptext = read(&args.pool)?;
    let pool = SamplePool::parse(&ptext).map_err(Error::from)?;
    let man = RunManifest::new("materialize")
        .flag("train_per_family", args.train_per_family)
        .flag("test_per_family", args.test_per_family)
        .seed(args.seed)
        .input("benchmark", btext.as_bytes())
        .input("pool", ptext.as_bytes());
    materialize_benchmark(&pool, &bench, args.train_per_family, args.test_per_family, args.seed, &args.out_dir, &man)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutput {
    pub mode: Strategy,
    pub k: usize,
    #[serde(flatten)]
    pub report: AblationReport,
    /// Mean recall over all families for selection sizes 5, 10, ..., 35.
    pub mean_curve: Vec<(usize, f64)>,
}

fn cmd_ablate(args: &AblateArgs) -> CliResult<()> {
    let (text, m) = load_matrix_text(&args.matrix)?;
    let k = args.k as usize;
    let agg = Aggregation::from(args.agg);
    let mode = match args.mode {
        ModeArg::Top => Strategy::Top,
        ModeArg::Worst => Strategy::Worst,
    };
    let selected = ablation::select_indices(&m, mode, k).map_err(Error::from)?;
    let names: Vec<&str> = selected.iter().map(|&i| m.family(i)).collect();
    let report = ablation::ablation_report(&m, &names, agg).map_err(Error::from)?;
    let ks: Vec<usize> = ablation::CURVE_KS.iter().copied().filter(|&x| x <= m.k()).collect();
    let mean_curve = ablation::mean_recall_curve(&m, mode, &ks, agg).map_err(Error::from)?;
    let man = RunManifest::new("ablate")
        .flag("mode", format!("{mode:?}").to_lowercase())
        .flag("k", k)
        .flag("agg", agg)
        .input("matrix", text.as_bytes());
    if let Some(plot) = &args.plot_data {
        write_with_sidecar(plot, &report::plot_data(&report.plot_points()), &man)?;
    }
    let out = AblationOutput { mode, k, report, mean_curve };
    write_doc(&args.out, &out, man)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let ms = manifest::load_split(&args.split_dir).map_err(Error::from)?;
    let ptext = read(&args.predictions)?;
    let preds = PredictionSet::parse(&ptext, args.threshold).map_err(Error::from)?;
    let result = eval::evaluate_predictions(&ms, &preds).map_err(Error::from)?;
    let meta = read(&args.split_dir.join(manifest::META_FILE))?;
    let man = RunManifest::new("evaluate")
        .flag("threshold", args.threshold)
        .input("split_meta", meta.as_bytes())
        .input("predictions", ptext.as_bytes());
    write_doc(&args.out, &result, man)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub split_ids: Vec<(String, String)>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub summary_a: Summary,
    pub summary_b: Summary,
    pub wilcoxon: WilcoxonResult,
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    if args.a.len() != args.b.len() {
        return Err(CliError::Usage(format!(
            "--a has {} reports but --b has {}",
            args.a.len(),
            args.b.len()
        )));
    }
    let metric = args.metric.name();
    let mut man = RunManifest::new("compare").flag("metric", metric);
    let mut load = |side: &str, paths: &[PathBuf]| -> CliResult<Vec<EvalResult>> {
        let mut out = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let text = read(path)?;
            let doc: Document<EvalResult> = serde_json::from_str(&text)
                .map_err(|e| io(path)(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
            man = std::mem::take(&mut man).input(&format!("{side}[{i}]"), text.as_bytes());
            out.push(doc.body);
        }
        Ok(out)
    };
    let ra = load("a", &args.a)?;
    let rb = load("b", &args.b)?;
    let pick = |rs: &[EvalResult]| rs.iter().map(|r| r.metric(metric).expect("known metric")).collect::<Vec<_>>();
    let (a, b) = (pick(&ra), pick(&rb));
    let wilcoxon = match stats::wilcoxon_exact(&a, &b) {
        Ok(w) => w,
        Err(stats::StatsError::NoDifferences) => {
            return Err(CliError::Degenerate(format!("every paired {metric} value is identical")))
        }
        Err(e) => return Err(Error::from(e).into()),
    };
    let report = ComparisonReport {
        metric: metric.to_string(),
        split_ids: ra.iter().zip(&rb).map(|(x, y)| (x.split_id.clone(), y.split_id.clone())).collect(),
        summary_a: stats::summarize(&a).map_err(Error::from)?,
        summary_b: stats::summarize(&b).map_err(Error::from)?,
        a,
        b,
        wilcoxon,
    };
    write_doc(&args.out, &report, man)
}

/// Files written by [`run_pipeline`], relative to its output directory.
pub const PIPELINE_MATRIX: &str = "matrix.csv";
pub const PIPELINE_VALIDATION: &str = "validation.json";

pub fn benchmark_file(d: Difficulty) -> String {
    format!("{}.json", d.label().to_lowercase())
}

pub fn run_pipeline(args: &PipelineArgs) -> CliResult<()> {
    let out = &args.out_dir;
    fs::create_dir_all(out).map_err(io(out))?;
    let p = SynthParams::with_seed(args.families as usize, args.seed);
    let m = matrix::synth_matrix(&p).map_err(Error::from)?;
    let csv = m.to_csv();
    let base = RunManifest::new("pipeline").seed(args.seed);
    write_with_sidecar(&out.join(PIPELINE_MATRIX), &csv, &generator_flags(base.clone(), &p))?;

    let agg = Aggregation::from(args.agg);
    let mut benches = Vec::new();
    let mut validations = Vec::new();
    for (i, d) in Difficulty::ALL.into_iter().enumerate() {
        let cfg = SearchConfig {
            set_size: args.set_size as usize,
            ..SearchConfig::standard(d, derive_seed(args.seed, i as u64))
        };
        let bench = search::generate_benchmark(&m, &cfg, args.splits as usize, d.label()).map_err(Error::from)?;
        let man = base
            .clone()
            .flag("stage", "search")
            .flag("tau", cfg.tau)
            .flag("splits", args.splits)
            .flag("set_size", cfg.set_size)
            .seed(cfg.seed)
            .input("matrix", csv.as_bytes());
        write_doc(&out.join(benchmark_file(d)), &bench, man)?;
        validations.push(eval::validate_benchmark(&m, &bench, agg).map_err(Error::from)?);
        benches.push(bench);
    }
    let flag_count = validations.iter().map(|v| v.flag_count).sum();
    let report = ValidationReport { benchmarks: validations, flag_count };
    let man = base
        .clone()
        .flag("stage", "validate")
        .flag("agg", agg)
        .input("matrix", csv.as_bytes());
    write_with_sidecar(&out.join("validation.tsv"), &validation_plot(&report.benchmarks), &man)?;
    write_doc(&out.join(PIPELINE_VALIDATION), &report, man)?;

    if args.materialize {
        let mut families = Vec::new();
        for b in &benches {
            for s in &b.splits {
                for f in s.train_families.iter().chain(&s.test_families) {
                    if !families.contains(f) {
                        families.push(f.clone());
                    }
                }
            }
        }
        let pool = SamplePool::synthetic(&families, args.per_family, args.benign_train, args.benign_test, args.seed);
        let ptext = pool.to_text();
        let man = base
            .clone()
            .flag("stage", "pool")
            .flag("per_family", args.per_family)
            .flag("benign_train", args.benign_train)
            .flag("benign_test", args.benign_test);
        write_with_sidecar(&out.join("pool.tsv"), &ptext, &man)?;
        let man = base
            .flag("stage", "materialize")
            .flag("train_per_family", args.train_per_family)
            .flag("test_per_family", args.test_per_family)
            .input("pool", ptext.as_bytes());
        for b in &benches {
            materialize_benchmark(
                &pool,
                b,
                args.train_per_family,
                args.test_per_family,
                args.seed,
                &out.join("splits"),
                &man,
            )?;
        }
    }
    Ok(())
}

pub fn execute(command: &Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::SynthPool(a) => cmd_synth_pool(a),
        Command::Search(a) => cmd_search(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Materialize(a) => cmd_materialize(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Pipeline(a) => run_pipeline(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("famsplit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
