//! The `tripgrav` command line: synthetic data, ingestion checks, training,
//! tuning, evaluation, feature importance and trip segmentation.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use tripgrav_core::analysis::{
    self, comparative_report_in, segment_thresholds, AnalysisError, Evaluated, MetricSpace, Thresholds,
};
use tripgrav_core::gravity::{GravityError, GravityParams};
use tripgrav_core::importance::{self, FeatureImportance, ImportanceError};
use tripgrav_core::ingest::{
    self, assemble_dataset, load_county_features, load_dir, AssemblyOptions, DayAggregation, Dataset,
    IngestError, RawData, ScalerKind,
};
use tripgrav_core::metrics::Segment;
use tripgrav_core::ml::{FittedModel, MlError, ModelFamily, ModelSpec};
use tripgrav_core::model::DatasetVariant;
use tripgrav_core::synth::{self, Schedule, SynthError};
use tripgrav_core::tuning::{self, ParamPoint, ParamValue, SearchMode, SearchReport, TuningError};

use config::Config;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    Io,
}

/// A failure reported as `module: message` on stderr.
#[derive(Debug, Error)]
#[error("{module}: {message}")]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
    pub kind: ErrorKind,
}

impl CliError {
    pub fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        CliError { module, message: message.into(), kind: ErrorKind::Invalid }
    }

    pub fn io(module: &'static str, message: impl Into<String>) -> Self {
        CliError { module, message: message.into(), kind: ErrorKind::Io }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Invalid => 1,
            ErrorKind::Io => 2,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let io = match &e {
            IngestError::Io { .. } => true,
            IngestError::Csv { source, .. } => source.is_io_error(),
            _ => false,
        };
        let kind = if io { ErrorKind::Io } else { ErrorKind::Invalid };
        CliError { module: "ingest", message: e.to_string(), kind }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Ingest(inner) => CliError { module: "synth", ..CliError::from(inner) },
            other => CliError::invalid("synth", other.to_string()),
        }
    }
}

macro_rules! invalid_from {
    ($($ty:ty => $module:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::invalid($module, e.to_string())
            }
        })*
    };
}

invalid_from! {
    MlError => "model",
    GravityError => "gravity",
    TuningError => "tuning",
    AnalysisError => "analysis",
    ImportanceError => "importance",
}

#[derive(Debug, Parser)]
#[command(name = "tripgrav", version, about = "County trip demand: gravity baseline and learned models")]
pub struct Cli {
    /// Worker threads for parallel fitting and search (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic region as the three input CSV files.
    Synth(SynthArgs),
    /// Load and validate a data directory and print a summary.
    IngestCheck(DataArgs),
    /// Split, optionally tune, fit and save a model.
    Train(TrainArgs),
    /// Run a hyperparameter search on the training split.
    Tune(TuneArgs),
    /// Compare saved models against a baseline on the test split.
    Evaluate(EvaluateArgs),
    /// Rank the features of a saved model.
    Importance(ImportanceArgs),
    /// Report distance thresholds and segment sizes.
    Segment(SegmentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Gravity,
    Nonlinear,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub counties: usize,
    #[arg(long, default_value_t = 7)]
    pub days: usize,
    #[arg(long, value_enum, default_value_t = Regime::Nonlinear)]
    pub regime: Regime,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Log-scale of the lognormal noise (gravity regime).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Weekend flow multiplier (gravity regime).
    #[arg(long, default_value_t = 1.0)]
    pub weekend_multiplier: f64,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Directory holding county_features.csv, flows.csv and separations.csv.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub variant: Option<DatasetVariant>,
    #[arg(long)]
    pub aggregation: Option<DayAggregation>,
    #[arg(long)]
    pub scaler: Option<ScalerKind>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub include_self_loops: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<ModelFamily>,
    /// Search hyperparameters on the training split before the final fit.
    #[arg(long)]
    pub tune: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Hyperparameter override `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Search space preset (rf, gbr or mlp); defaults to the model family.
    #[arg(long)]
    pub preset: Option<ModelFamily>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: Option<ModelFamily>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    Test,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Transformed,
    Original,
}

impl From<Space> for MetricSpace {
    fn from(s: Space) -> Self {
        match s {
            Space::Transformed => MetricSpace::Transformed,
            Space::Original => MetricSpace::Original,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Saved model treated as the traditional baseline.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Saved models to compare; repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    /// Score the scaled target or flow counts recovered from it.
    #[arg(long, value_enum, default_value_t = Space::Transformed)]
    pub space: Space,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Permutation repeats for the feature rankings.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for report.json, comparison.txt, segments.csv, days.csv and features.txt.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Permutation,
    Impurity,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Permutation)]
    pub method: Method,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub aggregation: Option<DayAggregation>,
    #[arg(long)]
    pub include_self_loops: Option<bool>,
    /// Per-pair segment CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to rebuild the exact train/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSettings {
    pub seed: u64,
    pub test_fraction: f64,
    pub aggregation: DayAggregation,
    pub scaler: ScalerKind,
    pub include_self_loops: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub variant: DatasetVariant,
    pub split: SplitSettings,
    pub spec: ModelSpec,
    pub train_rows: usize,
    pub tuning: Option<SearchReport>,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningDocument {
    pub schema_version: u32,
    pub variant: DatasetVariant,
    pub split: SplitSettings,
    pub base: ModelSpec,
    pub report: SearchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub model: String,
    pub features: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub schema_version: u32,
    pub split: SplitChoice,
    pub in_sample: bool,
    pub report: analysis::ComparativeReport,
    pub top_features: Vec<RankedFeatures>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let jobs: Option<usize> = match cli.jobs {
        Some(j) => Some(j),
        None => config.get("jobs").map(|v| v.parse()).transpose().map_err(|e| CliError::invalid("config", format!("jobs: {e}")))?,
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::invalid("cli", "--jobs must be at least 1"));
        }
        // Fails only if the pool was already built, which leaves results unchanged.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&config, a),
        Command::IngestCheck(a) => cmd_ingest_check(&config, a),
        Command::Train(a) => cmd_train(&config, a),
        Command::Tune(a) => cmd_tune(&config, a),
        Command::Evaluate(a) => cmd_evaluate(&config, a),
        Command::Importance(a) => cmd_importance(&config, a),
        Command::Segment(a) => cmd_segment(&config, a),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    ingest::write_text(path, text).map_err(CliError::from)
}

fn print(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("cli", format!("stdout: {e}")))
}

#[derive(Serialize)]
struct SynthManifest {
    schema_version: u32,
    regime: Regime,
    seed: u64,
    counties: usize,
    days: usize,
    start: String,
    params: GravityParams,
    noise_sigma: f64,
    weekend_multiplier: f64,
    flows: usize,
    files: [&'static str; 3],
}

pub fn cmd_synth(config: &Config, a: SynthArgs) -> Result<(), CliError> {
    let seed = config.seed(a.seed)?;
    let counties = synth::generate_counties(a.counties, seed)?;
    let seps = synth::synth_separations(&counties, seed);
    let (flows, params, noise, weekend) = match a.regime {
        Regime::Gravity => {
            let params = GravityParams { k: a.k, lambda: a.lambda, alpha: a.alpha, beta: a.beta };
            let schedule = Schedule { weekend_multiplier: a.weekend_multiplier, ..Schedule::new(a.days) };
            let flows = synth::generate_gravity_flows(&counties, &seps, &params, a.noise, schedule, seed)?;
            (flows, params, a.noise, a.weekend_multiplier)
        }
        Regime::Nonlinear => (
            synth::generate_nonlinear_flows(&counties, &seps, a.days, seed)?,
            synth::nonlinear_core(),
            synth::nonlinear::NOISE_SIGMA,
            synth::nonlinear::WEEKEND_MULTIPLIER,
        ),
    };
    synth::write_region(&a.out, &counties, &seps, &flows)?;
    print(&to_json(&SynthManifest {
        schema_version: SCHEMA_VERSION,
        regime: a.regime,
        seed,
        counties: a.counties,
        days: a.days,
        start: synth::default_start().to_string(),
        params,
        noise_sigma: noise,
        weekend_multiplier: weekend,
        flows: flows.len(),
        files: [ingest::COUNTY_FILE, ingest::FLOW_FILE, ingest::SEPARATION_FILE],
    }))
}

struct Resolved {
    variant: DatasetVariant,
    split: SplitSettings,
}

fn resolve_data(config: &Config, a: &DataArgs) -> Result<Resolved, CliError> {
    let split = SplitSettings {
        seed: config.seed(a.seed)?,
        test_fraction: config.resolve(a.test_fraction, "test_fraction", 0.2)?,
        aggregation: config.resolve(a.aggregation, "aggregation", DayAggregation::PerDay)?,
        scaler: config.resolve(a.scaler, "scaler", ScalerKind::Zscore)?,
        include_self_loops: config.resolve(a.include_self_loops, "include_self_loops", false)?,
    };
    Ok(Resolved { variant: config.resolve(a.variant, "variant", DatasetVariant::Dataset2)?, split })
}

/// The full unscaled dataset and its scaled train and test halves.
struct Prepared {
    full: Dataset,
    train: Dataset,
    test: Dataset,
}

fn prepare(raw: &RawData, variant: DatasetVariant, split: &SplitSettings) -> Result<Prepared, CliError> {
    let options = AssemblyOptions { aggregation: split.aggregation, include_self_loops: split.include_self_loops };
    let full = assemble_dataset(&raw.counties, &raw.flows, &raw.separations, variant, options)?;
    let (train, test) = ingest::train_test_split(&full, split.test_fraction, split.seed, split.scaler)?;
    Ok(Prepared { full, train, test })
}

#[derive(Serialize)]
struct IngestSummary {
    schema_version: u32,
    counties: usize,
    imputed_values: usize,
    flow_records: usize,
    od_pairs: usize,
    dates: usize,
    first_date: Option<String>,
    last_date: Option<String>,
    rows: usize,
    train_rows: usize,
    test_rows: usize,
    thresholds: Thresholds,
}

pub fn cmd_ingest_check(config: &Config, a: DataArgs) -> Result<(), CliError> {
    let r = resolve_data(config, &a)?;
    let imputed = load_county_features(&a.data.join(ingest::COUNTY_FILE))?
        .iter()
        .map(|c| c.values.iter().filter(|v| v.is_nan()).count())
        .sum();
    let raw = load_dir(&a.data)?;
    let p = prepare(&raw, r.variant, &r.split)?;
    let dates: std::collections::BTreeSet<_> = raw.flows.iter().map(|f| f.date).collect();
    let pairs: std::collections::BTreeSet<_> = raw.flows.iter().map(|f| (&f.origin, &f.dest)).collect();
    print(&to_json(&IngestSummary {
        schema_version: SCHEMA_VERSION,
        counties: raw.counties.len(),
        imputed_values: imputed,
        flow_records: raw.flows.len(),
        od_pairs: pairs.len(),
        dates: dates.len(),
        first_date: dates.first().map(|d| d.to_string()),
        last_date: dates.last().map(|d| d.to_string()),
        rows: p.full.len(),
        train_rows: p.train.len(),
        test_rows: p.test.len(),
        thresholds: segment_thresholds(&p.full.distances())?,
    }))
}

fn parse_param(s: &str) -> Result<(String, ParamValue), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::invalid("cli", format!("--param {s:?}: expected name=value")))?;
    let v = v.trim();
    let value = if let Ok(i) = v.parse::<i64>() {
        ParamValue::Int(i)
    } else if let Ok(f) = v.parse::<f64>() {
        ParamValue::Float(f)
    } else {
        ParamValue::Str(v.to_string())
    };
    Ok((k.trim().to_string(), value))
}

fn base_spec(family: ModelFamily, seed: u64, params: &[String]) -> Result<ModelSpec, CliError> {
    let overrides: ParamPoint = params.iter().map(|p| parse_param(p)).collect::<Result<_, _>>()?;
    Ok(tuning::apply_params(&ModelSpec::default_for(family).with_seed(seed), &overrides)?)
}

fn search(config: &Config, base: &ModelSpec, s: &SearchArgs, train: &Dataset, seed: u64) -> Result<SearchReport, CliError> {
    let family = config.resolve(s.preset, "preset", base.family())?;
    let preset = tuning::preset(family)?;
    if preset.family != base.family() {
        return Err(CliError::invalid(
            "tuning",
            format!("preset {} does not match model {}", family.as_str(), base.family().as_str()),
        ));
    }
    let n_iter = config.resolve(s.n_iter, "n_iter", preset.n_iter)?;
    let k = config.resolve(s.folds, "folds", preset.k)?;
    Ok(tuning::random_search(base, &preset.space, n_iter, k, train, seed, SearchMode::Randomized)?)
}

pub fn cmd_train(config: &Config, a: TrainArgs) -> Result<(), CliError> {
    let r = resolve_data(config, &a.data)?;
    let family = config.resolve(a.model, "model", ModelFamily::Gravity)?;
    let raw = load_dir(&a.data.data)?;
    let p = prepare(&raw, r.variant, &r.split)?;
    let mut spec = base_spec(family, r.split.seed, &a.params)?;
    let tuning = if a.tune {
        let report = search(config, &spec, &a.search, &p.train, r.split.seed)?;
        spec = tuning::apply_params(&spec, &report.best_params)?;
        Some(report)
    } else {
        None
    };
    let model = spec.fit(&p.train)?;
    let doc = ModelDocument {
        schema_version: SCHEMA_VERSION,
        variant: r.variant,
        split: r.split,
        spec,
        train_rows: p.train.len(),
        tuning,
        model,
    };
    write_file(&a.out, &to_json(&doc))?;
    print(&format!(
        "saved {} model on {} ({} training rows) to {}\n",
        family.as_str(),
        r.variant,
        p.train.len(),
        a.out.display()
    ))
}

pub fn cmd_tune(config: &Config, a: TuneArgs) -> Result<(), CliError> {
    let r = resolve_data(config, &a.data)?;
    let family = config.resolve(a.model, "model", ModelFamily::Forest)?;
    let raw = load_dir(&a.data.data)?;
    let p = prepare(&raw, r.variant, &r.split)?;
    let base = base_spec(family, r.split.seed, &a.params)?;
    let report = search(config, &base, &a.search, &p.train, r.split.seed)?;
    let text = to_json(&TuningDocument { schema_version: SCHEMA_VERSION, variant: r.variant, split: r.split, base, report });
    match &a.out {
        Some(path) => write_file(path, &text),
        None => print(&text),
    }
}

pub fn load_model(path: &Path) -> Result<ModelDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io("model", format!("{}: {e}", path.display())))?;
    let doc: ModelDocument =
        serde_json::from_str(&text).map_err(|e| CliError::invalid("model", format!("{}: {e}", path.display())))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(CliError::invalid(
            "model",
            format!("{}: schema version {} is not supported", path.display(), doc.schema_version),
        ));
    }
    if doc.model.n_features() != doc.variant.width() {
        return Err(CliError::invalid("model", format!("{}: model width does not match {}", path.display(), doc.variant)));
    }
    Ok(doc)
}

fn model_name(doc: &ModelDocument) -> String {
    format!("{} ({})", doc.model.family().display_name(), doc.variant)
}

fn pick(p: &Prepared, split: SplitChoice) -> &Dataset {
    match split {
        SplitChoice::Test => &p.test,
        SplitChoice::Train => &p.train,
    }
}

fn segment_table(report: &analysis::ComparativeReport) -> String {
    let mut rows = vec![[
        "Model".to_string(),
        "Group".to_string(),
        "MAE".to_string(),
        "Rows".to_string(),
    ]];
    for s in std::iter::once(&report.baseline).chain(&report.candidates) {
        for (seg, g) in &s.by_segment {
            rows.push([s.name.clone(), seg.as_str().to_string(), format!("{:.4}", g.mae), g.count.to_string()]);
        }
        for (day, g) in &s.by_day {
            rows.push([s.name.clone(), day.clone(), format!("{:.4}", g.mae), g.count.to_string()]);
        }
    }
    analysis::render_columns(&rows)
}

pub fn cmd_evaluate(config: &Config, a: EvaluateArgs) -> Result<(), CliError> {
    let format = config.resolve(a.format.map(format_str), "format", "table".to_string())?;
    let format = parse_format(&format)?;
    let repeats = config.resolve(a.repeats, "repeats", 5)?;
    let seed = config.seed(a.seed)?;
    let raw = load_dir(&a.data)?;
    let baseline = load_model(&a.baseline)?;
    let candidates = a.models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>, _>>()?;

    let all: Vec<&ModelDocument> = std::iter::once(&baseline).chain(&candidates).collect();
    let prepared = all.iter().map(|d| prepare(&raw, d.variant, &d.split)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = all.iter().map(|d| model_name(d)).collect();
    let evaluated: Vec<Evaluated<'_>> = all
        .iter()
        .zip(&prepared)
        .zip(&names)
        .map(|((d, p), n)| Evaluated { name: n, model: &d.model, test: pick(p, a.split) })
        .collect();
    let thresholds = segment_thresholds(&prepared[0].full.distances())?;
    let report = comparative_report_in(evaluated[0], &evaluated[1..], thresholds, a.space.into())?;
    let top_features = evaluated
        .iter()
        .map(|e| {
            let ranking = importance::permutation_importance(e.model, e.test, repeats, seed)?;
            Ok(RankedFeatures { model: e.name.to_string(), features: importance::top_k(&ranking, 10) })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let doc = EvaluationDocument {
        schema_version: SCHEMA_VERSION,
        split: a.split,
        in_sample: a.split == SplitChoice::Train,
        report,
        top_features,
    };
    let features_text = importance::render_top_features(
        &doc.top_features.iter().map(|r| (r.model.clone(), r.features.clone())).collect::<Vec<_>>(),
    );
    let mut table = String::new();
    if doc.in_sample {
        table.push_str("NOTE: in-sample evaluation on the training split\n\n");
    }
    if doc.report.space == MetricSpace::Original {
        table.push_str("Metrics on the original flow scale\n\n");
    }
    table.push_str(&doc.report.render_table());
    table.push('\n');
    table.push_str(&format!(
        "Segments: Short <= {:.2}, Medium <= {:.2}, Long above\n",
        doc.report.thresholds.low, doc.report.thresholds.high
    ));
    table.push_str(&segment_table(&doc.report));
    table.push('\n');
    table.push_str(&features_text);

    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io("evaluate", format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("report.json"), &to_json(&doc))?;
        write_file(&dir.join("comparison.txt"), &table)?;
        write_file(&dir.join("segments.csv"), &doc.report.segments_csv())?;
        write_file(&dir.join("days.csv"), &doc.report.days_csv())?;
        write_file(&dir.join("features.txt"), &features_text)?;
    }
    match format {
        Format::Json => print(&to_json(&doc)),
        Format::Table => print(&table),
    }
}

fn format_str(f: Format) -> String {
    match f {
        Format::Json => "json".into(),
        Format::Table => "table".into(),
    }
}

fn parse_format(s: &str) -> Result<Format, CliError> {
    Format::from_str(s, true).map_err(|_| CliError::invalid("config", format!("format: unknown value {s:?}")))
}

pub fn cmd_importance(config: &Config, a: ImportanceArgs) -> Result<(), CliError> {
    let format = parse_format(&config.resolve(a.format.map(format_str), "format", "table".to_string())?)?;
    let repeats = config.resolve(a.repeats, "repeats", 5)?;
    let seed = config.seed(a.seed)?;
    let doc = load_model(&a.model)?;
    let ranking = match a.method {
        Method::Permutation => {
            let raw = load_dir(&a.data)?;
            let p = prepare(&raw, doc.variant, &doc.split)?;
            importance::permutation_importance(&doc.model, pick(&p, a.split), repeats, seed)?
        }
        Method::Impurity => importance::impurity_importance(&doc.model, &doc.variant.feature_labels())?,
    };
    let top = importance::top_k(&ranking, a.top);
    match format {
        Format::Json => print(&to_json(&RankedFeatures { model: model_name(&doc), features: top })),
        Format::Table => {
            let mut rows = vec![["Rank".to_string(), "Feature".to_string(), "Importance".to_string()]];
            for (i, f) in top.iter().enumerate() {
                rows.push([(i + 1).to_string(), f.label.clone(), format!("{:.6}", f.importance)]);
            }
            print(&analysis::render_columns(&rows))
        }
    }
}

#[derive(Serialize)]
struct SegmentSummary {
    schema_version: u32,
    rows: usize,
    thresholds: Thresholds,
    counts: BTreeMap<&'static str, usize>,
}

pub fn cmd_segment(config: &Config, a: SegmentArgs) -> Result<(), CliError> {
    let raw = load_dir(&a.data)?;
    let options = AssemblyOptions {
        aggregation: config.resolve(a.aggregation, "aggregation", DayAggregation::PerDay)?,
        include_self_loops: config.resolve(a.include_self_loops, "include_self_loops", false)?,
    };
    let ds = assemble_dataset(&raw.counties, &raw.flows, &raw.separations, DatasetVariant::Dataset1, options)?;
    let thresholds = segment_thresholds(&ds.distances())?;
    let mut counts: BTreeMap<&'static str, usize> =
        [Segment::Short, Segment::Medium, Segment::Long].iter().map(|s| (s.as_str(), 0)).collect();
    let mut csv = String::from("origin_fips,dest_fips,distance_miles,segment\n");
    let mut last = None;
    for r in &ds.records {
        let seg = thresholds.assign(r.distance_raw)?;
        *counts.get_mut(seg.as_str()).expect("all segments present") += 1;
        let pair = (&r.origin, &r.dest);
        if last != Some(pair) {
            csv.push_str(&format!("{},{},{},{}\n", r.origin, r.dest, r.distance_raw, seg.as_str()));
            last = Some(pair);
        }
    }
    if let Some(out) = &a.out {
        write_file(out, &csv)?;
    }
    print(&to_json(&SegmentSummary { schema_version: SCHEMA_VERSION, rows: ds.len(), thresholds, counts }))
}
