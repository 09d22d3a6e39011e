//! Command-line surface: `synth`, `train`, `audit`, `sweep`.
//!
//! Flag resolution order is explicit flag > config file (`--config`,
//! flat JSON keyed by flag name) > `FAIRGAP_SEED` (seeds only) >
//! built-in default. Every artifact embeds the resolved configuration
//! and tool version.

use crate::error::{Error, Result};
use crate::fairness::{audit as audit_model, report_from_predictions, FairnessReport};
use crate::harness::{
    cov_zx_to_cov_ax, sweep as run_sweep, DataSource, ExperimentConfig, SweepAxis,
    SyntheticSource, TrainingParams,
};
use crate::mitigation::MitigationConfig;
use crate::models::{
    load_model, to_document, train as train_model, Init, ModelKind, ModelSpec, TrainConfig,
};
use crate::rng::derive_seed;
use crate::synthgen::{generate_dataset, Scenario, SyntheticConfig};
use crate::tabular::{load_csv, make_folds, split, write_csv, CsvSchema, Dataset, Standardizer};
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;

/// Exit codes: 0 success, 1 usage error, 2 generation failure,
/// 3 divergence, 4 unsupported axis.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GenerationFailed { .. } => 2,
        Error::Divergence { .. } => 3,
        Error::UnsupportedAxis { .. } => 4,
        _ => 1,
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

#[derive(Parser)]
#[command(
    name = "fairgap",
    version,
    about = "Fairness auditing and bias mitigation for tabular binary classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV plus a meta.json sidecar
    Synth(SynthArgs),
    /// Train a model on a CSV and report fairness on a held-out split
    Train(TrainArgs),
    /// Audit a saved model (or a prediction file) against a CSV
    Audit(AuditArgs),
    /// Run a cross-validated parameter sweep
    Sweep(SweepArgs),
}

/// Optional values loaded from `--config`; flat JSON keyed by flag
/// name. Explicit flags always win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<String>,
    cov_zx: Option<f64>,
    n: Option<usize>,
    d: Option<usize>,
    seed: Option<u64>,
    label: Option<String>,
    protected: Option<String>,
    weight: Option<String>,
    features: Option<String>,
    model: Option<String>,
    layers: Option<usize>,
    width: Option<usize>,
    dropout: Option<f64>,
    init: Option<String>,
    lambda: Option<f64>,
    target_class: Option<u8>,
    weighted: Option<bool>,
    epochs: Option<usize>,
    batch: Option<usize>,
    step: Option<f64>,
    holdout: Option<f64>,
    threshold: Option<f64>,
    standardize: Option<bool>,
    trials: Option<usize>,
    folds: Option<usize>,
    datasets: Option<usize>,
    base_seed: Option<u64>,
    downsample: Option<f64>,
    jobs: Option<usize>,
    traces: Option<bool>,
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let file =
                std::fs::File::open(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("FAIRGAP_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).or_else(env_seed).unwrap_or(DEFAULT_SEED)
}

fn parse_scenario(s: &str) -> Result<Scenario> {
    match s {
        "linear" => Ok(Scenario::Linear),
        "quadratic" => Ok(Scenario::Quadratic),
        other => Err(Error::Config(format!(
            "unknown scenario {other:?} (expected linear or quadratic)"
        ))),
    }
}

fn parse_axis(s: &str) -> Result<SweepAxis> {
    match s.replace('-', "_").as_str() {
        "cov_zx" => Ok(SweepAxis::CovZx),
        "num_predictors" | "d" => Ok(SweepAxis::NumPredictors),
        "sample_size" | "n" => Ok(SweepAxis::SampleSize),
        "lambda" => Ok(SweepAxis::Lambda),
        other => Err(Error::Config(format!(
            "unknown sweep axis {other:?} (expected cov-zx, num-predictors, sample-size or lambda)"
        ))),
    }
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad numeric value {t:?} in --values")))
        })
        .collect()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    /// DGP scenario: linear | quadratic
    #[arg(long)]
    scenario: Option<String>,
    /// Target Cov(z, x) on the natural scale (0 to ~0.4)
    #[arg(long)]
    cov_zx: Option<f64>,
    /// Number of rows
    #[arg(long)]
    n: Option<usize>,
    /// Number of unbiased predictors k
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (sidecar meta written next to it)
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn meta_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let scenario = parse_scenario(
        &args
            .scenario
            .or(file.scenario)
            .unwrap_or_else(|| "linear".into()),
    )?;
    let cov_zx = args.cov_zx.or(file.cov_zx).unwrap_or(0.2);
    let n = args.n.or(file.n).unwrap_or(100_000);
    let d = args.d.or(file.d).unwrap_or(5);
    let seed = resolve_seed(args.seed, file.seed);
    let cov_ax = cov_zx_to_cov_ax(cov_zx)?;
    let cfg = SyntheticConfig::new(cov_ax, d, n, scenario, seed)?;
    let generated = generate_dataset(&cfg)?;
    write_csv(&generated.dataset, &args.output)?;
    let resolved = json!({
        "command": "synth",
        "scenario": scenario,
        "cov_zx": cov_zx,
        "cov_ax": cov_ax,
        "n": n,
        "d": d,
        "seed": seed,
        "output": args.output.display().to_string(),
    });
    let sidecar = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "resolved_config": resolved,
        "meta": generated.meta,
    });
    write_json(&meta_path(&args.output), &sidecar)?;
    println!(
        "wrote {} rows to {} (empirical cov_zx {:.4}, minority fraction {:.3})",
        generated.dataset.n_rows(),
        args.output.display(),
        generated.meta.empirical_cov_zx,
        generated.meta.minority_fraction
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shared flag groups

#[derive(Args)]
struct SchemaFlags {
    /// Input dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Outcome column name
    #[arg(long)]
    label: Option<String>,
    /// Protected attribute column name
    #[arg(long)]
    protected: Option<String>,
    /// Sample weight column name (rows weigh 1 when omitted)
    #[arg(long)]
    weight: Option<String>,
    /// Comma-separated feature columns, or "auto" for all remaining
    /// numeric columns
    #[arg(long)]
    features: Option<String>,
}

impl SchemaFlags {
    fn resolve(&self, file: &FileConfig) -> (CsvSchema, serde_json::Value) {
        let label = self
            .label
            .clone()
            .or_else(|| file.label.clone())
            .unwrap_or_else(|| "y".into());
        let protected = self
            .protected
            .clone()
            .or_else(|| file.protected.clone())
            .unwrap_or_else(|| "z".into());
        let weight = self.weight.clone().or_else(|| file.weight.clone());
        let features = self
            .features
            .clone()
            .or_else(|| file.features.clone())
            .unwrap_or_else(|| "auto".into());
        let feature_cols = if features == "auto" {
            None
        } else {
            Some(
                features
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>(),
            )
        };
        let schema = CsvSchema {
            label_col: label.clone(),
            protected_col: protected.clone(),
            weight_col: weight.clone(),
            feature_cols,
        };
        let echo = json!({
            "data": self.data.display().to_string(),
            "label": label,
            "protected": protected,
            "weight": weight,
            "features": features,
        });
        (schema, echo)
    }
}

#[derive(Args)]
struct ModelFlags {
    /// Model family: blr | mlp
    #[arg(long)]
    model: Option<String>,
    /// Hidden layers (mlp)
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width (mlp)
    #[arg(long)]
    width: Option<usize>,
    /// Dropout rate (mlp)
    #[arg(long)]
    dropout: Option<f64>,
    /// Weight init: xavier | he
    #[arg(long)]
    init: Option<String>,
}

impl ModelFlags {
    fn resolve(&self, file: &FileConfig) -> Result<ModelSpec> {
        let kind = self
            .model
            .clone()
            .or_else(|| file.model.clone())
            .unwrap_or_else(|| "blr".into());
        let mut spec = match kind.as_str() {
            "blr" => ModelSpec::blr(),
            "mlp" => ModelSpec::mlp(),
            other => {
                return Err(Error::Config(format!(
                    "unknown model {other:?} (expected blr or mlp)"
                )))
            }
        };
        if spec.kind == ModelKind::Mlp {
            if let Some(l) = self.layers.or(file.layers) {
                spec.hidden_layers = l;
            }
            if let Some(w) = self.width.or(file.width) {
                spec.hidden_width = w;
            }
            if let Some(r) = self.dropout.or(file.dropout) {
                spec.dropout_rate = r;
            }
        }
        if let Some(init) = self.init.clone().or_else(|| file.init.clone()) {
            spec.init = match init.as_str() {
                "xavier" => Init::XavierUniform,
                "he" => Init::HeNormal,
                other => {
                    return Err(Error::Config(format!(
                        "unknown init {other:?} (expected xavier or he)"
                    )))
                }
            };
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct MitigationFlags {
    /// Fairness penalty weight in [0, 1]
    #[arg(long)]
    lambda: Option<f64>,
    /// Outcome class the penalty conditions on (0 or 1)
    #[arg(long)]
    target_class: Option<u8>,
    /// Use the sample-weighted penalty and mean-form loss
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    weighted: Option<bool>,
}

impl MitigationFlags {
    fn resolve(&self, file: &FileConfig) -> Result<MitigationConfig> {
        MitigationConfig::new(
            self.lambda.or(file.lambda).unwrap_or(0.0),
            self.target_class.or(file.target_class).unwrap_or(1),
            self.weighted.or(file.weighted).unwrap_or(true),
        )
    }
}

#[derive(Args)]
struct TrainingFlags {
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size
    #[arg(long)]
    batch: Option<usize>,
    /// SGD step size
    #[arg(long)]
    step: Option<f64>,
}

impl TrainingFlags {
    fn resolve(&self, file: &FileConfig) -> TrainingParams {
        let defaults = TrainingParams::default();
        TrainingParams {
            batch_size: self.batch.or(file.batch).unwrap_or(defaults.batch_size),
            step_size: self.step.or(file.step).unwrap_or(defaults.step_size),
            epochs: self.epochs.or(file.epochs).unwrap_or(defaults.epochs),
        }
    }
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    schema: SchemaFlags,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    mitigation: MitigationFlags,
    #[command(flatten)]
    training: TrainingFlags,
    /// Held-out fraction for the fairness report
    #[arg(long)]
    holdout: Option<f64>,
    /// Classification threshold for the report
    #[arg(long)]
    threshold: Option<f64>,
    /// Standardize features with training-split statistics
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output model JSON
    #[arg(short, long, default_value = "model.json")]
    output: PathBuf,
    /// Output fairness report JSON
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Stratified holdout: fold 0 of a k-fold plan with k ~ 1/fraction.
fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::Config(format!(
            "holdout fraction {fraction} must be in (0, 1)"
        )));
    }
    let k = ((1.0 / fraction).round() as usize).clamp(2, dataset.n_rows());
    let plan = make_folds(&dataset.labels, k, seed)?;
    split(dataset, &plan, 0)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let (schema, schema_echo) = args.schema.resolve(&file);
    let spec = args.model.resolve(&file)?;
    let mitigation = args.mitigation.resolve(&file)?;
    let params = args.training.resolve(&file);
    let holdout = args.holdout.or(file.holdout).unwrap_or(0.2);
    let threshold = args.threshold.or(file.threshold).unwrap_or(0.5);
    let standardize = args.standardize.or(file.standardize).unwrap_or(false);
    let seed = resolve_seed(args.seed, file.seed);

    let dataset = load_csv(&args.schema.data, &schema)?;
    let (mut train_set, mut test_set) =
        holdout_split(&dataset, holdout, derive_seed(seed, &[0x601D]))?;
    if standardize {
        let stats = Standardizer::fit(&train_set);
        stats.apply(&mut train_set);
        stats.apply(&mut test_set);
    }
    let train_cfg = TrainConfig {
        batch_size: params.batch_size,
        step_size: params.step_size,
        epochs: params.epochs,
        mitigation: mitigation.clone(),
        seed,
        select_by_total: true,
    };
    let outcome = train_model(&train_set, &spec, &train_cfg)?;
    let report = audit_model(&outcome.best_state, &spec, &test_set, threshold)?;

    let resolved = json!({
        "command": "train",
        "schema": schema_echo,
        "model": spec,
        "mitigation": mitigation,
        "training": params,
        "holdout": holdout,
        "threshold": threshold,
        "standardize": standardize,
        "seed": seed,
        "output": args.output.display().to_string(),
        "report": args.report.display().to_string(),
        "tool_version": env!("CARGO_PKG_VERSION"),
    });
    let mut doc = to_document(&outcome.best_state, &spec);
    doc.provenance = Some(resolved.clone());
    write_json(&args.output, &doc)?;
    let report_doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "resolved_config": resolved,
        "best_epoch": outcome.best_epoch,
        "best_loss": outcome.best_loss,
        "report": report,
    });
    write_json(&args.report, &report_doc)?;
    println!(
        "trained {:?} for {} epochs (best epoch {}); report written to {}",
        spec.kind,
        params.epochs,
        outcome.best_epoch,
        args.report.display()
    );
    print_report(&report);
    Ok(())
}

fn print_report(report: &FairnessReport) {
    let fmt = |v: Option<f64>| match v {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    };
    println!(
        "fnr_gap {}  fpr_gap {}  f1_gap {}  weighted_accuracy {:.4}",
        fmt(report.fnr_gap),
        fmt(report.fpr_gap),
        fmt(report.f1_gap),
        report.weighted_accuracy
    );
}

// ---------------------------------------------------------------------------
// audit

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    schema: SchemaFlags,
    /// Saved model JSON to evaluate
    #[arg(long, conflicts_with = "predictions")]
    model: Option<PathBuf>,
    /// CSV of predicted probabilities (column "p"), audited directly
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Report JSON path (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_predictions(path: &Path, n_rows: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("bad prediction header: {e}")))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "p")
        .or(if headers.len() == 1 { Some(0) } else { None })
        .ok_or_else(|| Error::MissingColumn("p".into()))?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::CsvParse {
            row: i + 2,
            column: "p".into(),
            message: e.to_string(),
        })?;
        let raw = record.get(col).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::CsvParse {
            row: i + 2,
            column: "p".into(),
            message: format!("not a number: {raw:?}"),
        })?;
        out.push(v);
    }
    if out.len() != n_rows {
        return Err(Error::Config(format!(
            "{} predictions for {} dataset rows",
            out.len(),
            n_rows
        )));
    }
    Ok(out)
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let (schema, schema_echo) = args.schema.resolve(&file);
    let threshold = args.threshold.or(file.threshold).unwrap_or(0.5);
    let dataset = load_csv(&args.schema.data, &schema)?;

    let (report, source_echo) = match (&args.model, &args.predictions) {
        (Some(model_path), None) => {
            let (state, spec) = load_model(model_path)?;
            let report = audit_model(&state, &spec, &dataset, threshold)?;
            (report, json!({ "model": model_path.display().to_string() }))
        }
        (None, Some(pred_path)) => {
            let probs = read_predictions(pred_path, dataset.n_rows())?;
            let predicted: Vec<u8> = probs.iter().map(|&p| u8::from(p >= threshold)).collect();
            let report = report_from_predictions(
                &dataset.labels,
                &predicted,
                &dataset.protected,
                &dataset.weights,
            )?;
            (report, json!({ "predictions": pred_path.display().to_string() }))
        }
        _ => {
            return Err(Error::Config(
                "exactly one of --model or --predictions is required".into(),
            ))
        }
    };

    let resolved = json!({
        "command": "audit",
        "schema": schema_echo,
        "source": source_echo,
        "threshold": threshold,
        "tool_version": env!("CARGO_PKG_VERSION"),
    });
    let doc = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "resolved_config": resolved,
        "report": report,
    });
    match &args.output {
        Some(path) => {
            write_json(path, &doc)?;
            print_report(&report);
        }
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args)]
struct SweepArgs {
    /// Sweep axis: cov-zx | num-predictors | sample-size | lambda
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values
    #[arg(long)]
    values: String,
    /// CSV data source (omit to sweep synthetic data)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    protected: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    #[arg(long)]
    features: Option<String>,
    /// Majority:minority downsample ratio for CSV sources
    #[arg(long)]
    downsample: Option<f64>,
    /// Base scenario for synthetic sources
    #[arg(long)]
    scenario: Option<String>,
    /// Base target Cov(z, x) for synthetic sources
    #[arg(long)]
    cov_zx: Option<f64>,
    /// Base sample size for synthetic sources
    #[arg(long)]
    n: Option<usize>,
    /// Base predictor count for synthetic sources
    #[arg(long)]
    d: Option<usize>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    mitigation: MitigationFlags,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Independent datasets per cell (synthetic sources)
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    standardize: Option<bool>,
    /// Also write per-run loss-trace CSVs
    #[arg(long, action = ArgAction::SetTrue)]
    traces: bool,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for results.json / cells.csv / traces
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let file = load_file_config(&args.config)?;
    let axis = parse_axis(&args.axis)?;
    let values = parse_values(&args.values)?;
    if let Some(jobs) = args.jobs.or(file.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }

    let base_seed = resolve_seed(args.base_seed, file.base_seed);
    let spec = args.model.resolve(&file)?;
    let mut cfg = match &args.data {
        Some(path) => {
            let schema_flags = SchemaFlags {
                data: path.clone(),
                label: args.label.clone(),
                protected: args.protected.clone(),
                weight: args.weight.clone(),
                features: args.features.clone(),
            };
            let (schema, _) = schema_flags.resolve(&file);
            let mut cfg = ExperimentConfig::csv(
                path.display().to_string(),
                schema,
                spec.clone(),
                base_seed,
            );
            if let Some(ratio) = args.downsample.or(file.downsample) {
                if let DataSource::Csv {
                    downsample_ratio, ..
                } = &mut cfg.source
                {
                    *downsample_ratio = Some(ratio);
                }
            }
            cfg
        }
        None => {
            let scenario = parse_scenario(
                &args
                    .scenario
                    .clone()
                    .or_else(|| file.scenario.clone())
                    .unwrap_or_else(|| "linear".into()),
            )?;
            let cov_zx = args.cov_zx.or(file.cov_zx).unwrap_or(0.2);
            ExperimentConfig::synthetic(
                SyntheticSource {
                    cov_ax: cov_zx_to_cov_ax(cov_zx)?,
                    n_predictors: args.d.or(file.d).unwrap_or(5),
                    sample_size: args.n.or(file.n).unwrap_or(100_000),
                    scenario,
                },
                spec.clone(),
                base_seed,
            )
        }
    };
    cfg.mitigation = args.mitigation.resolve(&file)?;
    cfg.training = args.training.resolve(&file);
    cfg.trials = args.trials.or(file.trials).unwrap_or(5);
    cfg.folds = args.folds.or(file.folds).unwrap_or(5);
    if let Some(d) = args.datasets.or(file.datasets) {
        cfg.datasets = d;
    }
    if let Some(t) = args.threshold.or(file.threshold) {
        cfg.threshold = t;
    }
    if let Some(s) = args.standardize.or(file.standardize) {
        cfg.standardize = s;
    }
    cfg.capture_traces = args.traces || file.traces.unwrap_or(false);

    let result = run_sweep(axis, &values, &cfg)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    result.write_json(args.out_dir.join("results.json"))?;
    result.write_cells_csv(args.out_dir.join("cells.csv"))?;
    if cfg.capture_traces {
        result.write_traces(&args.out_dir)?;
    }
    println!(
        "swept {} over {:?}: artifacts in {}",
        axis,
        values,
        args.out_dir.display()
    );
    for cell in &result.cells {
        let gap = cell
            .summary
            .fnr_gap
            .map(|s| format!("{:.4} +/- {:.4}", s.mean, s.ci_halfwidth))
            .unwrap_or_else(|| "undefined".into());
        let acc = cell
            .summary
            .weighted_accuracy
            .map(|s| format!("{:.4}", s.mean))
            .unwrap_or_else(|| "undefined".into());
        println!("  {} = {:<8} fnr_gap {}  accuracy {}", axis, cell.value, gap, acc);
    }
    Ok(())
}
