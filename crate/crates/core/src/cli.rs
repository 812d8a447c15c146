//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit status.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::audit::{
    self, AuditConfig, AuditError, AuditRun, ExplainerSettings, ModelArtifact, PreparedData,
    ScenarioRule,
};
use crate::data::{self, DataError, DatasetConfig};
use crate::fairness::{self, ConsistencyOptions, FairnessReport};
use crate::model::ClassifierKind;
use crate::reweigh::{self, CellWeight};
use crate::shap::MethodChoice;

pub const DEFAULT_SEED: u64 = 42;

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   internal error
  2   invalid command line
  3   configuration error (unreadable or invalid config, unknown feature name)
  4   data error (CSV parsing, encoding, split)
  5   reweighing error (empty sensitive/target cell)
  6   training error
  7   explanation error (background, exact threshold, importance)
  8   fairness metric error (empty group, neighbor count)
  9   output error (cannot write the output directory)
  10  model file does not match the dataset

All randomness derives from --seed (default 42), which overrides any seed in the config file.";

#[derive(Debug, Parser)]
#[command(name = "fairaudit", version, about = "Audit a binary classifier for group and individual fairness", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train baseline and reweighed models, measure fairness, explain, compare.
    Audit(AuditArgs),
    /// Print the reweighing cell weights for the training split as JSON.
    Weights(WeightsArgs),
    /// Explain the test split with a saved model.
    Explain(ExplainArgs),
    /// Fairness measures for saved predictions, printed as JSON.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Lr,
    Rf,
    Gbm,
}

impl From<ModelArg> for ClassifierKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lr => ClassifierKind::LogisticRegression,
            ModelArg::Rf => ClassifierKind::RandomForest,
            ModelArg::Gbm => ClassifierKind::GradientBoosting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReweighArg {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Exact,
    Sampled,
}

impl From<MethodArg> for MethodChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Auto => MethodChoice::Auto,
            MethodArg::Exact => MethodChoice::Exact,
            MethodArg::Sampled => MethodChoice::Sampled,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Dataset config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainerFlags {
    /// Background rows sampled from the training split.
    #[arg(long, default_value_t = 100)]
    pub background: usize,
    /// Sampled explanations: permutation walks per instance.
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
    /// Largest feature count explained exactly under `--method auto`.
    #[arg(long, default_value_t = 15)]
    pub exact_threshold: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

impl ExplainerFlags {
    fn settings(&self, seed: u64) -> ExplainerSettings {
        ExplainerSettings {
            background_size: self.background,
            exact_threshold: self.exact_threshold,
            permutations: self.permutations,
            method: self.method.into(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyFlags {
    /// Neighbors for the consistency measure.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Neighborhoods exclude the row itself.
    #[arg(long)]
    pub exclude_self: bool,
}

impl ConsistencyFlags {
    fn options(&self) -> ConsistencyOptions {
        ConsistencyOptions {
            k: self.k,
            self_inclusion: !self.exclude_self,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = ModelArg::Lr)]
    pub model: ModelArg,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReweighArg::Both)]
    pub reweigh: ReweighArg,
    #[command(flatten)]
    pub explainer: ExplainerFlags,
    #[command(flatten)]
    pub consistency: ConsistencyFlags,
    /// Encoded feature for a dependence table (repeatable). Defaults to the
    /// sensitive feature.
    #[arg(long)]
    pub dependence: Vec<String>,
    /// Encoded feature whose value colors the dependence tables.
    #[arg(long)]
    pub color: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Use every encoded row instead of the training split.
    #[arg(long)]
    pub all_rows: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    /// A `model_<path>.json` written by `audit`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub explainer: ExplainerFlags,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// CSV with `prediction`, `label` and `sensitive` columns of 0/1 values.
    #[arg(long)]
    pub predictions: PathBuf,
    /// With a config, consistency is computed on the test split, which must
    /// line up with the prediction rows.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub consistency: ConsistencyFlags,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let code = match &e {
            AuditError::Data(_) => 4,
            AuditError::Reweigh(_) => 5,
            AuditError::Model(_) => 6,
            AuditError::Explain(_) | AuditError::Importance(_) => 7,
            AuditError::Fairness(_) => 8,
            AuditError::UnknownFeature(_) => 3,
            AuditError::SchemaMismatch(_) => 10,
            AuditError::ConfigMismatch(_) => 1,
        };
        CliError::new(code, e.to_string())
    }
}

fn config_error(e: DataError) -> CliError {
    CliError::new(3, format!("config: {e}"))
}

fn output_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new(9, format!("output {}: {e}", path.display()))
}

fn load_config(path: &Path, seed: u64) -> Result<DatasetConfig, CliError> {
    let mut config = DatasetConfig::from_json_file(path).map_err(config_error)?;
    config.seed = seed;
    Ok(config)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::new(1, format!("csv serialization: {e}")))?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

/// Writes every file or none: contents go to temporary names first and are
/// renamed once all of them are on disk.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    let result = (|| {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            staged.push(tmp.clone());
            std::fs::write(&tmp, bytes).map_err(|e| output_error(&tmp, e))?;
        }
        for ((name, _), tmp) in files.iter().zip(&staged) {
            let dest = dir.join(name);
            std::fs::rename(tmp, &dest).map_err(|e| output_error(&dest, e))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for tmp in &staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
    result
}

/// Keeps ASCII alphanumerics, `-` and `_`; everything else becomes `_`.
pub fn sanitize_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn path_label(run: &AuditRun) -> &'static str {
    if run.reweighed {
        "reweighed"
    } else {
        "baseline"
    }
}

fn predictions_csv(run: &AuditRun, prepared: &PreparedData) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "probability", "prediction", "label", "sensitive"])?;
        for (i, (&p, &pred)) in run.probabilities.iter().zip(&run.predictions).enumerate() {
            w.write_record([
                i.to_string(),
                p.to_string(),
                pred.to_string(),
                prepared.test.target[i].to_string(),
                prepared.test.sensitive[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn cmd_audit(args: &AuditArgs) -> Result<(), CliError> {
    let seed = args.common.seed;
    let dataset = load_config(&args.common.config, seed)?;
    let mut config = AuditConfig::new(dataset, args.model.into(), seed);
    config.explainer = args.explainer.settings(seed);
    config.consistency = args.consistency.options();

    let prepared = audit::prepare(&config.dataset, &config.explainer)?;
    let dependence: Vec<String> = if args.dependence.is_empty() {
        vec![prepared.feature_names()[prepared.sensitive_index()].clone()]
    } else {
        args.dependence.clone()
    };
    for name in dependence.iter().chain(&args.color) {
        if prepared.test_raw.feature_index(name).is_none() {
            return Err(AuditError::UnknownFeature(name.clone()).into());
        }
    }

    let (baseline, reweighed) = match args.reweigh {
        ReweighArg::Both => {
            let (b, r) = audit::run_both(&config, &prepared)?;
            (Some(b), Some(r))
        }
        ReweighArg::Off => (Some(audit::run_prepared(&config, &prepared, false)?), None),
        ReweighArg::On => (None, Some(audit::run_prepared(&config, &prepared, true)?)),
    };
    let rule = ScenarioRule::default();
    let report = audit::build_report(
        &config,
        &prepared,
        baseline.as_ref(),
        reweighed.as_ref(),
        &rule,
    )?;
    let runs: Vec<&AuditRun> = baseline.iter().chain(reweighed.iter()).collect();

    let mut files = vec![(
        "audit_report.json".to_owned(),
        report.to_json().into_bytes(),
    )];
    let mut summaries = Vec::new();
    for run in &runs {
        summaries.push((
            path_label(run),
            audit::summary_table(&run.explanations, &prepared.test_raw)?,
        ));
    }
    let tables: Vec<(&str, &[audit::SummaryRow])> =
        summaries.iter().map(|(l, t)| (*l, t.as_slice())).collect();
    files.push((
        "summary.csv".into(),
        csv_bytes(|b| audit::write_summary_csv(b, &tables))?,
    ));
    for feature in &dependence {
        let mut deps = Vec::new();
        for run in &runs {
            let t = audit::dependence_table(
                &run.explanations,
                &prepared.test_raw,
                feature,
                args.color.as_deref(),
            )?;
            deps.push((path_label(run), t));
        }
        let tables: Vec<(&str, &[audit::DependenceRow])> =
            deps.iter().map(|(l, t)| (*l, t.as_slice())).collect();
        files.push((
            format!("dependence_{}.csv", sanitize_file_stem(feature)),
            csv_bytes(|b| audit::write_dependence_csv(b, &tables))?,
        ));
    }
    for run in &runs {
        let label = path_label(run);
        files.push((
            format!("model_{label}.json"),
            ModelArtifact::new(run, &prepared).to_json().into_bytes(),
        ));
        files.push((
            format!("explanations_{label}.csv"),
            csv_bytes(|b| audit::explanations_csv(b, prepared.feature_names(), &run.explanations))?,
        ));
        files.push((
            format!("predictions_{label}.csv"),
            predictions_csv(run, &prepared)?,
        ));
    }
    write_outputs(&args.out, &files)?;
    if let Some(call) = &report.scenario {
        log::info!("scenario: {:?} ({:?})", call.label, call.evidence.branch);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct WeightsOutput {
    rows: usize,
    cells: Vec<CellWeight>,
    min_weight: f64,
    max_weight: f64,
    /// Mean of the per-row weights; 1 by construction.
    mean_weight: f64,
    weighted_favorable_rate: [f64; 2],
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<String, CliError> {
    let config = load_config(&args.common.config, args.common.seed)?;
    let encoded = data::load_dataset(&config)
        .and_then(|t| data::encode(&t, &config))
        .map_err(AuditError::from)?;
    let rows = if args.all_rows {
        encoded
    } else {
        data::split(&encoded, config.split_fraction, config.seed)
            .map_err(AuditError::from)?
            .0
    };
    let weights = reweigh::compute_weights(&rows).map_err(AuditError::from)?;
    let reweighed = reweigh::apply_weights(&rows, &weights.per_row).map_err(AuditError::from)?;
    let w = &weights.per_row;
    let out = WeightsOutput {
        rows: rows.len(),
        cells: weights.cells(rows.group_counts()),
        min_weight: w.iter().copied().fold(f64::INFINITY, f64::min),
        max_weight: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_weight: w.iter().sum::<f64>() / w.len() as f64,
        weighted_favorable_rate: reweigh::weighted_favorable_rates(&reweighed),
    };
    Ok(String::from_utf8(json_bytes(&out)).expect("utf-8"))
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<(), CliError> {
    let seed = args.common.seed;
    let dataset = load_config(&args.common.config, seed)?;
    let text = std::fs::read_to_string(&args.model_file)
        .map_err(|e| CliError::new(3, format!("model file {}: {e}", args.model_file.display())))?;
    let artifact = ModelArtifact::from_json(&text)?;
    let settings = args.explainer.settings(seed);
    let prepared = audit::prepare(&dataset, &settings)?;
    artifact.check_against(&prepared)?;
    let (explanations, importance) = audit::explain_test(&artifact.model, &prepared, &settings)?;
    let files = vec![
        (
            "explanations.csv".to_owned(),
            csv_bytes(|b| audit::explanations_csv(b, prepared.feature_names(), &explanations))?,
        ),
        ("importance.json".to_owned(), json_bytes(&importance)),
    ];
    write_outputs(&args.out, &files)
}

fn read_predictions(path: &Path) -> Result<[Vec<u8>; 3], CliError> {
    let bad = |msg: String| CliError::new(4, format!("predictions {}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut cols = [0usize; 3];
    for (slot, name) in cols.iter_mut().zip(["prediction", "label", "sensitive"]) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name:?}")))?;
    }
    let mut out: [Vec<u8>; 3] = Default::default();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        for (vals, &c) in out.iter_mut().zip(&cols) {
            match record.get(c) {
                Some("0") => vals.push(0),
                Some("1") => vals.push(1),
                other => return Err(bad(format!("row {row}: expected 0 or 1, found {other:?}"))),
            }
        }
    }
    Ok(out)
}

pub fn cmd_metrics(args: &MetricsArgs) -> Result<String, CliError> {
    let [predictions, labels, sensitive] = read_predictions(&args.predictions)?;
    let options = args.consistency.options();
    let report: FairnessReport = match &args.config {
        Some(path) => {
            let dataset = load_config(path, args.seed)?;
            let prepared = audit::prepare(&dataset, &ExplainerSettings::default())?;
            let test = &prepared.test;
            if test.len() != predictions.len()
                || test.target != labels
                || test.sensitive != sensitive
            {
                return Err(CliError::new(
                    10,
                    format!(
                        "predictions do not line up with the {}-row test split for seed {}",
                        test.len(),
                        args.seed
                    ),
                ));
            }
            fairness::evaluate(
                &predictions,
                &labels,
                &sensitive,
                Some((&test.features, test.sensitive_index)),
                options,
            )
        }
        None => fairness::evaluate(&predictions, &labels, &sensitive, None, options),
    }
    .map_err(AuditError::from)?;
    Ok(String::from_utf8(json_bytes(&report)).expect("utf-8"))
}

/// Runs one parsed invocation; JSON-producing subcommands print to stdout.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Audit(a) => cmd_audit(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Weights(a) => cmd_weights(a).map(|s| print!("{s}")),
        Command::Metrics(a) => cmd_metrics(a).map(|s| print!("{s}")),
    }
}

/// Parses `args` (program name first) and runs; returns the exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_exit_codes() {
        let help = Cli::command().render_long_help().to_string();
        for code in ["  3   configuration error", "  10  model file"] {
            assert!(help.contains(code), "{help}");
        }
    }

    #[test]
    fn file_stems() {
        assert_eq!(sanitize_file_stem("race=Caucasian"), "race_Caucasian");
        assert_eq!(sanitize_file_stem("age"), "age");
        assert_eq!(sanitize_file_stem("a b/c"), "a_b_c");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["fairaudit", "audit", "--model", "svm"]), 2);
        assert_eq!(run(["fairaudit"]), 2);
    }
}
