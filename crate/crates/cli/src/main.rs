//! `fairnb` command-line front end.
//!
//! Exit codes: 0 success, 1 `verify` found a discrimination pattern, 2 usage
//! error, 3 ingestion error, 4 solver failure. Errors are written to standard
//! error as one line of JSON.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairnb::data::{cross_validate, fit, load_csv, DataError, Dataset, SchemaConfig, DEFAULT_CV_SEED};
use fairnb::learner::{learn_fair, LearnError, LearnOptions};
use fairnb::miner::{scatter, write_scatter_csv, Miner, MinerError, Pattern, Ranking};
use fairnb::model::{ModelError, NaiveBayesModel};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "fairnb", version, about = "Audit naive Bayes classifiers for discrimination patterns and learn fair ones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a maximum-likelihood model to a CSV file and write it as JSON.
    Fit(FitArgs),
    /// Exit 0 if the model is δ-fair, 1 (printing a witness) otherwise.
    Verify(VerifyArgs),
    /// Mine the top-k discrimination patterns.
    Mine(MineArgs),
    /// Learn a δ-fair model with the cutting-plane loop.
    Learn(LearnArgs),
    /// Accuracy and log-likelihood of a model, optionally with cross-validation.
    Eval(EvalArgs),
    /// Every discrimination pattern's (mass, |Δ|, divergence) with top-k flags.
    Scatter(ScatterArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankingArg {
    Discrimination,
    Divergence,
}

impl From<RankingArg> for Ranking {
    fn from(r: RankingArg) -> Self {
        match r {
            RankingArg::Discrimination => Ranking::Discrimination,
            RankingArg::Divergence => Ranking::Divergence,
        }
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn open_unit_interval(s: &str) -> Result<f64, String> {
    let v = unit_interval(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite number >= 0"))
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema config (JSON, or TOML with a `.toml` extension).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Laplace pseudo-count.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    alpha: f64,
    /// Output file (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = unit_interval)]
    delta: f64,
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = unit_interval)]
    delta: f64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_enum, default_value_t = RankingArg::Discrimination)]
    ranking: RankingArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, value_parser = open_unit_interval)]
    delta: f64,
    /// Patterns added as constraints per iteration.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_enum, default_value_t = RankingArg::Discrimination)]
    ranking: RankingArg,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    alpha: f64,
    /// Give up (exit 4) if the model is not δ-fair after this many iterations.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iterations: u64,
    /// Record the number of remaining patterns after every iteration
    /// (exhaustive; small models only).
    #[arg(long)]
    track_remaining: bool,
    /// Learning report (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the learned model on its own.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    /// Also cross-validate unconstrained learning with this many folds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    folds: Option<u64>,
    /// Fold-assignment seed.
    #[arg(long, default_value_t = DEFAULT_CV_SEED)]
    seed: u64,
    /// With `--folds`, also cross-validate δ-fair learning at this threshold.
    #[arg(long, value_parser = open_unit_interval)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long, value_enum, default_value_t = RankingArg::Discrimination)]
    ranking: RankingArg,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct ScatterArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = unit_interval)]
    delta: f64,
    /// Size of the highlighted top-k sets.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Ingestion(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Ingestion(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Ingestion(_) => "ingestion",
            CliError::Solver(_) => "solver",
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Ingestion(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Ingestion(e.to_string())
    }
}

impl From<MinerError> for CliError {
    fn from(e: MinerError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Infeasible { .. } | LearnError::Solver(_) => CliError::Solver(e.to_string()),
            LearnError::Data(_) | LearnError::Model(_) => CliError::Ingestion(e.to_string()),
            LearnError::UnsupportedThreshold(_)
            | LearnError::InvalidThreshold(_)
            | LearnError::InvalidK
            | LearnError::Miner(_) => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    exit_code: u8,
}

fn read_model(path: &Path) -> Result<NaiveBayesModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Ingestion(format!("cannot read `{}`: {e}", path.display())))?;
    NaiveBayesModel::from_json(&text)
        .map_err(|e| CliError::Ingestion(format!("invalid model `{}`: {e}", path.display())))
}

fn read_data(args: &DataArgs) -> Result<Dataset, CliError> {
    let config = SchemaConfig::from_path(&args.schema)?;
    Ok(load_csv(&args.data, &config)?)
}

/// Writes `text` to `out`, or to standard output followed by a newline.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Ingestion(format!("cannot write `{}`: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            let newline: &[u8] = if text.ends_with('\n') { b"" } else { b"\n" };
            match stdout.write_all(text.as_bytes()).and_then(|()| stdout.write_all(newline)) {
                // A closed pipe (`fairnb mine ... | head`) is not an error.
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    Err(CliError::Ingestion(format!("cannot write to standard output: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn run_fit(args: &FitArgs) -> Result<u8, CliError> {
    let data = read_data(&args.input)?;
    let model = fit(data.schema(), &data.counts(), args.alpha)?;
    emit(args.out.as_deref(), &model.to_json())?;
    Ok(0)
}

#[derive(Serialize)]
struct VerifyReport {
    delta: f64,
    fair: bool,
    witness: Option<fairnb::miner::PatternDocument>,
}

fn run_verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let (fair, witness) = Miner::new(&model).verify_fair(args.delta)?;
    let report = VerifyReport {
        delta: args.delta,
        fair,
        witness: witness.map(|p| p.to_document(model.schema())),
    };
    emit(None, &to_json(&report))?;
    Ok(if fair { 0 } else { 1 })
}

fn pattern_rows(model: &NaiveBayesModel, patterns: &[Pattern]) -> Vec<Vec<String>> {
    let s = model.schema();
    patterns
        .iter()
        .map(|p| {
            vec![
                s.describe(&p.x),
                s.describe(&p.y),
                p.delta.to_string(),
                p.divergence.to_string(),
                p.mass.to_string(),
            ]
        })
        .collect()
}

fn run_mine(args: &MineArgs) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let report = Miner::new(&model).mine_topk(args.delta, args.k as usize, args.ranking.into())?;
    let text = match args.format {
        Format::Json => report.to_json(model.schema()),
        Format::Csv => csv_text(&["x", "y", "delta", "divergence", "mass"], pattern_rows(&model, &report.patterns)),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn run_learn(args: &LearnArgs) -> Result<u8, CliError> {
    let data = read_data(&args.input)?;
    let mut options = LearnOptions::new(args.delta, args.k as usize, args.ranking.into());
    options.alpha = args.alpha;
    options.track_remaining = args.track_remaining;
    options.max_iterations = args.max_iterations as usize;
    let report = learn_fair(&data, &options)?;
    if let Some(path) = &args.model_out {
        emit(Some(path), &report.model.to_json())?;
    }
    emit(args.out.as_deref(), &report.to_json())?;
    if report.fair {
        Ok(0)
    } else {
        Err(CliError::Solver(format!(
            "no δ-fair model after {} iterations",
            report.iterations
        )))
    }
}

#[derive(Serialize)]
struct CvSummary {
    learner: String,
    folds: usize,
    seed: u64,
    fold_sizes: Vec<usize>,
    accuracies: Vec<f64>,
    mean_accuracy: f64,
}

#[derive(Serialize)]
struct EvalReport {
    rows: usize,
    accuracy: f64,
    log_likelihood: f64,
    mean_log_likelihood: f64,
    cross_validation: Vec<CvSummary>,
}

fn run_eval(args: &EvalArgs) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let data = read_data(&args.input)?;
    if model.schema() != data.schema() {
        return Err(CliError::Ingestion(
            "the model's schema does not match the dataset after preprocessing".into(),
        ));
    }
    let accuracy = fairnb::data::accuracy(&model, &data)?;
    let log_likelihood = model.log_likelihood(&data.counts())?;
    let mut cross_validation = Vec::new();
    if let Some(folds) = args.folds {
        let folds = folds as usize;
        let alpha = args.alpha;
        let cv = cross_validate(&data, folds, args.seed, |train: &Dataset| {
            fit(train.schema(), &train.counts(), alpha)
        })?;
        cross_validation.push(CvSummary {
            learner: "maximum-likelihood".into(),
            folds,
            seed: cv.seed,
            fold_sizes: cv.fold_sizes,
            accuracies: cv.accuracies,
            mean_accuracy: cv.mean_accuracy,
        });
        if let Some(delta) = args.delta {
            let mut options = LearnOptions::new(delta, args.k as usize, args.ranking.into());
            options.alpha = alpha;
            let cv = cross_validate(&data, folds, args.seed, |train: &Dataset| -> Result<_, LearnError> {
                Ok(learn_fair(train, &options)?.model)
            })?;
            cross_validation.push(CvSummary {
                learner: format!("fair(delta={delta})"),
                folds,
                seed: cv.seed,
                fold_sizes: cv.fold_sizes,
                accuracies: cv.accuracies,
                mean_accuracy: cv.mean_accuracy,
            });
        }
    } else if args.delta.is_some() {
        return Err(CliError::Usage("--delta on eval requires --folds".into()));
    }
    let report = EvalReport {
        rows: data.len(),
        accuracy,
        log_likelihood,
        mean_log_likelihood: log_likelihood / data.len() as f64,
        cross_validation,
    };
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut rows = vec![
                vec!["model".into(), "rows".into(), report.rows.to_string()],
                vec!["model".into(), "accuracy".into(), report.accuracy.to_string()],
                vec!["model".into(), "log_likelihood".into(), report.log_likelihood.to_string()],
            ];
            for cv in &report.cross_validation {
                rows.push(vec![cv.learner.clone(), "mean_accuracy".into(), cv.mean_accuracy.to_string()]);
                for (i, a) in cv.accuracies.iter().enumerate() {
                    rows.push(vec![cv.learner.clone(), format!("fold_{i}_accuracy"), a.to_string()]);
                }
            }
            csv_text(&["source", "metric", "value"], rows)
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn run_scatter(args: &ScatterArgs) -> Result<u8, CliError> {
    let model = read_model(&args.model)?;
    let points = scatter(&model, args.delta, args.k as usize)?;
    let text = match args.format {
        Format::Json => to_json(&points),
        Format::Csv => {
            let mut buf = Vec::new();
            write_scatter_csv(&points, &mut buf).expect("in-memory write");
            String::from_utf8(buf).expect("csv is utf-8")
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(0)
}

fn fail(err: &CliError) -> ExitCode {
    let line = ErrorLine {
        error: err.kind(),
        message: err.to_string(),
        exit_code: err.code(),
    };
    eprintln!("{}", serde_json::to_string(&line).expect("error serializes"));
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .find(|l| l.starts_with("error:"))
                .map_or(message, |l| l.trim_start_matches("error:").trim().to_string());
            return fail(&CliError::Usage(first));
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Verify(a) => run_verify(a),
        Command::Mine(a) => run_mine(a),
        Command::Learn(a) => run_learn(a),
        Command::Eval(a) => run_eval(a),
        Command::Scatter(a) => run_scatter(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(&e),
    }
}
