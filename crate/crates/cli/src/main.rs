use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod config;
mod run;

#[derive(Debug, Parser)]
#[command(name = "durage", version, about = "Speaker age estimation from phone durations")]
#[command(args_override_self = true)]
struct Cli {
    /// JSON file supplying defaults for any long option.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: one CTM per speaker plus manifest.csv.
    Synth(SynthArgs),
    /// Turn CTM alignments and a manifest into a per-speaker feature file.
    Extract(ExtractArgs),
    /// Leave-one-speaker-out evaluation of a model over a feature file.
    Evaluate(EvaluateArgs),
    /// Fit a stacked model on every speaker and save it.
    Train(TrainArgs),
    /// Predict ages with a saved model.
    Predict(PredictArgs),
    /// Per-age duration histogram of one phone category.
    Histogram(HistogramArgs),
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// `default`, `planted` or a path to a JSON spec.
    #[arg(long, default_value = "default")]
    pub spec: String,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the spec's speaker count.
    #[arg(long)]
    pub speakers: Option<usize>,
    /// Remove every age effect (null-signal control).
    #[arg(long)]
    pub null: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct StressFlags {
    /// Keep lexical stress digits in category keys (default).
    #[arg(long, overrides_with = "no_stress")]
    pub with_stress: bool,
    /// Strip lexical stress digits.
    #[arg(long, overrides_with = "with_stress")]
    pub no_stress: bool,
}

impl StressFlags {
    pub fn enabled(&self) -> bool {
        !self.no_stress
    }
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct CorpusArgs {
    /// CTM files or directories holding `*.ctm` files.
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    pub ctm: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub stress: StressFlags,
    /// Skip zero or negative durations instead of failing.
    #[arg(long)]
    pub skip_nonpositive: bool,
    /// JSON map of phone symbol to class, applied over ARPAbet.
    #[arg(long, value_name = "FILE")]
    pub phone_classes: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Drop non-aggregate categories present for fewer speakers than this.
    #[arg(long, default_value_t = 0.0)]
    pub min_speaker_fraction: f64,
    /// JSON-lines feature file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write a flat CSV of the same features.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Baseline,
    Svr,
    Adaboost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GridArg {
    /// Full meta hyperparameter grid.
    Default,
    /// Reduced grid for quick runs.
    Small,
    /// No tuning: the default meta hyperparameters.
    None,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct FitArgs {
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GridArg::Default)]
    pub grid: GridArg,
    /// Folds for meta hyperparameter tuning.
    #[arg(long, default_value_t = 5)]
    pub inner_folds: usize,
    /// Folds for the out-of-fold meta features.
    #[arg(long, default_value_t = 5)]
    pub meta_folds: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Svr)]
    pub model: ModelArg,
    /// Output directory for report.json, scatter.csv and per_age_mae.csv.
    #[arg(long, value_name = "DIR")]
    pub report: PathBuf,
    /// Also fit on all speakers and write importance.csv (tree meta models).
    #[arg(long)]
    pub importance: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Svr)]
    pub model: ModelArg,
    /// Model JSON file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    /// Model JSON written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,
    /// Predictions CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Category key, e.g. `T_I` or `VOWELS`.
    #[arg(long)]
    pub category: String,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Core(durage::Error),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
    Other(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_config() => 2,
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

impl From<durage::Error> for CliError {
    fn from(e: durage::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

/// What a successful command reports back for the exit status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub nonconverged: usize,
}

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mut cmd = Cli::command();
    let args = match config::merge(args, &cmd) {
        Ok(a) => a,
        Err(e) => return Err(cmd.error(clap::error::ErrorKind::InvalidValue, e.0)),
    };
    let matches = cmd.try_get_matches_from_mut(args)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };

    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }

    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Extract(a) => commands::extract(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Histogram(a) => commands::histogram(a),
    };
    match result {
        Ok(o) if o.nonconverged > 0 => {
            log::warn!("{} estimator fits did not converge", o.nonconverged);
            ExitCode::from(4)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
