//! Command line front end: fit, predict, MSE estimation, simulation
//! studies and shift scanning for log-scale small area prediction.
//!
//! A run is described by an optional TOML configuration file plus flag
//! overrides; the effective configuration lands in `provenance.json` next
//! to every report. Exit codes: 0 success, 1 user error (arguments,
//! files, configuration), 2 numerical failure (non-convergence, singular
//! information, all replicates lost). Failures print one line of JSON to
//! stderr with `error`, `kind` and `exit` fields.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod ingest;
mod report;

use commands::{MseMethod, PredictorArg, SimMode, TargetArg};
use config::RunConfig;

/// Failures split by exit code: user errors exit 1, numerical failures
/// exit 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error(transparent)]
    Model(#[from] logebp::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::User(_) => "user",
            CliError::Model(e) => match e {
                logebp::Error::InvalidTheta { .. }
                | logebp::Error::Dimension { .. }
                | logebp::Error::Layout(_)
                | logebp::Error::Index { .. }
                | logebp::Error::Config(_) => "user",
                _ => "numerical",
            },
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "user" => 1,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "logebp",
    version,
    about = "Empirical best prediction of exp-scale values and area means \
             under the nested-error model"
)]
struct Cli {
    /// Configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Sampled-data CSV: area_id, w, covariates.
    #[arg(long, global = true)]
    sample: Option<PathBuf>,

    /// Out-of-sample covariate CSV: area_id, covariates.
    #[arg(long, global = true)]
    oos: Option<PathBuf>,

    /// Report directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Shift constant k in y = log(w + k), original scale units.
    #[arg(long, global = true)]
    shift: Option<f64>,

    /// Use the file covariates as given, without an intercept column.
    #[arg(long, global = true)]
    no_intercept: bool,

    /// Master seed for bootstrap and simulation stages.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replicate loops (default: LOGEBP_WORKERS, then
    /// one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Maximum Fisher scoring iterations.
    #[arg(long, global = true)]
    max_iter: Option<usize>,

    /// Convergence tolerance on the scoring step norm.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the variance components by maximum likelihood; writes fit.json.
    Fit,
    /// Fit, then predict every out-of-sample unit and every area mean;
    /// writes predictions.csv.
    Predict,
    /// Fit, then estimate the MSE of each area mean prediction; writes
    /// mse.csv.
    Mse {
        /// Which estimator to run.
        #[arg(long, value_enum, default_value_t = MseMethod::Analytic)]
        method: MseMethod,
        /// Bootstrap replicate count (bootstrap methods only).
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Simulate from a configured design: a survey-style census study or
    /// an empirical error run; writes study.csv or empirical.csv.
    Simulate {
        /// What to simulate.
        #[arg(long, value_enum, default_value_t = SimMode::Study)]
        mode: SimMode,
        /// Predictor for empirical runs.
        #[arg(long, value_enum, default_value_t = PredictorArg::Eb2)]
        predictor: PredictorArg,
        /// Error target for empirical runs.
        #[arg(long, value_enum, default_value_t = TargetArg::Area)]
        target: TargetArg,
        /// Replicate count for empirical runs.
        #[arg(long)]
        replicates: Option<usize>,
        /// Bootstrap replicate count behind the study CVs.
        #[arg(long)]
        bootstrap_replicates: Option<usize>,
    },
    /// Report log-scale skewness over a grid of candidate shift
    /// constants; writes shift_scan.csv. Reports only, never chooses.
    SuggestShift {
        /// Comma-separated shift candidates (default: 0,1,10,100,1000,10000).
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &cli.sample {
        cfg.sample = Some(v.clone());
    }
    if let Some(v) = &cli.oos {
        cfg.oos = Some(v.clone());
    }
    if let Some(v) = &cli.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = cli.shift {
        cfg.shift = v;
    }
    if cli.no_intercept {
        cfg.intercept = false;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if cfg.workers == 0 {
        cfg.workers = config::workers_from_env();
    }
    if let Some(v) = cli.max_iter {
        cfg.ml.max_iter = v;
    }
    if let Some(v) = cli.tol {
        cfg.ml.tol = v;
    }
    match &cli.command {
        Command::Mse {
            replicates: Some(b),
            ..
        } => cfg.bootstrap.replicates = *b,
        Command::Simulate {
            replicates,
            bootstrap_replicates,
            ..
        } => {
            if let Some(r) = replicates {
                cfg.sim.replicates = *r;
            }
            if let Some(b) = bootstrap_replicates {
                cfg.bootstrap.replicates = *b;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn try_main() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            std::process::exit(0);
        }
        CliError::User(e.to_string())
    })?;
    let cfg = effective_config(&cli)?;
    match cli.command {
        Command::Fit => commands::run_fit(&cfg),
        Command::Predict => commands::run_predict(&cfg),
        Command::Mse { method, .. } => commands::run_mse(&cfg, method),
        Command::Simulate {
            mode,
            predictor,
            target,
            ..
        } => commands::run_simulate(&cfg, mode, predictor, target),
        Command::SuggestShift { grid } => commands::run_suggest_shift(&cfg, &grid),
    }
}

fn main() -> ExitCode {
    match try_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let json = serde_json::json!({
                "error": e.to_string(),
                "kind": e.kind(),
                "exit": e.exit_code(),
            });
            eprintln!("{json}");
            ExitCode::from(e.exit_code())
        }
    }
}
