//! Command-line front end: argument parsing, configuration and the pipeline stages.

pub mod config;
mod data;
mod pipeline;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use config::{PipelineConfig, SelectionMethod};

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration: exit code 2.
    Usage(String),
    /// A pipeline stage failed: exit code 1.
    Stage {
        stage: &'static str,
        source: survstack::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Stage { stage, source } => write!(f, "stage `{stage}` failed: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<survstack::Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "survstack", version, about = "Survival analysis by survival stacking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `paths.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its truth sidecar from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Split, preprocess, select, stack, fit, predict and evaluate.
    Run {
        /// Input table (overrides `paths.data`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write the stacked rows of a dataset.
    Stack {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Feature selection on a dataset.
    Select {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Fit a model on a whole dataset and write the model file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
    },
    /// Survival curves for the rows of a table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated evaluation times.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// Time-dependent AUC and Brier score of predicted curves.
    Evaluate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        curves: PathBuf,
    },
    /// Export shape functions, interaction tables and term importances of a GAM.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// Stacked rows (as written by `stack`) for the importances.
        #[arg(long)]
        stacked: Option<PathBuf>,
    },
    /// Compare product-form and exponential survival estimates at a fixed time.
    CompareEstimators {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModelArg {
    Gam,
    Logistic,
    Cox,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum MethodArg {
    None,
    Controlburn,
    LassoLinear,
}

impl From<MethodArg> for SelectionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::None => SelectionMethod::None,
            MethodArg::Controlburn => SelectionMethod::Controlburn,
            MethodArg::LassoLinear => SelectionMethod::LassoLinear,
        }
    }
}

impl From<ModelArg> for survstack::ModelChoice {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gam => Self::Gam,
            ModelArg::Logistic => Self::Logistic,
            ModelArg::Cox => Self::Cox,
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir.clone_from(o);
    }
    Ok(cfg)
}

pub(crate) fn out_file(cfg: &PipelineConfig, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.paths.out_dir).stage("output")?;
    Ok(cfg.paths.out_dir.join(name))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).stage("output")
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Command::Config = cli.command {
        print!("{}", config::DEFAULT_CONFIG);
        return Ok(());
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Synth { spec } => pipeline::synth(&cfg, spec, cli.seed),
        Command::Run { data } => pipeline::run(&cfg, data.as_deref()),
        Command::Stack { data, gamma } => pipeline::stack_cmd(&cfg, data, *gamma),
        Command::Select { data, k, method } => {
            let mut cfg = cfg;
            if let Some(k) = k {
                cfg.selection.k = *k;
            }
            if let Some(m) = method {
                cfg.selection.method = (*m).into();
            }
            if cfg.selection.method == SelectionMethod::None {
                cfg.selection.method = SelectionMethod::Controlburn;
            }
            pipeline::select_cmd(&cfg, data)
        }
        Command::Train { data, model } => {
            let mut cfg = cfg;
            if let Some(m) = model {
                cfg.model.kind = (*m).into();
            }
            pipeline::train_cmd(&cfg, data)
        }
        Command::Predict { model, data, grid } => pipeline::predict_cmd(&cfg, model, data, grid),
        Command::Evaluate { train, test, curves } => pipeline::evaluate_cmd(&cfg, train, test, curves),
        Command::Explain { model, stacked } => pipeline::explain_cmd(&cfg, model, stacked.as_deref()),
        Command::CompareEstimators { data } => pipeline::compare_cmd(&cfg, data.as_deref()),
        Command::Config => unreachable!("handled above"),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
