//! `snse`: batch driver for the stochastic Navier–Stokes experiments.
//!
//! Every subcommand reads one TOML config, writes its resolved form into a
//! run directory and stamps every payload with the config hash. Exit codes:
//! 0 success, 1 invalid input or I/O, 2 numerical failure (partial outputs
//! are kept).

pub mod checks;
pub mod config;
pub mod output;
pub mod report;
pub mod run;
pub mod verdict;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::checks::Outcome;
use crate::config::RunConfig;
use crate::output::{resolve_out_dir, unix_now, Metadata, RunDir};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Invalid(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<snse_core::error::Error> for CliError {
    fn from(e: snse_core::error::Error) -> Self {
        use snse_core::error::Error;
        match e {
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            Error::Invalid(m) => CliError::Invalid(m),
            Error::Io(io) => CliError::Io(io.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "snse", version, about = "Stochastic 2D Navier-Stokes experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration file; omitted means all defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicas and sweep points.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate one trajectory, writing diagnostics and checkpoints.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by a run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Parameter sweep (generic, inviscid, damped or moser).
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Comparison against a closed-form answer.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Stationary drift-diffusion sweep over drift amplitudes.
    Elliptic {
        #[command(flatten)]
        common: Common,
    },
    /// Stationary balance identities at one or more time steps.
    Balance {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a run directory.
    Report { dir: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Sweep { .. } => "sweep",
            Command::Oracle { .. } => "oracle",
            Command::Elliptic { .. } => "elliptic",
            Command::Balance { .. } => "balance",
            Command::Report { .. } => "report",
        }
    }
}

/// Loads the config named by `common`, applies overrides and fills the
/// sections `command` reads.
pub fn load_config(common: &Common, command: &str) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("").map_err(CliError::Invalid)?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        cfg.threads = t;
    }
    cfg.resolve(command);
    Ok(cfg)
}

/// Writes an outcome's payloads and prints its verdicts.
pub fn write_outcome(dir: &mut RunDir, outcome: &Outcome) -> Result<(), CliError> {
    dir.write_json(&format!("{}.json", outcome.kind), &outcome.kind, &outcome.verdicts, &outcome.data)?;
    for (name, body) in &outcome.csvs {
        dir.write_csv(name, body)?;
    }
    for v in &outcome.verdicts {
        println!("{}", v.line());
    }
    Ok(())
}

/// Runs the driver of `command` on a resolved config.
pub fn dispatch(command: &str, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        "sweep" => checks::sweep::sweep(cfg),
        "oracle" => checks::oracle::oracle(cfg),
        "elliptic" => checks::elliptic::elliptic(cfg),
        "balance" => checks::balance::balance(cfg),
        other => Err(CliError::Invalid(format!("no driver for {other}"))),
    }
}

fn execute(command: &Command, argv: &[String]) -> Result<(), CliError> {
    let name = command.name();
    let (common, resume) = match command {
        Command::Report { dir } => return report::report(dir).map(|_| ()),
        Command::Run { common, resume } => (common, resume.as_deref()),
        Command::Sweep { common }
        | Command::Oracle { common }
        | Command::Elliptic { common }
        | Command::Balance { common } => (common, None),
    };
    let cfg = load_config(common, name)?;
    let started = unix_now();
    let path = resolve_out_dir(common.out.as_deref(), &cfg, name);
    let mut dir = RunDir::create(&path, &cfg)?;
    let result = if name == "run" {
        run::run(&cfg, &mut dir, resume)
    } else {
        dispatch(name, &cfg).and_then(|outcome| {
            write_outcome(&mut dir, &outcome)?;
            outcome.failure.map_or(Ok(()), Err)
        })
    };
    let meta = Metadata {
        command: name.to_string(),
        argv: argv.to_vec(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: dir.hash().to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        status: match &result {
            Ok(()) => "ok".into(),
            Err(CliError::Numerical(_)) => "numerical_failure".into(),
            Err(_) => "error".into(),
        },
        exit_code: result.as_ref().map_or_else(CliError::exit_code, |_| 0),
        outputs: dir.outputs().to_vec(),
        message: result.as_ref().err().map(ToString::to_string),
    };
    dir.write_metadata(&meta)?;
    eprintln!("outputs in {}", dir.path().display());
    result
}

/// Parses `argv` (program name first) and runs the command; returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
