//! `cape`: simulations, λ tuning and backtests from the command line.
//!
//! Data goes to files under `--out-dir` (and, for `backtest` and `tune`, to
//! standard output); progress and diagnostics go to standard error. Any
//! failure ends with a single line
//! `cape-error code=<code> [line=<n> field=<f>] message=<text>` on standard
//! error and exit status 1 (2 for command-line usage errors). Errors in
//! flags report `line=0`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use cape_core::config::RunConfig;
use cape_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cape", version, about = "Cost-aware sparse portfolio estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replicated three-factor simulation; writes per-replicate and summary CSVs.
    Simulate(Common),
    /// Staged backtest on a returns CSV.
    Backtest(Common),
    /// λ sweep on the most recent estimation window of a returns CSV.
    Tune(Common),
    /// Writes one simulated returns panel and its universe snapshot.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Replicate index of the generated panel.
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Number of days (defaults to window · (stages + 1)).
        #[arg(long)]
        days: Option<usize>,
    },
}

/// Settings shared by every command. Flags override `--config`.
#[derive(Args, Debug)]
#[command(next_help_heading = "Settings")]
struct Common {
    /// key = value file with defaults for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated strategies: 1/n, mv, pmv, cmv, cape-l, cape-s.
    #[arg(long)]
    strategy: Option<String>,
    /// quadratic or proportional.
    #[arg(long)]
    cost_kind: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Comma-separated λ values.
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    scad_a: Option<String>,
    /// Estimation window in days.
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    stages: Option<String>,
    /// Holding period in days (defaults to the window).
    #[arg(long, allow_hyphen_values = true)]
    rebalance_every: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    replicates: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// sample or lse.
    #[arg(long)]
    estimator: Option<String>,
    /// Unit of the moments fed to the strategies for --returns: percent or decimal.
    #[arg(long)]
    moment_unit: Option<String>,
    /// Number of simulated assets.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Returns CSV (`date,<asset>...`, decimal fractions).
    #[arg(long)]
    returns: Option<String>,
    /// Cost CSV (`asset,proportional_cost`).
    #[arg(long)]
    cost_file: Option<String>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, allow_hyphen_values = true)]
    threads: Option<String>,
}

impl Common {
    fn resolve(&self) -> cape_core::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_text(&std::fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("strategy", &self.strategy),
            ("cost_kind", &self.cost_kind),
            ("beta", &self.beta),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("lambda_grid", &self.lambda_grid),
            ("scad_a", &self.scad_a),
            ("window", &self.window),
            ("stages", &self.stages),
            ("rebalance_every", &self.rebalance_every),
            ("replicates", &self.replicates),
            ("seed", &self.seed),
            ("estimator", &self.estimator),
            ("moment_unit", &self.moment_unit),
            ("p", &self.p),
            ("out_dir", &self.out_dir),
            ("returns", &self.returns),
            ("cost_file", &self.cost_file),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v, 0)?;
            }
        }
        Ok(cfg)
    }
}

fn error_line(err: &anyhow::Error) -> String {
    let flat = |s: String| s.replace(['\n', '\r'], " ");
    match err.downcast_ref::<Error>() {
        Some(Error::Parse {
            line,
            field,
            message,
        }) => format!(
            "cape-error code=parse line={line} field={} message={}",
            flat(field.clone()),
            flat(message.clone())
        ),
        Some(e) => {
            let code = match e {
                Error::InvalidInput(_) => "invalid_input",
                Error::Convergence { .. } => "convergence",
                Error::Singular(_) => "singular",
                Error::Lla { .. } => "lla",
                Error::Wipeout { .. } => "wipeout",
                Error::UndefinedSharpe(_) => "undefined_sharpe",
                Error::Tuning(_) => "tuning",
                Error::Parse { .. } => "parse",
                Error::Io(_) => "io",
            };
            format!("cape-error code={code} message={}", flat(format!("{err:#}")))
        }
        None => format!("cape-error code=runtime message={}", flat(format!("{err:#}"))),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(common) => commands::simulate(&common.resolve()?),
        Command::Backtest(common) => commands::backtest(&common.resolve()?),
        Command::Tune(common) => commands::tune(&common.resolve()?),
        Command::Generate {
            common,
            replicate,
            days,
        } => commands::generate(&common.resolve()?, replicate, days),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAPE_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let msg = e.kind().to_string();
            eprintln!("cape-error code=usage message={msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}
