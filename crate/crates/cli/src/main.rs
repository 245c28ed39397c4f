use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lmtp::estimators::EstimatorKind;
use lmtp_cli::{
    report_json, run_estimate, run_simulate, summary_table, CliError, Overrides, RunConfig,
    SimulateArgs,
};

#[derive(Parser)]
#[command(
    name = "lmtp",
    version,
    about = "Longitudinal modified treatment policy estimation"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the policy mean on a CSV file.
    Estimate(EstimateCmd),
    /// Run the benchmark simulation study.
    Simulate(SimulateCmd),
}

#[derive(Args)]
struct EstimateCmd {
    #[arg(long)]
    config: PathBuf,
    /// Results file (default: from the config, else standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_crossfit: bool,
    /// Cap on the density ratios.
    #[arg(long)]
    truncate: Option<f64>,
    /// Comma-separated subset of sub,ipw,tmle,sdr.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
}

#[derive(Args)]
struct SimulateCmd {
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4])]
    scenario: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![200, 800, 1800])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

fn estimate(cmd: EstimateCmd) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_path(&cmd.config)?;
    let estimators = cmd
        .estimators
        .map(|names| {
            names
                .iter()
                .map(|s| s.trim().parse::<EstimatorKind>())
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    cfg.apply(&Overrides {
        out: cmd.out,
        folds: cmd.folds,
        seed: cmd.seed,
        no_crossfit: cmd.no_crossfit,
        truncate: cmd.truncate,
        estimators,
    });
    let report = run_estimate(&cfg)?;
    let text = report_json(&report);
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?,
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn simulate(cmd: SimulateCmd) -> Result<(), CliError> {
    let rows = run_simulate(&SimulateArgs {
        scenarios: cmd.scenario,
        sizes: cmd.n,
        reps: cmd.reps,
        seed: cmd.seed,
        folds: cmd.folds,
        out: cmd.out,
    })?;
    print!("{}", summary_table(&rows));
    Ok(())
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(k) = threads {
        anyhow::ensure!(k > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LMTP_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(lmtp_cli::error::EXIT_CONFIG as u8);
    }
    let outcome = match cli.command {
        Command::Estimate(cmd) => estimate(cmd),
        Command::Simulate(cmd) => simulate(cmd),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
