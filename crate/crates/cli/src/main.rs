use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msceqf_cli::commands::{cmd_eval, cmd_mc, cmd_run, cmd_simulate, cmd_sweep};
use msceqf_cli::config::Config;
use msceqf_cli::CliError;

#[derive(Parser)]
#[command(name = "msceqf", version, about = "Equivariant visual-inertial filter with online calibration")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory for run and eval (overrides paths.dataset).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo runs, or runs per sweep cell.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Worker threads for mc and sweep.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Write a synthetic dataset.
    Simulate,
    /// Filter a dataset.
    Run,
    /// Monte Carlo consistency (ANEES).
    Mc,
    /// Robustness grid over extrinsic priors and injected errors.
    Sweep,
    /// Score an estimate against ground truth.
    Eval,
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads: must be >= 1".into()));
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.paths.out.clone());
    let data = cli.data.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    match cli.cmd {
        Cmd::Simulate => cmd_simulate(&cfg, &out),
        Cmd::Run => cmd_run(&cfg, &data, &out),
        Cmd::Mc => cmd_mc(&cfg, cli.runs.unwrap_or(cfg.experiment.runs), cli.threads, &out),
        Cmd::Sweep => cmd_sweep(&cfg, cli.runs.unwrap_or(cfg.sweep.runs_per_cell), cli.threads, &out),
        Cmd::Eval => cmd_eval(&cfg, &data, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("json serializes");
            // A closed stdout pipe does not undo the files already written.
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("msceqf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
