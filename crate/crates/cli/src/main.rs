//! `glmb`: simulate scenarios, run the tracker, score and summarise runs.
//!
//! Exit codes: 0 on success, 2 for usage, configuration or input errors,
//! 3 for failures while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{ReportInputs, ESTIMATES_FILE, SCANS_FILE};
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

#[derive(Parser)]
#[command(name = "glmb", version, about = "Large-scale labeled multi-object tracking")]
struct Cli {
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, env = "GLMB_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all randomness, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth tracks and measurement scans.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the tracker over a scans file.
    Track {
        #[command(flatten)]
        common: Common,
        /// Scans to read; defaults to the configured path or scans.jsonl in
        /// the output directory.
        #[arg(long)]
        scans: Option<PathBuf>,
    },
    /// Score estimated tracks against truth with windowed OSPA(2).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        /// Estimated tracks; defaults to est.tracks in the output directory.
        #[arg(long)]
        est: Option<PathBuf>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        order: Option<f64>,
        /// Window length in scans.
        #[arg(long)]
        window: Option<u32>,
    },
    /// Summarise a run and write plot data.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        diag: PathBuf,
        #[arg(long)]
        ospa2: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Side of the density grid cells, in metres.
        #[arg(long, default_value_t = 50.0)]
        cell: f64,
    },
}

fn setup(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let cfg = RunConfig::load(common.config.as_deref())?.finish(common.seed)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.paths.out_dir.clone());
    Ok((cfg, out))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    match cli.command {
        Command::Simulate { common } => {
            let (cfg, out) = setup(&common)?;
            commands::simulate_cmd(&cfg, &out)
        }
        Command::Track { common, scans } => {
            let (cfg, out) = setup(&common)?;
            let scans = scans
                .or_else(|| cfg.paths.scans.clone())
                .unwrap_or_else(|| out.join(SCANS_FILE));
            commands::track_cmd(&cfg, &scans, &out)
        }
        Command::Evaluate {
            common,
            truth,
            est,
            cutoff,
            order,
            window,
        } => {
            let (mut cfg, out) = setup(&common)?;
            cfg.metric.cutoff = cutoff.unwrap_or(cfg.metric.cutoff);
            cfg.metric.order = order.unwrap_or(cfg.metric.order);
            cfg.window.length = window.unwrap_or(cfg.window.length);
            let cfg = cfg.finish(None)?;
            let est = est.unwrap_or_else(|| out.join(ESTIMATES_FILE));
            commands::evaluate_cmd(&truth, &est, &cfg.metric, &cfg.window, &out)
        }
        Command::Report {
            common,
            diag,
            ospa2,
            truth,
            est,
            cell,
        } => {
            let (_, out) = setup(&common)?;
            let inputs = ReportInputs {
                diagnostics: diag,
                ospa2,
                truth,
                estimates: est,
                cell,
            };
            let summary = commands::report_cmd(&inputs, &out)?;
            print!("{summary}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
