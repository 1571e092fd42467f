use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use arena_engine::command::{command_queue, CommandContext, NoCommands};
use arena_engine::config::{load_scenario, Mode};
use arena_engine::server::serve_control;
use arena_engine::telemetry::{NoTelemetry, TelemetryQueue, TELEMETRY_QUEUE_CAPACITY};
use arena_engine::{run_experiment, ExperimentSummary};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arena", version, about = "Run projected robot arena experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Free-run without pacing or frame export.
        #[arg(long)]
        headless: bool,
        /// Override the scenario duration.
        #[arg(long)]
        ticks: Option<u64>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Serve the control/telemetry API on this address.
        #[arg(long)]
        listen: Option<String>,
        /// Read camera frames from this directory (frames_in mode).
        #[arg(long)]
        frames_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExperimentSummary> {
    let Cmd::Run {
        config,
        headless,
        ticks,
        seed,
        listen,
        frames_dir,
    } = cli.command;
    let mut cfg = load_scenario(&config).with_context(|| format!("loading {}", config.display()))?;
    if headless {
        cfg.free_run = true;
    }
    if let Some(n) = ticks {
        cfg.duration = n;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
        // seed-derived defaults must follow the new seed
        cfg.tiles.noise_seed = None;
    }
    if let Some(dir) = frames_dir {
        cfg.mode = Mode::FramesIn;
        cfg.frames_dir = Some(dir);
    }
    cfg.finalize().context("validating overrides")?;

    match listen {
        None => Ok(run_experiment(&cfg, &mut NoCommands, &mut NoTelemetry)?),
        Some(addr) => {
            let (queue, mut source) = command_queue();
            let mut telemetry = TelemetryQueue::new(TELEMETRY_QUEUE_CAPACITY);
            let ctx = CommandContext { arena: cfg.arena() };
            let server = serve_control(&addr, queue, telemetry.receiver(), ctx)?;
            eprintln!("listening on {}", server.local_addr());
            let summary = run_experiment(&cfg, &mut source, &mut telemetry);
            server.shutdown();
            Ok(summary?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            match serde_json::to_string_pretty(&summary) {
                Ok(s) => println!("{s}"),
                Err(e) => eprintln!("warning: cannot print summary: {e}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
