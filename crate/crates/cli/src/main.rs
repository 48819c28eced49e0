//! `eyerofeedback`: study service, simulator and analysis front end.

mod commands;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eyero_core::analysis::{GridSize, Metric};

#[derive(Debug, Parser)]
#[command(name = "eyerofeedback", version, about = "Gaze-contingent tactile feedback study toolkit")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the study service for one participant.
    Serve(ServeArgs),
    /// Run virtual participants through the full study.
    Simulate(SimulateArgs),
    /// Statistics over exported tables or raw session logs.
    Analyze(AnalyzeArgs),
    /// Re-derive intents and outcomes from session logs and check them.
    Replay(ReplayArgs),
    /// Convert session logs into CSV tables.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActuatorKind {
    Serial,
    Mock,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    participant: String,
    /// Seed for the session order and trial plans.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "127.0.0.1:8765")]
    listen: String,
    #[arg(long, value_enum, default_value = "mock")]
    actuator: ActuatorKind,
    #[arg(long, required_if_eq("actuator", "serial"))]
    serial_port: Option<String>,
    #[arg(long, default_value_t = 115_200)]
    baud: u32,
    #[arg(long, env = "EYEROFEEDBACK_LOG_DIR", default_value = "logs")]
    log_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    participants: usize,
    #[arg(long)]
    seed: u64,
    /// Agent parameter file (`key = value` lines); defaults otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory with exported tables, or a directory of session logs.
    #[arg(long)]
    input: PathBuf,
    /// Entropy grid as ROWSxCOLS.
    #[arg(long, default_value = "8x8")]
    grid: GridSize,
    /// Metric to report (rt, missed, accuracy, entropy); repeatable. All
    /// four by default.
    #[arg(long)]
    metric: Vec<Metric>,
    /// Write summary, heatmap, per-session metrics and the report here.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// A session log file or a directory of them.
    #[arg(long)]
    log: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    log_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let res = match cli.command {
        Command::Serve(a) => serve::run(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Replay(a) => commands::replay(a),
        Command::Export(a) => commands::export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
