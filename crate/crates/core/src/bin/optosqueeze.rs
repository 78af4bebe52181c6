use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use optosqueeze::config::RunConfig;
use optosqueeze::harness;

#[derive(Parser)]
#[command(
    version,
    about = "Two-tone dissipative squeezing: simulation, Krotov optimization and duration sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One protocol through the configured engine and mode.
    Simulate(Io),
    /// Krotov optimization with RWA and full re-evaluation.
    Optimize(Io),
    /// Several protocols side by side.
    Compare(Io),
    /// Best squeezing versus protocol duration.
    QslSweep(Io),
    /// Same pulses under reduced cavity decay.
    KappaStudy(Io),
}

type Handler = fn(&RunConfig, &Path) -> optosqueeze::Result<String>;

fn run(cli: Cli) -> optosqueeze::Result<String> {
    let (io, f): (&Io, Handler) = match &cli.command {
        Command::Simulate(io) => (io, |c, o| {
            Ok(serde_json::to_string_pretty(&harness::cmd_simulate(c, o)?)?)
        }),
        Command::Optimize(io) => (io, |c, o| {
            let s = harness::cmd_optimize(c, o)?;
            Ok(format!(
                "J_T {:.6e} -> {:.6e}; max squeezing rwa {:.3} dB, full {:.3} dB",
                s.j_t_guess, s.j_t_final, s.final_rwa.max_db, s.final_full.max_db
            ))
        }),
        Command::Compare(io) => (io, |c, o| {
            Ok(serde_json::to_string_pretty(&harness::cmd_compare(c, o)?)?)
        }),
        Command::QslSweep(io) => (io, |c, o| {
            let s = harness::cmd_qsl_sweep(c, o)?;
            Ok(format!(
                "{} durations; shortest above {} dB: {:?} s",
                s.points.len(),
                s.threshold_db,
                s.smallest_t_above_threshold_s
            ))
        }),
        Command::KappaStudy(io) => (io, |c, o| {
            Ok(serde_json::to_string_pretty(&harness::cmd_kappa_study(
                c, o,
            )?)?)
        }),
    };
    let cfg = RunConfig::load(&io.config)?;
    f(&cfg, &io.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
