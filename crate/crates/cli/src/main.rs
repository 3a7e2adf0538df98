mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{Command, RunConfig};
use output::RunDir;

/// Output root used when neither `--out` nor `output.dir` is given.
const OUTPUT_ROOT_ENV: &str = "FLUXCZ_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "fluxcz", version, about = "Parametric CZ gates on fluxonium qubits with a tunable transmon coupler")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single-circuit spectra and charge matrix elements.
    Spectrum(Common),
    /// State-dependent plasmon shifts and ZZ against coupler flux.
    ShiftScan(Common),
    /// Population against drive frequency and time.
    Chevron(Common),
    /// Population against drive frequency and amplitude at fixed time.
    Amplitude(Common),
    /// Floquet transition frequency and strength against amplitude.
    Floquet(Common),
    /// Optimized CZ gate at one gate length.
    GateOpt(Common),
    /// Optimized CZ gates across gate lengths and ramp times.
    GateSweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir`, then `$FLUXCZ_OUTPUT_ROOT/<config>/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Integrator step in picoseconds, overriding `numerics.dt_ps`.
    #[arg(long)]
    dt: Option<f64>,
    /// Keep finished points from an earlier run in the same directory.
    #[arg(long)]
    resume: bool,
    #[arg(long, env = OUTPUT_ROOT_ENV, hide_env_values = true, default_value = "runs")]
    output_root: PathBuf,
}

fn split(cmd: Cmd) -> (Command, Common) {
    match cmd {
        Cmd::Spectrum(c) => (Command::Spectrum, c),
        Cmd::ShiftScan(c) => (Command::ShiftScan, c),
        Cmd::Chevron(c) => (Command::Chevron, c),
        Cmd::Amplitude(c) => (Command::Amplitude, c),
        Cmd::Floquet(c) => (Command::Floquet, c),
        Cmd::GateOpt(c) => (Command::GateOpt, c),
        Cmd::GateSweep(c) => (Command::GateSweep, c),
    }
}

fn out_dir(cmd: Command, args: &Common, cfg: &RunConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(dir) = &cfg.output.dir {
        return PathBuf::from(dir);
    }
    let stem = args.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    args.output_root.join(stem).join(cmd.name())
}

fn execute(cmd: Command, args: Common) -> Result<bool> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dt) = args.dt {
        cfg.numerics.dt_ps = dt;
    }
    cfg.validate(cmd)?;
    if args.workers == Some(0) {
        bail!("--workers: must be at least 1");
    }
    let dir = out_dir(cmd, &args, &cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers.unwrap_or(0)).build().context("starting workers")?;
    let run = RunDir::create(dir)?;
    let outcome = pool.install(|| commands::run(cmd, &cfg, &run, args.resume))?;
    for f in &outcome.failures {
        log::error!("{}: {}", f.point, f.error);
    }
    println!(
        "{}: {} points, {} failed, output in {}",
        cmd.name(),
        outcome.points,
        outcome.failures.len(),
        run.path.display()
    );
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (cmd, args) = split(cli.command);
    match execute(cmd, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
