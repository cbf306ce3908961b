//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on simulation errors, 2 on configuration
//! errors. `CORTEXFLOW_JOBS` overrides `--jobs` for sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use cortexflow::config::{self, units, ProtocolChoice, RunConfig};
use cortexflow::output;
use cortexflow::protocols::{self, RunOptions, Trajectory};
use cortexflow::validate;
use cortexflow::Real;

#[derive(Parser)]
#[command(name = "cortexflow", version, about = "2D cortex-flow cell migration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the protocol described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep over channel geometries.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker count; the CORTEXFLOW_JOBS variable takes precedence.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Free-space relaxation protocol for the configured parameters.
    Relax {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite without a long simulation.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convert a value between model and physical units.
    Convert {
        #[arg(long, value_enum)]
        kind: ConvertKind,
        #[arg(long)]
        value: f64,
        #[arg(long, value_enum)]
        to: ConvertTarget,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertKind {
    Length,
    Time,
    Speed,
    ForcePerLength,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTarget {
    Physical,
    Model,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Simulation(msg)) => {
            eprintln!("simulation error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Config(String),
    Simulation(String),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<protocols::ProtocolError> for Failure {
    fn from(e: protocols::ProtocolError) -> Self {
        Failure::Simulation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Simulation(format!("i/o: {e}"))
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = config::parse_config(&read_config(&config)?)?;
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            let traj = execute(&cfg)?;
            write_run_outputs(&cfg, &traj, &out)?;
            println!(
                "run finished: t = {:.3}, {} frames -> {}",
                traj.end_time(),
                traj.frames.len(),
                out.display()
            );
            Ok(())
        }
        Command::Relax { config, out } => {
            let mut cfg = config::parse_config(&read_config(&config)?)?;
            // The relax subcommand forces the free-space protocol.
            cfg.protocol = match cfg.protocol {
                ProtocolChoice::Relax { t_final } => ProtocolChoice::Relax { t_final },
                ProtocolChoice::Channel { .. } => ProtocolChoice::Relax { t_final: 10.0 },
            };
            cfg.geometry = std::sync::Arc::new(cortexflow::geometry::ChannelGeometry::free());
            let out = out.unwrap_or_else(|| PathBuf::from("out"));
            let traj = execute(&cfg)?;
            write_run_outputs(&cfg, &traj, &out)?;
            println!(
                "relaxation finished: t = {:.3}, {} frames -> {}",
                traj.end_time(),
                traj.frames.len(),
                out.display()
            );
            Ok(())
        }
        Command::Sweep { config, out, jobs } => {
            let (proto, grid, jobs_cfg) = config::parse_sweep_config(&read_config(&config)?)?;
            let jobs = std::env::var("CORTEXFLOW_JOBS")
                .ok()
                .and_then(|v| v.parse().ok())
                .or(jobs)
                .unwrap_or(jobs_cfg);
            let started = Instant::now();
            let result = protocols::sweep(&proto, grid, jobs);
            let elapsed = started.elapsed().as_secs_f64();
            output::write_sweep_csv(&result, &out.join("sweep.csv"))?;
            output::write_sweep_summary(&result, jobs, elapsed, &out.join("sweep_summary.json"))?;
            let entered = result.cells.iter().filter(|c| c.entered).count();
            println!(
                "sweep finished: {} cells ({} entered) in {:.1}s on {} workers -> {}",
                result.cells.len(),
                entered,
                elapsed,
                jobs,
                out.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            if let Some(path) = config {
                // Parse first so config errors surface as such.
                config::parse_config(&read_config(&path)?)?;
            }
            let started = Instant::now();
            let results = validate::run_all();
            let mut all_ok = true;
            for check in &results {
                let status = if check.passed { "PASS" } else { "FAIL" };
                println!("[{status}] {} — {}", check.name, check.detail);
                all_ok &= check.passed;
            }
            println!(
                "{} checks in {:.1}s",
                results.len(),
                started.elapsed().as_secs_f64()
            );
            if all_ok {
                Ok(())
            } else {
                Err(Failure::Simulation("invariant checks failed".into()))
            }
        }
        Command::Convert { kind, value, to } => {
            let kind = match kind {
                ConvertKind::Length => units::Kind::Length,
                ConvertKind::Time => units::Kind::Time,
                ConvertKind::Speed => units::Kind::Speed,
                ConvertKind::ForcePerLength => units::Kind::ForcePerLength,
            };
            let direction = match to {
                ConvertTarget::Physical => units::Direction::ToPhysical,
                ConvertTarget::Model => units::Direction::ToModel,
            };
            println!("{}", units::convert(value, kind, direction));
            Ok(())
        }
    }
}

fn execute(cfg: &RunConfig) -> Result<Trajectory<Real>, Failure> {
    let opts = RunOptions {
        frame_stride: cfg.frame_stride,
        solver: cfg.solver,
    };
    let traj = match &cfg.protocol {
        ProtocolChoice::Relax { t_final } => {
            protocols::relax_free(&cfg.params, cfg.n, *t_final, &opts)?
        }
        ProtocolChoice::Channel { entry, t_final } => protocols::run_channel(
            &cfg.params,
            cfg.n,
            cfg.geometry.clone(),
            entry,
            *t_final,
            &opts,
        )?,
    };
    Ok(traj)
}

fn write_run_outputs(
    cfg: &RunConfig,
    traj: &Trajectory<Real>,
    out: &Path,
) -> Result<(), Failure> {
    output::write_trajectory(traj, &out.join("trajectory.csv"))?;
    output::write_plotdata(traj, &out.join("plotdata.csv"))?;
    output::write_energies_jsonl(traj, &out.join("energies.jsonl"))?;
    if !cfg.geometry.is_free() {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        for frame in &traj.frames {
            for p in frame.positions() {
                x_lo = x_lo.min(p.x);
                x_hi = x_hi.max(p.x);
            }
        }
        output::write_walls(
            &cfg.geometry,
            x_lo - 0.1,
            x_hi + 0.1,
            1025,
            &out.join("walls.csv"),
        )?;
    }
    Ok(())
}
