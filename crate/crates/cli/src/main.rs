use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use trailer_lab::commands;
use trailer_lab::error::{exit, status_exit_code, AppError};
use trailer_lab::manifest::{Preset, RunManifest};
use trailer_lab::service;
use trailer_lab_core::lqr::{LqWeights, DEFAULT_GRID_COUNT};
use trailer_lab_core::model::VehicleParams;
use trailer_lab_core::sim::roa::RoaGridSpec;

/// Reversing truck, dolly and trailer: simulation, gain schedules and
/// region-of-attraction maps.
#[derive(Debug, Parser)]
#[command(name = "trailer-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
struct ScenarioSource {
    /// Scenario or run manifest JSON.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

impl ScenarioSource {
    fn load(&self, fallback: Preset) -> Result<RunManifest, AppError> {
        match (&self.scenario, self.preset) {
            (Some(path), _) => RunManifest::load(path),
            (None, Some(p)) => Ok(RunManifest::new(p.scenario())),
            (None, None) => Ok(RunManifest::new(fallback.scenario())),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its trace and report.
    ///
    /// Exit status: 0 goal reached, 2 jackknifed, 3 timed out,
    /// 4 invalid input, 1 I/O failure.
    Simulate {
        #[command(flatten)]
        source: ScenarioSource,
        /// Output directory; defaults to the manifest's, then `out`.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Solve the gain schedule and write schedule.json and gains.csv.
    Schedule {
        /// Take vehicle parameters and weights from this scenario.
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        /// Number of linearization points, odd.
        #[arg(long, default_value_t = DEFAULT_GRID_COUNT)]
        grid: usize,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Map the region of attraction around the straight reversing line.
    Roa {
        #[command(flatten)]
        source: ScenarioSource,
        /// Cells per axis, odd.
        #[arg(long, default_value_t = RoaGridSpec::default().count)]
        grid: usize,
        /// Half-width of both axes, radians.
        #[arg(long, default_value_t = RoaGridSpec::default().half_width)]
        half_width: f64,
        /// Worker threads; the map does not depend on this.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Serve the HTTP/WebSocket API and the static GUI assets.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory of static assets served at `/`.
        #[arg(long, value_name = "DIR")]
        static_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<u8, AppError> {
    match cli.command {
        Command::Simulate { source, out } => {
            let manifest = source.load(Preset::Eight)?;
            let out = out.or_else(|| manifest.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let run = commands::simulate(&manifest, &out)?;
            let r = &run.outcome.report;
            println!(
                "status {:?}, {} rows, trailer mean {:.4} m max {:.4} m",
                r.status,
                run.outcome.trace.rows.len(),
                r.trailer.mean_error,
                r.trailer.max_error
            );
            for path in &run.written {
                println!("wrote {}", path.display());
            }
            Ok(status_exit_code(run.status()))
        }
        Command::Schedule { scenario, grid, out } => {
            let (params, weights) = match scenario {
                Some(path) => {
                    let s = RunManifest::load(&path)?.scenario;
                    (s.params, s.weights)
                }
                None => (VehicleParams::test_platform(), LqWeights::default()),
            };
            let schedule = commands::schedule(&params, &weights, grid, &out)?;
            println!(
                "{} points up to alpha_e = {:.6} rad, written to {}",
                schedule.grid.len(),
                schedule.max_alpha_e(),
                out.display()
            );
            Ok(exit::GOAL_REACHED)
        }
        Command::Roa { source, grid, half_width, parallel, out } => {
            let base = source.load(Preset::Roa)?.scenario;
            let spec = RoaGridSpec { count: grid, half_width };
            let map = commands::roa(&base, &spec, parallel, &out)?;
            println!("converged fraction {:.6}, written to {}", map.converged_fraction, out.display());
            Ok(exit::GOAL_REACHED)
        }
        Command::Serve { bind, static_dir } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::io("starting runtime", e))?;
            runtime
                .block_on(service::serve(bind, static_dir))
                .map_err(|e| AppError::io(format!("serving on {bind}"), e))?;
            Ok(exit::GOAL_REACHED)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("TRAILER_LAB_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    // clap's own usage-error status would collide with the jackknife code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { exit::CONFIG } else { exit::GOAL_REACHED });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
