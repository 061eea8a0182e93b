use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relpose::harness::{export, run_scenario, write_sweep_csv, RunConfig, RunOutput};
use relpose::observability::{load_trace_csv, sweep_observability};
use relpose::riccati::OutputMode;
use relpose::Error;

/// Relative pose-velocity estimation: ship-landing simulator and observability sweeps.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output mode; selects the matching ship-landing defaults when no config is given.
    #[arg(long, global = true)]
    mode: Option<OutputMode>,
    /// Simulated time span (s).
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Integration step (s).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Observability window length δ (s).
    #[arg(long, global = true)]
    sweep_delta: Option<f64>,
    /// Output directory for CSV/JSON files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the measurement-noise generator.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario and export telemetry (default).
    Run,
    /// Sliding-window observability sweep, on a simulated run or on a recorded trace.
    Sweep {
        /// Trace CSV with columns t,a_tz_x,a_tz_y,a_tz_z[,y0_x,y0_y,y0_z].
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> relpose::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::ship_landing(cli.mode.unwrap_or(OutputMode::Position)),
    };
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    if let Some(d) = cli.duration {
        cfg.duration = d;
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    if let Some(delta) = cli.sweep_delta {
        cfg.sweep.delta = delta;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(out: &RunOutput) {
    let s = &out.summary;
    println!(
        "{} mode: {} steps, ‖x̃‖ {:.3e} → {:.3e}, attitude error {:.3e} rad",
        s.mode, s.steps, s.initial_error_norm, s.final_error_norm, s.final_attitude_error_rad
    );
    for p in &s.phases {
        println!(
            "  phase {} [{:.3}, {:.3}]: ‖x̃‖ {:.3e} → {:.3e}, slope {:+.4}/s ({:?})",
            p.index, p.t_start, p.t_end, p.error_start, p.error_end, p.slope_log_error, p.classification
        );
    }
}

fn run(cli: &Cli) -> relpose::Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        None | Some(Command::Run) => {
            let out = run_scenario(&cfg)?;
            print_summary(&out);
            if let Some(dir) = &cfg.out_dir {
                let files = export(&out, dir)?;
                println!("wrote {}", files.records.display());
            }
        }
        Some(Command::Sweep { trace }) => {
            let report = match trace {
                Some(path) => {
                    let (a_tz, y0) = load_trace_csv(path)?;
                    sweep_observability(
                        cfg.mode,
                        &a_tz,
                        y0.as_ref(),
                        &cfg.sweep,
                        &cfg.scenario,
                        Default::default(),
                    )?
                }
                None => {
                    let mut cfg = cfg.clone();
                    cfg.sweep.enabled = true;
                    run_scenario(&cfg)?.sweep.expect("sweep enabled")
                }
            };
            match &cfg.out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join("sweep.csv");
                    write_sweep_csv(&report, std::fs::File::create(&path)?)?;
                    println!("wrote {} ({} windows)", path.display(), report.windows.len());
                }
                None => {
                    let stdout = std::io::stdout();
                    write_sweep_csv(&report, stdout.lock())?;
                    stdout.lock().flush()?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Toml(_) => 2,
                Error::NonPositiveP { .. } => 3,
                _ => 1,
            })
        }
    }
}
