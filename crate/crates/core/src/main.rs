use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use pfc::config::{load_config, SimulationConfig};
use pfc::initial::initial_state;
use pfc::output::{snapshot_path, write_snapshot, write_timeseries};
use pfc::studies::{measure_growth_rate, stability_sweep, temporal_convergence};
use pfc::{FieldState, Integrator, Schedule};

#[derive(Parser)]
#[command(
    name = "pfc",
    version,
    about = "Phase-field crystal simulations with periodic splines"
)]
struct Cli {
    /// Log per-step progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write the time series and snapshots.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Temporal convergence study; prints errors and the fitted slope.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
    },
    /// Energy and mass behaviour over a range of time steps.
    Stability {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        /// Steps taken at each time step size.
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Growth rate of a small seeded mode against the linear prediction.
    Dispersion {
        config: PathBuf,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 1e-6)]
        amplitude: f64,
    },
}

fn initial(config: &SimulationConfig) -> pfc::Result<FieldState> {
    let space = config.params.space()?;
    let mass = pfc::assembly::assemble_mass(&space);
    initial_state(&space, &mass, &config.initial)
}

fn run(config: SimulationConfig, output_dir: Option<PathBuf>) -> Result<(), Box<dyn std::error::Error>> {
    let dir = output_dir.unwrap_or_else(|| PathBuf::from(&config.output_dir));
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut integ = Integrator::new(config.params.clone(), config.mode.policy())?;
    let state = initial_state(integ.space(), &integ.operators().mass, &config.initial)?;
    std::fs::write(dir.join("config.txt"), config.to_text())
        .map_err(|e| format!("{}: {e}", dir.display()))?;
    let schedule = Schedule {
        snapshot_stride: config.snapshot_stride,
    };
    let result = integ.run_with(state, schedule, |s, d| {
        info!(
            "step {} t = {:.6} E = {:.12e} newton = {}",
            s.step, s.time, d.energy.total, d.newton_iterations
        );
    });
    let (out, failure) = match result {
        Ok(out) => (out, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let series = dir.join("timeseries.csv");
    write_timeseries(&out.diagnostics, &series)?;
    let mut snaps = out.snapshots.clone();
    if failure.is_some() {
        snaps.extend(out.final_state.clone());
    }
    for s in &snaps {
        for &f in &config.output_formats {
            write_snapshot(integ.space(), s, &snapshot_path(&dir, s.step, f), f)?;
        }
    }
    if let Some(err) = failure {
        return Err(format!("{err} (partial output in {})", dir.display()).into());
    }
    let last = out.diagnostics.last().expect("initial record");
    println!(
        "steps {}  t = {}  E = {:.12e}  mass = {:.12e}  max dE = {:.3e}  violations {}  halvings {}",
        last.step,
        last.time,
        last.energy.total,
        last.mass,
        out.max_energy_increase.max(0.0),
        out.energy_violations,
        out.step_halvings
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn execute(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    let load = |p: &Path| load_config(p);
    match command {
        Command::Run { config, output_dir } => run(load(&config)?, output_dir),
        Command::Converge { config, dts } => {
            let c = load(&config)?;
            let study = temporal_convergence(&c.params, &initial(&c)?, &dts, c.params.scheme)?;
            println!(
                "scheme {}  reference dt {}",
                study.order.name(),
                study.reference_dt
            );
            println!("dt,error");
            for (dt, e) in study.dts.iter().zip(&study.errors) {
                println!("{dt},{e:.6e}");
            }
            println!("slope {:.4}", study.slope);
            Ok(())
        }
        Command::Stability { config, dts, steps } => {
            let c = load(&config)?;
            let rows = stability_sweep(&c.params, &initial(&c)?, &dts, c.params.scheme, steps)?;
            println!("dt,scheme,steps,max_energy_increase,violations,max_mass_drift");
            for r in rows {
                println!(
                    "{},{},{},{:.6e},{},{:.3e}",
                    r.dt,
                    r.order.name(),
                    r.steps,
                    r.max_energy_increase,
                    r.violations,
                    r.max_mass_drift
                );
            }
            Ok(())
        }
        Command::Dispersion { config, k, amplitude } => {
            let c = load(&config)?;
            let g = measure_growth_rate(&c.params, k, amplitude)?;
            println!(
                "k {}  measured {:.8}  analytic {:.8}  ratio {:.6}",
                g.k,
                g.measured,
                g.analytic,
                g.ratio()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new().filter_level(level).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
