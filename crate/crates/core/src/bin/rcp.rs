use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rcp_core::harness::{
    load_scenario_with, load_sweep, render_equilibrium, run_check, run_sweep, write_trace_file, Overrides,
};
use rcp_core::sim::{detect_oscillation, simulate, Classification};
use rcp_core::Error;

#[derive(Parser)]
#[command(name = "rcp", version, about = "RCP fluid-model stability analysis and simulation")]
struct Cli {
    #[command(flatten)]
    overrides: OverrideArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OverrideArgs {
    /// Relative convergence tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Integration step in seconds.
    #[arg(long, global = true)]
    step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the equilibrium of a scenario.
    Equilibrium { scenario: PathBuf },
    /// Evaluate every stability condition for a single-link scenario.
    Check { scenario: PathBuf },
    /// Integrate a scenario.
    Simulate {
        scenario: PathBuf,
        /// Write the trajectory as CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Print the trajectory classification.
        #[arg(long)]
        classify: bool,
    },
    /// Run a parameter sweep and emit one CSV row per grid point.
    Sweep {
        spec: PathBuf,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let overrides = Overrides {
        step: cli.overrides.step,
        horizon: cli.overrides.horizon,
        tol: cli.overrides.tol,
    };
    let mut stdout = io::stdout().lock();
    let io_err = |e: io::Error| Error::Io {
        path: "<stdout>".into(),
        message: e.to_string(),
    };
    match cli.command {
        Command::Equilibrium { scenario } => {
            let s = load_scenario_with(&scenario, &overrides)?;
            write!(stdout, "{}", render_equilibrium(&s)?).map_err(io_err)?;
        }
        Command::Check { scenario } => {
            let s = load_scenario_with(&scenario, &overrides)?;
            write!(stdout, "{}", run_check(&s)?).map_err(io_err)?;
        }
        Command::Simulate {
            scenario,
            trace_out,
            classify,
        } => {
            let s = load_scenario_with(&scenario, &overrides)?;
            let trace = simulate(&s.network, &s.sim)?;
            writeln!(stdout, "scenario: {}", s.label).map_err(io_err)?;
            writeln!(
                stdout,
                "samples: {} (step {}, horizon {})",
                trace.len(),
                trace.step,
                trace.horizon
            )
            .map_err(io_err)?;
            for (id, y) in trace.link_ids.iter().zip(trace.final_aggregates()) {
                writeln!(stdout, "final y_{id} = {y:.16e}").map_err(io_err)?;
            }
            if classify {
                let line = match trace.classification {
                    Classification::Converged { settling_time } => {
                        format!("converged (settling time {settling_time:.6})")
                    }
                    Classification::Oscillating { amplitude, period } => {
                        format!("oscillating (amplitude {amplitude:.6e}, period {period:.6})")
                    }
                    Classification::BlowUp { t_fail } => format!("blow-up at t = {t_fail:.6}"),
                    Classification::Undetermined => {
                        let osc = detect_oscillation(&trace, &trace.reference, trace.convergence_tol);
                        format!("undetermined (tail amplitude {:.6e})", osc.amplitude)
                    }
                };
                writeln!(stdout, "classification: {line}").map_err(io_err)?;
            }
            if let Some(path) = trace_out {
                write_trace_file(&trace, &path)?;
            }
        }
        Command::Sweep { spec, out, workers } => {
            let spec = load_sweep(&spec, &overrides)?;
            let result = run_sweep(&spec, workers)?;
            for (row, i) in result.rows.iter().zip(0..) {
                for e in &row.errors {
                    eprintln!("point {i} {:?}: {e}", row.values);
                }
            }
            match out {
                Some(path) => {
                    let file = File::create(&path).map_err(|e| Error::Io {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    result.write_csv(BufWriter::new(file))?;
                }
                None => result.write_csv(&mut stdout)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
