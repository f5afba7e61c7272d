//! Command-line front end for the geometric mechanics engine.
//!
//! Exit code is 0 iff every declared expectation and check passes; a report
//! is always emitted.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mechkit::cli::{
    self, parse_bindings, parse_tspan, run_check, run_check_all, run_derive, run_export,
    run_geodesic, run_hj, run_list, run_simulate, run_symmetry, run_validate, OutputFormat,
    RunReport, SimulateOptions,
};
use mechkit::Result;

#[derive(Parser)]
#[command(
    name = "mechkit",
    about = "Derive, integrate, and verify Lagrangian/Hamiltonian dynamics in the symplectic, cosymplectic, contact, and unified formalisms",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in registry systems.
    List,
    /// Print a registry entry in the JSON system-file schema.
    Export {
        /// Registry id.
        #[arg(long)]
        system: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Validate a system file (or registry id) against the schema.
    Validate {
        #[arg(long)]
        system: String,
    },
    /// Evaluate the dynamical vector field and diagnostics at one point.
    Derive {
        /// System file path or registry id.
        #[arg(long)]
        system: String,
        /// Phase point overrides, `name=value,...`; unset variables fall
        /// back to the system's initial conditions.
        #[arg(long, default_value = "")]
        point: String,
        /// Write the report to a file as well as stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Integrate a trajectory and verify the declared expectations.
    Simulate {
        #[arg(long)]
        system: String,
        /// Time span `a,b`.
        #[arg(long)]
        tspan: String,
        /// Output grid spacing.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Integrator tolerance (absolute and relative).
        #[arg(long)]
        tol: Option<f64>,
        /// Use fixed-step RK4 with this step instead of the adaptive pair.
        #[arg(long)]
        rk4: Option<f64>,
        #[arg(long, default_value = "")]
        point: String,
        /// Trajectory output path; without it the trajectory is printed.
        #[arg(long)]
        out: Option<String>,
        /// Trajectory format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the full invariant battery for one system or the whole registry.
    Check {
        #[arg(long, conflicts_with = "all")]
        system: Option<String>,
        /// Check every registry system (fans out across threads).
        #[arg(long)]
        all: bool,
        #[arg(long, default_value = "0,10")]
        tspan: String,
    },
    /// Symmetry verification: Noether residuals and the dynamical bracket.
    Symmetry {
        #[arg(long)]
        system: String,
        /// A declared symmetry name, or componentwise expressions
        /// `Y1,Y2,...` over the phase layout.
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Hamilton-Jacobi residual of a generating function on a grid.
    Hj {
        #[arg(long)]
        system: String,
        /// Generating function S over the base coordinates.
        #[arg(long)]
        s: String,
        /// Sampling grid, `name=start:stop:count[,...]`.
        #[arg(long)]
        grid: String,
        /// Extra parameter bindings for the generating function,
        /// `name=value,...`.
        #[arg(long, default_value = "")]
        param: String,
    },
    /// Integrate a geodesic of a riemann-newton system (force dropped).
    Geodesic {
        #[arg(long)]
        system: String,
        #[arg(long, default_value = "")]
        point: String,
        #[arg(long)]
        tspan: String,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
}

fn emit(report: &RunReport, extra_out: Option<&str>) -> Result<()> {
    let text = report.to_json_pretty();
    println!("{text}");
    if let Some(path) = extra_out {
        std::fs::write(path, &text)
            .map_err(|e| mechkit::MechError::Validation(format!("cannot write `{path}`: {e}")))?;
    }
    Ok(())
}

fn run(args: Args) -> Result<bool> {
    match args.command {
        Command::List => {
            println!(
                "{}",
                serde_json::to_string_pretty(&run_list()).expect("list serializes")
            );
            Ok(true)
        }
        Command::Export { system, out } => {
            let text = run_export(&system)?;
            match out {
                Some(path) => std::fs::write(&path, &text).map_err(|e| {
                    mechkit::MechError::Validation(format!("cannot write `{path}`: {e}"))
                })?,
                None => println!("{text}"),
            }
            Ok(true)
        }
        Command::Validate { system } => {
            let report = run_validate(&system)?;
            emit(&report, None)?;
            Ok(report.pass)
        }
        Command::Derive { system, point, out } => {
            let overrides = parse_bindings(&point)?;
            let report = run_derive(&system, &overrides)?;
            emit(&report, out.as_deref())?;
            Ok(report.pass)
        }
        Command::Simulate {
            system,
            tspan,
            dt,
            tol,
            rk4,
            point,
            out,
            format,
        } => {
            let format = match format.as_str() {
                "csv" => OutputFormat::Csv,
                "json" => OutputFormat::Json,
                other => {
                    return Err(mechkit::MechError::Validation(format!(
                        "unknown format `{other}` (expected csv or json)"
                    )))
                }
            };
            let opts = SimulateOptions {
                tspan: parse_tspan(&tspan)?,
                dt_out: dt,
                tol,
                rk4_dt: rk4,
                point: parse_bindings(&point)?,
                out_path: out.clone(),
                format,
            };
            let (report, traj) = run_simulate(&system, &opts)?;
            let spec = cli::load_system(&system)?;
            let rendered = match format {
                OutputFormat::Csv => cli::trajectory_csv(&spec, &traj)?,
                OutputFormat::Json => cli::trajectory_json(&spec, &traj)?,
            };
            match &out {
                Some(path) => std::fs::write(path, &rendered).map_err(|e| {
                    mechkit::MechError::Validation(format!("cannot write `{path}`: {e}"))
                })?,
                None => println!("{rendered}"),
            }
            emit(&report, None)?;
            Ok(report.pass)
        }
        Command::Check { system, all, tspan } => {
            let span = parse_tspan(&tspan)?;
            if all {
                let reports = run_check_all(span)?;
                let mut pass = true;
                for report in &reports {
                    emit(report, None)?;
                    pass &= report.pass;
                }
                Ok(pass)
            } else {
                let system = system.ok_or_else(|| {
                    mechkit::MechError::Validation("--system or --all is required".into())
                })?;
                let report = run_check(&system, span)?;
                emit(&report, None)?;
                Ok(report.pass)
            }
        }
        Command::Symmetry {
            system,
            generator,
            samples,
        } => {
            let report = run_symmetry(&system, &generator, samples)?;
            emit(&report, None)?;
            Ok(report.pass)
        }
        Command::Hj {
            system,
            s,
            grid,
            param,
        } => {
            let report = run_hj(&system, &s, &grid, &parse_bindings(&param)?)?;
            emit(&report, None)?;
            Ok(report.pass)
        }
        Command::Geodesic {
            system,
            point,
            tspan,
            dt,
        } => {
            let overrides = parse_bindings(&point)?;
            let (report, _traj) = run_geodesic(&system, &overrides, parse_tspan(&tspan)?, dt)?;
            emit(&report, None)?;
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
