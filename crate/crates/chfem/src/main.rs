//! Command-line entry point: configure, integrate, study, audit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chfem::config::{parse_config, RunConfig};
use chfem::harness::{
    convergence_study, projection_study, stability_probe, ConvergenceReport, StudyMode, StudySpec,
};
use chfem::integrator::{run, Trajectory};
use chfem::output::{
    diagnose, write_convergence_report, write_projection_report, write_stability_report,
    write_trajectory,
};
use chfem::Result;

#[derive(Parser)]
#[command(
    name = "chfem",
    version,
    about = "Mixed finite-element solver for the Cahn-Hilliard equation with \
             concentration-dependent mobility, with convergence and stability studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Refine space and time together (tau_k = tau_factor · h_k).
    Full,
    /// Refine space only, at a shared small time step.
    Semi,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configured run and write a trajectory directory.
    Run {
        /// Path to a TOML run configuration.
        #[arg(short, long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Nested-grid convergence study; each row compares level k with k+1.
    Converge {
        /// Optional TOML run configuration (model, initial state, solver);
        /// defaults to the built-in reference setup.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        k_min: u32,
        #[arg(long, default_value_t = 2)]
        k_max: u32,
        /// Final time of every run in the study.
        #[arg(long = "T", default_value_t = 0.16)]
        t_final: f64,
        /// Fully discrete mode: tau_k = tau_factor · h_k.
        #[arg(long, default_value_t = 0.16)]
        tau_factor: f64,
        /// Semi-discrete mode: shared step tau* = tau_factor · 2^-exp.
        #[arg(long, default_value_t = 9)]
        tau_star_exp: i32,
        /// Report CSV path (a .header.toml sidecar is written next to it).
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Measure projection orders (L² projection, H¹ projection, potential
    /// reconstruction) over a level range.
    ProjectStudy {
        /// TOML run configuration providing the model parameters.
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        k_min: u32,
        #[arg(long, default_value_t = 3)]
        k_max: u32,
        /// Report CSV path.
        #[arg(short, long, default_value = "projection_orders.csv")]
        out: PathBuf,
    },
    /// Audit a written trajectory directory: conservation diagnostics plus a
    /// recomputation of mass/energy/dissipation from the stored fields.
    Diagnose {
        /// Trajectory directory (as written by `run`).
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Rerun the configured problem with perturbed initial data and report
    /// the relative energy between the runs over time.
    StabilityProbe {
        /// TOML run configuration.
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated perturbation amplitudes.
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        eps: Vec<f64>,
        /// Output directory for the probe CSVs.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => {
            let cfg = parse_config(&config)?;
            let space = cfg.space()?;
            let phi0 = cfg.initial_field(&space)?;
            let traj = run(&space, &cfg.model, cfg.grid, cfg.solver, phi0)?;
            write_trajectory(&out, &cfg, &traj)?;
            print_run_summary(&traj);
            println!("wrote {}", out.display());
            match traj.failure {
                Some(msg) => Err(chfem::Error::IncompleteTrajectory(msg)),
                None => Ok(()),
            }
        }
        Command::Converge {
            config,
            mode,
            k_min,
            k_max,
            t_final,
            tau_factor,
            tau_star_exp,
            out,
        } => {
            let cfg = match config {
                Some(path) => parse_config(path)?,
                None => RunConfig::reference(),
            };
            let spec = StudySpec {
                k_min,
                k_max,
                mode: match mode {
                    ModeArg::Full => StudyMode::FullyDiscrete,
                    ModeArg::Semi => StudyMode::SemiDiscrete,
                },
                t_final,
                tau_factor,
                tau_star: tau_factor * 2f64.powi(-tau_star_exp),
            };
            let report = convergence_study(&cfg, &spec)?;
            print_report(&report);
            write_convergence_report(&out, &report)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::ProjectStudy {
            config,
            k_min,
            k_max,
            out,
        } => {
            let cfg = parse_config(&config)?;
            let report = projection_study(&cfg.model, k_min, k_max)?;
            println!("level  e_l2          eoc    e_h1          eoc    e_mu_hat      eoc");
            for r in &report.rows {
                println!(
                    "{:<6} {:<13.6e} {:<6} {:<13.6e} {:<6} {:<13.6e} {}",
                    r.level,
                    r.l2_error,
                    fmt_rate(r.l2_eoc),
                    r.h1_error,
                    fmt_rate(r.h1_eoc),
                    r.mu_hat_error,
                    fmt_rate(r.mu_hat_eoc),
                );
            }
            write_projection_report(&out, &report)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Diagnose { input } => {
            let summary = diagnose(&input)?;
            println!("{summary}");
            Ok(())
        }
        Command::StabilityProbe { config, eps, out } => {
            let cfg = parse_config(&config)?;
            let report = stability_probe(&cfg, &eps)?;
            println!("epsilon       E_rel(T)      amplification  eoc");
            for (i, &e) in report.epsilons.iter().enumerate() {
                println!(
                    "{:<13.6e} {:<13.6e} {:<14.6e} {}",
                    e,
                    report.final_values[i],
                    report.amplification[i],
                    fmt_rate(report.eoc[i]),
                );
            }
            write_stability_report(&out, &report)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "---".to_string(), |v| format!("{v:.2}"))
}

fn print_run_summary(traj: &Trajectory) {
    let d = &traj.diagnostics;
    let first = &d[0];
    let last = d.last().expect("diagnostics cover at least the initial node");
    let mass_drift = d
        .iter()
        .map(|r| (r.mass - first.mass).abs())
        .fold(0.0f64, f64::max);
    let identity = d
        .iter()
        .map(|r| (r.energy + r.cumulative_dissipation - first.energy).abs())
        .fold(0.0f64, f64::max);
    println!(
        "integrated {} step(s) to t = {:.6e}",
        traj.completed_steps(),
        last.t
    );
    println!("  energy {:.6e} -> {:.6e}", first.energy, last.energy);
    println!("  mass drift {:.3e}, energy identity defect {:.3e}", mass_drift, identity);
    if let Some(msg) = &traj.failure {
        eprintln!("  run stopped early: {msg}");
    }
}

fn print_report(report: &ConvergenceReport) {
    println!("{} study", report.kind);
    println!("k      h            tau          e             eoc");
    for row in &report.rows {
        println!(
            "{:<6} {:<12.6e} {:<12.6e} {:<13.6e} {}",
            row.k,
            row.h,
            row.tau,
            row.error,
            fmt_rate(row.eoc),
        );
    }
}
