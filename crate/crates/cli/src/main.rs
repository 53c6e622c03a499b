//! Command-line front end for the boundary-cooling solver and optimizer.
//!
//! Three subcommands share one flat key=value configuration format:
//! `simulate` runs the forward solver with a fixed boundary coefficient,
//! `optimize` searches the admissible box for a cost-minimizing coefficient,
//! and `verify` runs built-in consistency checks against the configured
//! problem. All output files are deterministic for a fixed config and seed.
//!
//! Exit codes: 0 success (including optimize runs that stop without
//! converging; see `converged` in report.json), 1 I/O or internal failure,
//! 2 invalid configuration, 3 solver failure such as a diverging field,
//! 4 one or more verification checks failed.

mod checks;
mod config;
mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thermistor_core::{
    adjoint_solve, constant_control_sweep, cost, energy_bound_report, forward_backward_sweep,
    forward_solve, projected_gradient_descent, BoundaryControl, CostBreakdown, EnergyBoundReport,
    OptimalityReport,
};

use config::{mode_name, ConfigErrors, Driver, RunConfig};

#[derive(Parser)]
#[command(
    name = "thermistor",
    version,
    about = "Simulate and optimize boundary cooling for a nonlocally heated rod"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the forward solver with a fixed boundary coefficient
    Simulate(RunArgs),
    /// Search for a cost-minimizing boundary coefficient
    Optimize(RunArgs),
    /// Run the built-in consistency checks against the configured problem
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a key = value configuration file
    #[arg(long)]
    config: PathBuf,

    /// Output directory (overrides the config's out_dir; default ".")
    #[arg(long)]
    out: Option<PathBuf>,

    /// Scheme variant, "paper" or "consistent" (overrides the config)
    #[arg(long)]
    mode: Option<String>,

    /// Seed for the randomized checks (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => classify_error(&err),
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, dir) = prepare(&args)?;
            cmd_simulate(&cfg, &dir)?;
            Ok(0)
        }
        Command::Optimize(args) => {
            let (cfg, dir) = prepare(&args)?;
            cmd_optimize(&cfg, &dir)?;
            Ok(0)
        }
        Command::Verify(args) => {
            let (cfg, dir) = prepare(&args)?;
            Ok(if cmd_verify(&cfg, &dir)? { 0 } else { 4 })
        }
    }
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let cfg =
        config::load_config(&args.config, args.mode.as_deref(), args.seed, args.out.clone())?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok((cfg, dir))
}

fn classify_error(err: &anyhow::Error) -> i32 {
    if let Some(cfg) = err.downcast_ref::<ConfigErrors>() {
        eprintln!("invalid configuration:");
        for violation in &cfg.0 {
            eprintln!("  - {violation}");
        }
        return 2;
    }
    if let Some(core) = err.downcast_ref::<thermistor_core::Error>() {
        eprintln!("error: {core}");
        return match core {
            thermistor_core::Error::Config(_) => 2,
            _ => 3,
        };
    }
    eprintln!("error: {err:#}");
    1
}

#[derive(Serialize)]
struct GridEcho {
    n_elements: usize,
    time_step: f64,
    horizon: f64,
}

impl GridEcho {
    fn of(cfg: &RunConfig) -> GridEcho {
        GridEcho {
            n_elements: cfg.params.n_elements,
            time_step: cfg.params.time_step,
            horizon: cfg.params.horizon,
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    mode: &'static str,
    beta: f64,
    grid: GridEcho,
    final_time: f64,
    last_step_change: f64,
    cost: CostBreakdown,
    energy: EnergyBoundReport,
    final_x: Vec<f64>,
    final_u: Vec<f64>,
}

fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let beta = BoundaryControl::Constant(cfg.beta0);
    let u = forward_solve(&cfg.params, &beta, cfg.mode)?;
    output::write_field_csv(&dir.join("u.csv"), "u", &u)?;

    let levels = u.num_levels();
    let last_step_change = u
        .level(levels - 1)
        .iter()
        .zip(u.level(levels - 2))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let summary = SimulateSummary {
        mode: mode_name(cfg.mode),
        beta: cfg.beta0,
        grid: GridEcho::of(cfg),
        final_time: cfg.params.horizon,
        last_step_change,
        cost: cost(&cfg.params, &beta, &u),
        energy: energy_bound_report(&cfg.params, &u),
        final_x: u.mesh().nodes().to_vec(),
        final_u: u.last().to_vec(),
    };
    output::write_json(&dir.join("summary.json"), &summary)?;

    println!(
        "simulate: {} levels on {} elements ({} mode, beta {:.6e})",
        levels,
        cfg.params.n_elements,
        mode_name(cfg.mode),
        cfg.beta0
    );
    println!(
        "final cost {:.12e}; last-step change {:.3e}",
        summary.cost.total, last_step_change
    );
    println!("wrote u.csv, summary.json to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReportFile<'a> {
    mode: &'static str,
    driver: &'static str,
    tolerance: f64,
    max_iter: usize,
    grid: GridEcho,
    report: &'a OptimalityReport,
}

fn cmd_optimize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let start = BoundaryControl::Constant(cfg.beta0);
    let report = match cfg.driver {
        Driver::Sweep => forward_backward_sweep(
            &cfg.params,
            &start,
            cfg.mode,
            cfg.tolerance,
            cfg.max_iter,
            cfg.relaxation,
        )?,
        Driver::ProjectedGradient => projected_gradient_descent(
            &cfg.params,
            &start,
            cfg.mode,
            cfg.step,
            cfg.tolerance,
            cfg.max_iter,
        )?,
        Driver::ConstantBeta => constant_control_sweep(
            &cfg.params,
            cfg.beta0,
            cfg.mode,
            cfg.tolerance,
            cfg.max_iter,
            cfg.relaxation,
            cfg.constant_window,
        )?,
        Driver::SimulateOnly => {
            return Err(ConfigErrors(vec![
                "driver 'simulate_only' is not valid for optimize; use the simulate command"
                    .into(),
            ])
            .into())
        }
    };

    let u = forward_solve(&cfg.params, &report.control, cfg.mode)?;
    let phi = adjoint_solve(&cfg.params, &report.control, &u, cfg.mode)?;
    output::write_beta_csv(&dir.join("beta.csv"), &report.control, cfg.params.time_step)?;
    output::write_cost_history_csv(&dir.join("cost_history.csv"), &report.cost_history)?;
    output::write_field_csv(&dir.join("u.csv"), "u", &u)?;
    output::write_field_csv(&dir.join("phi.csv"), "phi", &phi)?;
    let file = OptimizeReportFile {
        mode: mode_name(cfg.mode),
        driver: cfg.driver.name(),
        tolerance: cfg.tolerance,
        max_iter: cfg.max_iter,
        grid: GridEcho::of(cfg),
        report: &report,
    };
    output::write_json(&dir.join("report.json"), &file)?;

    if report.converged {
        println!(
            "optimize: {} converged after {} iterations",
            cfg.driver.name(),
            report.iterations
        );
    } else if report.stagnated {
        println!(
            "optimize: {} stagnated after {} iterations without meeting the tolerance",
            cfg.driver.name(),
            report.iterations
        );
    } else {
        println!(
            "optimize: {} stopped at the iteration cap ({}) without converging",
            cfg.driver.name(),
            report.iterations
        );
    }
    println!("final cost {:.12e}", report.cost.total);
    println!("wrote beta.csv, cost_history.csv, u.csv, phi.csv, report.json to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct VerifyReportFile<'a> {
    mode: &'static str,
    seed: u64,
    all_passed: bool,
    checks: &'a [checks::CheckRecord],
}

fn cmd_verify(cfg: &RunConfig, dir: &Path) -> Result<bool> {
    let records = checks::run_all(cfg);
    for record in &records {
        println!(
            "CHECK {}: {} ({})",
            record.name,
            if record.passed { "PASS" } else { "FAIL" },
            record.detail
        );
    }
    let passed = records.iter().filter(|r| r.passed).count();
    let all_passed = passed == records.len();
    let file = VerifyReportFile {
        mode: mode_name(cfg.mode),
        seed: cfg.seed,
        all_passed,
        checks: &records,
    };
    output::write_json(&dir.join("verify_report.json"), &file)?;
    if all_passed {
        println!("verification: {passed}/{} checks passed", records.len());
    } else {
        let first = records.iter().find(|r| !r.passed).expect("at least one failed");
        println!(
            "verification: {passed}/{} checks passed; first failure: {}",
            records.len(),
            first.name
        );
    }
    Ok(all_passed)
}
