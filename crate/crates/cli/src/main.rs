mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use safeguard_core::audit::audit_step;
use safeguard_core::encoder::{solve_tracking, EncodeError, TrackingProblem};
use safeguard_core::learner::quantify_error;
use safeguard_core::nn::{load_network, save_network};
use safeguard_core::planner::path_to_csv;
use safeguard_core::plants::PlantRegistry;
use safeguard_core::runtime::{median, plan, run_episode, Termination};
use safeguard_core::scenario::{Resolved, ScenarioFile};

#[derive(Parser)]
#[command(name = "milp-safeguard", version, about = "Safe tracking control through ReLU-network models")]
struct Cli {
    /// Debug logging (overrides MILP_SAFEGUARD_LOG).
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan (when the task has a goal) and run one closed-loop episode.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Noise seed, replacing `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the network described by the scenario's `network.train` block.
    Train {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the first control step against the oracle suite.
    Verify {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
    },
    /// Solve a single step for an explicit measurement and reference.
    SolveOnce {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        y: Vec<f64>,
        #[arg(long = "x-ref", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x_ref: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose {
        "debug".to_string()
    } else {
        std::env::var("MILP_SAFEGUARD_LOG").unwrap_or_else(|_| "warn".into())
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Simulate { scenario, out, seed } => simulate(&scenario, &out, seed),
        Command::Train { scenario, out } => train(&scenario, &out),
        Command::Verify { scenario, samples, grid } => verify(&scenario, samples, grid),
        Command::SolveOnce { scenario, y, x_ref } => solve_once(&scenario, y, x_ref),
    }
}

fn load(path: &Path) -> Result<(ScenarioFile, Resolved)> {
    let file = ScenarioFile::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolved = file
        .resolve(base, &PlantRegistry::with_builtin())
        .with_context(|| format!("resolving {}", path.display()))?;
    if let Some(t) = &resolved.training {
        println!("trained network: eps_x (train) = {:?}, eps_x (audit) = {:?}", t.eps_train, t.eps_audit);
    }
    Ok((file, resolved))
}

fn simulate(path: &Path, out: &Path, seed: Option<u64>) -> Result<u8> {
    let (_, resolved) = load(path)?;
    let s = resolved.scenario;
    let setup = s.control_setup()?;
    let p = plan(&s, &setup)?;
    let seed = seed.unwrap_or(s.seed);
    let log = run_episode(&s, &setup, &p.waypoints, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("trajectory.csv"), log.to_csv(setup.state_dim(), setup.control_dim()))?;
    let mut plan_rows = vec![s.x0.clone()];
    plan_rows.extend(p.waypoints.iter().cloned());
    fs::write(out.join("plan.csv"), path_to_csv(&plan_rows))?;
    if setup.state_dim() >= 2 {
        fs::write(
            out.join("plot.svg"),
            plot::render(&s.x_set, &s.unsafe_region, &plan_rows, &log),
        )?;
    }
    let violations = log.safety_violations(&s.unsafe_region);
    let times = log.solve_times_ms();
    println!(
        "{}: {} after {} steps (seed {seed}), {} safety violations, median solve {:.2} ms",
        s.name,
        log.termination,
        log.steps.len(),
        violations.len(),
        median(&times).unwrap_or(f64::NAN)
    );
    for v in &violations {
        println!("violation: {v:?}");
    }
    info!("outputs written to {}", out.display());
    Ok(match log.termination {
        Termination::GoalReached => 0,
        Termination::Infeasible => 2,
        Termination::StepLimit => 3,
    })
}

fn train(path: &Path, out: &Path) -> Result<u8> {
    let file = ScenarioFile::load(path)?;
    if file.network.train.is_none() {
        bail!("{} has no network.train block", path.display());
    }
    let registry = PlantRegistry::with_builtin();
    let outcome = file.train_network(&registry)?;
    let bytes = save_network(&outcome.report.network);
    fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    let reloaded = load_network(&fs::read(out)?)?;
    let t = file.network.train.as_ref().expect("checked above");
    let plant = file.plant(&registry)?;
    let (x_set, u_set) = file.sets()?;
    let data = safeguard_core::learner::sample_dataset(plant.as_ref(), &x_set, &u_set, t.samples, t.sample_seed)?;
    let eps_reloaded = quantify_error(&reloaded, &data)?;
    if eps_reloaded != outcome.eps_train {
        bail!("reloaded network changed the error bound: {eps_reloaded:?} vs {:?}", outcome.eps_train);
    }
    println!("final mse: {:.6e}", outcome.report.final_mse);
    println!("eps_x (train): {:?}", outcome.eps_train);
    println!("eps_x (audit): {:?}", outcome.eps_audit);
    println!("network written to {}", out.display());
    Ok(0)
}

fn verify(path: &Path, samples: usize, grid: f64) -> Result<u8> {
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    if !(grid > 0.0) {
        bail!("--grid must be positive");
    }
    let (_, resolved) = load(path)?;
    let s = resolved.scenario;
    let setup = s.control_setup()?;
    let p = plan(&s, &setup)?;
    let x_ref = p.waypoints.first().cloned().expect("plans are non-empty");
    let problem = TrackingProblem::new(&setup, s.x0.clone(), x_ref.clone())?;
    let checks = audit_step(&problem, s.plant.as_ref(), samples, grid, &s.solver)?;
    println!("{:<14} {:<6} detail", "check", "result");
    for c in &checks {
        println!("{:<14} {:<6} {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        Ok(0)
    } else {
        println!("failing case: y = {:?}, x_ref = {:?}", s.x0, x_ref);
        Ok(2)
    }
}

fn solve_once(path: &Path, y: Vec<f64>, x_ref: Vec<f64>) -> Result<u8> {
    let (_, resolved) = load(path)?;
    let s = resolved.scenario;
    let setup = s.control_setup()?;
    let problem = TrackingProblem::new(&setup, y, x_ref)?;
    match solve_tracking(&problem, &s.solver) {
        Ok(d) => {
            println!("u_cmd: {:?}", d.u_cmd);
            println!("input box: {}", d.input_box);
            println!("network output box: {}", d.nn_out_box);
            println!("safe box: {}", d.safe_box);
            println!("cost: {:.9}", d.cost);
            println!("solve time: {:.3} ms", d.solve_time().as_secs_f64() * 1e3);
            Ok(0)
        }
        Err(e @ (EncodeError::InfeasibleMeasurement | EncodeError::SolverInfeasible | EncodeError::IterationLimit)) => {
            println!("infeasible: {e}");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}
