use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nsch::check::run_checks;
use nsch::coupled::{run_from, State};
use nsch::grid::MacVector;
use nsch::io::{read_snapshot, write_snapshot, Config, RunFiles};
use nsch::obstacle_limit::{theta_limit_study, ObstacleLimitConfig};
use nsch::stationary::stationary_solve;
use nsch::weakstrong::{vortex_perturbation, weak_strong_experiment};

#[derive(Parser, Debug)]
#[command(name = "nsch", version, about = "Navier-Stokes-Cahn-Hilliard simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coupled run: diagnostics.csv plus snapshots in the output directory.
    Run {
        config: PathBuf,
    },
    /// Stationary solve from `stationary.snapshot` or from the initial datum.
    Stationary {
        config: PathBuf,
    },
    /// Log-to-obstacle limit sweep over `obstacle.k_list`.
    ObstacleLimit {
        config: PathBuf,
    },
    /// Two-run distance experiment with perturbation sizes eps and eps/2.
    Weakstrong {
        config: PathBuf,
    },
    /// Operator self-tests; a config, when given, is only validated.
    Check {
        config: Option<PathBuf>,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Solver(String),
    Check,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Check => 4,
        }
    }
}

fn config_err(e: nsch::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn solver_err(e: nsch::Error) -> Failure {
    Failure::Solver(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Solver(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(config_err)
}

fn output_dir(cfg: &Config) -> Result<PathBuf, Failure> {
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn cmd_run(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    let params = cfg.params().map_err(config_err)?;
    let run = cfg.run_config().map_err(config_err)?;
    let start = run.initial_state(&params).map_err(config_err)?;
    let dir = output_dir(&cfg)?;
    let mut files = RunFiles::create(&dir, run.dt).map_err(solver_err)?;
    let result = run_from(start, &run, &params, &mut files);
    let written = files.finish().map_err(solver_err)?;
    let last = result.map_err(solver_err)?;
    println!(
        "t = {:.6e}, mass = {:.16e}, snapshots = {}, output = {}",
        last.t,
        last.phi.mean(),
        written.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_stationary(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    let kind = cfg.potential();
    let guess = match &cfg.stationary_snapshot {
        Some(snap) => read_snapshot(snap, cfg.lx, cfg.ly).map_err(solver_err)?.phi,
        None => {
            let run = cfg.run_config().map_err(config_err)?;
            run.init.phase_field(&run.grid, run.seed).map_err(config_err)?
        }
    };
    let sol = stationary_solve(&guess, guess.mean(), &kind, cfg.stationary_tol).map_err(solver_err)?;
    let grid = *sol.phi_inf.grid();
    let state = State::from_phase(sol.phi_inf.clone(), MacVector::zeros(grid), &kind).map_err(solver_err)?;
    let dir = output_dir(&cfg)?;
    let out = dir.join("stationary.bin");
    write_snapshot(&out, &state).map_err(solver_err)?;
    println!(
        "iterations = {}, residual = {:.3e}, mu = {:.16e}, separation = {:.6e}, distance from guess = {:.6e}",
        sol.iterations,
        sol.residual,
        sol.mu_inf,
        sol.separation,
        sol.phi_inf.distance_l2(&guess)
    );
    Ok(())
}

fn cmd_obstacle_limit(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    let mut run = cfg.run_config().map_err(config_err)?;
    run.freeze_velocity = true;
    let study = ObstacleLimitConfig {
        k_list: cfg.k_list.clone(),
        run,
        theta0: cfg.theta0,
    };
    study.validate().map_err(config_err)?;
    let report = theta_limit_study(&study).map_err(solver_err)?;
    let dir = output_dir(&cfg)?;
    let out = dir.join("theta_limit.csv");
    let mut text = String::from("k,theta,initial_residual,distance\n");
    let mut failed = Vec::new();
    for e in &report.entries {
        let d = match &e.distance {
            Ok(d) => format!("{d:.16e}"),
            Err(err) => {
                failed.push(format!("k = {}: {err}", e.k));
                "nan".to_string()
            }
        };
        text.push_str(&format!("{},{:.16e},{:.16e},{d}\n", e.k, e.theta, e.initial_residual));
    }
    fs::write(&out, text).map_err(|e| io_err(&out, e))?;
    print!("{}", fs::read_to_string(&out).map_err(|e| io_err(&out, e))?);
    match report.strictly_decreasing() {
        Some(true) => println!("distances strictly decreasing"),
        Some(false) => println!("distances not strictly decreasing"),
        None => {}
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(failed.join("; ")))
    }
}

fn cmd_weakstrong(path: &Path) -> Result<(), Failure> {
    let cfg = load(path)?;
    let params = cfg.params().map_err(config_err)?;
    let run = cfg.run_config().map_err(config_err)?;
    let w = vortex_perturbation(&run.grid).map_err(config_err)?;
    let eps = cfg.weakstrong_epsilon;
    let report = weak_strong_experiment(&run, &params, &[eps, eps / 2.0], &w).map_err(solver_err)?;
    let dir = output_dir(&cfg)?;
    let out = dir.join("weakstrong.csv");
    let mut text = String::from("t,D_eps,D_half_eps\n");
    for (a, b) in report.runs[0].distances.iter().zip(&report.runs[1].distances) {
        text.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", a.t, a.d, b.d));
    }
    fs::write(&out, text).map_err(|e| io_err(&out, e))?;
    if let Some(r) = report.ratios().first() {
        println!("D_eps(T) / D_eps/2(T) = {r:.6}");
    }
    Ok(())
}

fn cmd_check(path: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = path {
        let cfg = load(p)?;
        cfg.params().map_err(config_err)?;
        cfg.run_config().map_err(config_err)?;
    }
    let report = run_checks().map_err(solver_err)?;
    let mut out = std::io::stdout().lock();
    for item in &report.items {
        let cmp = if item.at_least { ">=" } else { "<=" };
        let status = if item.passed() { "ok" } else { "FAIL" };
        let _ = writeln!(out, "{status:4} {}: {:.3e} {cmp} {:.1e}", item.name, item.value, item.threshold);
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Stationary { config } => cmd_stationary(config),
        Command::ObstacleLimit { config } => cmd_obstacle_limit(config),
        Command::Weakstrong { config } => cmd_weakstrong(config),
        Command::Check { config } => cmd_check(config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Solver(m) => eprintln!("error: {m}"),
                Failure::Check => eprintln!("error: operator self-test failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
