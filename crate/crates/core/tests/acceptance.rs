//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N PASS|FAIL ...` line before asserting.
//!
//! The long runs are shared through `OnceLock` so that criteria reading the
//! same trajectory do not repeat it.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nsch::cahn_hilliard::{ch_run, ChStepper};
use nsch::check::run_checks;
use nsch::coupled::{run_from, Collector, RunObserver};
use nsch::diagnostics::{ch_budget_residual, free_energy, separation_time};
use nsch::io::RunFiles;
use nsch::obstacle_limit::{
    obstacle_run, regularization_residual, regularization_source, regularize_initial, theta_limit_study,
    ConvergenceReport, ObstacleLimitConfig,
};
use nsch::potential::binodal_root;
use nsch::weakstrong::{vortex_perturbation, weak_strong_experiment};
use nsch::{
    stationary_solve, CHState, DiagnosticsRecord, Grid, InitialCondition, MacVector, ModelParams, PhaseInit,
    PotentialKind, RunConfig, ScalarField, State, VelocityInit,
};

const LOG: PotentialKind = PotentialKind::FloryHuggins { theta: 1.0, theta0: 2.0 };

// Tolerances.
const CHECK_RUNTIME: Duration = Duration::from_secs(10);
const MASS_TOL: f64 = 1e-10;
const ENERGY_REL_TOL: f64 = 1e-8;
const BUDGET_REL_TOL: f64 = 1e-10;
const DECAY_RATIO: f64 = 1e-3;
const SEPARATION_REL_TOL: f64 = 0.2;
const EQUILIBRIUM_RATIO: f64 = 1e-4;
const STATIONARY_MAX_ITERS: usize = 10;
const STATIONARY_TOL: f64 = 1e-10;
const EQUILIBRIUM_DISTANCE: f64 = 1e-3;
const ORACLE_TOL: f64 = 1e-6;
const LIMIT_GAIN: f64 = 10.0;
const REGULARIZE_TOL: f64 = 1e-10;
const SCALING_RANGE: (f64, f64) = (2.0, 8.0);

/// Writes straight to stderr so the line shows without `--nocapture`.
fn report(n: u32, pass: bool, detail: impl AsRef<str>) -> bool {
    let line = format!("criterion {n:2} {} {}\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    pass
}

/// Keeps the series and writes the files at the same time.
struct Both {
    mem: Collector,
    files: RunFiles,
}

impl RunObserver for Both {
    fn record(&mut self, rec: &DiagnosticsRecord) -> nsch::Result<()> {
        self.mem.record(rec)?;
        self.files.record(rec)
    }
    fn snapshot(&mut self, state: &State) -> nsch::Result<()> {
        self.mem.snapshot(state)?;
        self.files.snapshot(state)
    }
}

// Coupled benchmark: 64x64, rho 3/1, nu 0.1, dt 1e-4, 2000 steps.

fn bench_params() -> ModelParams {
    ModelParams::new(3.0, 1.0, 0.1, 0.1, LOG).unwrap()
}

fn bench_config() -> RunConfig {
    let g = Grid::new(64, 64, 6.4, 6.4).unwrap();
    let init = InitialCondition {
        phase: PhaseInit::SeededPerturbation { mean: 0.0, amplitude: 0.05, modes: 0 },
        velocity: VelocityInit::Zero,
    };
    let mut c = RunConfig::new(g, 1e-4, 0.2, init);
    c.seed = 1;
    c.output_every = 500;
    c
}

/// Smooth mixture under a shear layer, for the two-run experiment.
fn sheared_config() -> RunConfig {
    let g = Grid::new(64, 64, 6.4, 6.4).unwrap();
    let init = InitialCondition {
        phase: PhaseInit::SeededPerturbation { mean: 0.1, amplitude: 0.5, modes: 4 },
        velocity: VelocityInit::ShearLayer { magnitude: 0.5 },
    };
    let mut c = RunConfig::new(g, 1e-4, 0.05, init);
    c.seed = 5;
    c.output_every = 100;
    c
}

struct Bench {
    series: Vec<DiagnosticsRecord>,
    csv_rows: usize,
    elapsed: Duration,
}

fn bench() -> &'static Bench {
    static B: OnceLock<Bench> = OnceLock::new();
    B.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = bench_config();
        let p = bench_params();
        let t0 = Instant::now();
        let start = cfg.initial_state(&p).unwrap();
        let mut obs = Both {
            mem: Collector::default(),
            files: RunFiles::create(dir.path(), cfg.dt).unwrap(),
        };
        run_from(start, &cfg, &p, &mut obs).unwrap();
        let elapsed = t0.elapsed();
        let csv_path = obs.files.csv_path();
        obs.files.finish().unwrap();
        let csv_rows = fs::read_to_string(csv_path).unwrap().lines().count() - 1;
        Bench {
            series: obs.mem.series,
            csv_rows,
            elapsed,
        }
    })
}

// Standing mixture: shear layer over a spinodal mixture in a 6.4 x 1.6
// channel, nu = 1, run to t = 5 with dt = 1e-4.

fn standing_params() -> ModelParams {
    ModelParams::new(3.0, 1.0, 1.0, 1.0, LOG).unwrap()
}

struct Standing {
    series: Vec<DiagnosticsRecord>,
    last: State,
    elapsed: Duration,
}

fn standing() -> &'static Standing {
    static S: OnceLock<Standing> = OnceLock::new();
    S.get_or_init(|| {
        let g = Grid::new(64, 64, 6.4, 1.6).unwrap();
        let init = InitialCondition {
            phase: PhaseInit::SeededPerturbation { mean: 0.0, amplitude: 0.96, modes: 1 },
            velocity: VelocityInit::ShearLayer { magnitude: 0.1 },
        };
        let mut cfg = RunConfig::new(g, 1e-4, 5.0, init);
        cfg.seed = 25;
        let t0 = Instant::now();
        let out = nsch::run(&cfg, &standing_params()).unwrap();
        Standing {
            series: out.series,
            last: out.final_state,
            elapsed: t0.elapsed(),
        }
    })
}

// Obstacle limit: 1D white-noise spinodal, theta0 = 4, T = 0.5.

fn limit_config() -> ObstacleLimitConfig {
    let g = Grid::new(128, 1, 12.8, 1.0).unwrap();
    let init = InitialCondition {
        phase: PhaseInit::SeededPerturbation { mean: 0.0, amplitude: 0.8, modes: 0 },
        velocity: VelocityInit::Zero,
    };
    let mut run = RunConfig::new(g, 1e-3, 0.5, init);
    run.seed = 7;
    ObstacleLimitConfig {
        k_list: vec![4, 16, 64, 256],
        run,
        theta0: 4.0,
    }
}

fn limit() -> &'static (ConvergenceReport, Duration) {
    static L: OnceLock<(ConvergenceReport, Duration)> = OnceLock::new();
    L.get_or_init(|| {
        let t0 = Instant::now();
        let r = theta_limit_study(&limit_config()).unwrap();
        (r, t0.elapsed())
    })
}

fn determinism_config() -> RunConfig {
    let g = Grid::new(32, 32, 3.2, 3.2).unwrap();
    let init = InitialCondition {
        phase: PhaseInit::SeededPerturbation { mean: -0.1, amplitude: 0.4, modes: 3 },
        velocity: VelocityInit::ShearLayer { magnitude: 0.3 },
    };
    let mut c = RunConfig::new(g, 5e-4, 0.1, init);
    c.seed = 12;
    c.output_every = 50;
    c
}

fn determinism_run() -> (Vec<u8>, Vec<Vec<u8>>, Vec<DiagnosticsRecord>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = determinism_config();
    let p = bench_params();
    let mut obs = Both {
        mem: Collector::default(),
        files: RunFiles::create(dir.path(), cfg.dt).unwrap(),
    };
    run_from(cfg.initial_state(&p).unwrap(), &cfg, &p, &mut obs).unwrap();
    let csv = fs::read(obs.files.csv_path()).unwrap();
    let snaps = obs.files.finish().unwrap();
    let bytes = snaps.iter().map(|s| fs::read(s).unwrap()).collect();
    (csv, bytes, obs.mem.series)
}

fn bound(series: &[DiagnosticsRecord]) -> f64 {
    series.iter().map(|r| r.phi_max.max(-r.phi_min)).fold(0.0, f64::max)
}

#[test]
fn criterion_01_operator_checks() {
    let t0 = Instant::now();
    let r = run_checks().unwrap();
    let elapsed = t0.elapsed();
    let worst_order = r.items.iter().filter(|i| i.at_least).map(|i| i.value).fold(f64::INFINITY, f64::min);
    let failing: Vec<_> = r.items.iter().filter(|i| !i.passed()).map(|i| i.name.clone()).collect();
    let pass = r.all_passed() && elapsed < CHECK_RUNTIME;
    assert!(report(
        1,
        pass,
        format!("{} checks, worst order {worst_order:.3}, failing {failing:?}, {elapsed:.2?}", r.items.len())
    ));
}

#[test]
fn criterion_02_mass_conservation() {
    let b = bench();
    let m0 = b.series[0].mass;
    let drift = b.series.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max);
    let steps = b.series.len() - 1;
    let pass = drift <= MASS_TOL && steps == 2000 && b.csv_rows == 2001 && b.elapsed < Duration::from_secs(120);
    assert!(report(
        2,
        pass,
        format!("max |mass drift| {drift:.2e} over {steps} steps, {} csv rows, {:.1?}", b.csv_rows, b.elapsed)
    ));
}

#[test]
fn criterion_03_pointwise_bound() {
    let mut worst = bound(&bench().series);
    worst = worst.max(bound(&standing().series));
    worst = worst.max(bound(&determinism_run().2));
    // Obstacle dynamics on a 2D grid.
    let g = Grid::new(32, 32, 6.4, 6.4).unwrap();
    let init = InitialCondition {
        phase: PhaseInit::SeededPerturbation { mean: 0.0, amplitude: 0.9, modes: 4 },
        velocity: VelocityInit::ShearLayer { magnitude: 0.2 },
    };
    let mut cfg = RunConfig::new(g, 1e-3, 0.5, init);
    cfg.seed = 9;
    let params = ModelParams::new(3.0, 1.0, 0.1, 0.1, PotentialKind::DoubleObstacle { theta0: 2.0 }).unwrap();
    let obs = obstacle_run(&cfg, &params).unwrap();
    let obstacle = bound(&obs.series).max(limit().0.obstacle_final.max_abs());
    let pass = worst < 1.0 && obstacle <= 1.0;
    assert!(report(3, pass, format!("log runs max |phi| {worst:.6}, obstacle runs max |phi| {obstacle}")));
}

#[test]
fn criterion_04_energy_inequality() {
    let b = bench();
    let e0 = b.series[0].e_total.abs();
    let worst = b.series.iter().filter_map(|r| r.energy_defect).fold(f64::NEG_INFINITY, f64::max);
    let coupled_ok = worst <= ENERGY_REL_TOL * e0;

    // u = 0: the free-energy budget of every step closes.
    let cfg = bench_config();
    let p = bench_params();
    let start = cfg.initial_state(&p).unwrap();
    let stepper = ChStepper::new(cfg.grid);
    let ch_cfg = cfg.ch_config();
    let zero = MacVector::zeros(cfg.grid);
    let f0 = free_energy(&start.phi, &LOG).abs();
    let mut s = start.ch();
    let mut budget = 0.0_f64;
    for _ in 0..200 {
        let next = stepper.step(&s, &zero, &ch_cfg, &LOG).unwrap();
        let r = ch_budget_residual(&s, &next, &zero, ch_cfg.alpha, ch_cfg.dt, &LOG, None);
        budget = budget.max(r.abs());
        s = next;
    }
    let budget_ok = budget <= BUDGET_REL_TOL * f0;
    assert!(report(
        4,
        coupled_ok && budget_ok,
        format!(
            "max defect / E(0) {:.2e} (<= {ENERGY_REL_TOL:.0e}), u=0 budget / E(0) {:.2e} (<= {BUDGET_REL_TOL:.0e})",
            worst / e0,
            budget / f0
        )
    ));
}

#[test]
fn criterion_05_velocity_decay() {
    let s = standing();
    let ratio = s.series.last().unwrap().u_l2 / s.series[0].u_l2;
    let pass = ratio <= DECAY_RATIO && s.elapsed < Duration::from_secs(900);
    assert!(report(5, pass, format!("u_L2(5) / u_L2(0) = {ratio:.3e}, {:.1?}", s.elapsed)));
}

#[test]
fn criterion_06_separation() {
    let s = standing();
    let target = 1.0 - binodal_root(1.0, 2.0).unwrap();
    let (t_sp, delta) = separation_time(&s.series).unwrap();
    let rel = (delta - target).abs() / target;
    let pass = delta > 0.0 && rel <= SEPARATION_REL_TOL;
    assert!(report(
        6,
        pass,
        format!("T_SP {t_sp:.3}, delta {delta:.5}, 1 - s* {target:.5}, relative gap {rel:.3}")
    ));
}

#[test]
fn criterion_07_equilibrium() {
    let s = standing();
    let (first, last) = (&s.series[0], s.series.last().unwrap());
    let gmu = last.grad_mu_l2 / first.grad_mu_l2;
    let smu = last.stat_mu_residual / first.stat_mu_residual;
    let phi = &s.last.phi;
    let sol = stationary_solve(phi, phi.mean(), &LOG, STATIONARY_TOL).unwrap();
    let dist = sol.phi_inf.distance_l2(phi);
    let pass = gmu <= EQUILIBRIUM_RATIO
        && smu <= EQUILIBRIUM_RATIO
        && sol.iterations <= STATIONARY_MAX_ITERS
        && sol.residual <= STATIONARY_TOL
        && dist <= EQUILIBRIUM_DISTANCE;
    assert!(report(
        7,
        pass,
        format!(
            "grad_mu ratio {gmu:.2e}, stat_mu ratio {smu:.2e}, Newton {} steps to {:.1e}, |phi - phi_inf| {dist:.2e}",
            sol.iterations, sol.residual
        )
    ));
}

#[test]
fn criterion_08_stationary_oracle() {
    let g = Grid::new(128, 1, 16.0, 1.0).unwrap();
    let kink = |a: f64| ScalarField::from_fn(g, move |x, _| a * ((x - 8.0) / 1.5).tanh());
    // Gradient flow from a perturbed profile.
    let start = ScalarField::from_fn(g, |x, _| 0.6 * ((x - 7.0) / 2.0).tanh() + 0.1 * (3.0 * PI * x / 16.0).cos());
    let m = start.mean();
    let cfg = nsch::CHStepConfig::new(0.1);
    let stepper = ChStepper::new(g);
    let flow = ch_run(&stepper, &CHState::new(start, &LOG).unwrap(), &MacVector::zeros(g), &cfg, &LOG, 1e3).unwrap();
    // Newton from a clean profile with the same mass.
    let guess = kink(0.9);
    let shift = m - guess.mean();
    let sol = stationary_solve(&guess.map(|v| v + shift), m, &LOG, 1e-12).unwrap();
    let d = sol.phi_inf.distance_l2(&flow.phi);
    let pass = d <= ORACLE_TOL && sol.separation < 0.5;
    assert!(report(8, pass, format!("|phi_newton - phi_flow(1e3)| = {d:.2e}, plateau {:.4}", 1.0 - sol.separation)));
}

#[test]
fn criterion_09_obstacle_limit() {
    let (r, elapsed) = limit();
    let d = r.distances();
    let strictly = r.strictly_decreasing() == Some(true);
    let gain = match (d.first(), d.last()) {
        (Some(&(4, a)), Some(&(256, b))) => a / b,
        _ => 0.0,
    };
    let pass = strictly && gain >= LIMIT_GAIN && *elapsed < Duration::from_secs(300);
    assert!(report(9, pass, format!("e_k {d:?}, e_4 / e_256 = {gain:.1}, {elapsed:.1?}")));
}

#[test]
fn criterion_10_regularized_data() {
    let cfg = limit_config();
    let phi0 = cfg.run.init.phase_field(&cfg.run.grid, cfg.run.seed).unwrap();
    let obstacle = PotentialKind::DoubleObstacle { theta0: cfg.theta0 };
    let mu0 = CHState::new(phi0.clone(), &obstacle).unwrap().mu;
    let source = regularization_source(&mu0, &phi0, cfg.theta0).unwrap();
    let mut worst_res = 0.0_f64;
    let mut worst_abs = 0.0_f64;
    for &k in &cfg.k_list {
        let phik = regularize_initial(&mu0, &phi0, cfg.theta0, k).unwrap();
        worst_abs = worst_abs.max(phik.max_abs());
        worst_res = worst_res.max(regularization_residual(&phik, &source, k).unwrap().max_abs());
    }
    let study_res = limit().0.entries.iter().map(|e| e.initial_residual).fold(0.0, f64::max);
    let pass = worst_res <= REGULARIZE_TOL && study_res <= REGULARIZE_TOL && worst_abs < 1.0;
    assert!(report(
        10,
        pass,
        format!("max residual {:.2e}, max |phi0_k| {worst_abs:.6}", worst_res.max(study_res))
    ));
}

#[test]
fn criterion_11_weak_strong_scaling() {
    let cfg = sheared_config();
    let w = vortex_perturbation(&cfg.grid).unwrap();
    let t0 = Instant::now();
    let r = weak_strong_experiment(&cfg, &bench_params(), &[1e-2, 5e-3], &w).unwrap();
    let elapsed = t0.elapsed();
    let t_last = r.runs[0].distances.last().unwrap().t;
    let ratio = r.ratios()[0];
    let pass = (SCALING_RANGE.0..=SCALING_RANGE.1).contains(&ratio)
        && (t_last - 0.05).abs() < 1e-12
        && elapsed < Duration::from_secs(300);
    assert!(report(11, pass, format!("D_eps(0.05) / D_eps/2(0.05) = {ratio:.4}, {elapsed:.1?}")));
}

#[test]
fn criterion_12_determinism() {
    let (csv_a, snaps_a, _) = determinism_run();
    let (csv_b, snaps_b, _) = determinism_run();
    let pass = !csv_a.is_empty() && csv_a == csv_b && snaps_a == snaps_b;
    assert!(report(
        12,
        pass,
        format!("csv {} bytes, {} snapshots, identical: {}", csv_a.len(), snaps_a.len(), csv_a == csv_b && snaps_a == snaps_b)
    ));
}
