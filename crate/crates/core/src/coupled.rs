//! Full time step (phase transport, then momentum) and the trajectory driver.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cahn_hilliard::{chemical_potential, check_cfl, step_count, CHState, CHStepConfig, ChStepper};
use crate::diagnostics::{record, DiagnosticsRecord};
use crate::grid::{velocity_from_streamfunction, Grid, MacVector, ScalarField};
use crate::linalg::Method;
use crate::momentum::{capillary_mobility, momentum_step_with, FlowState, ModelParams, MomentumConfig};
use crate::potential::PotentialKind;
use crate::{Error, Result};

/// Largest admissible `|phi0|`.
pub const PHASE_CAP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: MacVector,
    pub p: ScalarField,
    pub phi: ScalarField,
    pub mu: ScalarField,
}

impl State {
    /// State at `t = 0` with zero pressure and the chemical potential of `phi`.
    pub fn from_phase(phi: ScalarField, u: MacVector, kind: &PotentialKind) -> Result<Self> {
        phi.grid().check_same(u.grid())?;
        let mu = chemical_potential(&phi, kind)?;
        let g = *phi.grid();
        Ok(Self {
            t: 0.0,
            u,
            p: ScalarField::zeros(g),
            phi,
            mu,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }

    pub fn ch(&self) -> CHState {
        CHState {
            t: self.t,
            phi: self.phi.clone(),
            mu: self.mu.clone(),
        }
    }

    pub fn flow(&self) -> FlowState {
        FlowState {
            u: self.u.clone(),
            p: self.p.clone(),
        }
    }
}

/// Direction along which an interface profile varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseInit {
    Constant {
        m: f64,
    },
    /// `m + a * noise`; `modes = 0` is cellwise white noise with its sample
    /// mean removed, `modes = K > 0` a random cosine series with wavenumbers
    /// up to `K`, normalised to maximum 1. Uses the run seed.
    SeededPerturbation {
        mean: f64,
        amplitude: f64,
        modes: usize,
    },
    TanhInterface {
        orientation: Orientation,
        width: f64,
    },
    /// Phase `+1` inside the disc.
    Bubble {
        center: (f64, f64),
        radius: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityInit {
    Zero,
    /// Two counter-flowing layers from the streamfunction
    /// `sin^2(pi x/Lx) sin^2(pi y/Ly)`, scaled to `max |u| = magnitude`.
    ShearLayer { magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub phase: PhaseInit,
    pub velocity: VelocityInit,
}

impl InitialCondition {
    pub fn phase_field(&self, g: &Grid, seed: u64) -> Result<ScalarField> {
        let phi = match self.phase {
            PhaseInit::Constant { m } => ScalarField::constant(*g, m),
            PhaseInit::SeededPerturbation {
                mean,
                amplitude,
                modes,
            } => {
                if !(amplitude >= 0.0) {
                    return Err(Error::InvalidInput("amplitude must be non-negative".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut noise: Vec<f64> = if modes == 0 {
                    let mut v: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let m = v.iter().sum::<f64>() / v.len() as f64;
                    v.iter_mut().for_each(|x| *x -= m);
                    v
                } else {
                    let qmax = if g.is_1d() { 0 } else { modes };
                    let mut coef = Vec::new();
                    for q in 0..=qmax {
                        for p in 0..=modes {
                            if p + q > 0 {
                                coef.push((p, q, rng.gen_range(-1.0..1.0)));
                            }
                        }
                    }
                    let mut v = vec![0.0; g.n_cells()];
                    for j in 0..g.ny {
                        for i in 0..g.nx {
                            let (x, y) = (g.x_center(i), g.y_center(j));
                            v[g.idx(i, j)] = coef
                                .iter()
                                .map(|&(p, q, c)| {
                                    c * (p as f64 * PI * x / g.lx).cos() * (q as f64 * PI * y / g.ly).cos()
                                })
                                .sum();
                        }
                    }
                    v
                };
                let peak = noise.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if peak > 0.0 {
                    noise.iter_mut().for_each(|v| *v /= peak);
                }
                ScalarField::from_vec(*g, noise.into_iter().map(|v| mean + amplitude * v).collect())?
            }
            PhaseInit::TanhInterface { orientation, width } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidInput("interface width must be positive".into()));
                }
                let (lx, ly) = (g.lx, g.ly);
                ScalarField::from_fn(*g, |x, y| {
                    let s = match orientation {
                        Orientation::X => x - 0.5 * lx,
                        Orientation::Y => y - 0.5 * ly,
                    };
                    PHASE_CAP * (s / width).tanh()
                })
            }
            PhaseInit::Bubble {
                center,
                radius,
                width,
            } => {
                if !(width > 0.0 && radius > 0.0) {
                    return Err(Error::InvalidInput("bubble radius and width must be positive".into()));
                }
                ScalarField::from_fn(*g, |x, y| {
                    let r = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
                    -PHASE_CAP * ((r - radius) / width).tanh()
                })
            }
        };
        if !phi.is_finite() || phi.max_abs() > PHASE_CAP {
            return Err(Error::InvalidInput(format!(
                "initial phase reaches |phi| = {}, above 1 - 1e-6",
                phi.max_abs()
            )));
        }
        if phi.mean().abs() >= 1.0 {
            return Err(Error::InvalidInput("initial mean must lie in (-1, 1)".into()));
        }
        Ok(phi)
    }

    pub fn velocity_field(&self, g: &Grid) -> Result<MacVector> {
        match self.velocity {
            VelocityInit::Zero => Ok(MacVector::zeros(*g)),
            VelocityInit::ShearLayer { magnitude } => {
                if g.is_1d() {
                    return Err(Error::InvalidInput("a shear layer needs a 2D grid".into()));
                }
                let (lx, ly) = (g.lx, g.ly);
                let u = velocity_from_streamfunction(g, |x, y| {
                    (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2)
                });
                let peak = u.max_abs();
                Ok(if peak > 0.0 { u.scaled(magnitude / peak) } else { u })
            }
        }
    }

    pub fn build(&self, g: &Grid, kind: &PotentialKind, seed: u64) -> Result<State> {
        State::from_phase(self.phase_field(g, seed)?, self.velocity_field(g)?, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub newton_tol: f64,
    pub newton_max: usize,
    pub linear_tol: f64,
    pub alpha: f64,
    pub obstacle_c: f64,
    pub method: Method,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let c = CHStepConfig::new(1.0);
        Self {
            newton_tol: c.newton_tol,
            newton_max: c.newton_max,
            linear_tol: c.linear_tol,
            alpha: c.alpha,
            obstacle_c: c.obstacle_c,
            method: c.method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    /// Snapshot interval in steps.
    pub output_every: usize,
    pub init: InitialCondition,
    pub seed: u64,
    pub solver: SolverSettings,
    pub momentum: MomentumConfig,
    /// Abort when a step's energy defect exceeds `energy_tol |E(0)|`.
    pub strict_energy: bool,
    pub energy_tol: f64,
    /// Keep `u = 0` and skip the momentum step.
    pub freeze_velocity: bool,
}

impl RunConfig {
    pub fn new(grid: Grid, dt: f64, t_end: f64, init: InitialCondition) -> Self {
        Self {
            grid,
            dt,
            t_end,
            output_every: usize::MAX,
            init,
            seed: 0,
            solver: SolverSettings::default(),
            momentum: MomentumConfig::default(),
            strict_energy: false,
            energy_tol: 1e-8,
            freeze_velocity: false,
        }
    }

    pub fn ch_config(&self) -> CHStepConfig {
        CHStepConfig {
            newton_tol: self.solver.newton_tol,
            newton_max: self.solver.newton_max,
            linear_tol: self.solver.linear_tol,
            alpha: self.solver.alpha,
            obstacle_c: self.solver.obstacle_c,
            method: self.solver.method,
            ..CHStepConfig::new(self.dt)
        }
    }

    pub fn n_steps(&self) -> Result<usize> {
        step_count(self.t_end, self.dt)
    }

    /// Checks everything that can be checked before stepping, including the
    /// CFL bound of the initial velocity, and returns the initial state.
    pub fn initial_state(&self, params: &ModelParams) -> Result<State> {
        params.validate()?;
        self.n_steps()?;
        if self.output_every == 0 {
            return Err(Error::InvalidInput("output_every must be at least 1".into()));
        }
        let state = self.init.build(&self.grid, &params.potential, self.seed)?;
        check_cfl(&state.u, self.dt)?;
        Ok(state)
    }

    fn moves_fluid(&self) -> bool {
        !self.freeze_velocity && !self.grid.is_1d()
    }
}

/// Reusable stepper holding the grid operators.
#[derive(Debug, Clone)]
pub struct AggStepper {
    ch: ChStepper,
}

impl AggStepper {
    pub fn new(grid: Grid) -> Self {
        Self {
            ch: ChStepper::new(grid),
        }
    }

    pub fn step(&self, state: &State, params: &ModelParams, cfg: &RunConfig) -> Result<State> {
        let ch_cfg = cfg.ch_config();
        let moving = cfg.moves_fluid();
        let mobility = moving.then(|| capillary_mobility(&state.phi, params, cfg.dt));
        let ch = self
            .ch
            .step_with_mobility(&state.ch(), &state.u, &ch_cfg, &params.potential, mobility.as_ref())?;
        let flow = if moving {
            momentum_step_with(&state.flow(), &ch.phi, &ch.mu, &state.phi, params, cfg.dt, &cfg.momentum)?
        } else {
            state.flow()
        };
        Ok(State {
            t: ch.t,
            u: flow.u,
            p: flow.p,
            phi: ch.phi,
            mu: ch.mu,
        })
    }
}

/// One coupled step: phase transport with the old velocity, then momentum.
pub fn agg_step(state: &State, params: &ModelParams, cfg: &RunConfig) -> Result<State> {
    AggStepper::new(*state.grid()).step(state, params, cfg)
}

/// Receives the outputs of [`run_observed`] as they are produced.
pub trait RunObserver {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()>;
    fn snapshot(&mut self, state: &State) -> Result<()>;
}

/// Collects everything in memory.
#[derive(Debug, Clone, Default)]
pub struct Collector {
    pub series: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
}

impl RunObserver for Collector {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.series.push(*rec);
        Ok(())
    }
    fn snapshot(&mut self, state: &State) -> Result<()> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: State,
    pub series: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
}

/// Fixed-step loop: one record per step (plus the initial one), snapshots at
/// step 0, every `output_every` steps and at the end. On failure the
/// observer has already received everything up to the failing step.
pub fn run_observed(cfg: &RunConfig, params: &ModelParams, obs: &mut dyn RunObserver) -> Result<State> {
    let state = cfg.initial_state(params)?;
    run_from(state, cfg, params, obs)
}

/// As [`run_observed`] but starting from `state` instead of `cfg.init`.
pub fn run_from(
    mut state: State,
    cfg: &RunConfig,
    params: &ModelParams,
    obs: &mut dyn RunObserver,
) -> Result<State> {
    params.validate()?;
    state.phi.grid().check_same(&cfg.grid)?;
    check_cfl(&state.u, cfg.dt)?;
    if cfg.output_every == 0 {
        return Err(Error::InvalidInput("output_every must be at least 1".into()));
    }
    let steps = cfg.n_steps()?;
    let stepper = AggStepper::new(cfg.grid);
    let first = record(&state, None, params, cfg.dt);
    let e0 = first.e_total.abs();
    obs.record(&first)?;
    obs.snapshot(&state)?;
    for step in 1..=steps {
        let next = stepper
            .step(&state, params, cfg)
            .map_err(|e| Error::Step { step, source: Box::new(e) })?;
        let rec = record(&next, Some(&state), params, cfg.dt);
        obs.record(&rec)?;
        state = next;
        if step % cfg.output_every == 0 || step == steps {
            obs.snapshot(&state)?;
        }
        if cfg.strict_energy {
            let defect = rec.energy_defect.unwrap_or(0.0);
            let tolerance = cfg.energy_tol * e0;
            if !(defect <= tolerance) {
                return Err(Error::EnergyViolation {
                    step,
                    defect,
                    tolerance,
                });
            }
        }
    }
    Ok(state)
}

pub fn run(cfg: &RunConfig, params: &ModelParams) -> Result<RunOutput> {
    let mut c = Collector::default();
    let final_state = run_observed(cfg, params, &mut c)?;
    Ok(RunOutput {
        final_state,
        series: c.series,
        snapshots: c.snapshots,
    })
}
