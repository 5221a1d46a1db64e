//! Desk-scale simulator for the incompressible Navier-Stokes-Cahn-Hilliard
//! system with unmatched densities (volume-averaged velocity, relative flux
//! `J = -(rho1 - rho2)/2 grad mu`), Flory-Huggins or double-obstacle free
//! energy, on a uniform MAC grid in 1D or 2D.
//!
//! Module map:
//! - [`grid`]: MAC grid, fields and the discrete differential operators.
//! - [`potential`]: logarithmic potential, convex/concave split, obstacle
//!   complementarity.
//! - [`cahn_hilliard`]: implicit convex-splitting Cahn-Hilliard step with a
//!   prescribed drift, vanishing-viscosity suite, estimate monitor.
//! - [`momentum`]: variable density/viscosity projection step.
//! - [`coupled`]: full time step and trajectory driver.
//! - [`stationary`]: stationary Cahn-Hilliard solver with mass constraint.
//! - [`diagnostics`]: energies, dissipations, separation, weak-strong distance.
//! - [`obstacle_limit`]: `theta -> 0` double-obstacle study.
//! - [`weakstrong`]: two-run perturbation experiment.
//! - [`io`]: config file, CSV diagnostics and binary snapshots.
//! - [`check`]: operator self-tests.

pub mod cahn_hilliard;
pub mod check;
pub mod coupled;
pub mod diagnostics;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod momentum;
pub mod obstacle_limit;
pub mod potential;
pub mod spectral;
pub mod stationary;
pub mod weakstrong;

pub use cahn_hilliard::{ch_step, CHState, CHStepConfig};
pub use coupled::{agg_step, run, InitialCondition, PhaseInit, RunConfig, State, VelocityInit};
pub use diagnostics::DiagnosticsRecord;
pub use grid::{Grid, MacVector, ScalarField};
pub use momentum::{FlowState, ModelParams};
pub use potential::PotentialKind;
pub use stationary::{stationary_solve, StationarySolution};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grids do not match")]
    GridMismatch,
    #[error("argument {0} outside the open interval (-1, 1)")]
    Domain(f64),
    #[error("Newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        /// Last iterate of the primary unknown.
        iterate: Vec<f64>,
    },
    #[error("linear solve failed: {0}")]
    LinearSolveFailed(#[from] linalg::SolveError),
    #[error("active set still changing after {iterations} iterations")]
    ActiveSetCycling { iterations: usize },
    #[error("CFL violated: dt = {dt:.3e} exceeds {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("energy inequality violated at step {step}: defect {defect:.3e} > {tolerance:.3e}")]
    EnergyViolation { step: usize, defect: f64, tolerance: f64 },
    #[error("solution never separated from the pure phases (final delta {delta:.3e})")]
    NotSeparated { delta: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

impl Error {
    /// Strips any `Step` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
