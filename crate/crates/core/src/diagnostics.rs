//! Per-step observables: energies, dissipations, mass, phase bounds and the
//! separation, plus the two-run weak-strong distance.

use crate::cahn_hilliard::CHState;
use crate::coupled::State;
use crate::grid::{gradient_to_faces, interpolate_cell_to_face, laplacian_neumann, MacVector, ScalarField};
use crate::momentum::{nu_of_phi, rho_of_phi, viscous_dissipation, ModelParams};
use crate::potential::{f_prime_unchecked, f_value_unchecked, PotentialKind};
use crate::{Error, Result};

/// Column names of the diagnostics CSV, in order.
pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "mass",
    "E_total",
    "E_kin",
    "E_free",
    "D_visc",
    "D_chem",
    "u_L2",
    "grad_mu_L2",
    "grad_mu_H1",
    "phi_min",
    "phi_max",
    "sep_delta",
    "stat_mu_residual",
    "energy_defect",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub e_total: f64,
    pub e_kin: f64,
    pub e_free: f64,
    pub d_visc: f64,
    pub d_chem: f64,
    pub u_l2: f64,
    pub grad_mu_l2: f64,
    pub grad_mu_h1: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub sep_delta: f64,
    pub stat_mu_residual: f64,
    /// `E(n+1) - E(n) + dt (D_visc + D_chem)`; absent on the first record.
    pub energy_defect: Option<f64>,
}

impl DiagnosticsRecord {
    /// Values in [`CSV_COLUMNS`] order; a missing defect is written as 0.
    pub fn to_row(&self) -> [f64; 15] {
        [
            self.t,
            self.mass,
            self.e_total,
            self.e_kin,
            self.e_free,
            self.d_visc,
            self.d_chem,
            self.u_l2,
            self.grad_mu_l2,
            self.grad_mu_h1,
            self.phi_min,
            self.phi_max,
            self.sep_delta,
            self.stat_mu_residual,
            self.energy_defect.unwrap_or(0.0),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_row().iter().all(|v| v.is_finite())
    }
}

pub type DiagnosticsSeries = Vec<DiagnosticsRecord>;

/// `sum (|grad phi|^2 / 2 + Psi(phi)) hx hy` with face gradients.
pub fn free_energy(phi: &ScalarField, kind: &PotentialKind) -> f64 {
    let gr = gradient_to_faces(phi);
    let bulk: f64 = phi
        .values()
        .iter()
        .map(|&p| kind.psi(p).unwrap_or(f64::NAN))
        .sum();
    0.5 * gr.dot(&gr) + bulk * phi.grid().cell_area()
}

/// `sum rho_f |u|^2 / 2 hx hy` over faces.
pub fn kinetic_energy(u: &MacVector, phi: &ScalarField, params: &ModelParams) -> f64 {
    let rho = interpolate_cell_to_face(&rho_of_phi(phi, params));
    0.5 * u.zip_map(&rho, |a, r| r * a * a).dot(&ones(u))
}

fn ones(u: &MacVector) -> MacVector {
    u.zip_map(u, |_, _| 1.0)
}

pub fn total_energy(state: &State, params: &ModelParams) -> f64 {
    kinetic_energy(&state.u, &state.phi, params) + free_energy(&state.phi, &params.potential)
}

/// `|grad mu|_{L2}^2`.
pub fn chemical_dissipation(mu: &ScalarField) -> f64 {
    let g = gradient_to_faces(mu);
    g.dot(&g)
}

/// `|mu - mean(mu)|_{L2}`.
pub fn mu_oscillation(mu: &ScalarField) -> f64 {
    let m = mu.mean();
    mu.map(|v| v - m).norm_l2()
}

/// Observables of `state`; the energy defect needs the previous state.
pub fn record(state: &State, prev: Option<&State>, params: &ModelParams, dt: f64) -> DiagnosticsRecord {
    let e_kin = kinetic_energy(&state.u, &state.phi, params);
    let e_free = free_energy(&state.phi, &params.potential);
    let e_total = e_kin + e_free;
    let d_visc = if state.u.is_zero() {
        0.0
    } else {
        viscous_dissipation(&state.u, &nu_of_phi(&state.phi, params))
    };
    let d_chem = chemical_dissipation(&state.mu);
    let lap_mu = laplacian_neumann(&state.mu);
    let energy_defect = prev.map(|p| e_total - total_energy(p, params) + dt * (d_visc + d_chem));
    DiagnosticsRecord {
        t: state.t,
        mass: state.phi.mean(),
        e_total,
        e_kin,
        e_free,
        d_visc,
        d_chem,
        u_l2: state.u.norm_l2(),
        grad_mu_l2: d_chem.sqrt(),
        grad_mu_h1: (d_chem + lap_mu.dot(&lap_mu)).sqrt(),
        phi_min: state.phi.min(),
        phi_max: state.phi.max(),
        sep_delta: 1.0 - state.phi.max_abs(),
        stat_mu_residual: mu_oscillation(&state.mu),
        energy_defect,
    }
}

/// Closure of the discrete free-energy balance of one Cahn-Hilliard step.
///
/// Testing the step with `mu_{n+1}` gives, exactly,
///
/// ```text
/// E_free(n+1) - E_free(n) + dt (M grad mu, grad mu) - dt (u phi_f, grad mu)
///     + alpha/dt |d|^2 + |grad d|^2/2 + theta0/2 |d|^2 + R = 0,
/// ```
///
/// with `d = phi_{n+1} - phi_n` and `R >= 0` the convexity remainder of `F`
/// (or `(lambda, d)` for the obstacle). The returned value is the left side,
/// so it is zero up to the nonlinear solver residual.
pub fn ch_budget_residual(
    prev: &CHState,
    next: &CHState,
    u: &MacVector,
    alpha: f64,
    dt: f64,
    kind: &PotentialKind,
    mobility: Option<&MacVector>,
) -> f64 {
    let g = *next.phi.grid();
    let area = g.cell_area();
    let d = next.phi.zip_map(&prev.phi, |a, b| a - b);
    let gd = gradient_to_faces(&d);
    let gmu = gradient_to_faces(&next.mu);
    let chem = match mobility {
        Some(m) => gmu.zip_map(m, |a, b| a * b).dot(&gmu),
        None => gmu.dot(&gmu),
    };
    let transport = if u.is_zero() {
        0.0
    } else {
        u.zip_map(&interpolate_cell_to_face(&prev.phi), |a, b| a * b).dot(&gmu)
    };
    let theta0 = kind.theta0();
    let remainder = match *kind {
        PotentialKind::FloryHuggins { theta, .. } => {
            next.phi
                .values()
                .iter()
                .zip(prev.phi.values())
                .map(|(&a, &b)| {
                    f_prime_unchecked(a, theta) * (a - b) - f_value_unchecked(a, theta)
                        + f_value_unchecked(b, theta)
                })
                .sum::<f64>()
                * area
        }
        PotentialKind::DoubleObstacle { .. } => {
            let lap = laplacian_neumann(&next.phi);
            let mut s = 0.0;
            for k in 0..g.n_cells() {
                let dk = d.values()[k];
                let lambda = next.mu.values()[k] - alpha * dk / dt + lap.values()[k]
                    + theta0 * prev.phi.values()[k];
                if next.phi.values()[k].abs() == 1.0 {
                    s += lambda * dk;
                }
            }
            s * area
        }
    };
    free_energy(&next.phi, kind) - free_energy(&prev.phi, kind) + dt * chem - dt * transport
        + (alpha / dt + 0.5 * theta0) * d.dot(&d)
        + 0.5 * gd.dot(&gd)
        + remainder
}

/// Observed separation: the first recorded time after which `sep_delta`
/// stays above half its final value, and the smallest `sep_delta` from then
/// on.
pub fn separation_time(series: &[DiagnosticsRecord]) -> Result<(f64, f64)> {
    let last = series
        .last()
        .ok_or_else(|| Error::InvalidInput("empty diagnostics series".into()))?;
    if !(last.sep_delta >= 1e-6) {
        return Err(Error::NotSeparated {
            delta: last.sep_delta,
        });
    }
    let threshold = 0.5 * last.sep_delta;
    let mut start = series.len() - 1;
    while start > 0 && series[start - 1].sep_delta >= threshold {
        start -= 1;
    }
    let delta = series[start..]
        .iter()
        .map(|r| r.sep_delta)
        .fold(f64::INFINITY, f64::min);
    Ok((series[start].t, delta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakStrongDistance {
    pub t: f64,
    pub d: f64,
}

/// `sum rho(phi_a) |u_a - u_b|^2 / 2 + |lap_h (phi_a - phi_b)|^2 / 2`.
pub fn distance(a: &State, b: &State, params: &ModelParams) -> Result<f64> {
    a.phi.grid().check_same(b.phi.grid())?;
    let du = a.u.zip_map(&b.u, |x, y| x - y);
    let kin = kinetic_energy(&du, &a.phi, params);
    let lap = laplacian_neumann(&a.phi.zip_map(&b.phi, |x, y| x - y));
    Ok(kin + 0.5 * lap.dot(&lap))
}

/// Distance between two stored histories at their shared output times.
pub fn weak_strong_distance(
    a: &[State],
    b: &[State],
    params: &ModelParams,
) -> Result<Vec<WeakStrongDistance>> {
    let mut out = Vec::new();
    let mut j = 0;
    for sa in a {
        while j < b.len() && b[j].t < sa.t - 1e-12 * sa.t.abs().max(1.0) {
            j += 1;
        }
        if j == b.len() {
            break;
        }
        if (b[j].t - sa.t).abs() <= 1e-12 * sa.t.abs().max(1.0) {
            out.push(WeakStrongDistance {
                t: sa.t,
                d: distance(sa, &b[j], params)?,
            });
        }
    }
    Ok(out)
}
