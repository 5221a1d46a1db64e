//! Stationary Cahn-Hilliard states with prescribed mean.
//!
//! Unknowns are the phase field and the constant chemical potential
//! `mu_inf`; the mean constraint is one of the equations, so every Newton
//! iterate after the first full step carries the target mass exactly.

use crate::cahn_hilliard::laplacian_csr;
use crate::coupled::State;
use crate::diagnostics::{chemical_dissipation, mu_oscillation};
use crate::grid::{laplacian_into, Grid, ScalarField};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::potential::{
    complementarity_residual_scalar, f_prime_unchecked, f_second_unchecked, PotentialKind,
    SAFE_MARGIN,
};
use crate::{Error, Result};

/// Newton iteration cap.
pub const MAX_NEWTON: usize = 100;
/// Semismooth parameter of the obstacle active-set update.
pub const OBSTACLE_C: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub phi_inf: ScalarField,
    pub mu_inf: f64,
    /// `|-Lap phi + Psi'(phi) - mu_inf|_{L2}`; for the obstacle potential the
    /// larger of that and the sup-norm complementarity residual.
    pub residual: f64,
    /// `1 - max|phi_inf|`.
    pub separation: f64,
    /// Newton (or active-set) updates taken.
    pub iterations: usize,
    /// Obstacle multiplier, `None` for the log potential.
    pub lambda: Option<ScalarField>,
}

/// Distance of a state from the stationary set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityResidual {
    pub grad_mu: f64,
    pub u: f64,
    pub mu_oscillation: f64,
}

pub fn stationarity_residual(state: &State) -> StationarityResidual {
    StationarityResidual {
        grad_mu: chemical_dissipation(&state.mu).sqrt(),
        u: state.u.norm_l2(),
        mu_oscillation: mu_oscillation(&state.mu),
    }
}

fn l2(g: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * g.cell_area()).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Solves `A dphi - dmu 1 = r`, `mean(dphi) = s` through the Schur
/// complement of the scalar border.
fn bordered_solve(a: &CsrMatrix, r: &[f64], ones: &[f64], s: f64) -> Result<(Vec<f64>, f64)> {
    let lu = BandedLu::factor(a)?;
    let mut x = r.to_vec();
    lu.solve(&mut x);
    let mut y = ones.to_vec();
    lu.solve(&mut y);
    let my = mean(&y);
    if my == 0.0 || !my.is_finite() {
        return Err(Error::LinearSolveFailed(crate::linalg::SolveError::Singular {
            column: a.n(),
        }));
    }
    let dmu = (s - mean(&x)) / my;
    for (xi, yi) in x.iter_mut().zip(&y) {
        *xi += dmu * yi;
    }
    Ok((x, dmu))
}

/// Damped Newton (log potential) or primal-dual active set (obstacle) for
/// `-Lap phi + Psi'(phi) = mu_inf`, `mean(phi) = m`.
pub fn stationary_solve(
    phi_guess: &ScalarField,
    m: f64,
    kind: &PotentialKind,
    tol: f64,
) -> Result<StationarySolution> {
    kind.validate()?;
    if !(m.abs() < 1.0) {
        return Err(Error::Domain(m));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if !phi_guess.is_finite() {
        return Err(Error::InvalidInput("non-finite initial guess".into()));
    }
    match *kind {
        PotentialKind::FloryHuggins { theta, theta0 } => solve_log(phi_guess, m, theta, theta0, tol),
        PotentialKind::DoubleObstacle { theta0 } => solve_obstacle(phi_guess, m, theta0, tol),
    }
}

fn solve_log(guess: &ScalarField, m: f64, theta: f64, theta0: f64, tol: f64) -> Result<StationarySolution> {
    let g = *guess.grid();
    let n = g.n_cells();
    let bound = 1.0 - SAFE_MARGIN;
    if guess.max_abs() >= 1.0 {
        return Err(Error::Domain(guess.max_abs()));
    }
    let shift = m - guess.mean();
    let mut phi: Vec<f64> = guess
        .values()
        .iter()
        .map(|&p| if shift.abs() > 1e-14 { (p + shift).clamp(-bound, bound) } else { p })
        .collect();
    let lap = laplacian_csr(&g);
    let ones = vec![1.0; n];
    let mut lap_phi = vec![0.0; n];

    // w = -Lap phi + Psi'(phi), residual r = w - mu
    let chem = |phi: &[f64], lap_phi: &mut Vec<f64>| -> Vec<f64> {
        laplacian_into(&g, phi, lap_phi);
        phi.iter()
            .zip(lap_phi.iter())
            .map(|(&p, &l)| -l + f_prime_unchecked(p, theta) - theta0 * p)
            .collect()
    };
    let mut w = chem(&phi, &mut lap_phi);
    let mut mu = if w.iter().all(|&v| v == w[0]) { w[0] } else { mean(&w) };
    let merit = |w: &[f64], mu: f64, phi: &[f64]| {
        let r: Vec<f64> = w.iter().map(|v| v - mu).collect();
        let c = mean(phi) - m;
        (l2(&g, &r), c)
    };
    let (mut res, mut cons) = merit(&w, mu, &phi);
    let mut jac = lap.clone();
    for iter in 0..=MAX_NEWTON {
        if res <= tol && cons.abs() <= 1e-12 {
            let phi_inf = ScalarField::from_vec(g, phi)?;
            let separation = 1.0 - phi_inf.max_abs();
            return Ok(StationarySolution {
                phi_inf,
                mu_inf: mu,
                residual: res,
                separation,
                iterations: iter,
                lambda: None,
            });
        }
        if iter == MAX_NEWTON {
            break;
        }
        {
            let cols = lap.col_idx();
            let ptr = lap.row_ptr();
            let vals = jac.values_mut();
            for (v, l) in vals.iter_mut().zip(lap.values()) {
                *v = -l;
            }
            for r in 0..n {
                for p in ptr[r]..ptr[r + 1] {
                    if cols[p] == r {
                        vals[p] += f_second_unchecked(phi[r], theta) - theta0;
                    }
                }
            }
        }
        let rhs: Vec<f64> = w.iter().map(|v| mu - v).collect();
        let (dphi, dmu) = bordered_solve(&jac, &rhs, &ones, m - mean(&phi))?;
        let base = res * res + cons * cons;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&dphi).map(|(p, d)| p + step * d).collect();
            if trial.iter().all(|p| p.abs() <= bound) {
                let tw = chem(&trial, &mut lap_phi);
                let tmu = mu + step * dmu;
                let (tr, tc) = merit(&tw, tmu, &trial);
                if tr * tr + tc * tc < base || step < 1e-10 {
                    phi = trial;
                    w = tw;
                    mu = tmu;
                    res = tr;
                    cons = tc;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NewtonDiverged {
                    iterations: iter + 1,
                    residual: res,
                    iterate: phi,
                });
            }
        }
    }
    Err(Error::NewtonDiverged {
        iterations: MAX_NEWTON,
        residual: res,
        iterate: phi,
    })
}

fn solve_obstacle(guess: &ScalarField, m: f64, theta0: f64, tol: f64) -> Result<StationarySolution> {
    let g = *guess.grid();
    let n = g.n_cells();
    if guess.max_abs() > 1.0 {
        return Err(Error::Domain(guess.max_abs()));
    }
    let lap = laplacian_csr(&g);
    let mut active: Vec<i8> = guess
        .values()
        .iter()
        .map(|&p| if p >= 1.0 { 1 } else if p <= -1.0 { -1 } else { 0 })
        .collect();
    let mut lap_phi = vec![0.0; n];
    for iter in 0..MAX_NEWTON {
        let mut t = Vec::with_capacity(5 * n);
        let mut f = vec![0.0; n];
        let mut border = vec![0.0; n];
        for k in 0..n {
            if active[k] == 0 {
                let (cols, vals) = lap.row(k);
                for (&c, &v) in cols.iter().zip(vals) {
                    t.push((k, c, if c == k { -v - theta0 } else { -v }));
                }
                border[k] = 1.0;
            } else {
                t.push((k, k, 1.0));
                f[k] = active[k] as f64;
            }
        }
        let a = CsrMatrix::from_triplets(n, &t);
        let lu = BandedLu::factor(&a)?;
        lu.solve(&mut f);
        let mut y = border.clone();
        lu.solve(&mut y);
        let my = mean(&y);
        if my == 0.0 {
            return Err(Error::LinearSolveFailed(crate::linalg::SolveError::Singular { column: n }));
        }
        let mu = (m - mean(&f)) / my;
        let phi: Vec<f64> = (0..n)
            .map(|k| if active[k] == 0 { f[k] + mu * y[k] } else { active[k] as f64 })
            .collect();
        laplacian_into(&g, &phi, &mut lap_phi);
        let lambda: Vec<f64> = (0..n)
            .map(|k| if active[k] == 0 { 0.0 } else { mu + lap_phi[k] + theta0 * phi[k] })
            .collect();
        let next: Vec<i8> = (0..n)
            .map(|k| {
                if lambda[k] + OBSTACLE_C * (phi[k] - 1.0) > 0.0 {
                    1
                } else if lambda[k] + OBSTACLE_C * (phi[k] + 1.0) < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect();
        if next == active {
            let stat: Vec<f64> = (0..n)
                .map(|k| -lap_phi[k] - theta0 * phi[k] + lambda[k] - mu)
                .collect();
            let comp = (0..n)
                .map(|k| complementarity_residual_scalar(phi[k], lambda[k], OBSTACLE_C).abs())
                .fold(0.0_f64, f64::max);
            let residual = l2(&g, &stat).max(comp);
            if residual > tol {
                return Err(Error::NewtonDiverged {
                    iterations: iter + 1,
                    residual,
                    iterate: phi,
                });
            }
            let phi_inf = ScalarField::from_vec(g, phi)?;
            let separation = 1.0 - phi_inf.max_abs();
            return Ok(StationarySolution {
                phi_inf,
                mu_inf: mu,
                residual,
                separation,
                iterations: iter + 1,
                lambda: Some(ScalarField::from_vec(g, lambda)?),
            });
        }
        active = next;
    }
    Err(Error::ActiveSetCycling { iterations: MAX_NEWTON })
}
