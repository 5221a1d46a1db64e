//! Cahn-Hilliard step with a prescribed divergence-free drift.
//!
//! One step solves
//!
//! ```text
//! (phi - phi_n)/dt + div(u_n phi_n,face) = lap mu
//! mu = alpha (phi - phi_n)/dt - lap phi + F'(phi) - theta0 phi_n
//! ```
//!
//! with `F'` replaced by an obstacle multiplier in the double-obstacle case.
//! The log case runs Newton on `phi` alone (`mu` is an explicit function of
//! `phi`); every correction has its mean fixed to the exact value, so the
//! discrete mass is conserved independently of the inner Krylov tolerance.
//! The obstacle case runs a primal-dual active set iteration on the coupled
//! `(phi, mu)` system.

use std::sync::Arc;

use crate::grid::{advect_scalar, laplacian_into, laplacian_neumann, Grid, MacVector, ScalarField};
use crate::linalg::{self, CsrMatrix, LinearOperator, Method, SolverOptions};
use crate::potential::{
    complementarity_residual_scalar, f_prime_unchecked, f_second_unchecked, PotentialKind,
    SAFE_MARGIN,
};
use crate::spectral::{NeumannSpectral, SpectralPreconditioner};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CHState {
    pub t: f64,
    pub phi: ScalarField,
    pub mu: ScalarField,
}

impl CHState {
    /// State at `t = 0` with the chemical potential of `phi`. For the obstacle
    /// potential `phi` must lie strictly inside `(-1, 1)` (zero multiplier).
    pub fn new(phi: ScalarField, kind: &PotentialKind) -> Result<Self> {
        let mu = chemical_potential(&phi, kind)?;
        Ok(Self { t: 0.0, phi, mu })
    }
}

/// `mu = -lap phi + Psi'(phi)`; for the obstacle potential the multiplier is
/// taken as zero, which requires `|phi| < 1`.
pub fn chemical_potential(phi: &ScalarField, kind: &PotentialKind) -> Result<ScalarField> {
    if phi.max_abs() >= 1.0 {
        return Err(Error::Domain(phi.max_abs()));
    }
    let lap = laplacian_neumann(phi);
    let mu = match *kind {
        PotentialKind::FloryHuggins { theta, theta0 } => {
            phi.zip_map(&lap, |p, l| -l + f_prime_unchecked(p, theta) - theta0 * p)
        }
        PotentialKind::DoubleObstacle { theta0 } => phi.zip_map(&lap, |p, l| -l - theta0 * p),
    };
    Ok(mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CHStepConfig {
    pub dt: f64,
    /// Viscous regularisation; 0 gives the plain Cahn-Hilliard equation.
    pub alpha: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub linear_tol: f64,
    /// `None` means `10 * nx * ny`.
    pub linear_max: Option<usize>,
    /// Semismooth parameter of the obstacle active-set iteration.
    pub obstacle_c: f64,
    pub active_set_max: usize,
    pub method: Method,
}

impl CHStepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            alpha: 0.0,
            newton_tol: 1e-10,
            newton_max: 50,
            linear_tol: 1e-10,
            linear_max: None,
            obstacle_c: 100.0,
            active_set_max: 100,
            method: Method::Auto,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.obstacle_c > 0.0) {
            return Err(Error::InvalidInput("obstacle_c must be positive".into()));
        }
        Ok(())
    }

    fn linear_options(&self, grid: &Grid, n: usize) -> SolverOptions {
        SolverOptions {
            tol: self.linear_tol,
            max_iter: self.linear_max.unwrap_or(10 * grid.n_cells()).max(n / 2),
        }
    }
}

/// Advective CFL bound `dt <= 0.5 min(hx, hy) / max|u|`.
pub fn check_cfl(u: &MacVector, dt: f64) -> Result<()> {
    let umax = u.max_abs();
    if umax > 0.0 {
        let limit = 0.5 * u.grid().min_spacing() / umax;
        if dt > limit {
            return Err(Error::CflViolation { dt, limit });
        }
    }
    Ok(())
}

/// Neumann Laplacian as a CSR matrix (same stencil as `laplacian_neumann`).
pub fn laplacian_csr(g: &Grid) -> CsrMatrix {
    weighted_laplacian_csr(g, None)
}

/// `div(M grad .)` with face coefficients `M` (interior faces only; walls
/// carry no flux). `None` means `M = 1`.
pub fn weighted_laplacian_csr(g: &Grid, m: Option<&MacVector>) -> CsrMatrix {
    let ax = 1.0 / (g.hx * g.hx);
    let ay = 1.0 / (g.hy * g.hy);
    let mx = |i: usize, j: usize| m.map_or(1.0, |m| m.ux[g.xface(i, j)]);
    let my = |i: usize, j: usize| m.map_or(1.0, |m| m.uy[g.yface(i, j)]);
    let mut t = Vec::with_capacity(5 * g.n_cells());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let mut d = 0.0;
            if i > 0 {
                let c = ax * mx(i, j);
                t.push((k, k - 1, c));
                d -= c;
            }
            if i + 1 < g.nx {
                let c = ax * mx(i + 1, j);
                t.push((k, k + 1, c));
                d -= c;
            }
            if j > 0 {
                let c = ay * my(i, j);
                t.push((k, k - g.nx, c));
                d -= c;
            }
            if j + 1 < g.ny {
                let c = ay * my(i, j + 1);
                t.push((k, k + g.nx, c));
                d -= c;
            }
            t.push((k, k, d));
        }
    }
    CsrMatrix::from_triplets(g.n_cells(), &t)
}

/// Sparsity template of the Newton matrix `I - alpha Lm + dt Lm L - dt Lm D`.
#[derive(Debug, Clone)]
struct Template {
    lm: CsrMatrix,
    jac: CsrMatrix,
    /// `Lm` and `Lm L` entries aligned with `jac`'s storage.
    lm_vals: Vec<f64>,
    lml_vals: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Template {
    fn new(lap: &CsrMatrix, lm: CsrMatrix) -> Self {
        let lml = lm.matmul(lap);
        let n = lap.n();
        let mut pattern = Vec::with_capacity(lml.nnz() + n);
        for r in 0..n {
            pattern.push((r, r, 0.0));
            for m in [&lm, &lml] {
                let (cols, _) = m.row(r);
                pattern.extend(cols.iter().map(|&c| (r, c, 0.0)));
            }
        }
        let jac = CsrMatrix::from_triplets(n, &pattern);
        let mut lm_vals = vec![0.0; jac.nnz()];
        let mut lml_vals = vec![0.0; jac.nnz()];
        let mut diag_pos = vec![0; n];
        for r in 0..n {
            let base = jac.row_ptr()[r];
            let (cols, _) = jac.row(r);
            let find = |c: usize| base + cols.binary_search(&c).expect("pattern covers operator");
            diag_pos[r] = find(r);
            for (m, out) in [(&lm, &mut lm_vals), (&lml, &mut lml_vals)] {
                let (mc, mv) = m.row(r);
                for (&c, &v) in mc.iter().zip(mv) {
                    out[find(c)] = v;
                }
            }
        }
        Self {
            lm,
            jac,
            lm_vals,
            lml_vals,
            diag_pos,
        }
    }
}

impl Template {
    /// Same pattern with the face-weighted operator `div(m grad)` in place
    /// of the unit Laplacian; `self` must be the unit template.
    fn reweighted(&self, g: &Grid, lap: &CsrMatrix, m: &MacVector) -> Self {
        let mut out = self.clone();
        let ax = 1.0 / (g.hx * g.hx);
        let ay = 1.0 / (g.hy * g.hy);
        let ptr = out.lm.row_ptr().to_vec();
        let cols = out.lm.col_idx().to_vec();
        let vals = out.lm.values_mut();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let mut d = 0.0;
                let mut diag = None;
                for p in ptr[k]..ptr[k + 1] {
                    let c = cols[p];
                    let w = if c == k {
                        diag = Some(p);
                        continue;
                    } else if c + 1 == k && i > 0 {
                        ax * m.ux[g.xface(i, j)]
                    } else if c == k + 1 && i + 1 < g.nx {
                        ax * m.ux[g.xface(i + 1, j)]
                    } else if c + g.nx == k {
                        ay * m.uy[g.yface(i, j)]
                    } else {
                        ay * m.uy[g.yface(i, j + 1)]
                    };
                    vals[p] = w;
                    d -= w;
                }
                vals[diag.expect("diagonal present")] = d;
            }
        }
        out.lm_vals.iter_mut().for_each(|v| *v = 0.0);
        out.lml_vals.iter_mut().for_each(|v| *v = 0.0);
        let jptr = out.jac.row_ptr();
        let jcols = out.jac.col_idx();
        for r in 0..g.n_cells() {
            let row = &jcols[jptr[r]..jptr[r + 1]];
            let find = |c: usize| jptr[r] + row.binary_search(&c).expect("pattern covers operator");
            let (mc, mv) = out.lm.row(r);
            for (&c, &v) in mc.iter().zip(mv) {
                out.lm_vals[find(c)] = v;
                let (lc, lv) = lap.row(c);
                for (&c2, &w) in lc.iter().zip(lv) {
                    out.lml_vals[find(c2)] += v * w;
                }
            }
        }
        out
    }
}

/// Grid-dependent operators reused across steps.
#[derive(Debug)]
struct Operators {
    grid: Grid,
    lap: CsrMatrix,
    unit: Template,
    spectral: NeumannSpectral,
}

impl Operators {
    fn new(grid: Grid) -> Self {
        let lap = laplacian_csr(&grid);
        let unit = Template::new(&lap, lap.clone());
        Self { grid, lap, unit, spectral: NeumannSpectral::new(grid) }
    }
}

/// Reusable Cahn-Hilliard stepper for one grid.
#[derive(Debug, Clone)]
pub struct ChStepper {
    ops: Arc<Operators>,
}

impl ChStepper {
    pub fn new(grid: Grid) -> Self {
        Self {
            ops: Arc::new(Operators::new(grid)),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.ops.grid
    }

    pub fn step(
        &self,
        state: &CHState,
        u: &MacVector,
        cfg: &CHStepConfig,
        kind: &PotentialKind,
    ) -> Result<CHState> {
        self.step_with_mobility(state, u, cfg, kind, None)
    }

    /// Same step with `lap mu` replaced by `div(M grad mu)` for positive face
    /// coefficients `M`.
    pub fn step_with_mobility(
        &self,
        state: &CHState,
        u: &MacVector,
        cfg: &CHStepConfig,
        kind: &PotentialKind,
        mobility: Option<&MacVector>,
    ) -> Result<CHState> {
        cfg.validate()?;
        kind.validate()?;
        let g = self.ops.grid;
        g.check_same(state.phi.grid())?;
        g.check_same(u.grid())?;
        check_cfl(u, cfg.dt)?;
        let adv = if u.is_zero() {
            None
        } else {
            Some(advect_scalar(u, &state.phi))
        };
        let owned;
        let tpl = match mobility {
            Some(m) => {
                g.check_same(m.grid())?;
                owned = self.ops.unit.reweighted(&g, &self.ops.lap, m);
                &owned
            }
            None => &self.ops.unit,
        };
        match *kind {
            PotentialKind::FloryHuggins { theta, theta0 } => {
                self.newton_log(tpl, state, adv.as_ref(), cfg, theta, theta0)
            }
            PotentialKind::DoubleObstacle { theta0 } => {
                self.active_set_obstacle(tpl, state, adv.as_ref(), cfg, theta0)
            }
        }
    }

    /// `mu(phi)` and the scaled residual `dt * R1` of the log system.
    #[allow(clippy::too_many_arguments)]
    fn log_residual(
        &self,
        lm: &CsrMatrix,
        phi: &[f64],
        phi_n: &[f64],
        adv: Option<&ScalarField>,
        cfg: &CHStepConfig,
        theta: f64,
        theta0: f64,
        mu: &mut [f64],
        res: &mut [f64],
    ) {
        let g = &self.ops.grid;
        let dt = cfg.dt;
        laplacian_into(g, phi, res);
        for k in 0..phi.len() {
            mu[k] = cfg.alpha * (phi[k] - phi_n[k]) / dt - res[k] + f_prime_unchecked(phi[k], theta)
                - theta0 * phi_n[k];
        }
        lm.apply(mu, res);
        for k in 0..phi.len() {
            let a = adv.map_or(0.0, |a| a.values()[k]);
            res[k] = (phi[k] - phi_n[k]) + dt * a - dt * res[k];
        }
    }

    fn newton_log(
        &self,
        tpl: &Template,
        state: &CHState,
        adv: Option<&ScalarField>,
        cfg: &CHStepConfig,
        theta: f64,
        theta0: f64,
    ) -> Result<CHState> {
        let g = self.ops.grid;
        let n = g.n_cells();
        let bound = 1.0 - SAFE_MARGIN;
        let phi_n = state.phi.values();
        if state.phi.max_abs() >= 1.0 || !state.phi.is_finite() {
            return Err(Error::Domain(state.phi.max_abs()));
        }
        let lm = &tpl.lm;
        let mut phi: Vec<f64> = phi_n.iter().map(|&p| p.clamp(-bound, bound)).collect();
        let mut mu = vec![0.0; n];
        let mut res = vec![0.0; n];
        self.log_residual(lm, &phi, phi_n, adv, cfg, theta, theta0, &mut mu, &mut res);
        let opts = cfg.linear_options(&g, n);
        let mut jac = tpl.jac.clone();
        let mut trial = vec![0.0; n];
        let mut trial_mu = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for iter in 0..=cfg.newton_max {
            let rmax = res.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
            if !rmax.is_finite() {
                break;
            }
            if rmax <= cfg.newton_tol {
                return Ok(CHState {
                    t: state.t + cfg.dt,
                    phi: ScalarField::from_vec(g, phi)?,
                    mu: ScalarField::from_vec(g, mu)?,
                });
            }
            if iter == cfg.newton_max {
                break;
            }
            {
                let cols = tpl.jac.col_idx();
                let vals = jac.values_mut();
                for (p, v) in vals.iter_mut().enumerate() {
                    let c = cols[p];
                    *v = -cfg.alpha * tpl.lm_vals[p] + cfg.dt * tpl.lml_vals[p]
                        - cfg.dt * tpl.lm_vals[p] * f_second_unchecked(phi[c], theta);
                }
                for &d in &tpl.diag_pos {
                    vals[d] += 1.0;
                }
            }
            for k in 0..n {
                rhs[k] = -res[k];
                delta[k] = 0.0;
            }
            if g.is_1d() || linalg::uses_direct(&jac, cfg.method) {
                linalg::solve(&jac, &rhs, &mut delta, cfg.method, &opts)?;
            } else {
                // frozen-coefficient symbol at unit mobility and mean F''
                let cbar = phi.iter().map(|&p| f_second_unchecked(p, theta)).sum::<f64>() / n as f64;
                let (alpha, dt) = (cfg.alpha, cfg.dt);
                let pre = SpectralPreconditioner {
                    plan: &self.ops.spectral,
                    weights: self.ops.spectral.inverse_symbol(|l| 1.0 - alpha * l + dt * l * l - dt * cbar * l),
                };
                linalg::pbicgstab(&jac, &pre, &rhs, &mut delta, &opts)?;
            }
            // the exact correction has mean -mean(R) because 1^T J = 1^T
            let shift = -res.iter().sum::<f64>() / n as f64 - delta.iter().sum::<f64>() / n as f64;
            delta.iter_mut().for_each(|d| *d += shift);

            let r2 = res.iter().map(|r| r * r).sum::<f64>();
            let mut step = 1.0;
            loop {
                let inside = phi
                    .iter()
                    .zip(&delta)
                    .all(|(&p, &d)| (p + step * d).abs() <= bound);
                if inside {
                    for k in 0..n {
                        trial[k] = phi[k] + step * delta[k];
                    }
                    self.log_residual(lm, &trial, phi_n, adv, cfg, theta, theta0, &mut trial_mu, &mut trial_res);
                    let t2 = trial_res.iter().map(|r| r * r).sum::<f64>();
                    if t2 < r2 || step < 1e-9 {
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-12 {
                    // no trial stayed inside the safe interval
                    for k in 0..n {
                        trial[k] = (phi[k] + step * delta[k]).clamp(-bound, bound);
                    }
                    self.log_residual(lm, &trial, phi_n, adv, cfg, theta, theta0, &mut trial_mu, &mut trial_res);
                    break;
                }
            }
            std::mem::swap(&mut phi, &mut trial);
            std::mem::swap(&mut mu, &mut trial_mu);
            std::mem::swap(&mut res, &mut trial_res);
        }
        let residual = res.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        Err(Error::NewtonDiverged {
            iterations: cfg.newton_max,
            residual,
            iterate: phi,
        })
    }

    fn active_set_obstacle(
        &self,
        tpl: &Template,
        state: &CHState,
        adv: Option<&ScalarField>,
        cfg: &CHStepConfig,
        theta0: f64,
    ) -> Result<CHState> {
        let g = self.ops.grid;
        let n = g.n_cells();
        let dt = cfg.dt;
        let c = cfg.obstacle_c;
        let phi_n = state.phi.values();
        if state.phi.max_abs() > 1.0 || !state.phi.is_finite() {
            return Err(Error::Domain(state.phi.max_abs()));
        }
        // 0 inactive, +1 upper bound active, -1 lower bound active
        let mut active: Vec<i8> = phi_n
            .iter()
            .map(|&p| if p >= 1.0 { 1 } else if p <= -1.0 { -1 } else { 0 })
            .collect();
        let method = match cfg.method {
            Method::Krylov => Method::Krylov,
            _ => Method::Direct,
        };
        let opts = cfg.linear_options(&g, 2 * n);
        let lap = &self.ops.lap;
        let lm = &tpl.lm;
        let mut x = vec![0.0; 2 * n];
        let mut lap_phi = vec![0.0; n];
        for iter in 0..cfg.active_set_max {
            let mut t = Vec::with_capacity(2 * n * 6);
            let mut b = vec![0.0; 2 * n];
            for k in 0..n {
                let a = adv.map_or(0.0, |a| a.values()[k]);
                // mass balance: phi - dt Lm mu = phi_n - dt adv
                let (mass_row, other) = if active[k] == 0 {
                    (2 * k, 2 * k + 1)
                } else {
                    (2 * k + 1, 2 * k)
                };
                t.push((mass_row, 2 * k, 1.0));
                let (cols, vals) = lm.row(k);
                for (&m, &v) in cols.iter().zip(vals) {
                    t.push((mass_row, 2 * m + 1, -dt * v));
                }
                b[mass_row] = phi_n[k] - dt * a;
                if active[k] == 0 {
                    // mu - alpha/dt phi + L phi = -(alpha/dt + theta0) phi_n
                    t.push((other, 2 * k + 1, 1.0));
                    t.push((other, 2 * k, -cfg.alpha / dt));
                    let (cols, vals) = lap.row(k);
                    for (&m, &v) in cols.iter().zip(vals) {
                        t.push((other, 2 * m, v));
                    }
                    b[other] = -(cfg.alpha / dt + theta0) * phi_n[k];
                } else {
                    t.push((other, 2 * k, 1.0));
                    b[other] = active[k] as f64;
                }
            }
            let m = CsrMatrix::from_triplets(2 * n, &t);
            linalg::solve(&m, &b, &mut x, method, &opts)?;
            let phi: Vec<f64> = (0..n)
                .map(|k| if active[k] == 0 { x[2 * k] } else { active[k] as f64 })
                .collect();
            let mu: Vec<f64> = (0..n).map(|k| x[2 * k + 1]).collect();
            laplacian_into(&g, &phi, &mut lap_phi);
            let lambda: Vec<f64> = (0..n)
                .map(|k| {
                    if active[k] == 0 {
                        0.0
                    } else {
                        mu[k] - cfg.alpha * (phi[k] - phi_n[k]) / dt + lap_phi[k] + theta0 * phi_n[k]
                    }
                })
                .collect();
            let next: Vec<i8> = (0..n)
                .map(|k| {
                    if lambda[k] + c * (phi[k] - 1.0) > 0.0 {
                        1
                    } else if lambda[k] + c * (phi[k] + 1.0) < 0.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            if next == active {
                let worst = (0..n)
                    .map(|k| complementarity_residual_scalar(phi[k], lambda[k], c).abs())
                    .fold(0.0_f64, f64::max);
                if worst > 1e-9 {
                    return Err(Error::NewtonDiverged {
                        iterations: iter + 1,
                        residual: worst,
                        iterate: phi,
                    });
                }
                return Ok(CHState {
                    t: state.t + dt,
                    phi: ScalarField::from_vec(g, phi)?,
                    mu: ScalarField::from_vec(g, mu)?,
                });
            }
            active = next;
        }
        Err(Error::ActiveSetCycling {
            iterations: cfg.active_set_max,
        })
    }
}

/// One implicit step; see the module docs for the discrete system.
pub fn ch_step(
    state: &CHState,
    u: &MacVector,
    cfg: &CHStepConfig,
    kind: &PotentialKind,
) -> Result<CHState> {
    ChStepper::new(*state.phi.grid()).step(state, u, cfg, kind)
}

/// Number of fixed steps covering `[0, t_end]`; `t_end` must be a multiple of `dt`.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput(format!("need t_end >= 0 and dt > 0 (t_end={t_end}, dt={dt})")));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Runs `ch_step` to `t_end` with a frozen drift `u`.
pub fn ch_run(
    stepper: &ChStepper,
    start: &CHState,
    u: &MacVector,
    cfg: &CHStepConfig,
    kind: &PotentialKind,
    t_end: f64,
) -> Result<CHState> {
    let steps = step_count(t_end, cfg.dt)?;
    let mut s = start.clone();
    for step in 0..steps {
        s = stepper.step(&s, u, cfg, kind).map_err(|e| Error::Step {
            step: step + 1,
            source: Box::new(e),
        })?;
    }
    Ok(s)
}

/// Runs the same problem for a decreasing list of viscous coefficients and
/// returns the states at `t_end`; runs are independent and execute in
/// parallel.
pub fn vanishing_viscosity_suite(
    phi0: &ScalarField,
    u: &MacVector,
    alphas: &[f64],
    base: &CHStepConfig,
    kind: &PotentialKind,
    t_end: f64,
) -> Result<Vec<Result<CHState>>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("empty alpha list".into()));
    }
    if alphas.iter().any(|&a| !(a >= 0.0)) || alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "alphas must be non-negative and strictly decreasing".into(),
        ));
    }
    step_count(t_end, base.dt)?;
    let start = CHState::new(phi0.clone(), kind)?;
    let stepper = ChStepper::new(*phi0.grid());
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = alphas
            .iter()
            .map(|&alpha| {
                let cfg = base.with_alpha(alpha);
                let (stepper, start) = (&stepper, &start);
                scope.spawn(move || ch_run(stepper, start, u, &cfg, kind, t_end))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("suite worker panicked"))
            .collect()
    });
    Ok(results)
}

/// Quantities whose boundedness the regularity estimates assert.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorReport {
    /// `sup_t |grad mu(t)|_{L2}`.
    pub sup_grad_mu: f64,
    /// `int |grad d_t phi|^2 dt`.
    pub int_grad_phit_sq: f64,
    /// `int (|grad mu|^2 + |lap mu|^2) dt`, the discrete `H1` norm of `grad mu`.
    pub int_grad_mu_h1_sq: f64,
    /// `int |grad u|^2 dt` of the drift.
    pub int_grad_u_sq: f64,
}

impl MonitorReport {
    pub fn is_finite(&self) -> bool {
        self.sup_grad_mu.is_finite()
            && self.int_grad_phit_sq.is_finite()
            && self.int_grad_mu_h1_sq.is_finite()
            && self.int_grad_u_sq.is_finite()
    }
}

/// Streaming accumulator behind [`estimate_monitor`].
#[derive(Debug, Clone, Default)]
pub struct EstimateMonitor {
    last: Option<(f64, ScalarField, MacVector)>,
    report: MonitorReport,
}

fn grad_sq(f: &ScalarField) -> f64 {
    let gr = crate::grid::gradient_to_faces(f);
    gr.dot(&gr)
}

impl EstimateMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the state at one time level and the drift used from it onwards.
    pub fn observe(&mut self, state: &CHState, u: &MacVector) {
        let gmu = grad_sq(&state.mu);
        self.report.sup_grad_mu = self.report.sup_grad_mu.max(gmu.sqrt());
        if let Some((t0, phi0, u0)) = &self.last {
            let dt = state.t - t0;
            if dt > 0.0 {
                let dphi = state.phi.zip_map(phi0, |a, b| a - b);
                self.report.int_grad_phit_sq += grad_sq(&dphi) / dt;
                let lap = laplacian_neumann(&state.mu);
                self.report.int_grad_mu_h1_sq += dt * (gmu + lap.dot(&lap));
                self.report.int_grad_u_sq += dt * crate::grid::velocity_gradient_sq(u0);
            }
        }
        self.last = Some((state.t, state.phi.clone(), u.clone()));
    }

    pub fn report(&self) -> MonitorReport {
        self.report
    }
}

/// Summarises a stored run; `us[k]` is the drift applied from `states[k]`.
pub fn estimate_monitor(states: &[CHState], us: &[MacVector]) -> Result<MonitorReport> {
    if states.len() != us.len() {
        return Err(Error::InvalidInput(format!(
            "{} states but {} velocities",
            states.len(),
            us.len()
        )));
    }
    let mut m = EstimateMonitor::new();
    for (s, u) in states.iter().zip(us) {
        m.observe(s, u);
    }
    Ok(m.report())
}

/// Checks that `sup |grad mu|` does not grow as `int |grad u|^2` shrinks.
pub fn monitor_trend_non_increasing(reports: &[MonitorReport], tol: f64) -> bool {
    let mut sorted: Vec<&MonitorReport> = reports.iter().collect();
    sorted.sort_by(|a, b| b.int_grad_u_sq.total_cmp(&a.int_grad_u_sq));
    sorted
        .windows(2)
        .all(|w| w[1].sup_grad_mu <= w[0].sup_grad_mu + tol)
}
