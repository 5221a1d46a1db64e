//! Variable density and viscosity momentum step on the MAC grid.
//!
//! The predictor is
//!
//! ```text
//! rho_n (u* - u_n)/dt + K(m) u* + (rho_{n+1} - rho_n)/(2 dt) u* + A u*
//!     = -phi_n grad mu_{n+1} - grad p_n
//! ```
//!
//! with `m = rho_n u_n + M Jt` the mass flux, `K(m)` the skew part of the
//! centered transport `(m . grad)`, and `A = D*(nu D)` the full viscous
//! operator. A variable-coefficient projection with `1/rho_{n+1}` follows.
//! Testing with `u*` gives a discrete kinetic energy balance without
//! remainder, which the coupled energy check relies on.

use crate::cahn_hilliard::check_cfl;
use crate::grid::{
    divergence_mac, gradient_to_faces, interpolate_cell_to_face, node_index, node_weight, strain,
    strain_transpose, Grid, MacVector, ScalarField,
};
use crate::linalg::{bicgstab, pcg, CsrMatrix, FnOperator, LinearOperator, SolverOptions};
use crate::potential::PotentialKind;
use crate::spectral::{NeumannSpectral, SpectralPreconditioner};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub potential: PotentialKind,
}

impl ModelParams {
    pub fn new(rho1: f64, rho2: f64, nu1: f64, nu2: f64, potential: PotentialKind) -> Result<Self> {
        let p = Self {
            rho1,
            rho2,
            nu1,
            nu2,
            potential,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        self.potential.validate()
    }

    pub fn rho(&self, phi: f64) -> f64 {
        0.5 * self.rho1 * (1.0 + phi) + 0.5 * self.rho2 * (1.0 - phi)
    }

    pub fn nu(&self, phi: f64) -> f64 {
        0.5 * self.nu1 * (1.0 + phi) + 0.5 * self.nu2 * (1.0 - phi)
    }

    /// `(rho_*, rho^*)`.
    pub fn rho_bounds(&self) -> (f64, f64) {
        (self.rho1.min(self.rho2), self.rho1.max(self.rho2))
    }

    pub fn nu_bounds(&self) -> (f64, f64) {
        (self.nu1.min(self.nu2), self.nu1.max(self.nu2))
    }

    /// Exchanges the labels of the two fluids.
    pub fn swapped(&self) -> Self {
        Self {
            rho1: self.rho2,
            rho2: self.rho1,
            nu1: self.nu2,
            nu2: self.nu1,
            potential: self.potential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: MacVector,
    /// Reduced pressure.
    pub p: ScalarField,
}

impl FlowState {
    pub fn rest(grid: Grid) -> Self {
        Self {
            u: MacVector::zeros(grid),
            p: ScalarField::zeros(grid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    /// Relative tolerance of both the predictor and the pressure solve.
    pub tol: f64,
    /// `None` means ten times the number of unknowns.
    pub max_iter: Option<usize>,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: None,
        }
    }
}

pub fn rho_of_phi(phi: &ScalarField, params: &ModelParams) -> ScalarField {
    phi.map(|p| params.rho(p))
}

pub fn nu_of_phi(phi: &ScalarField, params: &ModelParams) -> ScalarField {
    phi.map(|p| params.nu(p))
}

/// Relative flux `Jt = -(rho1 - rho2)/2 grad mu` on faces; zero on walls.
pub fn j_flux(mu: &ScalarField, params: &ModelParams) -> MacVector {
    let a = 0.5 * (params.rho1 - params.rho2);
    gradient_to_faces(mu).scaled(-a)
}

/// Face coefficient `1 + dt phi_f^2 / rho_f` that the coupled scheme puts in
/// front of `grad mu` in the phase transport. It accounts for the capillary
/// velocity increment `-dt phi grad mu / rho` inside the advection, which
/// makes the capillary work cancel exactly in the energy balance.
pub fn capillary_mobility(phi_old: &ScalarField, params: &ModelParams, dt: f64) -> MacVector {
    let phi_f = interpolate_cell_to_face(phi_old);
    let rho_f = interpolate_cell_to_face(&rho_of_phi(phi_old, params));
    let mut m = phi_f.zip_map(&rho_f, |p, r| 1.0 + dt * p * p / r);
    let g = *phi_old.grid();
    for j in 0..g.ny {
        m.ux[g.xface(0, j)] = 1.0;
        m.ux[g.xface(g.nx, j)] = 1.0;
    }
    for i in 0..g.nx {
        m.uy[g.yface(i, 0)] = 1.0;
        m.uy[g.yface(i, g.ny)] = 1.0;
    }
    m
}

/// Cell viscosity averaged to the cell corners (over the existing
/// neighbours).
pub fn node_viscosity(g: &Grid, nu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let mut s = 0.0;
            let mut c = 0.0;
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                if i >= di && j >= dj && i - di < g.nx && j - dj < g.ny {
                    s += nu[g.idx(i - di, j - dj)];
                    c += 1.0;
                }
            }
            out[node_index(g, i, j)] = s / c;
        }
    }
    out
}

/// `sum nu |Du|^2` with the corner quadrature of the shear part.
pub fn viscous_dissipation(u: &MacVector, nu: &ScalarField) -> f64 {
    let g = *u.grid();
    let s = strain(u);
    let nu_n = node_viscosity(&g, nu.values());
    let mut total = 0.0;
    for (k, &n) in nu.values().iter().enumerate() {
        total += n * (s.dxx[k] * s.dxx[k] + s.dyy[k] * s.dyy[k]) * g.cell_area();
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let k = node_index(&g, i, j);
            total += 2.0 * nu_n[k] * s.dxy[k] * s.dxy[k] * node_weight(&g, i, j);
        }
    }
    total
}

/// `A u = -div(nu D u)`, the face field with `(A u, u) = sum nu |Du|^2`.
fn viscous_apply(g: &Grid, nu_c: &[f64], nu_n: &[f64], u: &MacVector) -> MacVector {
    let area = g.cell_area();
    let mut s = strain(u);
    for k in 0..g.n_cells() {
        s.dxx[k] *= nu_c[k] * area;
        s.dyy[k] *= nu_c[k] * area;
    }
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            let k = node_index(g, i, j);
            s.dxy[k] *= 2.0 * nu_n[k] * node_weight(g, i, j);
        }
    }
    strain_transpose(g, &s).scaled(1.0 / area)
}

fn pack(u: &MacVector) -> Vec<f64> {
    let mut v = Vec::with_capacity(u.ux.len() + u.uy.len());
    v.extend_from_slice(&u.ux);
    v.extend_from_slice(&u.uy);
    v
}

fn unpack(g: &Grid, v: &[f64]) -> MacVector {
    let nxf = g.n_xfaces();
    MacVector::from_vecs(*g, v[..nxf].to_vec(), v[nxf..].to_vec()).expect("packed length")
}

fn boundary_mask(g: &Grid) -> Vec<bool> {
    let mut mask = vec![false; g.n_xfaces() + g.n_yfaces()];
    let nxf = g.n_xfaces();
    for j in 0..g.ny {
        mask[g.xface(0, j)] = true;
        mask[g.xface(g.nx, j)] = true;
    }
    for i in 0..g.nx {
        mask[nxf + g.yface(i, 0)] = true;
        mask[nxf + g.yface(i, g.ny)] = true;
    }
    mask
}

/// Skew-symmetric part of the centered transport matrix `(m . grad) u` over
/// interior faces, packed `[ux; uy]` indexing.
pub fn skew_transport(m: &MacVector) -> CsrMatrix {
    let g = *m.grid();
    let (nx, ny) = (g.nx, g.ny);
    let nxf = g.n_xfaces();
    let mut c: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..ny {
        for i in 1..nx {
            let r = g.xface(i, j);
            let mx = m.ux[r];
            let my = 0.25
                * (m.uy[g.yface(i - 1, j)] + m.uy[g.yface(i, j)] + m.uy[g.yface(i - 1, j + 1)]
                    + m.uy[g.yface(i, j + 1)]);
            if i + 1 < nx {
                c.push((r, g.xface(i + 1, j), mx / (2.0 * g.hx)));
            }
            if i > 1 {
                c.push((r, g.xface(i - 1, j), -mx / (2.0 * g.hx)));
            }
            if j + 1 < ny {
                c.push((r, g.xface(i, j + 1), my / (2.0 * g.hy)));
            }
            if j > 0 {
                c.push((r, g.xface(i, j - 1), -my / (2.0 * g.hy)));
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let r = nxf + g.yface(i, j);
            let my = m.uy[g.yface(i, j)];
            let mx = 0.25
                * (m.ux[g.xface(i, j - 1)] + m.ux[g.xface(i + 1, j - 1)] + m.ux[g.xface(i, j)]
                    + m.ux[g.xface(i + 1, j)]);
            if j + 1 < ny {
                c.push((r, nxf + g.yface(i, j + 1), my / (2.0 * g.hy)));
            }
            if j > 1 {
                c.push((r, nxf + g.yface(i, j - 1), -my / (2.0 * g.hy)));
            }
            if i + 1 < nx {
                c.push((r, nxf + g.yface(i + 1, j), mx / (2.0 * g.hx)));
            }
            if i > 0 {
                c.push((r, nxf + g.yface(i - 1, j), -mx / (2.0 * g.hx)));
            }
        }
    }
    let mut k = Vec::with_capacity(2 * c.len());
    for &(r, col, v) in &c {
        k.push((r, col, 0.5 * v));
        k.push((col, r, -0.5 * v));
    }
    CsrMatrix::from_triplets(nxf + g.n_yfaces(), &k)
}

/// Solves `-div(beta grad q) = f` (Neumann, `f` with zero sum) by CG and
/// returns the zero-mean solution.
pub fn variable_poisson(
    beta: &MacVector,
    f: &ScalarField,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    let g = *f.grid();
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let op = FnOperator {
        n: g.n_cells(),
        f: |x: &[f64], y: &mut [f64]| {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j);
                    let mut s = 0.0;
                    if i > 0 {
                        s += beta.ux[g.xface(i, j)] * (x[c] - x[c - 1]) * ihx2;
                    }
                    if i + 1 < g.nx {
                        s += beta.ux[g.xface(i + 1, j)] * (x[c] - x[c + 1]) * ihx2;
                    }
                    if j > 0 {
                        s += beta.uy[g.yface(i, j)] * (x[c] - x[c - g.nx]) * ihy2;
                    }
                    if j + 1 < g.ny {
                        s += beta.uy[g.yface(i, j + 1)] * (x[c] - x[c + g.nx]) * ihy2;
                    }
                    y[c] = s;
                }
            }
        },
    };
    // constant-coefficient preconditioner at the mean interior face weight
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..g.ny {
        for i in 1..g.nx {
            sum += beta.ux[g.xface(i, j)];
            count += 1;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            sum += beta.uy[g.yface(i, j)];
            count += 1;
        }
    }
    let bbar = if count > 0 { sum / count as f64 } else { 1.0 };
    let plan = NeumannSpectral::new(g);
    let pre = SpectralPreconditioner {
        weights: plan.inverse_symbol(|l| -bbar * l),
        plan: &plan,
    };
    // drop the rounding-level mean so the singular system stays consistent
    let fm = f.mean();
    let rhs: Vec<f64> = f.values().iter().map(|v| v - fm).collect();
    let mut x = vec![0.0; g.n_cells()];
    pcg(&op, &pre, &rhs, &mut x, opts)?;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    ScalarField::from_vec(g, x)
}

/// One momentum step with the default solver settings; `phi`, `mu` are the
/// new phase variables, `phi_old` the previous phase field.
pub fn momentum_step(
    flow: &FlowState,
    phi: &ScalarField,
    mu: &ScalarField,
    phi_old: &ScalarField,
    params: &ModelParams,
    dt: f64,
) -> Result<FlowState> {
    momentum_step_with(flow, phi, mu, phi_old, params, dt, &MomentumConfig::default())
}

pub fn momentum_step_with(
    flow: &FlowState,
    phi: &ScalarField,
    mu: &ScalarField,
    phi_old: &ScalarField,
    params: &ModelParams,
    dt: f64,
    cfg: &MomentumConfig,
) -> Result<FlowState> {
    let g = *phi.grid();
    if g.is_1d() {
        return Err(Error::Unsupported("the momentum step needs a 2D grid (ny > 1)".into()));
    }
    for other in [mu.grid(), phi_old.grid(), flow.u.grid(), flow.p.grid()] {
        g.check_same(other)?;
    }
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if phi.max_abs() > 1.0 || phi_old.max_abs() > 1.0 {
        return Err(Error::Domain(phi.max_abs().max(phi_old.max_abs())));
    }
    check_cfl(&flow.u, dt)?;

    let n = g.n_xfaces() + g.n_yfaces();
    let opts = SolverOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter.unwrap_or(10 * n),
    };
    let rho_old = interpolate_cell_to_face(&rho_of_phi(phi_old, params));
    let rho_new = interpolate_cell_to_face(&rho_of_phi(phi, params));
    let nu_c = nu_of_phi(phi, params);
    let nu_n = node_viscosity(&g, nu_c.values());
    let grad_mu = gradient_to_faces(mu);
    let mobility = capillary_mobility(phi_old, params, dt);
    let jt = j_flux(mu, params).zip_map(&mobility, |j, m| j * m);
    let mass_flux = flow.u.zip_map(&rho_old, |u, r| u * r).zip_map(&jt, |a, b| a + b);
    let k = skew_transport(&mass_flux);

    let phi_f = interpolate_cell_to_face(phi_old);
    let grad_p = gradient_to_faces(&flow.p);
    let mask = boundary_mask(&g);
    let u_old = pack(&flow.u);
    let rho_o = pack(&rho_old);
    let rho_n = pack(&rho_new);
    let (phf, gmu, gp) = (pack(&phi_f), pack(&grad_mu), pack(&grad_p));
    let mut diag_mass = vec![1.0; n];
    let mut rhs = vec![0.0; n];
    for f in 0..n {
        if !mask[f] {
            diag_mass[f] = 0.5 * (rho_o[f] + rho_n[f]) / dt;
            rhs[f] = rho_o[f] * u_old[f] / dt - phf[f] * gmu[f] - gp[f];
        }
    }
    // Jacobi diagonal: mass term plus the leading viscous coefficients
    let mut precond = diag_mass.clone();
    let nxf = g.n_xfaces();
    for j in 0..g.ny {
        for i in 1..g.nx {
            let (l, r) = (nu_c.values()[g.idx(i - 1, j)], nu_c.values()[g.idx(i, j)]);
            let (b, a) = (nu_n[node_index(&g, i, j)], nu_n[node_index(&g, i, j + 1)]);
            precond[g.xface(i, j)] += (l + r) / (g.hx * g.hx) + 0.5 * (a + b) / (g.hy * g.hy);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let (b, a) = (nu_c.values()[g.idx(i, j - 1)], nu_c.values()[g.idx(i, j)]);
            let (l, r) = (nu_n[node_index(&g, i, j)], nu_n[node_index(&g, i + 1, j)]);
            precond[nxf + g.yface(i, j)] += (a + b) / (g.hy * g.hy) + 0.5 * (l + r) / (g.hx * g.hx);
        }
    }
    let op = FnOperator {
        n,
        f: |x: &[f64], y: &mut [f64]| {
            k.apply(x, y);
            let v = viscous_apply(&g, nu_c.values(), &nu_n, &unpack(&g, x));
            let av = pack(&v);
            for f in 0..n {
                y[f] += diag_mass[f] * x[f] + av[f];
            }
        },
    };
    let mut ustar = u_old.clone();
    bicgstab(&op, &precond, &rhs, &mut ustar, &opts)?;
    for f in 0..n {
        if mask[f] {
            ustar[f] = 0.0;
        }
    }
    let ustar = unpack(&g, &ustar);

    let beta = rho_new.map_faces(|r| 1.0 / r);
    let div = divergence_mac(&ustar).map(|d| -d / dt);
    let q = variable_poisson(&beta, &div, &opts)?;
    let corr = gradient_to_faces(&q).zip_map(&beta, |gq, b| dt * gq * b);
    let mut u = ustar.zip_map(&corr, |a, b| a - b);
    u.zero_boundary();
    let p = flow.p.zip_map(&q, |a, b| a + b);
    if !u.is_finite() || !p.is_finite() {
        return Err(Error::LinearSolveFailed(crate::linalg::SolveError::NonFinite));
    }
    Ok(FlowState { u, p })
}

trait MapFaces {
    fn map_faces(&self, f: impl Fn(f64) -> f64) -> MacVector;
}

impl MapFaces for MacVector {
    fn map_faces(&self, f: impl Fn(f64) -> f64) -> MacVector {
        self.zip_map(self, |a, _| f(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::velocity_from_streamfunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const LOG: PotentialKind = PotentialKind::FloryHuggins { theta: 1.0, theta0: 2.0 };

    fn params(rho1: f64, rho2: f64, nu1: f64, nu2: f64) -> ModelParams {
        ModelParams::new(rho1, rho2, nu1, nu2, LOG).unwrap()
    }

    fn kinetic(u: &MacVector, phi: &ScalarField, p: &ModelParams) -> f64 {
        let rho = interpolate_cell_to_face(&rho_of_phi(phi, p));
        0.5 * u.zip_map(&rho, |a, r| a * a * r).dot(&MacVector::zip_map(u, u, |_, _| 1.0))
    }

    fn shear(g: &Grid, amp: f64) -> MacVector {
        let (lx, ly) = (g.lx, g.ly);
        velocity_from_streamfunction(g, |x, y| {
            amp * (PI * x / lx).sin().powi(2) * (PI * y / ly).sin().powi(2)
        })
    }

    fn random_phi(g: Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_vec(g, (0..g.n_cells()).map(|_| rng.gen_range(-0.9..0.9)).collect()).unwrap()
    }

    #[test]
    fn mixture_rules() {
        let p = params(3.0, 1.0, 0.2, 0.1);
        assert_eq!(p.rho(1.0), 3.0);
        assert_eq!(p.rho(-1.0), 1.0);
        assert_eq!(p.rho(0.0), 2.0);
        assert_eq!(p.nu(1.0), 0.2);
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let m = params(2.0, 2.0, 1.0, 1.0);
        assert!(rho_of_phi(&random_phi(g, 1), &m).values().iter().all(|&r| r == 2.0));
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0, LOG).is_err());
    }

    #[test]
    fn flux_of_linear_mu() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let mu = ScalarField::from_fn(g, |x, _| x);
        let j = j_flux(&mu, &params(2.0, 1.0, 1.0, 1.0));
        for jj in 0..8 {
            for i in 1..8 {
                assert!((j.ux[g.xface(i, jj)] + 0.5).abs() < 1e-12);
            }
            assert_eq!(j.ux[g.xface(0, jj)], 0.0);
        }
        assert!(j.uy.iter().all(|&v| v.abs() < 1e-12));
        assert!(j_flux(&mu, &params(1.5, 1.5, 1.0, 1.0)).is_zero());
    }

    #[test]
    fn transport_is_skew() {
        let g = Grid::new(10, 7, 1.0, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = MacVector::from_vecs(
            g,
            (0..g.n_xfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..g.n_yfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        m.zero_boundary();
        let k = skew_transport(&m);
        let x: Vec<f64> = (0..k.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; k.n()];
        k.apply(&x, &mut y);
        let s: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(s.abs() < 1e-12, "{s}");
    }

    #[test]
    fn transport_consistency_on_linear_field() {
        // for a divergence-free constant m, K u = (m . grad) u at interior faces
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let mut m = MacVector::zeros(g);
        m.ux.iter_mut().for_each(|v| *v = 1.0);
        let mut u = MacVector::zeros(g);
        for j in 0..g.ny {
            for i in 0..=g.nx {
                u.ux[g.xface(i, j)] = g.y_center(j);
            }
        }
        let k = skew_transport(&m);
        let x = pack(&u);
        let mut y = vec![0.0; x.len()];
        k.apply(&x, &mut y);
        for j in 2..g.ny - 2 {
            for i in 3..g.nx - 3 {
                assert!(y[g.xface(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn viscous_operator_matches_dissipation() {
        let g = Grid::new(12, 9, 1.2, 0.9).unwrap();
        let u = shear(&g, 0.3);
        let nu = random_phi(g, 3).map(|p| 1.0 + 0.5 * p);
        let a = viscous_apply(&g, nu.values(), &node_viscosity(&g, nu.values()), &u);
        let lhs = a.dot(&u);
        let rhs = viscous_dissipation(&u, &nu);
        assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1.0), "{lhs} vs {rhs}");
        assert!(rhs > 0.0);
    }

    #[test]
    fn rest_state_is_fixed() {
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let phi = ScalarField::constant(g, 0.2);
        let mu = ScalarField::constant(g, -0.3);
        let flow = FlowState {
            u: MacVector::zeros(g),
            p: ScalarField::constant(g, 1.5),
        };
        let out = momentum_step(&flow, &phi, &mu, &phi, &params(3.0, 1.0, 0.1, 0.1), 1e-3).unwrap();
        assert!(out.u.is_zero());
        assert!(out.p.values().iter().all(|&p| p == 1.5));
    }

    #[test]
    fn projection_leaves_divergence_free_velocity() {
        let g = Grid::new(32, 32, 1.0, 1.0).unwrap();
        let phi = random_phi(g, 4);
        let mu = random_phi(g, 5).map(|v| 10.0 * v);
        let flow = FlowState {
            u: shear(&g, 0.5),
            p: ScalarField::zeros(g),
        };
        let out = momentum_step(&flow, &phi, &mu, &phi, &params(3.0, 1.0, 0.1, 0.2), 1e-3).unwrap();
        assert!(divergence_mac(&out.u).max_abs() < 1e-9);
        assert_eq!(out.u.max_abs_boundary(), 0.0);
    }

    #[test]
    fn kinetic_energy_decays_at_frozen_phase() {
        let g = Grid::new(24, 24, 1.0, 1.0).unwrap();
        let p = params(3.0, 1.0, 0.05, 0.1);
        let phi = ScalarField::from_fn(g, |x, y| 0.8 * (2.0 * PI * x).cos() * (PI * y).cos());
        let mu = ScalarField::constant(g, 0.7);
        let mut flow = FlowState {
            u: shear(&g, 1.0),
            p: ScalarField::zeros(g),
        };
        let mut e = kinetic(&flow.u, &phi, &p);
        for _ in 0..50 {
            flow = momentum_step(&flow, &phi, &mu, &phi, &p, 2e-3).unwrap();
            let e1 = kinetic(&flow.u, &phi, &p);
            assert!(e1 <= e + 1e-10, "{e1} > {e}");
            e = e1;
        }
    }

    #[test]
    fn phase_swap_symmetry() {
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let p = params(3.0, 1.0, 0.1, 0.3);
        let phi = random_phi(g, 6);
        let phi_old = random_phi(g, 7);
        let mu = random_phi(g, 8);
        let flow = FlowState {
            u: shear(&g, 0.2),
            p: ScalarField::zeros(g),
        };
        let a = momentum_step(&flow, &phi, &mu, &phi_old, &p, 1e-3).unwrap();
        let neg = |f: &ScalarField| f.map(|v| -v);
        let b = momentum_step(&flow, &neg(&phi), &neg(&mu), &neg(&phi_old), &p.swapped(), 1e-3).unwrap();
        let d = a.u.zip_map(&b.u, |x, y| x - y).max_abs();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn rejects_1d_and_cfl() {
        let g = Grid::new(8, 1, 1.0, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        let err = momentum_step(&FlowState::rest(g), &f, &f, &f, &params(1.0, 1.0, 1.0, 1.0), 0.1);
        assert!(matches!(err, Err(Error::Unsupported(_))));
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        let flow = FlowState {
            u: shear(&g, 50.0),
            p: f.clone(),
        };
        let err = momentum_step(&flow, &f, &f, &f, &params(1.0, 1.0, 1.0, 1.0), 0.1);
        assert!(matches!(err, Err(Error::CflViolation { .. })));
    }
}
