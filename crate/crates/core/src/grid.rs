//! Uniform MAC (marker-and-cell) grid on the rectangle `[0, Lx] x [0, Ly]`.
//!
//! Scalars live at cell centers, velocity components on the cell faces that
//! are normal to them. `ny == 1` is the one-dimensional mode: all
//! y-differences vanish and only the Cahn-Hilliard subsystem is meaningful.
//!
//! Storage is row-major with `x` fastest:
//! - cell `(i, j)` -> `j * nx + i`
//! - x-face `(i, j)`, `i in 0..=nx` -> `j * (nx + 1) + i`
//! - y-face `(i, j)`, `j in 0..=ny` -> `j * nx + i`
//!
//! All inner products carry the cell area `hx * hy` as quadrature weight, for
//! cells and faces alike. With that convention `gradient_to_faces` is exactly
//! the negative adjoint of `divergence_mac` on fields with zero boundary faces.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 {
            return Err(Error::InvalidInput(format!("grid needs nx >= 4, got {nx}")));
        }
        if ny < 1 {
            return Err(Error::InvalidInput("grid needs ny >= 1".into()));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain lengths must be positive, got Lx={lx}, Ly={ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    /// One-dimensional mode (a single row of cells).
    pub fn is_1d(&self) -> bool {
        self.ny == 1
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Quadrature weight of one cell (and of one face).
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        j * self.nx + i
    }

    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    pub fn min_spacing(&self) -> f64 {
        if self.is_1d() {
            self.hx
        } else {
            self.hx.min(self.hy)
        }
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Which boundary treatment a field carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `d_n f = 0`, realised by ghost reflection `f_ghost = f_interior`.
    NeumannZero,
    /// Velocity vanishes on the wall; boundary faces carry 0.
    NoSlip,
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidInput(format!(
                "scalar field needs {} values, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at the cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x_center(i), grid.y_center(j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Weighted inner product `sum f g hx hy`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `L2` distance to another field on the same grid.
    pub fn distance_l2(&self, other: &ScalarField) -> f64 {
        self.zip_map(other, |a, b| a - b).norm_l2()
    }
}

/// Face-centered vector field: `ux` on vertical faces, `uy` on horizontal ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVector {
    grid: Grid,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl MacVector {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            ux: vec![0.0; grid.n_xfaces()],
            uy: vec![0.0; grid.n_yfaces()],
        }
    }

    pub fn from_vecs(grid: Grid, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        if ux.len() != grid.n_xfaces() || uy.len() != grid.n_yfaces() {
            return Err(Error::InvalidInput(format!(
                "MAC vector needs {}+{} values, got {}+{}",
                grid.n_xfaces(),
                grid.n_yfaces(),
                ux.len(),
                uy.len()
            )));
        }
        Ok(Self { grid, ux, uy })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            ux: self.ux.iter().map(|v| a * v).collect(),
            uy: self.uy.iter().map(|v| a * v).collect(),
        }
    }

    pub fn zip_map(&self, other: &MacVector, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            ux: self.ux.iter().zip(&other.ux).map(|(&a, &b)| f(a, b)).collect(),
            uy: self.uy.iter().zip(&other.uy).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Weighted face inner product `sum u v hx hy` over both components.
    pub fn dot(&self, other: &MacVector) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let sx: f64 = self.ux.iter().zip(&other.ux).map(|(a, b)| a * b).sum();
        let sy: f64 = self.uy.iter().zip(&other.uy).map(|(a, b)| a * b).sum();
        (sx + sy) * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(&self.uy)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }

    /// Largest magnitude found on a wall face.
    pub fn max_abs_boundary(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0_f64;
        for j in 0..g.ny {
            m = m.max(self.ux[g.xface(0, j)].abs());
            m = m.max(self.ux[g.xface(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.uy[g.yface(i, 0)].abs());
            m = m.max(self.uy[g.yface(i, g.ny)].abs());
        }
        m
    }

    /// Sets every wall face to zero.
    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.ux[g.xface(0, j)] = 0.0;
            self.ux[g.xface(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.uy[g.yface(i, 0)] = 0.0;
            self.uy[g.yface(i, g.ny)] = 0.0;
        }
    }
}

/// Neumann Laplacian: 5-point stencil (3-point when `ny == 1`) with ghost
/// reflection. Equal to `divergence_mac(gradient_to_faces(f))`.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(*f.grid());
    laplacian_into(f.grid(), f.values(), out.values_mut());
    out
}

pub(crate) fn laplacian_into(g: &Grid, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let ax = 1.0 / (g.hx * g.hx);
    let ay = 1.0 / (g.hy * g.hy);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = f[k];
            let mut s = 0.0;
            if i > 0 {
                s += ax * (f[k - 1] - c);
            }
            if i + 1 < nx {
                s += ax * (f[k + 1] - c);
            }
            if j > 0 {
                s += ay * (f[k - nx] - c);
            }
            if j + 1 < ny {
                s += ay * (f[k + nx] - c);
            }
            out[k] = s;
        }
    }
}

/// Face differences of a cell field; wall faces carry 0 (zero normal flux).
pub fn gradient_to_faces(f: &ScalarField) -> MacVector {
    let g = *f.grid();
    let mut out = MacVector::zeros(g);
    let v = f.values();
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.ux[g.xface(i, j)] = (v[g.idx(i, j)] - v[g.idx(i - 1, j)]) / g.hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.uy[g.yface(i, j)] = (v[g.idx(i, j)] - v[g.idx(i, j - 1)]) / g.hy;
        }
    }
    out
}

/// MAC flux difference.
pub fn divergence_mac(v: &MacVector) -> ScalarField {
    let g = *v.grid();
    let mut out = ScalarField::zeros(g);
    let o = out.values_mut();
    for j in 0..g.ny {
        for i in 0..g.nx {
            o[g.idx(i, j)] = (v.ux[g.xface(i + 1, j)] - v.ux[g.xface(i, j)]) / g.hx
                + (v.uy[g.yface(i, j + 1)] - v.uy[g.yface(i, j)]) / g.hy;
        }
    }
    out
}

/// Two-point arithmetic average onto faces; a wall face takes the value of
/// its only neighbour (ghost reflection).
pub fn interpolate_cell_to_face(f: &ScalarField) -> MacVector {
    let g = *f.grid();
    let v = f.values();
    let mut out = MacVector::zeros(g);
    for j in 0..g.ny {
        out.ux[g.xface(0, j)] = v[g.idx(0, j)];
        out.ux[g.xface(g.nx, j)] = v[g.idx(g.nx - 1, j)];
        for i in 1..g.nx {
            out.ux[g.xface(i, j)] = 0.5 * (v[g.idx(i, j)] + v[g.idx(i - 1, j)]);
        }
    }
    for i in 0..g.nx {
        out.uy[g.yface(i, 0)] = v[g.idx(i, 0)];
        out.uy[g.yface(i, g.ny)] = v[g.idx(i, g.ny - 1)];
        for j in 1..g.ny {
            out.uy[g.yface(i, j)] = 0.5 * (v[g.idx(i, j)] + v[g.idx(i, j - 1)]);
        }
    }
    out
}

/// Conservative centered transport `div(u f_face)`. Equals `u . grad f`
/// whenever `u` is discretely divergence-free.
pub fn advect_scalar(u: &MacVector, f: &ScalarField) -> ScalarField {
    let ff = interpolate_cell_to_face(f);
    divergence_mac(&u.zip_map(&ff, |a, b| a * b))
}

/// Symmetric gradient of a no-slip MAC velocity.
///
/// `dxx`, `dyy` sit at cell centers, `dxy = (d_y ux + d_x uy) / 2` at the
/// `(nx+1) x (ny+1)` cell corners (index `j * (nx + 1) + i`). Wall values use
/// the odd ghost `u_ghost = -u_interior`, which puts the zero at the wall.
#[derive(Debug, Clone)]
pub struct Strain {
    pub dxx: Vec<f64>,
    pub dyy: Vec<f64>,
    pub dxy: Vec<f64>,
}

pub fn node_index(g: &Grid, i: usize, j: usize) -> usize {
    j * (g.nx + 1) + i
}

/// Trapezoidal weight of a corner node: full area inside, half on an edge,
/// a quarter at a domain corner.
pub fn node_weight(g: &Grid, i: usize, j: usize) -> f64 {
    let fx = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
    let fy = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
    fx * fy * g.cell_area()
}

pub fn strain(u: &MacVector) -> Strain {
    let g = *u.grid();
    let (nx, ny) = (g.nx, g.ny);
    let mut dxx = vec![0.0; g.n_cells()];
    let mut dyy = vec![0.0; g.n_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            dxx[k] = (u.ux[g.xface(i + 1, j)] - u.ux[g.xface(i, j)]) / g.hx;
            dyy[k] = (u.uy[g.yface(i, j + 1)] - u.uy[g.yface(i, j)]) / g.hy;
        }
    }
    let mut dxy = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            // d_y ux at the node, between x-face rows j-1 and j
            let dyux = if i == 0 || i == nx {
                0.0
            } else {
                let above = if j < ny { u.ux[g.xface(i, j)] } else { -u.ux[g.xface(i, ny - 1)] };
                let below = if j > 0 { u.ux[g.xface(i, j - 1)] } else { -u.ux[g.xface(i, 0)] };
                (above - below) / g.hy
            };
            let dxuy = if j == 0 || j == ny {
                0.0
            } else {
                let right = if i < nx { u.uy[g.yface(i, j)] } else { -u.uy[g.yface(nx - 1, j)] };
                let left = if i > 0 { u.uy[g.yface(i - 1, j)] } else { -u.uy[g.yface(0, j)] };
                (right - left) / g.hx
            };
            dxy[node_index(&g, i, j)] = 0.5 * (dyux + dxuy);
        }
    }
    Strain { dxx, dyy, dxy }
}

/// Transpose of [`strain`] with respect to plain (unweighted) sums: returns
/// `w` with `sum_faces w . u = sum_cells (sxx dxx + syy dyy) + sum_nodes sxy dxy`
/// for every `u` with zero wall faces. Wall-face entries of the result are
/// zeroed.
pub fn strain_transpose(g: &Grid, s: &Strain) -> MacVector {
    let (nx, ny) = (g.nx, g.ny);
    let mut out = MacVector::zeros(*g);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let a = s.dxx[k] / g.hx;
            out.ux[g.xface(i + 1, j)] += a;
            out.ux[g.xface(i, j)] -= a;
            let b = s.dyy[k] / g.hy;
            out.uy[g.yface(i, j + 1)] += b;
            out.uy[g.yface(i, j)] -= b;
        }
    }
    for j in 0..=ny {
        for i in 0..=nx {
            let c = 0.5 * s.dxy[node_index(g, i, j)];
            if c == 0.0 {
                continue;
            }
            if i != 0 && i != nx {
                let a = c / g.hy;
                if j < ny {
                    out.ux[g.xface(i, j)] += a;
                } else {
                    out.ux[g.xface(i, ny - 1)] -= a;
                }
                if j > 0 {
                    out.ux[g.xface(i, j - 1)] -= a;
                } else {
                    out.ux[g.xface(i, 0)] += a;
                }
            }
            if j != 0 && j != ny {
                let b = c / g.hx;
                if i < nx {
                    out.uy[g.yface(i, j)] += b;
                } else {
                    out.uy[g.yface(nx - 1, j)] -= b;
                }
                if i > 0 {
                    out.uy[g.yface(i - 1, j)] -= b;
                } else {
                    out.uy[g.yface(0, j)] += b;
                }
            }
        }
    }
    out.zero_boundary();
    out
}

/// `sum |grad u|^2 hx hy` using the same face differences as [`strain`].
pub fn velocity_gradient_sq(u: &MacVector) -> f64 {
    let g = *u.grid();
    let (nx, ny) = (g.nx, g.ny);
    let s = strain(u);
    let mut total = 0.0;
    for k in 0..g.n_cells() {
        total += (s.dxx[k] * s.dxx[k] + s.dyy[k] * s.dyy[k]) * g.cell_area();
    }
    for j in 0..=ny {
        for i in 0..=nx {
            let dyux = if i == 0 || i == nx {
                0.0
            } else {
                let above = if j < ny { u.ux[g.xface(i, j)] } else { -u.ux[g.xface(i, ny - 1)] };
                let below = if j > 0 { u.ux[g.xface(i, j - 1)] } else { -u.ux[g.xface(i, 0)] };
                (above - below) / g.hy
            };
            let dxuy = if j == 0 || j == ny {
                0.0
            } else {
                let right = if i < nx { u.uy[g.yface(i, j)] } else { -u.uy[g.yface(nx - 1, j)] };
                let left = if i > 0 { u.uy[g.yface(i - 1, j)] } else { -u.uy[g.yface(0, j)] };
                (right - left) / g.hx
            };
            total += (dyux * dyux + dxuy * dxuy) * node_weight(&g, i, j);
        }
    }
    total
}

/// Discretely divergence-free no-slip velocity from a streamfunction sampled
/// at the cell corners: `ux = d_y psi`, `uy = -d_x psi`. `psi` must vanish on
/// the boundary for the wall faces to be zero.
pub fn velocity_from_streamfunction(g: &Grid, psi: impl Fn(f64, f64) -> f64) -> MacVector {
    let (nx, ny) = (g.nx, g.ny);
    let node = |i: usize, j: usize| psi(i as f64 * g.hx, j as f64 * g.hy);
    let mut u = MacVector::zeros(*g);
    for j in 0..ny {
        for i in 0..=nx {
            u.ux[g.xface(i, j)] = (node(i, j + 1) - node(i, j)) / g.hy;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            u.uy[g.yface(i, j)] = -(node(i + 1, j) - node(i, j)) / g.hx;
        }
    }
    u.zero_boundary();
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_vec(g, (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_mac(g: Grid, rng: &mut ChaCha8Rng) -> MacVector {
        let mut v = MacVector::from_vecs(
            g,
            (0..g.n_xfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..g.n_yfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        v.zero_boundary();
        v
    }

    #[test]
    fn rejects_small_grids() {
        assert!(Grid::new(3, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 0, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 0.0, 1.0).is_err());
        assert!(Grid::new(4, 1, 1.0, 1.0).unwrap().is_1d());
    }

    #[test]
    fn indexing_is_row_major() {
        let g = Grid::new(4, 3, 1.0, 1.0).unwrap();
        assert_eq!(g.idx(3, 2), 11);
        assert_eq!(g.xface(4, 2), 14);
        assert_eq!(g.yface(3, 3), 15);
        assert_eq!(g.n_xfaces(), 15);
        assert_eq!(g.n_yfaces(), 16);
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = Grid::new(16, 8, 2.0, 1.0).unwrap();
        let l = laplacian_neumann(&ScalarField::constant(g, 0.37));
        assert!(l.max_abs() == 0.0);
    }

    #[test]
    fn laplacian_matches_div_grad() {
        let g = Grid::new(12, 9, 1.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_field(g, &mut rng);
        let a = laplacian_neumann(&f);
        let b = divergence_mac(&gradient_to_faces(&f));
        assert!(a.distance_l2(&b) < 1e-12);
    }

    #[test]
    fn laplacian_sums_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for g in [Grid::new(16, 16, 1.0, 1.0).unwrap(), Grid::new(32, 1, 3.0, 1.0).unwrap()] {
            let f = random_field(g, &mut rng);
            let s = laplacian_neumann(&f).sum() * g.cell_area();
            assert!(s.abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let g = Grid::new(10, 6, 2.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x);
        let gr = gradient_to_faces(&f);
        for j in 0..g.ny {
            assert_eq!(gr.ux[g.xface(0, j)], 0.0);
            assert_eq!(gr.ux[g.xface(g.nx, j)], 0.0);
            for i in 1..g.nx {
                assert!((gr.ux[g.xface(i, j)] - 1.0).abs() < 1e-14);
            }
        }
        assert!(gr.uy.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        assert_eq!(divergence_mac(&MacVector::zeros(g)).max_abs(), 0.0);
    }

    #[test]
    fn summation_by_parts_on_random_fields() {
        let g = Grid::new(16, 16, 1.0, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let f = random_field(g, &mut rng);
            let v = random_mac(g, &mut rng);
            let lhs = gradient_to_faces(&f).dot(&v);
            let rhs = -f.dot(&divergence_mac(&v));
            assert!((lhs - rhs).abs() < 1e-13, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(g, &mut rng);
        let h = random_field(g, &mut rng);
        let a = laplacian_neumann(&f).dot(&h);
        let b = f.dot(&laplacian_neumann(&h));
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn advection_of_constant_vanishes() {
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let u = velocity_from_streamfunction(&g, |x, y| {
            (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2)
        });
        assert!(divergence_mac(&u).max_abs() < 1e-12);
        let a = advect_scalar(&u, &ScalarField::constant(g, 0.4));
        assert!(a.max_abs() < 1e-12);
        assert_eq!(advect_scalar(&MacVector::zeros(g), &ScalarField::constant(g, 1.0)).max_abs(), 0.0);
    }

    #[test]
    fn advection_conserves_the_cell_sum() {
        let g = Grid::new(24, 16, 1.5, 1.0).unwrap();
        let u = velocity_from_streamfunction(&g, |x, y| {
            (x * std::f64::consts::PI / 1.5).sin().powi(2) * (y * std::f64::consts::PI).sin().powi(2)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(g, &mut rng);
        let s = advect_scalar(&u, &f).sum() * g.cell_area();
        assert!(s.abs() <= 1e-12 * f.norm_l2().max(1.0), "{s}");
    }

    #[test]
    fn strain_transpose_is_adjoint() {
        let g = Grid::new(9, 7, 1.2, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_mac(g, &mut rng);
        let s = Strain {
            dxx: (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            dyy: (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            dxy: (0..(g.nx + 1) * (g.ny + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let du = strain(&u);
        let lhs: f64 = du.dxx.iter().zip(&s.dxx).map(|(a, b)| a * b).sum::<f64>()
            + du.dyy.iter().zip(&s.dyy).map(|(a, b)| a * b).sum::<f64>()
            + du.dxy.iter().zip(&s.dxy).map(|(a, b)| a * b).sum::<f64>();
        let w = strain_transpose(&g, &s);
        let rhs: f64 = w.ux.iter().zip(&u.ux).map(|(a, b)| a * b).sum::<f64>()
            + w.uy.iter().zip(&u.uy).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn streamfunction_velocity_has_no_slip() {
        let g = Grid::new(10, 10, 1.0, 1.0).unwrap();
        let u = velocity_from_streamfunction(&g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).powi(2));
        assert_eq!(u.max_abs_boundary(), 0.0);
        assert!(u.max_abs() > 0.0);
    }
}
