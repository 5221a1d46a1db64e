//! Cosine-transform diagonalisation of the cell-centered Neumann Laplacian.
//!
//! The 5-point Neumann Laplacian on a uniform grid has the DCT-II basis as
//! eigenvectors, so any polynomial in it is inverted by two transforms. This
//! gives the constant-coefficient preconditioners used by the Krylov solves.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::grid::Grid;
use crate::linalg::Preconditioner;

#[derive(Clone)]
pub struct NeumannSpectral {
    grid: Grid,
    lam_x: Vec<f64>,
    lam_y: Vec<f64>,
    dct_x: Arc<dyn TransformType2And3<f64>>,
    dct_y: Arc<dyn TransformType2And3<f64>>,
}

impl fmt::Debug for NeumannSpectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeumannSpectral").field("grid", &self.grid).finish()
    }
}

fn eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|p| {
            let s = (p as f64 * PI / (2.0 * n as f64)).sin();
            -4.0 * s * s / (h * h)
        })
        .collect()
}

impl NeumannSpectral {
    pub fn new(grid: Grid) -> Self {
        let mut planner = DctPlanner::new();
        let lam_y = if grid.is_1d() {
            vec![0.0]
        } else {
            eigenvalues(grid.ny, grid.hy)
        };
        Self {
            grid,
            lam_x: eigenvalues(grid.nx, grid.hx),
            lam_y,
            dct_x: planner.plan_dct2(grid.nx),
            dct_y: planner.plan_dct2(grid.ny),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalue of mode `(p, q)`.
    pub fn eigenvalue(&self, p: usize, q: usize) -> f64 {
        self.lam_x[p] + self.lam_y[q]
    }

    /// `1 / f(lambda)` for every mode, with 0 where `f` vanishes.
    pub fn inverse_symbol(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.n_cells());
        for q in 0..self.grid.ny {
            for p in 0..self.grid.nx {
                let v = f(self.eigenvalue(p, q));
                out.push(if v != 0.0 { 1.0 / v } else { 0.0 });
            }
        }
        out
    }

    fn columns(&self, data: &mut [f64], forward: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if ny == 1 {
            return;
        }
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[j * nx + i];
            }
            if forward {
                self.dct_y.process_dct2(&mut col);
            } else {
                self.dct_y.process_dct3(&mut col);
            }
            for j in 0..ny {
                data[j * nx + i] = col[j];
            }
        }
    }

    /// `out = g(L) b` where `weights` holds `g` per mode (see
    /// [`Self::inverse_symbol`]).
    pub fn apply_weights(&self, weights: &[f64], b: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        out.copy_from_slice(b);
        for row in out.chunks_exact_mut(nx) {
            self.dct_x.process_dct2(row);
        }
        self.columns(out, true);
        let mut scale = 2.0 / nx as f64;
        if ny > 1 {
            scale *= 2.0 / ny as f64;
        }
        for (o, w) in out.iter_mut().zip(weights) {
            *o *= w * scale;
        }
        self.columns(out, false);
        for row in out.chunks_exact_mut(nx) {
            self.dct_x.process_dct3(row);
        }
    }
}

/// `P^-1 = g(L)` for precomputed mode weights.
#[derive(Debug, Clone)]
pub struct SpectralPreconditioner<'a> {
    pub plan: &'a NeumannSpectral,
    pub weights: Vec<f64>,
}

impl Preconditioner for SpectralPreconditioner<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.plan.apply_weights(&self.weights, r, z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{laplacian_neumann, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_round_trip() {
        for g in [Grid::new(12, 7, 1.0, 2.0).unwrap(), Grid::new(16, 1, 3.0, 1.0).unwrap()] {
            let s = NeumannSpectral::new(g);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let b: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; b.len()];
            s.apply_weights(&vec![1.0; b.len()], &b, &mut out);
            for (x, y) in b.iter().zip(&out) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn inverts_the_laplacian_on_zero_mean_data() {
        let g = Grid::new(16, 10, 2.0, 1.5).unwrap();
        let s = NeumannSpectral::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let lap = laplacian_neumann(&ScalarField::from_vec(g, x.clone()).unwrap());
        let mut back = vec![0.0; x.len()];
        s.apply_weights(&s.inverse_symbol(|l| l), lap.values(), &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
