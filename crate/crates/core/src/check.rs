//! Operator self-tests run by the `check` command: discrete identities on
//! random fields and manufactured-solution convergence orders.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{
    advect_scalar, divergence_mac, gradient_to_faces, laplacian_neumann, velocity_from_streamfunction, Grid,
    MacVector, ScalarField,
};
use crate::Result;

pub const SBP_TOL: f64 = 1e-13;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const MIN_ORDER: f64 = 1.9;
pub const ORDER_GRIDS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `true` when `value >= threshold` passes (orders), `false` when
    /// `value <= threshold` passes (residuals).
    pub at_least: bool,
}

impl CheckItem {
    pub fn passed(&self) -> bool {
        if self.at_least {
            self.value >= self.threshold
        } else {
            self.value <= self.threshold
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(CheckItem::passed)
    }

    fn residual(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.items.push(CheckItem {
            name: name.into(),
            value,
            threshold,
            at_least: false,
        });
    }

    fn order(&mut self, name: impl Into<String>, value: f64) {
        self.items.push(CheckItem {
            name: name.into(),
            value,
            threshold: MIN_ORDER,
            at_least: true,
        });
    }
}

fn random_field(g: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::from_vec(g, (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("length")
}

fn random_wall_free(g: Grid, rng: &mut ChaCha8Rng) -> MacVector {
    let mut v = MacVector::from_vecs(
        g,
        (0..g.n_xfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..g.n_yfaces()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("length");
    v.zero_boundary();
    v
}

/// `|<div v, f> + <v, grad f>|` relative to `|div v| |f| + |v| |grad f|`.
pub fn summation_by_parts_defect(g: Grid, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_field(g, &mut rng);
    let v = random_wall_free(g, &mut rng);
    let div = divergence_mac(&v);
    let grad = gradient_to_faces(&f);
    let scale = div.norm_l2() * f.norm_l2() + v.norm_l2() * grad.norm_l2();
    (div.dot(&f) + v.dot(&grad)).abs() / scale
}

/// `|<L f, h> - <f, L h>|` relative to `|L f| |h| + |f| |L h|`.
pub fn laplacian_symmetry_defect(g: Grid, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_field(g, &mut rng);
    let h = random_field(g, &mut rng);
    let (lf, lh) = (laplacian_neumann(&f), laplacian_neumann(&h));
    let scale = lf.norm_l2() * h.norm_l2() + f.norm_l2() * lh.norm_l2();
    (lf.dot(&h) - f.dot(&lh)).abs() / scale
}

// Manufactured fields on [0, L]^2 with zero normal derivative at the walls.
const A: f64 = 1.0;
const B: f64 = 2.0;

fn square(n: usize) -> Grid {
    Grid::new(n, n, 1.0, 1.0).expect("valid grid")
}

fn mms_f(x: f64, y: f64) -> f64 {
    (A * PI * x).cos() * (B * PI * y).cos() + 0.5 * (2.0 * PI * x).cos()
}

fn mms_lap(x: f64, y: f64) -> f64 {
    -(A * A + B * B) * PI * PI * (A * PI * x).cos() * (B * PI * y).cos()
        - 2.0 * PI * PI * (2.0 * PI * x).cos()
}

fn mms_grad(x: f64, y: f64) -> (f64, f64) {
    (
        -A * PI * (A * PI * x).sin() * (B * PI * y).cos() - PI * (2.0 * PI * x).sin(),
        -B * PI * (A * PI * x).cos() * (B * PI * y).sin(),
    )
}

fn max_err(g: &Grid, num: &ScalarField, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let e = ScalarField::from_fn(*g, exact);
    num.zip_map(&e, |a, b| (a - b).abs()).max_abs()
}

pub fn laplacian_error(n: usize) -> f64 {
    let g = square(n);
    max_err(&g, &laplacian_neumann(&ScalarField::from_fn(g, mms_f)), mms_lap)
}

/// Face gradient against the exact normal derivative at the face centers.
pub fn gradient_error(n: usize) -> f64 {
    let g = square(n);
    let d = gradient_to_faces(&ScalarField::from_fn(g, mms_f));
    let mut err = 0.0_f64;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let e = mms_grad(i as f64 * g.hx, g.y_center(j)).0;
            err = err.max((d.ux[g.xface(i, j)] - e).abs());
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let e = mms_grad(g.x_center(i), j as f64 * g.hy).1;
            err = err.max((d.uy[g.yface(i, j)] - e).abs());
        }
    }
    err
}

/// Divergence of the sampled face field `v = grad f` against `Lap f`.
pub fn divergence_error(n: usize) -> f64 {
    let g = square(n);
    let mut v = MacVector::zeros(g);
    for j in 0..g.ny {
        for i in 0..=g.nx {
            v.ux[g.xface(i, j)] = mms_grad(i as f64 * g.hx, g.y_center(j)).0;
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            v.uy[g.yface(i, j)] = mms_grad(g.x_center(i), j as f64 * g.hy).1;
        }
    }
    max_err(&g, &divergence_mac(&v), mms_lap)
}

fn stream(x: f64, y: f64) -> f64 {
    ((PI * x).sin() * (PI * y).sin()).powi(2)
}

/// Conservative transport against `u . grad f` for the velocity of `stream`.
pub fn advection_error(n: usize) -> f64 {
    let g = square(n);
    let u = velocity_from_streamfunction(&g, stream);
    let exact = |x: f64, y: f64| {
        let (sx, cx, sy, cy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin(), (PI * y).cos());
        let ux = 2.0 * PI * sx * sx * sy * cy;
        let uy = -2.0 * PI * sx * cx * sy * sy;
        let (fx, fy) = mms_grad(x, y);
        ux * fx + uy * fy
    };
    max_err(&g, &advect_scalar(&u, &ScalarField::from_fn(g, mms_f)), exact)
}

fn observed_orders(err: impl Fn(usize) -> f64) -> Vec<f64> {
    let e: Vec<f64> = ORDER_GRIDS.iter().map(|&n| err(n)).collect();
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Every check; `Err` only for setup failures.
pub fn run_checks() -> Result<CheckReport> {
    let mut r = CheckReport::default();
    for (k, g) in [
        Grid::new(17, 11, 1.3, 0.7)?,
        Grid::new(64, 64, 6.4, 6.4)?,
        Grid::new(40, 1, 3.0, 1.0)?,
    ]
    .into_iter()
    .enumerate()
    {
        let label = format!("{}x{}", g.nx, g.ny);
        r.residual(format!("summation by parts {label}"), summation_by_parts_defect(g, k as u64), SBP_TOL);
        r.residual(
            format!("laplacian symmetry {label}"),
            laplacian_symmetry_defect(g, 100 + k as u64),
            SYMMETRY_TOL,
        );
        let ones = ScalarField::constant(g, 1.0);
        r.residual(format!("laplacian of constants {label}"), laplacian_neumann(&ones).max_abs(), 1e-12);
    }
    let g = Grid::new(48, 32, 2.0, 1.0)?;
    let u = velocity_from_streamfunction(&g, |x, y| ((PI * x / 2.0).sin() * (PI * y).sin()).powi(2));
    r.residual("divergence of streamfunction velocity", divergence_mac(&u).max_abs(), 1e-11);

    let orders: [(&str, fn(usize) -> f64); 4] = [
        ("laplacian", laplacian_error),
        ("gradient", gradient_error),
        ("divergence", divergence_error),
        ("advection", advection_error),
    ];
    for (name, f) in orders {
        for (w, p) in ORDER_GRIDS.windows(2).zip(observed_orders(f)) {
            r.order(format!("{name} order {}->{}", w[0], w[1]), p);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let r = run_checks().unwrap();
        for item in &r.items {
            assert!(item.passed(), "{item:?}");
        }
        assert!(r.all_passed());
    }

    #[test]
    fn empty_report_does_not_pass() {
        assert!(!CheckReport::default().all_passed());
    }
}
