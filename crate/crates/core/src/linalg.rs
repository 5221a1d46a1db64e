//! Sparse linear algebra used by the steppers: CSR storage, Jacobi
//! preconditioned CG and BiCGSTAB, and a banded LU with partial pivoting for
//! 1D problems and small 2D ones.
//!
//! All reductions run in a fixed sequential order so that results are
//! bit-reproducible.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("Krylov breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("zero pivot in column {column}")]
    Singular { column: usize },
    #[error("non-finite value in the iteration")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `|b - A x| <= tol |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Which algorithm [`solve`] uses for a CSR system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Banded LU when cheap enough, BiCGSTAB otherwise.
    #[default]
    Auto,
    Direct,
    Krylov,
}

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure `(x, y) -> y = A x` as an operator.
pub struct FnOperator<F: Fn(&[f64], &mut [f64])> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix; duplicate entries are summed, columns sorted.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) out of range for n = {n}");
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().position(|&c| c == r).map_or(0.0, |p| vals[p])
            })
            .collect()
    }

    /// (lower, upper) bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v == 0.0 {
                    continue;
                }
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Sparse product `self * other` (same dimension).
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::new();
        for r in 0..self.n {
            let (ca, va) = self.row(r);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&c, &b) in cb.iter().zip(vb) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, &triplets)
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut s = 0.0;
            for k in a..b {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Approximate inverse `z = P^-1 r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Diagonal scaling; zero or non-finite entries act as 1.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        Self {
            inv: diag
                .iter()
                .map(|&d| if d != 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), mi) in z.iter_mut().zip(r).zip(&self.inv) {
            *zi = ri * mi;
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// (semi-)definite operators. `x` holds the initial guess on entry.
pub fn conjugate_gradient(
    a: &impl LinearOperator,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats, SolveError> {
    pcg(a, &Jacobi::new(diag), b, x, opts)
}

/// Preconditioned conjugate gradients; the preconditioner must be symmetric
/// positive (semi-)definite.
pub fn pcg(
    a: &impl LinearOperator,
    m: &impl Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / bnorm;
    if rel <= opts.tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            if !pap.is_finite() {
                return Err(SolveError::NonFinite);
            }
            return Err(SolveError::Breakdown { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if rel <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::MaxIterations {
        iterations: opts.max_iter,
        residual: rel,
    })
}

/// Right-preconditioned BiCGSTAB with a Jacobi preconditioner.
pub fn bicgstab(
    a: &impl LinearOperator,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats, SolveError> {
    pbicgstab(a, &Jacobi::new(diag), b, x, opts)
}

/// Right-preconditioned BiCGSTAB.
pub fn pbicgstab(
    a: &impl LinearOperator,
    m: &impl Preconditioner,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats, SolveError> {
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / bnorm;
    if rel <= opts.tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: rel,
        });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(SolveError::Breakdown { iteration: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        m.apply(&p, &mut y);
        a.apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(SolveError::Breakdown { iteration: it });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= opts.tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(SolveStats {
                iterations: it,
                relative_residual: snorm,
            });
        }
        m.apply(&s, &mut zs);
        a.apply(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if rel <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: rel,
            });
        }
    }
    Err(SolveError::MaxIterations {
        iterations: opts.max_iter,
        residual: rel,
    })
}

/// LU factorisation of a banded matrix with partial pivoting, stored row-wise
/// with room for the fill-in pivoting creates (upper bandwidth `ku + kl`).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(m: &CsrMatrix) -> Result<Self, SolveError> {
        let n = m.n();
        let (kl, ku) = m.bandwidth();
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            piv: vec![0; n],
        };
        for r in 0..n {
            let (cols, vals) = m.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    let k = lu.at(r, c);
                    lu.data[k] = v;
                }
            }
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(c + self.kl >= r && c <= r + self.ku + self.kl);
        r * self.width + (c + self.kl - r)
    }

    fn eliminate(&mut self) -> Result<(), SolveError> {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.at(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.at(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(SolveError::Singular { column: k });
            }
            self.piv[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let (a, b) = (self.at(k, c), self.at(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.at(k, k)];
            for r in k + 1..=last_row {
                let irk = self.at(r, k);
                let l = self.data[irk] / pivot;
                self.data[irk] = l;
                if l == 0.0 {
                    continue;
                }
                for c in k + 1..=last_col {
                    let (irc, ikc) = (self.at(r, c), self.at(k, c));
                    self.data[irc] -= l * self.data[ikc];
                }
            }
        }
        Ok(())
    }

    /// Solves in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for r in k + 1..=(k + self.kl).min(n - 1) {
                b[r] -= self.data[self.at(r, k)] * bk;
            }
        }
        let reach = self.ku + self.kl;
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..=(k + reach).min(n - 1) {
                s -= self.data[self.at(k, c)] * b[c];
            }
            b[k] = s / self.data[self.at(k, k)];
        }
    }
}

/// Work estimate of a banded factorisation, used by [`Method::Auto`].
fn banded_cost(m: &CsrMatrix) -> f64 {
    let (kl, ku) = m.bandwidth();
    m.n() as f64 * (kl as f64 + 1.0) * (kl + ku + 1) as f64
}

const AUTO_DIRECT_BUDGET: f64 = 2.0e7;

/// Whether [`solve`] factorises `m` under `method`.
pub fn uses_direct(m: &CsrMatrix, method: Method) -> bool {
    match method {
        Method::Direct => true,
        Method::Krylov => false,
        Method::Auto => banded_cost(m) <= AUTO_DIRECT_BUDGET,
    }
}

/// Solves the CSR system `m x = b`. `x` is the initial guess for Krylov
/// methods and is overwritten with the solution.
pub fn solve(
    m: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    method: Method,
    opts: &SolverOptions,
) -> Result<SolveStats, SolveError> {
    if uses_direct(m, method) {
        let lu = BandedLu::factor(m)?;
        x.copy_from_slice(b);
        lu.solve(x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        let mut r = vec![0.0; b.len()];
        m.apply(x, &mut r);
        let bn = norm(b);
        let rn = r.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        Ok(SolveStats {
            iterations: 1,
            relative_residual: if bn > 0.0 { rn / bn } else { rn },
        })
    } else {
        bicgstab(m, &m.diagonal(), b, x, opts)
    }
}
