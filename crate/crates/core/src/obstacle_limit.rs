//! The `theta -> 0` limit: log-potential runs with `theta_k = 1/k` compared
//! against the double-obstacle dynamics at a fixed horizon.
//!
//! With `F0(s) = 1/2 [(1+s) ln(1+s) + (1-s) ln(1-s)]` the log potential of
//! run `k` is `F0/k - theta0/2 s^2`. Its initial datum solves the elliptic
//! problem
//!
//! ```text
//! -Lap phi + F0'(phi)/k + phi = mu0 + theta0 phi0 + phi0,   d_n phi = 0,
//! ```
//!
//! whose log term keeps `|phi| < 1` for every `k`.

use crate::cahn_hilliard::{ch_run, laplacian_csr, CHState, ChStepper};
use crate::coupled::{run, RunConfig, RunOutput};
use crate::grid::{laplacian_into, laplacian_neumann, MacVector, ScalarField};
use crate::linalg::{self, Method, SolverOptions};
use crate::momentum::ModelParams;
use crate::potential::{f_prime_unchecked, f_second_unchecked, PotentialKind, SAFE_MARGIN};
use crate::{Error, Result};

/// Sup-norm residual target of [`regularize_initial`].
pub const REGULARIZE_TOL: f64 = 1e-11;
const REGULARIZE_MAX: usize = 100;

/// `mu0 + theta0 phi0 + phi0`.
pub fn regularization_source(mu0: &ScalarField, phi0: &ScalarField, theta0: f64) -> Result<ScalarField> {
    mu0.grid().check_same(phi0.grid())?;
    Ok(mu0.zip_map(phi0, |m, p| m + (theta0 + 1.0) * p))
}

/// Cellwise residual of the elliptic problem at `phi`.
pub fn regularization_residual(phi: &ScalarField, source: &ScalarField, k: u32) -> Result<ScalarField> {
    phi.grid().check_same(source.grid())?;
    if phi.max_abs() >= 1.0 {
        return Err(Error::Domain(phi.max_abs()));
    }
    let inv_k = 1.0 / k as f64;
    let lap = laplacian_neumann(phi);
    let r = phi
        .values()
        .iter()
        .zip(lap.values())
        .zip(source.values())
        .map(|((&p, &l), &s)| -l + inv_k * f_prime_unchecked(p, 1.0) + p - s)
        .collect();
    ScalarField::from_vec(*phi.grid(), r)
}

/// Regularised initial datum for `theta_k = 1/k`; safeguarded Newton on the
/// SPD Jacobian `-Lap + diag(F0''/k + 1)`.
pub fn regularize_initial(mu0: &ScalarField, phi0: &ScalarField, theta0: f64, k: u32) -> Result<ScalarField> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let source = regularization_source(mu0, phi0, theta0)?;
    if !source.is_finite() {
        return Err(Error::InvalidInput("non-finite regularisation source".into()));
    }
    let g = *phi0.grid();
    let n = g.n_cells();
    let inv_k = 1.0 / k as f64;
    let bound = 1.0 - SAFE_MARGIN;
    let lap = laplacian_csr(&g);
    let src = source.values();
    let residual = |phi: &[f64], lap_phi: &mut [f64], out: &mut [f64]| {
        laplacian_into(&g, phi, lap_phi);
        for c in 0..n {
            out[c] = -lap_phi[c] + inv_k * f_prime_unchecked(phi[c], 1.0) + phi[c] - src[c];
        }
    };
    let mut phi: Vec<f64> = phi0.values().iter().map(|p| p.clamp(-0.999, 0.999)).collect();
    let mut lap_phi = vec![0.0; n];
    let mut res = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    residual(&phi, &mut lap_phi, &mut res);
    let mut jac = lap.clone();
    let opts = SolverOptions {
        tol: 1e-13,
        max_iter: 10 * n,
    };
    for iter in 0..=REGULARIZE_MAX {
        let rmax = res.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        if rmax <= REGULARIZE_TOL {
            return ScalarField::from_vec(g, phi);
        }
        if iter == REGULARIZE_MAX || !rmax.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: iter,
                residual: rmax,
                iterate: phi,
            });
        }
        {
            let (ptr, cols) = (lap.row_ptr(), lap.col_idx());
            let vals = jac.values_mut();
            for (v, l) in vals.iter_mut().zip(lap.values()) {
                *v = -l;
            }
            for r in 0..n {
                for p in ptr[r]..ptr[r + 1] {
                    if cols[p] == r {
                        vals[p] += inv_k * f_second_unchecked(phi[r], 1.0) + 1.0;
                    }
                }
            }
        }
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; n];
        linalg::solve(&jac, &rhs, &mut delta, Method::Auto, &opts)?;
        let r2: f64 = res.iter().map(|r| r * r).sum();
        let mut step = 1.0;
        loop {
            let inside = phi.iter().zip(&delta).all(|(p, d)| (p + step * d).abs() <= bound);
            if inside {
                for c in 0..n {
                    trial[c] = phi[c] + step * delta[c];
                }
                residual(&trial, &mut lap_phi, &mut trial_res);
                if trial_res.iter().map(|r| r * r).sum::<f64>() < r2 {
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::NewtonDiverged {
                    iterations: iter + 1,
                    residual: rmax,
                    iterate: phi,
                });
            }
        }
        std::mem::swap(&mut phi, &mut trial);
        std::mem::swap(&mut res, &mut trial_res);
    }
    unreachable!("loop returns on its last iteration")
}

/// Coupled run with the double-obstacle potential; fails if any recorded
/// state leaves `[-1, 1]`.
pub fn obstacle_run(cfg: &RunConfig, params: &ModelParams) -> Result<RunOutput> {
    if !params.potential.is_obstacle() {
        return Err(Error::InvalidInput("obstacle_run needs the double obstacle potential".into()));
    }
    let out = run(cfg, params)?;
    if let Some(r) = out.series.iter().find(|r| r.phi_min < -1.0 || r.phi_max > 1.0) {
        return Err(Error::Domain(r.phi_min.abs().max(r.phi_max.abs())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleLimitConfig {
    /// Strictly increasing; `theta_k = 1/k`.
    pub k_list: Vec<u32>,
    /// Grid, time step, horizon, initial datum and solver settings. The
    /// velocity is held at zero.
    pub run: RunConfig,
    pub theta0: f64,
}

impl ObstacleLimitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_list.is_empty() || self.k_list[0] == 0 {
            return Err(Error::InvalidInput("k_list must be nonempty and positive".into()));
        }
        if self.k_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("k_list must be strictly increasing".into()));
        }
        PotentialKind::DoubleObstacle { theta0: self.theta0 }.validate()?;
        self.run.n_steps()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct LimitEntry {
    pub k: u32,
    pub theta: f64,
    /// Sup-norm residual of the regularised initial datum.
    pub initial_residual: f64,
    /// `|phi_k(T) - phi_do(T)|_{L2}`.
    pub distance: Result<f64>,
}

#[derive(Debug)]
pub struct ConvergenceReport {
    pub entries: Vec<LimitEntry>,
    pub obstacle_final: ScalarField,
}

impl ConvergenceReport {
    /// Distances of the runs that finished, in `k_list` order.
    pub fn distances(&self) -> Vec<(u32, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.distance.as_ref().ok().map(|&d| (e.k, d)))
            .collect()
    }

    /// `None` with fewer than two entries or when a run failed.
    pub fn non_increasing(&self) -> Option<bool> {
        if self.entries.len() < 2 || self.entries.iter().any(|e| e.distance.is_err()) {
            return None;
        }
        Some(self.distances().windows(2).all(|w| w[1].1 <= w[0].1))
    }

    pub fn strictly_decreasing(&self) -> Option<bool> {
        if self.entries.len() < 2 || self.entries.iter().any(|e| e.distance.is_err()) {
            return None;
        }
        Some(self.distances().windows(2).all(|w| w[1].1 < w[0].1))
    }
}

/// Runs the obstacle problem once and the log problem for every `k`, all in
/// parallel. A failing `k` is recorded in its entry and the sweep goes on.
pub fn theta_limit_study(cfg: &ObstacleLimitConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let g = cfg.run.grid;
    let theta0 = cfg.theta0;
    let phi0 = cfg.run.init.phase_field(&g, cfg.run.seed)?;
    let obstacle = PotentialKind::DoubleObstacle { theta0 };
    let start = CHState::new(phi0.clone(), &obstacle)?;
    let ch_cfg = cfg.run.ch_config();
    let zero = MacVector::zeros(g);
    let stepper = ChStepper::new(g);
    let t_end = cfg.run.t_end;

    let run_k = |k: u32| -> (f64, Result<f64>, Option<ScalarField>) {
        let kind = PotentialKind::FloryHuggins {
            theta: 1.0 / k as f64,
            theta0,
        };
        let init = match regularize_initial(&start.mu, &phi0, theta0, k) {
            Ok(p) => p,
            Err(e) => return (f64::NAN, Err(e), None),
        };
        let source = regularization_source(&start.mu, &phi0, theta0).expect("same grid");
        let r0 = regularization_residual(&init, &source, k).map_or(f64::NAN, |r| r.max_abs());
        let out = CHState::new(init, &kind).and_then(|s| ch_run(&stepper, &s, &zero, &ch_cfg, &kind, t_end));
        match out {
            Ok(s) => (r0, Ok(0.0), Some(s.phi)),
            Err(e) => (r0, Err(e), None),
        }
    };

    let (obstacle_final, runs) = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.k_list.iter().map(|&k| scope.spawn(move || run_k(k))).collect();
        let obstacle_final = ch_run(&stepper, &start, &zero, &ch_cfg, &obstacle, t_end);
        let runs: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect();
        (obstacle_final, runs)
    });
    let obstacle_final = obstacle_final?.phi;
    let entries = cfg
        .k_list
        .iter()
        .zip(runs)
        .map(|(&k, (initial_residual, status, phi))| LimitEntry {
            k,
            theta: 1.0 / k as f64,
            initial_residual,
            distance: status.map(|_| phi.expect("finished run").distance_l2(&obstacle_final)),
        })
        .collect();
    Ok(ConvergenceReport {
        entries,
        obstacle_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cahn_hilliard::{chemical_potential, CHStepConfig};
    use crate::coupled::{InitialCondition, PhaseInit, VelocityInit};
    use crate::diagnostics::free_energy;
    use crate::grid::Grid;
    use crate::spectral::NeumannSpectral;

    fn wavy(g: Grid, m: f64, a: f64) -> ScalarField {
        ScalarField::from_fn(g, |x, y| m + a * (0.7 * x).cos() * (1.0 + 0.3 * (0.9 * y).sin()))
    }

    #[test]
    fn constant_source_reduces_to_a_scalar_root() {
        let g = Grid::new(12, 1, 3.0, 1.0).unwrap();
        let theta0 = 2.0;
        let c = 0.4;
        let phi0 = ScalarField::constant(g, c);
        let mu0 = chemical_potential(&phi0, &PotentialKind::DoubleObstacle { theta0 }).unwrap();
        for k in [1, 4, 64] {
            let phi = regularize_initial(&mu0, &phi0, theta0, k).unwrap();
            // s + atanh(s)/k = c by bisection
            let (mut lo, mut hi): (f64, f64) = (-1.0 + 1e-15, 1.0 - 1e-15);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid + mid.atanh() / k as f64 > c {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            for &p in phi.values() {
                assert!((p - lo).abs() < 1e-12, "k={k}: {p} vs {lo}");
            }
        }
    }

    #[test]
    fn regularised_data_are_interior_and_accurate() {
        let g = Grid::new(24, 16, 6.0, 4.0).unwrap();
        let theta0 = 3.0;
        let phi0 = wavy(g, 0.1, 0.65);
        let mu0 = chemical_potential(&phi0, &PotentialKind::DoubleObstacle { theta0 }).unwrap();
        let source = regularization_source(&mu0, &phi0, theta0).unwrap();
        let mut prev: Option<ScalarField> = None;
        let mut gaps = Vec::new();
        for k in [4, 16, 64, 256] {
            let phi = regularize_initial(&mu0, &phi0, theta0, k).unwrap();
            assert!(phi.max_abs() < 1.0);
            assert!(regularization_residual(&phi, &source, k).unwrap().max_abs() <= 1e-10);
            if let Some(p) = prev {
                gaps.push(p.distance_l2(&phi));
            }
            prev = Some(phi);
        }
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }

    #[test]
    fn rejects_k_zero_and_bad_lists() {
        let g = Grid::new(8, 1, 1.0, 1.0).unwrap();
        let phi = ScalarField::zeros(g);
        assert!(regularize_initial(&phi, &phi, 1.0, 0).is_err());
        let init = InitialCondition {
            phase: PhaseInit::Constant { m: 0.0 },
            velocity: VelocityInit::Zero,
        };
        let run = RunConfig::new(g, 0.1, 0.2, init);
        for k_list in [vec![], vec![4, 4], vec![16, 4]] {
            let cfg = ObstacleLimitConfig {
                k_list,
                run,
                theta0: 1.0,
            };
            assert!(theta_limit_study(&cfg).is_err());
        }
    }

    #[test]
    fn interior_obstacle_dynamics_match_the_linear_equation() {
        // no constraint is active, so the step is (1 + dt L^2) phi = (1 - dt theta0 L) phi_n
        let g = Grid::new(32, 1, 8.0, 1.0).unwrap();
        let theta0 = 0.5;
        let kind = PotentialKind::DoubleObstacle { theta0 };
        let phi0 = ScalarField::from_fn(g, |x, _| 0.2 + 0.1 * (0.4 * x).cos());
        let dt = 0.05;
        let cfg = CHStepConfig::new(dt);
        let steps = 40;
        let out = ch_run(
            &ChStepper::new(g),
            &CHState::new(phi0.clone(), &kind).unwrap(),
            &MacVector::zeros(g),
            &cfg,
            &kind,
            dt * steps as f64,
        )
        .unwrap();
        let plan = NeumannSpectral::new(g);
        let w = plan.inverse_symbol(|l| (1.0 + dt * l * l) / (1.0 - dt * theta0 * l));
        let mut phi = phi0.values().to_vec();
        let mut next = vec![0.0; phi.len()];
        for _ in 0..steps {
            plan.apply_weights(&w, &phi, &mut next);
            std::mem::swap(&mut phi, &mut next);
        }
        for (a, b) in out.phi.values().iter().zip(&phi) {
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn obstacle_run_stays_in_the_box_and_dissipates() {
        let g = Grid::new(64, 1, 12.0, 1.0).unwrap();
        let theta0 = 4.0;
        let params = ModelParams::new(1.0, 1.0, 1.0, 1.0, PotentialKind::DoubleObstacle { theta0 }).unwrap();
        let init = InitialCondition {
            phase: PhaseInit::SeededPerturbation {
                mean: 0.0,
                amplitude: 0.5,
                modes: 6,
            },
            velocity: VelocityInit::Zero,
        };
        let mut cfg = RunConfig::new(g, 1e-3, 0.5, init);
        cfg.seed = 3;
        cfg.output_every = 50;
        let out = obstacle_run(&cfg, &params).unwrap();
        let m0 = out.series[0].mass;
        let mut touched = false;
        for w in out.series.windows(2) {
            assert!(w[1].phi_min >= -1.0 && w[1].phi_max <= 1.0);
            assert!((w[1].mass - m0).abs() <= 1e-11);
            assert!(w[1].e_free <= w[0].e_free + 1e-12, "{} > {}", w[1].e_free, w[0].e_free);
            touched |= w[1].phi_max == 1.0;
        }
        assert!(touched, "the run never reached the obstacle");
        for s in &out.snapshots {
            assert!((free_energy(&s.phi, &params.potential)).is_finite());
        }
    }

    #[test]
    fn single_entry_sweep_makes_no_monotonicity_claim() {
        let g = Grid::new(32, 1, 8.0, 1.0).unwrap();
        let init = InitialCondition {
            phase: PhaseInit::Constant { m: 0.3 },
            velocity: VelocityInit::Zero,
        };
        let cfg = ObstacleLimitConfig {
            k_list: vec![8],
            run: RunConfig::new(g, 0.01, 0.05, init),
            theta0: 1.0,
        };
        let report = theta_limit_study(&cfg).unwrap();
        assert_eq!(report.distances().len(), 1);
        assert_eq!(report.non_increasing(), None);
    }

    #[test]
    fn constant_data_converge_at_first_order() {
        let g = Grid::new(16, 1, 4.0, 1.0).unwrap();
        let init = InitialCondition {
            phase: PhaseInit::Constant { m: 0.5 },
            velocity: VelocityInit::Zero,
        };
        let cfg = ObstacleLimitConfig {
            k_list: vec![4, 16, 64, 256],
            run: RunConfig::new(g, 0.01, 0.1, init),
            theta0: 1.0,
        };
        let report = theta_limit_study(&cfg).unwrap();
        let scaled: Vec<f64> = report.entries.iter().map(|e| *e.distance.as_ref().unwrap() / e.theta).collect();
        let (lo, hi) = scaled.iter().fold((f64::MAX, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo <= 4.0, "{scaled:?}");
        assert_eq!(report.strictly_decreasing(), Some(true));
    }
}
