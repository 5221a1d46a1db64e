//! Two-run contractivity experiment: a base run against runs whose initial
//! velocity carries a small divergence-free perturbation `eps * w`.

use std::f64::consts::PI;

use crate::coupled::{run_from, Collector, RunConfig, State};
use crate::diagnostics::{weak_strong_distance, WeakStrongDistance};
use crate::grid::{velocity_from_streamfunction, Grid, MacVector};
use crate::momentum::ModelParams;
use crate::{Error, Result};

/// Single-vortex perturbation from `sin^2(pi x/Lx) sin^2(2 pi y/Ly)`,
/// normalised to `max |w| = 1`.
pub fn vortex_perturbation(g: &Grid) -> Result<MacVector> {
    if g.is_1d() {
        return Err(Error::InvalidInput("a velocity perturbation needs a 2D grid".into()));
    }
    let (lx, ly) = (g.lx, g.ly);
    let w = velocity_from_streamfunction(g, |x, y| {
        (PI * x / lx).sin().powi(2) * (2.0 * PI * y / ly).sin().powi(2)
    });
    let peak = w.max_abs();
    Ok(w.scaled(1.0 / peak))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStrongRun {
    pub epsilon: f64,
    pub distances: Vec<WeakStrongDistance>,
}

impl WeakStrongRun {
    /// Distance at the last shared output time.
    pub fn final_distance(&self) -> Option<f64> {
        self.distances.last().map(|d| d.d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStrongReport {
    pub runs: Vec<WeakStrongRun>,
}

impl WeakStrongReport {
    /// `D_eps(T) / D_{eps/2}(T)` for consecutive entries of the sweep.
    pub fn ratios(&self) -> Vec<f64> {
        self.runs
            .windows(2)
            .filter_map(|w| Some(w[0].final_distance()? / w[1].final_distance()?))
            .collect()
    }
}

fn history(state: State, cfg: &RunConfig, params: &ModelParams) -> Result<Vec<State>> {
    let mut c = Collector::default();
    run_from(state, cfg, params, &mut c)?;
    Ok(c.snapshots)
}

/// Runs the base configuration once and once per perturbation size, all in
/// parallel, and returns the distance histories in the order of `epsilons`.
pub fn weak_strong_experiment(
    cfg: &RunConfig,
    params: &ModelParams,
    epsilons: &[f64],
    perturbation: &MacVector,
) -> Result<WeakStrongReport> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidInput("perturbation sizes must be positive".into()));
    }
    perturbation.grid().check_same(&cfg.grid)?;
    let base = cfg.initial_state(params)?;
    let perturbed: Vec<State> = epsilons
        .iter()
        .map(|&eps| State {
            u: base.u.zip_map(perturbation, |a, w| a + eps * w),
            ..base.clone()
        })
        .collect();

    let (reference, others) = std::thread::scope(|s| {
        let handles: Vec<_> = perturbed
            .into_iter()
            .map(|st| s.spawn(move || history(st, cfg, params)))
            .collect();
        let reference = history(base.clone(), cfg, params);
        let others: Vec<_> = handles
            .into_iter()
            .map(|h| h.join().expect("perturbed run panicked"))
            .collect();
        (reference, others)
    });
    let reference = reference?;
    let runs = epsilons
        .iter()
        .zip(others)
        .map(|(&epsilon, hist)| {
            Ok(WeakStrongRun {
                epsilon,
                distances: weak_strong_distance(&reference, &hist?, params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakStrongReport { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled::{InitialCondition, PhaseInit, VelocityInit};
    use crate::grid::divergence_mac;
    use crate::potential::PotentialKind;

    fn setup() -> (RunConfig, ModelParams) {
        let kind = PotentialKind::FloryHuggins { theta: 1.0, theta0: 2.0 };
        let p = ModelParams::new(3.0, 1.0, 0.1, 0.1, kind).unwrap();
        let g = Grid::new(16, 16, 3.2, 3.2).unwrap();
        let init = InitialCondition {
            phase: PhaseInit::SeededPerturbation { mean: 0.0, amplitude: 0.3, modes: 2 },
            velocity: VelocityInit::ShearLayer { magnitude: 0.2 },
        };
        let mut c = RunConfig::new(g, 1e-3, 0.01, init);
        c.output_every = 5;
        c.seed = 4;
        (c, p)
    }

    #[test]
    fn perturbation_is_solenoidal_and_wall_free() {
        let g = Grid::new(24, 12, 2.0, 1.0).unwrap();
        let w = vortex_perturbation(&g).unwrap();
        assert!((w.max_abs() - 1.0).abs() < 1e-15);
        assert!(divergence_mac(&w).max_abs() < 1e-12);
        assert_eq!(w.max_abs_boundary(), 0.0);
        assert!(vortex_perturbation(&Grid::new(8, 1, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn distance_starts_quadratic_and_stays_ordered() {
        let (c, p) = setup();
        let w = vortex_perturbation(&c.grid).unwrap();
        let r = weak_strong_experiment(&c, &p, &[0.02, 0.01], &w).unwrap();
        assert_eq!(r.runs.len(), 2);
        let d0 = |k: usize| r.runs[k].distances[0].d;
        assert!((d0(0) / d0(1) - 4.0).abs() < 1e-10);
        assert_eq!(r.runs[0].distances.len(), 3);
        let ratio = r.ratios()[0];
        assert!((2.0..=8.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rejects_bad_sizes() {
        let (c, p) = setup();
        let w = vortex_perturbation(&c.grid).unwrap();
        assert!(weak_strong_experiment(&c, &p, &[], &w).is_err());
        assert!(weak_strong_experiment(&c, &p, &[0.1, -1.0], &w).is_err());
    }
}
