//! Homogeneous free energy.
//!
//! The logarithmic potential is `Psi(s) = F(s) - theta0/2 s^2` with
//! `F(s) = theta/2 [(1+s) log(1+s) + (1-s) log(1-s)]`. Time stepping treats
//! the convex `F` implicitly and the concave quadratic explicitly. The
//! double-obstacle potential keeps only the quadratic and replaces `F` by the
//! indicator of `[-1, 1]`, which turns the chemical potential relation into a
//! complementarity system with a multiplier `lambda`.

use crate::grid::ScalarField;
use crate::{Error, Result};

/// Iterates of the Newton solvers are kept inside `[-1 + SAFE_MARGIN, 1 - SAFE_MARGIN]`.
pub const SAFE_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    FloryHuggins { theta: f64, theta0: f64 },
    DoubleObstacle { theta0: f64 },
}

impl PotentialKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PotentialKind::FloryHuggins { theta, theta0 } => {
                theta > 0.0 && theta0 > 0.0 && theta.is_finite() && theta0.is_finite()
            }
            PotentialKind::DoubleObstacle { theta0 } => theta0 > 0.0 && theta0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("potential parameters must be positive: {self:?}")))
        }
    }

    pub fn theta0(&self) -> f64 {
        match *self {
            PotentialKind::FloryHuggins { theta0, .. } | PotentialKind::DoubleObstacle { theta0 } => {
                theta0
            }
        }
    }

    pub fn is_obstacle(&self) -> bool {
        matches!(self, PotentialKind::DoubleObstacle { .. })
    }

    /// Whether the uniform state at mean `m` sits inside the spinodal region
    /// (`Psi''(m) < 0`). Informational only.
    pub fn is_spinodal(&self, m: f64) -> bool {
        match *self {
            PotentialKind::FloryHuggins { theta, theta0 } => theta / (1.0 - m * m) < theta0,
            PotentialKind::DoubleObstacle { .. } => m.abs() < 1.0,
        }
    }

    /// `Psi(s)`. For the obstacle potential the indicator contributes 0 on
    /// `[-1, 1]`; outside it (and at `|s| >= 1` for the log potential) the
    /// call fails.
    pub fn psi(&self, s: f64) -> Result<f64> {
        match *self {
            PotentialKind::FloryHuggins { theta, theta0 } => {
                Ok(f_value(s, theta)? - 0.5 * theta0 * s * s)
            }
            PotentialKind::DoubleObstacle { theta0 } => {
                if s.abs() <= 1.0 {
                    Ok(-0.5 * theta0 * s * s)
                } else {
                    Err(Error::Domain(s))
                }
            }
        }
    }

    /// `Psi'(s)` for the log potential; the obstacle potential has no
    /// derivative in this sense.
    pub fn psi_prime(&self, s: f64) -> Result<f64> {
        match *self {
            PotentialKind::FloryHuggins { theta, theta0 } => psi_prime(s, theta, theta0),
            PotentialKind::DoubleObstacle { .. } => {
                Err(Error::Unsupported("double obstacle potential has no Psi'".into()))
            }
        }
    }
}

fn check_open(s: f64) -> Result<()> {
    if s.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(s))
    }
}

/// `F(s) = theta/2 [(1+s) ln(1+s) + (1-s) ln(1-s)]`.
pub fn f_value(s: f64, theta: f64) -> Result<f64> {
    check_open(s)?;
    Ok(f_value_unchecked(s, theta))
}

/// `F'(s) = theta/2 ln((1+s)/(1-s))`.
pub fn f_prime(s: f64, theta: f64) -> Result<f64> {
    check_open(s)?;
    Ok(f_prime_unchecked(s, theta))
}

/// `F''(s) = theta / (1 - s^2)`.
pub fn f_second(s: f64, theta: f64) -> Result<f64> {
    check_open(s)?;
    Ok(f_second_unchecked(s, theta))
}

/// `Psi'(s) = F'(s) - theta0 s`.
pub fn psi_prime(s: f64, theta: f64, theta0: f64) -> Result<f64> {
    Ok(f_prime(s, theta)? - theta0 * s)
}

#[inline]
pub(crate) fn f_value_unchecked(s: f64, theta: f64) -> f64 {
    0.5 * theta * ((1.0 + s) * (1.0 + s).ln() + (1.0 - s) * (1.0 - s).ln())
}

#[inline]
pub(crate) fn f_prime_unchecked(s: f64, theta: f64) -> f64 {
    // std atanh is not exactly odd for negative arguments
    theta * s.abs().atanh().copysign(s)
}

#[inline]
pub(crate) fn f_second_unchecked(s: f64, theta: f64) -> f64 {
    theta / ((1.0 - s) * (1.0 + s))
}

/// Positive root of `Psi'` (the binodal value for zero mean) by bisection on
/// `(0, 1)`. `None` when `theta0 <= theta`, where `Psi'` has no positive root.
pub fn binodal_root(theta: f64, theta0: f64) -> Option<f64> {
    if theta0 <= theta {
        return None;
    }
    let g = |s: f64| f_prime_unchecked(s, theta) - theta0 * s;
    // g < 0 just right of 0, g -> +inf at 1
    let mut lo = 1e-8_f64;
    let mut hi = 1.0 - 1e-16;
    if g(lo) >= 0.0 || g(hi) <= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(if g(lo).abs() <= g(hi).abs() { lo } else { hi })
}

/// Multiplier of the bound constraints, `lambda` in the subdifferential of the
/// indicator of `[-1, 1]` at `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMultiplier {
    pub lambda: ScalarField,
    pub active_low: Vec<bool>,
    pub active_high: Vec<bool>,
}

impl ObstacleMultiplier {
    /// Active sets read off `(phi, lambda)` with the semismooth parameter `c`.
    pub fn from_fields(phi: &ScalarField, lambda: ScalarField, c: f64) -> Self {
        let active_high = phi
            .values()
            .iter()
            .zip(lambda.values())
            .map(|(&p, &l)| l + c * (p - 1.0) > 0.0)
            .collect();
        let active_low = phi
            .values()
            .iter()
            .zip(lambda.values())
            .map(|(&p, &l)| l + c * (p + 1.0) < 0.0)
            .collect();
        Self {
            lambda,
            active_low,
            active_high,
        }
    }
}

/// Pointwise `r = lambda - max(0, lambda + c (phi - 1)) - min(0, lambda + c (phi + 1))`.
#[inline]
pub fn complementarity_residual_scalar(phi: f64, lambda: f64, c: f64) -> f64 {
    lambda - (lambda + c * (phi - 1.0)).max(0.0) - (lambda + c * (phi + 1.0)).min(0.0)
}

/// Cellwise complementarity residual; zero exactly where `lambda` belongs to
/// the subdifferential of the indicator at `phi`.
pub fn obstacle_complementarity_residual(
    phi: &ScalarField,
    lambda: &ScalarField,
    c: f64,
) -> Result<ScalarField> {
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("complementarity parameter must be positive, got {c}")));
    }
    phi.grid().check_same(lambda.grid())?;
    Ok(phi.zip_map(lambda, |p, l| complementarity_residual_scalar(p, l, c)))
}
