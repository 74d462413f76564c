//! The smoothing kernel family: a ramp `ell` whose derivative is the
//! triangular bump `ell'(x) = (eps - |x|)^+ / eps^2`.
//!
//! All window integrals over a unit-length shift (the quantities showing up
//! in the smoothed-process mean and in the kernel functional) have piecewise
//! polynomial closed forms, collected here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel bandwidth must lie in (0, 1/2], got {0}")]
    InvalidEpsilon(f64),
}

/// Smoothing kernel parameterized by bandwidth `epsilon <= 1/2`, so that the
/// derivative support stays inside [-1/2, 1/2].
///
/// Closed forms:
///   ell'(x) = (eps - |x|)^+ / eps^2
///   ell(x)  = 0                       for x <= -eps
///             (x + eps)^2 / (2 eps^2) for -eps <= x <= 0
///             1 - (eps - x)^2 / (2 eps^2) for 0 <= x <= eps
///             1                       for x >= eps
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    epsilon: f64,
}

impl KernelSpec {
    pub fn new(epsilon: f64) -> Result<Self, KernelError> {
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > 0.5 {
            return Err(KernelError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The ramp `ell`: nondecreasing, 0 at -inf, 1 at +inf.
    pub fn ell(&self, x: f64) -> f64 {
        let e = self.epsilon;
        if x <= -e {
            0.0
        } else if x <= 0.0 {
            let s = x + e;
            s * s / (2.0 * e * e)
        } else if x <= e {
            let s = e - x;
            1.0 - s * s / (2.0 * e * e)
        } else {
            1.0
        }
    }

    /// Triangular derivative `ell'(x) = (eps - |x|)^+ / eps^2`.
    pub fn ell_prime(&self, x: f64) -> f64 {
        let e = self.epsilon;
        let s = e - x.abs();
        if s > 0.0 {
            s / (e * e)
        } else {
            0.0
        }
    }

    /// Antiderivative `Lambda(v) = integral of ell over (-inf, v]`.
    /// Equals `v` for v >= eps because ell is symmetric around 0.
    pub fn ell_antideriv(&self, v: f64) -> f64 {
        let e = self.epsilon;
        if v <= -e {
            0.0
        } else if v <= 0.0 {
            let s = v + e;
            s * s * s / (6.0 * e * e)
        } else if v <= e {
            let s = e - v;
            v + s * s * s / (6.0 * e * e)
        } else {
            v
        }
    }

    /// `M(t) = integral over y in [0,1] of ell(t - y) dy`, the exact mean of
    /// the smoothed empirical process at t when the transformed sample is
    /// Uniform(0,1).
    pub fn smoothed_mean(&self, t: f64) -> f64 {
        self.ell_antideriv(t) - self.ell_antideriv(t - 1.0)
    }

    /// Antiderivative of `(ell')^2`; saturates at 2/(3 eps).
    fn ell_prime_sq_antideriv(&self, v: f64) -> f64 {
        let e = self.epsilon;
        let e4 = e * e * e * e;
        if v <= -e {
            0.0
        } else if v <= 0.0 {
            let s = v + e;
            s * s * s / (3.0 * e4)
        } else if v <= e {
            let s = e - v;
            1.0 / (3.0 * e) + (e * e * e - s * s * s) / (3.0 * e4)
        } else {
            2.0 / (3.0 * e)
        }
    }

    /// `A(t) = integral over y in [0,1] of (ell'(t - y))^2 dy`.
    pub fn ell_prime_window_sq(&self, t: f64) -> f64 {
        self.ell_prime_sq_antideriv(t) - self.ell_prime_sq_antideriv(t - 1.0)
    }

    /// `B(t) = integral over y in [0,1] of ell'(t - y) dy = ell(t) - ell(t-1)`.
    pub fn ell_prime_window(&self, t: f64) -> f64 {
        self.ell(t) - self.ell(t - 1.0)
    }
}
