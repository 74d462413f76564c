//! Standard Gaussian cdf/pdf helpers.

use std::f64::consts::SQRT_2;

/// Standard normal cdf, evaluated through `erfc` so that tail values keep
/// full relative accuracy (a rational-polynomial cdf approximation with ~1e-7
/// absolute error would bias sup-deviation statistics at large n).
pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / SQRT_2)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
