//! The finite-sample bound formulas: the kernel functional D(ell), the
//! smoothed-process bound, the empirical-distribution bound, and the
//! bandwidth selection rule with its regime split.

use serde::Serialize;

use crate::kernel::KernelSpec;

/// sqrt(6) + sqrt(3), the chaining constant of the smoothed-process bound.
pub const CHAINING_CONSTANT: f64 = 4.181540550352055;
/// Constant of the empirical-distribution bound.
pub const ECDF_CONSTANT: f64 = 16.0;
/// Ratio threshold splitting the bandwidth-selection regimes.
pub const SMALL_RATIO_THRESHOLD: f64 = 1.0 / 18.0;

/// Bandwidth-selection regime for the (n + Delta) / n^2 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SmallRatio,
    Saturated,
}

/// Kernel functional
/// D(ell) = sqrt( integral over t of [ A(t) - B(t)^2 ] ),
/// with A and B the window integrals of (ell')^2 and ell'. The integrand is
/// a variance, hence nonnegative; roundoff below zero is clipped (and logged
/// when it exceeds what roundoff explains).
pub fn d_functional(kernel: &KernelSpec) -> f64 {
    let eps = kernel.epsilon();
    // the integrand vanishes outside [-eps, 1 + eps]
    let (a, b) = (-eps, 1.0 + eps);
    let panels = 2048usize;
    let h = (b - a) / panels as f64;
    let bracket = |t: f64| {
        let bw = kernel.ell_prime_window(t);
        let v = kernel.ell_prime_window_sq(t) - bw * bw;
        if v < -1e-10 {
            log::warn!("variance bracket {v:.3e} at t = {t}: below roundoff slack");
        }
        v.max(0.0)
    };
    // composite Simpson
    let mut acc = bracket(a) + bracket(b);
    for i in 1..panels {
        let t = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * bracket(t);
    }
    (acc * h / 3.0).max(0.0).sqrt()
}

/// Closed-form envelope sqrt(2 / eps) dominating D(ell).
pub fn d_functional_bound(kernel: &KernelSpec) -> f64 {
    (2.0 / kernel.epsilon()).sqrt()
}

/// (sqrt(6) + sqrt(3)) * D(ell) * sqrt((n + Delta) / n^2): the expected sup
/// deviation bound for the smoothed process.
pub fn lemma1_bound(n: usize, delta: f64, d_ell: f64) -> f64 {
    let nf = n as f64;
    CHAINING_CONSTANT * d_ell * ((nf + delta) / (nf * nf)).sqrt()
}

/// 16 * cbrt((n + Delta) / n^2): the expected sup deviation bound for the
/// empirical distribution.
pub fn theorem2_bound(n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    ECDF_CONSTANT * ((nf + delta) / (nf * nf)).cbrt()
}

/// Bandwidth selection: when (n + Delta) / n^2 <= 1/18 the optimized value
/// cbrt(9 (n + Delta) / (4 n^2)) applies (it is automatically <= 1/2);
/// otherwise the trivial unit bound takes over and no bandwidth is selected.
pub fn epsilon_star(n: usize, delta: f64) -> (Option<f64>, Regime) {
    let nf = n as f64;
    let ratio = (nf + delta) / (nf * nf);
    if ratio <= SMALL_RATIO_THRESHOLD {
        (Some((9.0 * ratio / 4.0).cbrt()), Regime::SmallRatio)
    } else {
        (None, Regime::Saturated)
    }
}

/// The pre-optimization combination 12 sqrt((n + Delta) / (eps n^2)) + 4 eps.
pub fn raw_combined(n: usize, delta: f64, epsilon: f64) -> f64 {
    let nf = n as f64;
    12.0 * ((nf + delta) / (epsilon * nf * nf)).sqrt() + 4.0 * epsilon
}

/// All bound quantities for one (n, Delta) cell with a given kernel.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub delta: f64,
    pub d_ell: f64,
    pub d_ell_bound: f64,
    pub lemma1_value: f64,
    pub theorem2_value: f64,
    pub epsilon_star: Option<f64>,
    pub raw_combined: Option<f64>,
    pub regime: Regime,
}

/// Evaluate every bound quantity for the cell; `kernel` is the kernel the
/// smoothed-process bound is evaluated with (fixed or selected upstream).
pub fn build_report(n: usize, delta: f64, kernel: &KernelSpec) -> BoundReport {
    let d_ell = d_functional(kernel);
    let (eps_star, regime) = epsilon_star(n, delta);
    BoundReport {
        n,
        delta,
        d_ell,
        d_ell_bound: d_functional_bound(kernel),
        lemma1_value: lemma1_bound(n, delta, d_ell),
        theorem2_value: theorem2_bound(n, delta),
        epsilon_star: eps_star,
        raw_combined: eps_star.map(|e| raw_combined(n, delta, e)),
        regime,
    }
}
