//! The empirical distribution of transformed samples, its smoothed variant,
//! exact and certified sup-deviation statistics, and the fluctuation profile
//! of the deviation sequence.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::KernelSpec;
use crate::sampler::UniformPath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmpiricalError {
    #[error("range end {end} exceeds path length {len}")]
    RangeExceedsPath { end: usize, len: usize },
    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: usize, hi: usize },
    #[error("tolerance must be > 0, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMethod {
    ExactOrderStatistics,
    CertifiedGrid,
}

/// A sup-deviation value together with how it was computed and a bound on
/// the gap to the true supremum (zero for the exact route).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationResult {
    pub sup_value: f64,
    pub argmax_t: f64,
    pub method: DeviationMethod,
    pub certified_error: f64,
}

/// Kernel evaluation as a free operation (`ell` or `ell'`).
pub fn kernel_eval(kernel: &KernelSpec, x: f64, derivative: bool) -> f64 {
    if derivative {
        kernel.ell_prime(x)
    } else {
        kernel.ell(x)
    }
}

/// Exact sup over t of |Fhat_n(t) - clamp(t, 0, 1)| via order statistics:
/// the supremum is max over i of max(i/n - U_(i), U_(i) - (i-1)/n). The mean
/// of Fhat_n is exactly clamp(t, 0, 1) because standardized marginals make
/// each transformed sample Uniform(0,1).
pub fn ecdf_sup_deviation(u: &UniformPath) -> DeviationResult {
    let sorted = u.sorted_view();
    let n = sorted.len() as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_t = 0.0;
    for (i, &ui) in sorted.iter().enumerate() {
        let upper = (i + 1) as f64 / n - ui; // attained at t = ui
        let lower = ui - i as f64 / n; // approached as t -> ui from below
        let local = upper.max(lower);
        if local > best {
            best = local;
            best_t = ui;
        }
    }
    DeviationResult {
        sup_value: best.max(0.0),
        argmax_t: best_t,
        method: DeviationMethod::ExactOrderStatistics,
        certified_error: 0.0,
    }
}

/// Pointwise smoothed empirical process Qhat_n(t) = mean of ell(t - U_i).
pub fn qhat_eval(u: &UniformPath, kernel: &KernelSpec, t: f64) -> f64 {
    let sum: f64 = u.values().iter().map(|&ui| kernel.ell(t - ui)).sum();
    sum / u.n() as f64
}

/// Exact mean of the smoothed process, E Qhat_n(t) = integral ell(t - y) dy.
pub fn qhat_mean(kernel: &KernelSpec, t: f64) -> f64 {
    kernel.smoothed_mean(t)
}

/// Prefix-sum accelerated evaluation of Qhat over many t values: the kernel
/// is piecewise quadratic in U, so each window sum reduces to three order
/// moments of the sorted sample, O(log n) per query after an O(n) build.
pub struct QhatEvaluator<'a> {
    sorted: &'a [f64],
    // prefix sums of U^1 and U^2 over the sorted sample
    s1: Vec<f64>,
    s2: Vec<f64>,
    kernel: KernelSpec,
}

impl<'a> QhatEvaluator<'a> {
    pub fn new(u: &'a UniformPath, kernel: &KernelSpec) -> Self {
        let sorted = u.sorted_view();
        let mut s1 = Vec::with_capacity(sorted.len() + 1);
        let mut s2 = Vec::with_capacity(sorted.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        let (mut a1, mut a2) = (0.0f64, 0.0f64);
        for &v in sorted {
            a1 += v;
            a2 += v * v;
            s1.push(a1);
            s2.push(a2);
        }
        Self { sorted, s1, s2, kernel: *kernel }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let eps = self.kernel.epsilon();
        let n = self.sorted.len();
        let lo = t - eps;
        let hi = t + eps;
        let i_lo = self.sorted.partition_point(|&v| v <= lo);
        let i_mid = self.sorted.partition_point(|&v| v <= t);
        let i_hi = self.sorted.partition_point(|&v| v < hi);
        let denom = 2.0 * eps * eps;
        // saturated below the window
        let mut total = i_lo as f64;
        // (t - eps, t]: ell = 1 - (u - lo)^2 / (2 eps^2)
        if i_mid > i_lo {
            let cnt = (i_mid - i_lo) as f64;
            let su = self.s1[i_mid] - self.s1[i_lo];
            let suu = self.s2[i_mid] - self.s2[i_lo];
            total += cnt - (suu - 2.0 * lo * su + lo * lo * cnt) / denom;
        }
        // (t, t + eps): ell = (hi - u)^2 / (2 eps^2)
        if i_hi > i_mid {
            let cnt = (i_hi - i_mid) as f64;
            let su = self.s1[i_hi] - self.s1[i_mid];
            let suu = self.s2[i_hi] - self.s2[i_mid];
            total += (hi * hi * cnt - 2.0 * hi * su + suu) / denom;
        }
        total / n as f64
    }
}

/// Certified grid search for sup over t of |Qhat_n(t) - E Qhat_n(t)|.
///
/// Both the process and its mean are (1/eps)-Lipschitz and the centered
/// deviation vanishes outside [-eps, 1 + eps], so a grid of step h certifies
/// the supremum within h / eps. The step is chosen as tol * eps / 2, making
/// the certificate at most tol / 2.
pub fn qhat_sup_deviation(
    u: &UniformPath,
    kernel: &KernelSpec,
    tol: f64,
) -> Result<DeviationResult, EmpiricalError> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(EmpiricalError::InvalidTolerance(tol));
    }
    let eps = kernel.epsilon();
    let span = 1.0 + 2.0 * eps;
    let step_req = tol * eps / 2.0;
    let m = (span / step_req).ceil() as usize;
    let step = span / m as f64;
    let eval = QhatEvaluator::new(u, kernel);
    let mut best = f64::NEG_INFINITY;
    let mut best_t = -eps;
    for j in 0..=m {
        let t = -eps + j as f64 * step;
        let dev = (eval.eval(t) - kernel.smoothed_mean(t)).abs();
        if dev > best {
            best = dev;
            best_t = t;
        }
    }
    Ok(DeviationResult {
        sup_value: best,
        argmax_t: best_t,
        method: DeviationMethod::CertifiedGrid,
        certified_error: step / eps,
    })
}

/// Successive deviations |D_n - D_{n+1}| of the exact sup statistic along the
/// prefixes of one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationProfile {
    pub n_lo: usize,
    /// gaps[j] = |D_{n_lo + j} - D_{n_lo + j + 1}|
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    /// max over the range of (n + 1) |D_n - D_{n+1}|; at most 1 by the
    /// deterministic fluctuation bound.
    pub max_scaled: f64,
}

/// Deviation statistics D_n on growing prefixes, n in [n_lo, n_hi], reusing
/// one incrementally sorted buffer.
pub fn fluctuation_profile(
    u: &UniformPath,
    n_lo: usize,
    n_hi: usize,
) -> Result<FluctuationProfile, EmpiricalError> {
    if n_lo < 1 || n_lo > n_hi {
        return Err(EmpiricalError::InvalidRange { lo: n_lo, hi: n_hi });
    }
    if n_hi > u.n() {
        return Err(EmpiricalError::RangeExceedsPath { end: n_hi, len: u.n() });
    }
    let values = u.values();
    let mut sorted: Vec<f64> = Vec::with_capacity(n_hi);
    let mut devs: Vec<f64> = Vec::with_capacity(n_hi - n_lo + 1);
    for (count, &v) in values[..n_hi].iter().enumerate() {
        let pos = sorted.partition_point(|&w| w <= v);
        sorted.insert(pos, v);
        let n = count + 1;
        if n >= n_lo {
            let nf = n as f64;
            let mut best = 0.0f64;
            for (i, &ui) in sorted.iter().enumerate() {
                best = best.max(((i + 1) as f64 / nf - ui).max(ui - i as f64 / nf));
            }
            devs.push(best);
        }
    }
    let mut gaps = Vec::with_capacity(devs.len().saturating_sub(1));
    let mut max_gap = 0.0f64;
    let mut max_scaled = 0.0f64;
    for (j, w) in devs.windows(2).enumerate() {
        let gap = (w[0] - w[1]).abs();
        let n = n_lo + j;
        gaps.push(gap);
        max_gap = max_gap.max(gap);
        max_scaled = max_scaled.max((n + 1) as f64 * gap);
    }
    Ok(FluctuationProfile { n_lo, gaps, max_gap, max_scaled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodels::FamilySpec;
    use crate::sampler::{uniformize, PathSampler};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn upath(values: &[f64]) -> UniformPath {
        UniformPath::new(values.to_vec())
    }

    // Brute-force oracle: evaluate |Fhat - clamp(t,0,1)| at all jump-adjacent
    // candidates and on a dense grid.
    fn ecdf_sup_brute(values: &[f64]) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let fhat = |t: f64| sorted.partition_point(|&v| v <= t) as f64 / n;
        let mut best = 0.0f64;
        let mut candidates: Vec<f64> = Vec::new();
        for &v in &sorted {
            candidates.push(v);
            candidates.push(v - 1e-12);
            candidates.push(v + 1e-12);
        }
        for i in 0..=100_000 {
            candidates.push(i as f64 / 100_000.0);
        }
        for t in candidates {
            let mean = t.clamp(0.0, 1.0);
            best = best.max((fhat(t) - mean).abs());
        }
        best
    }

    #[test]
    fn single_point_deviation() {
        let r = ecdf_sup_deviation(&upath(&[0.5]));
        assert_eq!(r.sup_value, 0.5);
        assert_eq!(r.certified_error, 0.0);
        assert_eq!(r.method, DeviationMethod::ExactOrderStatistics);
    }

    #[test]
    fn two_point_deviation() {
        let r = ecdf_sup_deviation(&upath(&[0.25, 0.75]));
        assert_relative_eq!(r.sup_value, 0.25, max_relative = 1e-12);
        assert_relative_eq!(ecdf_sup_brute(&[0.25, 0.75]), 0.25, max_relative = 1e-6);
    }

    #[test]
    fn evenly_spaced_sample() {
        let n = 40usize;
        let values: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ecdf_sup_deviation(&upath(&values));
        assert_relative_eq!(r.sup_value, 1.0 / (2.0 * n as f64), max_relative = 1e-12);
    }

    #[test]
    fn exact_matches_brute_force_on_random_instances() {
        let sampler = PathSampler::for_family(&FamilySpec::Iid, 1).unwrap();
        let _ = sampler;
        let s = PathSampler::for_family(&FamilySpec::Ou { alpha: 0.5 }, 200).unwrap();
        for rep in 0..25 {
            let u = uniformize(&s.sample(404, rep));
            let n = 1 + (rep as usize * 37) % 200;
            let prefix = upath(&u.values()[..n]);
            let exact = ecdf_sup_deviation(&prefix).sup_value;
            let brute = ecdf_sup_brute(prefix.values());
            assert!((exact - brute).abs() <= 1e-12, "n={n}: {exact} vs {brute}");
        }
    }

    #[test]
    fn qhat_pointwise_values() {
        let kernel = KernelSpec::new(0.25).unwrap();
        let u = upath(&[0.5]);
        assert_eq!(qhat_eval(&u, &kernel, -0.3), 0.0);
        assert_eq!(qhat_eval(&u, &kernel, 1.3), 1.0);
        assert_eq!(qhat_eval(&u, &kernel, 0.5), 0.5); // ell(0) = 1/2
    }

    #[test]
    fn qhat_evaluator_matches_naive() {
        let kernel = KernelSpec::new(0.1).unwrap();
        let s = PathSampler::for_family(&FamilySpec::Iid, 300).unwrap();
        let u = uniformize(&s.sample(11, 0));
        let fast = QhatEvaluator::new(&u, &kernel);
        for j in 0..=600 {
            let t = -0.15 + j as f64 * 0.0025;
            let a = fast.eval(t);
            let b = qhat_eval(&u, &kernel, t);
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn qhat_sup_certified_against_brute_force() {
        let kernel = KernelSpec::new(0.25).unwrap();
        let u = upath(&[0.5]);
        let r = qhat_sup_deviation(&u, &kernel, 1e-3).unwrap();
        // exact supremum of |ell(t - 1/2) - M(t)| is 9/32
        assert!((r.sup_value - 0.28125).abs() <= r.certified_error + 1e-12);
        assert!(r.certified_error <= 1e-3);
        assert_eq!(r.method, DeviationMethod::CertifiedGrid);
    }

    #[test]
    fn qhat_sup_bounded_by_ecdf_plus_eps() {
        // squeeze consequence: |E Qhat - E Fhat| <= eps
        let s = PathSampler::for_family(&FamilySpec::Ou { alpha: 1.0 }, 150).unwrap();
        for rep in 0..10 {
            let u = uniformize(&s.sample(21, rep));
            for &eps in &[0.05, 0.25, 0.5] {
                let kernel = KernelSpec::new(eps).unwrap();
                let q = qhat_sup_deviation(&u, &kernel, 1e-3).unwrap();
                let e = ecdf_sup_deviation(&u);
                assert!(
                    q.sup_value <= e.sup_value + eps + 1e-3,
                    "eps={eps}: {} vs {}",
                    q.sup_value,
                    e.sup_value
                );
            }
        }
    }

    #[test]
    fn qhat_sup_degenerate_path() {
        // all mass at one point: the deviation near the jump is ~ 1 - O(eps)
        let kernel = KernelSpec::new(0.05).unwrap();
        let values = vec![0.5; 64];
        let u = upath(&values);
        let r = qhat_sup_deviation(&u, &kernel, 1e-3).unwrap();
        assert!(r.sup_value >= 0.5 - 0.05 - 1e-3);
    }

    #[test]
    fn qhat_rejects_bad_tolerance() {
        let kernel = KernelSpec::new(0.25).unwrap();
        let u = upath(&[0.5]);
        assert!(qhat_sup_deviation(&u, &kernel, 0.0).is_err());
        assert!(qhat_sup_deviation(&u, &kernel, f64::NAN).is_err());
    }

    #[test]
    fn squeeze_inequality_pathwise() {
        // Qhat(t - eps) <= Fhat(t) <= Qhat(t + eps), from
        // ell(x - eps) <= 1(x >= 0) <= ell(x + eps)
        let s = PathSampler::for_family(&FamilySpec::Lrd { d_exp: 0.5 }, 120).unwrap();
        for rep in 0..5 {
            let u = uniformize(&s.sample(33, rep));
            let sorted = u.sorted_view();
            let n = sorted.len() as f64;
            for &eps in &[0.05, 0.1, 0.25, 0.5] {
                let kernel = KernelSpec::new(eps).unwrap();
                for j in 0..=1000 {
                    let t = -0.1 + j as f64 * 0.0012;
                    let fhat = sorted.partition_point(|&v| v <= t) as f64 / n;
                    let lo = qhat_eval(&u, &kernel, t - eps);
                    let hi = qhat_eval(&u, &kernel, t + eps);
                    assert!(lo <= fhat + 1e-12 && fhat <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn fluctuation_constant_path() {
        let u = upath(&[0.5; 50]);
        let p = fluctuation_profile(&u, 1, 50).unwrap();
        assert!(p.gaps.iter().all(|&g| g == 0.0));
        assert_eq!(p.max_scaled, 0.0);
    }

    #[test]
    fn fluctuation_bound_holds_pathwise() {
        let s = PathSampler::for_family(&FamilySpec::Iid, 1000).unwrap();
        for rep in 0..10 {
            let u = uniformize(&s.sample(55, rep));
            let p = fluctuation_profile(&u, 10, 1000).unwrap();
            assert!(p.max_scaled <= 1.0, "scaled gap {}", p.max_scaled);
            for (j, &gap) in p.gaps.iter().enumerate() {
                assert!(gap <= 1.0 / (10 + j + 1) as f64 + 1e-15);
            }
        }
    }

    #[test]
    fn fluctuation_range_validation() {
        let u = upath(&[0.1, 0.2, 0.3]);
        assert!(matches!(
            fluctuation_profile(&u, 1, 4),
            Err(EmpiricalError::RangeExceedsPath { .. })
        ));
        assert!(fluctuation_profile(&u, 0, 2).is_err());
        assert!(fluctuation_profile(&u, 3, 2).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_deviation_equals_brute(seed in 0u64..500, n in 1usize..60) {
            let s = PathSampler::for_family(&FamilySpec::Iid, n).unwrap();
            let u = uniformize(&s.sample(seed, 0));
            let exact = ecdf_sup_deviation(&u).sup_value;
            prop_assert!((exact - ecdf_sup_brute(u.values())).abs() <= 1e-12);
        }

        #[test]
        fn qhat_monotone_and_in_unit_interval(seed in 0u64..200) {
            let kernel = KernelSpec::new(0.25).unwrap();
            let s = PathSampler::for_family(&FamilySpec::Iid, 40).unwrap();
            let u = uniformize(&s.sample(seed, 1));
            let mut prev = -1.0;
            for j in 0..200 {
                let t = -0.5 + j as f64 * 0.01;
                let v = qhat_eval(&u, &kernel, t);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }

        #[test]
        fn evaluator_agrees_with_naive(seed in 0u64..200, t in -0.6f64..1.6) {
            let kernel = KernelSpec::new(0.25).unwrap();
            let s = PathSampler::for_family(&FamilySpec::Equicorrelated { rho: 0.3 }, 50).unwrap();
            let u = uniformize(&s.sample(seed, 2));
            let fast = QhatEvaluator::new(&u, &kernel);
            prop_assert!((fast.eval(t) - qhat_eval(&u, &kernel, t)).abs() < 1e-12);
        }
    }
}
