//! Multivariate Gaussian path sampling with deterministic, counter-based
//! substreams, and the probability integral transform to uniforms.
//!
//! Two routes produce `X ~ N(0, C)`:
//!  * a dense Cholesky factor of a validated [`CovarianceModel`], and
//!  * structured samplers for the covariance families (AR(1) recursion for
//!    the exponential family, factor representations for equicorrelated and
//!    block structures, Durbin-Levinson innovations for general stationary
//!    sequences). These realize the same lower-triangular map without the
//!    dense matrix, which is what makes n = 10^4 cells affordable.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::covmodels::{CovarianceModel, FamilySpec};
use crate::gauss;

/// Jitter escalation ladder for near-singular matrices.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];
/// Innovation variances below this floor signal an effectively invalid
/// stationary covariance.
const INNOVATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("factorization failed even with diagonal jitter up to 1e-8")]
    FactorizationFailed,
    #[error("block size {m} exceeds dimension {n}")]
    BlockExceedsDimension { m: usize, n: usize },
    #[error("invalid family for structured sampling: {0}")]
    InvalidFamily(String),
}

/// Lower-triangular factor L with C + jitter*I = L L^T.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    l: DMatrix<f64>,
    jitter_used: f64,
    label: String,
}

impl CholeskyFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }
}

/// Factor a validated model, escalating diagonal jitter from 0 through 1e-8
/// before giving up.
pub fn factorize(model: &CovarianceModel) -> Result<CholeskyFactor, SamplerError> {
    let n = model.n();
    for &jitter in &JITTER_LADDER {
        let candidate = if jitter == 0.0 {
            model.entries().clone()
        } else {
            model.entries() + DMatrix::<f64>::identity(n, n) * jitter
        };
        if let Some(ch) = nalgebra::Cholesky::new(candidate) {
            let l = ch.unpack();
            debug_assert!(n > 64 || {
                let recon = &l * l.transpose();
                let target = model.entries() + DMatrix::<f64>::identity(n, n) * jitter;
                (recon - target).abs().max() <= 1e-8
            });
            return Ok(CholeskyFactor { n, l, jitter_used: jitter, label: model.label() });
        }
    }
    Err(SamplerError::FactorizationFailed)
}

/// One sampled vector X ~ N(0, C).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPath {
    pub values: Vec<f64>,
    pub model_id: String,
    pub seed: u64,
    pub replication_index: u64,
}

/// The probability-integral transform of a Gaussian path, with a cached
/// ascending view (the deviation statistics all work on sorted samples).
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPath {
    values: Vec<f64>,
    sorted: Vec<f64>,
}

impl UniformPath {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "uniform path must be nonempty");
        debug_assert!(values.iter().all(|u| *u > 0.0 && *u < 1.0));
        let mut sorted = values.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Self { values, sorted }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Ascending permutation of the values.
    pub fn sorted_view(&self) -> &[f64] {
        &self.sorted
    }
}

/// U_i = Phi(X_i), clamped into the open unit interval so downstream order
/// statistics stay well defined even for |X| beyond the cdf's saturation
/// point.
pub fn uniformize(path: &GaussianPath) -> UniformPath {
    let max_below_one = 1.0 - f64::EPSILON / 2.0;
    let values = path
        .values
        .iter()
        .map(|&x| gauss::phi(x).clamp(1e-300, max_below_one))
        .collect();
    UniformPath::new(values)
}

/// Deterministic substream for (master_seed, replication_index): one ChaCha12
/// key per master seed, one counter-selected stream per replication. Distinct
/// replication indices give statistically independent streams and identical
/// inputs reproduce bit-identical output regardless of scheduling.
fn substream(master_seed: u64, replication_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(replication_index);
    rng
}

/// Draw X = L Z from a dense factor.
pub fn sample_path(factor: &CholeskyFactor, master_seed: u64, replication_index: u64) -> GaussianPath {
    let mut rng = substream(master_seed, replication_index);
    let n = factor.n;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut values = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += factor.l[(i, j)] * z[j];
        }
        values[i] = acc;
    }
    GaussianPath {
        values,
        model_id: factor.label.clone(),
        seed: master_seed,
        replication_index,
    }
}

/// Packed predictor rows from the Durbin-Levinson recursion: row k (length k)
/// holds the coefficients of the best linear predictor of X_{k+1} from
/// (X_k, ..., X_1), and `sds[k]` the innovation standard deviation. Composing
/// the recursion is exactly the Cholesky map Z -> X of the Toeplitz matrix.
#[derive(Debug, Clone)]
struct ToeplitzInnovations {
    n: usize,
    rows: Vec<f64>,
    sds: Vec<f64>,
}

impl ToeplitzInnovations {
    fn build(r: &[f64]) -> Result<Self, SamplerError> {
        let n = r.len();
        assert!(n >= 1 && r[0] == 1.0);
        let mut rows = Vec::with_capacity(n * (n - 1) / 2);
        let mut sds = Vec::with_capacity(n);
        sds.push(1.0);
        let mut phi: Vec<f64> = Vec::with_capacity(n);
        let mut v = 1.0f64;
        for k in 1..n {
            // phi holds the order-(k-1) predictor; extend it to order k
            let mut num = r[k];
            for (j, &p) in phi.iter().enumerate() {
                num -= p * r[k - 1 - j];
            }
            let a = num / v;
            let len = phi.len();
            for j in 0..len / 2 {
                let (lo, hi) = (phi[j], phi[len - 1 - j]);
                phi[j] = lo - a * hi;
                phi[len - 1 - j] = hi - a * lo;
            }
            if len % 2 == 1 {
                let mid = phi[len / 2];
                phi[len / 2] = mid - a * mid;
            }
            phi.push(a);
            v *= 1.0 - a * a;
            if !(v > INNOVATION_FLOOR) {
                return Err(SamplerError::FactorizationFailed);
            }
            rows.extend_from_slice(&phi);
            sds.push(v.sqrt());
        }
        Ok(Self { n, rows, sds })
    }

    fn sample_into(&self, x: &mut Vec<f64>, rng: &mut ChaCha12Rng) {
        x.clear();
        x.push(rng.sample::<f64, _>(StandardNormal));
        let mut offset = 0usize;
        for k in 1..self.n {
            let row = &self.rows[offset..offset + k];
            offset += k;
            let mut mean = 0.0;
            // row[j] multiplies X_{k-j} (lag j+1)
            for (j, &c) in row.iter().enumerate() {
                mean += c * x[k - 1 - j];
            }
            let z: f64 = rng.sample(StandardNormal);
            x.push(mean + self.sds[k] * z);
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Iid,
    /// X_1 = Z_1, X_k = rho X_{k-1} + sqrt(1 - rho^2) Z_k.
    Ar1 { rho: f64 },
    /// X_i = loading * Z_0 + sqrt(1 - loading^2) * Z_i.
    OneFactor { loading: f64 },
    /// First m coordinates equal the shared factor; the rest load on it
    /// with weight sqrt(xi).
    BlockFactor { m: usize, loading: f64 },
    Toeplitz(ToeplitzInnovations),
    Dense(CholeskyFactor),
}

/// A sampler for X ~ N(0, C), either structured (family models at any n) or
/// dense (arbitrary validated models).
#[derive(Debug, Clone)]
pub struct PathSampler {
    n: usize,
    label: String,
    repr: Repr,
}

impl PathSampler {
    /// Structured sampler for a family model, exact in distribution, without
    /// materializing the covariance matrix.
    pub fn for_family(spec: &FamilySpec, n: usize) -> Result<Self, SamplerError> {
        spec.validate().map_err(|e| SamplerError::InvalidFamily(e.to_string()))?;
        if n == 0 {
            return Err(SamplerError::InvalidFamily("dimension must be >= 1".into()));
        }
        let repr = match spec {
            FamilySpec::Iid => Repr::Iid,
            FamilySpec::Ou { alpha } => Repr::Ar1 { rho: (-alpha).exp() },
            FamilySpec::Equicorrelated { rho } => Repr::OneFactor { loading: rho.sqrt() },
            FamilySpec::BlockIdentical { m, xi } => {
                if *m > n {
                    return Err(SamplerError::BlockExceedsDimension { m: *m, n });
                }
                Repr::BlockFactor { m: *m, loading: xi.sqrt() }
            }
            FamilySpec::Lrd { .. } | FamilySpec::CustomStationary { .. } => {
                let mut r = Vec::with_capacity(n);
                r.push(1.0);
                for d in 1..n {
                    r.push(spec.stationary_r(d).unwrap());
                }
                Repr::Toeplitz(ToeplitzInnovations::build(&r)?)
            }
        };
        Ok(Self { n, label: spec.label(), repr })
    }

    /// Wrap a dense factor.
    pub fn from_factor(factor: CholeskyFactor) -> Self {
        Self { n: factor.n, label: factor.label.clone(), repr: Repr::Dense(factor) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sample(&self, master_seed: u64, replication_index: u64) -> GaussianPath {
        let mut rng = substream(master_seed, replication_index);
        let n = self.n;
        let mut values = Vec::with_capacity(n);
        match &self.repr {
            Repr::Iid => {
                for _ in 0..n {
                    values.push(rng.sample::<f64, _>(StandardNormal));
                }
            }
            Repr::Ar1 { rho } => {
                let innov = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                values.push(prev);
                for _ in 1..n {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + innov * z;
                    values.push(prev);
                }
            }
            Repr::OneFactor { loading } => {
                let shared: f64 = rng.sample(StandardNormal);
                let co = (1.0 - loading * loading).sqrt();
                for _ in 0..n {
                    let z: f64 = rng.sample(StandardNormal);
                    values.push(loading * shared + co * z);
                }
            }
            Repr::BlockFactor { m, loading } => {
                let shared: f64 = rng.sample(StandardNormal);
                let co = (1.0 - loading * loading).sqrt();
                for i in 0..n {
                    if i < *m {
                        values.push(shared);
                    } else {
                        let z: f64 = rng.sample(StandardNormal);
                        values.push(loading * shared + co * z);
                    }
                }
            }
            Repr::Toeplitz(t) => t.sample_into(&mut values, &mut rng),
            Repr::Dense(factor) => {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += factor.l[(i, j)] * z[j];
                    }
                    values.push(acc);
                }
            }
        }
        GaussianPath {
            values,
            model_id: self.label.clone(),
            seed: master_seed,
            replication_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodels::{build_explicit, build_family};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_factorizes_cleanly() {
        let model = build_explicit(DMatrix::identity(3, 3)).unwrap();
        let f = factorize(&model).unwrap();
        assert_eq!(f.jitter_used(), 0.0);
        assert_eq!(f.l(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn hand_cholesky_two_by_two() {
        let model =
            build_explicit(DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0])).unwrap();
        let f = factorize(&model).unwrap();
        assert_relative_eq!(f.l()[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(f.l()[(1, 0)], 0.6, max_relative = 1e-14);
        assert_relative_eq!(f.l()[(1, 1)], 0.8, max_relative = 1e-14); // sqrt(1 - 0.36)
        assert_eq!(f.l()[(0, 1)], 0.0);
    }

    #[test]
    fn rank_deficient_all_ones_needs_only_tiny_jitter() {
        let model = build_explicit(DMatrix::from_element(3, 3, 1.0)).unwrap();
        let f = factorize(&model).unwrap();
        assert!(f.jitter_used() <= 1e-8);
        for i in 0..3 {
            assert_relative_eq!(f.l()[(i, 0)], 1.0, max_relative = 1e-6);
        }
        // perfectly correlated: all coordinates of one path agree
        let path = sample_path(&f, 7, 0);
        let spread = path.values.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        assert!(spread.1 - spread.0 <= 1e-4);
    }

    #[test]
    fn determinism_and_stream_separation() {
        let model = build_family(&FamilySpec::Ou { alpha: 1.0 }, 5).unwrap();
        let f = factorize(&model).unwrap();
        let a = sample_path(&f, 123, 4);
        let b = sample_path(&f, 123, 4);
        assert_eq!(a.values, b.values);
        let c = sample_path(&f, 123, 5);
        assert_ne!(a.values, c.values);
        let d = sample_path(&f, 124, 4);
        assert_ne!(a.values, d.values);
    }

    #[test]
    fn structured_matches_dense_for_ar1() {
        // the AR(1) recursion is the Cholesky map of the exponential Toeplitz
        let spec = FamilySpec::Ou { alpha: 0.7 };
        let model = build_family(&spec, 40).unwrap();
        let dense = PathSampler::from_factor(factorize(&model).unwrap());
        let fast = PathSampler::for_family(&spec, 40).unwrap();
        for rep in 0..5 {
            let a = dense.sample(99, rep);
            let b = fast.sample(99, rep);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_relative_eq!(x, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn structured_matches_dense_for_stationary_innovations() {
        let spec = FamilySpec::Lrd { d_exp: 0.5 };
        let model = build_family(&spec, 30).unwrap();
        let dense = PathSampler::from_factor(factorize(&model).unwrap());
        let fast = PathSampler::for_family(&spec, 30).unwrap();
        for rep in 0..5 {
            let a = dense.sample(5, rep);
            let b = fast.sample(5, rep);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_relative_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn empirical_mean_is_centered() {
        // identity model: per-coordinate mean over 10^5 replications within
        // 3 / sqrt(10^5) of zero
        let s = PathSampler::for_family(&FamilySpec::Iid, 4).unwrap();
        let reps = 100_000u64;
        let mut sums = [0.0f64; 4];
        for rep in 0..reps {
            let p = s.sample(2024, rep);
            for (acc, v) in sums.iter_mut().zip(&p.values) {
                *acc += v;
            }
        }
        for acc in sums {
            assert!((acc / reps as f64).abs() < 3.0 / (reps as f64).sqrt());
        }
    }

    #[test]
    fn ou_pair_correlation_matches_exponential() {
        let s = PathSampler::for_family(&FamilySpec::Ou { alpha: 1.0 }, 2).unwrap();
        let reps = 100_000u64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for rep in 0..reps {
            let p = s.sample(31, rep);
            sxy += p.values[0] * p.values[1];
            sxx += p.values[0] * p.values[0];
            syy += p.values[1] * p.values[1];
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!((corr - (-1.0f64).exp()).abs() < 0.01);
    }

    #[test]
    fn sample_covariance_close_entrywise() {
        let spec = FamilySpec::Equicorrelated { rho: 0.3 };
        let model = build_family(&spec, 3).unwrap();
        let s = PathSampler::for_family(&spec, 3).unwrap();
        let reps = 40_000u64;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for rep in 0..reps {
            let p = s.sample(8, rep);
            for i in 0..3 {
                for j in 0..3 {
                    acc[(i, j)] += p.values[i] * p.values[j];
                }
            }
        }
        acc /= reps as f64;
        let tol = 5.0 / (reps as f64).sqrt();
        assert!((acc - model.entries()).abs().max() < tol);
    }

    #[test]
    fn uniformize_values() {
        let path = GaussianPath {
            values: vec![0.0, 1.959964, -1.959964],
            model_id: "test".into(),
            seed: 0,
            replication_index: 0,
        };
        let u = uniformize(&path);
        assert_eq!(u.values()[0], 0.5);
        assert!((u.values()[1] - 0.9750000009035576).abs() < 1e-12);
        assert!((u.values()[1] + u.values()[2] - 1.0).abs() < 1e-15);
        assert!(u.sorted_view().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn uniformize_clamps_extreme_tails() {
        let path = GaussianPath {
            values: vec![50.0, -50.0],
            model_id: "test".into(),
            seed: 0,
            replication_index: 0,
        };
        let u = uniformize(&path);
        assert!(u.values()[0] < 1.0 && u.values()[0] > 0.0);
        assert!(u.values()[1] > 0.0 && u.values()[1] < 1.0);
    }

    #[test]
    fn pooled_uniforms_pass_chi_square() {
        // marginal uniformity of Phi(X_i) for a dependent model; chi-square
        // over 20 bins at the 1e-3 level
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let s = PathSampler::for_family(&FamilySpec::Ou { alpha: 0.5 }, 16).unwrap();
        let bins = 20usize;
        let mut counts = vec![0u64; bins];
        let reps = 2000u64;
        for rep in 0..reps {
            let u = uniformize(&s.sample(77, rep));
            for &v in u.values() {
                counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
        }
        let total = (reps as f64) * 16.0;
        let expect = total / bins as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        let cutoff = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(1.0 - 1e-3);
        assert!(stat < cutoff, "chi-square {stat} >= {cutoff}");
    }

    #[test]
    fn block_sampler_shares_the_block_value() {
        let s = PathSampler::for_family(&FamilySpec::BlockIdentical { m: 3, xi: 0.25 }, 6).unwrap();
        let p = s.sample(5, 0);
        assert_eq!(p.values[0], p.values[1]);
        assert_eq!(p.values[1], p.values[2]);
        assert_ne!(p.values[3], p.values[0]);
    }

    #[test]
    fn block_exceeds_dimension() {
        let err = PathSampler::for_family(&FamilySpec::BlockIdentical { m: 7, xi: 0.1 }, 3);
        assert_eq!(err.unwrap_err(), SamplerError::BlockExceedsDimension { m: 7, n: 3 });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn factorization_reconstructs(n in 1usize..10, seed in 0u64..1000) {
            // random correlation matrix via a normalized Gram product
            let mut rng = substream(seed, 0);
            let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let gram = &a * a.transpose() + DMatrix::<f64>::identity(n, n) * 1e-3;
            let d: Vec<f64> = (0..n).map(|i| gram[(i, i)].sqrt()).collect();
            let corr = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] / (d[i] * d[j]));
            let model = build_explicit(corr).unwrap();
            let f = factorize(&model).unwrap();
            let recon = f.l() * f.l().transpose();
            let target = model.entries() + DMatrix::<f64>::identity(n, n) * f.jitter_used();
            prop_assert!((recon - target).abs().max() <= 1e-8);
        }

        #[test]
        fn paths_are_deterministic_and_finite(rep in 0u64..50, seed in 0u64..50) {
            let s = PathSampler::for_family(&FamilySpec::Lrd { d_exp: 0.4 }, 12).unwrap();
            let a = s.sample(seed, rep);
            let b = s.sample(seed, rep);
            prop_assert_eq!(&a.values, &b.values);
            prop_assert!(a.values.iter().all(|v| v.is_finite()));
        }
    }
}
