//! Normalized Hermite polynomials, Gauss-Hermite quadrature against the
//! standard Gaussian measure, and the expansion coefficients of the smoothed
//! indicator kernel.
//!
//! Two quadrature regimes live here on purpose. Polynomial integrands
//! (orthonormality checks, bivariate pair expectations) go through a classic
//! Gauss-Hermite rule, which integrates them exactly. The kernel-composed
//! integrands `ell(t - Phi(x)) h_k(x)` are only piecewise smooth -- a plain
//! Gauss-Hermite rule stalls near 1e-3 accuracy at order 128 once k grows --
//! so the coefficient path splits the axis at the kink locations and applies
//! composite Gauss-Legendre panels sized to the oscillation of h_k, plus a
//! closed form for the saturated tail where ell is identically 1.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::gauss;
use crate::kernel::KernelSpec;

/// Stability budget for the normalized three-term recurrence.
pub const MAX_DEGREE: usize = 500;
/// Degree cap for bivariate pair expectations.
pub const MAX_PAIR_DEGREE: usize = 50;
/// Integration cutoff: |h_k(x)| phi(x) <= 1.09 e^(-x^2/4) / sqrt(2 pi), which
/// is below 3e-16 beyond |x| = 12 for every admissible degree.
const X_CUT: f64 = 12.0;
/// Gauss-Legendre panel order for the kink-split scheme.
const PANEL_ORDER: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HermiteError {
    #[error("degree {k} exceeds the stability budget {max}")]
    DegreeTooLarge { k: usize, max: usize },
    #[error("correlation must lie in [-1, 1], got {0}")]
    InvalidCorrelation(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Normalized Hermite polynomial h_k(x) = H_k(x) / sqrt(k!): h_0 = 1,
/// h_1 = x, h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
pub fn h_eval(k: usize, x: f64) -> Result<f64, HermiteError> {
    if k > MAX_DEGREE {
        return Err(HermiteError::DegreeTooLarge { k, max: MAX_DEGREE });
    }
    if k == 0 {
        return Ok(1.0);
    }
    let mut prev = 1.0f64;
    let mut cur = x;
    for j in 1..k {
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fill `buf[k] = h_k(x)` for k = 0..buf.len().
fn h_fill(buf: &mut [f64], x: f64) {
    buf[0] = 1.0;
    if buf.len() > 1 {
        buf[1] = x;
    }
    for k in 1..buf.len().saturating_sub(1) {
        buf[k + 1] = (x * buf[k] - (k as f64).sqrt() * buf[k - 1]) / ((k + 1) as f64).sqrt();
    }
}

/// Nodes and weights integrating against the standard Gaussian measure
/// (probabilists' convention: weights sum to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Golub-Welsch on the symmetric Jacobi matrix of the probabilists'
    /// Hermite recurrence (zero diagonal, off-diagonal sqrt(k)).
    pub fn gauss_hermite(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be >= 1");
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { order, nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// integral of f against mu, exact for polynomials of degree < 2 * order.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Shared default rule (order 128) for the polynomial-exact integrals.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_hermite(128))
}

/// E h_k(U) h_k2(V) for centered unit-variance bivariate Gaussians with
/// covariance sigma, via the conditional decomposition
/// V = sigma U + sqrt(1 - sigma^2) W and tensor quadrature. The integrand is
/// a polynomial, so the rule integrates it exactly.
pub fn pair_expectation(
    sigma: f64,
    k: usize,
    k2: usize,
    rule: &QuadratureRule,
) -> Result<f64, HermiteError> {
    if !(-1.0..=1.0).contains(&sigma) {
        return Err(HermiteError::InvalidCorrelation(sigma));
    }
    if k > MAX_PAIR_DEGREE || k2 > MAX_PAIR_DEGREE {
        return Err(HermiteError::DegreeTooLarge { k: k.max(k2), max: MAX_PAIR_DEGREE });
    }
    let c = (1.0 - sigma * sigma).max(0.0).sqrt();
    let mut hu = vec![0.0; k + 1];
    let mut hv = vec![0.0; k2 + 1];
    let mut acc = 0.0;
    for (&u, &wu) in rule.nodes().iter().zip(rule.weights()) {
        h_fill(&mut hu, u);
        let hk_u = hu[k];
        let mut inner = 0.0;
        for (&w, &ww) in rule.nodes().iter().zip(rule.weights()) {
            let v = sigma * u + c * w;
            h_fill(&mut hv, v);
            inner += ww * hv[k2];
        }
        acc += wu * hk_u * inner;
    }
    Ok(acc)
}

/// Gauss-Legendre rule on [-1, 1] used for the kink-split panels.
fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = PANEL_ORDER;
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let b = kf / (4.0 * kf * kf - 1.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

/// Accumulate `acc[k] += integral over [lo, hi] of g(x) h_k(x) phi(x) dx`
/// with composite Gauss-Legendre panels narrow enough to resolve the
/// oscillation of the highest degree (local wavelength pi / sqrt(k)).
fn accumulate_weighted(acc: &mut [f64], lo: f64, hi: f64, g: &dyn Fn(f64) -> f64) {
    if !(hi > lo) {
        return;
    }
    let k_max = acc.len() - 1;
    let wavelength = std::f64::consts::PI / (k_max.max(4) as f64).sqrt();
    let max_width = (wavelength / 2.0).min(0.2);
    let panels = ((hi - lo) / max_width).ceil() as usize;
    let step = (hi - lo) / panels as f64;
    let (gl_nodes, gl_weights) = panel_rule();
    let mut hbuf = vec![0.0; acc.len()];
    for p in 0..panels {
        let a = lo + p as f64 * step;
        let mid = a + 0.5 * step;
        let half = 0.5 * step;
        for (&xi, &wi) in gl_nodes.iter().zip(gl_weights) {
            let x = mid + half * xi;
            let w = half * wi * gauss::pdf(x) * g(x);
            if w == 0.0 {
                continue;
            }
            h_fill(&mut hbuf, x);
            for (a_k, h_k) in acc.iter_mut().zip(&hbuf) {
                *a_k += w * h_k;
            }
        }
    }
}

/// All coefficients c_k(t) (or derivatives c_k'(t)) for k = 0..=k_max in one
/// pass: c_k(t) = integral of ell(t - Phi(x)) h_k(x) d mu.
pub fn coeff_batch(
    kernel: &KernelSpec,
    k_max: usize,
    t: f64,
    derivative: bool,
) -> Result<Vec<f64>, HermiteError> {
    if k_max > MAX_DEGREE {
        return Err(HermiteError::DegreeTooLarge { k: k_max, max: MAX_DEGREE });
    }
    let eps = kernel.epsilon();
    let mut acc = vec![0.0; k_max + 1];
    let y_lo = t - eps;
    let y_hi = t + eps;
    if derivative {
        // ell' vanishes outside (y_lo, y_hi); nothing saturates
        if y_hi <= 0.0 || y_lo >= 1.0 {
            return Ok(acc);
        }
    } else {
        if y_hi <= 0.0 {
            return Ok(acc); // ell(t - Phi(x)) == 0 everywhere
        }
        if y_lo >= 1.0 {
            acc[0] = 1.0; // ell == 1 everywhere: orthogonality kills k >= 1
            return Ok(acc);
        }
    }
    let y_min = gauss::phi(-X_CUT);
    let y_max = gauss::phi(X_CUT);
    let clamp_x = |x: f64| if x.is_finite() { x.clamp(-X_CUT, X_CUT) } else { 0.0 };

    // below x_lo the kernel is saturated at 1 (only reachable for the plain
    // coefficients); above x_hi it vanishes
    let (x_lo, saturated_tail) = if y_lo > y_min {
        (clamp_x(gauss::phi_inv(y_lo)), !derivative)
    } else {
        (-X_CUT, false)
    };
    let x_hi = if y_hi < y_max { clamp_x(gauss::phi_inv(y_hi)) } else { X_CUT };

    if saturated_tail {
        // integral over (-inf, x_lo] of h_k phi: Phi(x_lo) for k = 0 and
        // -h_{k-1}(x_lo) phi(x_lo) / sqrt(k) for k >= 1, from
        // (h_{k-1} phi)' = -sqrt(k) h_k phi
        acc[0] += gauss::phi(x_lo);
        if k_max >= 1 {
            let mut hbuf = vec![0.0; k_max];
            h_fill(&mut hbuf, x_lo);
            let pdf_lo = gauss::pdf(x_lo);
            for k in 1..=k_max {
                acc[k] += -hbuf[k - 1] * pdf_lo / (k as f64).sqrt();
            }
        }
    }

    // panel integration over [x_lo, x_hi], split at the interior kink where
    // t - Phi(x) changes sign
    let g: Box<dyn Fn(f64) -> f64> = if derivative {
        let k = *kernel;
        Box::new(move |x| k.ell_prime(t - gauss::phi(x)))
    } else {
        let k = *kernel;
        Box::new(move |x| k.ell(t - gauss::phi(x)))
    };
    let mut cut = None;
    if t > y_min && t < y_max && t > y_lo && t < y_hi {
        let x_t = clamp_x(gauss::phi_inv(t));
        if x_t > x_lo && x_t < x_hi {
            cut = Some(x_t);
        }
    }
    match cut {
        Some(x_t) => {
            accumulate_weighted(&mut acc, x_lo, x_t, &g);
            accumulate_weighted(&mut acc, x_t, x_hi, &g);
        }
        None => accumulate_weighted(&mut acc, x_lo, x_hi, &g),
    }
    Ok(acc)
}

/// Single expansion coefficient c_k(t), or its t-derivative.
pub fn coeff(
    kernel: &KernelSpec,
    k: usize,
    t: f64,
    derivative: bool,
) -> Result<f64, HermiteError> {
    Ok(coeff_batch(kernel, k, t, derivative)?[k])
}

/// Result of the aggregation identity check at one t:
/// sum_{k >= 1} (c_k'(t))^2 should equal
/// integral (ell'(t-y))^2 dy - (integral ell'(t-y) dy)^2 over y in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationResidual {
    pub partial_sum: f64,
    pub target: f64,
    pub residual: f64,
}

/// Partial sum of squared derivative coefficients against the closed-form
/// target. Truncation approaches the target from below (Parseval), so the
/// residual stays nonnegative up to roundoff.
pub fn aggregation_residual(
    kernel: &KernelSpec,
    t: f64,
    k_cap: usize,
) -> Result<AggregationResidual, HermiteError> {
    if k_cap == 0 {
        return Err(HermiteError::InvalidInput("aggregation needs K >= 1".into()));
    }
    let coeffs = coeff_batch(kernel, k_cap, t, true)?;
    let partial_sum: f64 = coeffs[1..].iter().map(|c| c * c).sum();
    let target = aggregation_target(kernel, t);
    Ok(AggregationResidual { partial_sum, target, residual: target - partial_sum })
}

/// Closed-form right-hand side of the aggregation identity.
pub fn aggregation_target(kernel: &KernelSpec, t: f64) -> f64 {
    let b = kernel.ell_prime_window(t);
    kernel.ell_prime_window_sq(t) - b * b
}

/// Cumulative partial sums S_K = sum_{k=1..K} (c_k'(t))^2 for K = 1..=k_cap.
pub fn aggregation_partial_sums(
    kernel: &KernelSpec,
    t: f64,
    k_cap: usize,
) -> Result<Vec<f64>, HermiteError> {
    if k_cap == 0 {
        return Err(HermiteError::InvalidInput("aggregation needs K >= 1".into()));
    }
    let coeffs = coeff_batch(kernel, k_cap, t, true)?;
    let mut sums = Vec::with_capacity(k_cap);
    let mut acc = 0.0;
    for c in &coeffs[1..] {
        acc += c * c;
        sums.push(acc);
    }
    Ok(sums)
}

/// Expansion coefficients of a kernel on a t-grid, with quadrature metadata.
#[derive(Debug, Clone)]
pub struct HermiteCoefficientTable {
    pub kernel: KernelSpec,
    pub t_grid: Vec<f64>,
    pub k_max: usize,
    /// c[i][k] = c_k(t_grid[i])
    pub c: Vec<Vec<f64>>,
    /// c_prime[i][k] = c_k'(t_grid[i])
    pub c_prime: Vec<Vec<f64>>,
    /// Gauss-Legendre panel order of the kink-split scheme.
    pub panel_order: usize,
}

impl HermiteCoefficientTable {
    pub fn build(
        kernel: &KernelSpec,
        t_grid: &[f64],
        k_max: usize,
    ) -> Result<Self, HermiteError> {
        if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HermiteError::InvalidInput("t grid must be ascending and nonempty".into()));
        }
        let mut c = Vec::with_capacity(t_grid.len());
        let mut c_prime = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            c.push(coeff_batch(kernel, k_max, t, false)?);
            c_prime.push(coeff_batch(kernel, k_max, t, true)?);
        }
        Ok(Self {
            kernel: *kernel,
            t_grid: t_grid.to_vec(),
            k_max,
            c,
            c_prime,
            panel_order: PANEL_ORDER,
        })
    }

    /// Rows = t grid, columns = degree.
    pub fn write_csv(&self, path: &std::path::Path, derivative: bool) -> std::io::Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((0..=self.k_max).map(|k| format!("k{k}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        let table = if derivative { &self.c_prime } else { &self.c };
        for (t, row) in self.t_grid.iter().zip(table) {
            let mut line = format!("{t:.16e}");
            for v in row {
                line.push(',');
                line.push_str(&format!("{v:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }
}
