//! Covariance structures of standardized Gaussian processes: construction,
//! validation, the dependence measure Delta, and its growth diagnostics.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense matrices are capped at this dimension; the stationary fast paths
/// below carry growth diagnostics far beyond it.
pub const DENSE_DIMENSION_CAP: usize = 5000;
/// Symmetry / unit-diagonal input tolerance.
pub const INPUT_TOL: f64 = 1e-12;
/// Numerical positive-semidefiniteness floor on the minimum eigenvalue.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;
/// Guard for the a.s.-condition index growth.
const PARTIAL_SUM_N_CAP: u128 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovError {
    #[error("matrix is not symmetric (max |c_ij - c_ji| = {max_dev:.3e})")]
    NotSymmetric { max_dev: f64 },
    #[error("matrix does not have a unit diagonal (max |c_ii - 1| = {max_dev:.3e})")]
    NotUnitDiagonal { max_dev: f64 },
    #[error("matrix is not positive semidefinite within the {EIGENVALUE_FLOOR:.0e} eigenvalue floor")]
    NotPositiveSemidefinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A covariance family with its parameters. Stationary members expose the
/// correlation sequence r(d); all members expose an O(n) dependence-measure
/// path that never materializes a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Iid,
    Ou { alpha: f64 },
    /// Long-range dependence with r(d) = (d+1)^(-d_exp). The +1 shift keeps
    /// the sequence convex and decreasing from r(0) = 1, which makes the
    /// Toeplitz matrix positive semidefinite for every n; the plain d^(-D)
    /// sequence has r(1) = 1 and fails for n >= 3. The shift is a slowly
    /// varying correction, so the Delta(n) growth rate is untouched.
    Lrd { d_exp: f64 },
    Equicorrelated { rho: f64 },
    /// First m coordinates share one factor exactly; the rest load on it
    /// with weight sqrt(xi). Pairwise correlations: 1 inside the block,
    /// sqrt(xi) across, xi outside.
    BlockIdentical { m: usize, xi: f64 },
    CustomStationary { r: Vec<f64> },
}

impl FamilySpec {
    pub fn validate(&self) -> Result<(), CovError> {
        let bad = |msg: String| Err(CovError::InvalidParameter(msg));
        match self {
            FamilySpec::Iid => Ok(()),
            FamilySpec::Ou { alpha } => {
                if !alpha.is_finite() || *alpha <= 0.0 {
                    return bad(format!("ou alpha must be > 0, got {alpha}"));
                }
                Ok(())
            }
            FamilySpec::Lrd { d_exp } => {
                if !d_exp.is_finite() || *d_exp <= 0.0 || *d_exp >= 1.0 {
                    return bad(format!("lrd exponent must lie in (0,1), got {d_exp}"));
                }
                Ok(())
            }
            FamilySpec::Equicorrelated { rho } => {
                if !rho.is_finite() || *rho < 0.0 || *rho >= 1.0 {
                    return bad(format!("equicorrelated rho must lie in [0,1), got {rho}"));
                }
                Ok(())
            }
            FamilySpec::BlockIdentical { m, xi } => {
                if *m == 0 {
                    return bad("block size m must be >= 1".into());
                }
                if !xi.is_finite() || *xi < 0.0 || *xi >= 1.0 {
                    return bad(format!("block xi must lie in [0,1), got {xi}"));
                }
                Ok(())
            }
            FamilySpec::CustomStationary { r } => {
                if r.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
                    return bad("custom correlation entries must be finite and in [-1,1]".into());
                }
                Ok(())
            }
        }
    }

    /// Correlation at lag d >= 1 for stationary families; None for the block
    /// construction.
    pub fn stationary_r(&self, d: usize) -> Option<f64> {
        debug_assert!(d >= 1);
        match self {
            FamilySpec::Iid => Some(0.0),
            FamilySpec::Ou { alpha } => Some((-alpha * d as f64).exp()),
            FamilySpec::Lrd { d_exp } => Some(((d + 1) as f64).powf(-d_exp)),
            FamilySpec::Equicorrelated { rho } => Some(*rho),
            FamilySpec::CustomStationary { r } => Some(r.get(d - 1).copied().unwrap_or(0.0)),
            FamilySpec::BlockIdentical { .. } => None,
        }
    }

    /// Exact Delta(n) in O(n) without materializing the matrix.
    /// For stationary families Delta(n) = 2 sum_{d=1}^{n-1} (n-d) |r(d)|.
    pub fn delta(&self, n: usize) -> Result<f64, CovError> {
        self.validate()?;
        if n == 0 {
            return Err(CovError::InvalidParameter("n must be >= 1".into()));
        }
        match self {
            FamilySpec::Iid => Ok(0.0),
            FamilySpec::BlockIdentical { m, xi } => {
                if *m > n {
                    return Err(CovError::InvalidParameter(format!(
                        "block size {m} exceeds dimension {n}"
                    )));
                }
                let mm = *m as f64;
                let k = (n - m) as f64;
                Ok(mm * (mm - 1.0) + 2.0 * mm * k * xi.sqrt() + k * (k - 1.0) * xi)
            }
            _ => {
                let nf = n as f64;
                let mut sum = 0.0;
                for d in 1..n {
                    let r = self.stationary_r(d).unwrap().abs();
                    if r > 0.0 {
                        sum += (nf - d as f64) * r;
                    }
                }
                Ok(2.0 * sum)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            FamilySpec::Iid => "iid".into(),
            FamilySpec::Ou { alpha } => format!("ou(alpha={alpha})"),
            FamilySpec::Lrd { d_exp } => format!("lrd(d={d_exp})"),
            FamilySpec::Equicorrelated { rho } => format!("equicorr(rho={rho})"),
            FamilySpec::BlockIdentical { m, xi } => format!("block(m={m};xi={xi})"),
            FamilySpec::CustomStationary { r } => format!("custom(len={})", r.len()),
        }
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Provenance tag of a built covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelFamily {
    Explicit,
    Family(FamilySpec),
}

impl ModelFamily {
    pub fn label(&self) -> String {
        match self {
            ModelFamily::Explicit => "explicit".into(),
            ModelFamily::Family(spec) => spec.label(),
        }
    }
}

/// A validated n x n correlation matrix with unit diagonal, its provenance,
/// and the dependence measure Delta = sum_{i != j} |C_ij|.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    n: usize,
    entries: DMatrix<f64>,
    family: ModelFamily,
    delta: f64,
}

impl CovarianceModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn label(&self) -> String {
        self.family.label()
    }
}

/// Exact Delta by summation over the strict upper triangle, doubled.
pub fn dependence_measure(model: &CovarianceModel) -> f64 {
    delta_of(model.entries())
}

fn delta_of(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += c[(i, j)].abs();
        }
    }
    2.0 * sum
}

/// PSD check: the Cholesky factorization of C + floor*I succeeds exactly when
/// the minimum eigenvalue exceeds -floor (up to roundoff), without the O(n^3)
/// constant of a full eigendecomposition.
fn check_psd(c: &DMatrix<f64>) -> Result<(), CovError> {
    let n = c.nrows();
    let shifted = c + DMatrix::<f64>::identity(n, n) * EIGENVALUE_FLOOR;
    match nalgebra::Cholesky::new(shifted) {
        Some(_) => Ok(()),
        None => Err(CovError::NotPositiveSemidefinite),
    }
}

fn validate_dims(n: usize) -> Result<(), CovError> {
    if n == 0 {
        return Err(CovError::InvalidParameter("dimension must be >= 1".into()));
    }
    if n > DENSE_DIMENSION_CAP {
        return Err(CovError::InvalidParameter(format!(
            "dense dimension {n} exceeds cap {DENSE_DIMENSION_CAP}; use the stationary fast paths"
        )));
    }
    Ok(())
}

/// Validate and wrap an explicitly given correlation matrix.
pub fn build_explicit(matrix: DMatrix<f64>) -> Result<CovarianceModel, CovError> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(CovError::InvalidParameter(format!(
            "matrix must be square, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    validate_dims(n)?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(CovError::InvalidParameter("matrix entries must be finite".into()));
    }
    let mut max_asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    if max_asym > INPUT_TOL {
        return Err(CovError::NotSymmetric { max_dev: max_asym });
    }
    let max_diag_dev = (0..n).fold(0.0f64, |m, i| m.max((matrix[(i, i)] - 1.0).abs()));
    if max_diag_dev > INPUT_TOL {
        return Err(CovError::NotUnitDiagonal { max_dev: max_diag_dev });
    }
    // Store the symmetrized matrix with an exact unit diagonal so the type
    // invariants hold exactly, not just within the input tolerance.
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        entries[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    check_psd(&entries)?;
    let delta = delta_of(&entries);
    Ok(CovarianceModel { n, entries, family: ModelFamily::Explicit, delta })
}

/// Materialize a family member as a dense validated model.
pub fn build_family(spec: &FamilySpec, n: usize) -> Result<CovarianceModel, CovError> {
    spec.validate()?;
    validate_dims(n)?;
    let entries = match spec {
        FamilySpec::BlockIdentical { m, xi } => {
            if *m > n {
                return Err(CovError::InvalidParameter(format!(
                    "block size {m} exceeds dimension {n}"
                )));
            }
            let cross = xi.sqrt();
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if i < *m && j < *m {
                    1.0
                } else if i < *m || j < *m {
                    cross
                } else {
                    *xi
                }
            })
        }
        _ => DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                let d = i.abs_diff(j);
                self_r(spec, d)
            }
        }),
    };
    check_psd(&entries)?;
    let delta = delta_of(&entries);
    Ok(CovarianceModel { n, entries, family: ModelFamily::Family(spec.clone()), delta })
}

fn self_r(spec: &FamilySpec, d: usize) -> f64 {
    spec.stationary_r(d).expect("stationary family")
}

/// Solve the near-degenerate construction for a target Delta: a block of
/// m = floor((1 + sqrt(1 + 4*Delta)) / 2) identical coordinates plus a factor
/// loading xi on the remainder chosen so the total Delta hits the target.
pub fn block_for_delta(n: usize, delta_target: f64) -> Result<FamilySpec, CovError> {
    if n == 0 {
        return Err(CovError::InvalidParameter("n must be >= 1".into()));
    }
    if !delta_target.is_finite() || delta_target < 0.0 {
        return Err(CovError::InvalidParameter(format!(
            "delta target must be nonnegative, got {delta_target}"
        )));
    }
    let m = ((1.0 + (1.0 + 4.0 * delta_target).sqrt()) / 2.0).floor() as usize;
    let m = m.max(1);
    if m > n {
        return Err(CovError::InvalidParameter(format!(
            "block size {m} required by delta target {delta_target} exceeds dimension {n}"
        )));
    }
    let mm = m as f64;
    let remainder = delta_target - mm * (mm - 1.0);
    debug_assert!(remainder >= -1e-9 * delta_target.max(1.0));
    let k = (n - m) as f64;
    let xi = if remainder <= 0.0 {
        0.0
    } else if n == m {
        let rel = remainder / delta_target.max(1.0);
        if rel > 1e-6 {
            return Err(CovError::InvalidParameter(format!(
                "delta target {delta_target} unreachable with m = n = {n}"
            )));
        }
        0.0
    } else {
        // remainder = 2 m k s + k (k-1) s^2 in s = sqrt(xi)
        let a = k * (k - 1.0);
        let b = 2.0 * mm * k;
        let s = if a == 0.0 {
            remainder / b
        } else {
            (-b + (b * b + 4.0 * a * remainder).sqrt()) / (2.0 * a)
        };
        let xi = s * s;
        if xi >= 1.0 {
            return Err(CovError::InvalidParameter(format!(
                "delta target {delta_target} needs xi >= 1 at n = {n}"
            )));
        }
        xi
    };
    let spec = FamilySpec::BlockIdentical { m, xi };
    debug_assert!({
        let achieved = spec.delta(n).unwrap();
        (achieved - delta_target).abs() <= 1e-6 * delta_target.max(1.0)
    });
    Ok(spec)
}

/// One point of the growth diagnostics series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub n: usize,
    pub delta: f64,
    /// Delta(n) / n^2, the quantity whose vanishing drives the convergence
    /// results.
    pub ratio: f64,
}

/// Exact per-n dependence measures along an increasing index list, computed
/// through the O(max n) stationary identity Delta(n) = 2 (n S1(n) - S2(n))
/// with S1 = sum |r(d)|, S2 = sum d |r(d)|.
pub fn growth_diagnostics(spec: &FamilySpec, n_list: &[usize]) -> Result<Vec<GrowthPoint>, CovError> {
    spec.validate()?;
    if n_list.is_empty() {
        return Err(CovError::InvalidParameter("n list must be nonempty".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CovError::InvalidParameter("n list must be strictly increasing".into()));
    }
    if n_list[0] == 0 {
        return Err(CovError::InvalidParameter("n must be >= 1".into()));
    }
    if let FamilySpec::BlockIdentical { .. } = spec {
        let mut out = Vec::with_capacity(n_list.len());
        for &n in n_list {
            let delta = spec.delta(n)?;
            out.push(GrowthPoint { n, delta, ratio: delta / (n as f64 * n as f64) });
        }
        return Ok(out);
    }
    let max_n = *n_list.last().unwrap();
    let mut out = Vec::with_capacity(n_list.len());
    let mut s1 = 0.0f64;
    let mut s2 = 0.0f64;
    let mut targets = n_list.iter().copied().peekable();
    for n in 1..=max_n {
        // sums over d < n
        while targets.peek() == Some(&n) {
            targets.next();
            let delta = 2.0 * (n as f64 * s1 - s2);
            out.push(GrowthPoint { n, delta, ratio: delta / (n as f64 * n as f64) });
        }
        let r = spec.stationary_r(n).unwrap().abs();
        s1 += r;
        s2 += n as f64 * r;
    }
    while let Some(n) = targets.next() {
        let delta = 2.0 * (n as f64 * s1 - s2);
        out.push(GrowthPoint { n, delta, ratio: delta / (n as f64 * n as f64) });
        // only reachable for n == max_n
        debug_assert_eq!(n, max_n);
    }
    Ok(out)
}

/// Synthetic dependence-growth laws for the almost-sure-condition diagnostics
/// that no covariance family realizes exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticLaw {
    /// Delta(n) = n^2 (idealized full dependence; divergence signal).
    Quadratic,
    /// Delta(n) = n^2 (ln n)^(-3-delta) for n >= 2, 0 at n = 1.
    LogDamped { delta: f64 },
}

/// Source of a Delta growth curve: a real family or a synthetic law.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSource {
    Family(FamilySpec),
    Synthetic(SyntheticLaw),
}

impl DeltaSource {
    fn delta(&self, n: usize) -> Result<f64, CovError> {
        match self {
            DeltaSource::Family(spec) => spec.delta(n),
            DeltaSource::Synthetic(SyntheticLaw::Quadratic) => Ok((n as f64) * (n as f64)),
            DeltaSource::Synthetic(SyntheticLaw::LogDamped { delta }) => {
                if !delta.is_finite() || *delta <= 0.0 {
                    return Err(CovError::InvalidParameter(format!(
                        "log-damped delta must be > 0, got {delta}"
                    )));
                }
                if n < 2 {
                    return Ok(0.0);
                }
                let nf = n as f64;
                Ok(nf * nf * nf.ln().powf(-(3.0 + delta)))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DeltaSource::Family(spec) => spec.label(),
            DeltaSource::Synthetic(SyntheticLaw::Quadratic) => "synthetic(n^2)".into(),
            DeltaSource::Synthetic(SyntheticLaw::LogDamped { delta }) => {
                format!("synthetic(n^2 (ln n)^-{})", 3.0 + delta)
            }
        }
    }
}

/// One term of the almost-sure-condition partial sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialSumPoint {
    pub i: usize,
    pub n: usize,
    /// cbrt(Delta(floor(gamma^i)) / floor(gamma^i)^2)
    pub increment: f64,
    pub partial_sum: f64,
}

/// Partial sums S_I = sum_{i <= I} cbrt(Delta(floor(gamma^i)) / floor(gamma^i)^2).
/// A finite-horizon diagnostic only: convergence itself is not decidable
/// numerically, so callers read the increment trend.
pub fn as_condition_partial_sums(
    source: &DeltaSource,
    gamma: f64,
    i_max: usize,
) -> Result<Vec<PartialSumPoint>, CovError> {
    if !gamma.is_finite() || gamma <= 1.0 {
        return Err(CovError::InvalidParameter(format!("gamma must be > 1, got {gamma}")));
    }
    if i_max == 0 {
        return Err(CovError::InvalidParameter("i_max must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(i_max);
    let mut sum = 0.0;
    for i in 1..=i_max {
        let nf = gamma.powi(i as i32).floor();
        if !(nf >= 1.0) || nf as u128 > PARTIAL_SUM_N_CAP {
            return Err(CovError::InvalidParameter(format!(
                "floor(gamma^{i}) = {nf} exceeds the {PARTIAL_SUM_N_CAP} index budget"
            )));
        }
        let n = nf as usize;
        let delta = source.delta(n)?;
        let increment = (delta / (nf * nf)).cbrt();
        sum += increment;
        out.push(PartialSumPoint { i, n, increment, partial_sum: sum });
    }
    Ok(out)
}

/// Dump a model's matrix as CSV: one row per line, no header.
pub fn write_matrix_csv(model: &CovarianceModel, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let c = model.entries();
    for i in 0..model.n() {
        let row: Vec<String> = (0..model.n()).map(|j| format!("{:.16e}", c[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

/// Load a matrix dumped by [`write_matrix_csv`] and validate it as a model.
pub fn read_matrix_csv(path: &Path) -> Result<CovarianceModel, CovError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CovError::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            CovError::InvalidParameter(format!("bad float on line {}: {e}", lineno + 1))
        })?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CovError::InvalidParameter("matrix CSV must be square and nonempty".into()));
    }
    let mat = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    build_explicit(mat)
}
