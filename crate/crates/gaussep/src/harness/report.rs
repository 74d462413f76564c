//! Report types and deterministic persistence. CSV rows are long-format
//! (family, n, metric, value, std_error) with floats printed at 17
//! significant digits; JSON is a single self-describing document. Identical
//! configs produce byte-identical files regardless of worker count.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::BoundReport;
use crate::covmodels::{GrowthPoint, PartialSumPoint};
use crate::harness::config::{ExperimentConfig, OutputFormat};
use crate::harness::HarnessError;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl MCEstimate {
    pub fn from_values(values: &[f64], retain: bool) -> Self {
        let r = values.len();
        assert!(r >= 2, "an estimate needs at least two replications");
        let mean = values.iter().sum::<f64>() / r as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
        Self {
            mean,
            std_error: (var / r as f64).sqrt(),
            r,
            values: retain.then(|| values.to_vec()),
        }
    }

    /// Upper confidence edge used by the pass criterion.
    pub fn upper_3se(&self) -> f64 {
        self.mean + 3.0 * self.std_error
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub threshold: f64,
    /// max over the t grid of the pointwise exceedance frequency
    pub pointwise_sup: f64,
    /// frequency of {sup_t deviation > threshold}
    pub uniform: f64,
    pub uniform_std_error: f64,
    /// pointwise <= uniform + 2 SE held in this cell
    pub ordering_ok: bool,
}

/// Per-(family, n) results.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub family: String,
    pub n: usize,
    pub delta: f64,
    pub kernel_epsilon: f64,
    pub bound: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecdf_sup: Option<MCEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qhat_sup: Option<MCEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_ecdf: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_qhat: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fluctuation_max_scaled: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tails: Vec<TailRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeRow {
    pub family: String,
    /// least-squares slope of ln(mean sup) against ln(n)
    pub slope: f64,
    pub intercept: f64,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialSumRow {
    pub source: String,
    pub gamma: f64,
    pub points: Vec<PartialSumPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub family: String,
    pub points: Vec<GrowthPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TightnessRow {
    pub delta_target: f64,
    pub achieved_delta: f64,
    pub n: usize,
    pub block_size: usize,
    pub xi: f64,
    pub mean_sup: f64,
    pub std_error: f64,
    /// mean * n / sqrt(Delta); order stability across targets is the check
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HermiteCheckReport {
    pub orthonormality_max_dev: f64,
    pub pair_expectation_max_dev: f64,
    pub aggregation: Vec<AggregationRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregationRow {
    pub epsilon: f64,
    pub t: f64,
    pub k: usize,
    pub partial_sum: f64,
    pub target: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

/// One experiment's full output: config echo plus whichever sections the
/// command produces.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cells: Vec<CellReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub slopes: Vec<SlopeRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub growth: Vec<GrowthRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub partial_sums: Vec<PartialSumRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tightness: Vec<TightnessRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hermite: Option<HermiteCheckReport>,
}

impl ExperimentReport {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            schema_version: super::config::SCHEMA_VERSION,
            command: command.to_string(),
            config: config.clone(),
            cells: Vec::new(),
            slopes: Vec::new(),
            growth: Vec::new(),
            partial_sums: Vec::new(),
            tightness: Vec::new(),
            hermite: None,
        }
    }

    /// All pass verdicts in this report (bound dominance, tail ordering,
    /// tightness band, hermite invariants).
    pub fn all_pass(&self) -> bool {
        let cells_ok = self.cells.iter().all(|c| {
            c.pass_ecdf.unwrap_or(true)
                && c.pass_qhat.unwrap_or(true)
                && c.tails.iter().all(|t| t.ordering_ok)
                && c.fluctuation_max_scaled.map_or(true, |m| m <= 1.0)
        });
        let hermite_ok = self.hermite.as_ref().map_or(true, |h| h.pass);
        let tightness_ok = tightness_band_ok(&self.tightness);
        cells_ok && hermite_ok && tightness_ok
    }

    /// Persist in the configured format; returns the written path.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!(
            "{}.{}",
            self.command,
            match format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            }
        ));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::other)?;
                w.write_all(b"\n")?;
            }
            OutputFormat::Csv => self.write_csv(&mut w)?,
        }
        w.flush()?;
        Ok(path)
    }

    fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "schema_version,command,family,n,metric,value,std_error")?;
        let mut emit = |family: &str, n: usize, metric: &str, value: String, se: String| {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.schema_version, self.command, family, n, metric, value, se
            )
        };
        for c in &self.cells {
            emit(&c.family, c.n, "delta", fmt(c.delta), String::new())?;
            emit(&c.family, c.n, "kernel_epsilon", fmt(c.kernel_epsilon), String::new())?;
            emit(&c.family, c.n, "theorem2_bound", fmt(c.bound.theorem2_value), String::new())?;
            emit(&c.family, c.n, "lemma1_bound", fmt(c.bound.lemma1_value), String::new())?;
            emit(&c.family, c.n, "d_ell", fmt(c.bound.d_ell), String::new())?;
            emit(
                &c.family,
                c.n,
                "regime",
                format!("{:?}", c.bound.regime).to_lowercase(),
                String::new(),
            )?;
            if let Some(e) = c.bound.epsilon_star {
                emit(&c.family, c.n, "epsilon_star", fmt(e), String::new())?;
            }
            if let Some(est) = &c.ecdf_sup {
                emit(&c.family, c.n, "ecdf_sup_mean", fmt(est.mean), fmt(est.std_error))?;
            }
            if let Some(est) = &c.qhat_sup {
                emit(&c.family, c.n, "qhat_sup_mean", fmt(est.mean), fmt(est.std_error))?;
            }
            if let Some(p) = c.pass_ecdf {
                emit(&c.family, c.n, "pass_ecdf", (p as u8).to_string(), String::new())?;
            }
            if let Some(p) = c.pass_qhat {
                emit(&c.family, c.n, "pass_qhat", (p as u8).to_string(), String::new())?;
            }
            if let Some(m) = c.fluctuation_max_scaled {
                emit(&c.family, c.n, "fluctuation_max_scaled", fmt(m), String::new())?;
            }
            for t in &c.tails {
                let label = format!("tail_pointwise_sup@{}", t.threshold);
                emit(&c.family, c.n, &label, fmt(t.pointwise_sup), String::new())?;
                let label = format!("tail_uniform@{}", t.threshold);
                emit(&c.family, c.n, &label, fmt(t.uniform), fmt(t.uniform_std_error))?;
                let label = format!("tail_ordering_ok@{}", t.threshold);
                emit(&c.family, c.n, &label, (t.ordering_ok as u8).to_string(), String::new())?;
            }
        }
        for s in &self.slopes {
            emit(&s.family, 0, "loglog_slope", fmt(s.slope), String::new())?;
            emit(&s.family, 0, "loglog_intercept", fmt(s.intercept), String::new())?;
            emit(
                &s.family,
                0,
                "strictly_decreasing",
                (s.strictly_decreasing as u8).to_string(),
                String::new(),
            )?;
        }
        for g in &self.growth {
            for p in &g.points {
                emit(&g.family, p.n, "delta_growth", fmt(p.delta), String::new())?;
                emit(&g.family, p.n, "delta_over_n2", fmt(p.ratio), String::new())?;
            }
        }
        for ps in &self.partial_sums {
            for p in &ps.points {
                let metric = format!("as_partial_sum@gamma={}#i={}", ps.gamma, p.i);
                emit(&ps.source, p.n, &metric, fmt(p.partial_sum), String::new())?;
                let metric = format!("as_increment@gamma={}#i={}", ps.gamma, p.i);
                emit(&ps.source, p.n, &metric, fmt(p.increment), String::new())?;
            }
        }
        for t in &self.tightness {
            let fam = format!("block(m={})", t.block_size);
            emit(&fam, t.n, "tightness_delta_target", fmt(t.delta_target), String::new())?;
            emit(&fam, t.n, "tightness_delta_achieved", fmt(t.achieved_delta), String::new())?;
            emit(&fam, t.n, "tightness_mean_sup", fmt(t.mean_sup), fmt(t.std_error))?;
            emit(&fam, t.n, "tightness_ratio", fmt(t.ratio), String::new())?;
        }
        if let Some(h) = &self.hermite {
            emit("hermite", 0, "orthonormality_max_dev", fmt(h.orthonormality_max_dev), String::new())?;
            emit("hermite", 0, "pair_expectation_max_dev", fmt(h.pair_expectation_max_dev), String::new())?;
            emit("hermite", 0, "pass", (h.pass as u8).to_string(), String::new())?;
            for row in &h.aggregation {
                let fam = format!("kernel(eps={})", row.epsilon);
                let metric = format!("aggregation_rel_residual@t={}#k={}", row.t, row.k);
                emit(&fam, 0, &metric, fmt(row.relative_residual), String::new())?;
            }
        }
        Ok(())
    }
}

/// Decimal float with 17 significant digits.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// The tightness check: ratios stay within a factor-3 band of each other.
pub fn tightness_band_ok(rows: &[TightnessRow]) -> bool {
    if rows.len() < 2 {
        return true;
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for r in rows {
        lo = lo.min(r.ratio);
        hi = hi.max(r.ratio);
    }
    lo > 0.0 && hi <= 3.0 * lo
}
