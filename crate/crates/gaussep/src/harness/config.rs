//! Experiment configuration: a TOML file mirroring the config type, with CLI
//! overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covmodels::FamilySpec;
use crate::harness::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Kernel bandwidth policy for the smoothed-process statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonPolicy {
    Fixed { epsilon: f64 },
    /// Per-cell selected bandwidth; saturated cells fall back to the widest
    /// admissible kernel (1/2), where the bound is vacuous but well defined.
    EpsilonStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub families: Vec<FamilySpec>,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub epsilon_policy: EpsilonPolicy,
    /// Certified-grid tolerance for the smoothed sup statistic.
    pub tol: f64,
    /// Thresholds for the tail study.
    pub tail_thresholds: Vec<f64>,
    /// Delta targets for the tightness study, as multiples of n.
    pub tightness_multipliers: Vec<f64>,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    /// Retain per-replication sup values in the JSON report.
    pub retain_replicates: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            families: vec![
                FamilySpec::Iid,
                FamilySpec::Ou { alpha: 1.0 },
                FamilySpec::Lrd { d_exp: 0.5 },
            ],
            n_list: vec![100, 1000],
            replications: 400,
            master_seed: 20240,
            epsilon_policy: EpsilonPolicy::EpsilonStar,
            tol: 1e-3,
            tail_thresholds: vec![0.05, 0.1],
            tightness_multipliers: vec![1.0, 4.0, 16.0],
            workers: 0,
            out_dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            retain_replicates: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.families.is_empty() {
            return Err(HarnessError::Config("at least one family required".into()));
        }
        for f in &self.families {
            f.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Config(
                "n_list must be nonempty and strictly increasing".into(),
            ));
        }
        if self.n_list[0] == 0 {
            return Err(HarnessError::Config("n must be >= 1".into()));
        }
        if self.replications < 2 {
            return Err(HarnessError::Config("replications must be >= 2".into()));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(HarnessError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if let EpsilonPolicy::Fixed { epsilon } = self.epsilon_policy {
            crate::kernel::KernelSpec::new(epsilon)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        for &thr in &self.tail_thresholds {
            if !(0.0..1.0).contains(&thr) || thr == 0.0 {
                return Err(HarnessError::Config(format!(
                    "tail thresholds must lie in (0,1), got {thr}"
                )));
            }
        }
        if self.tightness_multipliers.iter().any(|&m| !m.is_finite() || m <= 0.0) {
            return Err(HarnessError::Config("tightness multipliers must be > 0".into()));
        }
        Ok(())
    }

    /// Effective worker count.
    pub fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }
}
