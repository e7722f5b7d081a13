//! TOML run configuration shared by every CLI command.
//!
//! ```toml
//! [scenario]
//! num_sensors = 8
//! doas_deg = [-10.0, 10.0]
//! snapshots = 100
//! snr_db = 10.0          # or inf for noiseless data
//! num_distorted = 3
//! seed = 2024            # master seed
//!
//! [solver]               # every key optional
//! lambda1 = 2.0
//!
//! [trial]                # post-processing, every key optional
//! grid_step_deg = 0.05
//!
//! [bench]
//! q = 100                # default 1000
//! workers = 0
//!
//! [[bench.sweeps]]
//! name = "snr"
//! axis = "snr_db"
//! values = [-10.0, 0.0, 10.0]
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::array_sim::ArrayConfig;
use crate::bench::{SweepAxis, TrialSettings};
use crate::decomposer::SolverParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ArrayConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub trial: TrialSettings,
    #[serde(default)]
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub q: usize,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub sweeps: Vec<SweepSpec>,
    /// Also write per-trial JSON records next to each CSV.
    pub json_report: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { q: 1000, workers: 0, sweeps: Vec::new(), json_report: false }
    }
}

/// One sweep; `snr_db` / `snapshots` override the base scenario for the
/// non-swept quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
}

impl SweepSpec {
    pub fn base_config(&self, scenario: &ArrayConfig) -> ArrayConfig {
        let mut cfg = scenario.clone();
        if let Some(snr) = self.snr_db {
            cfg.snr_db = snr;
        }
        if let Some(t) = self.snapshots {
            cfg.snapshots = t;
        }
        cfg
    }
}

impl RunConfig {
    pub fn new(scenario: ArrayConfig) -> Self {
        Self {
            scenario,
            solver: SolverParams::default(),
            trial: TrialSettings::default(),
            bench: BenchConfig::default(),
        }
    }

    /// Parses and validates a TOML document. Syntax and schema errors carry
    /// the line and column of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Validates every section; returns scenario warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = self.scenario.validate()?;
        self.solver.validate()?;
        let t = &self.trial;
        if !(t.grid_step_deg > 0.0 && t.grid_step_deg < 90.0) {
            return Err(Error::Config(format!("trial.grid_step_deg must lie in (0, 90), got {}", t.grid_step_deg)));
        }
        if !(t.h_factor > 0.0 && t.h_factor.is_finite()) {
            return Err(Error::Config(format!("trial.h_factor must be positive, got {}", t.h_factor)));
        }
        if !(t.resolution_threshold_deg >= 0.0 && t.resolution_threshold_deg.is_finite()) {
            return Err(Error::Config(format!(
                "trial.resolution_threshold_deg must be nonnegative, got {}",
                t.resolution_threshold_deg
            )));
        }
        if self.bench.q == 0 {
            return Err(Error::Config("bench.q must be positive".into()));
        }
        for s in &self.bench.sweeps {
            if s.values.is_empty() {
                return Err(Error::Config(format!("sweep '{}' has no values", s.name)));
            }
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!(
                    "sweep name '{}' must be a non-empty [A-Za-z0-9_-] identifier",
                    s.name
                )));
            }
            let base = s.base_config(&self.scenario);
            for &v in &s.values {
                s.axis.apply(&base, v)?;
            }
        }
        Ok(warnings)
    }
}
