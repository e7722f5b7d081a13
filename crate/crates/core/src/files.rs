//! JSON file formats for scenarios and solutions.
//!
//! Matrices are stored as `{"rows": r, "cols": c, "data": [[re, im], ...]}`
//! in row-major order; vectors as lists of `[re, im]` pairs. Floats are
//! written in shortest round-trip form, so reloading reproduces every
//! entry bit for bit.

use serde::{Deserialize, Serialize};

use crate::array_sim::{ArrayConfig, ArrayScenario};
use crate::config::RunConfig;
use crate::decomposer::TraceRecord;
use crate::detector::DetectionReport;
use crate::numerics::{CMatrix, CVector};
use crate::{Complex64, Error, Result};

pub const SCENARIO_FORMAT: &str = "doa-scenario/1";
pub const SOLUTION_FORMAT: &str = "doa-solution/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        let data = m.row_iter().flat_map(|row| row.iter().map(|v| [v.re, v.im]).collect::<Vec<_>>()).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self, what: &str) -> Result<CMatrix> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Format(format!("{what}: matrix must have at least one row and column")));
        }
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return Err(Error::Format(format!(
                "{what}: {}x{} matrix needs {} entries, found {}",
                self.rows,
                self.cols,
                self.rows.saturating_mul(self.cols),
                self.data.len()
            )));
        }
        check_finite_pairs(&self.data, what)?;
        Ok(CMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|[re, im]| Complex64::new(*re, *im))))
    }
}

pub fn vector_record(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_record(data: &[[f64; 2]], what: &str) -> Result<CVector> {
    check_finite_pairs(data, what)?;
    Ok(CVector::from_iterator(data.len(), data.iter().map(|[re, im]| Complex64::new(*re, *im))))
}

fn check_finite_pairs(data: &[[f64; 2]], what: &str) -> Result<()> {
    if data.iter().flatten().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Format(format!("{what}: non-finite entry")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    format: String,
    config: ArrayConfig,
    steering: MatrixRecord,
    signals: MatrixRecord,
    gamma_true: Vec<[f64; 2]>,
    distorted_indices: Vec<usize>,
    noise: MatrixRecord,
    measurements: MatrixRecord,
}

pub fn scenario_to_string(s: &ArrayScenario) -> Result<String> {
    let doc = ScenarioDoc {
        format: SCENARIO_FORMAT.into(),
        config: s.config.clone(),
        steering: (&s.steering).into(),
        signals: (&s.signals).into(),
        gamma_true: vector_record(&s.gamma_true),
        distorted_indices: s.distorted_indices.clone(),
        noise: (&s.noise).into(),
        measurements: (&s.measurements).into(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

/// Parses a scenario file, checking every shape against the embedded config.
pub fn scenario_from_str(text: &str) -> Result<ArrayScenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| Error::Format(format!("scenario: {e}")))?;
    if doc.format != SCENARIO_FORMAT {
        return Err(Error::Format(format!("unsupported scenario format '{}'", doc.format)));
    }
    doc.config.validate()?;
    let (m, k, t) = (doc.config.num_sensors, doc.config.num_sources(), doc.config.snapshots);
    let steering = doc.steering.to_matrix("steering")?;
    let signals = doc.signals.to_matrix("signals")?;
    let noise = doc.noise.to_matrix("noise")?;
    let measurements = doc.measurements.to_matrix("measurements")?;
    let gamma_true = vector_from_record(&doc.gamma_true, "gamma_true")?;
    let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Format(format!("{name} is {got:?}, config implies {want:?}")))
        }
    };
    expect("steering", steering.shape(), (m, k))?;
    expect("signals", signals.shape(), (k, t))?;
    expect("noise", noise.shape(), (m, t))?;
    expect("measurements", measurements.shape(), (m, t))?;
    if gamma_true.len() != m {
        return Err(Error::Format(format!("gamma_true has length {}, expected {m}", gamma_true.len())));
    }
    let mut idx = doc.distorted_indices.clone();
    idx.sort_unstable();
    idx.dedup();
    if idx.len() != doc.distorted_indices.len() || idx.iter().any(|&i| i >= m) {
        return Err(Error::Format("distorted_indices must be distinct sensor positions".into()));
    }
    Ok(ArrayScenario { config: doc.config, steering, signals, gamma_true, distorted_indices: idx, noise, measurements })
}

/// Output of a single decomposition run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: String,
    pub config: RunConfig,
    pub converged: bool,
    pub iterations: usize,
    pub gamma_hat: Vec<[f64; 2]>,
    pub z_hat: MatrixRecord,
    pub detection: DetectionReport,
    pub doas_deg: Vec<f64>,
    pub doa_degenerate: bool,
    pub trace: Vec<TraceRecord>,
}

impl SolutionFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn z_hat(&self) -> Result<CMatrix> {
        self.z_hat.to_matrix("z_hat")
    }

    pub fn gamma_hat(&self) -> Result<CVector> {
        vector_from_record(&self.gamma_hat, "gamma_hat")
    }
}

/// Parses a solution file and checks `Ẑ` and `γ̂` against its config.
pub fn solution_from_str(text: &str) -> Result<SolutionFile> {
    let sol: SolutionFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("solution: {e}")))?;
    if sol.format != SOLUTION_FORMAT {
        return Err(Error::Format(format!("unsupported solution format '{}'", sol.format)));
    }
    sol.config.validate()?;
    let z = sol.z_hat()?;
    let m = sol.config.scenario.num_sensors;
    if z.nrows() != m {
        return Err(Error::Format(format!("z_hat has {} rows, config has {m} sensors", z.nrows())));
    }
    if sol.gamma_hat()?.len() != m {
        return Err(Error::Format(format!("gamma_hat has length {}, expected {m}", sol.gamma_hat.len())));
    }
    Ok(sol)
}

/// Either kind of input file, told apart by its `format` tag.
#[derive(Debug, Clone)]
pub enum InputFile {
    Scenario(Box<ArrayScenario>),
    Solution(Box<SolutionFile>),
}

#[derive(Deserialize)]
struct FormatTag {
    format: String,
}

pub fn input_from_str(text: &str) -> Result<InputFile> {
    let tag: FormatTag = serde_json::from_str(text).map_err(|e| Error::Format(format!("input: {e}")))?;
    match tag.format.as_str() {
        SCENARIO_FORMAT => Ok(InputFile::Scenario(Box::new(scenario_from_str(text)?))),
        SOLUTION_FORMAT => Ok(InputFile::Solution(Box::new(solution_from_str(text)?))),
        other => Err(Error::Format(format!("unknown input format '{other}'"))),
    }
}
