//! Monte-Carlo trials, metric aggregation and parameter sweeps.
//!
//! Every trial draws its scenario from `trial_seed(master, index)`, so a
//! batch gives the same numbers whatever the worker count or execution
//! order, and growing `Q` keeps the earlier trials unchanged.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_sim::{generate_scenario, trial_seed, ArrayConfig};
use crate::decomposer::{self, SolverParams};
use crate::detector::{self, DEFAULT_H_FACTOR};
use crate::doa::{self, DEFAULT_GRID_STEP_DEG};
use crate::{Error, Result};

pub const DEFAULT_RESOLUTION_DEG: f64 = 0.5;

/// Post-processing knobs shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSettings {
    pub resolution_threshold_deg: f64,
    pub grid_step_deg: f64,
    pub h_factor: f64,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            resolution_threshold_deg: DEFAULT_RESOLUTION_DEG,
            grid_step_deg: DEFAULT_GRID_STEP_DEG,
            h_factor: DEFAULT_H_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub seed: u64,
    /// Estimated angles, ascending; empty when the trial failed.
    pub doas_deg: Vec<f64>,
    /// `|θ̂ − θ|` per true source under the best one-to-one matching.
    pub doa_abs_errors_deg: Vec<f64>,
    pub resolved: bool,
    pub detection_correct: bool,
    pub detected_indices: Vec<usize>,
    pub true_indices: Vec<usize>,
    pub solver_converged: bool,
    pub solver_iterations: usize,
    pub degenerate_doa: bool,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    pub error: Option<String>,
}

impl TrialOutcome {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Simulates, decomposes and scores one trial. Pipeline errors are recorded
/// in the outcome rather than returned.
pub fn run_trial(
    config: &ArrayConfig,
    params: &SolverParams,
    settings: &TrialSettings,
    trial_index: u64,
) -> TrialOutcome {
    let start = Instant::now();
    let seed = trial_seed(config.seed, trial_index);
    let mut outcome = TrialOutcome {
        trial_index,
        seed,
        doas_deg: Vec::new(),
        doa_abs_errors_deg: Vec::new(),
        resolved: false,
        detection_correct: false,
        detected_indices: Vec::new(),
        true_indices: Vec::new(),
        solver_converged: false,
        solver_iterations: 0,
        degenerate_doa: false,
        wall_time: Duration::ZERO,
        error: None,
    };
    if let Err(e) = score_trial(config, params, settings, seed, &mut outcome) {
        outcome.error = Some(e.to_string());
        outcome.resolved = false;
        outcome.detection_correct = false;
    }
    outcome.wall_time = start.elapsed();
    outcome
}

fn score_trial(
    config: &ArrayConfig,
    params: &SolverParams,
    settings: &TrialSettings,
    seed: u64,
    outcome: &mut TrialOutcome,
) -> Result<()> {
    let cfg = ArrayConfig { seed, ..config.clone() };
    let scenario = generate_scenario(&cfg)?;
    outcome.true_indices = scenario.distorted_indices.clone();

    let result = decomposer::run(&scenario.measurements, params, None)?;
    outcome.solver_converged = result.converged;
    outcome.solver_iterations = result.iterations();

    let grid = doa::uniform_grid(settings.grid_step_deg)?;
    let est = doa::estimate(&result.z_hat, cfg.num_sources(), &grid, cfg.spacing_wavelengths)?;
    outcome.degenerate_doa = est.degenerate;
    outcome.doa_abs_errors_deg = matched_errors(&est.doas_deg, &cfg.doas_deg);
    outcome.doas_deg = est.doas_deg;
    outcome.resolved = outcome.doa_abs_errors_deg.iter().all(|&e| e <= settings.resolution_threshold_deg);

    let report = detector::detect(&result.gamma_hat, settings.h_factor)?;
    outcome.detection_correct = report.distorted_indices == scenario.distorted_indices;
    outcome.detected_indices = report.distorted_indices;
    Ok(())
}

/// Absolute errors per true angle under the assignment minimizing the
/// total absolute error (exhaustive over permutations).
pub fn matched_errors(estimates: &[f64], truth: &[f64]) -> Vec<f64> {
    let k = truth.len().min(estimates.len());
    let mut perm: Vec<usize> = (0..estimates.len()).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    permute(&mut perm, 0, &mut |p| {
        let errs: Vec<f64> = (0..k).map(|i| (estimates[p[i]] - truth[i]).abs()).collect();
        let total: f64 = errs.iter().sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, errs));
        }
    });
    best.map(|(_, e)| e).unwrap_or_default()
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start + 1 >= items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sweep_value: f64,
    pub rmse_deg: f64,
    pub res_prob: f64,
    pub det_rate: f64,
    pub num_trials: usize,
    pub num_resolved: usize,
    pub num_detected: usize,
    pub convergence_rate: f64,
    /// Trials whose pipeline errored; they count as unresolved and
    /// undetected and contribute nothing to the RMSE.
    pub failed_trials: usize,
}

/// RMSE over all matched errors, plus resolution and detection rates.
///
/// Outcomes are summed in trial-index order, so the result does not depend
/// on the order they were produced in.
pub fn aggregate(outcomes: &[TrialOutcome], resolution_threshold_deg: f64, sweep_value: f64) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::domain("cannot aggregate an empty set of trials"));
    }
    let mut ordered: Vec<&TrialOutcome> = outcomes.iter().collect();
    ordered.sort_by_key(|o| o.trial_index);
    let q = ordered.len();
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    let mut resolved = 0;
    let mut detected = 0;
    let mut converged = 0;
    let mut failed = 0;
    for o in &ordered {
        if o.failed() {
            failed += 1;
            continue;
        }
        sum_sq += o.doa_abs_errors_deg.iter().map(|e| e * e).sum::<f64>();
        count += o.doa_abs_errors_deg.len();
        if !o.doa_abs_errors_deg.is_empty() && o.doa_abs_errors_deg.iter().all(|&e| e <= resolution_threshold_deg) {
            resolved += 1;
        }
        if o.detection_correct {
            detected += 1;
        }
        if o.solver_converged {
            converged += 1;
        }
    }
    let rmse_deg = if count == 0 { f64::NAN } else { (sum_sq / count as f64).sqrt() };
    Ok(MetricsReport {
        sweep_value,
        rmse_deg,
        res_prob: resolved as f64 / q as f64,
        det_rate: detected as f64 / q as f64,
        num_trials: q,
        num_resolved: resolved,
        num_detected: detected,
        convergence_rate: converged as f64 / q as f64,
        failed_trials: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    Snapshots,
}

impl SweepAxis {
    /// Copy of `base` with the swept quantity set to `value`.
    pub fn apply(self, base: &ArrayConfig, value: f64) -> Result<ArrayConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::SnrDb => cfg.snr_db = value,
            SweepAxis::Snapshots => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Error::Config(format!("snapshot count must be a positive integer, got {value}")));
                }
                cfg.snapshots = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Trials and metrics for one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub report: MetricsReport,
    pub trials: Vec<TrialOutcome>,
}

/// Runs `q` trials per sweep value on a pool of `workers` threads
/// (`0` = rayon's default).
pub fn sweep(
    base: &ArrayConfig,
    params: &SolverParams,
    settings: &TrialSettings,
    axis: SweepAxis,
    values: &[f64],
    q: usize,
    workers: usize,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if q == 0 {
        return Err(Error::Config("number of trials must be positive".into()));
    }
    params.validate()?;
    let configs = values.iter().map(|&v| axis.apply(base, v)).collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    configs
        .iter()
        .zip(values)
        .map(|(cfg, &value)| {
            let trials: Vec<TrialOutcome> =
                pool.install(|| (0..q as u64).into_par_iter().map(|i| run_trial(cfg, params, settings, i)).collect());
            let report = aggregate(&trials, settings.resolution_threshold_deg, value)?;
            Ok(SweepPoint { report, trials })
        })
        .collect()
}

/// Sweep CSV: `sweep_value,rmse_deg,res_prob,det_rate,q,convergence_rate`.
pub fn write_sweep_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a MetricsReport>,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "sweep_value,rmse_deg,res_prob,det_rate,q,convergence_rate")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.sweep_value, r.rmse_deg, r.res_prob, r.det_rate, r.num_trials, r.convergence_rate
        )?;
    }
    Ok(())
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}
