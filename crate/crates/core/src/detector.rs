//! Gap-threshold detection of distorted sensors from `|γ̂|`.
//!
//! Magnitudes are sorted ascending into `γ̃`; the gap between the two
//! smallest, `d = γ̃(2) − γ̃(1)`, sets the threshold `h = h_factor · d`.
//! The first index `i ≥ 3` (1-based) with `γ̃(i) − γ̃(i−1) ≥ h` marks the
//! start of the distorted group, giving `M_fail = M − i + 1`; without such
//! a gap `M_fail = 0`. Since the scan starts at `i = 3`, at most `M − 2`
//! sensors can be reported.

use serde::{Deserialize, Serialize};

use crate::numerics::CVector;
use crate::{Error, Result};

pub const DEFAULT_H_FACTOR: f64 = 10.0;

/// Relative floor on `h`, so an all-zero `γ̂` (where `d = 0`) reports nothing.
pub const THRESHOLD_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub num_distorted: usize,
    /// Zero-based sensor positions, ascending.
    pub distorted_indices: Vec<usize>,
    pub sorted_magnitudes: Vec<f64>,
    /// Gap between the two smallest magnitudes.
    pub base_gap: f64,
    pub gap_threshold: f64,
}

pub fn detect(gamma_hat: &CVector, h_factor: f64) -> Result<DetectionReport> {
    let m = gamma_hat.len();
    if m < 3 {
        return Err(Error::domain(format!("detection needs at least 3 sensors, got {m}")));
    }
    if !(h_factor > 0.0 && h_factor.is_finite()) {
        return Err(Error::invalid(format!("h_factor must be positive, got {h_factor}")));
    }
    let mags: Vec<f64> = gamma_hat.iter().map(|g| g.norm()).collect();
    if mags.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("gamma contains non-finite entries"));
    }
    let mut order: Vec<usize> = (0..m).collect();
    // stable: equal magnitudes keep index order
    order.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| mags[i]).collect();

    let base_gap = sorted[1] - sorted[0];
    let floor = THRESHOLD_FLOOR_REL * sorted[m - 1].max(1.0);
    let h = (h_factor * base_gap).max(floor);

    // 1-based i = 3..=M  <=>  0-based j = 2..m
    let first = (2..m).find(|&j| sorted[j] - sorted[j - 1] >= h);
    let num_distorted = first.map_or(0, |j| m - j);
    let mut distorted_indices: Vec<usize> = order[m - num_distorted..].to_vec();
    distorted_indices.sort_unstable();

    Ok(DetectionReport { num_distorted, distorted_indices, sorted_magnitudes: sorted, base_gap, gap_threshold: h })
}
