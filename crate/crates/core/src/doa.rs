//! MUSIC pseudo-spectrum over a uniform angle grid and K-peak selection.
//!
//! The signal subspace is spanned by the `K` leading left singular vectors
//! `L` of `Ẑ`; the spectrum is `1 / (aᴴ(θ)(I − LLᴴ)a(θ))` with the steering
//! convention of [`crate::array_sim::steering_vector`]. Peaks are taken on
//! the grid only, so the estimate is quantized to the grid step.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::array_sim::steering_vector_unchecked;
use crate::numerics::{svd, CMatrix};
use crate::{Complex64, Error, Result};

pub const DEFAULT_GRID_STEP_DEG: f64 = 0.05;
const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Angles `i·step` strictly inside (−90°, 90°).
pub fn uniform_grid(step_deg: f64) -> Result<Vec<f64>> {
    if !(step_deg > 0.0 && step_deg < 90.0) {
        return Err(Error::domain(format!("grid step must lie in (0°, 90°), got {step_deg}")));
    }
    let n = (90.0 / step_deg).ceil() as i64;
    Ok((-n..=n).map(|i| i as f64 * step_deg).filter(|a| a.abs() < 90.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub angles_deg: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpectrumGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Two-column CSV, `angle_deg,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "angle_deg,value")?;
        for (a, v) in self.angles_deg.iter().zip(&self.values) {
            writeln!(out, "{a},{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    /// Ascending.
    pub doas_deg: Vec<f64>,
    /// Fewer than K strict local maxima were found; the remainder are the
    /// largest leftover grid values.
    pub degenerate: bool,
    pub spectrum: SpectrumGrid,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain("angle grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(a.abs() < 90.0)) {
        return Err(Error::domain(format!("grid angle {a}° outside (−90°, 90°)")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::domain("grid angles must be strictly increasing"));
    }
    Ok(())
}

/// MUSIC spectrum of `Ẑ` for `k` sources.
pub fn music_spectrum(z_hat: &CMatrix, k: usize, grid: &[f64], spacing_wavelengths: f64) -> Result<SpectrumGrid> {
    let m = z_hat.nrows();
    if k == 0 || k >= m {
        return Err(Error::domain(format!("need 0 < K < M, got K = {k}, M = {m}")));
    }
    if k > z_hat.ncols() {
        return Err(Error::domain(format!("K = {k} exceeds the {} available snapshots", z_hat.ncols())));
    }
    if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
        return Err(Error::domain(format!("spacing must be positive, got {spacing_wavelengths}")));
    }
    check_grid(grid)?;
    let dec = svd(z_hat)?;
    let signal = dec.left.columns(0, k).into_owned();
    Ok(spectrum_from_subspace(&signal, grid, spacing_wavelengths))
}

/// Spectrum for an orthonormal signal basis `L` (`M×K`).
pub fn spectrum_from_subspace(signal: &CMatrix, grid: &[f64], spacing_wavelengths: f64) -> SpectrumGrid {
    let m = signal.nrows();
    let values = grid
        .iter()
        .map(|&theta| {
            let a = steering_vector_unchecked(theta, m, spacing_wavelengths);
            let coeffs = signal.ad_mul(&a);
            let noise_part = &a - signal * coeffs;
            let denom: f64 = noise_part.iter().map(Complex64::norm_sqr).sum();
            1.0 / denom.max(DENOMINATOR_FLOOR)
        })
        .collect();
    SpectrumGrid { angles_deg: grid.to_vec(), values }
}

/// Picks the `k` largest strict local maxima, padding with the largest
/// remaining grid values when there are too few.
pub fn estimate_doas(spectrum: &SpectrumGrid, k: usize) -> Result<DoaEstimate> {
    if k == 0 {
        return Err(Error::domain("K must be positive"));
    }
    let v = &spectrum.values;
    if v.is_empty() || v.len() != spectrum.angles_deg.len() {
        return Err(Error::domain("spectrum is empty or malformed"));
    }
    if k > v.len() {
        return Err(Error::domain(format!("K = {k} exceeds the {} grid points", v.len())));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("spectrum contains NaN"));
    }
    let by_value_desc = |a: &usize, b: &usize| v[*b].total_cmp(&v[*a]).then(a.cmp(b));

    let mut peaks: Vec<usize> =
        (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1]).collect();
    peaks.sort_by(by_value_desc);
    peaks.truncate(k);
    let degenerate = peaks.len() < k;
    if degenerate {
        let mut rest: Vec<usize> = (0..v.len()).filter(|i| !peaks.contains(i)).collect();
        rest.sort_by(by_value_desc);
        peaks.extend(rest.into_iter().take(k - peaks.len()));
    }
    peaks.sort_unstable();
    Ok(DoaEstimate {
        doas_deg: peaks.iter().map(|&i| spectrum.angles_deg[i]).collect(),
        degenerate,
        spectrum: spectrum.clone(),
    })
}

/// Spectrum plus peak search in one call.
pub fn estimate(z_hat: &CMatrix, k: usize, grid: &[f64], spacing_wavelengths: f64) -> Result<DoaEstimate> {
    let spectrum = music_spectrum(z_hat, k, grid, spacing_wavelengths)?;
    estimate_doas(&spectrum, k)
}
