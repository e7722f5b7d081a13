//! Alternating solver for the entangled low-rank plus sparse model.
//!
//! Each outer iteration
//! 1. forms `D = I + diag(γ)` and `P = (Z Zᴴ + μ² I)^{-1/2}` from the current iterates,
//! 2. sets `Z ← (DᴴD + λ₁P)⁻¹ DᴴY`,
//! 3. re-solves the box LASSO for `γ` with `Z` fixed (warm started),
//! 4. shrinks `μ ← max(αμ, μ_min)`,
//!
//! and stops once the relative change of
//! `f(Z, γ) = ½‖Y − DZ‖²_F + λ₁‖[Z, μI]‖_* + λ₂(‖Re γ‖₁ + ‖Im γ‖₁)` is at most `ε`
//! or after `k_max` iterations.
//!
//! The penalties are not scale invariant, so the same `λ₁, λ₂` behave very
//! differently on `Y` and on `cY`. By default the loop runs on `Y/√T`,
//! whose Gram matrix is the sample covariance, and `Ẑ` is mapped back to
//! data units at the end. `γ̂` is unaffected by the mapping. Objective
//! values in the trace are those of the scaled problem.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::box_lasso::{self, SolveOptions};
use crate::numerics::{ensure_finite_matrix, ensure_finite_vector, hermitian_inv_sqrt, singular_values, solve_hpd};
use crate::numerics::{CMatrix, CVector};
use crate::{Complex64, Error, Result};

/// Relative tolerance on the Z-update normal equation.
pub const STATIONARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu0: f64,
    /// Per-iteration shrink factor for μ; `1.0` keeps μ fixed.
    pub alpha: f64,
    pub mu_min: f64,
    pub gamma_max: f64,
    pub epsilon: f64,
    pub k_max: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub data_scaling: DataScaling,
}

/// Scaling applied to `Y` before the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataScaling {
    /// Run on `Y` as given.
    None,
    /// Run on `Y/√T`.
    #[default]
    PerSnapshot,
}

impl DataScaling {
    pub fn factor(self, snapshots: usize) -> f64 {
        match self {
            DataScaling::None => 1.0,
            DataScaling::PerSnapshot => 1.0 / (snapshots as f64).sqrt(),
        }
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 0.2,
            mu0: 1.0,
            alpha: 0.95,
            mu_min: 1e-6,
            gamma_max: 10.0,
            epsilon: 1e-12,
            k_max: 100,
            inner_tol: 1e-8,
            inner_max_iter: 2000,
            data_scaling: DataScaling::PerSnapshot,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("lambda1", self.lambda1)?;
        positive("lambda2", self.lambda2)?;
        positive("mu0", self.mu0)?;
        positive("mu_min", self.mu_min)?;
        positive("gamma_max", self.gamma_max)?;
        positive("inner_tol", self.inner_tol)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be positive".into()));
        }
        if self.inner_max_iter == 0 {
            return Err(Error::Config("inner_max_iter must be positive".into()));
        }
        Ok(())
    }

    fn inner(&self) -> SolveOptions {
        SolveOptions { tol: self.inner_tol, max_iter: self.inner_max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    /// μ in force during this iteration.
    pub mu: f64,
    pub stop_ratio: f64,
    pub inner_iters: usize,
    pub inner_kkt: f64,
    pub inner_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub z_hat: CMatrix,
    pub gamma_hat: CVector,
    pub trace: Vec<TraceRecord>,
    /// The relative-change stopping rule fired before `k_max`.
    pub converged: bool,
    /// Relative residual of the last Z-update's normal equation.
    pub stationarity_residual: f64,
    /// Factor `Y` was multiplied by inside the loop.
    pub data_scale: f64,
}

impl DecompositionResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `Σᵢ √(σᵢ² + μ²)` over all `M` singular values of `Z`, i.e. `‖[Z, μI]‖_*`.
pub fn smoothed_nuclear_norm(z: &CMatrix, mu: f64) -> Result<f64> {
    let sv = singular_values(z)?;
    let padding = z.nrows().saturating_sub(sv.len());
    Ok(sv.iter().map(|s| s.hypot(mu)).sum::<f64>() + padding as f64 * mu.abs())
}

/// `f(Z, γ)` with the ℓ1 term split over real and imaginary parts.
pub fn objective(y: &CMatrix, z: &CMatrix, gamma: &CVector, lambda1: f64, lambda2: f64, mu: f64) -> Result<f64> {
    check_shapes(y, z, gamma)?;
    ensure_finite_matrix(y, "Y")?;
    ensure_finite_vector(gamma, "gamma")?;
    if !mu.is_finite() || !lambda1.is_finite() || !lambda2.is_finite() {
        return Err(Error::invalid("objective weights must be finite"));
    }
    let mut fit = 0.0;
    for (m, (yrow, zrow)) in y.row_iter().zip(z.row_iter()).enumerate() {
        let d = Complex64::new(1.0, 0.0) + gamma[m];
        fit += yrow.iter().zip(zrow.iter()).map(|(a, b)| (a - d * b).norm_sqr()).sum::<f64>();
    }
    let l1: f64 = gamma.iter().map(|g| g.re.abs() + g.im.abs()).sum();
    Ok(0.5 * fit + lambda1 * smoothed_nuclear_norm(z, mu)? + lambda2 * l1)
}

fn check_shapes(y: &CMatrix, z: &CMatrix, gamma: &CVector) -> Result<()> {
    if y.shape() != z.shape() {
        return Err(Error::dim(format!("Y is {:?} but Z is {:?}", y.shape(), z.shape())));
    }
    if gamma.len() != y.nrows() {
        return Err(Error::dim(format!("gamma has length {}, expected {}", gamma.len(), y.nrows())));
    }
    Ok(())
}

/// Builds `DᴴD + λ₁P` and `DᴴY` for the Z-update.
fn z_system(y: &CMatrix, gamma: &CVector, p: &CMatrix, lambda1: f64) -> (CMatrix, CMatrix) {
    let mut lhs = p.scale(lambda1);
    let mut rhs = y.clone();
    for m in 0..y.nrows() {
        let d = Complex64::new(1.0, 0.0) + gamma[m];
        lhs[(m, m)] += d.norm_sqr();
        for v in rhs.row_mut(m).iter_mut() {
            *v *= d.conj();
        }
    }
    (lhs, rhs)
}

/// Relative residual `‖DᴴDZ + λ₁PZ − DᴴY‖_F / ‖DᴴY‖_F` for a given `P`.
pub fn stationarity_residual(y: &CMatrix, gamma: &CVector, p: &CMatrix, z: &CMatrix, lambda1: f64) -> f64 {
    let (lhs, rhs) = z_system(y, gamma, p, lambda1);
    let num = (lhs * z - &rhs).norm();
    let den = rhs.norm();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Closed-form minimizer of the Z-subproblem with `P` frozen at `Z_prev`.
pub fn update_z(y: &CMatrix, gamma: &CVector, z_prev: &CMatrix, lambda1: f64, mu: f64) -> Result<CMatrix> {
    Ok(update_z_with_residual(y, gamma, z_prev, lambda1, mu)?.0)
}

fn update_z_with_residual(
    y: &CMatrix,
    gamma: &CVector,
    z_prev: &CMatrix,
    lambda1: f64,
    mu: f64,
) -> Result<(CMatrix, f64)> {
    check_shapes(y, z_prev, gamma)?;
    ensure_finite_matrix(y, "Y")?;
    ensure_finite_vector(gamma, "gamma")?;
    if !(lambda1 >= 0.0 && lambda1.is_finite()) {
        return Err(Error::invalid(format!("lambda1 must be nonnegative, got {lambda1}")));
    }
    let p = hermitian_inv_sqrt(z_prev, mu)?;
    let (lhs, rhs) = z_system(y, gamma, &p, lambda1);
    let z = solve_hpd(&lhs, &rhs)?;
    let den = rhs.norm();
    let num = (&lhs * &z - &rhs).norm();
    let resid = if den == 0.0 { num } else { num / den };
    if !(resid <= STATIONARITY_TOL) {
        return Err(Error::Numerical(format!("Z-update residual {resid:e} exceeds {STATIONARITY_TOL:e}")));
    }
    Ok((z, resid))
}

/// Runs the alternating solver. Without `init`, starts from `Z = Y`, `γ = 0`;
/// a given `(Z₀, γ₀)` is in data units.
pub fn run(y: &CMatrix, params: &SolverParams, init: Option<(CMatrix, CVector)>) -> Result<DecompositionResult> {
    run_observed(y, params, init, |_| {})
}

/// [`run`], handing each trace record to `observe` as soon as it exists, so
/// callers keep the partial trace when a later iteration fails.
pub fn run_observed(
    y: &CMatrix,
    params: &SolverParams,
    init: Option<(CMatrix, CVector)>,
    mut observe: impl FnMut(&TraceRecord),
) -> Result<DecompositionResult> {
    params.validate()?;
    ensure_finite_matrix(y, "Y")?;
    let scale = params.data_scaling.factor(y.ncols());
    let y = &y.scale(scale);
    let (mut z, mut gamma) = match init {
        Some((z0, g0)) => {
            check_shapes(y, &z0, &g0)?;
            ensure_finite_matrix(&z0, "initial Z")?;
            ensure_finite_vector(&g0, "initial gamma")?;
            (z0.scale(scale), g0)
        }
        None => (y.clone(), CVector::zeros(y.nrows())),
    };
    let mut mu = params.mu0;
    let mut f_prev = objective(y, &z, &gamma, params.lambda1, params.lambda2, mu)?;
    let mut trace = Vec::with_capacity(params.k_max);
    let mut converged = false;
    let mut stationarity = 0.0;

    for k in 1..=params.k_max {
        let (z_next, resid) = update_z_with_residual(y, &gamma, &z, params.lambda1, mu)?;
        stationarity = resid;
        z = z_next;

        let sub = box_lasso::build_subproblem(y, &z, params.lambda2, params.gamma_max)?;
        let sol = box_lasso::solve(&sub, params.inner(), Some(&gamma))?;
        gamma = sol.gamma;

        let f = objective(y, &z, &gamma, params.lambda1, params.lambda2, mu)?;
        let ratio = if f.abs() < 1e-300 { 0.0 } else { (f - f_prev).abs() / f.abs() };
        trace.push(TraceRecord {
            iteration: k,
            objective: f,
            mu,
            stop_ratio: ratio,
            inner_iters: sol.iterations,
            inner_kkt: sol.kkt_residual,
            inner_converged: sol.converged,
        });
        observe(&trace[trace.len() - 1]);
        f_prev = f;
        mu = (params.alpha * mu).max(params.mu_min);
        if ratio <= params.epsilon {
            converged = true;
            break;
        }
    }

    Ok(DecompositionResult {
        z_hat: z.unscale(scale),
        gamma_hat: gamma,
        trace,
        converged,
        stationarity_residual: stationarity,
        data_scale: scale,
    })
}

/// Writes the iteration trace as CSV (`iteration,objective,mu,stop_ratio,inner_iters`).
pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,objective,mu,stop_ratio,inner_iters")?;
    for r in trace {
        writeln!(out, "{},{},{},{},{}", r.iteration, r.objective, r.mu, r.stop_ratio, r.inner_iters)?;
    }
    Ok(())
}
