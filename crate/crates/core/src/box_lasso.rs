//! Box-constrained LASSO for the distortion vector.
//!
//! With `Z` fixed, `γ` solves
//!
//! ```text
//! min ½‖g − Φγ‖² + λ₂(‖Re γ‖₁ + ‖Im γ‖₁)   s.t. |Re γ_m|, |Im γ_m| ≤ γ_max
//! ```
//!
//! with `g = vec(Y − Z)` and `Φ = Zᵀ ⊙ I`. Stacking real and imaginary
//! parts gives the real problem `min ½‖ḡ − Φ̄x‖² + λ₂‖x‖₁, |x_i| ≤ γ_max`
//! where `Φ̄ = [Re Φ, −Im Φ; Im Φ, Re Φ]`. Writing `x = x⁺ − x⁻` turns it
//! into a bound-constrained QP; here it is solved directly by monotone
//! accelerated proximal gradient, whose proximal map is the coordinatewise
//! `clip(soft(v, λ₂/L), ±γ_max)`.

use nalgebra::DMatrix;

use crate::numerics::{ensure_finite_matrix, CMatrix, CVector, StructuredSelector};
use crate::{Complex64, Error, Result};

const POWER_ITERATIONS: usize = 20;
const LIPSCHITZ_SAFETY: f64 = 1.05;
const MAX_BACKTRACKS: usize = 60;
const ROUNDING_SLACK: f64 = 8.0 * f64::EPSILON;

/// A real linear map `ℝⁿ → ℝᵐ` with its transpose.
pub trait RealOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);
}

/// `Φ̄` backed by the structured selector on `Z`.
#[derive(Debug, Clone, Copy)]
pub struct SplitSelector<'a> {
    selector: StructuredSelector<'a>,
}

impl<'a> SplitSelector<'a> {
    pub fn new(z: &'a CMatrix) -> Self {
        Self { selector: StructuredSelector::new(z) }
    }

    pub fn selector(&self) -> StructuredSelector<'a> {
        self.selector
    }

    /// Dense `Φ̄`, for checking the structured path.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let phi = self.selector.to_dense();
        let (r, c) = phi.shape();
        let mut out = DMatrix::zeros(2 * r, 2 * c);
        for i in 0..r {
            for j in 0..c {
                let v = phi[(i, j)];
                out[(i, j)] = v.re;
                out[(i, c + j)] = -v.im;
                out[(r + i, j)] = v.im;
                out[(r + i, c + j)] = v.re;
            }
        }
        out
    }
}

impl RealOperator for SplitSelector<'_> {
    fn nrows(&self) -> usize {
        2 * self.selector.nrows()
    }

    fn ncols(&self) -> usize {
        2 * self.selector.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let z = self.selector.source();
        let m = z.nrows();
        let (re_out, im_out) = out.split_at_mut(z.len());
        let (re_x, im_x) = x.split_at(m);
        for (t, col) in z.column_iter().enumerate() {
            for (mm, zv) in col.iter().enumerate() {
                let p = zv * Complex64::new(re_x[mm], im_x[mm]);
                re_out[t * m + mm] = p.re;
                im_out[t * m + mm] = p.im;
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let z = self.selector.source();
        let m = z.nrows();
        let (re_y, im_y) = y.split_at(z.len());
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for (t, col) in z.column_iter().enumerate() {
            for (mm, zv) in col.iter().enumerate() {
                acc[mm] += zv.conj() * Complex64::new(re_y[t * m + mm], im_y[t * m + mm]);
            }
        }
        for (mm, a) in acc.iter().enumerate() {
            out[mm] = a.re;
            out[m + mm] = a.im;
        }
    }
}

/// Explicit matrix operator.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl RealOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.0.column(j).iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }
}

/// `min ½‖ḡ − Φ̄x‖² + λ₂‖x‖₁` subject to `|x_i| ≤ γ_max`.
#[derive(Debug, Clone)]
pub struct RealSplitProblem<Op> {
    pub g_bar: Vec<f64>,
    pub operator: Op,
    pub lambda2: f64,
    pub gamma_max: f64,
}

/// Builds the γ-subproblem for measurements `y` and low-rank iterate `z`.
pub fn build_subproblem<'a>(
    y: &CMatrix,
    z: &'a CMatrix,
    lambda2: f64,
    gamma_max: f64,
) -> Result<RealSplitProblem<SplitSelector<'a>>> {
    if y.shape() != z.shape() {
        return Err(Error::dim(format!("Y is {:?} but Z is {:?}", y.shape(), z.shape())));
    }
    ensure_finite_matrix(y, "Y")?;
    ensure_finite_matrix(z, "Z")?;
    let n = y.len();
    let mut g_bar = vec![0.0; 2 * n];
    for (i, (a, b)) in y.iter().zip(z.iter()).enumerate() {
        let d = a - b;
        g_bar[i] = d.re;
        g_bar[n + i] = d.im;
    }
    Ok(RealSplitProblem { g_bar, operator: SplitSelector::new(z), lambda2, gamma_max })
}

impl<Op: RealOperator> RealSplitProblem<Op> {
    pub fn new(g_bar: Vec<f64>, operator: Op, lambda2: f64, gamma_max: f64) -> Result<Self> {
        if g_bar.len() != operator.nrows() {
            return Err(Error::dim(format!(
                "g has length {} but the operator has {} rows",
                g_bar.len(),
                operator.nrows()
            )));
        }
        Ok(Self { g_bar, operator, lambda2, gamma_max })
    }

    pub fn dim(&self) -> usize {
        self.operator.ncols()
    }

    /// Composite objective at a real-stacked point.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.operator.nrows()];
        self.operator.apply(x, &mut r);
        let fit: f64 = r.iter().zip(&self.g_bar).map(|(a, g)| (a - g) * (a - g)).sum();
        0.5 * fit + self.lambda2 * l1(x)
    }

    /// Gradient `Φ̄ᵀ(Φ̄x − ḡ)` of the smooth part.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.operator.nrows()];
        self.operator.apply(x, &mut r);
        r.iter_mut().zip(&self.g_bar).for_each(|(a, g)| *a -= g);
        let mut out = vec![0.0; x.len()];
        self.operator.apply_transpose(&r, &mut out);
        out
    }

    /// Largest violation of the first-order optimality conditions at `x`.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        kkt_from_gradient(x, &self.gradient(x), self.lambda2, self.gamma_max)
    }

    /// Power-iteration estimate of `λ_max(Φ̄ᵀΦ̄)`, without safety factor.
    pub fn lipschitz_estimate(&self) -> f64 {
        let n = self.dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut av = vec![0.0; self.operator.nrows()];
        let mut w = vec![0.0; n];
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERATIONS {
            self.operator.apply(&v, &mut av);
            self.operator.apply_transpose(&av, &mut w);
            estimate = dot(&v, &w);
            let norm = dot(&w, &w).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return 0.0;
            }
            v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
        }
        estimate
    }

    fn validate(&self) -> Result<()> {
        if self.g_bar.len() != self.operator.nrows() {
            return Err(Error::dim("g and operator disagree".to_string()));
        }
        if self.g_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("g contains non-finite entries"));
        }
        if !(self.lambda2 > 0.0 && self.lambda2.is_finite()) {
            return Err(Error::invalid(format!("lambda2 must be positive, got {}", self.lambda2)));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return Err(Error::invalid(format!("gamma_max must be positive, got {}", self.gamma_max)));
        }
        if !self.dim().is_multiple_of(2) {
            return Err(Error::dim("real-stacked dimension must be even".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLassoSolution {
    pub gamma: CVector,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl BoxLassoSolution {
    /// `[Re γ; Im γ]`.
    pub fn stacked(&self) -> Vec<f64> {
        stack(&self.gamma)
    }
}

pub fn stack(gamma: &CVector) -> Vec<f64> {
    gamma.iter().map(|v| v.re).chain(gamma.iter().map(|v| v.im)).collect()
}

pub fn unstack(x: &[f64]) -> CVector {
    let m = x.len() / 2;
    CVector::from_fn(m, |i, _| Complex64::new(x[i], x[m + i]))
}

/// Solves the box LASSO by monotone FISTA with momentum restart.
///
/// Hitting `max_iter` is not an error: the best iterate comes back with
/// `converged = false`.
pub fn solve<Op: RealOperator>(
    problem: &RealSplitProblem<Op>,
    opts: SolveOptions,
    warm_start: Option<&CVector>,
) -> Result<BoxLassoSolution> {
    problem.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let n = problem.dim();
    let lam = problem.lambda2;
    let cap = problem.gamma_max;
    let op = &problem.operator;
    let rows = op.nrows();

    let mut x = match warm_start {
        Some(w) => {
            if 2 * w.len() != n {
                return Err(Error::dim(format!("warm start has length {}, expected {}", w.len(), n / 2)));
            }
            if w.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::invalid("warm start contains non-finite entries"));
            }
            stack(w).into_iter().map(|v| v.clamp(-cap, cap)).collect()
        }
        None => vec![0.0; n],
    };

    let residual = |x: &[f64], out: &mut [f64]| {
        op.apply(x, out);
        out.iter_mut().zip(&problem.g_bar).for_each(|(a, g)| *a -= g);
    };
    let smooth = |r: &[f64]| 0.5 * dot(r, r);

    let mut r_x = vec![0.0; rows];
    residual(&x, &mut r_x);
    let mut f_x = smooth(&r_x) + lam * l1(&x);
    let mut grad_x = vec![0.0; n];

    let mut lipschitz = LIPSCHITZ_SAFETY * problem.lipschitz_estimate();
    if lipschitz == 0.0 {
        // Φ̄ = 0: only the penalty remains.
        let zero = vec![0.0; n];
        return Ok(BoxLassoSolution {
            gamma: unstack(&zero),
            kkt_residual: 0.0,
            iterations: 0,
            converged: true,
            objective: smooth(&problem.g_bar),
        });
    }

    let mut y = x.clone();
    let mut r_y = r_x.clone();
    let mut grad_y = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut r_cand = vec![0.0; rows];
    let mut momentum = 1.0_f64;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        op.apply_transpose(&r_x, &mut grad_x);
        kkt = kkt_from_gradient(&x, &grad_x, lam, cap);
        if kkt <= opts.tol {
            break;
        }
        iterations += 1;

        op.apply_transpose(&r_y, &mut grad_y);
        prox_step(&y, &grad_y, 1.0 / lipschitz, lam, cap, &mut cand);
        residual(&cand, &mut r_cand);
        let f_cand = smooth(&r_cand) + lam * l1(&cand);

        if f_cand <= f_x {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            momentum = next;
            for i in 0..n {
                y[i] = cand[i] + beta * (cand[i] - x[i]);
            }
            for i in 0..rows {
                r_y[i] = r_cand[i] + beta * (r_cand[i] - r_x[i]);
            }
            std::mem::swap(&mut x, &mut cand);
            std::mem::swap(&mut r_x, &mut r_cand);
            f_x = f_cand;
        } else {
            // Restart from x with a plain proximal step, backtracking on L if
            // the power-iteration estimate was too small. Near the optimum f
            // stops resolving progress, so a step is also accepted when the
            // quadratic upper bound holds up to rounding.
            momentum = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                prox_step(&x, &grad_x, 1.0 / lipschitz, lam, cap, &mut cand);
                if cand == x {
                    break;
                }
                residual(&cand, &mut r_cand);
                let s_new = smooth(&r_cand);
                let f_new = s_new + lam * l1(&cand);
                let slack = ROUNDING_SLACK * (f_x.abs() + s_new);
                let bound = smooth(&r_x) + quadratic_model(&x, &grad_x, &cand, lipschitz);
                if f_new <= f_x + slack || s_new <= bound + slack {
                    std::mem::swap(&mut x, &mut cand);
                    std::mem::swap(&mut r_x, &mut r_cand);
                    f_x = f_new;
                    accepted = true;
                    break;
                }
                lipschitz *= 2.0;
            }
            y.copy_from_slice(&x);
            r_y.copy_from_slice(&r_x);
            if !accepted {
                // x is a fixed point of the proximal-gradient map
                op.apply_transpose(&r_x, &mut grad_x);
                kkt = kkt_from_gradient(&x, &grad_x, lam, cap);
                break;
            }
        }
    }
    if iterations == opts.max_iter {
        op.apply_transpose(&r_x, &mut grad_x);
        kkt = kkt_from_gradient(&x, &grad_x, lam, cap);
    }

    Ok(BoxLassoSolution {
        gamma: unstack(&x),
        kkt_residual: kkt,
        iterations,
        converged: kkt <= opts.tol,
        objective: f_x,
    })
}

fn quadratic_model(x: &[f64], grad: &[f64], z: &[f64], lipschitz: f64) -> f64 {
    let mut lin = 0.0;
    let mut sq = 0.0;
    for i in 0..x.len() {
        let d = z[i] - x[i];
        lin += grad[i] * d;
        sq += d * d;
    }
    lin + 0.5 * lipschitz * sq
}

/// `clip(soft(v − step·∇, step·λ), ±cap)` coordinatewise.
fn prox_step(v: &[f64], grad: &[f64], step: f64, lam: f64, cap: f64, out: &mut [f64]) {
    for i in 0..v.len() {
        out[i] = clip_soft_threshold(v[i] - step * grad[i], step * lam, cap);
    }
}

/// Proximal map of `t|x| + indicator(|x| ≤ cap)`. Ties at `|v| = t` map to 0.
pub fn clip_soft_threshold(v: f64, t: f64, cap: f64) -> f64 {
    let mag = v.abs() - t;
    if mag <= 0.0 {
        0.0
    } else {
        (v.signum() * mag).clamp(-cap, cap)
    }
}

pub(crate) fn kkt_from_gradient(x: &[f64], grad: &[f64], lam: f64, cap: f64) -> f64 {
    x.iter()
        .zip(grad)
        .map(|(&xi, &r)| {
            if xi == 0.0 {
                (r.abs() - lam).max(0.0)
            } else if xi >= cap {
                (r + lam).max(0.0)
            } else if xi <= -cap {
                (lam - r).max(0.0)
            } else {
                (r + lam * xi.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(g: Vec<f64>, lam: f64, cap: f64) -> RealSplitProblem<DenseOperator> {
        let n = g.len();
        RealSplitProblem::new(g, DenseOperator(DMatrix::identity(n, n)), lam, cap).unwrap()
    }

    #[test]
    fn separable_soft_threshold() {
        let p = identity_problem(vec![0.5; 4], 0.2, 10.0);
        let sol = solve(&p, SolveOptions { tol: 1e-12, ..SolveOptions::default() }, None).unwrap();
        assert!(sol.converged);
        for v in sol.stacked() {
            assert!((v - 0.3).abs() <= 1e-10, "{v}");
        }
    }

    #[test]
    fn separable_clipped() {
        let p = identity_problem(vec![15.0, -15.0, 0.1, -0.5], 0.2, 10.0);
        let sol = solve(&p, SolveOptions { tol: 1e-12, ..SolveOptions::default() }, None).unwrap();
        let x = sol.stacked();
        assert!((x[0] - 10.0).abs() <= 1e-10);
        assert!((x[1] + 10.0).abs() <= 1e-10);
        assert_eq!(x[2], 0.0);
        assert!((x[3] + 0.3).abs() <= 1e-10);
    }

    #[test]
    fn zero_data_zero_solution() {
        let z = CMatrix::from_fn(3, 4, |i, j| Complex64::new(i as f64 + 1.0, j as f64 - 1.0));
        let p = build_subproblem(&z, &z, 0.2, 10.0).unwrap();
        assert!(p.g_bar.iter().all(|&v| v == 0.0));
        let sol = solve(&p, SolveOptions::default(), None).unwrap();
        assert!(sol.gamma.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn scalar_subproblem() {
        let y = CMatrix::from_element(1, 1, Complex64::new(2.0, 0.0));
        let z = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let p = build_subproblem(&y, &z, 0.2, 10.0).unwrap();
        assert_eq!(p.g_bar, vec![1.0, 0.0]);
        let dense = p.operator.selector().to_dense();
        assert_eq!(dense[(0, 0)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn tie_at_threshold_stays_zero() {
        assert_eq!(clip_soft_threshold(0.2, 0.2, 10.0), 0.0);
        assert_eq!(clip_soft_threshold(-0.2, 0.2, 10.0), 0.0);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let y = CMatrix::from_fn(3, 5, |i, j| Complex64::new((i * j) as f64 * 0.3, 1.0 - i as f64));
        let z = CMatrix::from_fn(3, 5, |i, j| Complex64::new(1.0 + j as f64 * 0.1, i as f64 * 0.2));
        let p = build_subproblem(&y, &z, 1.0, 10.0).unwrap();
        let mut b = vec![0.0; p.dim()];
        p.operator.apply_transpose(&p.g_bar, &mut b);
        let lam = b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let p = RealSplitProblem { lambda2: lam, ..p };
        let warm = CVector::from_element(3, Complex64::new(0.5, -0.5));
        let sol = solve(&p, SolveOptions::default(), Some(&warm)).unwrap();
        assert!(sol.gamma.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn shape_and_data_errors() {
        let y = CMatrix::zeros(2, 3);
        let z = CMatrix::zeros(3, 2);
        assert!(matches!(build_subproblem(&y, &z, 0.2, 1.0), Err(Error::Dimension(_))));
        let p = identity_problem(vec![f64::NAN, 1.0], 0.2, 1.0);
        assert!(matches!(solve(&p, SolveOptions::default(), None), Err(Error::InvalidInput(_))));
        let p = identity_problem(vec![1.0, 1.0], 0.2, 1.0);
        let warm = CVector::zeros(3);
        assert!(matches!(solve(&p, SolveOptions::default(), Some(&warm)), Err(Error::Dimension(_))));
    }

    #[test]
    fn iteration_cap_reports_nonconverged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.99, 0.99, 1.0]);
        let p = RealSplitProblem::new(vec![3.0, -2.0], DenseOperator(a), 0.01, 100.0).unwrap();
        let sol = solve(&p, SolveOptions { tol: 1e-14, max_iter: 3 }, None).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(sol.kkt_residual > 1e-14);
    }
}
