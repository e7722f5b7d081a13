//! Dense complex kernels: Hermitian inverse square root, SVD, Hermitian
//! solves and the Khatri-Rao selector `Φ = Zᵀ ⊙ I`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative eigenvalue floor applied before taking `λ^{-1/2}`.
pub const EIGEN_FLOOR_REL: f64 = 1e-14;

pub fn ensure_finite_matrix(m: &CMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

pub fn ensure_finite_vector(v: &CVector, what: &str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

/// Column-major vectorization, `vec(X)`.
pub fn vec(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// `P = (Z Zᴴ + μ² I)^{-1/2}` through the eigendecomposition of `Z Zᴴ`.
///
/// Eigenvalues of `Z Zᴴ + μ² I` below `1e-14 · λ_max` are raised to that
/// floor before the power is taken.
pub fn hermitian_inv_sqrt(z: &CMatrix, mu: f64) -> Result<CMatrix> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("smoothing parameter must be positive and finite, got {mu}")));
    }
    ensure_finite_matrix(z, "Z")?;
    let m = z.nrows();
    let gram = hermitian_part(&(z * z.adjoint()));
    let eig = SymmetricEigen::new(gram);
    let shifted: Vec<f64> = eig.eigenvalues.iter().map(|&l| l + mu * mu).collect();
    let top = shifted.iter().cloned().fold(f64::MIN, f64::max);
    let floor = EIGEN_FLOOR_REL * top;
    let weights = CVector::from_iterator(m, shifted.iter().map(|&l| Complex64::new(l.max(floor).powf(-0.5), 0.0)));
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    Ok(hermitian_part(&(scaled * u.adjoint())))
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Thin singular value decomposition `X = L Σ Rᴴ`.
///
/// `left` is `M×r`, `right` is `T×r` with `r = min(M, T)`; singular values
/// are sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: CMatrix,
    pub singular_values: Vec<f64>,
    pub right: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let mut l = self.left.clone();
        for (j, mut col) in l.column_iter_mut().enumerate() {
            col *= Complex64::new(self.singular_values[j], 0.0);
        }
        l * self.right.adjoint()
    }

    /// Count of singular values above `rel_tol · σ_max`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|&&s| s > rel_tol * top).count()
    }
}

pub fn svd(x: &CMatrix) -> Result<Svd> {
    ensure_finite_matrix(x, "matrix")?;
    let dec = SVD::try_new(x.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let left = dec.u.ok_or_else(|| Error::Numerical("SVD missing left vectors".into()))?;
    let right = dec.v_t.ok_or_else(|| Error::Numerical("SVD missing right vectors".into()))?.adjoint();
    Ok(Svd { left, singular_values: dec.singular_values.iter().copied().collect(), right })
}

/// Singular values only, descending.
pub fn singular_values(x: &CMatrix) -> Result<Vec<f64>> {
    ensure_finite_matrix(x, "matrix")?;
    let dec = SVD::try_new(x.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    Ok(dec.singular_values.iter().copied().collect())
}

/// Solves `A X = B` for Hermitian positive-definite `A`, falling back to LU
/// when the Cholesky factorization breaks down.
pub fn solve_hpd(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::dim(format!(
            "system {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if let Some(chol) = Cholesky::new(hermitian_part(a)) {
        return Ok(chol.solve(b));
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Columnwise Kronecker product `B ⊙ A`: column `j` is `b_j ⊗ a_j`.
pub fn khatri_rao(b: &CMatrix, a: &CMatrix) -> Result<CMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::dim(format!("Khatri-Rao factors have {} and {} columns", b.ncols(), a.ncols())));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(ra * rb, a.ncols());
    for j in 0..a.ncols() {
        for p in 0..rb {
            for q in 0..ra {
                out[(p * ra + q, j)] = b[(p, j)] * a[(q, j)];
            }
        }
    }
    Ok(out)
}

/// The selector `Φ = Zᵀ ⊙ I` (size `MT×M`), applied without forming it.
///
/// Column `m` of `Φ` holds `Z[m, t]` at row `t·M + m` and zeros elsewhere,
/// so `Φγ = vec(diag(γ) Z)`.
#[derive(Debug, Clone, Copy)]
pub struct StructuredSelector<'a> {
    source: &'a CMatrix,
}

impl<'a> StructuredSelector<'a> {
    pub fn new(source: &'a CMatrix) -> Self {
        Self { source }
    }

    pub fn source(&self) -> &'a CMatrix {
        self.source
    }

    pub fn nrows(&self) -> usize {
        self.source.nrows() * self.source.ncols()
    }

    pub fn ncols(&self) -> usize {
        self.source.nrows()
    }

    pub fn apply(&self, gamma: &CVector) -> Result<CVector> {
        let mut out = CVector::zeros(self.nrows());
        self.apply_into(gamma.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    pub fn adjoint_apply(&self, r: &CVector) -> Result<CVector> {
        let mut out = CVector::zeros(self.ncols());
        self.adjoint_apply_into(r.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    pub(crate) fn apply_into(&self, gamma: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let m = self.ncols();
        if gamma.len() != m || out.len() != self.nrows() {
            return Err(Error::dim(format!("selector expects gamma of length {m}, got {}", gamma.len())));
        }
        for (col, chunk) in self.source.column_iter().zip(out.chunks_exact_mut(m)) {
            for ((o, z), g) in chunk.iter_mut().zip(col.iter()).zip(gamma) {
                *o = g * z;
            }
        }
        Ok(())
    }

    pub(crate) fn adjoint_apply_into(&self, r: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let m = self.ncols();
        if r.len() != self.nrows() || out.len() != m {
            return Err(Error::dim(format!(
                "selector adjoint expects a vector of length {}, got {}",
                self.nrows(),
                r.len()
            )));
        }
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (col, chunk) in self.source.column_iter().zip(r.chunks_exact(m)) {
            for ((o, z), v) in out.iter_mut().zip(col.iter()).zip(chunk) {
                *o += z.conj() * v;
            }
        }
        Ok(())
    }

    /// Squared column norms of `Φ`, i.e. the diagonal of `ΦᴴΦ`.
    pub fn column_energies(&self) -> Vec<f64> {
        self.source.row_iter().map(|row| row.iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// Dense `MT×M` matrix; only meant for checking the structured path.
    pub fn to_dense(&self) -> CMatrix {
        let (m, t) = self.source.shape();
        let mut out = CMatrix::zeros(m * t, m);
        for tt in 0..t {
            for mm in 0..m {
                out[(tt * m + mm, mm)] = self.source[(mm, tt)];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, k: usize) -> CMatrix {
        CMatrix::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_vector(rng: &mut impl Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn inv_sqrt_of_zero_matrix() {
        let p = hermitian_inv_sqrt(&CMatrix::zeros(3, 5), 2.0).unwrap();
        let expected = CMatrix::identity(3, 3).scale(0.5);
        assert!((p - expected).norm() < 1e-14);
    }

    #[test]
    fn inv_sqrt_of_identity() {
        let p = hermitian_inv_sqrt(&CMatrix::identity(4, 4), 1.0).unwrap();
        let expected = CMatrix::identity(4, 4).scale(1.0 / 2f64.sqrt());
        assert!((p - expected).norm() < 1e-14);
    }

    #[test]
    fn inv_sqrt_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_matrix(&mut rng, 4, 6);
        let mu = 0.5;
        let p = hermitian_inv_sqrt(&z, mu).unwrap();
        let g = &z * z.adjoint() + CMatrix::identity(4, 4).scale(mu * mu);
        let resid = (&p * &p * g - CMatrix::identity(4, 4)).norm();
        assert!(resid <= 1e-10, "{resid}");
        assert!((&p - p.adjoint()).norm() <= 1e-12);
    }

    #[test]
    fn inv_sqrt_rejects_bad_input() {
        let mut z = CMatrix::zeros(2, 2);
        assert!(matches!(hermitian_inv_sqrt(&z, 0.0), Err(Error::InvalidInput(_))));
        z[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(hermitian_inv_sqrt(&z, 1.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn selector_small_expansion() {
        let z = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(2., 0.), c(3., 0.), c(4., 0.)]);
        let (g1, g2) = (c(0.5, -1.0), c(2.0, 0.25));
        let out = StructuredSelector::new(&z).apply(&CVector::from_vec(vec![g1, g2])).unwrap();
        let expected = [g1 * 1.0, g2 * 3.0, g1 * 2.0, g2 * 4.0];
        assert_eq!(out.as_slice(), &expected);
    }

    #[test]
    fn selector_zero_and_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_matrix(&mut rng, 3, 4);
        let sel = StructuredSelector::new(&z);
        assert!(sel.apply(&CVector::zeros(3)).unwrap().iter().all(|v| *v == c(0., 0.)));
        let ones = CVector::from_element(3, c(1., 0.));
        assert_eq!(sel.apply(&ones).unwrap(), vec(&z));
    }

    #[test]
    fn selector_adjoint_small() {
        let z = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(2., 0.), c(3., 0.), c(4., 0.)]);
        let r = CVector::from_vec(vec![c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let out = StructuredSelector::new(&z).adjoint_apply(&r).unwrap();
        assert_eq!(out.as_slice(), &[c(1., 0.), c(0., 0.)]);
        assert!(StructuredSelector::new(&z).adjoint_apply(&CVector::zeros(4)).unwrap().iter().all(|v| *v == c(0., 0.)));
    }

    #[test]
    fn selector_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = random_matrix(&mut rng, 3, 5);
        let sel = StructuredSelector::new(&z);
        for _ in 0..10 {
            let g = random_vector(&mut rng, 3);
            let r = random_vector(&mut rng, 15);
            let lhs = sel.apply(&g).unwrap().dotc(&r);
            let rhs = g.dotc(&sel.adjoint_apply(&r).unwrap());
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn selector_length_mismatch() {
        let z = CMatrix::zeros(3, 2);
        let sel = StructuredSelector::new(&z);
        assert!(matches!(sel.apply(&CVector::zeros(2)), Err(Error::Dimension(_))));
        assert!(matches!(sel.adjoint_apply(&CVector::zeros(5)), Err(Error::Dimension(_))));
    }

    #[test]
    fn selector_matches_khatri_rao() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 1..=4 {
            for t in 1..=4 {
                let z = random_matrix(&mut rng, m, t);
                let dense = khatri_rao(&z.transpose(), &CMatrix::identity(m, m)).unwrap();
                let sel = StructuredSelector::new(&z);
                assert_eq!(sel.to_dense(), dense);
                let g = random_vector(&mut rng, m);
                assert!((sel.apply(&g).unwrap() - &dense * &g).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn svd_diagonal_and_zero() {
        let d = CMatrix::from_row_slice(2, 2, &[c(3., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
        let s = svd(&d).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
        let s0 = svd(&CMatrix::zeros(3, 4)).unwrap();
        assert!(s0.singular_values.iter().all(|&v| v == 0.0));
        assert_eq!(s0.numerical_rank(1e-10), 0);
    }

    #[test]
    fn svd_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 4, 8);
        let s = svd(&x).unwrap();
        assert!((s.reconstruct() - &x).norm() / x.norm() <= 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let eye = CMatrix::identity(4, 4);
        assert!((s.left.adjoint() * &s.left - &eye).norm() < 1e-12);
        assert!((s.right.adjoint() * &s.right - &eye).norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut x = CMatrix::zeros(2, 3);
        x[(1, 2)] = c(0.0, f64::INFINITY);
        assert!(matches!(svd(&x), Err(Error::InvalidInput(_))));
    }
}
