//! Small dense complex matrix kernels.
//!
//! Everything here works on `n x n` matrices with `n` in the single digits, so
//! full SVDs and eigendecompositions are used freely.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;

/// Hermiticity tolerance applied after symmetrization.
pub const TOL_HERM: f64 = 1e-12;
/// Relative singular-value cut used by [`moore_penrose`] without a rank hint.
pub const PINV_REL_TOL: f64 = 1e-10;

#[inline]
pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn real_diag(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { cplx(values[i], 0.0) } else { cplx(0.0, 0.0) })
}

/// Builds a matrix from real row-major entries.
pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| cplx(rows[i][j], 0.0))
}

/// `(M + M^dagger) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Frobenius norm of `M - M^dagger`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

fn ensure_square(m: &CMat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    sorted_svd(m).0
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Full SVD with singular triplets sorted by decreasing singular value.
/// Returns `(sigma, U, V)` with `M = U diag(sigma) V^dagger`.
///
/// One-sided Jacobi: columns of `M V` are orthogonalized by plane rotations.
/// Small singular values keep full relative accuracy, which nalgebra's
/// bidiagonal routine does not deliver for nearly rank-deficient complex input.
pub fn sorted_svd(m: &CMat) -> (Vec<f64>, CMat, CMat) {
    let n = ensure_square(m).expect("square matrix");
    let mut a = m.clone();
    let mut v = identity(n);
    let eps = f64::EPSILON;
    for _ in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..n {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)] * phase;
                        mat[(r, p)] = xp * c - xq * s;
                        mat[(r, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v_sorted = CMat::from_fn(n, n, |r, c| v[(r, order[c])]);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let floor = (n as f64) * eps * smax;
    let mut u = CMat::zeros(n, n);
    let mut filled = 0;
    for (c, &j) in order.iter().enumerate() {
        if norms[j] > floor && norms[j] > 0.0 {
            u.set_column(c, &(a.column(j) / Complex64::from(norms[j])));
            filled = c + 1;
        }
    }
    // Complete U with Gram-Schmidt on unit vectors for roundoff-level columns.
    let mut e = 0;
    while filled < n && e < n {
        let mut w = CMat::zeros(n, 1);
        w[(e, 0)] = Complex64::from(1.0);
        for _ in 0..2 {
            for c in 0..filled {
                let proj = u.column(c).dotc(&w.column(0));
                let col = u.column(c).into_owned();
                w.column_mut(0).axpy(-proj, &col, Complex64::from(1.0));
            }
        }
        let nw = w.column(0).norm();
        if nw > 0.5 {
            u.set_column(filled, &(w.column(0) / Complex64::from(nw)));
            filled += 1;
        }
        e += 1;
    }
    (sigma, u, v_sorted)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Rebuilds `U f(D) U^dagger` from an eigen-decomposition.
pub fn spectral_map(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = vectors.nrows();
    let mut out = CMat::zeros(n, n);
    for (c, &lam) in values.iter().enumerate() {
        let col = vectors.column(c);
        let w = f(lam);
        out += (col * col.adjoint()).scale(w);
    }
    hermitian_part(&out)
}

/// Hermitian matrix, symmetrized on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "crate::io::MatrixRepr", try_from = "crate::io::MatrixRepr")]
pub struct HermMatrix(CMat);

impl HermMatrix {
    /// Symmetrizes `(M + M^dagger)/2` unconditionally.
    pub fn new(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "HermMatrix must be square");
        HermMatrix(hermitian_part(&m))
    }

    /// Like [`HermMatrix::new`], but rejects inputs whose anti-Hermitian part
    /// exceeds `tol * max(1, |M|)`.
    pub fn checked(m: CMat, tol: f64) -> Result<Self> {
        ensure_square(&m)?;
        let defect = hermiticity_defect(&m);
        if defect > tol * m.norm().max(1.0) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(HermMatrix::new(m))
    }

    pub fn zeros(n: usize) -> Self {
        HermMatrix(zeros(n))
    }

    pub fn identity(n: usize) -> Self {
        HermMatrix(identity(n))
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        HermMatrix(real_diag(values))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.0)
    }

    /// Ascending eigenvalues and matching orthonormal eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, CMat) {
        hermitian_eigen(&self.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn op_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        HermMatrix(self.0.scale(s))
    }
}

impl std::ops::Add for &HermMatrix {
    type Output = HermMatrix;
    fn add(self, rhs: &HermMatrix) -> HermMatrix {
        HermMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &HermMatrix {
    type Output = HermMatrix;
    fn sub(self, rhs: &HermMatrix) -> HermMatrix {
        HermMatrix(&self.0 - &rhs.0)
    }
}

/// Orthogonal projection together with its rank.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub matrix: CMat,
    pub rank: usize,
}

impl Projection {
    pub fn zero(n: usize) -> Self {
        Projection { matrix: zeros(n), rank: 0 }
    }

    /// Projection onto the span of the columns of `basis` (assumed orthonormal).
    pub fn from_orthonormal_columns(basis: &CMat) -> Self {
        let p = basis * basis.adjoint();
        Projection { matrix: hermitian_part(&p), rank: basis.ncols() }
    }

    /// Frobenius deviations `(|P^2 - P|, |P^dagger - P|)`.
    pub fn defects(&self) -> (f64, f64) {
        let p = &self.matrix;
        ((p * p - p).norm(), hermiticity_defect(p))
    }
}

/// Moore-Penrose inverse through a full SVD.
///
/// With `rank_hint = Some(r)` exactly `r` singular triplets are kept; the hint
/// is rejected when the `r`-th singular value is at roundoff level. Otherwise
/// singular values above `PINV_REL_TOL * sigma_max` are kept.
pub fn moore_penrose(m: &CMat, rank_hint: Option<usize>) -> Result<CMat> {
    let n = ensure_square(m)?;
    let (sigma, u, v) = sorted_svd(m);
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rank = match rank_hint {
        Some(r) => {
            if r > n {
                return Err(Error::InvalidArgument(format!(
                    "rank hint {r} exceeds matrix dimension {n}"
                )));
            }
            if r > 0 {
                let floor = 1e2 * f64::EPSILON * (n as f64) * smax;
                if smax == 0.0 || sigma[r - 1] <= floor {
                    let numerical = sigma.iter().filter(|&&s| s > floor).count();
                    return Err(Error::InconsistentRank { hint: r, numerical });
                }
            }
            r
        }
        None => sigma.iter().filter(|&&s| s > PINV_REL_TOL * smax && s > 0.0).count(),
    };
    let mut out = CMat::zeros(n, n);
    for i in 0..rank {
        let vi = v.column(i);
        let ui = u.column(i);
        out += (vi * ui.adjoint()).scale(1.0 / sigma[i]);
    }
    Ok(out)
}

/// Frobenius residuals of the four Penrose identities, in the order
/// `M X M = M`, `X M X = X`, `(M X)^dagger = M X`, `(X M)^dagger = X M`.
pub fn penrose_residuals(m: &CMat, x: &CMat) -> [f64; 4] {
    let mx = m * x;
    let xm = x * m;
    [
        (&mx * m - m).norm(),
        (&xm * x - x).norm(),
        hermiticity_defect(&mx),
        hermiticity_defect(&xm),
    ]
}

fn check_positive(values: &[f64]) -> Result<()> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// Unique positive square root of a Hermitian positive definite matrix.
pub fn positive_sqrt(m: &CMat) -> Result<CMat> {
    ensure_square(m)?;
    let (values, vectors) = hermitian_eigen(m);
    check_positive(&values)?;
    Ok(spectral_map(&values, &vectors, f64::sqrt))
}

/// `M^{-1/2}` for Hermitian positive definite `M`.
pub fn positive_inv_sqrt(m: &CMat) -> Result<CMat> {
    ensure_square(m)?;
    let (values, vectors) = hermitian_eigen(m);
    check_positive(&values)?;
    Ok(spectral_map(&values, &vectors, |v| 1.0 / v.sqrt()))
}

/// Projection onto the span of right singular vectors with `sigma < tol * sigma_max`.
pub fn kernel_projection(m: &CMat, tol: f64) -> Projection {
    let smax = op_norm(m);
    if smax == 0.0 {
        return Projection { matrix: identity(m.ncols()), rank: m.ncols() };
    }
    kernel_projection_below(m, tol * smax)
}

/// Projection onto the span of right singular vectors with `sigma < threshold`.
pub fn kernel_projection_below(m: &CMat, threshold: f64) -> Projection {
    let n = m.ncols();
    let (sigma, _u, v) = sorted_svd(m);
    let kernel: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] < threshold).collect();
    if kernel.is_empty() {
        return Projection::zero(n);
    }
    let basis = CMat::from_fn(n, kernel.len(), |r, c| v[(r, kernel[c])]);
    Projection::from_orthonormal_columns(&basis)
}
