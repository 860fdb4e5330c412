//! Potentials, boundary conditions and the truncation operators used by the
//! comparison arguments.

use crate::error::{Error, Result};
use crate::matcore::{
    self, hermitian_eigen, hermitian_part, identity, singular_values, spectral_map, CMat,
    HermMatrix,
};

/// Hermitian matrix potential, piecewise constant on a uniform grid.
///
/// Cell `i` covers `[i h, (i+1) h)` and carries `cells[i]`; the potential is
/// identically zero for `x >= x_max = cells.len() * h`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialGrid {
    n: usize,
    h: f64,
    cells: Vec<HermMatrix>,
}

/// Number of cells covering `[0, x_max]` at spacing close to `h`, and the
/// adjusted spacing that makes `x_max` land on a node.
fn cell_layout(x_max: f64, h: f64) -> Result<(usize, f64)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
    }
    if !(x_max >= 0.0) || !x_max.is_finite() {
        return Err(Error::InvalidArgument(format!("x_max must be nonnegative, got {x_max}")));
    }
    let count = (x_max / h).round() as usize;
    if count == 0 {
        return Ok((0, h));
    }
    Ok((count, x_max / count as f64))
}

impl PotentialGrid {
    pub fn from_cells(n: usize, h: f64, cells: Vec<HermMatrix>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
        }
        if let Some(bad) = cells.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: bad.dim() });
        }
        Ok(PotentialGrid { n, h, cells })
    }

    /// `V = 0` represented on `[0, x_max]`.
    pub fn zero(n: usize, h: f64, x_max: f64) -> Result<Self> {
        let (count, h) = cell_layout(x_max, h)?;
        Ok(PotentialGrid { n, h, cells: vec![HermMatrix::zeros(n); count] })
    }

    /// Samples `f` at the cell midpoints.
    pub fn from_fn(n: usize, x_max: f64, h: f64, f: impl Fn(f64) -> CMat) -> Result<Self> {
        let (count, h) = cell_layout(x_max, h)?;
        let mut cells = Vec::with_capacity(count);
        for i in 0..count {
            let v = f((i as f64 + 0.5) * h);
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.nrows() });
            }
            cells.push(HermMatrix::new(v));
        }
        Ok(PotentialGrid { n, h, cells })
    }

    /// Constant `depth` on `[0, width)`; cells straddling `width` get the
    /// overlap-weighted average.
    pub fn square_well(depth: &HermMatrix, width: f64, x_max: f64, h: f64) -> Result<Self> {
        let n = depth.dim();
        let (count, h) = cell_layout(x_max.max(width), h)?;
        let cells = (0..count)
            .map(|i| depth.scale(overlap(i as f64 * h, (i + 1) as f64 * h, 0.0, width) / h))
            .collect();
        Ok(PotentialGrid { n, h, cells })
    }

    /// Channel `j` carries the scalar well `depths[j]` on `[0, widths[j])`.
    pub fn diagonal_wells(depths: &[f64], widths: &[f64], x_max: f64, h: f64) -> Result<Self> {
        if depths.len() != widths.len() {
            return Err(Error::DimensionMismatch { expected: depths.len(), found: widths.len() });
        }
        let n = depths.len();
        let reach = widths.iter().copied().fold(x_max, f64::max);
        let (count, h) = cell_layout(reach, h)?;
        let cells = (0..count)
            .map(|i| {
                let a = i as f64 * h;
                let diag: Vec<f64> = depths
                    .iter()
                    .zip(widths)
                    .map(|(&d, &w)| d * overlap(a, a + h, 0.0, w) / h)
                    .collect();
                HermMatrix::from_real_diag(&diag)
            })
            .collect();
        Ok(PotentialGrid { n, h, cells })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn x_max(&self) -> f64 {
        self.cells.len() as f64 * self.h
    }

    pub fn cells(&self) -> &[HermMatrix] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &HermMatrix {
        &self.cells[i]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    /// Value of the piecewise-constant potential at `x` (right-continuous).
    pub fn value_at(&self, x: f64) -> CMat {
        if x < 0.0 || x >= self.x_max() {
            return matcore::zeros(self.n);
        }
        let i = ((x / self.h).floor() as usize).min(self.cells.len() - 1);
        self.cells[i].as_matrix().clone()
    }

    /// Exact `(1/(b-a)) * integral_a^b V`.
    pub fn average_over(&self, a: f64, b: f64) -> CMat {
        let mut acc = matcore::zeros(self.n);
        if b <= a {
            return self.value_at(a);
        }
        let lo = (a.max(0.0) / self.h).floor() as usize;
        let hi = ((b / self.h).ceil() as usize).min(self.cells.len());
        for i in lo..hi {
            let w = overlap(i as f64 * self.h, (i + 1) as f64 * self.h, a, b);
            if w > 0.0 {
                acc += self.cells[i].as_matrix().scale(w);
            }
        }
        acc.scale(1.0 / (b - a))
    }

    /// `integral_0^inf V dx`, exact for the piecewise-constant representation.
    pub fn integral(&self) -> CMat {
        let mut acc = matcore::zeros(self.n);
        for c in &self.cells {
            acc += c.as_matrix();
        }
        acc.scale(self.h)
    }

    pub fn integral_trace(&self) -> f64 {
        self.cells.iter().map(|c| c.trace()).sum::<f64>() * self.h
    }

    /// `integral |V(x)| dx` with the operator norm.
    pub fn integral_abs(&self) -> f64 {
        self.cells.iter().map(|c| c.op_norm()).sum::<f64>() * self.h
    }

    /// `integral x |V(x)| dx` with the operator norm.
    pub fn first_moment_abs(&self) -> f64 {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, c)| self.midpoint(i) * c.op_norm())
            .sum::<f64>()
            * self.h
    }

    /// `sup_x` of the largest eigenvalue of the negative part.
    pub fn sup_negative_part(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| (-c.eigenvalues()[0]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.cells.iter().map(|c| c.op_norm()).fold(0.0, f64::max)
    }

    /// Sup-norm distance; the shorter grid is padded with zeros. Grids must
    /// share `n` and `h`.
    pub fn sup_distance(&self, other: &PotentialGrid) -> f64 {
        assert_eq!(self.n, other.n);
        let len = self.cells.len().max(other.cells.len());
        let zero = HermMatrix::zeros(self.n);
        (0..len)
            .map(|i| {
                let a = self.cells.get(i).unwrap_or(&zero);
                let b = other.cells.get(i).unwrap_or(&zero);
                singular_values(&(a.as_matrix() - b.as_matrix()))[0]
            })
            .fold(0.0, f64::max)
    }

    /// Same values on a longer grid (zeros appended) so that `x_max >= reach`.
    pub fn extended_to(&self, reach: f64) -> PotentialGrid {
        let mut cells = self.cells.clone();
        let count = (reach / self.h).ceil() as usize;
        while cells.len() < count {
            cells.push(HermMatrix::zeros(self.n));
        }
        PotentialGrid { n: self.n, h: self.h, cells }
    }

    /// Drops trailing cells whose operator norm is below `tol`.
    pub fn trimmed(&self, tol: f64) -> PotentialGrid {
        let mut cells = self.cells.clone();
        while cells.last().is_some_and(|c| c.op_norm() < tol) {
            cells.pop();
        }
        PotentialGrid { n: self.n, h: self.h, cells }
    }

    pub fn map_cells(&self, f: impl Fn(usize, &HermMatrix) -> HermMatrix) -> PotentialGrid {
        PotentialGrid {
            n: self.n,
            h: self.h,
            cells: self.cells.iter().enumerate().map(|(i, c)| f(i, c)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> PotentialGrid {
        self.map_cells(|_, c| c.scale(s))
    }
}

fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// Boundary matrices `(A, B)` of `-B^dagger psi(0) + A^dagger psi'(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPair {
    pub a: CMat,
    pub b: CMat,
}

/// Outcome of [`validate_boundary`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDiagnostics {
    /// Frobenius norm of `B^dagger A - A^dagger B`.
    pub selfadjoint_defect: f64,
    /// Smallest eigenvalue of `A^dagger A + B^dagger B`.
    pub gram_min_eigenvalue: f64,
    pub a_invertible: bool,
    pub valid: bool,
}

impl BoundaryDiagnostics {
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.selfadjoint_defect > BOUNDARY_TOL {
            parts.push(format!(
                "B^dagger A != A^dagger B (defect {:.3e})",
                self.selfadjoint_defect
            ));
        }
        if self.gram_min_eigenvalue <= BOUNDARY_TOL {
            parts.push(format!(
                "A^dagger A + B^dagger B is not positive (min eigenvalue {:.3e})",
                self.gram_min_eigenvalue
            ));
        }
        if parts.is_empty() {
            "valid".to_string()
        } else {
            parts.join("; ")
        }
    }
}

const BOUNDARY_TOL: f64 = 1e-10;

/// Checks `B^dagger A = A^dagger B` and `A^dagger A + B^dagger B > 0`.
pub fn validate_boundary(a: &CMat, b: &CMat) -> Result<BoundaryDiagnostics> {
    let n = a.nrows();
    for m in [a, b] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.ncols() });
        }
    }
    let scale = (a.norm() * b.norm()).max(1.0);
    let selfadjoint_defect = (b.adjoint() * a - a.adjoint() * b).norm() / scale;
    let gram = a.adjoint() * a + b.adjoint() * b;
    let (gvals, _) = hermitian_eigen(&gram);
    let gram_min_eigenvalue = gvals.first().copied().unwrap_or(0.0);
    let gmax = gvals.last().copied().unwrap_or(0.0).max(1.0);
    let sv = singular_values(a);
    let a_invertible = n > 0 && sv[n - 1] > 1e-10 * sv[0];
    let valid =
        selfadjoint_defect <= BOUNDARY_TOL && gram_min_eigenvalue > BOUNDARY_TOL * gmax;
    Ok(BoundaryDiagnostics {
        selfadjoint_defect,
        gram_min_eigenvalue: gram_min_eigenvalue / gmax.max(1.0),
        a_invertible,
        valid,
    })
}

impl BoundaryPair {
    /// Validated constructor.
    pub fn new(a: CMat, b: CMat) -> Result<Self> {
        let diag = validate_boundary(&a, &b)?;
        if !diag.valid {
            return Err(Error::InvalidBoundary(diag.describe()));
        }
        Ok(BoundaryPair { a, b })
    }

    /// Robin condition `psi'(0) = B psi(0)`.
    pub fn robin(b: &HermMatrix) -> Self {
        BoundaryPair { a: identity(b.dim()), b: b.as_matrix().clone() }
    }

    pub fn neumann(n: usize) -> Self {
        BoundaryPair { a: identity(n), b: matcore::zeros(n) }
    }

    pub fn dirichlet(n: usize) -> Self {
        BoundaryPair { a: matcore::zeros(n), b: identity(n) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn diagnostics(&self) -> BoundaryDiagnostics {
        validate_boundary(&self.a, &self.b).expect("square boundary matrices")
    }

    pub fn is_a_invertible(&self) -> bool {
        self.diagnostics().a_invertible
    }

    /// Orthonormal basis `U` of `Ran A` and `L = U^dagger B A^+ U`; the
    /// condition reads `psi(0) = U y` and `U^dagger psi'(0) = L y`.
    pub fn robin_part(&self) -> (CMat, CMat) {
        let (sigma, u, _) = matcore::sorted_svd(&self.a);
        let smax = sigma.first().copied().unwrap_or(0.0);
        let r = sigma.iter().filter(|&&s| smax > 0.0 && s > 1e-10 * smax).count();
        let basis = u.columns(0, r).into_owned();
        let a_pinv = matcore::moore_penrose(&self.a, Some(r)).unwrap_or_else(|_| matcore::zeros(self.dim()));
        let l = basis.adjoint() * &self.b * a_pinv * &basis;
        (basis, hermitian_part(&l))
    }

    /// True when `A = I` exactly.
    pub fn is_robin_form(&self) -> bool {
        (&self.a - identity(self.dim())).norm() == 0.0
    }

    /// `B` as a Hermitian matrix; only meaningful in Robin form.
    pub fn robin_b(&self) -> Result<HermMatrix> {
        let robin = if self.is_robin_form() { self.clone() } else { normalize_to_robin(self)? };
        Ok(HermMatrix::new(robin.b))
    }
}

/// Rewrites `(A, B)` as `(I, B A^-1)`.
pub fn normalize_to_robin(bc: &BoundaryPair) -> Result<BoundaryPair> {
    let diag = validate_boundary(&bc.a, &bc.b)?;
    if !diag.a_invertible {
        return Err(Error::SingularA);
    }
    let a_inv = bc.a.clone().try_inverse().ok_or(Error::SingularA)?;
    let b_new = &bc.b * a_inv;
    let defect = matcore::hermiticity_defect(&b_new);
    if defect > 1e-10 * b_new.norm().max(1.0) {
        return Err(Error::InvalidBoundary(format!(
            "B A^-1 is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(BoundaryPair { a: identity(bc.dim()), b: hermitian_part(&b_new) })
}

/// Diagonal representation with angles `theta_j` in `(0, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalBoundary {
    angles: Vec<f64>,
}

impl DiagonalBoundary {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        use std::f64::consts::PI;
        if let Some(t) = angles.iter().find(|&&t| !(t > 0.0 && t <= PI)) {
            return Err(Error::InvalidArgument(format!("boundary angle {t} outside (0, pi]")));
        }
        Ok(DiagonalBoundary { angles })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Channels with `theta = pi`.
    pub fn dirichlet_channels(&self) -> Vec<usize> {
        use std::f64::consts::PI;
        (0..self.angles.len()).filter(|&j| self.angles[j] == PI).collect()
    }

    /// `A = -diag(sin theta)`, `B = diag(cos theta)`.
    pub fn to_pair(&self) -> BoundaryPair {
        let sin: Vec<f64> = self.angles.iter().map(|t| -t.sin()).collect();
        let cos: Vec<f64> = self.angles.iter().map(|t| t.cos()).collect();
        let mut a = matcore::real_diag(&sin);
        // sin(pi) is ~1e-16; Dirichlet channels get an exact zero.
        for j in self.dirichlet_channels() {
            a[(j, j)] = matcore::cplx(0.0, 0.0);
        }
        BoundaryPair { a, b: matcore::real_diag(&cos) }
    }
}

/// Pointwise `V = V_+ - V_-` with `V_pm = (|V| pm V)/2`.
pub fn split_pos_neg(v: &PotentialGrid) -> (PotentialGrid, PotentialGrid) {
    let parts: Vec<(HermMatrix, HermMatrix)> = v
        .cells
        .iter()
        .map(|c| {
            let (vals, vecs) = c.eigen();
            (
                HermMatrix::new(spectral_map(&vals, &vecs, |l| l.max(0.0))),
                HermMatrix::new(spectral_map(&vals, &vecs, |l| (-l).max(0.0))),
            )
        })
        .collect();
    let (pos, neg): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    (
        PotentialGrid { n: v.n, h: v.h, cells: pos },
        PotentialGrid { n: v.n, h: v.h, cells: neg },
    )
}

/// `V_l = V_+ - chi_[0,l] V_-`.
pub fn truncate_negative(v: &PotentialGrid, l: f64) -> PotentialGrid {
    let (pos, neg) = split_pos_neg(v);
    let h = v.h;
    pos.map_cells(|i, p| {
        let frac = overlap(i as f64 * h, (i + 1) as f64 * h, 0.0, l) / h;
        p - &neg.cells[i].scale(frac)
    })
}

/// `V_p = chi_[0,p] V`.
pub fn truncate_support(v: &PotentialGrid, p: f64) -> PotentialGrid {
    let h = v.h;
    v.map_cells(|i, c| c.scale(overlap(i as f64 * h, (i + 1) as f64 * h, 0.0, p) / h))
}
