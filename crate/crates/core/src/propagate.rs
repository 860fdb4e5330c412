//! Integration of `-psi'' + V psi = k^2 psi` for `n x n` matrix solutions.
//!
//! Each grid cell has a constant potential, so the first-order system
//! `(psi, psi')' = L (psi, psi')` with `L = [[0, I], [V - k^2, 0]]` is
//! autonomous inside a cell and the classical fourth-order Runge-Kutta step
//! reduces to the degree-four Taylor polynomial of `exp(step L)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matcore::{identity, CMat};
use crate::model::{BoundaryPair, PotentialGrid};

/// Integration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagateOptions {
    /// Runge-Kutta steps per potential cell.
    pub substeps: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions { substeps: 1 }
    }
}

impl PropagateOptions {
    pub fn with_substeps(substeps: usize) -> Self {
        PropagateOptions { substeps: substeps.max(1) }
    }
}

/// Matrix solution and its derivative sampled at `x_j = j * step`.
#[derive(Clone, Debug)]
pub struct MatrixSolution {
    k: Complex64,
    n: usize,
    step: f64,
    psi: Vec<CMat>,
    dpsi: Vec<CMat>,
}

impl MatrixSolution {
    pub fn new(k: Complex64, step: f64, psi: Vec<CMat>, dpsi: Vec<CMat>) -> Self {
        assert_eq!(psi.len(), dpsi.len());
        let n = psi.first().map_or(0, |m| m.nrows());
        MatrixSolution { k, n, step, psi, dpsi }
    }

    pub fn k(&self) -> Complex64 {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of sample nodes.
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn psi(&self, j: usize) -> &CMat {
        &self.psi[j]
    }

    pub fn dpsi(&self, j: usize) -> &CMat {
        &self.dpsi[j]
    }

    pub fn psi_all(&self) -> &[CMat] {
        &self.psi
    }

    pub fn dpsi_all(&self) -> &[CMat] {
        &self.dpsi
    }

    /// Right-multiplies every sample by `m`.
    pub fn times_right(&self, m: &CMat) -> MatrixSolution {
        MatrixSolution {
            k: self.k,
            n: self.n,
            step: self.step,
            psi: self.psi.iter().map(|p| p * m).collect(),
            dpsi: self.dpsi.iter().map(|p| p * m).collect(),
        }
    }

    pub fn scaled(&self, s: Complex64) -> MatrixSolution {
        MatrixSolution {
            k: self.k,
            n: self.n,
            step: self.step,
            psi: self.psi.iter().map(|p| p * s).collect(),
            dpsi: self.dpsi.iter().map(|p| p * s).collect(),
        }
    }

    /// Largest Frobenius deviation from `other` over shared nodes.
    pub fn max_deviation(&self, other: &MatrixSolution) -> f64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Working buffers for repeated steps with a constant cell matrix.
struct Stepper {
    a: CMat,
    b: CMat,
    c: CMat,
    d: CMat,
}

impl Stepper {
    fn new(n: usize) -> Self {
        Stepper {
            a: CMat::zeros(n, n),
            b: CMat::zeros(n, n),
            c: CMat::zeros(n, n),
            d: CMat::zeros(n, n),
        }
    }

    /// One RK4 step of signed length `h` for `psi'' = m psi`.
    fn step(&mut self, m: &CMat, h: f64, psi: &mut CMat, dpsi: &mut CMat) {
        m.mul_to(psi, &mut self.a);
        m.mul_to(dpsi, &mut self.b);
        m.mul_to(&self.a, &mut self.c);
        m.mul_to(&self.b, &mut self.d);
        let h2 = h * h / 2.0;
        let h3 = h * h * h / 6.0;
        let h4 = h * h * h * h / 24.0;
        for idx in 0..psi.len() {
            let (p, q) = (psi[idx], dpsi[idx]);
            let (a, b, c, d) = (self.a[idx], self.b[idx], self.c[idx], self.d[idx]);
            psi[idx] = p + q * h + a * h2 + b * h3 + c * h4;
            dpsi[idx] = q + a * h + b * h2 + c * h3 + d * h4;
        }
    }
}

fn cell_matrix(v: &PotentialGrid, i: usize, k2: Complex64) -> CMat {
    let mut m = v.cell(i).as_matrix().clone();
    for d in 0..v.n() {
        m[(d, d)] -= k2;
    }
    m
}

fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn non_finite(k: Complex64) -> Error {
    Error::NonFinite { k: format!("{k}") }
}

/// Forward integration from `x = 0` with the given initial data, storing
/// every sub-node.
pub fn propagate_forward(
    v: &PotentialGrid,
    k: Complex64,
    psi0: CMat,
    dpsi0: CMat,
    opts: PropagateOptions,
) -> Result<MatrixSolution> {
    let n = v.n();
    let r = opts.substeps.max(1);
    let step = v.h() / r as f64;
    let k2 = k * k;
    let mut stepper = Stepper::new(n);
    let mut psi = psi0;
    let mut dpsi = dpsi0;
    let total = v.num_cells() * r + 1;
    let mut out_psi = Vec::with_capacity(total);
    let mut out_dpsi = Vec::with_capacity(total);
    out_psi.push(psi.clone());
    out_dpsi.push(dpsi.clone());
    for i in 0..v.num_cells() {
        let m = cell_matrix(v, i, k2);
        for _ in 0..r {
            stepper.step(&m, step, &mut psi, &mut dpsi);
            out_psi.push(psi.clone());
            out_dpsi.push(dpsi.clone());
        }
        if !all_finite(&psi) || !all_finite(&dpsi) {
            return Err(non_finite(k));
        }
    }
    Ok(MatrixSolution::new(k, step, out_psi, out_dpsi))
}

/// Backward integration from `x_max` down to `0`; samples are returned in
/// increasing-`x` order.
pub fn propagate_backward(
    v: &PotentialGrid,
    k: Complex64,
    psi_end: CMat,
    dpsi_end: CMat,
    opts: PropagateOptions,
) -> Result<MatrixSolution> {
    let n = v.n();
    let r = opts.substeps.max(1);
    let step = v.h() / r as f64;
    let k2 = k * k;
    let mut stepper = Stepper::new(n);
    let mut psi = psi_end;
    let mut dpsi = dpsi_end;
    let total = v.num_cells() * r + 1;
    let mut out_psi = Vec::with_capacity(total);
    let mut out_dpsi = Vec::with_capacity(total);
    out_psi.push(psi.clone());
    out_dpsi.push(dpsi.clone());
    for i in (0..v.num_cells()).rev() {
        let m = cell_matrix(v, i, k2);
        for _ in 0..r {
            stepper.step(&m, -step, &mut psi, &mut dpsi);
            out_psi.push(psi.clone());
            out_dpsi.push(dpsi.clone());
        }
        if !all_finite(&psi) || !all_finite(&dpsi) {
            return Err(non_finite(k));
        }
    }
    out_psi.reverse();
    out_dpsi.reverse();
    Ok(MatrixSolution::new(k, step, out_psi, out_dpsi))
}

/// Endpoint values `(psi(0), psi'(0))` of a backward sweep, without storage.
pub fn backward_to_origin(
    v: &PotentialGrid,
    k: Complex64,
    psi_end: CMat,
    dpsi_end: CMat,
    opts: PropagateOptions,
) -> Result<(CMat, CMat)> {
    let r = opts.substeps.max(1);
    let step = v.h() / r as f64;
    let k2 = k * k;
    let mut stepper = Stepper::new(v.n());
    let mut psi = psi_end;
    let mut dpsi = dpsi_end;
    for i in (0..v.num_cells()).rev() {
        let m = cell_matrix(v, i, k2);
        for _ in 0..r {
            stepper.step(&m, -step, &mut psi, &mut dpsi);
        }
    }
    if !all_finite(&psi) || !all_finite(&dpsi) {
        return Err(non_finite(k));
    }
    Ok((psi, dpsi))
}

/// Regular solution: `phi(k, 0) = A`, `phi'(k, 0) = B`, on `[0, x_max]`.
pub fn regular_solution(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    k: Complex64,
    opts: PropagateOptions,
) -> Result<MatrixSolution> {
    check_dims(v, bc)?;
    propagate_forward(v, k, bc.a.clone(), bc.b.clone(), opts)
}

/// Jost solution divided by `exp(i k x_max)`, i.e. equal to
/// `exp(i k (x - x_max)) I` beyond the support. Avoids under/overflow of the
/// prefactor for large `|Im k| x_max`.
pub fn jost_solution_scaled(
    v: &PotentialGrid,
    k: Complex64,
    opts: PropagateOptions,
) -> Result<MatrixSolution> {
    check_upper_half_plane(k)?;
    let n = v.n();
    let ik = Complex64::i() * k;
    propagate_backward(v, k, identity(n), identity(n) * ik, opts)
}

/// Jost solution `f(k, x)`, equal to `exp(i k x) I` for `x >= x_max`.
pub fn jost_solution(
    v: &PotentialGrid,
    k: Complex64,
    opts: PropagateOptions,
) -> Result<MatrixSolution> {
    let scaled = jost_solution_scaled(v, k, opts)?;
    let factor = (Complex64::i() * k * v.x_max()).exp();
    if !(factor.re.is_finite() && factor.im.is_finite()) {
        return Err(non_finite(k));
    }
    Ok(scaled.scaled(factor))
}

/// `(f(k,0), f'(k,0))` divided by `exp(i k x_max)`.
pub fn jost_at_origin_scaled(
    v: &PotentialGrid,
    k: Complex64,
    opts: PropagateOptions,
) -> Result<(CMat, CMat)> {
    check_upper_half_plane(k)?;
    let n = v.n();
    let ik = Complex64::i() * k;
    backward_to_origin(v, k, identity(n), identity(n) * ik, opts)
}

fn check_upper_half_plane(k: Complex64) -> Result<()> {
    if k.im < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Jost solution requires Im k >= 0, got k = {k}"
        )));
    }
    Ok(())
}

fn check_dims(v: &PotentialGrid, bc: &BoundaryPair) -> Result<()> {
    if bc.dim() != v.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), found: bc.dim() });
    }
    Ok(())
}

/// `sin(k x) / k` and its derivative `cos(k x)`, with the `k -> 0` limit.
fn sinc_pair(k: Complex64, x: f64) -> (Complex64, Complex64) {
    let z = k * x;
    let s = if z.norm() < 1e-4 {
        // sin(z)/z = 1 - z^2/6 + z^4/120
        let z2 = z * z;
        Complex64::from(x) * (Complex64::from(1.0) - z2 / 6.0 + z2 * z2 / 120.0)
    } else {
        z.sin() / k
    };
    (s, z.cos())
}

/// Closed form for `V = 0`: `phi(k,x) = cos(kx) A + sin(kx)/k B`.
pub fn free_regular(bc: &BoundaryPair, k: Complex64, x: f64) -> (CMat, CMat) {
    let (s, c) = sinc_pair(k, x);
    let ksin = -(k * x).sin() * k;
    (&bc.a * c + &bc.b * s, &bc.a * ksin + &bc.b * c)
}

/// Matrix Wronskian `u^dagger v' - u'^dagger v` at node `j`.
pub fn wronskian(u: &MatrixSolution, v: &MatrixSolution, j: usize) -> CMat {
    u.psi(j).adjoint() * v.dpsi(j) - u.dpsi(j).adjoint() * v.psi(j)
}

/// Largest deviation of the Wronskian from its value at `x = 0`.
pub fn wronskian_drift(u: &MatrixSolution, v: &MatrixSolution) -> f64 {
    let w0 = wronskian(u, v, 0);
    (0..u.len().min(v.len()))
        .map(|j| (wronskian(u, v, j) - &w0).norm())
        .fold(0.0, f64::max)
}

/// Second-difference residual `|-psi'' + (V - k^2) psi|` at interior nodes
/// whose three-point stencil lies inside one cell.
pub fn equation_residual(v: &PotentialGrid, sol: &MatrixSolution) -> f64 {
    let r = ((v.h() / sol.step()).round() as usize).max(1);
    let k2 = sol.k() * sol.k();
    let s2 = sol.step() * sol.step();
    let mut worst = 0.0_f64;
    for j in 1..sol.len().saturating_sub(1) {
        if r > 1 && j % r == 0 {
            continue;
        }
        let cell = (j / r).min(v.num_cells().saturating_sub(1));
        let m = cell_matrix(v, cell, k2);
        let second = (sol.psi(j + 1) - sol.psi(j) * Complex64::from(2.0) + sol.psi(j - 1)).scale(1.0 / s2);
        let res: DMatrix<Complex64> = -second + m * sol.psi(j);
        worst = worst.max(res.norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{cplx, real_diag, HermMatrix};

    fn zero(n: usize, x_max: f64, h: f64) -> PotentialGrid {
        PotentialGrid::zero(n, h, x_max).unwrap()
    }

    #[test]
    fn free_regular_solution_matches_closed_form() {
        let v = zero(2, 3.0, 1e-3);
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, 0.5]));
        for k in [cplx(1.3, 0.0), cplx(0.4, 0.7), cplx(0.0, 2.0), cplx(0.0, 0.0)] {
            let sol = regular_solution(&v, &bc, k, PropagateOptions::default()).unwrap();
            for j in (0..sol.len()).step_by(250) {
                let (p, dp) = free_regular(&bc, k, sol.x(j));
                assert!((sol.psi(j) - &p).norm() < 1e-10 * (1.0 + p.norm()), "k={k} x={}", sol.x(j));
                assert!((sol.dpsi(j) - &dp).norm() < 1e-10 * (1.0 + dp.norm()), "k={k} x={}", sol.x(j));
            }
        }
    }

    #[test]
    fn scalar_robin_at_k_i_decays() {
        let v = zero(1, 4.0, 1e-3);
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        let sol = regular_solution(&v, &bc, cplx(0.0, 1.0), PropagateOptions::default()).unwrap();
        let last = sol.len() - 1;
        assert!((sol.psi(last)[(0, 0)].re - (-4.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn neumann_at_k_i_is_cosh() {
        let v = zero(2, 2.0, 1e-3);
        let sol = regular_solution(&v, &BoundaryPair::neumann(2), cplx(0.0, 1.0), Default::default())
            .unwrap();
        let last = sol.len() - 1;
        let expected = identity(2) * cplx(2f64.cosh(), 0.0);
        assert!((sol.psi(last) - expected).norm() < 1e-10);
    }

    #[test]
    fn free_jost_is_plane_wave() {
        let v = zero(2, 2.0, 1e-2);
        let k = cplx(0.7, 0.3);
        let f = jost_solution(&v, k, Default::default()).unwrap();
        for j in 0..f.len() {
            let e = (Complex64::i() * k * f.x(j)).exp();
            assert!((f.psi(j) - identity(2) * e).norm() < 1e-9);
        }
    }

    #[test]
    fn jost_rejects_lower_half_plane() {
        let v = zero(1, 1.0, 1e-2);
        assert!(jost_solution(&v, cplx(1.0, -0.1), Default::default()).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let v = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[1e6]), 3.0, 3.0, 1e-2)
            .unwrap();
        let r = regular_solution(&v, &BoundaryPair::neumann(1), cplx(0.0, 0.0), Default::default());
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn backward_then_forward_round_trip() {
        let v = PotentialGrid::square_well(
            &HermMatrix::new(crate::matcore::from_real_rows(&[&[-3.0, 1.0], &[1.0, -1.0]])),
            1.0,
            1.5,
            1e-3,
        )
        .unwrap();
        let k = cplx(0.5, 0.8);
        let f = jost_solution_scaled(&v, k, Default::default()).unwrap();
        let back = propagate_forward(&v, k, f.psi(0).clone(), f.dpsi(0).clone(), Default::default())
            .unwrap();
        let last = back.len() - 1;
        assert!((back.psi(last) - identity(2)).norm() < 1e-9);
        assert!((back.dpsi(last) - identity(2) * (Complex64::i() * k)).norm() < 1e-9);
    }

    #[test]
    fn residual_is_small_inside_cells() {
        let v = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[-4.0, 2.0]), 1.0, 2.0, 1e-2)
            .unwrap();
        let bc = BoundaryPair::robin(&HermMatrix::new(real_diag(&[0.3, -0.2])));
        let sol = regular_solution(&v, &bc, cplx(0.9, 0.2), PropagateOptions::with_substeps(4))
            .unwrap();
        assert!(equation_residual(&v, &sol) < 1e-4);
    }
}
