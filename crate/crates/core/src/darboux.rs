//! Removal and addition of a bound state.
//!
//! Removal of the state `(kappa, C, Phi)` maps `(V, A, B)` to
//!
//! ```text
//! V~ = V + 2 d/dx [Phi W^+ Phi^dagger],   A~ = A,   B~ = B + A C^2 A^dagger A,
//! ```
//!
//! with `W(x) = integral_x^inf Phi^dagger Phi`. Addition of a state with
//! normalization matrix `C` at `kappa` (Robin form only) is the inverse map
//!
//! ```text
//! V_new = V - 2 d/dx [Y (I + C Z C)^-1 Y^dagger],   B_new = B - C^2,
//! ```
//!
//! with `Y = phi(i kappa, .) C` and `Z(x) = integral_0^x phi^dagger phi`.
//!
//! Both brackets are differentiated analytically at the sub-nodes of the
//! bound-state grid and the new potential cells are the Boole-rule averages
//! of the derivative. A fourth-order finite difference of the bracket is
//! evaluated alongside as a check.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matcore::{
    self, hermitian_part, identity, kernel_projection_below, moore_penrose, singular_values, CMat,
    HermMatrix, Projection,
};
use crate::model::{validate_boundary, BoundaryDiagnostics, BoundaryPair, PotentialGrid};
use crate::propagate::{self, MatrixSolution, PropagateOptions};
use crate::quad::{self, Sampled};
use crate::spectral::{self, BoundState, SpectralOptions};

/// Allowed gap between the analytic and finite-difference bracket derivatives.
pub const FD_TOL: f64 = 1e-6;
/// Allowed size of `V~` beyond the support of `V`.
pub const SUPPORT_TOL: f64 = 1e-8;
/// Allowed deviation of the limiting bracket from `2 kappa P`.
pub const BRACKET_TOL: f64 = 1e-6;
/// Allowed round-trip and trace-identity residuals for [`add_bound_state`].
pub const ROUND_TRIP_TOL: f64 = 1e-6;

fn re(x: f64) -> Complex64 {
    Complex64::from(x)
}

/// Sub-steps per cell of the grid on which `state` was sampled.
fn substeps_of(v: &PotentialGrid, state: &BoundState) -> Result<usize> {
    let r = (v.h() / state.phi.step()).round() as usize;
    let same_grid = r > 0
        && state.phi.len() == v.num_cells() * r + 1
        && (state.x_max - v.x_max()).abs() <= 1e-9 * v.x_max().max(1.0);
    if !same_grid {
        return Err(Error::Precondition("bound state was not computed on this potential grid".into()));
    }
    if r < 4 || r % 2 != 0 {
        return Err(Error::Precondition(format!(
            "bound state must be sampled with an even number >= 4 of sub-steps per cell, got {r}"
        )));
    }
    Ok(r)
}

/// Mean over cell `i` of a quantity sampled at the `r + 1` sub-nodes of the
/// cell: composite Boole rule when `r` is a multiple of four, Simpson otherwise.
fn cell_average(samples: &[CMat], i: usize, r: usize) -> CMat {
    let start = i * r;
    let mut acc = CMat::zeros(samples[start].nrows(), samples[start].ncols());
    if r % 4 == 0 {
        for g in (0..r).step_by(4) {
            let s = &samples[start + g..=start + g + 4];
            acc += (&s[0] + &s[4]) * re(7.0) + (&s[1] + &s[3]) * re(32.0) + &s[2] * re(12.0);
        }
        acc * re(1.0 / (22.5 * r as f64))
    } else {
        for g in (0..r).step_by(2) {
            let s = &samples[start + g..=start + g + 2];
            acc += &s[0] + &s[1] * re(4.0) + &s[2];
        }
        acc * re(1.0 / (3.0 * r as f64))
    }
}

/// Largest gap between `dk` and the five-point central difference of `k` at
/// cell midpoints, where the stencil stays inside one cell.
fn fd_deviation(k: &[CMat], dk: &[CMat], step: f64, cells: usize, r: usize) -> f64 {
    (0..cells)
        .map(|i| {
            let j = i * r + r / 2;
            let fd = (&k[j - 2] - &k[j - 1] * re(8.0) + &k[j + 1] * re(8.0) - &k[j + 2])
                * re(1.0 / (12.0 * step));
            (fd - &dk[j]).norm()
        })
        .fold(0.0, f64::max)
}

/// `Phi W^+ Phi^dagger` and its derivative.
fn bracket_at(phi: &CMat, dphi: &CMat, w_pinv: &CMat) -> (CMat, CMat) {
    let k = phi * w_pinv * phi.adjoint();
    let half = dphi * w_pinv * phi.adjoint();
    let dk = &half + half.adjoint() + &k * &k;
    (hermitian_part(&k), hermitian_part(&dk))
}

/// `W^+` with the theory rank `m`, plus the relative size of the first
/// discarded singular value.
fn pinv_rank(w: &CMat, m: usize, x: f64) -> Result<(CMat, f64)> {
    let pinv = moore_penrose(w, Some(m))
        .map_err(|e| Error::TransformationInstability(format!("W(x) at x = {x:.6}: {e}")))?;
    let s = singular_values(w);
    let excess = if s.len() > m && s[0] > 0.0 { s[m] / s[0] } else { 0.0 };
    Ok((pinv, excess))
}

/// `W(x) = integral_x^inf Phi^dagger Phi`.
///
/// Inside `[0, x_max]` the stored samples are joined by cubic Hermite
/// interpolation with `W' = -Phi^dagger Phi`; beyond, the tail is exact.
pub fn w_matrix(state: &BoundState, x: f64) -> CMat {
    let kappa = state.kappa;
    if x >= state.x_max {
        let e = (-2.0 * kappa * (x - state.x_max)).exp();
        return &state.tail.adjoint() * &state.tail * re(e / (2.0 * kappa));
    }
    let s = state.phi.step();
    let t = (x.max(0.0) / s).min((state.w.len() - 1) as f64);
    let j = (t.floor() as usize).min(state.w.len() - 2);
    let u = t - j as f64;
    let d = |i: usize| -(state.phi.psi(i).adjoint() * state.phi.psi(i));
    let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
    let h10 = u.powi(3) - 2.0 * u * u + u;
    let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
    let h11 = u.powi(3) - u * u;
    let w = &state.w[j] * re(h00)
        + d(j) * re(h10 * s)
        + &state.w[j + 1] * re(h01)
        + d(j + 1) * re(h11 * s);
    hermitian_part(&w)
}

/// Limiting bracket `Phi W^+ Phi^dagger` beyond the support.
#[derive(Clone, Debug)]
pub struct BracketLimit {
    pub bracket: CMat,
    /// Projection onto `Ker J(i kappa)^dagger`.
    pub projection: Projection,
    /// `|bracket - 2 kappa P|`.
    pub residual: f64,
    pub trace: f64,
    /// `rank P == m`.
    pub rank_matches: bool,
}

impl BracketLimit {
    pub fn passed(&self) -> bool {
        self.residual < BRACKET_TOL && self.rank_matches
    }
}

/// Compares the constant bracket beyond the support with `2 kappa P`,
/// `P` the kernel projection of `J(i kappa)^dagger`.
pub fn bracket_limit_check(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    state: &BoundState,
    tol_rank: f64,
) -> Result<BracketLimit> {
    let kappa = state.kappa;
    let t = &state.tail;
    let w = t.adjoint() * t * re(1.0 / (2.0 * kappa));
    let (w_pinv, _) = pinv_rank(&w, state.m, v.x_max())?;
    let bracket = hermitian_part(&(t * w_pinv * t.adjoint()));
    let (j, scale) = spectral::jost_matrix_on_axis(v, bc, kappa)?;
    let projection = kernel_projection_below(&j.adjoint(), tol_rank * scale);
    let residual = (&bracket - &projection.matrix * re(2.0 * kappa)).norm();
    Ok(BracketLimit {
        trace: matcore::trace_re(&bracket),
        rank_matches: projection.rank == state.m,
        bracket,
        projection,
        residual,
    })
}

/// Diagnostics attached to every removal.
#[derive(Clone, Debug)]
pub struct RemovalChecks {
    /// Analytic vs finite-difference bracket derivative.
    pub fd_deviation: f64,
    /// Sup of the bracket derivative on `(x_max, 2 x_max]`.
    pub tail_sup: f64,
    /// Largest `sigma_{m+1}(W) / sigma_1(W)` over the grid.
    pub rank_excess: f64,
    pub bracket: BracketLimit,
    pub boundary: BoundaryDiagnostics,
}

impl RemovalChecks {
    pub fn passed(&self) -> bool {
        self.fd_deviation < FD_TOL
            && self.tail_sup < SUPPORT_TOL
            && self.bracket.passed()
            && self.boundary.valid
    }
}

/// Outcome of [`remove_bound_state`].
#[derive(Clone, Debug)]
pub struct RemovalResult {
    pub v_tilde: PotentialGrid,
    pub bc_tilde: BoundaryPair,
    pub removed: BoundState,
    /// `W(x_i)` at the potential grid nodes.
    pub w_samples: Vec<CMat>,
    /// `Phi W^+ Phi^dagger` at the potential grid nodes.
    pub bracket_samples: Vec<CMat>,
    pub checks: RemovalChecks,
}

fn tail_derivative_sup(state: &BoundState) -> Result<f64> {
    let kappa = state.kappa;
    let t = &state.tail;
    let base = t.adjoint() * t * re(1.0 / (2.0 * kappa));
    let mut worst = 0.0_f64;
    for i in 1..=64 {
        let d = state.x_max.max(1.0) * i as f64 / 64.0;
        if kappa * d > 300.0 {
            break;
        }
        let e = (-kappa * d).exp();
        let phi = t * re(e);
        let dphi = &phi * re(-kappa);
        let (w_pinv, _) = pinv_rank(&(&base * re(e * e)), state.m, state.x_max + d)?;
        worst = worst.max(bracket_at(&phi, &dphi, &w_pinv).1.norm());
    }
    Ok(worst)
}

/// Removes `states[index]` from `(V, A, B)`.
///
/// The state must come from [`spectral::find_bound_states`] (or
/// [`spectral::refine_state`]) on the same grid, sampled with an even number
/// of at least four sub-steps per cell.
pub fn remove_bound_state(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    states: &[BoundState],
    index: usize,
) -> Result<RemovalResult> {
    let state = states.get(index).ok_or_else(|| {
        Error::InvalidArgument(format!("state index {index} out of range ({} states)", states.len()))
    })?;
    let r = substeps_of(v, state)?;
    let step = state.phi.step();
    let len = state.phi.len();

    let mut ks = Vec::with_capacity(len);
    let mut dks = Vec::with_capacity(len);
    let mut rank_excess = 0.0_f64;
    for j in 0..len {
        let (w_pinv, excess) = pinv_rank(&state.w[j], state.m, j as f64 * step)?;
        rank_excess = rank_excess.max(excess);
        let (k, dk) = bracket_at(state.phi.psi(j), state.phi.dpsi(j), &w_pinv);
        ks.push(k);
        dks.push(dk);
    }
    if rank_excess > 1e-8 {
        return Err(Error::TransformationInstability(format!(
            "W(x) has rank above {} (relative excess {rank_excess:.3e})",
            state.m
        )));
    }

    let cells: Vec<HermMatrix> = (0..v.num_cells())
        .map(|i| HermMatrix::new(v.cell(i).as_matrix() + cell_average(&dks, i, r) * re(2.0)))
        .collect();
    let v_tilde = PotentialGrid::from_cells(v.n(), v.h(), cells)?;
    let c2 = &state.c * &state.c;
    let b_tilde = &bc.b + &bc.a * c2 * bc.a.adjoint() * &bc.a;
    let bc_tilde = BoundaryPair { a: bc.a.clone(), b: b_tilde };

    let checks = RemovalChecks {
        fd_deviation: fd_deviation(&ks, &dks, step, v.num_cells(), r),
        tail_sup: tail_derivative_sup(state)?,
        rank_excess,
        bracket: bracket_limit_check(v, bc, state, SpectralOptions::default().tol_rank)?,
        boundary: validate_boundary(&bc_tilde.a, &bc_tilde.b)?,
    };
    Ok(RemovalResult {
        v_tilde,
        bc_tilde,
        removed: state.clone(),
        w_samples: state.w.iter().step_by(r).cloned().collect(),
        bracket_samples: ks.into_iter().step_by(r).collect(),
        checks,
    })
}

/// Shared pieces of the perturbed regular solution on the state sub-grid.
struct Perturbation {
    phi: MatrixSolution,
    /// `Phi W^+` at every sub-node.
    phi_w: Vec<CMat>,
}

fn perturbation(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    state: &BoundState,
    k: Complex64,
) -> Result<Perturbation> {
    let r = substeps_of(v, state)?;
    let kk = k * k + state.kappa * state.kappa;
    if kk.norm() < 1e-8 * (1.0 + state.kappa * state.kappa) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} is at the removed eigenvalue +-i {}",
            state.kappa
        )));
    }
    let phi = propagate::regular_solution(v, bc, k, PropagateOptions::with_substeps(r))?;
    let step = state.phi.step();
    let phi_w = (0..state.phi.len())
        .map(|j| {
            let (w_pinv, _) = pinv_rank(&state.w[j], state.m, j as f64 * step)?;
            Ok(state.phi.psi(j) * w_pinv)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Perturbation { phi, phi_w })
}

/// Regular solution of the transformed problem,
/// `phi~ = phi + (k^2 + kappa^2)^-1 Phi W^+ [Phi'^dagger phi - Phi^dagger phi']`,
/// on the sub-grid of `state`. The derivative uses `(W^+)' = W^+ Phi^dagger Phi W^+`.
pub fn perturbed_regular_solution(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    state: &BoundState,
    k: Complex64,
) -> Result<MatrixSolution> {
    let p = perturbation(v, bc, state, k)?;
    let inv = re(1.0) / (k * k + state.kappa * state.kappa);
    let mut psi = Vec::with_capacity(p.phi.len());
    let mut dpsi = Vec::with_capacity(p.phi.len());
    for j in 0..p.phi.len() {
        let big = state.phi.psi(j);
        let dbig = state.phi.dpsi(j);
        let (f, df) = (p.phi.psi(j), p.phi.dpsi(j));
        let s = (dbig.adjoint() * f - big.adjoint() * df) * inv;
        let pw = &p.phi_w[j];
        let dpw = {
            let (w_pinv, _) = pinv_rank(&state.w[j], state.m, p.phi.x(j))?;
            dbig * &w_pinv + pw * big.adjoint() * big * &w_pinv
        };
        psi.push(f + pw * &s);
        dpsi.push(df + dpw * &s + pw * big.adjoint() * f);
    }
    Ok(MatrixSolution::new(k, p.phi.step(), psi, dpsi))
}

/// `phi + Phi W^+ integral_0^x Phi^dagger phi`, by quadrature; equals
/// [`perturbed_regular_solution`] (values only).
pub fn perturbed_regular_integral_form(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    state: &BoundState,
    k: Complex64,
) -> Result<Vec<CMat>> {
    let p = perturbation(v, bc, state, k)?;
    let big = Sampled::new(state.phi.psi_all(), state.phi.dpsi_all(), state.phi.step());
    let small = Sampled::new(p.phi.psi_all(), p.phi.dpsi_all(), p.phi.step());
    let integral = quad::cumulative_from_start(&big, &small);
    Ok((0..p.phi.len()).map(|j| p.phi.psi(j) + &p.phi_w[j] * &integral[j]).collect())
}

/// Sample points in the upper half-plane for [`determinant_identity`].
pub fn det_sample_points() -> Vec<Complex64> {
    (0..10)
        .map(|j| {
            let t = j as f64;
            Complex64::new(-1.7 + 0.41 * t, 0.13 + 0.09 * t)
        })
        .collect()
}

/// Relative residuals of `det J~(k) = ((k + i kappa)/(k - i kappa))^m det J(k)`.
pub fn determinant_identity(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    v_tilde: &PotentialGrid,
    bc_tilde: &BoundaryPair,
    kappa: f64,
    m: usize,
    ks: &[Complex64],
) -> Result<Vec<f64>> {
    let ik = Complex64::new(0.0, kappa);
    ks.iter()
        .map(|&k| {
            let before = spectral::jost_matrix(v, bc, k)?.determinant();
            let after = spectral::jost_matrix(v_tilde, bc_tilde, k)?.determinant();
            let expected = ((k + ik) / (k - ik)).powi(m as i32) * before;
            let scale = after.norm().max(expected.norm()).max(f64::MIN_POSITIVE);
            Ok((after - expected).norm() / scale)
        })
        .collect()
}

/// Controls for [`add_bound_state`].
#[derive(Clone, Debug)]
pub struct AddOptions {
    /// Sub-steps per cell for the regular solution and the round trip.
    pub substeps: usize,
    /// Trailing cells below this operator norm are dropped.
    pub trim_tol: f64,
    /// Options for locating the added state during the round trip.
    pub spectral: SpectralOptions,
}

impl Default for AddOptions {
    fn default() -> Self {
        AddOptions { substeps: 4, trim_tol: 1e-13, spectral: SpectralOptions::default() }
    }
}

/// Self-validation of an addition.
#[derive(Clone, Debug)]
pub struct AdditionChecks {
    /// `|kappa m - (1/4)[-integral Tr dV - Tr dB + Tr C^2]|`.
    pub trace_identity_residual: f64,
    /// Sup-norm distance between the removed-again potential and `V`.
    pub round_trip_potential: f64,
    /// `|B~ - B|` after removing the added state again.
    pub round_trip_boundary: f64,
    /// `|C_recovered - C|`.
    pub c_deviation: f64,
    pub kappa_recovered: f64,
    pub m_recovered: usize,
    /// Smallest eigenvalue of `I + C Z C` over the grid (at least one in theory).
    pub min_m_eigenvalue: f64,
    pub removal: RemovalChecks,
}

impl AdditionChecks {
    pub fn passed(&self, m: usize) -> bool {
        self.trace_identity_residual < ROUND_TRIP_TOL
            && self.round_trip_potential < ROUND_TRIP_TOL
            && self.round_trip_boundary < ROUND_TRIP_TOL
            && self.m_recovered == m
    }
}

/// Outcome of [`add_bound_state`].
#[derive(Clone, Debug)]
pub struct AdditionResult {
    pub v_new: PotentialGrid,
    pub bc_new: BoundaryPair,
    pub kappa: f64,
    pub c: HermMatrix,
    /// `rank C`.
    pub m: usize,
    pub checks: AdditionChecks,
}

impl AdditionResult {
    pub fn passed(&self) -> bool {
        self.checks.passed(self.m)
    }
}

/// Adds a bound state at `-kappa^2` with normalization matrix `C` to a
/// problem in Robin form `(I, B)`, then removes it again to validate.
pub fn add_bound_state(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    kappa: f64,
    c: &HermMatrix,
    opts: &AddOptions,
) -> Result<AdditionResult> {
    if !bc.is_robin_form() {
        return Err(Error::Precondition("addition needs boundary matrices in the form (I, B)".into()));
    }
    if c.dim() != v.n() || bc.dim() != v.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), found: c.dim() });
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let (evals, evecs) = c.eigen();
    let cmax = evals.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
    if cmax == 0.0 {
        return Err(Error::InvalidArgument("C must be nonzero".into()));
    }
    if evals[0] < -1e-12 * cmax {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: evals[0] });
    }
    let kept: Vec<usize> = (0..evals.len()).filter(|&i| evals[i] > 1e-12 * cmax).collect();
    let m = kept.len();
    let c_min = evals[kept[0]];
    // C = E diag(c) E^dagger on its range; C (I + C Z C)^-1 C equals
    // E c (I_m + c E^dagger Z E c)^-1 c E^dagger, which avoids roundoff from
    // the null space of C once Z is huge.
    let ec = CMat::from_fn(v.n(), m, |r, j| evecs[(r, kept[j])] * evals[kept[j]]);
    if spectral::jost_sigma_rel(v, bc, kappa)? < opts.spectral.tol_rank {
        return Err(Error::Precondition(format!("kappa = {kappa} is already a bound state")));
    }

    let reach = v.x_max() + (20.0 + 0.5 * (1.0 + 1.0 / (c_min * c_min)).ln()) / kappa;
    let ext = v.extended_to(reach);
    let r = opts.substeps.max(4) & !1;
    let cm = c.as_matrix();
    let phi = propagate::regular_solution(&ext, bc, Complex64::new(0.0, kappa), PropagateOptions::with_substeps(r))?;
    let ps = Sampled::new(phi.psi_all(), phi.dpsi_all(), phi.step());
    let z = quad::cumulative_from_start(&ps, &ps);

    let n = v.n();
    let mut dks = Vec::with_capacity(phi.len());
    let mut min_m_eigenvalue = f64::INFINITY;
    for j in 0..phi.len() {
        let y = phi.psi(j) * &ec;
        let dy = phi.dpsi(j) * &ec;
        let mm = hermitian_part(&(identity(m) + ec.adjoint() * &z[j] * &ec));
        min_m_eigenvalue = min_m_eigenvalue.min(matcore::hermitian_eigen(&mm).0[0]);
        let chol = mm.cholesky().ok_or_else(|| {
            Error::TransformationInstability(format!("I + C Z C is singular at x = {:.6}", phi.x(j)))
        })?;
        let x = chol.solve(&y.adjoint());
        let k = &y * &x;
        let half = &dy * &x;
        dks.push(hermitian_part(&(&half + half.adjoint() - &k * &k)));
    }
    if min_m_eigenvalue < 1.0 - 1e-8 {
        return Err(Error::TransformationInstability(format!(
            "I + C Z C lost positivity (smallest eigenvalue {min_m_eigenvalue:.3e})"
        )));
    }
    let cells: Vec<HermMatrix> = (0..ext.num_cells())
        .map(|i| HermMatrix::new(ext.cell(i).as_matrix() - cell_average(&dks, i, r) * re(2.0)))
        .collect();
    let v_new = PotentialGrid::from_cells(n, ext.h(), cells)?.trimmed(opts.trim_tol);
    let c2 = cm * cm;
    let bc_new = BoundaryPair { a: identity(n), b: hermitian_part(&(&bc.b - &c2)) };

    let d_int = v_new.integral_trace() - v.integral_trace();
    let d_b = matcore::trace_re(&bc_new.b) - matcore::trace_re(&bc.b);
    let trace_c2 = matcore::trace_re(&c2);
    let trace_identity_residual = (kappa * m as f64 - 0.25 * (-d_int - d_b + trace_c2)).abs();

    let sopts = SpectralOptions { substeps: r, ..opts.spectral.clone() };
    let window = (1e-3 * kappa).max(1e-4);
    let state = spectral::refine_state(&v_new, &bc_new, kappa, window, &sopts)?;
    let back = remove_bound_state(&v_new, &bc_new, std::slice::from_ref(&state), 0)?;
    let checks = AdditionChecks {
        trace_identity_residual,
        round_trip_potential: back.v_tilde.sup_distance(v),
        round_trip_boundary: (&back.bc_tilde.b - &bc.b).norm(),
        c_deviation: (&state.c - cm).norm(),
        kappa_recovered: state.kappa,
        m_recovered: state.m,
        min_m_eigenvalue,
        removal: back.checks,
    };
    Ok(AdditionResult { v_new, bc_new, kappa, c: c.clone(), m, checks })
}

/// `integral Tr V + Tr B` for a problem in Robin form.
pub fn trace_ledger(v: &PotentialGrid, bc: &BoundaryPair) -> Result<f64> {
    Ok(v.integral_trace() + bc.robin_b()?.trace())
}

/// One removal inside [`removal_chain`].
#[derive(Clone, Debug)]
pub struct ChainStep {
    pub kappa: f64,
    pub m: usize,
    pub trace_c2: f64,
    pub ledger_before: f64,
    pub ledger_after: f64,
    pub checks_passed: bool,
    /// Remaining states after the removal match the previous ones in count
    /// and multiplicity.
    pub spectrum_preserved: bool,
    /// Largest shift of a remaining `kappa_j`.
    pub kappa_shift: f64,
    /// Largest change of a remaining `Q_j` or `C_j`.
    pub data_shift: f64,
}

/// Outcome of [`removal_chain`].
#[derive(Clone, Debug)]
pub struct RemovalChain {
    pub steps: Vec<ChainStep>,
    pub v_final: PotentialGrid,
    pub bc_final: BoundaryPair,
    pub final_ledger: f64,
    pub final_spectrum_empty: bool,
}

/// Removes all bound states one at a time, deepest first.
pub fn removal_chain(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    opts: &SpectralOptions,
) -> Result<RemovalChain> {
    let mut cur_v = v.clone();
    let mut cur_bc = bc.clone();
    let mut report = spectral::find_bound_states(&cur_v, &cur_bc, opts)?;
    let mut steps = Vec::new();
    while !report.states.is_empty() {
        let ledger_before = trace_ledger(&cur_v, &cur_bc)?;
        let removed = remove_bound_state(&cur_v, &cur_bc, &report.states, 0)?;
        let next = spectral::find_bound_states(&removed.v_tilde, &removed.bc_tilde, opts)?;
        if next.states.len() >= report.states.len() {
            return Err(Error::TransformationInstability(format!(
                "removal at kappa = {} left {} states (had {})",
                removed.removed.kappa,
                next.states.len(),
                report.states.len()
            )));
        }
        let remaining = &report.states[1..];
        let spectrum_preserved = next.states.len() == remaining.len()
            && next.states.iter().zip(remaining).all(|(a, b)| a.m == b.m);
        let mut kappa_shift = 0.0_f64;
        let mut data_shift = 0.0_f64;
        for (a, b) in next.states.iter().zip(remaining) {
            kappa_shift = kappa_shift.max((a.kappa - b.kappa).abs());
            data_shift = data_shift.max((&a.q.matrix - &b.q.matrix).norm()).max((&a.c - &b.c).norm());
        }
        let state = &removed.removed;
        steps.push(ChainStep {
            kappa: state.kappa,
            m: state.m,
            trace_c2: matcore::trace_re(&(&state.c * &state.c)),
            ledger_before,
            ledger_after: trace_ledger(&removed.v_tilde, &removed.bc_tilde)?,
            checks_passed: removed.checks.passed(),
            spectrum_preserved,
            kappa_shift,
            data_shift,
        });
        cur_v = removed.v_tilde;
        cur_bc = removed.bc_tilde;
        report = next;
    }
    Ok(RemovalChain {
        steps,
        final_ledger: trace_ledger(&cur_v, &cur_bc)?,
        final_spectrum_empty: report.states.is_empty(),
        v_final: cur_v,
        bc_final: cur_bc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{cplx, real_diag};

    fn scalar_setup() -> (PotentialGrid, BoundaryPair, BoundState) {
        let v = PotentialGrid::zero(1, 1e-2, 3.0).unwrap();
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        let rep = spectral::find_bound_states(&v, &bc, &SpectralOptions::default()).unwrap();
        assert_eq!(rep.states.len(), 1);
        let s = rep.states[0].clone();
        (v, bc, s)
    }

    #[test]
    fn w_matrix_scalar_closed_form() {
        let (_, _, s) = scalar_setup();
        for x in [0.0, 0.013, 0.5, 1.234, 2.999, 3.0, 4.5] {
            let w = w_matrix(&s, x)[(0, 0)].re;
            assert!((w - (-2.0 * x).exp()).abs() < 1e-9, "x = {x}: {w}");
        }
        assert!((w_matrix(&s, 0.0) - &s.q.matrix).norm() < 1e-9);
    }

    #[test]
    fn scalar_removal_gives_free_neumann_like_robin() {
        let (v, bc, s) = scalar_setup();
        let out = remove_bound_state(&v, &bc, &[s], 0).unwrap();
        assert!(out.v_tilde.sup_norm() < 1e-7);
        assert!((out.bc_tilde.b[(0, 0)].re - 1.0).abs() < 1e-7);
        assert!(out.checks.passed(), "{:?}", out.checks);
        assert!((out.checks.bracket.bracket[(0, 0)].re - 2.0).abs() < 1e-7);
        for b in &out.bracket_samples {
            assert!((b[(0, 0)].re - 2.0).abs() < 1e-7);
        }
        let res = determinant_identity(&v, &bc, &out.v_tilde, &out.bc_tilde, 1.0, 1, &det_sample_points())
            .unwrap();
        assert!(res.iter().all(|&r| r < 1e-7), "{res:?}");
    }

    #[test]
    fn perturbed_regular_solution_scalar() {
        let (v, bc, s) = scalar_setup();
        let k = cplx(0.0, 2.0);
        let sol = perturbed_regular_solution(&v, &bc, &s, k).unwrap();
        for j in (0..sol.len()).step_by(97) {
            let x = sol.x(j);
            let expected = (2.0 * x).cosh() + (2.0 * x).sinh() / 2.0;
            assert!((sol.psi(j)[(0, 0)].re - expected).abs() < 1e-7 * expected, "x = {x}");
            let dexp = 2.0 * (2.0 * x).sinh() + (2.0 * x).cosh();
            assert!((sol.dpsi(j)[(0, 0)].re - dexp).abs() < 1e-7 * dexp, "x = {x}");
        }
        let integral = perturbed_regular_integral_form(&v, &bc, &s, k).unwrap();
        for (a, b) in integral.iter().zip(sol.psi_all()) {
            assert!((a - b).norm() < 1e-6 * b.norm());
        }
        assert!(perturbed_regular_solution(&v, &bc, &s, cplx(0.0, 1.0)).is_err());
    }

    #[test]
    fn matrix_removal_keeps_other_state() {
        let v = PotentialGrid::zero(2, 1e-2, 3.0).unwrap();
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, -2.0]));
        let opts = SpectralOptions::default();
        let rep = spectral::find_bound_states(&v, &bc, &opts).unwrap();
        assert_eq!(rep.states.len(), 2);
        assert!((rep.states[0].kappa - 2.0).abs() < 1e-9);
        let out = remove_bound_state(&v, &bc, &rep.states, 0).unwrap();
        assert!(out.checks.passed(), "{:?}", out.checks);
        let after = spectral::find_bound_states(&out.v_tilde, &out.bc_tilde, &opts).unwrap();
        assert_eq!(after.states.len(), 1);
        let (old, new) = (&rep.states[1], &after.states[0]);
        assert!((old.kappa - new.kappa).abs() < 1e-9);
        assert!((&old.q.matrix - &new.q.matrix).norm() < 1e-7);
        assert!((&old.c - &new.c).norm() < 1e-7);
        let expected_b = real_diag(&[-1.0, 2.0]);
        assert!((&out.bc_tilde.b - expected_b).norm() < 1e-7);
    }

    #[test]
    fn addition_to_free_neumann() {
        let v = PotentialGrid::zero(1, 1e-3, 0.0).unwrap();
        let bc = BoundaryPair::neumann(1);
        let c = 0.1;
        let out = add_bound_state(&v, &bc, 1.0, &HermMatrix::from_real_diag(&[c]), &AddOptions::default())
            .unwrap();
        assert_eq!(out.bc_new.b[(0, 0)].re, -c * c);
        assert!((out.v_new.integral_trace() - (2.0 * c * c - 4.0)).abs() < 1e-9);
        assert!(out.checks.trace_identity_residual < 1e-9);
        assert!(out.passed(), "{:?}", out.checks);
    }

    #[test]
    fn removal_chain_empties_spectrum() {
        let v = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[-4.0]), 1.0, 1.0, 1e-2).unwrap();
        let bc = BoundaryPair::neumann(1);
        let chain = removal_chain(&v, &bc, &SpectralOptions::default()).unwrap();
        assert_eq!(chain.steps.len(), 1);
        assert!(chain.final_spectrum_empty);
        assert!(chain.final_ledger > -1e-6);
        let step = &chain.steps[0];
        let expected = step.ledger_before + 4.0 * step.kappa - step.trace_c2;
        assert!((step.ledger_after - expected).abs() < 1e-6);
    }
}
