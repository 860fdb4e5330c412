//! Jost matrix, bound-state search and Gel'fand-Levitan normalization.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matcore::{
    self, hermitian_part, identity, kernel_projection_below, positive_inv_sqrt, sorted_svd, CMat,
    Projection,
};
use crate::model::{BoundaryPair, PotentialGrid};
use crate::propagate::{self, MatrixSolution, PropagateOptions};
use crate::quad::{self, Sampled};

/// Controls for [`find_bound_states`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOptions {
    /// Upper end of the kappa scan; `None` uses [`default_kappa_max`].
    pub kappa_max: Option<f64>,
    pub grid_points: usize,
    /// Relative singular-value level that counts as kernel.
    pub tol_rank: f64,
    /// Required relative size of the first non-kernel singular value.
    pub gap_tol: f64,
    /// Refined roots closer than this are merged.
    pub merge_tol: f64,
    /// Roots below this are treated as threshold artefacts.
    pub kappa_floor: f64,
    /// Golden-section stopping width.
    pub refine_tol: f64,
    /// Runge-Kutta steps per cell for the normalized bound-state solutions.
    pub substeps: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            kappa_max: None,
            grid_points: 400,
            tol_rank: 1e-7,
            gap_tol: 1e-4,
            merge_tol: 1e-8,
            kappa_floor: 1e-6,
            refine_tol: 1e-10,
            substeps: 4,
        }
    }
}

/// A negative eigenvalue `-kappa^2` with its Gel'fand-Levitan data.
#[derive(Clone, Debug)]
pub struct BoundState {
    pub kappa: f64,
    /// Multiplicity, `dim Ker J(i kappa)`.
    pub m: usize,
    /// Projection onto `Ker J(i kappa)`.
    pub q: Projection,
    pub g: CMat,
    pub h: CMat,
    /// Normalization matrix `C = H^{-1/2} Q`.
    pub c: CMat,
    /// `Phi = phi(i kappa, .) C` and its derivative on the sub-grid of `[0, x_max]`.
    pub phi: MatrixSolution,
    /// `Phi(x) = exp(-kappa (x - x_max)) * tail` for `x >= x_max`.
    pub tail: CMat,
    pub x_max: f64,
    /// `W(x_j) = integral_{x_j}^inf Phi^dagger Phi` on the same sub-grid.
    pub w: Vec<CMat>,
    /// Relative residual of matching `phi(i kappa, .) Q` to the decaying Jost
    /// solution at the origin; nonzero would mean a growing component.
    pub growth_residual: f64,
    /// Singular values of `J(i kappa)` relative to its natural size, descending.
    pub sigma_rel: Vec<f64>,
}

impl BoundState {
    pub fn lambda(&self) -> f64 {
        -self.kappa * self.kappa
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }

    /// `Phi(x)`; exact beyond the support, nearest sample inside.
    pub fn phi_at(&self, x: f64) -> CMat {
        if x >= self.x_max {
            return &self.tail * Complex64::from((-self.kappa * (x - self.x_max)).exp());
        }
        let j = ((x / self.phi.step()).round() as usize).min(self.phi.len() - 1);
        self.phi.psi(j).clone()
    }

    /// `integral_0^inf Phi^dagger Phi`.
    pub fn norm_matrix(&self) -> CMat {
        self.w[0].clone()
    }
}

/// Located zero of `det J` on the imaginary axis.
#[derive(Clone, Debug)]
pub struct LocatedRoot {
    pub kappa: f64,
    pub m: usize,
    pub q: Projection,
    pub sigma_rel: Vec<f64>,
}

/// Outcome of [`find_bound_states`].
#[derive(Clone, Debug)]
pub struct SpectrumReport {
    /// Ordered by increasing `lambda`, i.e. decreasing `kappa`.
    pub states: Vec<BoundState>,
    /// `(kappa, sigma_min / sigma_max)` of `J(i kappa)` on the scan grid.
    pub scan: Vec<(f64, f64)>,
    pub kappa_max: f64,
    pub flags: Vec<String>,
}

impl SpectrumReport {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `sum_j m_j sqrt|lambda_j|`.
    pub fn root_sum(&self) -> f64 {
        self.states.iter().map(|s| s.m as f64 * s.kappa).sum()
    }

    /// Eigenvalues with multiplicities, ascending.
    pub fn eigenvalues(&self) -> Vec<(f64, usize)> {
        self.states.iter().map(|s| (s.lambda(), s.m)).collect()
    }

    pub fn scan_csv(&self) -> String {
        let mut out = String::from("kappa,sigma_min_rel\n");
        for (k, s) in &self.scan {
            out.push_str(&format!("{k:.12e},{s:.12e}\n"));
        }
        out
    }
}

/// `J(k) = f(-k^*, 0)^dagger B - f'(-k^*, 0)^dagger A`.
pub fn jost_matrix(v: &PotentialGrid, bc: &BoundaryPair, k: Complex64) -> Result<CMat> {
    let kk = -k.conj();
    let factor = (Complex64::i() * kk * v.x_max()).exp().conj();
    Ok(jost_matrix_scaled(v, bc, k, PropagateOptions::default())? * factor)
}

/// `J(k)` up to the scalar factor `exp(-i k x_max)`; same kernel.
pub fn jost_matrix_scaled(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    k: Complex64,
    opts: PropagateOptions,
) -> Result<CMat> {
    if bc.dim() != v.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), found: bc.dim() });
    }
    if k.im < 0.0 {
        return Err(Error::InvalidArgument(format!("Jost matrix requires Im k >= 0, got {k}")));
    }
    let (f, fp) = propagate::jost_at_origin_scaled(v, -k.conj(), opts)?;
    Ok(f.adjoint() * &bc.b - fp.adjoint() * &bc.a)
}

/// `J(i kappa)` (up to a positive factor) and its natural size
/// `|(f(0), f'(0))| |(A, B)|` (Frobenius norms of the stacked pairs). Singular values are measured
/// against this size: `sigma_max` itself is useless for `n = 1` or when
/// `J` is a multiple of the identity.
pub fn jost_matrix_on_axis(v: &PotentialGrid, bc: &BoundaryPair, kappa: f64) -> Result<(CMat, f64)> {
    let k = Complex64::new(0.0, kappa);
    let (f, fp) = propagate::jost_at_origin_scaled(v, k, PropagateOptions::default())?;
    let j = f.adjoint() * &bc.b - fp.adjoint() * &bc.a;
    let scale = f.norm().hypot(fp.norm()) * bc.a.norm().hypot(bc.b.norm());
    Ok((j, scale))
}

/// `sigma_min(J(i kappa))` relative to the natural size of `J`.
pub fn jost_sigma_rel(v: &PotentialGrid, bc: &BoundaryPair, kappa: f64) -> Result<f64> {
    let (j, scale) = jost_matrix_on_axis(v, bc, kappa)?;
    let s = matcore::singular_values(&j);
    Ok(s[s.len() - 1] / scale)
}

/// Upper bound for `kappa`: every eigenvalue satisfies
/// `kappa^2 <= beta^2 + sup |V_-|`, `beta = max(0, -min eig L)` with `L` the
/// Robin part of the boundary condition. One is added as margin.
pub fn default_kappa_max(v: &PotentialGrid, bc: &BoundaryPair) -> f64 {
    let (_, l) = bc.robin_part();
    let beta = if l.nrows() == 0 {
        0.0
    } else {
        (-matcore::hermitian_eigen(&l).0[0]).max(0.0)
    };
    (beta * beta + v.sup_negative_part()).sqrt() + 1.0
}

fn golden_min(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Kernel data of `J(i kappa)` at a refined root.
pub fn locate_root(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    kappa: f64,
    tol_rank: f64,
) -> Result<LocatedRoot> {
    let (j, scale) = jost_matrix_on_axis(v, bc, kappa)?;
    let s = matcore::singular_values(&j);
    let sigma_rel: Vec<f64> = s.iter().map(|x| x / scale).collect();
    let m = sigma_rel.iter().filter(|&&x| x < tol_rank).count();
    let q = kernel_projection_below(&j, tol_rank * scale);
    Ok(LocatedRoot { kappa, m, q, sigma_rel })
}

/// Locates the zeros of `det J(i kappa)` by scanning `sigma_min(J(i kappa))`
/// and refining each local minimum, then normalizes every state.
pub fn find_bound_states(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    opts: &SpectralOptions,
) -> Result<SpectrumReport> {
    let diag = crate::model::validate_boundary(&bc.a, &bc.b)?;
    if !diag.valid {
        return Err(Error::InvalidBoundary(diag.describe()));
    }
    if bc.dim() != v.n() {
        return Err(Error::DimensionMismatch { expected: v.n(), found: bc.dim() });
    }
    let kappa_max = opts.kappa_max.unwrap_or_else(|| default_kappa_max(v, bc));
    if !(kappa_max > opts.kappa_floor) {
        return Err(Error::InvalidArgument(format!("kappa_max {kappa_max} must exceed kappa_floor")));
    }
    let points = opts.grid_points.max(3);
    let span = kappa_max - opts.kappa_floor;
    let grid: Vec<f64> =
        (0..points).map(|i| opts.kappa_floor + span * i as f64 / (points - 1) as f64).collect();
    let values: Vec<f64> =
        grid.par_iter().map(|&k| jost_sigma_rel(v, bc, k)).collect::<Result<_>>()?;
    let scan: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    let sigma = |k: f64| jost_sigma_rel(v, bc, k);
    let mut flags = Vec::new();
    let brackets: Vec<(f64, f64)> = (0..points)
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i == points - 1 || values[i] <= values[i + 1];
            left && right
        })
        .map(|i| (grid[i.saturating_sub(1)], grid[(i + 1).min(points - 1)]))
        .collect();
    let refined: Vec<f64> = brackets
        .par_iter()
        .map(|&(a, b)| golden_min(&sigma, a, b, opts.refine_tol))
        .collect::<Result<_>>()?;

    let mut roots: Vec<f64> = Vec::new();
    for kappa in refined {
        if sigma(kappa)? >= opts.tol_rank {
            continue;
        }
        if kappa - opts.kappa_floor < 10.0 * opts.refine_tol {
            flags.push(format!("root at the kappa floor ({kappa:.3e}) rejected as threshold"));
            continue;
        }
        if kappa > kappa_max - 10.0 * opts.refine_tol {
            flags.push(format!("root at the scan ceiling {kappa:.6}; raise kappa_max"));
        }
        roots.push(kappa);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    let mut merged: Vec<f64> = Vec::new();
    for k in roots {
        match merged.last_mut() {
            Some(prev) if (k - *prev).abs() < opts.merge_tol => {
                flags.push(format!("merged roots {prev:.12} and {k:.12}"));
                *prev = 0.5 * (*prev + k);
            }
            _ => merged.push(k),
        }
    }

    let mut states = Vec::with_capacity(merged.len());
    for &kappa in merged.iter().rev() {
        let root = locate_root(v, bc, kappa, opts.tol_rank)?;
        let next = root.sigma_rel.len().checked_sub(root.m + 1).map(|i| root.sigma_rel[i]);
        if let Some(next) = next {
            if next <= opts.gap_tol {
                flags.push(format!(
                    "weak rank gap at kappa = {kappa:.10}: next singular value {next:.3e}"
                ));
            }
        }
        let state = gl_normalization(v, bc, &root, opts.substeps)?;
        states.push(state);
    }
    Ok(SpectrumReport { states, scan, kappa_max, flags })
}

/// Bound state near a known `kappa_guess`, located by golden-section search
/// on `[kappa_guess - window, kappa_guess + window]` without a full scan.
pub fn refine_state(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    kappa_guess: f64,
    window: f64,
    opts: &SpectralOptions,
) -> Result<BoundState> {
    let lo = (kappa_guess - window).max(opts.kappa_floor);
    let hi = kappa_guess + window;
    let sigma = |k: f64| jost_sigma_rel(v, bc, k);
    let kappa = golden_min(&sigma, lo, hi, opts.refine_tol)?;
    let root = locate_root(v, bc, kappa, opts.tol_rank)?;
    if root.m == 0 {
        return Err(Error::NumericalFailure(format!(
            "no bound state within {window:.3e} of kappa = {kappa_guess}"
        )));
    }
    gl_normalization(v, bc, &root, opts.substeps)
}

/// Gel'fand-Levitan normalization of the bound state at `root`.
///
/// `phi(i kappa, x) Q` is represented as `f(i kappa, x) Omega` with the Jost
/// solution integrated backwards, which is the stable direction for the
/// decaying solution. Beyond `x_max` the representation is an exact
/// exponential and its contribution to `G` is added in closed form.
pub fn gl_normalization(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    root: &LocatedRoot,
    substeps: usize,
) -> Result<BoundState> {
    let n = v.n();
    let kappa = root.kappa;
    let q = &root.q.matrix;
    let k = Complex64::new(0.0, kappa);
    let f = propagate::jost_solution_scaled(v, k, PropagateOptions::with_substeps(substeps))?;

    let mut s = CMat::zeros(2 * n, n);
    s.view_mut((0, 0), (n, n)).copy_from(f.psi(0));
    s.view_mut((n, 0), (n, n)).copy_from(f.dpsi(0));
    let mut rhs = CMat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(&bc.a * q));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(&bc.b * q));
    // (f, f') has full column rank, so least squares through QR is safe.
    let qr = s.clone().qr();
    let omega = qr
        .r()
        .solve_upper_triangular(&(qr.q().adjoint() * &rhs))
        .ok_or_else(|| Error::NumericalFailure(format!("Jost data singular at kappa = {kappa}")))?;
    let growth_residual = (&s * &omega - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    if growth_residual > 1e-6 {
        return Err(Error::NumericalFailure(format!(
            "kappa = {kappa}: regular solution has a growing component (residual {growth_residual:.3e})"
        )));
    }

    let y = f.times_right(&omega);
    let ys = Sampled::new(y.psi_all(), y.dpsi_all(), y.step());
    let tail_y = omega.adjoint() * &omega / Complex64::from(2.0 * kappa);
    let g = hermitian_part(&(q * (quad::total(&ys, &ys) + tail_y) * q));
    let h = identity(n) - q + &g;
    let h_inv_sqrt = positive_inv_sqrt(&h).map_err(|_| {
        Error::NumericalFailure(format!("H is not positive at kappa = {kappa}"))
    })?;
    let c = hermitian_part(&(h_inv_sqrt * q));

    let phi = y.times_right(&c);
    let tail = &omega * &c;
    let ps = Sampled::new(phi.psi_all(), phi.dpsi_all(), phi.step());
    let w_end = tail.adjoint() * &tail / Complex64::from(2.0 * kappa);
    let w = quad::cumulative_to_end(&ps, &ps, w_end)
        .into_iter()
        .map(|m| hermitian_part(&m))
        .collect();
    Ok(BoundState {
        kappa,
        m: root.m,
        q: root.q.clone(),
        g,
        h,
        c,
        phi: MatrixSolution::new(k, phi.step(), phi.psi_all().to_vec(), phi.dpsi_all().to_vec()),
        tail,
        x_max: v.x_max(),
        w,
        growth_residual,
        sigma_rel: root.sigma_rel.clone(),
    })
}

/// `integral_0^inf Phi_a^dagger Phi_b dx`; both states must share the grid.
pub fn overlap(a: &BoundState, b: &BoundState) -> CMat {
    let sa = Sampled::new(a.phi.psi_all(), a.phi.dpsi_all(), a.phi.step());
    let sb = Sampled::new(b.phi.psi_all(), b.phi.dpsi_all(), b.phi.step());
    quad::total(&sa, &sb)
        + a.tail.adjoint() * &b.tail / Complex64::from(a.kappa + b.kappa)
}

/// Largest `|integral Phi_j^dagger Phi_l - delta_jl Q_j|` over all pairs.
pub fn orthonormality_defect(states: &[BoundState]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            let target = if i == j { a.q.matrix.clone() } else { matcore::zeros(a.n()) };
            worst = worst.max((overlap(a, b) - target).norm());
        }
    }
    worst
}

/// Singular triplets of `J(i kappa)`, exposed for diagnostics.
pub fn jost_svd(v: &PotentialGrid, bc: &BoundaryPair, kappa: f64) -> Result<(Vec<f64>, CMat, CMat)> {
    let j = jost_matrix(v, bc, Complex64::new(0.0, kappa))?;
    Ok(sorted_svd(&j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{cplx, real_diag, HermMatrix};

    fn free(n: usize) -> PotentialGrid {
        PotentialGrid::zero(n, 2e-3, 2.0).unwrap()
    }

    #[test]
    fn free_jost_matrix_closed_form() {
        let b = HermMatrix::from_real_diag(&[-1.0, 0.5]);
        let bc = BoundaryPair::robin(&b);
        for k in [cplx(0.3, 0.0), cplx(1.1, 0.4), cplx(0.0, 1.0)] {
            let j = jost_matrix(&free(2), &bc, k).unwrap();
            let expected = b.as_matrix() - identity(2) * (Complex64::i() * k);
            assert!((j - expected).norm() < 1e-11, "k = {k}");
        }
        let scalar = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        let j = jost_matrix(&free(1), &scalar, cplx(0.0, 1.0)).unwrap();
        assert!(j.norm() < 1e-12);
    }

    #[test]
    fn free_robin_states() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, -2.0]));
        let rep = find_bound_states(&free(2), &bc, &SpectralOptions::default()).unwrap();
        let got: Vec<(f64, usize)> = rep.states.iter().map(|s| (s.kappa, s.m)).collect();
        assert_eq!(got.len(), 2, "{got:?}");
        assert!((got[0].0 - 2.0).abs() < 1e-9 && got[0].1 == 1);
        assert!((got[1].0 - 1.0).abs() < 1e-9 && got[1].1 == 1);
    }

    #[test]
    fn degenerate_state_has_multiplicity_two() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, -1.0]));
        let rep = find_bound_states(&free(2), &bc, &SpectralOptions::default()).unwrap();
        assert_eq!(rep.states.len(), 1);
        let s = &rep.states[0];
        assert_eq!(s.m, 2);
        assert!((&s.c - identity(2) * cplx(2f64.sqrt(), 0.0)).norm() < 1e-8);
    }

    #[test]
    fn scalar_normalization_worked_example() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        let rep = find_bound_states(&free(1), &bc, &SpectralOptions::default()).unwrap();
        let s = &rep.states[0];
        assert!((s.g[(0, 0)].re - 0.5).abs() < 1e-9);
        assert!((s.h[(0, 0)].re - 0.5).abs() < 1e-9);
        assert!((s.c[(0, 0)].re - 2f64.sqrt()).abs() < 1e-9);
        for x in [0.0, 0.5, 1.7, 3.0] {
            let expected = 2f64.sqrt() * (-x as f64).exp();
            assert!((s.phi_at(x)[(0, 0)].re - expected).abs() < 1e-8, "x = {x}");
        }
        assert!((s.norm_matrix()[(0, 0)].re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn positive_robin_has_no_states() {
        let bc = BoundaryPair::robin(&HermMatrix::new(real_diag(&[1.0, 0.0])));
        let rep = find_bound_states(&free(2), &bc, &SpectralOptions::default()).unwrap();
        assert!(rep.is_empty());
        assert!(rep.scan_csv().starts_with("kappa,sigma_min_rel\n"));
    }

    #[test]
    fn invalid_boundary_is_rejected() {
        let bc = BoundaryPair { a: identity(2), b: crate::matcore::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]) };
        assert!(matches!(
            find_bound_states(&free(2), &bc, &SpectralOptions::default()),
            Err(Error::InvalidBoundary(_))
        ));
    }
}
