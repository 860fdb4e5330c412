//! Reverse Lieb-Thirring inequality
//! `sum_j m_j sqrt|lambda_j| > (1/4) [-integral Tr V - Tr B]`, the trace
//! ledger behind it, the sharpness construction and the Dirichlet criterion
//! `1 - |beta| integral x |Q| >= 0`.

use rand::Rng;
use serde::Serialize;

use crate::darboux::{self, AddOptions};
use crate::error::{Error, Result};
use crate::fdoracle::{self, OracleOptions};
use crate::matcore::{self, cplx, CMat, HermMatrix};
use crate::model::{self, normalize_to_robin, BoundaryPair, PotentialGrid};
use crate::spectral::{self, SpectralOptions};

/// Slack allowed in inequalities that may hold with equality.
pub const LEDGER_TOL: f64 = 1e-6;

/// Both sides of the inequality for one problem.
#[derive(Clone, Debug, Serialize)]
pub struct LTReport {
    /// `(kappa_j, m_j)`, decreasing `kappa`.
    pub states: Vec<(f64, usize)>,
    /// `sum_j m_j kappa_j`.
    pub lhs: f64,
    /// `(1/4) [-integral Tr V - Tr B]`.
    pub rhs: f64,
    /// `Tr C_j^2` per state.
    pub ledger: Vec<f64>,
    /// `(1/4) [-integral Tr V - Tr B + sum_j Tr C_j^2]`.
    pub strengthened_rhs: f64,
    pub margin: f64,
    pub strengthened_margin: f64,
    /// `lhs > rhs`.
    pub verdict: bool,
    /// At least one bound state exists.
    pub hypothesis_met: bool,
}

impl LTReport {
    /// Strict inequality and the strengthened bound when a bound state exists.
    pub fn passed(&self) -> bool {
        !self.hypothesis_met || (self.verdict && self.strengthened_margin > -LEDGER_TOL)
    }
}

fn robin_form(bc: &BoundaryPair) -> Result<BoundaryPair> {
    if bc.is_robin_form() {
        Ok(bc.clone())
    } else {
        normalize_to_robin(bc)
    }
}

/// Evaluates the inequality for `H_{I,B}(V)`; an invertible `A` is first
/// normalized to `(I, B A^-1)`.
pub fn lt_evaluate(v: &PotentialGrid, bc: &BoundaryPair, opts: &SpectralOptions) -> Result<LTReport> {
    let bc = robin_form(bc)?;
    let report = spectral::find_bound_states(v, &bc, opts)?;
    let lhs = report.root_sum();
    let base = -v.integral_trace() - matcore::trace_re(&bc.b);
    let ledger: Vec<f64> = report.states.iter().map(|s| matcore::trace_re(&(&s.c * &s.c))).collect();
    let rhs = 0.25 * base;
    let strengthened_rhs = 0.25 * (base + ledger.iter().sum::<f64>());
    Ok(LTReport {
        states: report.states.iter().map(|s| (s.kappa, s.m)).collect(),
        lhs,
        rhs,
        strengthened_rhs,
        margin: lhs - rhs,
        strengthened_margin: lhs - strengthened_rhs,
        verdict: lhs > rhs,
        hypothesis_met: !report.states.is_empty(),
        ledger,
    })
}

/// Per-channel `integral V_rr + B_rr` of a problem without bound states.
#[derive(Clone, Debug, Serialize)]
pub struct PositivityLedger {
    pub channels: Vec<f64>,
    pub trace: f64,
}

impl PositivityLedger {
    pub fn passed(&self) -> bool {
        self.channels.iter().all(|&c| c >= -LEDGER_TOL)
    }
}

/// Channel values `integral V_rr dx + B_rr`; the problem must have no
/// negative eigenvalues.
pub fn positivity_ledger(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    opts: &SpectralOptions,
) -> Result<PositivityLedger> {
    let bc = robin_form(bc)?;
    let report = spectral::find_bound_states(v, &bc, opts)?;
    if !report.is_empty() {
        return Err(Error::Precondition(format!(
            "positivity ledger needs an empty negative spectrum, found {} states",
            report.states.len()
        )));
    }
    let total = v.integral() + &bc.b;
    let channels: Vec<f64> = (0..v.n()).map(|r| total[(r, r)].re).collect();
    Ok(PositivityLedger { trace: channels.iter().sum(), channels })
}

/// One row of [`sharpness_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct SharpnessRow {
    pub c: f64,
    /// `sum m_j kappa_j` of the constructed problem.
    pub lhs: f64,
    pub states: usize,
    pub integral_trace_v: f64,
    pub trace_b: f64,
    pub trace_c2: f64,
    /// `|lhs - (1/4)[-integral Tr V - Tr B + Tr C^2]|`.
    pub identity_residual: f64,
    /// `lhs / (-integral Tr V - Tr B)`.
    pub rho: f64,
    pub round_trip_passed: bool,
}

/// Outcome of [`sharpness_sweep`].
#[derive(Clone, Debug, Serialize)]
pub struct SharpnessTable {
    pub kappa: f64,
    pub m: usize,
    pub rows: Vec<SharpnessRow>,
    /// `rho` strictly decreases along the (decreasing) `c` values.
    pub decreasing: bool,
    /// Every `rho > 1/4`.
    pub above_quarter: bool,
}

impl SharpnessTable {
    pub fn max_identity_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.decreasing
            && self.above_quarter
            && self.max_identity_residual() < LEDGER_TOL
            && self.rows.iter().all(|r| r.states == 1 && r.round_trip_passed)
    }
}

/// Adds one bound state `(kappa, C = c I_m)` to the free Neumann problem in
/// `m` channels for each `c` and tabulates the trace identity and the ratio
/// `rho(c)`, which tends to `1/4` as `c -> 0`.
pub fn sharpness_sweep(
    kappa: f64,
    m: usize,
    c_values: &[f64],
    h: f64,
    opts: &SpectralOptions,
) -> Result<SharpnessTable> {
    if m == 0 {
        return Err(Error::InvalidArgument("multiplicity must be positive".into()));
    }
    if c_values.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidArgument("c values must be positive".into()));
    }
    if c_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("c values must be strictly decreasing".into()));
    }
    let v0 = PotentialGrid::zero(m, h, 0.0)?;
    let bc0 = BoundaryPair::neumann(m);
    let add = AddOptions { spectral: opts.clone(), ..AddOptions::default() };
    let mut rows = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let cm = HermMatrix::from_real_diag(&vec![c; m]);
        let added = darboux::add_bound_state(&v0, &bc0, kappa, &cm, &add)?;
        let report = spectral::find_bound_states(&added.v_new, &added.bc_new, opts)?;
        let lhs = report.root_sum();
        let integral_trace_v = added.v_new.integral_trace();
        let trace_b = matcore::trace_re(&added.bc_new.b);
        let trace_c2 = c * c * m as f64;
        let denom = -integral_trace_v - trace_b;
        rows.push(SharpnessRow {
            c,
            lhs,
            states: report.states.len(),
            integral_trace_v,
            trace_b,
            trace_c2,
            identity_residual: (lhs - 0.25 * (denom + trace_c2)).abs(),
            rho: lhs / denom,
            round_trip_passed: added.passed(),
        });
    }
    Ok(SharpnessTable {
        kappa,
        m,
        decreasing: rows.windows(2).all(|w| w[1].rho < w[0].rho),
        above_quarter: rows.iter().all(|r| r.rho > 0.25),
        rows,
    })
}

/// Finite-difference controls shared by the oracle-based checks.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleGrid {
    pub length: f64,
    pub h: f64,
    pub options: OracleOptions,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid { length: 20.0, h: 0.005, options: OracleOptions::default() }
    }
}

/// One row of [`dirichlet_no_bound_state_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DirichletRow {
    pub beta: f64,
    /// `1 - |beta| integral x |Q| dx`.
    pub criterion: f64,
    /// Criterion nonnegative, so no negative eigenvalue may appear.
    pub guaranteed: bool,
    pub negative_count: usize,
    pub eigenvalues: Vec<(f64, usize)>,
}

/// Outcome of [`dirichlet_no_bound_state_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DirichletTable {
    pub first_moment: f64,
    pub rows: Vec<DirichletRow>,
}

impl DirichletTable {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !r.guaranteed || r.negative_count == 0)
    }
}

/// Counts negative eigenvalues of `-d^2/dx^2 + beta Q` with a Dirichlet
/// condition for each `beta`, using the finite-difference oracle.
pub fn dirichlet_no_bound_state_check(
    q: &PotentialGrid,
    betas: &[f64],
    grid: &OracleGrid,
) -> Result<DirichletTable> {
    let first_moment = q.first_moment_abs();
    let bc = BoundaryPair::dirichlet(q.n());
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let criterion = 1.0 - beta.abs() * first_moment;
        let spec = fdoracle::oracle_negative_spectrum(&q.scaled(beta), &bc, grid.length, grid.h, &grid.options)?;
        rows.push(DirichletRow {
            beta,
            criterion,
            guaranteed: criterion >= -1e-12,
            negative_count: spec.count(),
            eigenvalues: spec.eigenvalues,
        });
    }
    Ok(DirichletTable { first_moment, rows })
}

/// Oracle eigenvalues of `V`, its negative-part truncation `V_l` and the
/// support truncation `V_{l,p}`.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityRow {
    pub l: f64,
    pub p: f64,
    pub mu: Vec<f64>,
    pub mu_l: Vec<f64>,
    pub mu_lp: Vec<f64>,
    /// Largest `mu_j(V) - mu_j(V_l)` and `mu_j(V_{l,p}) - mu_j(V_l)` over the
    /// eigenvalues of `V_l`; a missing counterpart counts as infinite.
    pub max_violation: f64,
}

impl MonotonicityRow {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Min-max comparison `mu_j(V) <= mu_j(V_l)` and `mu_j(V_{l,p}) <= mu_j(V_l)`
/// for `p >= l`, on one finite-difference discretization. Richardson
/// extrapolation is switched off since it need not preserve the ordering.
pub fn monotonicity_check(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    l: f64,
    p: f64,
    grid: &OracleGrid,
) -> Result<MonotonicityRow> {
    if p < l {
        return Err(Error::InvalidArgument(format!("support cut p = {p} must be at least l = {l}")));
    }
    let v_l = model::truncate_negative(v, l);
    let v_lp = model::truncate_support(&v_l, p);
    let options = OracleOptions { richardson: false, ..grid.options.clone() };
    let spectrum = |w: &PotentialGrid| -> Result<Vec<f64>> {
        Ok(fdoracle::oracle_negative_spectrum(w, bc, grid.length, grid.h, &options)?.expanded())
    };
    let (mu, mu_l, mu_lp) = (spectrum(v)?, spectrum(&v_l)?, spectrum(&v_lp)?);
    let mut worst = f64::NEG_INFINITY;
    for (j, &target) in mu_l.iter().enumerate() {
        for other in [&mu, &mu_lp] {
            let gap = other.get(j).map_or(f64::INFINITY, |&x| x - target);
            worst = worst.max(gap);
        }
    }
    Ok(MonotonicityRow { l, p, mu, mu_l, mu_lp, max_violation: worst.max(0.0) })
}

/// Parameters of [`random_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub max_dim: usize,
    /// Bumps live in `[0, support]`.
    pub support: f64,
    pub h: f64,
    /// Bound on the spectral norm of each bump amplitude.
    pub amplitude: f64,
    /// Bound on the spectral norm of `B`.
    pub boundary: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams { max_dim: 4, support: 2.0, h: 0.01, amplitude: 5.0, boundary: 2.0 }
    }
}

fn random_hermitian(rng: &mut impl Rng, n: usize, norm: f64) -> CMat {
    let raw = CMat::from_fn(n, n, |_, _| cplx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = matcore::hermitian_part(&raw);
    let size = matcore::op_norm(&h);
    if size == 0.0 {
        return h;
    }
    h * cplx(norm * rng.random_range(0.2..1.0) / size, 0.0)
}

/// Random problem `(V, (I, B))` with `V = sum_{p <= 3} S_p bump_p(x)`, smooth
/// `cos^2` bumps inside `[0, support]` and Hermitian `S_p`, `B` of bounded norm.
pub fn random_instance(rng: &mut impl Rng, params: &InstanceParams) -> Result<(PotentialGrid, BoundaryPair)> {
    let n = rng.random_range(1..=params.max_dim);
    let bumps: Vec<(CMat, f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| {
            let s = random_hermitian(rng, n, params.amplitude);
            let center = rng.random_range(0.125..0.875) * params.support;
            let room = center.min(params.support - center);
            let width = rng.random_range(0.3..1.0) * room;
            (s, center, width)
        })
        .collect();
    let v = PotentialGrid::from_fn(n, params.support, params.h, |x| {
        let mut acc = matcore::zeros(n);
        for (s, center, width) in &bumps {
            let t = (x - center) / width;
            if t.abs() < 1.0 {
                let shape = (0.5 * std::f64::consts::PI * t).cos().powi(2);
                acc += s * cplx(shape, 0.0);
            }
        }
        acc
    })?;
    let b = HermMatrix::new(random_hermitian(rng, n, params.boundary));
    Ok((v, BoundaryPair::robin(&b)))
}

/// Truncation length for the oracle given the Jost spectrum of the problem.
pub fn oracle_length(v: &PotentialGrid, kappas: &[f64]) -> f64 {
    let kmin = kappas.iter().copied().fold(f64::INFINITY, f64::min);
    if kmin.is_finite() {
        fdoracle::suggested_length(v, kmin).max(20.0)
    } else {
        (4.0 * v.x_max()).max(20.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free(n: usize) -> PotentialGrid {
        PotentialGrid::zero(n, 1e-2, 1.0).unwrap()
    }

    #[test]
    fn scalar_worked_example() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        let r = lt_evaluate(&free(1), &bc, &SpectralOptions::default()).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-9);
        assert!((r.rhs - 0.25).abs() < 1e-12);
        assert!((r.ledger[0] - 2.0).abs() < 1e-8);
        assert!((r.strengthened_rhs - 0.75).abs() < 1e-8);
        assert!(r.verdict && r.passed());
    }

    #[test]
    fn diagonal_robin_example() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, -2.0]));
        let r = lt_evaluate(&free(2), &bc, &SpectralOptions::default()).unwrap();
        assert!((r.lhs - 3.0).abs() < 1e-9);
        assert!((r.rhs - 0.75).abs() < 1e-12);
        assert!((r.margin - 2.25).abs() < 1e-9);
    }

    #[test]
    fn positive_boundary_has_unmet_hypothesis() {
        let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[1.0]));
        let r = lt_evaluate(&free(1), &bc, &SpectralOptions::default()).unwrap();
        assert!(!r.hypothesis_met);
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs < 0.0);
        assert!(r.passed());
    }

    #[test]
    fn positivity_ledger_examples() {
        let opts = SpectralOptions::default();
        let l = positivity_ledger(&free(2), &BoundaryPair::robin(&HermMatrix::identity(2)), &opts).unwrap();
        assert_eq!(l.channels, vec![1.0, 1.0]);
        let l = positivity_ledger(&free(1), &BoundaryPair::neumann(1), &opts).unwrap();
        assert_eq!(l.channels, vec![0.0]);
        assert!(l.passed());
        let bound = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
        assert!(matches!(positivity_ledger(&free(1), &bound, &opts), Err(Error::Precondition(_))));
    }

    #[test]
    fn dirichlet_examples() {
        let q = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[-1.0]), 1.0, 1.0, 0.01).unwrap();
        let t = dirichlet_no_bound_state_check(&q, &[0.0, 2.0, 4.0], &OracleGrid::default()).unwrap();
        assert!((t.first_moment - 0.5).abs() < 1e-12);
        assert_eq!(t.rows[0].negative_count, 0);
        assert!(t.rows[1].guaranteed && t.rows[1].negative_count == 0);
        assert!(!t.rows[2].guaranteed && t.rows[2].negative_count == 1);
        assert!(t.passed());
    }

    #[test]
    fn random_instances_are_reproducible() {
        let params = InstanceParams::default();
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(7), &params).unwrap();
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(7), &params).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert!(a.0.x_max() <= 2.0 + 1e-12);
    }
}
