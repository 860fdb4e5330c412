//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use halfline::darboux::{self, AddOptions};
use halfline::fdoracle::{self, OracleOptions};
use halfline::ltcheck::{self, InstanceParams, OracleGrid};
use halfline::matcore::{self, cplx, CMat, HermMatrix};
use halfline::propagate::{self, PropagateOptions};
use halfline::spectral::{self, SpectralOptions};
use halfline::{io, BoundaryPair, PotentialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail }
    }
}

type Check = fn() -> Result<Outcome, halfline::Error>;

fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
    let raw = CMat::from_fn(n, n, |_, _| cplx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    raw.qr().q()
}

/// Scalar Robin `B = -1`: one state at `kappa = 1` with `C^2 = 2`, whose
/// removal leaves `V = 0`, `B = 1`.
fn worked_scalar_chain() -> Result<Outcome, halfline::Error> {
    let v = PotentialGrid::zero(1, 1e-2, 3.0)?;
    let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0]));
    let report = spectral::find_bound_states(&v, &bc, &SpectralOptions::default())?;
    if report.states.len() != 1 {
        return Ok(Outcome::new(false, format!("{} states found", report.states.len())));
    }
    let s = &report.states[0];
    let kappa_err = (s.kappa - 1.0).abs();
    let c2_err = ((&s.c * &s.c)[(0, 0)].re - 2.0).abs();
    let mut phi_err = 0.0_f64;
    for x in [0.0, 0.37, 1.0, 2.5, 3.0, 4.0] {
        let big_phi = s.phi_at(x);
        phi_err = phi_err.max((big_phi[(0, 0)].re - 2f64.sqrt() * (-x).exp()).abs());
    }
    let out = darboux::remove_bound_state(&v, &bc, &report.states, 0)?;
    let v_err = out.v_tilde.sup_norm();
    let b_err = (out.bc_tilde.b[(0, 0)].re - 1.0).abs();
    let ks = darboux::det_sample_points();
    let det = darboux::determinant_identity(&v, &bc, &out.v_tilde, &out.bc_tilde, s.kappa, s.m, &ks)?;
    let det_err = det.iter().copied().fold(0.0, f64::max);
    let worst = [kappa_err, c2_err, phi_err, v_err, b_err, det_err].into_iter().fold(0.0, f64::max);
    Ok(Outcome::new(
        worst < 1e-7 && ks.len() >= 10 && out.checks.passed(),
        format!(
            "kappa err {kappa_err:.1e}, C^2 err {c2_err:.1e}, Phi err {phi_err:.1e}, |V~| {v_err:.1e}, \
             B~ err {b_err:.1e}, det identity {det_err:.1e} at {} points",
            ks.len()
        ),
    ))
}

/// `n = 2`, `B = diag(-1, -2)`: removing `kappa = 2` keeps `kappa = 1` and
/// its `Q`, `C`.
fn matrix_removal() -> Result<Outcome, halfline::Error> {
    let opts = SpectralOptions::default();
    let v = PotentialGrid::zero(2, 1e-2, 3.0)?;
    let bc = BoundaryPair::robin(&HermMatrix::from_real_diag(&[-1.0, -2.0]));
    let before = spectral::find_bound_states(&v, &bc, &opts)?;
    let idx = before.states.iter().position(|s| (s.kappa - 2.0).abs() < 1e-6);
    let (Some(idx), 2) = (idx, before.states.len()) else {
        return Ok(Outcome::new(false, format!("unexpected spectrum {:?}", before.eigenvalues())));
    };
    let out = darboux::remove_bound_state(&v, &bc, &before.states, idx)?;
    let after = spectral::find_bound_states(&out.v_tilde, &out.bc_tilde, &opts)?;
    if after.states.len() != 1 {
        return Ok(Outcome::new(false, format!("{} states after removal", after.states.len())));
    }
    let (old, new) = (&before.states[1 - idx], &after.states[0]);
    let kappa_err = (old.kappa - new.kappa).abs();
    let q_err = (&old.q.matrix - &new.q.matrix).norm();
    let c_err = (&old.c - &new.c).norm();
    let det = darboux::determinant_identity(&v, &bc, &out.v_tilde, &out.bc_tilde, 2.0, 1, &darboux::det_sample_points())?;
    let det_err = det.iter().copied().fold(0.0, f64::max);
    Ok(Outcome::new(
        kappa_err < 1e-7 && q_err < 1e-7 && c_err < 1e-7 && det_err < 1e-6 && out.checks.passed(),
        format!("remaining kappa err {kappa_err:.1e}, |dQ| {q_err:.1e}, |dC| {c_err:.1e}, det identity {det_err:.1e}"),
    ))
}

/// 200 seeded random problems with at least one bound state.
fn reverse_lt_suite() -> Result<Outcome, halfline::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c54_0001);
    let params = InstanceParams::default();
    let opts = SpectralOptions::default();
    let (mut accepted, mut drawn, mut violations) = (0, 0, 0);
    let (mut min_margin, mut min_strong, mut delta) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    while accepted < 200 {
        drawn += 1;
        let (v, bc) = ltcheck::random_instance(&mut rng, &params)?;
        let r = ltcheck::lt_evaluate(&v, &bc, &opts)?;
        if !r.hypothesis_met {
            continue;
        }
        accepted += 1;
        if !(r.passed() && r.margin > 0.0) {
            violations += 1;
        }
        min_margin = min_margin.min(r.margin);
        min_strong = min_strong.min(r.strengthened_margin);
        delta = delta.min(r.ledger[0]);
    }
    Ok(Outcome::new(
        violations == 0,
        format!(
            "{accepted} instances ({drawn} drawn), {violations} violations, min margin {min_margin:.3e}, \
             min strengthened margin {min_strong:.1e}, min Tr C_1^2 {delta:.3e}"
        ),
    ))
}

fn sharpness() -> Result<Outcome, halfline::Error> {
    let cs = [0.5, 0.2, 0.1, 0.05, 0.02];
    let table = ltcheck::sharpness_sweep(1.0, 1, &cs, 1e-3, &SpectralOptions::default())?;
    let last = table.rows.last().map_or(f64::NAN, |r| r.rho);
    let rhos: Vec<String> = table.rows.iter().map(|r| format!("{:.5}", r.rho)).collect();
    Ok(Outcome::new(
        table.passed() && last < 0.2501,
        format!(
            "rho = [{}], max identity residual {:.1e}",
            rhos.join(", "),
            table.max_identity_residual()
        ),
    ))
}

/// Eigenvalues in `(-EDGE_BAND, 0)` are too close to the oracle cutoff to
/// compare and are dropped on both sides.
const EDGE_BAND: f64 = 2e-4;

fn compare_with_oracle(v: &PotentialGrid, bc: &BoundaryPair) -> Result<(bool, f64, usize), halfline::Error> {
    let report = spectral::find_bound_states(v, bc, &SpectralOptions::default())?;
    let jost: Vec<(f64, usize)> = report.eigenvalues().into_iter().filter(|&(l, _)| l < -EDGE_BAND).collect();
    let kappas: Vec<f64> = jost.iter().map(|&(l, _)| (-l).sqrt()).collect();
    let length = ltcheck::oracle_length(v, &kappas);
    let oracle = fdoracle::oracle_negative_spectrum(v, bc, length, 0.005, &OracleOptions::default())?;
    let fd: Vec<(f64, usize)> = oracle.eigenvalues.into_iter().filter(|&(l, _)| l < -EDGE_BAND).collect();
    if jost.len() != fd.len() || jost.iter().zip(&fd).any(|(a, b)| a.1 != b.1) {
        return Ok((false, f64::INFINITY, jost.len()));
    }
    let worst = jost.iter().zip(&fd).map(|(a, b)| (a.0 - b.0).abs()).fold(0.0, f64::max);
    Ok((worst < 5e-4, worst, jost.len()))
}

fn oracle_agreement() -> Result<Outcome, halfline::Error> {
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    let mut states = 0;
    for name in io::PRESET_NAMES {
        let (v, bc) = io::load_preset(name)?;
        let (ok, d, count) = compare_with_oracle(&v, &bc)?;
        worst = worst.max(d);
        states += count;
        if !ok {
            failures.push(name.to_string());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x4f52_4143);
    let params = InstanceParams::default();
    for i in 0..50 {
        let (v, bc) = ltcheck::random_instance(&mut rng, &params)?;
        let (ok, d, count) = compare_with_oracle(&v, &bc)?;
        worst = worst.max(d);
        states += count;
        if !ok {
            failures.push(format!("random #{i}"));
        }
    }
    Ok(Outcome::new(
        failures.is_empty(),
        format!(
            "4 presets + 50 random, {states} eigenvalues compared, max |dlambda| {worst:.2e}, mismatches {failures:?}"
        ),
    ))
}

/// The round trip is exact up to the O(h^2) error of representing the added
/// potential by cell averages.
const ROUND_TRIP_H: f64 = 3e-4;

fn add_remove_round_trip() -> Result<Outcome, halfline::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4144_4452);
    let opts = AddOptions::default();
    let (mut worst_v, mut worst_b, mut worst_bc) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut failed = 0;
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=n);
        let kappa = rng.random_range(0.5..1.5);
        let u = random_unitary(&mut rng, n);
        let diag: Vec<f64> = (0..n).map(|j| if j < m { rng.random_range(0.3..1.0) } else { 0.0 }).collect();
        let c = HermMatrix::new(&u * matcore::real_diag(&diag) * u.adjoint());
        let v = PotentialGrid::zero(n, ROUND_TRIP_H, 0.0)?;
        let bc = BoundaryPair::neumann(n);
        let out = darboux::add_bound_state(&v, &bc, kappa, &c, &opts)?;
        let c2 = c.as_matrix() * c.as_matrix();
        let b_dev = (&out.bc_new.b + &c2).norm() / c2.norm();
        worst_v = worst_v.max(out.checks.round_trip_potential);
        worst_b = worst_b.max(out.checks.round_trip_boundary);
        worst_bc = worst_bc.max(b_dev);
        if !(out.passed() && out.checks.round_trip_potential < 1e-6 && out.checks.round_trip_boundary < 1e-6 && b_dev < 1e-14) {
            failed += 1;
        }
    }
    Ok(Outcome::new(
        failed == 0,
        format!(
            "20 additions, {failed} failed, max |V_back| {worst_v:.1e}, max |B_back| {worst_b:.1e}, \
             max |B + C^2|/|C^2| {worst_bc:.1e}"
        ),
    ))
}

fn minmax_monotonicity() -> Result<Outcome, halfline::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4d4f_4e4f);
    let params = InstanceParams::default();
    let grid = OracleGrid { length: 20.0, h: 0.01, options: OracleOptions::default() };
    let (mut worst, mut failed, mut eigen) = (0.0_f64, 0, 0);
    for _ in 0..20 {
        let (v, bc) = ltcheck::random_instance(&mut rng, &params)?;
        let l = rng.random_range(0.3..1.5);
        let p = rng.random_range(l..2.0);
        let row = ltcheck::monotonicity_check(&v, &bc, l, p, &grid)?;
        eigen += row.mu.len();
        worst = worst.max(row.max_violation);
        if !row.passed(1e-6) {
            failed += 1;
        }
    }
    Ok(Outcome::new(
        failed == 0,
        format!("20 instances, {eigen} eigenvalues of V, {failed} failed, max violation {worst:.1e}"),
    ))
}

fn dirichlet_remark() -> Result<Outcome, halfline::Error> {
    let q = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[-1.0]), 1.0, 1.0, 1e-2)?;
    let table = ltcheck::dirichlet_no_bound_state_check(&q, &[0.5, 1.0, 2.0, 4.0], &OracleGrid::default())?;
    let counts: Vec<usize> = table.rows.iter().map(|r| r.negative_count).collect();
    let guaranteed: Vec<bool> = table.rows.iter().map(|r| r.guaranteed).collect();
    Ok(Outcome::new(
        table.passed() && counts == [0, 0, 0, 1] && guaranteed == [true, true, true, false],
        format!("counts for beta = 0.5, 1, 2, 4: {counts:?}"),
    ))
}

fn numerical_sanity() -> Result<Outcome, halfline::Error> {
    // Fourth-order convergence against the free closed form.
    let bc = BoundaryPair::new(
        matcore::identity(2),
        matcore::from_real_rows(&[&[-1.0, 0.5], &[0.5, -2.0]]),
    )?;
    let k = cplx(3.0, 0.0);
    let mut errors = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let v = PotentialGrid::zero(2, h, 2.0)?;
        let sol = propagate::regular_solution(&v, &bc, k, PropagateOptions::default())?;
        let mut e = 0.0_f64;
        for j in 0..sol.len() {
            let (p, dp) = propagate::free_regular(&bc, k, sol.x(j));
            e = e.max((sol.psi(j) - p).norm()).max((sol.dpsi(j) - dp).norm());
        }
        errors.push(e);
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|&o| (3.7..4.3).contains(&o));

    // Wronskian of f(-k) and phi(k) equals J(k) at every node.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5752_4f4e);
    let (v, bc) = ltcheck::random_instance(&mut rng, &InstanceParams { max_dim: 3, ..InstanceParams::default() })?;
    let mut drift = 0.0_f64;
    for k in [cplx(0.7, 0.0), cplx(1.3, 0.0), cplx(2.1, 0.0)] {
        let f = propagate::jost_solution(&v, -k, PropagateOptions::default())?;
        let phi = propagate::regular_solution(&v, &bc, k, PropagateOptions::default())?;
        let j = spectral::jost_matrix(&v, &bc, k)?;
        let scale = j.norm().max(1.0);
        drift = drift.max(propagate::wronskian_drift(&f, &phi) / scale);
        drift = drift.max((propagate::wronskian(&f, &phi, 0) - &j).norm() / scale);
    }

    // Penrose identities on random rank-deficient matrices.
    let mut penrose = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let r = rng.random_range(0..=n);
        let (u, w) = (random_unitary(&mut rng, n), random_unitary(&mut rng, n));
        let sigma: Vec<f64> = (0..n).map(|i| if i < r { rng.random_range(0.1..3.0) } else { 0.0 }).collect();
        let m = &u * matcore::real_diag(&sigma) * w.adjoint();
        for hint in [None, Some(r)] {
            let x = matcore::moore_penrose(&m, hint)?;
            penrose = penrose.max(matcore::penrose_residuals(&m, &x).into_iter().fold(0.0, f64::max));
        }
    }
    Ok(Outcome::new(
        order_ok && drift < 1e-8 && penrose < 1e-9,
        format!(
            "observed orders {:?}, Wronskian/J drift {drift:.1e}, Penrose residual {penrose:.1e}",
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 9] = [
        ("worked scalar chain", worked_scalar_chain, Duration::from_secs(1)),
        ("matrix removal", matrix_removal, Duration::from_secs(10)),
        ("reverse Lieb-Thirring suite", reverse_lt_suite, Duration::from_secs(600)),
        ("sharpness of 1/4", sharpness, Duration::from_secs(60)),
        ("oracle agreement", oracle_agreement, Duration::from_secs(300)),
        ("add/remove round trip", add_remove_round_trip, Duration::from_secs(120)),
        ("min-max monotonicity", minmax_monotonicity, Duration::from_secs(600)),
        ("Dirichlet criterion", dirichlet_remark, Duration::from_secs(60)),
        ("numerical sanity", numerical_sanity, Duration::from_secs(600)),
    ];
    let mut all = true;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let passed = outcome.passed && elapsed <= *budget;
        all &= passed;
        println!(
            "[{}] {} {name}: {} ({:.2}s, budget {}s)",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
