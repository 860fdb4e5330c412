use halfline::darboux::{self, AddOptions};
use halfline::fdoracle::{self, OracleOptions};
use halfline::io::{self, BoundaryFile, MatrixRepr, PotentialFile, SpectrumRepr};
use halfline::ltcheck::{self, InstanceParams, OracleGrid};
use halfline::matcore::{self, cplx, HermMatrix};
use halfline::model::normalize_to_robin;
use halfline::spectral;
use halfline::{BoundaryPair, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

/// Output of one subcommand.
pub struct Report {
    pub command: &'static str,
    pub passed: bool,
    pub data: Value,
    pub text: String,
    /// Extra files for `--out`, as `(name, contents)`.
    pub files: Vec<(String, String)>,
}

impl Report {
    fn new(command: &'static str, passed: bool, data: impl Serialize, text: String) -> Result<Self> {
        Ok(Report { command, passed, data: serde_json::to_value(data)?, text, files: Vec::new() })
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn robin(bc: &BoundaryPair) -> Result<BoundaryPair> {
    if bc.is_robin_form() {
        Ok(bc.clone())
    } else {
        normalize_to_robin(bc)
    }
}

pub fn spectrum(cfg: &RunConfig) -> Result<Report> {
    let (v, bc) = cfg.problem()?;
    let report = spectral::find_bound_states(v, bc, &cfg.spectral)?;
    let defect = spectral::orthonormality_defect(&report.states);
    let mut text = format!("{} bound state(s), kappa_max = {:.6}\n", report.states.len(), report.kappa_max);
    for (j, s) in report.states.iter().enumerate() {
        text += &format!(
            "  [{j}] kappa = {:.10}  lambda = {:.10}  m = {}  Tr C^2 = {:.8}\n",
            s.kappa,
            s.lambda(),
            s.m,
            matcore::trace_re(&(&s.c * &s.c))
        );
    }
    for flag in &report.flags {
        text += &format!("  flag: {flag}\n");
    }
    text += &format!("  orthonormality defect {defect:.2e}\n");
    #[derive(Serialize)]
    struct Data {
        spectrum: SpectrumRepr,
        orthonormality_defect: f64,
    }
    let data = Data { spectrum: SpectrumRepr::from(&report), orthonormality_defect: defect };
    let mut out = Report::new("spectrum", defect < 1e-6, data, text)?;
    out.files.push(("scan.csv".into(), report.scan_csv()));
    Ok(out)
}

#[derive(Serialize)]
struct RemovalData {
    removed_kappa: f64,
    removed_m: usize,
    fd_deviation: f64,
    tail_sup: f64,
    rank_excess: f64,
    bracket_residual: f64,
    bracket_trace: f64,
    boundary_valid: bool,
    regular_solution_forms: f64,
    regular_solution_boundary: f64,
    determinant_residuals: Vec<f64>,
    remaining_before: Vec<(f64, usize)>,
    remaining_after: Vec<(f64, usize)>,
    remaining_data_shift: f64,
    boundary_after: MatrixRepr,
}

pub fn remove(cfg: &RunConfig, index: usize) -> Result<Report> {
    let (v, bc) = cfg.problem()?;
    let before = spectral::find_bound_states(v, bc, &cfg.spectral)?;
    if index >= before.states.len() {
        return Err(Error::Input(format!(
            "--index {index} out of range; the problem has {} bound state(s)",
            before.states.len()
        )));
    }
    let out = darboux::remove_bound_state(v, bc, &before.states, index)?;
    let state = &out.removed;
    let c = &out.checks;

    let k = cplx(0.7, 0.3);
    let diff = darboux::perturbed_regular_solution(v, bc, state, k)?;
    let integral = darboux::perturbed_regular_integral_form(v, bc, state, k)?;
    let forms = integral
        .iter()
        .zip(diff.psi_all())
        .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
        .fold(0.0, f64::max);
    // phi~ is the regular solution of (A, B~).
    let initial = (diff.psi(0) - &out.bc_tilde.a).norm().max((diff.dpsi(0) - &out.bc_tilde.b).norm());

    let det = darboux::determinant_identity(
        v,
        bc,
        &out.v_tilde,
        &out.bc_tilde,
        state.kappa,
        state.m,
        &darboux::det_sample_points(),
    )?;
    let after = spectral::find_bound_states(&out.v_tilde, &out.bc_tilde, &cfg.spectral)?;
    let remaining: Vec<_> = before.states.iter().enumerate().filter(|&(j, _)| j != index).map(|(_, s)| s).collect();
    let preserved = after.states.len() == remaining.len()
        && after.states.iter().zip(&remaining).all(|(a, b)| a.m == b.m && (a.kappa - b.kappa).abs() < 1e-7);
    let shift = after
        .states
        .iter()
        .zip(&remaining)
        .map(|(a, b)| (&a.q.matrix - &b.q.matrix).norm().max((&a.c - &b.c).norm()))
        .fold(0.0, f64::max);
    let det_max = det.iter().copied().fold(0.0, f64::max);
    let passed = c.passed() && det_max < 1e-6 && preserved && shift < 1e-6 && forms < 1e-6 && initial < 1e-6;

    let mut text = format!("removed kappa = {:.10} (m = {})\n", state.kappa, state.m);
    text += &format!("  W rank excess             {:.2e}\n", c.rank_excess);
    text += &format!("  potential: analytic vs FD {:.2e}  tail {:.2e}\n", c.fd_deviation, c.tail_sup);
    text += &format!("  regular solution forms    {forms:.2e}  initial data {initial:.2e}\n");
    text += &format!(
        "  bracket limit 2 kappa P    {:.2e}  trace {:.6}\n",
        c.bracket.residual, c.bracket.trace
    );
    text += &format!("  new boundary valid        {}\n", c.boundary.valid);
    text += &format!("  determinant factor        {det_max:.2e} over {} points\n", det.len());
    text += &format!(
        "  remaining states          {} -> {} ({}), data shift {shift:.2e}\n",
        remaining.len(),
        after.states.len(),
        verdict(preserved)
    );
    text += &format!("  verdict                   {}\n", verdict(passed));

    let data = RemovalData {
        removed_kappa: state.kappa,
        removed_m: state.m,
        fd_deviation: c.fd_deviation,
        tail_sup: c.tail_sup,
        rank_excess: c.rank_excess,
        bracket_residual: c.bracket.residual,
        bracket_trace: c.bracket.trace,
        boundary_valid: c.boundary.valid,
        regular_solution_forms: forms,
        regular_solution_boundary: initial,
        determinant_residuals: det,
        remaining_before: remaining.iter().map(|s| (s.kappa, s.m)).collect(),
        remaining_after: after.states.iter().map(|s| (s.kappa, s.m)).collect(),
        remaining_data_shift: shift,
        boundary_after: MatrixRepr::from_matrix(&out.bc_tilde.b),
    };
    let mut report = Report::new("remove", passed, data, text)?;
    report.files.push(("potential.json".into(), serde_json::to_string(&PotentialFile::from_grid(&out.v_tilde))?));
    report.files.push(("boundary.json".into(), serde_json::to_string(&BoundaryFile::from_pair(&out.bc_tilde))?));
    Ok(report)
}

pub fn add(cfg: &RunConfig, kappa: f64, rank: usize, c: f64) -> Result<Report> {
    let (v, bc) = cfg.problem()?;
    let bc = robin(bc)?;
    let n = v.n();
    if rank == 0 || rank > n {
        return Err(Error::Input(format!("--rank must lie in 1..={n}")));
    }
    if !(c > 0.0) {
        return Err(Error::Input("--c must be positive".into()));
    }
    let diag: Vec<f64> = (0..n).map(|j| if j < rank { c } else { 0.0 }).collect();
    let cm = HermMatrix::from_real_diag(&diag);
    let opts = AddOptions { spectral: cfg.spectral.clone(), ..AddOptions::default() };
    let out = darboux::add_bound_state(v, &bc, kappa, &cm, &opts)?;
    let ch = &out.checks;
    let b_dev = (&out.bc_new.b - (&bc.b - cm.as_matrix() * cm.as_matrix())).norm();
    let passed = out.passed();
    let mut text = format!("added kappa = {kappa} with C = {c} on {rank} channel(s)\n");
    text += &format!("  trace identity residual   {:.2e}\n", ch.trace_identity_residual);
    text += &format!("  B_new - (B - C^2)         {b_dev:.2e}\n");
    text += &format!("  min eig of I + C Z C      {:.6}\n", ch.min_m_eigenvalue);
    text += &format!("  recovered kappa, m        {:.10}, {}\n", ch.kappa_recovered, ch.m_recovered);
    text += &format!("  round trip: |V| {:.2e}  |B| {:.2e}  |C| {:.2e}\n", ch.round_trip_potential, ch.round_trip_boundary, ch.c_deviation);
    text += &format!("  verdict                   {}\n", verdict(passed));
    #[derive(Serialize)]
    struct Data {
        kappa: f64,
        m: usize,
        trace_identity_residual: f64,
        boundary_deviation: f64,
        min_m_eigenvalue: f64,
        kappa_recovered: f64,
        m_recovered: usize,
        round_trip_potential: f64,
        round_trip_boundary: f64,
        c_deviation: f64,
        boundary_new: MatrixRepr,
    }
    let data = Data {
        kappa,
        m: out.m,
        trace_identity_residual: ch.trace_identity_residual,
        boundary_deviation: b_dev,
        min_m_eigenvalue: ch.min_m_eigenvalue,
        kappa_recovered: ch.kappa_recovered,
        m_recovered: ch.m_recovered,
        round_trip_potential: ch.round_trip_potential,
        round_trip_boundary: ch.round_trip_boundary,
        c_deviation: ch.c_deviation,
        boundary_new: MatrixRepr::from_matrix(&out.bc_new.b),
    };
    let mut report = Report::new("add", passed, data, text)?;
    report.files.push(("potential.json".into(), serde_json::to_string(&PotentialFile::from_grid(&out.v_new))?));
    report.files.push(("boundary.json".into(), serde_json::to_string(&BoundaryFile::from_pair(&out.bc_new))?));
    Ok(report)
}

fn lt_text(r: &ltcheck::LTReport) -> String {
    let mut text = format!("states (kappa, m): {:?}\n", r.states);
    text += &format!("  lhs  sum m_j kappa_j                 {:.10}\n", r.lhs);
    text += &format!("  rhs  (-int Tr V - Tr B)/4            {:.10}\n", r.rhs);
    text += &format!("  strengthened rhs (+ sum Tr C_j^2/4)  {:.10}\n", r.strengthened_rhs);
    text += &format!("  margin {:.6e}  strengthened margin {:.6e}\n", r.margin, r.strengthened_margin);
    if !r.hypothesis_met {
        text += "  no bound state: the inequality makes no claim\n";
    }
    text
}

pub fn lt_check(cfg: &RunConfig, random: Option<usize>) -> Result<Report> {
    if let Some(count) = random {
        return lt_random(cfg, count);
    }
    let (v, bc) = cfg.problem()?;
    let report = ltcheck::lt_evaluate(v, bc, &cfg.spectral)?;
    let mut text = lt_text(&report);
    let ledger = if report.hypothesis_met {
        None
    } else {
        let l = ltcheck::positivity_ledger(v, bc, &cfg.spectral)?;
        text += &format!("  channel ledger int V_rr + B_rr: {:?}\n", l.channels);
        Some(l)
    };
    let passed = report.passed() && ledger.as_ref().is_none_or(|l| l.passed());
    text += &format!("  verdict {}\n", verdict(passed));
    #[derive(Serialize)]
    struct Data {
        report: ltcheck::LTReport,
        positivity: Option<ltcheck::PositivityLedger>,
    }
    Report::new("lt-check", passed, Data { report, positivity: ledger }, text)
}

fn lt_random(cfg: &RunConfig, count: usize) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = InstanceParams::default();
    if let Some(h) = cfg.h {
        params.h = h;
    }
    #[derive(Serialize)]
    struct Row {
        n: usize,
        states: usize,
        lhs: f64,
        rhs: f64,
        margin: f64,
        strengthened_margin: f64,
        passed: bool,
    }
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let (v, bc) = ltcheck::random_instance(&mut rng, &params)?;
        let r = ltcheck::lt_evaluate(&v, &bc, &cfg.spectral)?;
        rows.push(Row {
            n: v.n(),
            states: r.states.len(),
            lhs: r.lhs,
            rhs: r.rhs,
            margin: r.margin,
            strengthened_margin: r.strengthened_margin,
            passed: r.passed(),
        });
    }
    let with_states: Vec<&Row> = rows.iter().filter(|r| r.states > 0).collect();
    let failures = rows.iter().filter(|r| !r.passed).count();
    let min_margin = with_states.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let text = format!(
        "{count} random instances (seed {}), {} with bound states, {failures} failure(s), min margin {min_margin:.4e}\n",
        cfg.seed,
        with_states.len()
    );
    let mut csv = String::from("n,states,lhs,rhs,margin,strengthened_margin,passed\n");
    for r in &rows {
        csv += &format!("{},{},{},{},{},{},{}\n", r.n, r.states, r.lhs, r.rhs, r.margin, r.strengthened_margin, r.passed);
    }
    let mut report = Report::new("lt-check", failures == 0, rows, text)?;
    report.files.push(("instances.csv".into(), csv));
    Ok(report)
}

pub fn sharpness(cfg: &RunConfig, kappa: f64, rank: usize, c_list: &[f64]) -> Result<Report> {
    let h = cfg.h.unwrap_or(1e-3);
    let table = ltcheck::sharpness_sweep(kappa, rank, c_list, h, &cfg.spectral)?;
    let mut text = format!("kappa = {kappa}, m = {rank}, h = {h}\n");
    text += "         c        lhs   -int TrV - TrB     Tr C^2   identity        rho\n";
    let mut csv = String::from("c,lhs,integral_trace_v,trace_b,trace_c2,identity_residual,rho\n");
    for r in &table.rows {
        text += &format!(
            "{:>10.4} {:>10.6} {:>16.8} {:>10.6} {:>10.2e} {:>10.6}\n",
            r.c,
            r.lhs,
            -r.integral_trace_v - r.trace_b,
            r.trace_c2,
            r.identity_residual,
            r.rho
        );
        csv += &format!(
            "{},{},{},{},{},{},{}\n",
            r.c, r.lhs, r.integral_trace_v, r.trace_b, r.trace_c2, r.identity_residual, r.rho
        );
    }
    text += &format!(
        "rho decreasing: {}, above 1/4: {}, verdict {}\n",
        table.decreasing,
        table.above_quarter,
        verdict(table.passed())
    );
    let passed = table.passed();
    let mut report = Report::new("sharpness", passed, table, text)?;
    report.files.push(("sharpness.csv".into(), csv));
    Ok(report)
}

pub fn oracle(cfg: &RunConfig, compare: bool, length: Option<f64>, fd_h: f64) -> Result<Report> {
    let (v, bc) = cfg.problem()?;
    let jost = if compare || length.is_none() {
        Some(spectral::find_bound_states(v, bc, &cfg.spectral)?)
    } else {
        None
    };
    let length = match (length, &jost) {
        (Some(l), _) => l,
        (None, Some(r)) => ltcheck::oracle_length(v, &r.states.iter().map(|s| s.kappa).collect::<Vec<_>>()),
        (None, None) => unreachable!(),
    };
    let fd = fdoracle::oracle_negative_spectrum(v, bc, length, fd_h, &OracleOptions::default())?;
    let mut text = format!("finite differences on [0, {length}] with h = {fd_h}\n");
    for (l, m) in &fd.eigenvalues {
        text += &format!("  lambda = {l:.8}  m = {m}\n");
    }
    #[derive(Serialize)]
    struct Data {
        length: f64,
        h: f64,
        eigenvalues: Vec<(f64, usize)>,
        jost: Option<Vec<(f64, usize)>>,
        max_difference: Option<f64>,
    }
    let mut passed = true;
    let mut max_difference = None;
    let jost_values = if compare { jost.as_ref().map(|r| r.eigenvalues()) } else { None };
    if let Some(jv) = &jost_values {
        let same_shape = jv.len() == fd.eigenvalues.len() && jv.iter().zip(&fd.eigenvalues).all(|(a, b)| a.1 == b.1);
        let diff = if same_shape {
            jv.iter().zip(&fd.eigenvalues).map(|(a, b)| (a.0 - b.0).abs()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        passed = diff < 5e-4;
        max_difference = Some(diff);
        text += &format!("Jost spectrum {jv:?}\n  max |dlambda| {diff:.3e}, verdict {}\n", verdict(passed));
    }
    let data = Data { length, h: fd_h, eigenvalues: fd.eigenvalues.clone(), jost: jost_values, max_difference };
    Report::new("oracle", passed, data, text)
}

pub fn dirichlet_check(cfg: &RunConfig, betas: &[f64], length: f64, fd_h: f64) -> Result<Report> {
    let q = cfg.potential()?;
    let grid = OracleGrid { length, h: fd_h, options: OracleOptions::default() };
    let table = ltcheck::dirichlet_no_bound_state_check(q, betas, &grid)?;
    let mut text = format!("int x |Q| dx = {:.8}\n", table.first_moment);
    text += "      beta   1 - |beta| int x|Q|   guaranteed   negative eigenvalues\n";
    for r in &table.rows {
        text += &format!("{:>10.4} {:>21.6} {:>12} {:>22}\n", r.beta, r.criterion, r.guaranteed, r.negative_count);
    }
    text += &format!("verdict {}\n", verdict(table.passed()));
    let passed = table.passed();
    Report::new("dirichlet-check", passed, table, text)
}

pub fn presets() -> Result<Report> {
    let mut files = Vec::new();
    let mut text = String::new();
    for name in io::PRESET_NAMES {
        let (v, b) = io::preset(name).expect("listed preset");
        text += &format!("{name}: n = {}, x_max = {}, h = {}\n", v.n, v.x_max, v.h);
        files.push((format!("{name}.potential.json"), serde_json::to_string_pretty(&v)?));
        files.push((format!("{name}.boundary.json"), serde_json::to_string_pretty(&b)?));
    }
    let mut report = Report::new("presets", true, io::PRESET_NAMES, text)?;
    report.files = files;
    Ok(report)
}
