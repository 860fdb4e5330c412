//! Bound states of scalar square wells against the transcendental
//! matching conditions solved by bisection.

use halfline::matcore::real_diag;
use halfline::spectral::find_bound_states;
use halfline::{BoundaryPair, HermMatrix, PotentialGrid, SpectralOptions};

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn well(depth: f64) -> PotentialGrid {
    PotentialGrid::square_well(&HermMatrix::from_real_diag(&[-depth]), 1.0, 1.0, 1e-3).unwrap()
}

#[test]
fn neumann_square_well() {
    // psi = cos(q x) inside; matching to exp(-kappa x) gives q tan q = kappa.
    let v0: f64 = 4.0;
    let kappa = bisect(|k| { let q = (v0 - k * k).sqrt(); q * q.tan() - k }, 1.3, 1.99);
    let spec = find_bound_states(&well(v0), &BoundaryPair::neumann(1), &SpectralOptions::default()).unwrap();
    assert_eq!(spec.states.len(), 1);
    assert!((spec.states[0].kappa - kappa).abs() < 1e-8, "{} vs {kappa}", spec.states[0].kappa);
}

#[test]
fn dirichlet_square_well() {
    // psi = sin(q x) inside; q cot q = -kappa. Depth 9 gives one state.
    let v0: f64 = 9.0;
    let kappa = bisect(|k| { let q = (v0 - k * k).sqrt(); q / q.tan() + k }, 0.1, 2.5);
    let spec = find_bound_states(&well(v0), &BoundaryPair::dirichlet(1), &SpectralOptions::default()).unwrap();
    assert_eq!(spec.states.len(), 1);
    assert!((spec.states[0].kappa - kappa).abs() < 1e-8);
}

#[test]
fn robin_free_states_are_minus_b() {
    // V = 0 with psi'(0) = B psi(0): one state per negative eigenvalue of B.
    let v = PotentialGrid::zero(2, 1e-2, 1.0).unwrap();
    let bc = BoundaryPair::robin(&HermMatrix::new(real_diag(&[-0.7, 0.4])));
    let spec = find_bound_states(&v, &bc, &SpectralOptions::default()).unwrap();
    assert_eq!(spec.states.len(), 1);
    assert!((spec.states[0].kappa - 0.7).abs() < 1e-9);
}

#[test]
fn nonnegative_potential_has_no_states() {
    let v = PotentialGrid::square_well(&HermMatrix::from_real_diag(&[2.0, 1.0]), 1.0, 1.0, 1e-2).unwrap();
    let spec = find_bound_states(&v, &BoundaryPair::neumann(2), &SpectralOptions::default()).unwrap();
    assert!(spec.is_empty());
}
