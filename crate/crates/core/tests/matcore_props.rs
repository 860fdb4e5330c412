use halfline::matcore::{
    cplx, hermitian_eigen, identity, kernel_projection, moore_penrose, penrose_residuals, positive_sqrt, sorted_svd, CMat,
};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n * n)
        .prop_map(move |v| CMat::from_iterator(n, n, v.into_iter().map(|(re, im)| cplx(re, im))))
}

/// Product of an `n x r` and an `r x n` factor: rank at most `r`.
fn low_rank(n: usize, r: usize) -> impl Strategy<Value = CMat> {
    let entries = prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * r);
    (entries.clone(), entries).prop_map(move |(a, b)| {
        let left = CMat::from_iterator(n, r, a.into_iter().map(|(re, im)| cplx(re, im)));
        let right = CMat::from_iterator(r, n, b.into_iter().map(|(re, im)| cplx(re, im)));
        left * right
    })
}

fn sized() -> impl Strategy<Value = CMat> {
    (1usize..=5).prop_flat_map(matrix)
}

fn deficient() -> impl Strategy<Value = CMat> {
    (2usize..=5).prop_flat_map(|n| (1..n).prop_flat_map(move |r| low_rank(n, r)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn svd_reconstructs(m in sized()) {
        let (s, u, v) = sorted_svd(&m);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let n = m.nrows();
        let recon = &u * CMat::from_diagonal(&s.iter().map(|&x| cplx(x, 0.0)).collect::<Vec<_>>().into()) * v.adjoint();
        prop_assert!((recon - &m).norm() <= 1e-12 * (1.0 + m.norm()));
        prop_assert!((u.adjoint() * &u - identity(n)).norm() < 1e-12);
        prop_assert!((v.adjoint() * &v - identity(n)).norm() < 1e-12);
    }

    #[test]
    fn svd_reconstructs_rank_deficient(m in deficient()) {
        let (s, u, v) = sorted_svd(&m);
        let recon = &u * CMat::from_diagonal(&s.iter().map(|&x| cplx(x, 0.0)).collect::<Vec<_>>().into()) * v.adjoint();
        prop_assert!((recon - &m).norm() <= 1e-12 * (1.0 + m.norm()));
        prop_assert!((u.adjoint() * &u - identity(m.nrows())).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose(m in deficient()) {
        let x = moore_penrose(&m, None).unwrap();
        let scale = 1.0 + m.norm() * x.norm();
        for r in penrose_residuals(&m, &x) {
            prop_assert!(r <= 1e-9 * scale, "residual {r}");
        }
    }

    #[test]
    fn kernel_projection_is_orthogonal_and_annihilates(m in deficient()) {
        let p = kernel_projection(&m, 1e-10);
        let (idem, herm) = p.defects();
        prop_assert!(idem < 1e-12 && herm < 1e-12);
        prop_assert!((&m * &p.matrix).norm() <= 1e-10 * (1.0 + m.norm()));
        prop_assert!(p.rank >= 1);
    }

    #[test]
    fn positive_sqrt_squares_back(a in sized()) {
        let n = a.nrows();
        let pd = a.adjoint() * &a + identity(n).scale(0.1);
        let r = positive_sqrt(&pd).unwrap();
        prop_assert!((&r * &r - &pd).norm() <= 1e-11 * pd.norm());
        let (values, _) = hermitian_eigen(&r);
        prop_assert!(values.iter().all(|&v| v > 0.0));
    }
}
