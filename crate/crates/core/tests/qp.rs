use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use privdist_core::cases::random::random_local;
use privdist_core::qp::kkt_residual;
use privdist_core::rng::{stream, Domain};
use privdist_core::{brute_force_local, solve_local, Error, QuadraticLocal};

fn boxed(h: &[f64], lin: &[f64], lo: &[f64], hi: &[f64]) -> QuadraticLocal {
    let n = lin.len();
    let mut c = DMatrix::zeros(2 * n, n);
    let mut rhs = DVector::zeros(2 * n);
    for i in 0..n {
        c[(i, i)] = 1.0;
        c[(n + i, i)] = -1.0;
        rhs[i] = hi[i];
        rhs[n + i] = -lo[i];
    }
    QuadraticLocal::new(
        DMatrix::from_row_slice(n, n, h),
        DVector::from_column_slice(lin),
        c,
        rhs,
    )
    .unwrap()
}

#[test]
fn oracle_matches_unconstrained_example() {
    let q = QuadraticLocal::unconstrained(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
    )
    .unwrap();
    let z = brute_force_local(&q, &DVector::zeros(1), 0.01, &[(-3.0, 3.0)]).unwrap();
    assert!((z[0] + 1.0).abs() <= 0.01);
    assert_eq!(
        solve_local(&q, &DVector::zeros(1), 1e-8).unwrap().z[0],
        -1.0
    );
}

#[test]
fn oracle_clips_on_boxes() {
    let q = boxed(
        &[2.0, 0.0, 0.0, 0.5],
        &[1.0, -1.0],
        &[-0.2, -1.0],
        &[0.3, 1.0],
    );
    let mu = DVector::from_column_slice(&[3.0, 0.0]);
    // clip(H⁻¹(μ − h)) = clip((1, 2)) = (0.3, 1)
    let z = brute_force_local(&q, &mu, 0.01, &[(-2.0, 2.0), (-2.0, 2.0)]).unwrap();
    assert!(
        (z[0] - 0.3).abs() <= 0.01 && (z[1] - 1.0).abs() <= 0.01,
        "{z}"
    );
    let exact = solve_local(&q, &mu, 1e-10).unwrap().z;
    assert!((exact[0] - 0.3).abs() < 1e-12 && (exact[1] - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_reports_empty_grid() {
    let q = boxed(&[1.0], &[0.0], &[5.0], &[6.0]);
    assert!(matches!(
        brute_force_local(&q, &DVector::zeros(1), 0.1, &[(-1.0, 1.0)]),
        Err(Error::EmptyGrid)
    ));
    assert!(brute_force_local(&q, &DVector::zeros(1), 0.0, &[(-1.0, 1.0)]).is_err());
}

#[test]
fn solver_is_never_beaten_by_the_grid() {
    let mut rng = stream(77, Domain::Instance, 0, 0);
    for _ in 0..100 {
        let dim = rng.random_range(1..=3);
        let rows = rng.random_range(1..=4);
        let q = random_local(&mut rng, dim, rows);
        let mu = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
        let sol = solve_local(&q, &mu, 1e-9).unwrap();
        assert!(q.violation(&sol.z) <= 1e-9);
        assert!(sol.w.iter().all(|w| *w >= 0.0));
        assert!(kkt_residual(&q, &mu, &sol.z, &sol.w) <= 1e-9);
        let r = 2.0 * (&mu - q.linear()).norm() / q.lambda_min() + 0.1;
        let grid = brute_force_local(&q, &mu, 0.25, &vec![(-r, r); dim]).unwrap();
        let f = |z: &DVector<f64>| q.objective(z) - mu.dot(z);
        assert!(f(&sol.z) <= f(&grid) + 1e-9);
    }
}

proptest! {
    #[test]
    fn projection_is_non_expansive(
        dim in 1usize..4,
        seed in any::<u64>(),
        a in proptest::collection::vec(-4.0f64..4.0, 3),
        b in proptest::collection::vec(-4.0f64..4.0, 3),
    ) {
        let mut rng = stream(seed, Domain::Instance, 1, 0);
        let shape = random_local(&mut rng, dim, 3);
        let q = QuadraticLocal::new(
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            shape.constraint_matrix().clone(),
            shape.constraint_rhs().clone(),
        ).unwrap();
        let mu = DVector::from_column_slice(&a[..dim]);
        let nu = DVector::from_column_slice(&b[..dim]);
        let za = solve_local(&q, &mu, 1e-10).unwrap().z;
        let zb = solve_local(&q, &nu, 1e-10).unwrap().z;
        prop_assert!((za - zb).norm() <= (mu - nu).norm() + 1e-8);
    }

    #[test]
    fn shift_identity(seed in any::<u64>(), dim in 1usize..4, rows in 0usize..4) {
        let mut rng = stream(seed, Domain::Instance, 2, 0);
        let q = random_local(&mut rng, dim, rows);
        let mu = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
        let a = solve_local(&q, &mu, 1e-12).unwrap().z;
        let b = solve_local(&q.with_linear(q.linear() - &mu), &DVector::zeros(dim), 1e-12).unwrap().z;
        prop_assert!((a - b).amax() <= 1e-9);
    }
}
