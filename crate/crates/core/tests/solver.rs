use nalgebra::{DMatrix, DVector};

use privdist_core::cases::random::random_problem;
use privdist_core::cases::{build_opf, opf_toy};
use privdist_core::privacy::NoiseSchedule;
use privdist_core::solver::*;
use privdist_core::{DistributedProblem, Error, Graph, QuadraticLocal, SelectionMap};

fn single(q: QuadraticLocal, g: f64) -> DistributedProblem {
    let graph = Graph::from_edges(1, []);
    let sel = SelectionMap::neighborhood(&graph, &[q.dim()]);
    DistributedProblem::new(graph, sel, vec![q], vec![g]).unwrap()
}

fn scalar(h: f64, lin: f64) -> QuadraticLocal {
    QuadraticLocal::unconstrained(
        DMatrix::from_element(1, 1, h),
        DVector::from_element(1, lin),
    )
    .unwrap()
}

#[test]
fn single_agent_sits_at_the_optimum() {
    let p = single(scalar(1.0, -1.0), 2.0);
    let tr = run_algorithm1(&p, &NoiseSchedule::zero(1), 5, 0).unwrap();
    assert_eq!(tr.len(), 5);
    for it in &tr.iterations {
        assert!((it.agents[0].z[0] - 1.0).abs() < 1e-12);
        assert_eq!(it.agents[0].mu[0], 0.0);
        assert!((it.tau - 1.0 / it.k as f64).abs() < 1e-15);
    }
    let dual = run_algorithm2(&p, &NoiseSchedule::zero(1), 5, 0).unwrap();
    assert!(dual.iter().all(|d| d.w.amax() == 0.0));
}

#[test]
fn zero_iterations() {
    let p = single(scalar(1.0, 0.0), 1.0);
    assert!(run_algorithm2(&p, &NoiseSchedule::zero(1), 0, 0)
        .unwrap()
        .is_empty());
    assert!(run_algorithm1(&p, &NoiseSchedule::zero(1), 0, 0)
        .unwrap()
        .is_empty());
}

#[test]
fn replay_is_byte_identical() {
    let p = build_opf(&opf_toy()).unwrap();
    let noise = NoiseSchedule::constant(p.agents(), 0.1);
    let a = run_algorithm1(&p, &noise, 30, 7).unwrap();
    let b = run_algorithm1(&p, &noise, 30, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(None), b.to_csv(None));
    let serial = run_algorithm1_with(
        &p,
        &noise,
        30,
        7,
        &RunOptions {
            parallel: false,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(a.iterations, serial.iterations);
    let other = run_algorithm1(&p, &noise, 30, 8).unwrap();
    assert_ne!(a.iterations, other.iterations);
}

#[test]
fn consensus_average_and_dual_update() {
    let p = random_problem(3, 4, 3);
    let noise = NoiseSchedule::constant(p.agents(), 0.05);
    let tr = run_algorithm1(&p, &noise, 3, 1).unwrap();
    let sel = p.selection();
    let mut prev: Vec<DVector<f64>> = (0..p.agents())
        .map(|i| DVector::zeros(sel.local_dim(i)))
        .collect();
    for it in &tr.iterations {
        let v = it.v();
        for g in 0..sel.global_dim() {
            let h = sel.holders(g);
            let avg = h.iter().map(|&(a, pos)| it.agents[a].z[pos]).sum::<f64>() / h.len() as f64;
            assert_eq!(v[g], avg);
        }
        for (i, a) in it.agents.iter().enumerate() {
            assert_eq!(a.z, &a.z_clean + &a.delta);
            let expect = &prev[i] + (sel.gather(i, &v) - &a.z) * it.tau;
            assert!((&a.mu - expect).amax() < 1e-15);
        }
        prev = it.mu();
    }
}

#[test]
fn noiseless_opf_gap_decays() {
    let p = build_opf(&opf_toy()).unwrap();
    let reference = centralized_reference(&p).unwrap();
    let tr = run_algorithm1(&p, &NoiseSchedule::zero(p.agents()), 500, 0).unwrap();
    let gap = |k: usize| dual_gap(&p, &tr.iterations[k - 1].mu(), &reference).unwrap();
    let noise = NoiseSchedule::zero(p.agents());
    for k in [1, 10, 50, 100, 200, 500] {
        let c = suboptimality_bound(&p, &noise, k).unwrap();
        assert!(gap(k) <= c, "k={k}: {} > {c}", gap(k));
    }
    assert!(gap(500) < 1e-4);
    assert!(tr.bounded());
}

#[test]
fn unbounded_iterates_are_flagged() {
    let p = single(scalar(1.0, -5.0), 1.0);
    let tr = run_algorithm1(&p, &NoiseSchedule::zero(1), 3, 0).unwrap();
    assert!(!tr.bounded());
    assert_eq!(tr.bound_violations.len(), 3);
    assert!((tr.bound_violations[0].norm - 5.0).abs() < 1e-12);
}

#[test]
fn solver_failure_names_agent_and_iteration() {
    let graph = Graph::from_edges(2, [(0, 1)]);
    let sel = SelectionMap::neighborhood(&graph, &[1, 1]);
    let free = QuadraticLocal::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    let p = DistributedProblem::new(graph, sel, vec![free.clone(), free], vec![1.0, 1.0]).unwrap();
    // z₁ ≤ −1 and −z₁ ≤ −1 cannot both hold
    let infeasible = QuadraticLocal::new(
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]),
        DVector::from_column_slice(&[-1.0, -1.0]),
    )
    .unwrap();
    let p = p.with_local(1, infeasible).unwrap();
    let err = run_algorithm1(&p, &NoiseSchedule::zero(2), 2, 0).unwrap_err();
    match &err {
        Error::Agent {
            agent, iteration, ..
        } => assert_eq!((*agent, *iteration), (1, 1)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(err.root(), Error::Infeasible));
}

#[test]
fn noise_schedule_must_cover_the_run() {
    let p = single(scalar(1.0, 0.0), 1.0);
    let short = NoiseSchedule::from_rows(vec![vec![0.1, 0.1]]).unwrap();
    assert!(run_algorithm1(&p, &short, 3, 0).is_err());
    assert!(run_algorithm1(&p, &NoiseSchedule::zero(2), 1, 0).is_err());
}

#[test]
fn dual_objective_examples() {
    let free = single(scalar(1.0, 0.0), 1.0);
    assert_eq!(dual_objective(&free, &DVector::zeros(1)).unwrap(), 0.0);
    let boxed = QuadraticLocal::new(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        DVector::from_column_slice(&[2.0, -1.0]),
    )
    .unwrap();
    let p = single(boxed, 2.0);
    assert!((dual_objective(&p, &DVector::zeros(1)).unwrap() - 0.5).abs() < 1e-9);

    let graph = Graph::from_edges(2, [(0, 1)]);
    let sel = SelectionMap::neighborhood(&graph, &[1, 0]);
    let pair = DistributedProblem::new(
        graph,
        sel,
        vec![scalar(1.0, 0.0), scalar(1.0, 0.0)],
        vec![1.0, 1.0],
    )
    .unwrap();
    assert_eq!(
        dual_objective(&pair, &DVector::from_column_slice(&[1.0, 1.0])).unwrap(),
        f64::NEG_INFINITY
    );
    assert!(
        dual_objective(&pair, &DVector::from_column_slice(&[1.0, -1.0]))
            .unwrap()
            .is_finite()
    );
}

#[test]
fn strong_duality_at_the_reference() {
    for seed in 0..5 {
        let p = random_problem(seed, 4, 2);
        let r = centralized_reference(&p).unwrap();
        let tr = run_algorithm1(&p, &NoiseSchedule::zero(p.agents()), 200, 0).unwrap();
        let d = dual_objective_split(&p, &tr.last().unwrap().mu()).unwrap();
        // weak duality: D(μ) ≤ primal optimum
        assert!(d <= r.value + 1e-7, "seed {seed}: {d} > {}", r.value);
        assert!((p.primal_objective(&r.v) - r.value).abs() < 1e-9);
    }
}

#[test]
fn suboptimality_bound_examples() {
    assert!((suboptimality_bound_moments(&[1.0], &[0.0], 1.0, 4).unwrap() - 1.0).abs() < 1e-15);
    assert!(
        (suboptimality_bound_moments(&[1.0, 1.0], &[1.0, 1.0], 2.0, 10).unwrap() - 0.4).abs()
            < 1e-15
    );
    let a = suboptimality_bound_moments(&[1.0, 2.0], &[0.3, 0.1], 0.7, 8).unwrap();
    let b = suboptimality_bound_moments(&[1.0, 2.0], &[0.3, 0.1], 0.7, 16).unwrap();
    assert!((a - 2.0 * b).abs() < 1e-14);
    assert!(suboptimality_bound_moments(&[1.0], &[0.0], 1.0, 0).is_err());

    let p = single(scalar(1.0, 0.0), 1.0);
    // σ² = 2·dim·scale² = 2·1·0.5² = 0.5
    let s = suboptimality_bound(&p, &NoiseSchedule::constant(1, 0.5), 2).unwrap();
    assert!((s - 4.0 * 1.5 / 2.0).abs() < 1e-14);
}

#[test]
fn warm_start_from_the_optimum_stays_put() {
    let p = build_opf(&opf_toy()).unwrap();
    let noise = NoiseSchedule::zero(p.agents());
    let long = run_algorithm1(&p, &noise, 400, 0).unwrap();
    let mu0 = long.last().unwrap().mu();
    let opts = RunOptions {
        mu0: Some(mu0.clone()),
        ..RunOptions::default()
    };
    let resumed = run_algorithm1_with(&p, &noise, 5, 0, &opts).unwrap();
    let drift = resumed
        .last()
        .unwrap()
        .mu()
        .iter()
        .zip(&mu0)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    assert!(drift < 1e-2, "{drift}");
    let bad = RunOptions {
        mu0: Some(vec![DVector::zeros(7)]),
        ..RunOptions::default()
    };
    assert!(matches!(
        run_algorithm1_with(&p, &noise, 1, 0, &bad),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn transcript_csv_layout() {
    let p = single(scalar(1.0, -1.0), 2.0);
    let tr = run_algorithm1(&p, &NoiseSchedule::zero(1), 2, 9).unwrap();
    let csv = tr.to_csv(Some(&[0.5, 0.25]));
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# privdist transcript v1 seed=9 problem="));
    assert_eq!(lines[1], "k,agent,tau,z,v,mu,dual_gap");
    assert_eq!(lines[2], "1,0,1,1,1,0,0.5");
    assert_eq!(lines[3], "2,0,0.5,1,1,0,0.25");
}
