use nalgebra::DVector;

use privdist_core::cases::{
    build_mpc, build_opf, centralized_closed_loop, default_building, mpc_closed_loop,
    opf_adjacency, opf_toy, ClosedLoopOptions,
};
use privdist_core::privacy::{
    sensitivity_bound_linear, sensitivity_sample_seeded, NoiseSchedule, SensitivityOptions,
};
use privdist_core::solver::{centralized_reference, run_algorithm1};
use privdist_core::{solve_local, AdjacencyMetric};

#[test]
fn decoupled_rooms_solve_independently() {
    let mut b = default_building();
    b.alpha = 0.0;
    let p = build_mpc(&b).unwrap();
    let joint = centralized_reference(&p).unwrap();
    let n = b.horizon + 1;
    for i in 0..b.rooms.len() {
        // without tracking, the center's ½R‖u‖² only adds to the room's own cost
        let room = p.local(i + 1);
        let h = room.hessian() + nalgebra::DMatrix::identity(n, n) * b.r;
        let alone = privdist_core::QuadraticLocal::new(
            h,
            room.linear().clone(),
            room.constraint_matrix().clone(),
            room.constraint_rhs().clone(),
        )
        .unwrap();
        let z = solve_local(&alone, &DVector::zeros(n), 1e-10).unwrap().z;
        let part = joint.v.rows(i * n, n);
        assert!((part - z).amax() < 1e-7);
    }
}

#[test]
fn noisy_loop_stays_finite_and_feasible() {
    let b = default_building();
    let opts = ClosedLoopOptions {
        k_per_step: 10,
        steps: 24,
        seed: 3,
        ..ClosedLoopOptions::default()
    };
    let tr = mpc_closed_loop(&b, &NoiseSchedule::constant(b.rooms.len() + 1, 0.1), &opts).unwrap();
    assert_eq!(tr.steps.len(), 24);
    for s in &tr.steps {
        assert!(s
            .inputs
            .iter()
            .all(|u| *u >= b.u_min - 1e-9 && *u <= b.u_max + 1e-9));
        assert!(s.temperatures.iter().all(|x| x.is_finite()));
    }
    let again =
        mpc_closed_loop(&b, &NoiseSchedule::constant(b.rooms.len() + 1, 0.1), &opts).unwrap();
    assert_eq!(tr.to_csv(), again.to_csv());
}

#[test]
fn resting_building_stays_at_rest() {
    let mut b = default_building();
    b.reference.iter_mut().for_each(|r| *r = 0.0);
    b.rooms.iter_mut().for_each(|r| r.x0 = [0.0, 0.0]);
    let opts = ClosedLoopOptions {
        k_per_step: 5,
        steps: 8,
        ..ClosedLoopOptions::default()
    };
    let tr = mpc_closed_loop(&b, &NoiseSchedule::zero(b.rooms.len() + 1), &opts).unwrap();
    assert!(tr
        .steps
        .iter()
        .all(|s| s.inputs.iter().all(|u| u.abs() < 1e-9)));
    let c = centralized_closed_loop(&b, 8).unwrap();
    assert!(c.max_total_input() < 1e-9);
}

#[test]
fn trajectory_csv_header() {
    let b = default_building();
    let c = centralized_closed_loop(&b, 2).unwrap();
    let csv = c.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# privdist mpc trajectory v1"));
    assert_eq!(
        lines.next(),
        Some("t,reference,total_input,tracking_error,inputs,temperatures")
    );
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn mpc_reference_sensitivity_is_dominated() {
    // the private reference enters the center's linear term
    let p = build_mpc(&default_building()).unwrap();
    let center = p.local(0);
    let est = sensitivity_sample_seeded(
        center,
        &AdjacencyMetric::linear_only(),
        0.05,
        0.05,
        1,
        0,
        &SensitivityOptions::default(),
    )
    .unwrap();
    assert!(est.gamma_n <= sensitivity_bound_linear(center) + 1e-9);
    assert!(est.dominance_holds(1e-9));
}

#[test]
fn opf_der_sensitivity_is_dominated_by_the_capacity_swing() {
    let f = opf_toy();
    let p = build_opf(&f).unwrap();
    let metrics = opf_adjacency(&f).unwrap();
    for (i, m) in metrics.iter().enumerate() {
        let opts = SensitivityOptions {
            truncate: Some(1000),
            ..SensitivityOptions::default()
        };
        let est =
            sensitivity_sample_seeded(p.local(i + 1), m, 0.05, 0.05, 9, i as u64, &opts).unwrap();
        // a DER's solution lives in its box, so it moves by at most the box width
        let d = &f.ders[i];
        assert!(est.gamma_n <= d.u_max - d.u_min + 1.0 + 1e-9);
    }
}

#[test]
fn opf_toy_runs_with_bounded_iterates() {
    let p = build_opf(&opf_toy()).unwrap();
    let tr = run_algorithm1(&p, &NoiseSchedule::zero(p.agents()), 50, 0).unwrap();
    assert!(tr.bounded());
}
