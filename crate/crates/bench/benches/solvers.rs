use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DVector;
use privdist_core::cases::{
    build_mpc, build_opf, default_building, mpc_closed_loop, opf_adjacency, opf_toy,
    ClosedLoopOptions,
};
use privdist_core::privacy::{
    dual_grid, sensitivity_sample_seeded, NoiseSchedule, SensitivityOptions,
};
use privdist_core::solve_local;
use privdist_core::solver::{run_algorithm1, run_algorithm1_with, RunOptions};

fn local_qp(c: &mut Criterion) {
    let toy = build_opf(&opf_toy()).unwrap();
    let center = toy.local(0).clone();
    let mu = DVector::from_element(center.dim(), 0.3);
    c.bench_function("solve_local/opf_center", |b| {
        b.iter(|| solve_local(black_box(&center), &mu, 1e-10).unwrap())
    });

    let mpc = build_mpc(&default_building()).unwrap();
    let room = mpc.local(1).clone();
    let mu = DVector::from_element(room.dim(), 0.1);
    c.bench_function("solve_local/mpc_room", |b| {
        b.iter(|| solve_local(black_box(&room), &mu, 1e-10).unwrap())
    });
}

fn algorithm1(c: &mut Criterion) {
    let p = build_opf(&opf_toy()).unwrap();
    let noise = NoiseSchedule::constant(p.agents(), 0.1);
    let mut g = c.benchmark_group("algorithm1/opf_toy");
    g.sample_size(20);
    g.bench_function("k100_parallel", |b| {
        b.iter(|| run_algorithm1(&p, &noise, 100, 7).unwrap())
    });
    let serial = RunOptions {
        parallel: false,
        ..RunOptions::default()
    };
    g.bench_function("k100_serial", |b| {
        b.iter(|| run_algorithm1_with(&p, &noise, 100, 7, &serial).unwrap())
    });
    g.finish();
}

fn sensitivity(c: &mut Criterion) {
    let f = opf_toy();
    let p = build_opf(&f).unwrap();
    let metrics = opf_adjacency(&f).unwrap();
    let local = p.local(1).clone();
    let g_i = p.bounds()[1];
    let opts = SensitivityOptions {
        mu_grid: dual_grid(&local, 0.5 * g_i, 5),
        g_bound: Some(g_i),
        truncate: Some(1000),
        ..SensitivityOptions::default()
    };
    let mut g = c.benchmark_group("sensitivity");
    g.sample_size(10);
    g.bench_function("opf_der_n99", |b| {
        b.iter(|| sensitivity_sample_seeded(&local, &metrics[1], 0.1, 0.1, 3, 1, &opts).unwrap())
    });
    g.finish();
}

fn mpc_step(c: &mut Criterion) {
    let b = default_building();
    let noise = NoiseSchedule::constant(b.rooms.len() + 1, 0.05);
    let opts = ClosedLoopOptions {
        steps: 1,
        ..ClosedLoopOptions::default()
    };
    let mut g = c.benchmark_group("mpc");
    g.sample_size(20);
    g.bench_function("closed_loop_step_k10", |bch| {
        bch.iter_batched(
            || opts.clone(),
            |o| mpc_closed_loop(&b, &noise, &o).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, local_qp, algorithm1, sensitivity, mpc_step);
criterion_main!(benches);
