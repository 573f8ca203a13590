//! Distributed MPC for multi-room temperature tracking.
//!
//! Room `i` (agent `i ≥ 1`) owns its input sequence `u_i(0..=N)` and the
//! condensed cost of its own dynamics; the center (agent 0) sees every input
//! sequence and carries the aggregate tracking term `α(Σ_i u_i(t) − r(t))²`.
//! The input weight `R` is split evenly between room and center so that the
//! center's Hessian is positive definite.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{DistributedProblem, Graph, QuadraticLocal, SelectionMap};
use crate::privacy::NoiseSchedule;
use crate::rng::{child_seed, Domain};
use crate::solver::{centralized_reference, run_algorithm1_with, RunOptions};

pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Row-major 2×2 state matrix.
    pub a: [f64; 4],
    pub b: [f64; 2],
    /// Initial state `x̄_i` (temperature deviation, wall-temperature deviation).
    pub x0: [f64; 2],
}

impl Room {
    fn a(&self) -> Matrix2<f64> {
        Matrix2::new(self.a[0], self.a[1], self.a[2], self.a[3])
    }

    fn b(&self) -> Vector2<f64> {
        Vector2::new(self.b[0], self.b[1])
    }

    fn controllable(&self) -> bool {
        let b = self.b();
        let ab = self.a() * b;
        let det = b[0] * ab[1] - b[1] * ab[0];
        det.abs() > 1e-12 * (b.norm() * ab.norm()).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingModel {
    pub rooms: Vec<Room>,
    /// Horizon `N`; each room plans `N + 1` inputs.
    pub horizon: usize,
    /// Diagonal of the state weight `Q`.
    pub q: [f64; 2],
    pub r: f64,
    pub alpha: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Aggregate reference `r(t)`, indexed from the start of the window.
    pub reference: Vec<f64>,
}

impl BuildingModel {
    pub fn inputs(&self) -> usize {
        self.horizon + 1
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.rooms.is_empty() {
            issues.push("building has no rooms".into());
        }
        if self.horizon < 1 {
            issues.push("horizon must be at least 1".into());
        }
        if self.q.iter().any(|x| !(*x >= 0.0)) {
            issues.push("Q must be positive semidefinite".into());
        }
        if !(self.r > 0.0) {
            issues.push("R must be positive definite".into());
        }
        if !(self.alpha >= 0.0) {
            issues.push("tracking weight must be nonnegative".into());
        }
        if !(self.u_min <= self.u_max) {
            issues.push("u_min > u_max".into());
        }
        if self.reference.len() < self.inputs() {
            issues.push(format!(
                "reference has {} samples, the horizon needs {}",
                self.reference.len(),
                self.inputs()
            ));
        }
        for (i, room) in self.rooms.iter().enumerate() {
            if !room.controllable() {
                issues.push(format!("room {i}: (A, B) is not controllable"));
            }
        }
        issues
    }

    /// Shifts the model to start `t` samples later from states `x`.
    fn window(&self, t: usize, x: &[[f64; 2]]) -> BuildingModel {
        let n = self.reference.len();
        let mut b = self.clone();
        b.reference = (0..self.inputs())
            .map(|s| self.reference[(t + s) % n])
            .collect();
        for (room, xi) in b.rooms.iter_mut().zip(x) {
            room.x0 = *xi;
        }
        b
    }
}

/// Stacked prediction `x = Φx̄ + Γu` over `t = 0..=N+1`.
fn prediction(room: &Room, inputs: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let steps = inputs + 1;
    let a = room.a();
    let b = room.b();
    let mut phi = DMatrix::zeros(2 * steps, 2);
    let mut gamma = DMatrix::zeros(2 * steps, inputs);
    let mut powers = vec![Matrix2::identity()];
    for t in 1..steps {
        powers.push(a * powers[t - 1]);
    }
    for t in 0..steps {
        phi.view_mut((2 * t, 0), (2, 2)).copy_from(&powers[t]);
        for s in 0..t.min(inputs) {
            let col = powers[t - 1 - s] * b;
            gamma[(2 * t, s)] = col[0];
            gamma[(2 * t + 1, s)] = col[1];
        }
    }
    (phi, gamma)
}

fn q_bar(b: &BuildingModel, steps: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(2 * steps, |r, _| b.q[r % 2]))
}

struct Condensed {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

/// Room cost `Σ_{t=0}^{N+1} xᵀQx + ½R Σ_t u²` in the form `½uᵀHu + hᵀu + c`.
fn condense_room(b: &BuildingModel, room: &Room) -> Condensed {
    let n_in = b.inputs();
    let (phi, gamma) = prediction(room, n_in);
    let qb = q_bar(b, n_in + 1);
    let x0 = Vector2::new(room.x0[0], room.x0[1]);
    let free = &phi * DVector::from_column_slice(x0.as_slice());
    let gq = gamma.transpose() * &qb;
    Condensed {
        hessian: (&gq * &gamma) * 2.0 + DMatrix::identity(n_in, n_in) * b.r,
        linear: (&gq * &free) * 2.0,
        constant: (free.transpose() * &qb * &free)[(0, 0)],
    }
}

/// Center cost `α Σ_t (Σ_i u_i(t) − r(t))² + ½R Σ_{i,t} u_i(t)²`.
fn condense_center(b: &BuildingModel) -> Condensed {
    let n_in = b.inputs();
    let m = b.rooms.len();
    let dim = m * n_in;
    let mut hessian = DMatrix::identity(dim, dim) * b.r;
    let mut linear = DVector::zeros(dim);
    for t in 0..n_in {
        for i in 0..m {
            linear[i * n_in + t] = -2.0 * b.alpha * b.reference[t];
            for j in 0..m {
                hessian[(i * n_in + t, j * n_in + t)] += 2.0 * b.alpha;
            }
        }
    }
    Condensed {
        hessian,
        linear,
        constant: b.alpha * b.reference[..n_in].iter().map(|r| r * r).sum::<f64>(),
    }
}

fn check(b: &BuildingModel) -> Result<()> {
    let issues = b.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(issues.join("; ")))
    }
}

/// Compiles the building into a star-shaped distributed problem over input sequences.
pub fn build_mpc(b: &BuildingModel) -> Result<DistributedProblem> {
    check(b)?;
    let m = b.rooms.len() + 1;
    let n_in = b.inputs();
    let graph = Graph::star(m, 0);
    let mut owned = vec![n_in; m];
    owned[0] = 0;
    let selection = SelectionMap::neighborhood(&graph, &owned);
    let center = condense_center(b);
    let mut locals = vec![QuadraticLocal::unconstrained(
        center.hessian,
        center.linear,
    )?];
    let umax = b.u_min.abs().max(b.u_max.abs()).max(f64::MIN_POSITIVE);
    let g_room = umax * (n_in as f64).sqrt();
    let mut bounds = vec![g_room * (b.rooms.len() as f64).sqrt()];
    let mut box_c = DMatrix::zeros(2 * n_in, n_in);
    let mut box_rhs = DVector::zeros(2 * n_in);
    for t in 0..n_in {
        box_c[(t, t)] = 1.0;
        box_c[(n_in + t, t)] = -1.0;
        box_rhs[t] = b.u_max;
        box_rhs[n_in + t] = -b.u_min;
    }
    for room in &b.rooms {
        let c = condense_room(b, room);
        locals.push(QuadraticLocal::new(
            c.hessian,
            c.linear,
            box_c.clone(),
            box_rhs.clone(),
        )?);
        bounds.push(g_room);
    }
    DistributedProblem::new(graph, selection, locals, bounds)
}

/// Total condensed objective (quadratic parts plus constant offsets) at
/// per-room input sequences.
pub fn condensed_objective(b: &BuildingModel, u: &[DVector<f64>]) -> Result<f64> {
    check(b)?;
    if u.len() != b.rooms.len() || u.iter().any(|x| x.len() != b.inputs()) {
        return Err(Error::Dimension(
            "one input sequence of length N + 1 per room".into(),
        ));
    }
    let mut total = 0.0;
    for (room, ui) in b.rooms.iter().zip(u) {
        let c = condense_room(b, room);
        total += 0.5 * ui.dot(&(&c.hessian * ui)) + c.linear.dot(ui) + c.constant;
    }
    let c = condense_center(b);
    let all = crate::solver::stack(u);
    total += 0.5 * all.dot(&(&c.hessian * &all)) + c.linear.dot(&all) + c.constant;
    Ok(total)
}

/// The same objective by explicit state rollout.
pub fn rollout_objective(b: &BuildingModel, u: &[DVector<f64>]) -> Result<f64> {
    check(b)?;
    if u.len() != b.rooms.len() || u.iter().any(|x| x.len() != b.inputs()) {
        return Err(Error::Dimension(
            "one input sequence of length N + 1 per room".into(),
        ));
    }
    let n_in = b.inputs();
    let mut total = 0.0;
    for (room, ui) in b.rooms.iter().zip(u) {
        let mut x = Vector2::new(room.x0[0], room.x0[1]);
        for t in 0..=n_in {
            total += b.q[0] * x[0] * x[0] + b.q[1] * x[1] * x[1];
            if t < n_in {
                total += b.r * ui[t] * ui[t];
                x = room.a() * x + room.b() * ui[t];
            }
        }
    }
    for t in 0..n_in {
        let s: f64 = u.iter().map(|ui| ui[t]).sum();
        total += b.alpha * (s - b.reference[t]).powi(2);
    }
    Ok(total)
}

/// Reference settings with synthetic dynamics: three rooms, `N = 13`,
/// `Q = diag(1, 0)`, `R = 1`, `α = 10`, inputs in `[−0.2047, 0.7409]`,
/// stable state matrices with spectral radius 0.97 and a daily
/// piecewise-constant reference over 96 quarter-hour steps.
pub fn default_building() -> BuildingModel {
    let rooms = (0..3)
        .map(|i| Room {
            // eigenvalues 0.97 and 0.90
            a: [0.935, 0.035, 0.035, 0.935],
            b: [0.015 + 0.003 * i as f64, 0.003],
            x0: [0.2 * i as f64 - 0.2, 0.0],
        })
        .collect();
    let reference = (0..96)
        .map(|t| match t {
            0..=23 => 0.6,
            24..=47 => 1.4,
            48..=71 => 1.0,
            _ => 0.4,
        })
        .collect();
    BuildingModel {
        rooms,
        horizon: 13,
        q: [1.0, 0.0],
        r: 1.0,
        alpha: 10.0,
        u_min: -0.2047,
        u_max: 0.7409,
        reference,
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopOptions {
    pub k_per_step: usize,
    /// Iterations for the first step, which has no previous solution to
    /// start from; `None` uses `k_per_step`.
    pub k_initial: Option<usize>,
    pub steps: usize,
    pub seed: u64,
    /// Start each step from the previous step's duals shifted by one sample.
    pub warm_start: bool,
    pub tol: f64,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            k_per_step: 10,
            k_initial: None,
            steps: 96,
            seed: 0,
            warm_start: true,
            tol: crate::qp::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcStep {
    pub t: usize,
    pub reference: f64,
    /// Applied inputs per room.
    pub inputs: Vec<f64>,
    pub total_input: f64,
    /// `Σ_i u_i(t) − r(t)`.
    pub tracking_error: f64,
    /// Room temperatures (first state) before the step.
    pub temperatures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcTrajectory {
    pub steps: Vec<MpcStep>,
}

impl MpcTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# privdist mpc trajectory v{CSV_VERSION}\nt,reference,total_input,tracking_error,inputs,temperatures\n");
        for s in &self.steps {
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.t,
                s.reference,
                s.total_input,
                s.tracking_error,
                join(&s.inputs),
                join(&s.temperatures)
            );
        }
        out
    }

    /// Largest `|Σu(t) − Σu_ref(t)|` against another trajectory.
    pub fn max_input_deviation(&self, other: &MpcTrajectory) -> f64 {
        self.steps
            .iter()
            .zip(&other.steps)
            .map(|(a, b)| (a.total_input - b.total_input).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_total_input(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.total_input.abs())
            .fold(0.0, f64::max)
    }
}

fn advance(b: &BuildingModel, x: &mut [[f64; 2]], u: &[f64]) {
    for ((room, xi), ui) in b.rooms.iter().zip(x.iter_mut()).zip(u) {
        let next = room.a() * Vector2::new(xi[0], xi[1]) + room.b() * *ui;
        *xi = [next[0], next[1]];
    }
}

fn shift(v: &DVector<f64>, block: usize) -> DVector<f64> {
    let mut out = v.clone();
    for start in (0..v.len()).step_by(block) {
        for t in 0..block - 1 {
            out[start + t] = v[start + t + 1];
        }
    }
    out
}

/// Receding-horizon loop with the private distributed solver at every step.
/// Rooms apply the first entry of their noise-free local solution and the
/// plant advances with the nominal dynamics.
pub fn mpc_closed_loop(
    b: &BuildingModel,
    noise: &NoiseSchedule,
    opts: &ClosedLoopOptions,
) -> Result<MpcTrajectory> {
    check(b)?;
    let n_in = b.inputs();
    let mut x: Vec<[f64; 2]> = b.rooms.iter().map(|r| r.x0).collect();
    let mut mu: Option<Vec<DVector<f64>>> = None;
    let mut steps = Vec::with_capacity(opts.steps);
    for t in 0..opts.steps {
        let w = b.window(t, &x);
        let p = build_mpc(&w)?;
        let run = RunOptions {
            tol: opts.tol,
            mu0: if opts.warm_start { mu.take() } else { None },
            ..RunOptions::default()
        };
        let seed = child_seed(opts.seed, Domain::ClosedLoop, t as u64);
        let k = match (t, opts.k_initial) {
            (0, Some(k0)) => k0,
            _ => opts.k_per_step,
        };
        let tr = run_algorithm1_with(&p, noise, k, seed, &run)?;
        let last = tr
            .last()
            .ok_or_else(|| Error::InvalidArgument("K per step must be ≥ 1".into()))?;
        let inputs: Vec<f64> = (1..=b.rooms.len())
            .map(|i| last.agents[i].z_clean[0])
            .collect();
        mu = Some(last.agents.iter().map(|a| shift(&a.mu, n_in)).collect());
        steps.push(record(t, &w, &x, inputs.clone()));
        advance(b, &mut x, &inputs);
    }
    Ok(MpcTrajectory { steps })
}

/// Receding-horizon oracle solving the assembled QP at every step.
pub fn centralized_closed_loop(b: &BuildingModel, steps: usize) -> Result<MpcTrajectory> {
    check(b)?;
    let n_in = b.inputs();
    let mut x: Vec<[f64; 2]> = b.rooms.iter().map(|r| r.x0).collect();
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let w = b.window(t, &x);
        let p = build_mpc(&w)?;
        let c = centralized_reference(&p)?;
        let inputs: Vec<f64> = (0..b.rooms.len()).map(|i| c.v[i * n_in]).collect();
        out.push(record(t, &w, &x, inputs.clone()));
        advance(b, &mut x, &inputs);
    }
    Ok(MpcTrajectory { steps: out })
}

fn record(t: usize, w: &BuildingModel, x: &[[f64; 2]], inputs: Vec<f64>) -> MpcStep {
    let total: f64 = inputs.iter().sum();
    MpcStep {
        t,
        reference: w.reference[0],
        tracking_error: total - w.reference[0],
        total_input: total,
        inputs,
        temperatures: x.iter().map(|xi| xi[0]).collect(),
    }
}

/// Random input sequences inside the box, for condensation checks.
pub fn random_inputs<R: Rng + ?Sized>(b: &BuildingModel, rng: &mut R) -> Vec<DVector<f64>> {
    b.rooms
        .iter()
        .map(|_| DVector::from_fn(b.inputs(), |_, _| rng.random_range(b.u_min..=b.u_max)))
        .collect()
}
