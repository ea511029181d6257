//! Helpers shared by integration tests: random convex QPs, a brute-force
//! active-set KKT oracle, random evaluation points, and central finite
//! differences.

#![allow(dead_code)]

use std::sync::Arc;

use control_tree::linalg::BandedSym;
use control_tree::qp::{LinearRows, QpBranch};
use control_tree::slalom::{ObstacleHyp, Pose2};
use control_tree::{build_tree_problem, BranchProblem, DualState, HorizonSpec, SolverConfig, TreeProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `min 1/2 z'Hz + q'z  s.t.  A z <= b`, stored densely.
#[derive(Clone, Debug)]
pub struct DenseQp {
    pub steps: usize,
    pub dim: usize,
    pub bandwidth: usize,
    pub h: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseQp {
    pub fn n(&self) -> usize {
        self.steps * self.dim
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.q.dot(z)
    }

    /// The same QP as a single-branch tree.
    pub fn to_tree(&self, trunk_steps: usize) -> TreeProblem {
        let n = self.n();
        let mut hess = BandedSym::zeros(n, self.bandwidth);
        for i in 0..n {
            for j in i.saturating_sub(self.bandwidth)..=i {
                hess.add(i, j, self.h[(i, j)]);
            }
        }
        let mut rows = LinearRows::new();
        for r in 0..self.a.nrows() {
            let entries: Vec<(usize, f64)> = (0..n)
                .filter(|&j| self.a[(r, j)] != 0.0)
                .map(|j| (j, self.a[(r, j)]))
                .collect();
            rows.push(entries, self.b[r]);
        }
        let qp = QpBranch::new(hess, self.q.as_slice().to_vec(), 0.0).with_inequalities(rows);
        let branch = BranchProblem::new(1.0, Arc::new(qp)).unwrap();
        let horizon = HorizonSpec::new(trunk_steps, self.steps, 0.25).unwrap();
        build_tree_problem(vec![branch], horizon, self.dim).unwrap()
    }
}

/// A strictly convex banded QP with bound rows and cumulative-sum rows
/// (the shape of position limits on a double integrator), feasible by
/// construction, at most `max_rows` constraints.
pub fn random_qp<R: Rng>(rng: &mut R, max_rows: usize) -> DenseQp {
    let steps = rng.gen_range(2..=10);
    let dim = rng.gen_range(1..=2);
    let n = steps * dim;
    let bandwidth = rng.gen_range(0..=(2 * dim).min(n - 1));

    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i.saturating_sub(bandwidth)..=i {
            l[(i, j)] = rng.gen_range(-1.0..1.0);
        }
        l[(i, i)] = rng.gen_range(0.5..2.0);
    }
    // L L' keeps the lower bandwidth of L.
    let h = &l * l.transpose() + DMatrix::<f64>::identity(n, n) * 0.1;
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));

    let feasible = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let bound_rows = rng.gen_range(1..=max_rows / 2);
    let state_rows = rng.gen_range(1..=max_rows - bound_rows);
    let m = bound_rows + state_rows;
    let mut a = DMatrix::<f64>::zeros(m, n);
    for r in 0..bound_rows {
        let i = rng.gen_range(0..n);
        a[(r, i)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    for r in bound_rows..m {
        let k = rng.gen_range(0..dim);
        let upto = rng.gen_range(1..=steps);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for t in 0..upto {
            a[(r, t * dim + k)] = sign * (upto - t) as f64 * 0.25;
        }
    }
    let slack = DVector::from_fn(m, |_, _| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.5) });
    let b = &a * &feasible + slack;
    DenseQp {
        steps,
        dim,
        bandwidth,
        h,
        q,
        a,
        b,
    }
}

/// Enumerates every active set, solves its KKT system, and keeps the
/// primal-feasible, dual-feasible solution. The QP is strictly convex, so
/// that point is the unique minimizer.
pub fn kkt_oracle(qp: &DenseQp) -> DVector<f64> {
    let n = qp.n();
    let m = qp.a.nrows();
    assert!(m <= 16, "enumeration is exponential in the row count");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|&r| mask & (1 << r) != 0).collect();
        let k = active.len();
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
        let mut rhs = DVector::<f64>::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&qp.q));
        for (c, &r) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + c, j)] = qp.a[(r, j)];
                kkt[(j, n + c)] = qp.a[(r, j)];
            }
            rhs[n + c] = qp.b[r];
        }
        let Some(sol) = kkt.clone().full_piv_lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        let dual_ok = sol.rows(n, k).iter().all(|&l| l >= -1e-9);
        let primal_ok = (&qp.a * &z - &qp.b).iter().all(|&g| g <= 1e-9);
        if dual_ok && primal_ok {
            let f = qp.objective(&z);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, z));
            }
        }
    }
    best.expect("a feasible strictly convex QP has a KKT point").1
}

/// Random pose sequence roughly following a heading, with small turns so
/// no heading difference approaches the wrap-around.
pub fn random_poses(rng: &mut impl Rng, steps: usize) -> (Pose2, Pose2, Vec<f64>) {
    let theta = rng.gen_range(-0.5..0.5);
    let q0 = Pose2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-2.0..2.0), theta);
    let speed = rng.gen_range(2.0..12.0) * 0.25;
    let q_prev = Pose2::new(q0.x - speed * theta.cos(), q0.y - speed * theta.sin(), theta + rng.gen_range(-0.1..0.1));
    let mut z = Vec::with_capacity(steps * 3);
    let (mut x, mut y, mut th) = (q0.x, q0.y, q0.theta);
    for _ in 0..steps {
        th += rng.gen_range(-0.2..0.2);
        let d = speed * rng.gen_range(0.5..1.5);
        x += d * th.cos() + rng.gen_range(-0.3..0.3);
        y += d * th.sin() + rng.gen_range(-0.3..0.3);
        z.extend([x, y, th]);
    }
    (q0, q_prev, z)
}

pub fn random_obstacles(rng: &mut impl Rng, z: &[f64]) -> Vec<ObstacleHyp> {
    (0..rng.gen_range(0..3))
        .map(|i| {
            let t = rng.gen_range(0..z.len() / 3);
            let c = (z[3 * t] + rng.gen_range(-2.0..2.0), z[3 * t + 1] + rng.gen_range(-2.0..2.0));
            ObstacleHyp::new(i, c, rng.gen_range(0.5..1.5), 0.5).unwrap()
        })
        .collect()
}

pub fn random_duals(rng: &mut impl Rng, branch: &BranchProblem, trunk_len: usize) -> DualState {
    DualState {
        lambda: (0..branch.num_ineq())
            .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..3.0) })
            .collect(),
        kappa: (0..branch.num_eq()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        eta: (0..trunk_len).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    }
}

pub fn random_config(rng: &mut impl Rng) -> SolverConfig {
    SolverConfig {
        mu: rng.gen_range(0.5..50.0),
        nu: rng.gen_range(0.5..50.0),
        rho: rng.gen_range(0.5..50.0),
        ..SolverConfig::default()
    }
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b|_inf / max(1, |b|_inf)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    diff / scale
}
