use crate::linalg::{BandedSym, SparseRowRef, SparseRows};
use crate::tree::BranchFunctions;

use super::kinematics::{fd_acceleration, fd_velocity, nonholonomic_residual, obstacle_clearance, NonholonomicForm};
use super::SlalomCostParams;

/// Lateral position of the reference line (m).
pub const CENTERLINE_Y: f64 = 0.0;

/// Pose dimension.
pub const POSE_DIM: usize = 3;

/// A disc that must be avoided by `radius + d_avoid`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub center: (f64, f64),
    pub radius: f64,
}

/// One residual of the least-squares cost: value and at most nine Jacobian
/// entries (three consecutive poses).
struct Residual {
    value: f64,
    idx: [usize; 9],
    jac: [f64; 9],
    len: usize,
}

impl Residual {
    fn new(value: f64) -> Self {
        Self {
            value,
            idx: [0; 9],
            jac: [0.0; 9],
            len: 0,
        }
    }

    fn push(&mut self, i: usize, v: f64) {
        self.idx[self.len] = i;
        self.jac[self.len] = v;
        self.len += 1;
    }

    fn row(&self) -> SparseRowRef<'_> {
        SparseRowRef {
            indices: &self.idx[..self.len],
            values: &self.jac[..self.len],
        }
    }
}

/// Configuration-space branch over the poses `q(1..=T)` that follow the
/// fixed current pose `q0` and the pose one step before it.
///
/// Cost per step:
/// `w_acc |acc|^2 + w_center (y - y_ref)^2 + w_speed (|(xd, yd)| - v_desired)^2`,
/// written as a sum of squared residuals so that the Gauss-Newton curvature
/// is `2 J^T J`.
#[derive(Clone, Debug)]
pub struct SlalomBranch {
    q0: [f64; 3],
    q_prev: [f64; 3],
    params: SlalomCostParams,
    form: NonholonomicForm,
    discs: Vec<Disc>,
    steps: usize,
    dt: f64,
}

impl SlalomBranch {
    pub fn new(
        q0: [f64; 3],
        q_prev: [f64; 3],
        params: SlalomCostParams,
        form: NonholonomicForm,
        discs: Vec<Disc>,
        steps: usize,
        dt: f64,
    ) -> Self {
        Self {
            q0,
            q_prev,
            params,
            form,
            discs,
            steps,
            dt,
        }
    }

    pub fn discs(&self) -> &[Disc] {
        &self.discs
    }

    /// Pose `t` of the sequence that starts two steps before the first
    /// variable; `t = 0` is `q_prev`, `t = 1` is `q0`.
    fn pose<'a>(&'a self, z: &'a [f64], t: usize) -> &'a [f64] {
        match t {
            0 => &self.q_prev,
            1 => &self.q0,
            _ => &z[(t - 2) * POSE_DIM..(t - 1) * POSE_DIM],
        }
    }

    /// Variable index of coordinate `k` of extended pose `t`, if it is free.
    fn var(t: usize, k: usize) -> Option<usize> {
        (t >= 2).then(|| (t - 2) * POSE_DIM + k)
    }

    fn for_each_residual(&self, z: &[f64], mut f: impl FnMut(&Residual)) {
        let p = &self.params;
        let dt = self.dt;
        let (sa, sc, ss) = (p.w_acc.sqrt(), p.w_center.sqrt(), p.w_speed.sqrt());
        for step in 0..self.steps {
            let t = step + 2;
            let (q, q1, q2) = (self.pose(z, t), self.pose(z, t - 1), self.pose(z, t - 2));

            let acc = fd_acceleration(q, q1, q2, dt);
            let c = sa / (dt * dt);
            for k in 0..POSE_DIM {
                let mut r = Residual::new(sa * acc[k]);
                for (tt, coef) in [(t - 2, c), (t - 1, -2.0 * c), (t, c)] {
                    if let Some(i) = Self::var(tt, k) {
                        r.push(i, coef);
                    }
                }
                f(&r);
            }

            let mut r = Residual::new(sc * (q[1] - CENTERLINE_Y));
            r.push(step * POSE_DIM + 1, sc);
            f(&r);

            let [xd, yd, _] = fd_velocity(q, q1, dt);
            let speed = xd.hypot(yd);
            let (ux, uy) = if speed > 0.0 {
                (xd / speed, yd / speed)
            } else {
                let (s, c) = q[2].sin_cos();
                (c, s)
            };
            let mut r = Residual::new(ss * (speed - p.v_desired));
            let c = ss / dt;
            r.push(step * POSE_DIM, c * ux);
            r.push(step * POSE_DIM + 1, c * uy);
            if let (Some(ix), Some(iy)) = (Self::var(t - 1, 0), Self::var(t - 1, 1)) {
                r.push(ix, -c * ux);
                r.push(iy, -c * uy);
            }
            f(&r);
        }
    }
}

impl BranchFunctions for SlalomBranch {
    fn num_vars(&self) -> usize {
        self.steps * POSE_DIM
    }

    fn bandwidth(&self) -> usize {
        (2 * POSE_DIM + 2).min(self.num_vars().saturating_sub(1))
    }

    fn num_ineq(&self) -> usize {
        self.discs.len() * self.steps
    }

    fn num_eq(&self) -> usize {
        self.steps
    }

    fn cost(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut value = 0.0;
        match grad {
            Some(g) => {
                g.iter_mut().for_each(|v| *v = 0.0);
                self.for_each_residual(z, |r| {
                    value += r.value * r.value;
                    r.row().axpy(2.0 * r.value, g);
                });
            }
            None => self.for_each_residual(z, |r| value += r.value * r.value),
        }
        value
    }

    fn add_cost_curvature(&self, z: &[f64], scale: f64, hess: &mut BandedSym) {
        self.for_each_residual(z, |r| hess.add_outer(r.row(), 2.0 * scale));
    }

    /// Rows ordered disc-major: row `i * T + t` is disc `i` at step `t`.
    fn inequalities(&self, z: &[f64], out: &mut [f64], mut jac: Option<&mut SparseRows>) {
        let d = self.params.d_avoid;
        for (i, disc) in self.discs.iter().enumerate() {
            for t in 0..self.steps {
                let q = &z[t * POSE_DIM..];
                let (g, grad) = obstacle_clearance(q[0], q[1], disc.center, disc.radius, d);
                out[i * self.steps + t] = g;
                if let Some(j) = jac.as_deref_mut() {
                    j.push_row([(t * POSE_DIM, grad[0]), (t * POSE_DIM + 1, grad[1])]);
                }
            }
        }
    }

    fn equalities(&self, z: &[f64], out: &mut [f64], mut jac: Option<&mut SparseRows>) {
        for step in 0..self.steps {
            let t = step + 2;
            let (h, grad) = nonholonomic_residual(self.pose(z, t), self.pose(z, t - 1), self.dt, self.form);
            out[step] = h;
            if let Some(j) = jac.as_deref_mut() {
                let entries = (0..POSE_DIM)
                    .map(|k| (Self::var(t, k), grad[k]))
                    .chain((0..POSE_DIM).map(|k| (Self::var(t - 1, k), grad[POSE_DIM + k])))
                    .filter_map(|(i, v)| i.map(|i| (i, v)));
                j.push_row(entries);
            }
        }
    }
}
