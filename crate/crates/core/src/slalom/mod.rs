//! Slalom among obstacles that may be false detections.
//!
//! The vehicle is optimized directly in configuration space: the decision
//! variables are the future poses `(x, y, theta)` and velocities and
//! accelerations are backward finite differences. A no-slip equality ties
//! the poses together, and every obstacle assumed present in a branch is a
//! disc to stay clear of. Each branch stands for one combination of
//! obstacle existences.

mod branch;
mod kinematics;

use std::sync::Arc;

pub use branch::{Disc, SlalomBranch, CENTERLINE_Y, POSE_DIM};
pub use kinematics::{
    fd_acceleration, fd_velocity, nonholonomic_residual, obstacle_clearance, wrap_angle, NonholonomicForm, Pose2,
};

use crate::belief::existence_belief;
use crate::error::{Error, Result};
use crate::solver::{BranchKey, DalSolver, DualState, Initialization, Solution, SolverConfig, WarmStart};
use crate::tree::{build_tree_problem, BranchFunctions, BranchProblem, HorizonSpec, TreeProblem};

/// Default limit on enumerated uncertain obstacles (16 branches).
pub const DEFAULT_MAX_UNCERTAIN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlalomCostParams {
    pub w_acc: f64,
    pub w_center: f64,
    pub w_speed: f64,
    /// m/s
    pub v_desired: f64,
    /// Margin added to obstacle radii (m).
    pub d_avoid: f64,
}

impl Default for SlalomCostParams {
    fn default() -> Self {
        Self {
            w_acc: 1.0,
            w_center: 0.1,
            w_speed: 0.5,
            v_desired: 10.0,
            d_avoid: 1.0,
        }
    }
}

impl SlalomCostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_acc", self.w_acc),
            ("w_center", self.w_center),
            ("w_speed", self.w_speed),
            ("d_avoid", self.d_avoid),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        if !self.v_desired.is_finite() {
            return Err(Error::InvalidParameter("v_desired must be finite".into()));
        }
        Ok(())
    }
}

/// Observation state of an obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Existence {
    Uncertain,
    Present,
    Absent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleHyp {
    pub id: u64,
    /// m
    pub center: (f64, f64),
    /// m
    pub radius: f64,
    pub existence_prob: f64,
    pub resolved: Existence,
}

impl ObstacleHyp {
    pub fn new(id: u64, center: (f64, f64), radius: f64, existence_prob: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("obstacle radius must be > 0, got {radius}")));
        }
        if !(0.0..=1.0).contains(&existence_prob) {
            return Err(Error::InvalidProbability {
                index: id as usize,
                value: existence_prob,
            });
        }
        Ok(Self {
            id,
            center,
            radius,
            existence_prob,
            resolved: Existence::Uncertain,
        })
    }

    pub fn present(id: u64, center: (f64, f64), radius: f64) -> Result<Self> {
        let mut o = Self::new(id, center, radius, 1.0)?;
        o.resolved = Existence::Present;
        Ok(o)
    }

    pub fn disc(&self) -> Disc {
        Disc {
            center: self.center,
            radius: self.radius,
        }
    }
}

/// Builds the branch for one existence combination.
#[allow(clippy::too_many_arguments)]
pub fn build_slalom_branch(
    q0: Pose2,
    q_prev: Pose2,
    obstacles: &[ObstacleHyp],
    params: &SlalomCostParams,
    form: NonholonomicForm,
    horizon: &HorizonSpec,
    weight: f64,
) -> Result<BranchProblem> {
    horizon.validate()?;
    params.validate()?;
    let q_prev = [q_prev.x, q_prev.y, q0.theta - wrap_angle(q0.theta - q_prev.theta)];
    let branch = SlalomBranch::new(
        q0.as_array(),
        q_prev,
        *params,
        form,
        obstacles.iter().map(ObstacleHyp::disc).collect(),
        horizon.total_steps,
        horizon.dt,
    );
    BranchProblem::new(weight, Arc::new(branch))
}

/// How obstacles are turned into branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlalomMode {
    /// Enumerates the existence combinations of the nearest `max_uncertain`
    /// uncertain obstacles; farther uncertain ones are assumed present.
    Tree { max_uncertain: usize },
    /// A single branch in which every obstacle not resolved absent is present.
    SingleHypothesis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlalomHypothesis {
    pub key: BranchKey,
    pub obstacles: Vec<ObstacleHyp>,
    pub weight: f64,
}

/// Keyed by every obstacle the branch avoids, so that a branch keeps its
/// key when one of its assumed obstacles is confirmed.
fn hypothesis_key(present: impl Iterator<Item = u64>) -> BranchKey {
    // FNV-1a over the ids, stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for id in present {
        for b in id.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Obstacles that can matter within the horizon, sorted by longitudinal
/// distance: not resolved absent and between slightly behind the vehicle
/// and the farthest point reachable at `reach_speed`.
pub fn relevant_obstacles(
    q0: Pose2,
    obstacles: &[ObstacleHyp],
    params: &SlalomCostParams,
    horizon: &HorizonSpec,
    reach_speed: f64,
) -> Vec<ObstacleHyp> {
    let ahead = reach_speed.max(0.0) * horizon.duration();
    let mut out: Vec<ObstacleHyp> = obstacles
        .iter()
        .filter(|o| o.resolved != Existence::Absent)
        .filter(|o| {
            let margin = o.radius + params.d_avoid;
            let dx = o.center.0 - q0.x;
            dx >= -margin && dx <= ahead + margin
        })
        .copied()
        .collect();
    out.sort_by(|a, b| a.center.0.total_cmp(&b.center.0).then(a.id.cmp(&b.id)));
    out
}

/// Branch hypotheses for sorted, relevant obstacles.
pub fn slalom_hypotheses(obstacles: &[ObstacleHyp], mode: SlalomMode) -> Result<Vec<SlalomHypothesis>> {
    let uncertain_idx: Vec<usize> = obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| o.resolved == Existence::Uncertain)
        .map(|(i, _)| i)
        .collect();
    match mode {
        SlalomMode::SingleHypothesis => Ok(vec![SlalomHypothesis {
            key: hypothesis_key(obstacles.iter().map(|o| o.id)),
            obstacles: obstacles.to_vec(),
            weight: 1.0,
        }]),
        SlalomMode::Tree { max_uncertain } => {
            if max_uncertain > 16 {
                return Err(Error::TooManyHypotheses {
                    count: max_uncertain,
                    cap: 16,
                });
            }
            let k = uncertain_idx.len().min(max_uncertain);
            let enumerated = &uncertain_idx[..k];
            let probs: Vec<f64> = enumerated.iter().map(|&i| obstacles[i].existence_prob).collect();
            let belief = existence_belief(&probs)?.into_vec();
            Ok(belief
                .into_iter()
                .enumerate()
                .map(|(combo, weight)| {
                    let absent = |i: usize| {
                        enumerated
                            .iter()
                            .position(|&e| e == i)
                            .is_some_and(|bit| combo & (1 << bit) == 0)
                    };
                    let present: Vec<ObstacleHyp> = obstacles
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| !absent(i))
                        .map(|(_, o)| *o)
                        .collect();
                    let key = hypothesis_key(present.iter().map(|o| o.id));
                    SlalomHypothesis {
                        key,
                        obstacles: present,
                        weight,
                    }
                })
                .collect())
        }
    }
}

/// Solver settings that suit the slalom problem.
///
/// The finite-difference acceleration terms make the branch curvature
/// large (of order `w_acc / dt^4`), so the consensus penalty has to be of a
/// comparable magnitude for the trunks to agree in few iterations.
pub fn slalom_solver_config() -> SolverConfig {
    SolverConfig {
        mu: 1000.0,
        nu: 1000.0,
        rho: 100.0,
        ..SolverConfig::default()
    }
}

/// An optimized slalom tree.
#[derive(Clone, Debug)]
pub struct SlalomPlan {
    pub q0: Pose2,
    pub q_prev: Pose2,
    pub hypotheses: Vec<SlalomHypothesis>,
    pub solution: Solution,
    horizon: HorizonSpec,
}

impl SlalomPlan {
    pub fn keys(&self) -> Vec<BranchKey> {
        self.hypotheses.iter().map(|h| h.key).collect()
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart::new(
            self.keys(),
            self.hypotheses.iter().map(|h| h.weight).collect(),
            self.solution.clone(),
        )
    }

    /// Planned poses of branch `s`, excluding the current pose.
    pub fn branch_poses(&self, s: usize) -> Vec<Pose2> {
        self.solution
            .tree
            .branch(s)
            .chunks(POSE_DIM)
            .map(Pose2::from_slice)
            .collect()
    }

    /// Forward speed and yaw rate that reach the first planned pose.
    pub fn first_command(&self) -> (f64, f64) {
        let q1 = &self.solution.tree.consensus()[..POSE_DIM];
        let dt = self.horizon.dt;
        let (s, c) = self.q0.theta.sin_cos();
        let v = ((q1[0] - self.q0.x) * c + (q1[1] - self.q0.y) * s) / dt;
        let omega = wrap_angle(q1[2] - self.q0.theta) / dt;
        (v, omega)
    }

    /// Largest lateral offset from the reference line over the trunk.
    pub fn trunk_lateral_deviation(&self) -> f64 {
        self.solution
            .tree
            .consensus()
            .chunks(POSE_DIM)
            .map(|q| (q[1] - CENTERLINE_Y).abs())
            .fold(0.0, f64::max)
    }

    /// Cost of the trunk poses divided by the trunk length.
    pub fn trunk_cost_per_step(&self, params: &SlalomCostParams) -> f64 {
        trunk_cost_per_step(self.q0, self.q_prev, self.solution.tree.consensus(), params, self.horizon.dt)
    }
}

/// Cost of a pose sequence that starts after `q0`, divided by its length.
pub fn trunk_cost_per_step(q0: Pose2, q_prev: Pose2, poses: &[f64], params: &SlalomCostParams, dt: f64) -> f64 {
    let steps = poses.len() / POSE_DIM;
    let q_prev = [q_prev.x, q_prev.y, q0.theta - wrap_angle(q0.theta - q_prev.theta)];
    let branch = SlalomBranch::new(
        q0.as_array(),
        q_prev,
        *params,
        NonholonomicForm::NoSlip,
        Vec::new(),
        steps,
        dt,
    );
    branch.cost(poses, None) / steps.max(1) as f64
}

/// Poses shifted forward by `shift` steps; past the end the last step's
/// motion is continued.
pub fn shift_poses(z: &[f64], shift: f64) -> Vec<f64> {
    let steps = z.len() / POSE_DIM;
    let at = |j: usize, k: usize| z[j * POSE_DIM + k];
    let mut out = Vec::with_capacity(z.len());
    for t in 0..steps {
        let pos = (t as f64 + shift).max(0.0);
        let lo = (pos.floor() as usize).min(steps.saturating_sub(2));
        let frac = pos - lo as f64;
        for k in 0..POSE_DIM {
            let a = at(lo, k);
            let b = if steps > 1 { at(lo + 1, k) } else { a };
            out.push(a + frac * (b - a));
        }
    }
    out
}

/// Straight motion along the current heading at the current speed.
pub fn straight_rollout(q0: Pose2, q_prev: Pose2, horizon: &HorizonSpec) -> Vec<f64> {
    let dt = horizon.dt;
    let speed = (q0.x - q_prev.x).hypot(q0.y - q_prev.y) / dt;
    let (s, c) = q0.theta.sin_cos();
    (1..=horizon.total_steps)
        .flat_map(|t| {
            let d = speed * dt * t as f64;
            [q0.x + d * c, q0.y + d * s, q0.theta]
        })
        .collect()
}

/// Side on which an obstacle is passed: `+1` for `+y`, `-1` for `-y`.
///
/// The vehicle passes on the side of the reference line away from the
/// center, `+y` on a tie. Every branch uses the same side for the same
/// obstacle, which keeps their trunks in one homotopy class; branches that
/// pick opposite sides of an obstacle in the trunk cannot agree on a trunk.
pub fn passing_side(obstacle: &ObstacleHyp) -> f64 {
    if obstacle.center.1 > CENTERLINE_Y {
        -1.0
    } else {
        1.0
    }
}

/// Straight rollout bent around `obstacles`, each passed on its
/// [`passing_side`] with some slack; headings follow the path.
pub fn detour_rollout(
    q0: Pose2,
    q_prev: Pose2,
    obstacles: &[ObstacleHyp],
    params: &SlalomCostParams,
    horizon: &HorizonSpec,
) -> Vec<f64> {
    let mut z = straight_rollout(q0, q_prev, horizon);
    if obstacles.is_empty() {
        return z;
    }
    let steps = horizon.total_steps;
    for t in 0..steps {
        let (x, y) = (z[t * POSE_DIM], z[t * POSE_DIM + 1]);
        let mut best = (0.0, y);
        for o in obstacles {
            let clear = o.radius + params.d_avoid + 0.5;
            let target = o.center.1 + passing_side(o) * clear;
            let width = 2.0 * clear;
            let w = (-((x - o.center.0) / width).powi(2)).exp();
            if w > best.0 {
                best = (w, target);
            }
        }
        z[t * POSE_DIM + 1] = y + best.0 * (best.1 - y);
    }
    let mut prev = (q0.x, q0.y);
    for t in 0..steps {
        let (x, y) = (z[t * POSE_DIM], z[t * POSE_DIM + 1]);
        let heading = (y - prev.1).atan2(x - prev.0);
        z[t * POSE_DIM + 2] = q0.theta + wrap_angle(heading - q0.theta);
        prev = (x, y);
    }
    z
}

/// Seed for a branch with no counterpart in the previous tree: the previous
/// branch that violates its constraints least, or the detour if that is
/// better still. Reusing a previous branch keeps the vehicle on the side it
/// is already passing on when an obstacle is revealed; a fresh detour may
/// pick the other side and cut across in front of it.
fn least_violating(branch: &BranchProblem, previous: &[Vec<f64>], detour: Vec<f64>) -> Vec<f64> {
    let detour_violation = branch.max_violation(&detour);
    previous
        .iter()
        .map(|z| (branch.max_violation(z), z))
        .filter(|(v, _)| *v < detour_violation)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(detour, |(_, z)| z.clone())
}

/// Builds and solves slalom trees.
#[derive(Clone, Debug)]
pub struct SlalomPlanner {
    params: SlalomCostParams,
    horizon: HorizonSpec,
    form: NonholonomicForm,
    solver: DalSolver,
}

impl SlalomPlanner {
    pub fn new(params: SlalomCostParams, horizon: HorizonSpec, cfg: SolverConfig) -> Result<Self> {
        params.validate()?;
        horizon.validate()?;
        Ok(Self {
            params,
            horizon,
            form: NonholonomicForm::NoSlip,
            solver: DalSolver::new(cfg)?,
        })
    }

    pub fn with_form(mut self, form: NonholonomicForm) -> Self {
        self.form = form;
        self
    }

    pub fn params(&self) -> &SlalomCostParams {
        &self.params
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn solver(&self) -> &DalSolver {
        &self.solver
    }

    pub fn build_problem(&self, q0: Pose2, q_prev: Pose2, hypotheses: &[SlalomHypothesis]) -> Result<TreeProblem> {
        let branches = hypotheses
            .iter()
            .map(|h| build_slalom_branch(q0, q_prev, &h.obstacles, &self.params, self.form, &self.horizon, h.weight))
            .collect::<Result<Vec<_>>>()?;
        build_tree_problem(branches, self.horizon, POSE_DIM)
    }

    fn initialization(
        &self,
        problem: &TreeProblem,
        hypotheses: &[SlalomHypothesis],
        q0: Pose2,
        q_prev: Pose2,
        warm: Option<(&WarmStart, f64)>,
    ) -> Initialization {
        let tl = problem.trunk_len();
        let cold = |h: &SlalomHypothesis| detour_rollout(q0, q_prev, &h.obstacles, &self.params, &self.horizon);
        let Some((w, elapsed)) = warm else {
            let vars = hypotheses.iter().map(cold).collect();
            return Initialization::from_branch_vars(problem, vars);
        };
        let prev = w.solution();
        let shift = elapsed / self.horizon.dt;
        let shifted: Vec<Vec<f64>> = (0..prev.tree.num_branches())
            .map(|s| shift_poses(prev.tree.branch(s), shift))
            .collect();
        let mut branch_vars = Vec::with_capacity(hypotheses.len());
        let mut duals = Vec::with_capacity(hypotheses.len());
        for (branch, h) in problem.branches().iter().zip(hypotheses) {
            let matched = w.keys().iter().position(|k| *k == h.key);
            branch_vars.push(match matched {
                Some(s) => shift_poses(prev.tree.branch(s), shift),
                None => least_violating(branch, &shifted, cold(h)),
            });
            let mut dual = DualState::for_branch(branch, tl);
            if let Some(s) = matched {
                if prev.duals[s].lambda.len() == dual.lambda.len() {
                    dual.lambda.clone_from(&prev.duals[s].lambda);
                }
                if prev.duals[s].kappa.len() == dual.kappa.len() {
                    dual.kappa.clone_from(&prev.duals[s].kappa);
                }
            }
            duals.push(dual);
        }
        let mut init = Initialization::from_branch_vars(problem, branch_vars);
        init.duals = duals;
        init
    }

    /// Plans one cycle from the current pose `q0` and the pose one planning
    /// step earlier, `q_prev`.
    pub fn plan(
        &self,
        q0: Pose2,
        q_prev: Pose2,
        obstacles: &[ObstacleHyp],
        mode: SlalomMode,
        warm: Option<(&WarmStart, f64)>,
    ) -> Result<SlalomPlan> {
        let speed = (q0.x - q_prev.x).hypot(q0.y - q_prev.y) / self.horizon.dt;
        let reach = speed.max(self.params.v_desired) * 1.2;
        let relevant = relevant_obstacles(q0, obstacles, &self.params, &self.horizon, reach);
        let hypotheses = slalom_hypotheses(&relevant, mode)?;
        let problem = self.build_problem(q0, q_prev, &hypotheses)?;
        let init = self.initialization(&problem, &hypotheses, q0, q_prev, warm);
        let solution = self.solver.solve(&problem, init)?;
        Ok(SlalomPlan {
            q0,
            q_prev,
            hypotheses,
            solution,
            horizon: self.horizon,
        })
    }
}

/// Plans a tree over every existence combination of the uncertain
/// obstacles in range, from a cold start.
pub fn plan_slalom(
    q0: Pose2,
    q_prev: Pose2,
    obstacles: &[ObstacleHyp],
    params: &SlalomCostParams,
    horizon: &HorizonSpec,
    cfg: &SolverConfig,
) -> Result<SlalomPlan> {
    let uncertain = obstacles.iter().filter(|o| o.resolved == Existence::Uncertain).count();
    if uncertain > DEFAULT_MAX_UNCERTAIN {
        return Err(Error::TooManyHypotheses {
            count: uncertain,
            cap: DEFAULT_MAX_UNCERTAIN,
        });
    }
    SlalomPlanner::new(*params, *horizon, cfg.clone())?.plan(
        q0,
        q_prev,
        obstacles,
        SlalomMode::Tree {
            max_uncertain: DEFAULT_MAX_UNCERTAIN,
        },
        None,
    )
}
