//! Adaptive cruise control among pedestrians who may cross.
//!
//! The car follows a double integrator; the decision variables are the
//! accelerations `u(0..T)` (states are eliminated by rolling out the
//! dynamics). The discrete state is the index of the closest pedestrian who
//! crosses; the branch for pedestrian `s` must stop `d_safety` before it,
//! the last branch is the free road.

use std::sync::Arc;

use log::warn;

use crate::belief::crossing_belief;
use crate::error::{Error, Result};
use crate::linalg::BandedSym;
use crate::qp::{LinearRows, QpBranch};
use crate::solver::{BranchKey, DalSolver, Initialization, Solution, SolverConfig, WarmStart};
use crate::tree::{build_tree_problem, BranchProblem, ControlTree, HorizonSpec, TreeProblem, MIN_COST_WEIGHT};

/// Weight of the stop penalty used when a stop can no longer be met.
pub const SOFT_STOP_WEIGHT: f64 = 1e3;

/// Branch key of the free-road hypothesis.
pub const FREE_ROAD_KEY: BranchKey = u64::MAX;

/// Longitudinal state: position (m) and speed (m/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarState {
    pub x: f64,
    pub v: f64,
}

impl CarState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccCostParams {
    /// Speed tracking weight.
    pub k_v: f64,
    /// Acceleration weight.
    pub k_u: f64,
    /// m/s
    pub v_desired: f64,
    /// Distance kept to a crossing pedestrian (m).
    pub d_safety: f64,
    /// m/s^2
    pub u_min: f64,
    /// m/s^2
    pub u_max: f64,
}

impl Default for AccCostParams {
    fn default() -> Self {
        Self {
            k_v: 1.0,
            k_u: 5.0,
            v_desired: 13.4,
            d_safety: 2.5,
            u_min: -8.0,
            u_max: 2.0,
        }
    }
}

impl AccCostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_v > 0.0 && self.k_u > 0.0) {
            return Err(Error::InvalidParameter("k_v and k_u must be > 0".into()));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::InvalidParameter("u_min must be < u_max".into()));
        }
        if !(self.d_safety >= 0.0) {
            return Err(Error::InvalidParameter("d_safety must be >= 0".into()));
        }
        Ok(())
    }
}

/// What is known about a pedestrian's intention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intent {
    Uncertain,
    Crossing,
    NotCrossing,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PedestrianObs {
    pub id: u64,
    /// Longitudinal position (m).
    pub position: f64,
    /// Probability of crossing.
    pub crossing_prob: f64,
    pub intent: Intent,
}

impl PedestrianObs {
    pub fn uncertain(id: u64, position: f64, crossing_prob: f64) -> Self {
        Self {
            id,
            position,
            crossing_prob,
            intent: Intent::Uncertain,
        }
    }

    pub fn crossing(id: u64, position: f64) -> Self {
        Self {
            id,
            position,
            crossing_prob: 1.0,
            intent: Intent::Crossing,
        }
    }

    /// Probability used for planning; resolved intents override the estimate.
    pub fn effective_prob(&self) -> f64 {
        match self.intent {
            Intent::Uncertain => self.crossing_prob,
            Intent::Crossing => 1.0,
            Intent::NotCrossing => 0.0,
        }
    }
}

/// One step of the double integrator.
pub fn step_dynamics(state: CarState, u: f64, dt: f64) -> CarState {
    CarState {
        x: state.x + dt * state.v,
        v: state.v + dt * u,
    }
}

/// States after each control, `x(1..=T)`.
pub fn rollout(state0: CarState, controls: &[f64], dt: f64) -> Vec<CarState> {
    controls
        .iter()
        .scan(state0, |s, &u| {
            *s = step_dynamics(*s, u, dt);
            Some(*s)
        })
        .collect()
}

/// Whether full braking keeps every state of the horizon behind `limit`.
pub fn stop_is_feasible(state0: CarState, limit: f64, params: &AccCostParams, horizon: &HorizonSpec) -> bool {
    let brake = vec![params.u_min; horizon.total_steps];
    rollout(state0, &brake, horizon.dt)
        .iter()
        .all(|s| s.x <= limit + 1e-9)
}

/// Cost per control step over the first `trunk_steps` controls:
/// `sum k_v (v_{t+1} - v_d)^2 + k_u u_t^2`, divided by the step count.
pub fn control_horizon_cost(state0: CarState, controls: &[f64], params: &AccCostParams, dt: f64) -> f64 {
    let states = rollout(state0, controls, dt);
    let total: f64 = controls
        .iter()
        .zip(&states)
        .map(|(&u, s)| params.k_v * (s.v - params.v_desired).powi(2) + params.k_u * u * u)
        .sum();
    total / controls.len().max(1) as f64
}

/// Condensed QP of one branch over the controls `u(0..T)`.
///
/// Cost: `sum_t k_v (v_{t+1} - v_d)^2 + k_u u_t^2` with
/// `v_{t+1} = v0 + dt sum_{j<=t} u_j`. Inequalities: the control bounds for
/// every step, then, if `stop_position` is given,
/// `x_{t+1} <= stop_position - d_safety` for every state that depends on
/// the controls. If the stop cannot be met even at full braking, the stop
/// rows become a one-sided penalty of weight [`SOFT_STOP_WEIGHT`].
pub fn condense_branch(
    state0: CarState,
    params: &AccCostParams,
    stop_position: Option<f64>,
    horizon: &HorizonSpec,
    weight: f64,
) -> Result<BranchProblem> {
    horizon.validate()?;
    params.validate()?;
    let n = horizon.total_steps;
    let dt = horizon.dt;
    let a = state0.v - params.v_desired;

    let mut hess = BandedSym::zeros(n, n - 1);
    for i in 0..n {
        for j in 0..=i {
            let ltl = (n - i) as f64;
            let mut v = 2.0 * params.k_v * dt * dt * ltl;
            if i == j {
                v += 2.0 * params.k_u;
            }
            hess.add(i, j, v);
        }
    }
    let linear: Vec<f64> = (0..n)
        .map(|j| 2.0 * params.k_v * a * dt * (n - j) as f64)
        .collect();
    let constant = params.k_v * a * a * n as f64;
    let mut qp = QpBranch::new(hess, linear, constant);

    let mut ineq = LinearRows::new();
    for t in 0..n {
        ineq.push([(t, 1.0)], params.u_max);
        ineq.push([(t, -1.0)], -params.u_min);
    }

    if let Some(stop) = stop_position {
        let limit = stop - params.d_safety;
        let mut stop_rows = LinearRows::new();
        // x_{t+1} = x0 + (t+1) dt v0 + dt^2 sum_{j<t} (t - j) u_j
        for t in 1..n {
            let entries: Vec<(usize, f64)> = (0..t).map(|j| (j, dt * dt * (t - j) as f64)).collect();
            let free = state0.x + (t + 1) as f64 * dt * state0.v;
            stop_rows.push(entries, limit - free);
        }
        if stop_is_feasible(state0, limit, params, horizon) {
            for r in 0..stop_rows.len() {
                let row = stop_rows.rows().row(r);
                ineq.push(
                    row.indices.iter().copied().zip(row.values.iter().copied()),
                    stop_rows.rhs()[r],
                );
            }
        } else {
            warn!(
                "stop at {limit:.2} m unreachable from x={:.2} v={:.2}; softening",
                state0.x, state0.v
            );
            let w = SOFT_STOP_WEIGHT / weight.max(MIN_COST_WEIGHT);
            qp = qp.with_soft_inequalities(stop_rows, w);
        }
    }
    qp = qp.with_inequalities(ineq);
    BranchProblem::new(weight, Arc::new(qp))
}

/// Solver settings that suit the ACC problem.
///
/// Branch costs are weighted by probabilities that can be small while the
/// stop rows are in meters, so unit penalties leave the multiplier updates
/// crawling on nearly active stops. A stiff inequality penalty and a
/// moderate consensus penalty converge in a few tens of iterations.
pub fn acc_solver_config() -> SolverConfig {
    SolverConfig {
        mu: 1000.0,
        nu: 1000.0,
        rho: 10.0,
        ..SolverConfig::default()
    }
}

/// How hypotheses are turned into branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypothesisMode {
    /// One branch per closest-crossing hypothesis. With `max_branches = n`,
    /// only the `n - 1` nearest pedestrians get a branch; the last branch
    /// covers the case where none of them crosses and, like the single
    /// hypothesis, stops before the next uncertain pedestrian.
    Tree { max_branches: Option<usize> },
    /// Worst case only: stop before the nearest unresolved pedestrian.
    SingleHypothesis,
}

/// A branch of the ACC tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccHypothesis {
    pub key: BranchKey,
    pub stop_position: Option<f64>,
    pub weight: f64,
}

/// Pedestrians that matter for this cycle, sorted by position: ahead of the
/// car, not resolved as walking on, and close enough to be reached within
/// the horizon.
pub fn relevant_pedestrians(
    state0: CarState,
    pedestrians: &[PedestrianObs],
    params: &AccCostParams,
    horizon: &HorizonSpec,
) -> Vec<PedestrianObs> {
    let h = horizon.duration();
    let reach = state0.v.max(0.0) * h + 0.5 * params.u_max.max(0.0) * h * h + params.d_safety;
    let mut out: Vec<PedestrianObs> = pedestrians
        .iter()
        .filter(|p| p.intent != Intent::NotCrossing)
        .filter(|p| p.position > state0.x && p.position - state0.x <= reach)
        .copied()
        .collect();
    out.sort_by(|a, b| a.position.total_cmp(&b.position).then(a.id.cmp(&b.id)));
    out
}

/// Branch hypotheses for sorted, relevant pedestrians.
pub fn acc_hypotheses(pedestrians: &[PedestrianObs], mode: HypothesisMode) -> Result<Vec<AccHypothesis>> {
    let free = |weight| AccHypothesis {
        key: FREE_ROAD_KEY,
        stop_position: None,
        weight,
    };
    let stop = |p: &PedestrianObs, weight| AccHypothesis {
        key: p.id,
        stop_position: Some(p.position),
        weight,
    };
    match mode {
        HypothesisMode::SingleHypothesis => Ok(vec![match pedestrians.first() {
            Some(p) => stop(p, 1.0),
            None => free(1.0),
        }]),
        HypothesisMode::Tree { max_branches } => {
            if let Some(cap) = max_branches {
                if cap < 2 {
                    return Err(Error::InvalidParameter("a tree needs at least 2 branches".into()));
                }
            }
            let probs: Vec<f64> = pedestrians.iter().map(PedestrianObs::effective_prob).collect();
            let belief = crossing_belief(&probs)?.into_vec();
            let np = pedestrians.len();
            let cap = max_branches.unwrap_or(usize::MAX);
            let kept = np.min(cap - 1);
            let mut out: Vec<AccHypothesis> = pedestrians[..kept].iter().zip(&belief).map(|(p, &w)| stop(p, w)).collect();
            if kept == np {
                out.push(free(belief[np]));
            } else {
                // None of the enumerated pedestrians crosses; everyone
                // beyond is treated as in the worst case.
                out.push(stop(&pedestrians[kept], belief[kept..].iter().sum()));
            }
            Ok(out)
        }
    }
}

/// Upper bound on the useful number of branches for a pedestrian density.
///
/// Counts the pedestrians expected inside the stopping envelope, the
/// farthest distance at which a stop may still have to be completed within
/// the horizon when driving at `v_max` and braking at `u_min`, plus one for
/// the free road. `cap` limits the result (e.g. 2 for a two-branch tree).
pub fn max_branch_count(
    density_per_km: f64,
    horizon: &HorizonSpec,
    params: &AccCostParams,
    v_max: f64,
    cap: Option<usize>,
) -> usize {
    let h = horizon.duration();
    let decel = -params.u_min;
    let braking_time = v_max / decel;
    let envelope = if braking_time >= h {
        v_max * h - 0.5 * decel * h * h
    } else {
        v_max * h - v_max * v_max / (2.0 * decel)
    };
    let count = (density_per_km.max(0.0) / 1000.0 * envelope.max(0.0)).floor() as usize + 1;
    cap.map_or(count, |c| count.min(c.max(1)))
}

/// An optimized ACC tree.
#[derive(Clone, Debug)]
pub struct AccPlan {
    pub state0: CarState,
    pub hypotheses: Vec<AccHypothesis>,
    pub solution: Solution,
}

impl AccPlan {
    pub fn tree(&self) -> &ControlTree {
        &self.solution.tree
    }

    /// The acceleration to execute now.
    pub fn first_control(&self) -> f64 {
        self.solution.tree.consensus()[0]
    }

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

    /// Rolled-out states of branch `s`.
    pub fn branch_states(&self, s: usize) -> Vec<CarState> {
        rollout(self.state0, self.solution.tree.branch(s), self.solution.tree.horizon().dt)
    }
}

/// Builds and solves ACC trees.
#[derive(Clone, Debug)]
pub struct AccPlanner {
    params: AccCostParams,
    horizon: HorizonSpec,
    solver: DalSolver,
}

impl AccPlanner {
    pub fn new(params: AccCostParams, horizon: HorizonSpec, cfg: SolverConfig) -> Result<Self> {
        params.validate()?;
        horizon.validate()?;
        Ok(Self {
            params,
            horizon,
            solver: DalSolver::new(cfg)?,
        })
    }

    pub fn params(&self) -> &AccCostParams {
        &self.params
    }

    pub fn horizon(&self) -> &HorizonSpec {
        &self.horizon
    }

    pub fn solver(&self) -> &DalSolver {
        &self.solver
    }

    pub fn build_problem(&self, state0: CarState, hypotheses: &[AccHypothesis]) -> Result<TreeProblem> {
        let branches = hypotheses
            .iter()
            .map(|h| condense_branch(state0, &self.params, h.stop_position, &self.horizon, h.weight))
            .collect::<Result<Vec<_>>>()?;
        build_tree_problem(branches, self.horizon, 1)
    }

    /// Plans one cycle. With `warm`, the previous solution advanced by
    /// `elapsed` seconds seeds the solve; otherwise everything starts at zero.
    pub fn plan(
        &self,
        state0: CarState,
        pedestrians: &[PedestrianObs],
        mode: HypothesisMode,
        warm: Option<(&WarmStart, f64)>,
    ) -> Result<AccPlan> {
        let relevant = relevant_pedestrians(state0, pedestrians, &self.params, &self.horizon);
        let hypotheses = acc_hypotheses(&relevant, mode)?;
        let problem = self.build_problem(state0, &hypotheses)?;
        let keys: Vec<BranchKey> = hypotheses.iter().map(|h| h.key).collect();
        let init = match warm {
            Some((w, elapsed)) => w.initialization(&problem, &keys, elapsed / self.horizon.dt),
            None => Initialization::zeros(&problem),
        };
        let solution = self.solver.solve(&problem, init)?;
        Ok(AccPlan {
            state0,
            hypotheses,
            solution,
        })
    }
}

/// Plans a full tree (no branch cap) from a cold start.
pub fn plan_acc(
    state0: CarState,
    pedestrians: &[PedestrianObs],
    params: &AccCostParams,
    horizon: &HorizonSpec,
    cfg: &SolverConfig,
) -> Result<AccPlan> {
    AccPlanner::new(*params, *horizon, cfg.clone())?.plan(
        state0,
        pedestrians,
        HypothesisMode::Tree { max_branches: None },
        None,
    )
}
