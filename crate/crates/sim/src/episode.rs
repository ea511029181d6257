//! Closed-loop episodes: perceive, plan, execute the first command, repeat.

use std::collections::BTreeSet;
use std::time::Instant;

use control_tree::acc::{control_horizon_cost, step_dynamics, AccPlanner, CarState};
use control_tree::slalom::{trunk_cost_per_step, wrap_angle, Pose2, SlalomPlanner};
use control_tree::solver::WarmStart;
use log::warn;
use serde::Serialize;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::controller::Controller;
use crate::error::Result;
use crate::perception::{ObstacleTracker, PedestrianTracker};
use crate::scene::{generate_scene, Scene};

/// Sub-samples per executed step when checking the swept path for contact.
const CONTACT_SAMPLES: usize = 10;

/// Wall-clock planning statistics (ms). Not reproducible across runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PlanTiming {
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl PlanTiming {
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p95 = sorted[((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1];
        Self {
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p95_ms: p95,
            max_ms: sorted[sorted.len() - 1],
        }
    }
}

/// Outcome of one episode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub controller: Controller,
    pub cycles: usize,
    /// Planned cost over the control horizon, per step, averaged over cycles.
    pub avg_cost: f64,
    /// Cost of the executed motion, per step.
    pub realized_cost: f64,
    /// m/s
    pub avg_speed: f64,
    /// m
    pub distance: f64,
    pub collisions: usize,
    /// Cycles whose plan left a constraint violated by more than the
    /// solver's primal tolerance.
    pub violations: usize,
    /// Cycles whose solve hit the iteration cap.
    pub nonconverged: usize,
    /// Cycles in which the planner returned an error and the previous
    /// command was kept.
    pub failures: usize,
    pub mean_iterations: f64,
    pub max_branches: usize,
    #[serde(skip)]
    pub timing: PlanTiming,
}

impl EpisodeMetrics {
    /// Equality of everything except wall-clock timings.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            timing: PlanTiming::default(),
            ..self.clone()
        } == Self {
            timing: PlanTiming::default(),
            ..other.clone()
        }
    }
}

/// State of the vehicle after one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CycleRecord {
    /// s
    pub t: f64,
    /// m
    pub x: f64,
    /// m
    pub y: f64,
    /// rad
    pub heading: f64,
    /// m/s
    pub speed: f64,
    /// Acceleration (m/s^2) for ACC, forward speed (m/s) for the slalom.
    pub command: f64,
    /// Yaw rate (rad/s) for the slalom, 0 for ACC.
    pub yaw_rate: f64,
    pub planned_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub branches: usize,
}

#[derive(Default)]
struct Accumulator {
    planned: f64,
    realized: f64,
    realized_steps: usize,
    iterations: usize,
    violations: usize,
    nonconverged: usize,
    failures: usize,
    max_branches: usize,
    plan_ms: Vec<f64>,
    trace: Vec<CycleRecord>,
}

impl Accumulator {
    fn finish(self, cfg: &ScenarioConfig, controller: Controller, distance: f64, collisions: usize) -> (EpisodeMetrics, Vec<CycleRecord>) {
        let cycles = self.plan_ms.len();
        let per_cycle = |v: f64| if cycles > 0 { v / cycles as f64 } else { 0.0 };
        let metrics = EpisodeMetrics {
            kind: cfg.kind,
            seed: cfg.seed,
            controller,
            cycles,
            avg_cost: per_cycle(self.planned),
            realized_cost: self.realized / self.realized_steps.max(1) as f64,
            avg_speed: distance / cfg.duration,
            distance,
            collisions,
            violations: self.violations,
            nonconverged: self.nonconverged,
            failures: self.failures,
            mean_iterations: per_cycle(self.iterations as f64),
            max_branches: self.max_branches,
            timing: PlanTiming::from_samples(&self.plan_ms),
        };
        (metrics, self.trace)
    }
}

/// Runs one episode and returns its metrics.
pub fn run_episode(cfg: &ScenarioConfig, controller: Controller) -> Result<EpisodeMetrics> {
    run_episode_traced(cfg, controller).map(|(m, _)| m)
}

/// Runs one episode and also returns the per-cycle trace.
pub fn run_episode_traced(cfg: &ScenarioConfig, controller: Controller) -> Result<(EpisodeMetrics, Vec<CycleRecord>)> {
    cfg.validate()?;
    let scene = generate_scene(cfg);
    match cfg.kind {
        ScenarioKind::PedestrianAcc => run_acc(cfg, &scene, controller),
        ScenarioKind::Slalom => run_slalom(cfg, &scene, controller),
    }
}

fn run_acc(cfg: &ScenarioConfig, scene: &Scene, controller: Controller) -> Result<(EpisodeMetrics, Vec<CycleRecord>)> {
    let params = cfg.acc.cost;
    let horizon = cfg.horizon.spec()?;
    let solver_cfg = cfg.solver_config();
    let eps_pri = solver_cfg.eps_pri;
    let planner = AccPlanner::new(params, horizon, solver_cfg)?;
    let peds = &scene.pedestrians;
    let mut tracker = PedestrianTracker::new(
        peds.len(),
        cfg.acc.crossing_fraction,
        cfg.acc.crossing_duration,
        controller.is_oracle(),
    );
    let period = cfg.control_period();
    let mode = controller.acc_mode();

    let mut state = CarState::new(0.0, cfg.acc.initial_speed);
    let mut warm: Option<WarmStart> = None;
    let mut u = 0.0;
    let mut acc = Accumulator::default();
    let mut hit = BTreeSet::new();

    for k in 0..cfg.cycles() {
        let t = k as f64 * period;
        tracker.update(peds, state.x, t);
        let obs = tracker.observe(peds, state.x, t);

        let started = Instant::now();
        let plan = planner.plan(state, &obs, mode, warm.as_ref().map(|w| (w, period)));
        acc.plan_ms.push(started.elapsed().as_secs_f64() * 1e3);
        let (cost, iterations, converged, branches) = match plan {
            Ok(plan) => {
                u = plan.first_control();
                let report = &plan.solution.report;
                let trunk = &plan.tree().consensus()[..horizon.trunk_steps];
                let cost = control_horizon_cost(state, trunk, &params, horizon.dt);
                if report.final_residuals().aula_primal > eps_pri {
                    acc.violations += 1;
                }
                if !report.converged {
                    acc.nonconverged += 1;
                }
                let out = (cost, report.iterations, report.converged, plan.hypotheses.len());
                warm = Some(plan.warm_start());
                out
            }
            Err(e) => {
                warn!("seed {} t={t:.1}: planner failed ({e}); keeping u={u:.3}", cfg.seed);
                acc.failures += 1;
                warm = None;
                (control_horizon_cost(state, &[u], &params, horizon.dt), 0, false, 0)
            }
        };
        acc.planned += cost;
        acc.iterations += iterations;
        acc.max_branches = acc.max_branches.max(branches);

        let before = state;
        let mut next = step_dynamics(state, u, period);
        next.v = next.v.max(0.0);
        state = next;
        acc.realized += params.k_v * (state.v - params.v_desired).powi(2) + params.k_u * u * u;
        acc.realized_steps += 1;

        let t_next = t + period;
        for i in tracker.lane_blockers(peds, before.x, state.x, t).into_iter().chain(tracker.lane_blockers(
            peds,
            before.x,
            state.x,
            t_next,
        )) {
            if state.x >= peds[i].position && hit.insert(i) {
                warn!("seed {} t={t_next:.1}: collision with pedestrian {}", cfg.seed, peds[i].id);
            }
        }

        acc.trace.push(CycleRecord {
            t: t_next,
            x: state.x,
            y: 0.0,
            heading: 0.0,
            speed: state.v,
            command: u,
            yaw_rate: 0.0,
            planned_cost: cost,
            iterations,
            converged,
            branches,
        });
    }
    Ok(acc.finish(cfg, controller, state.x, hit.len()))
}

/// Pose after driving at forward speed `v` and yaw rate `omega` for `dt`.
pub fn unicycle_step(q: Pose2, v: f64, omega: f64, dt: f64) -> Pose2 {
    if omega.abs() < 1e-9 {
        let (s, c) = q.theta.sin_cos();
        return Pose2::new(q.x + v * dt * c, q.y + v * dt * s, q.theta);
    }
    let th = q.theta + omega * dt;
    let r = v / omega;
    Pose2::new(
        q.x + r * (th.sin() - q.theta.sin()),
        q.y - r * (th.cos() - q.theta.cos()),
        th,
    )
}

fn run_slalom(cfg: &ScenarioConfig, scene: &Scene, controller: Controller) -> Result<(EpisodeMetrics, Vec<CycleRecord>)> {
    let params = cfg.slalom.cost;
    let horizon = cfg.horizon.spec()?;
    let solver_cfg = cfg.solver_config();
    let eps_pri = solver_cfg.eps_pri;
    let planner = SlalomPlanner::new(params, horizon, solver_cfg)?.with_form(cfg.slalom.form);
    let obstacles = &scene.obstacles;
    let mut tracker = ObstacleTracker::new(
        obstacles.len(),
        1.0 - cfg.slalom.false_positive_fraction,
        controller.is_oracle(),
    );
    let period = cfg.control_period();
    let exact_history = (period - horizon.dt).abs() < 1e-9;
    let mode = controller.slalom_mode();

    let v0 = cfg.slalom.initial_speed;
    let mut q0 = Pose2::new(0.0, 0.0, 0.0);
    let mut q_prev = Pose2::new(-v0 * horizon.dt, 0.0, 0.0);
    let mut command = (v0, 0.0);
    let mut warm: Option<WarmStart> = None;
    let mut acc = Accumulator::default();
    let mut hit = BTreeSet::new();
    let mut distance = 0.0;

    for k in 0..cfg.cycles() {
        let t = k as f64 * period;
        tracker.update(obstacles, q0.x, q0.y);
        let obs = tracker.observe(obstacles, q0.x);

        let started = Instant::now();
        let plan = planner.plan(q0, q_prev, &obs, mode, warm.as_ref().map(|w| (w, period)));
        acc.plan_ms.push(started.elapsed().as_secs_f64() * 1e3);
        let (cost, iterations, converged, branches) = match plan {
            Ok(plan) => {
                command = plan.first_command();
                let report = &plan.solution.report;
                if report.final_residuals().aula_primal > eps_pri {
                    acc.violations += 1;
                }
                if !report.converged {
                    acc.nonconverged += 1;
                }
                let out = (
                    plan.trunk_cost_per_step(&params),
                    report.iterations,
                    report.converged,
                    plan.hypotheses.len(),
                );
                warm = Some(plan.warm_start());
                out
            }
            Err(e) => {
                warn!("seed {} t={t:.2}: planner failed ({e}); keeping the last command", cfg.seed);
                acc.failures += 1;
                warm = None;
                (f64::NAN, 0, false, 0)
            }
        };
        acc.iterations += iterations;
        acc.max_branches = acc.max_branches.max(branches);

        let (v, omega) = command;
        let next = unicycle_step(q0, v, omega, period);
        for j in 1..=CONTACT_SAMPLES {
            let q = unicycle_step(q0, v, omega, period * j as f64 / CONTACT_SAMPLES as f64);
            for o in obstacles.iter().filter(|o| o.exists && (o.center.0 - q.x).abs() < o.radius) {
                if (o.center.0 - q.x).hypot(o.center.1 - q.y) < o.radius && hit.insert(o.id) {
                    warn!("seed {} t={t:.2}: collision with obstacle {}", cfg.seed, o.id);
                }
            }
        }
        let step_q_prev = if exact_history {
            q_prev
        } else {
            unicycle_step(q0, v, omega, -horizon.dt)
        };
        let executed = [next.x, next.y, q0.theta + wrap_angle(next.theta - q0.theta)];
        let step_cost = trunk_cost_per_step(q0, step_q_prev, &executed, &params, horizon.dt);
        let cost = if cost.is_nan() { step_cost } else { cost };
        acc.planned += cost;
        acc.realized += step_cost;
        acc.realized_steps += 1;
        distance += v.abs() * period;

        q_prev = if exact_history {
            q0
        } else {
            unicycle_step(next, v, omega, -horizon.dt)
        };
        q0 = next;
        acc.trace.push(CycleRecord {
            t: t + period,
            x: q0.x,
            y: q0.y,
            heading: q0.theta,
            speed: v,
            command: v,
            yaw_rate: omega,
            planned_cost: cost,
            iterations,
            converged,
            branches,
        });
    }
    Ok(acc.finish(cfg, controller, distance, hit.len()))
}
