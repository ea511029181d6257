//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.
//!
//! The two closed-loop grids dominate the run time (hundreds of five-minute
//! episodes); episodes run on all available cores.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::process::ExitCode;
use std::time::Instant;

use control_tree::acc::{
    acc_solver_config, condense_branch, AccCostParams, AccPlanner, CarState, HypothesisMode, PedestrianObs,
};
use control_tree::slalom::{build_slalom_branch, NonholonomicForm, SlalomCostParams};
use control_tree::solver::BranchLagrangian;
use control_tree::{crossing_belief, existence_belief, DalSolver, HorizonSpec, Initialization, SolverConfig};
use control_tree_sim::{
    linear_fit, run_batch, run_episode_traced, run_scale_bench, summarize, BatchConfig, Controller, ScaleBenchConfig,
    ScenarioConfig, SummaryRow,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{fd_gradient, kkt_oracle, random_config, random_duals, random_obstacles, random_poses, random_qp};

const QP_TOL: f64 = 1e-4;
const TRUNK_TOL: f64 = 1e-3;
const STOP_TOL: f64 = 1e-3;
const BOUND_TOL: f64 = 1e-3;
const MAX_ITERS: usize = 50;
const SWEEP_MONOTONE_TOL: f64 = 1e-6;
const SWEEP_LIMIT_TOL: f64 = 1e-2;
const GRID_SEEDS: usize = 20;
const GRID_DURATION: f64 = 300.0;
const SLALOM_DURATION: f64 = 60.0;
const FIT_R2: f64 = 0.95;
const GRAD_TOL: f64 = 1e-5;
const GRAD_STEP: f64 = 1e-6;
const GRAD_EVALS: usize = 1000;

const KMH_48: f64 = 48.0 / 3.6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn random_qps_match_kkt_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SolverConfig {
        max_outer_iters: 5000,
        ..SolverConfig::default().with_tolerance(1e-9)
    };
    let solver = DalSolver::new(cfg).unwrap();
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let qp = random_qp(&mut rng, 12);
        let expected = kkt_oracle(&qp);
        let problem = qp.to_tree(1);
        let sol = match solver.solve(&problem, Initialization::zeros(&problem)) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("case {case}: {e}")),
        };
        worst = worst.max((DVector::from_column_slice(sol.tree.branch(0)) - expected).amax());
    }
    verdict(worst <= QP_TOL, format!("50 QPs, max error {worst:.2e} (tol {QP_TOL:.0e})"))
}

fn three_pedestrians(p: f64) -> Vec<PedestrianObs> {
    [25.0, 35.0, 45.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| PedestrianObs::uncertain(i as u64, x, p))
        .collect()
}

fn three_pedestrian_tree() -> Verdict {
    let params = AccCostParams::default();
    let planner = AccPlanner::new(params, HorizonSpec::default(), acc_solver_config()).unwrap();
    let plan = planner
        .plan(
            CarState::new(0.0, KMH_48),
            &three_pedestrians(0.15),
            HypothesisMode::Tree { max_branches: None },
            None,
        )
        .unwrap();
    let report = &plan.solution.report;
    let disagreement = plan.tree().max_trunk_disagreement();
    let mut stop_excess = f64::MIN;
    let mut bound_excess = f64::MIN;
    for (s, h) in plan.hypotheses.iter().enumerate() {
        for &u in plan.tree().branch(s) {
            bound_excess = bound_excess.max(params.u_min - u).max(u - params.u_max);
        }
        if let Some(stop) = h.stop_position {
            for st in plan.branch_states(s) {
                stop_excess = stop_excess.max(st.x - (stop - params.d_safety));
            }
        }
    }
    let pass = report.converged
        && plan.hypotheses.len() == 4
        && disagreement <= TRUNK_TOL
        && stop_excess <= STOP_TOL
        && bound_excess <= BOUND_TOL
        && (1..=MAX_ITERS).contains(&report.iterations);
    verdict(
        pass,
        format!(
            "{} branches, {} iterations, trunk disagreement {disagreement:.1e}, stop excess {stop_excess:.1e}, bound excess {bound_excess:.1e}",
            plan.hypotheses.len(),
            report.iterations
        ),
    )
}

fn belief_sweep() -> Verdict {
    let planner = AccPlanner::new(AccCostParams::default(), HorizonSpec::default(), acc_solver_config()).unwrap();
    let state = CarState::new(0.0, KMH_48);
    let first = |p: f64, mode| {
        planner
            .plan(state, &[PedestrianObs::uncertain(0, 30.0, p)], mode, None)
            .unwrap()
            .first_control()
    };
    let probs = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
    let u0: Vec<f64> = probs
        .iter()
        .map(|&p| first(p, HypothesisMode::Tree { max_branches: None }))
        .collect();
    let monotone = u0.windows(2).all(|w| w[1] <= w[0] + SWEEP_MONOTONE_TOL);
    let single = first(1.0, HypothesisMode::SingleHypothesis);
    let gap = (u0[5] - single).abs();
    let shown: Vec<String> = u0.iter().map(|u| format!("{u:.3}")).collect();
    verdict(
        monotone && gap <= SWEEP_LIMIT_TOL,
        format!("u0 = [{}], |u0(1) - single| = {gap:.1e}", shown.join(", ")),
    )
}

fn grid_line(summary: &[SummaryRow], cell: &str) -> String {
    summary
        .iter()
        .filter(|s| s.cell == cell)
        .map(|s| format!("{} {:.2}/{:.2}", s.controller, s.avg_cost, s.avg_speed))
        .collect::<Vec<_>>()
        .join(", ")
}

fn row<'a>(summary: &'a [SummaryRow], cell: &str, c: Controller) -> &'a SummaryRow {
    summary.iter().find(|s| s.cell == cell && s.controller == c).expect("summary row")
}

fn pedestrian_grid() -> Verdict {
    let mut cfg = BatchConfig::pedestrian_grid(GRID_SEEDS);
    cfg.scenario.duration = GRID_DURATION;
    let rows = run_batch(&cfg, threads()).unwrap();
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let summary = summarize(&rows);
    let collisions: usize = summary.iter().map(|s| s.collisions).sum();
    let mut pass = failed == 0 && collisions == 0;
    let mut lines = Vec::new();
    for cell in &cfg.cells {
        let [full, two, single] =
            [Controller::TreeFull, Controller::Tree(2), Controller::Single].map(|c| row(&summary, &cell.label, c));
        let ok = full.avg_cost <= two.avg_cost
            && two.avg_cost <= single.avg_cost
            && full.avg_speed >= two.avg_speed
            && two.avg_speed >= single.avg_speed;
        pass &= ok;
        lines.push(format!("[{}{}: {}]", if ok { "" } else { "out of order " }, cell.label, grid_line(&summary, &cell.label)));
    }
    verdict(
        pass,
        format!(
            "{GRID_SEEDS} seeds x {GRID_DURATION} s, collisions {collisions}, failed episodes {failed}, cost/speed {}",
            lines.join(" ")
        ),
    )
}

fn slalom_grid() -> Verdict {
    let mut cfg = BatchConfig::slalom_grid(GRID_SEEDS);
    cfg.scenario.duration = SLALOM_DURATION;
    let rows = run_batch(&cfg, threads()).unwrap();
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    let summary = summarize(&rows);
    let collisions: usize = summary.iter().map(|s| s.collisions).sum();
    let mut pass = failed == 0 && collisions == 0;
    let mut lines = Vec::new();
    for cell in &cfg.cells {
        let [oracle, tree, single] =
            [Controller::Oracle, Controller::Tree(4), Controller::Single].map(|c| row(&summary, &cell.label, c));
        let ok = oracle.avg_cost <= tree.avg_cost && tree.avg_cost <= single.avg_cost;
        pass &= ok;
        lines.push(format!("[{}{}: {}]", if ok { "" } else { "out of order " }, cell.label, grid_line(&summary, &cell.label)));
    }
    verdict(
        pass,
        format!(
            "{GRID_SEEDS} seeds x {SLALOM_DURATION} s, collisions {collisions}, failed episodes {failed}, cost/speed {}",
            lines.join(" ")
        ),
    )
}

fn scale_bench() -> Verdict {
    let rows = run_scale_bench(&ScaleBenchConfig::default()).unwrap();
    let xs: Vec<f64> = rows.iter().map(|r| r.branches as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.per_iteration_ms).collect();
    let (_, slope, r2) = linear_fit(&xs, &ys);
    let last = rows.last().unwrap();
    let joint = last.undecomposed_ms.unwrap_or(f64::INFINITY);
    verdict(
        r2 >= FIT_R2 && last.decomposed_ms < joint,
        format!(
            "per-iteration fit slope {slope:.4} ms/branch, R^2 {r2:.4}; N={}: decomposed {:.1} ms vs undecomposed {joint:.1} ms",
            last.branches, last.decomposed_ms
        ),
    )
}

fn lagrangian_error(branch: &control_tree::BranchProblem, z: &[f64], consensus: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let duals = random_duals(rng, branch, consensus.len());
    let cfg = random_config(rng);
    let lag = BranchLagrangian::new(branch, consensus, &duals, &cfg);
    let analytic = lag.evaluate(z).gradient;
    let numeric = fd_gradient(|x| lag.value(x), z, GRAD_STEP);
    support::relative_error(&analytic, &numeric)
}

fn gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let acc_h = HorizonSpec::new(4, 12, 0.25).unwrap();
    let slalom_h = HorizonSpec::new(2, 8, 0.25).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..GRAD_EVALS {
        let err = if i % 2 == 0 {
            let s0 = CarState::new(0.0, rng.gen_range(0.0..14.0));
            let stop = rng.gen_bool(0.7).then(|| rng.gen_range(10.0..60.0));
            let branch = condense_branch(s0, &AccCostParams::default(), stop, &acc_h, rng.gen_range(0.0..1.0)).unwrap();
            let z: Vec<f64> = (0..12).map(|_| rng.gen_range(-9.0..3.0)).collect();
            let consensus: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            lagrangian_error(&branch, &z, &consensus, &mut rng)
        } else {
            let (q0, q_prev, z) = random_poses(&mut rng, 8);
            let obstacles = random_obstacles(&mut rng, &z);
            let form = if i % 10 == 1 {
                NonholonomicForm::Literal
            } else {
                NonholonomicForm::NoSlip
            };
            let branch = build_slalom_branch(
                q0,
                q_prev,
                &obstacles,
                &SlalomCostParams::default(),
                form,
                &slalom_h,
                rng.gen_range(0.0..1.0),
            )
            .unwrap();
            let consensus: Vec<f64> = z[..6].iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
            lagrangian_error(&branch, &z, &consensus, &mut rng)
        };
        worst = worst.max(err);
    }
    verdict(
        worst <= GRAD_TOL,
        format!("{GRAD_EVALS} Lagrangian gradients, max relative error {worst:.2e} (tol {GRAD_TOL:.0e})"),
    )
}

fn determinism() -> Verdict {
    let mut acc = ScenarioConfig::pedestrian_acc();
    acc.duration = 30.0;
    acc.seed = 4;
    acc.acc.density_per_km = 80.0;
    let mut slalom = ScenarioConfig::slalom();
    slalom.duration = 15.0;
    slalom.seed = 4;
    let mut problems = Vec::new();
    for (cfg, controller) in [(acc, Controller::TreeFull), (slalom, Controller::Tree(4))] {
        let (m1, t1) = run_episode_traced(&cfg, controller).unwrap();
        let (m2, t2) = run_episode_traced(&cfg, controller).unwrap();
        if !m1.same_outcome(&m2) || t1 != t2 {
            problems.push(format!("{} rerun differs", cfg.kind));
        }
        let mut threaded = cfg.clone();
        threaded.workers = 4;
        let (m3, t3) = run_episode_traced(&threaded, controller).unwrap();
        if !m1.same_outcome(&m3) || t1 != t3 {
            problems.push(format!("{} with 4 workers differs", cfg.kind));
        }
    }
    let mut batch = BatchConfig::pedestrian_grid(2);
    batch.scenario.duration = 10.0;
    batch.cells.truncate(2);
    let a = run_batch(&batch, 1).unwrap();
    let b = run_batch(&batch, 3).unwrap();
    let same = a.iter().zip(&b).all(|(x, y)| match (&x.outcome, &y.outcome) {
        (Ok(p), Ok(q)) => p.same_outcome(q),
        _ => false,
    });
    if !same {
        problems.push("batch with 3 threads differs".into());
    }
    let detail = if problems.is_empty() {
        "reruns, 4 solver workers and 3 batch threads reproduce every metric and trace bit for bit".to_string()
    } else {
        problems.join("; ")
    };
    verdict(problems.is_empty(), detail)
}

fn belief_algebra() -> Verdict {
    let belief = crossing_belief(&[0.15; 3]).unwrap().into_vec();
    let free = *belief.last().unwrap();
    let mut sums = Vec::new();
    for k in 0..=4 {
        let probs: Vec<f64> = (0..k).map(|i| [0.1, 0.25, 0.5, 0.75][i]).collect();
        sums.push(existence_belief(&probs).unwrap().into_vec().iter().sum::<f64>());
    }
    verdict(
        free == 0.614125 && sums.iter().all(|&s| s == 1.0),
        format!("free-road probability {free}, existence sums {sums:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("random QPs against the KKT oracle", random_qps_match_kkt_oracle),
        ("three pedestrians at 48 km/h", three_pedestrian_tree),
        ("braking against crossing probability", belief_sweep),
        ("pedestrian grid orderings", pedestrian_grid),
        ("slalom grid orderings", slalom_grid),
        ("scaling with branch count", scale_bench),
        ("finite-difference gradients", gradients),
        ("determinism", determinism),
        ("belief algebra", belief_algebra),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let v = check();
        if !v.pass {
            failures += 1;
        }
        println!(
            "{} [{}] {name}: {} ({:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
