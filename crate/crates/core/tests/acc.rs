mod support;

use control_tree::acc::{
    acc_solver_config, condense_branch, plan_acc, AccCostParams, AccPlanner, CarState, HypothesisMode, PedestrianObs,
};
use control_tree::{DalSolver, HorizonSpec, Initialization, SolverConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const KMH_48: f64 = 48.0 / 3.6;

fn three_pedestrians() -> Vec<PedestrianObs> {
    [25.0, 35.0, 45.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| PedestrianObs::uncertain(i as u64, x, 0.15))
        .collect()
}

#[test]
fn three_pedestrian_scene() {
    let params = AccCostParams::default();
    let horizon = HorizonSpec::default();
    let plan = plan_acc(
        CarState::new(0.0, KMH_48),
        &three_pedestrians(),
        &params,
        &horizon,
        &acc_solver_config(),
    )
    .unwrap();
    let report = &plan.solution.report;
    assert!(report.converged);
    assert!((1..=50).contains(&report.iterations), "{} iterations", report.iterations);
    assert_eq!(plan.hypotheses.len(), 4);
    assert!(plan.tree().max_trunk_disagreement() <= 1e-3);

    for (s, h) in plan.hypotheses.iter().enumerate() {
        for &u in plan.tree().branch(s) {
            assert!((params.u_min - 1e-3..=params.u_max + 1e-3).contains(&u), "control {u}");
        }
        if let Some(stop) = h.stop_position {
            let reach = plan.branch_states(s).iter().map(|st| st.x).fold(f64::MIN, f64::max);
            assert!(reach <= stop - params.d_safety + 1e-3, "branch {s} reaches {reach}");
        }
    }

    // Hedging against a 15% crossing brakes less than assuming the worst.
    let planner = AccPlanner::new(params, horizon, acc_solver_config()).unwrap();
    let single = planner
        .plan(CarState::new(0.0, KMH_48), &three_pedestrians(), HypothesisMode::SingleHypothesis, None)
        .unwrap();
    assert!(plan.first_control() > single.first_control() + 1.0);
}

#[test]
fn braking_grows_with_crossing_probability() {
    let params = AccCostParams::default();
    let horizon = HorizonSpec::default();
    let planner = AccPlanner::new(params, horizon, acc_solver_config()).unwrap();
    let state = CarState::new(0.0, KMH_48);
    let first = |p: f64| {
        let peds = [PedestrianObs::uncertain(0, 30.0, p)];
        planner
            .plan(state, &peds, HypothesisMode::Tree { max_branches: None }, None)
            .unwrap()
            .first_control()
    };
    let controls: Vec<f64> = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0].iter().map(|&p| first(p)).collect();
    for w in controls.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{controls:?}");
    }
    let certain = planner
        .plan(state, &[PedestrianObs::uncertain(0, 30.0, 1.0)], HypothesisMode::SingleHypothesis, None)
        .unwrap()
        .first_control();
    assert!((controls[5] - certain).abs() <= 1e-2);
}

/// The same stop problem written over controls, speeds and positions with
/// the dynamics as equality rows, solved by active-set enumeration.
fn uncondensed_oracle(state0: CarState, stop: f64, params: &AccCostParams, horizon: &HorizonSpec) -> DVector<f64> {
    let n = horizon.total_steps;
    let dt = horizon.dt;
    let (u, v, x) = (|t: usize| t, |t: usize| n + t, |t: usize| 2 * n + t);
    let nv = 3 * n;
    let mut h = DMatrix::zeros(nv, nv);
    let mut q = DVector::zeros(nv);
    for t in 0..n {
        h[(u(t), u(t))] = 2.0 * params.k_u;
        h[(v(t), v(t))] = 2.0 * params.k_v;
        q[v(t)] = -2.0 * params.k_v * params.v_desired;
    }
    // v_{t+1} = v_t + dt u_t, x_{t+1} = x_t + dt v_t.
    let mut eq = DMatrix::zeros(2 * n, nv);
    let mut eq_rhs = DVector::zeros(2 * n);
    for t in 0..n {
        eq[(t, v(t))] = 1.0;
        eq[(t, u(t))] = -dt;
        eq[(n + t, x(t))] = 1.0;
        if t == 0 {
            eq_rhs[t] = state0.v;
            eq_rhs[n + t] = state0.x + dt * state0.v;
        } else {
            eq[(t, v(t - 1))] = -1.0;
            eq[(n + t, x(t - 1))] = -1.0;
            eq[(n + t, v(t - 1))] = -dt;
        }
    }
    let mut ineq = Vec::new();
    for t in 0..n {
        ineq.push((u(t), 1.0, params.u_max));
        ineq.push((u(t), -1.0, -params.u_min));
        ineq.push((x(t), 1.0, stop - params.d_safety));
    }
    let m = ineq.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|&r| mask & (1 << r) != 0).collect();
        let k = 2 * n + active.len();
        let mut kkt = DMatrix::zeros(nv + k, nv + k);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&h);
        kkt.view_mut((nv, 0), (2 * n, nv)).copy_from(&eq);
        kkt.view_mut((0, nv), (nv, 2 * n)).copy_from(&eq.transpose());
        let mut rhs = DVector::zeros(nv + k);
        rhs.rows_mut(0, nv).copy_from(&(-&q));
        rhs.rows_mut(nv, 2 * n).copy_from(&eq_rhs);
        for (c, &r) in active.iter().enumerate() {
            let (i, a, b) = ineq[r];
            kkt[(nv + 2 * n + c, i)] = a;
            kkt[(i, nv + 2 * n + c)] = a;
            rhs[nv + 2 * n + c] = b;
        }
        let Some(sol) = kkt.clone().full_piv_lu().solve(&rhs) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let z = sol.rows(0, nv).into_owned();
        let dual_ok = sol.rows(nv + 2 * n, active.len()).iter().all(|&l| l >= -1e-9);
        let primal_ok = ineq.iter().all(|&(i, a, b)| a * z[i] <= b + 1e-9);
        if dual_ok && primal_ok {
            let f = 0.5 * z.dot(&(&h * &z)) + q.dot(&z);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, z));
            }
        }
    }
    best.expect("feasible stop problem").1.rows(0, n).into_owned()
}

#[test]
fn condensed_branch_matches_the_uncondensed_problem() {
    let params = AccCostParams::default();
    let horizon = HorizonSpec::new(1, 4, 0.5).unwrap();
    let cfg = SolverConfig {
        max_outer_iters: 5000,
        ..acc_solver_config().with_tolerance(1e-9)
    };
    let solver = DalSolver::new(cfg).unwrap();
    for (v0, stop) in [(8.0, 20.0), (10.0, 16.0), (5.0, 8.0), (12.0, 40.0), (3.0, 6.0)] {
        let state = CarState::new(0.0, v0);
        let branch = condense_branch(state, &params, Some(stop), &horizon, 1.0).unwrap();
        let problem = control_tree::build_tree_problem(vec![branch], horizon, 1).unwrap();
        let sol = solver.solve(&problem, Initialization::zeros(&problem)).unwrap();
        let expected = uncondensed_oracle(state, stop, &params, &horizon);
        let err = (DVector::from_column_slice(sol.tree.branch(0)) - expected).amax();
        assert!(err <= 1e-4, "v0={v0} stop={stop}: error {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feasible_stops_are_respected(v0 in 0.0..14.0f64, gap in 5.0..60.0f64, p in 0.05..1.0f64) {
        let params = AccCostParams::default();
        let horizon = HorizonSpec::default();
        let state = CarState::new(0.0, v0);
        let peds = [PedestrianObs::uncertain(0, gap, p)];
        let plan = plan_acc(state, &peds, &params, &horizon, &acc_solver_config()).unwrap();
        for (s, h) in plan.hypotheses.iter().enumerate() {
            let Some(stop) = h.stop_position else { continue };
            let limit = stop - params.d_safety;
            if !control_tree::acc::stop_is_feasible(state, limit, &params, &horizon) || !plan.solution.report.converged {
                continue;
            }
            let reach = plan.branch_states(s).iter().map(|st| st.x).fold(f64::MIN, f64::max);
            prop_assert!(reach <= limit + 1e-3, "reach {} limit {}", reach, limit);
        }
    }
}
