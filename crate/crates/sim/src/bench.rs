//! Solve time against branch count, decomposed and undecomposed.

use std::time::Instant;

use control_tree::acc::{acc_hypotheses, acc_solver_config, AccPlanner, CarState, HypothesisMode, PedestrianObs};
use control_tree::{HorizonSpec, Initialization, SolverConfig, TreeProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleBenchConfig {
    pub counts: Vec<usize>,
    /// Solves per count; the fastest is kept.
    pub repetitions: usize,
    pub seed: u64,
    /// Also time the joint solve for counts up to this (inclusive).
    pub undecomposed_up_to: Option<usize>,
}

impl Default for ScaleBenchConfig {
    fn default() -> Self {
        Self {
            counts: vec![2, 5, 10, 25, 50, 100],
            repetitions: 3,
            seed: 0,
            undecomposed_up_to: Some(100),
        }
    }
}

/// Timings for one branch count. Times are wall-clock milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub branches: usize,
    pub iterations: usize,
    pub converged: bool,
    pub decomposed_ms: f64,
    pub per_iteration_ms: f64,
    pub undecomposed_iterations: Option<usize>,
    pub undecomposed_converged: Option<bool>,
    pub undecomposed_ms: Option<f64>,
    /// Largest difference between the two solutions.
    pub solution_gap: Option<f64>,
}

/// A pedestrian tree with `n` branches: `n - 1` pedestrians placed at random
/// ahead of a car at the desired speed, plus the free road.
pub fn synthetic_acc_tree(n: usize, seed: u64) -> Result<TreeProblem> {
    let planner = AccPlanner::new(Default::default(), HorizonSpec::default(), acc_solver_config())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let state = CarState::new(0.0, planner.params().v_desired);
    let mut peds: Vec<PedestrianObs> = (0..n.saturating_sub(1))
        .map(|i| PedestrianObs::uncertain(i as u64, rng.gen_range(20.0..90.0), rng.gen_range(0.01..0.2)))
        .collect();
    peds.sort_by(|a, b| a.position.total_cmp(&b.position));
    let hypotheses = acc_hypotheses(&peds, HypothesisMode::Tree { max_branches: None })?;
    Ok(planner.build_problem(state, &hypotheses)?)
}

fn min_time(repetitions: usize, mut f: impl FnMut() -> Result<usize>) -> Result<(f64, usize)> {
    let mut best = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..repetitions.max(1) {
        let started = Instant::now();
        iterations = f()?;
        best = best.min(started.elapsed().as_secs_f64() * 1e3);
    }
    Ok((best, iterations))
}

/// Times the decomposed solve of synthetic trees of each size, and the
/// undecomposed solve of the smaller ones, on one thread.
pub fn run_scale_bench(cfg: &ScaleBenchConfig) -> Result<Vec<ScaleRow>> {
    // Large trees need more outer iterations than closed-loop planning allows.
    let solver = control_tree::DalSolver::new(SolverConfig {
        max_outer_iters: 1000,
        ..acc_solver_config()
    })?;
    // All decomposed solves are timed before any joint one: the large dense
    // factorizations leave the allocator and caches in a state that slows
    // whatever runs next.
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for &n in &cfg.counts {
        let problem = synthetic_acc_tree(n, cfg.seed)?;
        let mut decomposed = None;
        let (dec_ms, iterations) = min_time(cfg.repetitions, || {
            let sol = solver.solve(&problem, Initialization::zeros(&problem))?;
            let it = sol.report.iterations;
            decomposed = Some(sol);
            Ok(it)
        })?;
        let decomposed = decomposed.expect("at least one repetition");
        rows.push(ScaleRow {
            branches: n,
            iterations,
            converged: decomposed.report.converged,
            decomposed_ms: dec_ms,
            per_iteration_ms: dec_ms / iterations.max(1) as f64,
            undecomposed_iterations: None,
            undecomposed_converged: None,
            undecomposed_ms: None,
            solution_gap: None,
        });
        solutions.push((problem, decomposed));
    }
    for (row, (problem, decomposed)) in rows.iter_mut().zip(&solutions) {
        let n = row.branches;
        if !cfg.undecomposed_up_to.is_some_and(|m| n <= m) {
            continue;
        }
        let mut joint = None;
        let (ms, it) = min_time(cfg.repetitions, || {
            let sol = solver.solve_undecomposed(problem, Initialization::zeros(problem))?;
            let it = sol.report.iterations;
            joint = Some(sol);
            Ok(it)
        })?;
        let joint = joint.expect("at least one repetition");
        let gap = (0..n)
            .flat_map(|s| {
                let (a, b) = (decomposed.tree.branch(s), joint.tree.branch(s));
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        row.undecomposed_iterations = Some(it);
        row.undecomposed_converged = Some(joint.report.converged);
        row.undecomposed_ms = Some(ms);
        row.solution_gap = Some(gap);
    }
    Ok(rows)
}

/// Least-squares line `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (intercept, slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let (a, b, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        assert!((r2 - 0.64).abs() < 1e-12);
    }

    #[test]
    fn synthetic_trees_have_the_requested_size() {
        for n in [1, 2, 7] {
            assert_eq!(synthetic_acc_tree(n, 3).unwrap().num_branches(), n);
        }
    }

    #[test]
    fn one_branch_decomposed_and_joint_agree() {
        let rows = run_scale_bench(&ScaleBenchConfig {
            counts: vec![1, 3],
            repetitions: 1,
            seed: 1,
            undecomposed_up_to: Some(3),
        })
        .unwrap();
        assert!(rows[0].solution_gap.unwrap() <= 1e-4);
        assert!(rows[1].solution_gap.unwrap() <= 1e-2);
    }
}
