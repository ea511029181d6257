//! Damped Newton minimization of one branch Lagrangian.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf};
use crate::tree::BranchProblem;

use super::config::SolverConfig;
use super::lagrangian::BranchLagrangian;
use super::DualState;

const MAX_DAMPING: f64 = 1e12;
const MIN_ALPHA: f64 = 1e-12;

/// Outcome of one inner minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemResult {
    pub z: Vec<f64>,
    pub converged: bool,
    /// Newton steps taken.
    pub iterations: usize,
    /// Lagrangian evaluations, including line-search trials.
    pub evaluations: usize,
}

/// Minimizes `L_s(., z~, duals)` starting from `z_init`.
///
/// Each step solves `(H + delta I) p = -grad` with a banded Cholesky
/// factorization, raising `delta` tenfold whenever the factorization fails,
/// then backtracks along `p` until the Armijo condition holds. Returns the
/// last iterate with `converged == false` when the iteration cap is hit or
/// the line search stalls.
pub fn solve_branch_subproblem(
    branch: &BranchProblem,
    z_init: &[f64],
    consensus: &[f64],
    duals: &DualState,
    cfg: &SolverConfig,
) -> Result<SubproblemResult> {
    let nc = &cfg.newton;
    let lag = BranchLagrangian::new(branch, consensus, duals, cfg);
    let non_finite = |stage| Error::NonFinite { branch: 0, stage };

    if z_init.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("initialization"));
    }
    let mut z = z_init.to_vec();
    let mut eval = lag.evaluate(&z);
    let mut evaluations = 1;
    let mut iterations = 0;
    let mut converged = false;
    let n = z.len();
    let mut trial = vec![0.0; n];

    while iterations < nc.max_inner_iters {
        if !eval.value.is_finite() || eval.gradient.iter().any(|g| !g.is_finite()) {
            return Err(non_finite("lagrangian evaluation"));
        }
        if norm_inf(&eval.gradient) <= nc.grad_tol {
            converged = true;
            break;
        }

        let mut damping = nc.damping_floor;
        let chol = loop {
            let mut m = eval.curvature.clone();
            for i in 0..n {
                m.add_diag(i, damping);
            }
            if let Some(c) = m.cholesky() {
                break c;
            }
            damping *= 10.0;
            if damping > MAX_DAMPING {
                return Err(non_finite("newton factorization"));
            }
        };
        let mut step: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
        chol.solve_in_place(&mut step);
        iterations += 1;

        let slope = dot(&eval.gradient, &step);
        if !(slope < 0.0) {
            break;
        }
        let mut alpha = 1.0;
        let accepted = loop {
            for i in 0..n {
                trial[i] = z[i] + alpha * step[i];
            }
            let v = lag.value(&trial);
            evaluations += 1;
            if v.is_finite() && v <= eval.value + nc.armijo * alpha * slope {
                break true;
            }
            alpha *= nc.backtrack;
            if alpha < MIN_ALPHA {
                break false;
            }
        };
        if !accepted {
            break;
        }
        std::mem::swap(&mut z, &mut trial);
        let moved = alpha * norm_inf(&step);
        eval = lag.evaluate(&z);
        evaluations += 1;
        if moved <= nc.step_tol * (1.0 + norm_inf(&z)) {
            converged = true;
            break;
        }
    }
    if !converged && iterations == nc.max_inner_iters {
        converged = norm_inf(&eval.gradient) <= nc.grad_tol;
    }

    Ok(SubproblemResult {
        z,
        converged,
        iterations,
        evaluations,
    })
}
