//! Distributed augmented Lagrangian solver for control-trees.
//!
//! Each outer iteration has two phases:
//!
//! 1. per branch, independently: minimize the branch Lagrangian with damped
//!    Newton, then update the inequality and equality multipliers;
//! 2. once all branches are done: average the branch trunks into the
//!    consensus and update the consensus multipliers.
//!
//! Phase 1 runs on a thread pool when more than one worker is configured.
//! Every reduction is done in branch order, so the result does not depend on
//! the number of workers.

mod config;
mod joint;
mod lagrangian;
mod newton;
mod updates;
mod warm;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::linalg::dist_inf;
use crate::tree::{BranchProblem, ControlTree, TreeProblem};

pub use config::{Activation, ConsensusWeighting, NewtonConfig, SolverConfig};
pub use joint::JointFunctions;
pub use lagrangian::{branch_lagrangian, BranchLagrangian, LagrangianEval};
pub use newton::{solve_branch_subproblem, SubproblemResult};
pub use warm::{BranchKey, WarmStart};
pub use updates::{
    check_termination, update_consensus, update_consensus_duals, update_consensus_weighted,
    update_equality_duals, update_inequality_duals, Residuals,
};

/// Multipliers of one branch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DualState {
    /// Inequality multipliers, kept nonnegative.
    pub lambda: Vec<f64>,
    /// Equality multipliers.
    pub kappa: Vec<f64>,
    /// Consensus multipliers over the trunk (`L * d`).
    pub eta: Vec<f64>,
}

impl DualState {
    pub fn zeros(num_ineq: usize, num_eq: usize, trunk_len: usize) -> Self {
        Self {
            lambda: vec![0.0; num_ineq],
            kappa: vec![0.0; num_eq],
            eta: vec![0.0; trunk_len],
        }
    }

    pub fn for_branch(branch: &BranchProblem, trunk_len: usize) -> Self {
        Self::zeros(branch.num_ineq(), branch.num_eq(), trunk_len)
    }
}

/// Starting point of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub branch_vars: Vec<Vec<f64>>,
    pub consensus: Vec<f64>,
    pub duals: Vec<DualState>,
}

impl Initialization {
    /// All variables and multipliers at zero.
    pub fn zeros(problem: &TreeProblem) -> Self {
        let n = problem.branch_len();
        let tl = problem.trunk_len();
        Self {
            branch_vars: vec![vec![0.0; n]; problem.num_branches()],
            consensus: vec![0.0; tl],
            duals: problem
                .branches()
                .iter()
                .map(|b| DualState::for_branch(b, tl))
                .collect(),
        }
    }

    /// Given branch sequences, zero multipliers and the trunk mean as consensus.
    pub fn from_branch_vars(problem: &TreeProblem, branch_vars: Vec<Vec<f64>>) -> Self {
        let tl = problem.trunk_len();
        let refs: Vec<&[f64]> = branch_vars.iter().map(Vec::as_slice).collect();
        let consensus = update_consensus(&refs, tl);
        Self {
            duals: problem
                .branches()
                .iter()
                .map(|b| DualState::for_branch(b, tl))
                .collect(),
            branch_vars,
            consensus,
        }
    }

    pub fn validate(&self, problem: &TreeProblem) -> Result<()> {
        let n = problem.branch_len();
        let tl = problem.trunk_len();
        if self.branch_vars.len() != problem.num_branches() || self.duals.len() != problem.num_branches() {
            return Err(Error::DimensionMismatch("initialization branch count".into()));
        }
        if self.branch_vars.iter().any(|z| z.len() != n) || self.consensus.len() != tl {
            return Err(Error::DimensionMismatch("initialization sequence length".into()));
        }
        for (b, d) in problem.branches().iter().zip(&self.duals) {
            if d.lambda.len() != b.num_ineq() || d.kappa.len() != b.num_eq() || d.eta.len() != tl {
                return Err(Error::DimensionMismatch("initialization multiplier length".into()));
            }
        }
        Ok(())
    }
}

/// Shifts a `T x d` sequence forward in time by `shift` steps, linearly
/// interpolating between steps and repeating the last step at the end.
pub fn shift_sequence(z: &[f64], d: usize, shift: f64) -> Vec<f64> {
    let steps = z.len() / d;
    let mut out = Vec::with_capacity(z.len());
    for t in 0..steps {
        let pos = (t as f64 + shift).min((steps - 1) as f64).max(0.0);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(steps - 1);
        let frac = pos - lo as f64;
        for k in 0..d {
            out.push((1.0 - frac) * z[lo * d + k] + frac * z[hi * d + k]);
        }
    }
    out
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residuals: Residuals,
    /// Newton steps summed over branches.
    pub newton_steps: usize,
    /// Lagrangian evaluations summed over branches.
    pub evaluations: usize,
    pub phase1: Duration,
    pub phase2: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    /// Inner minimizations that stopped before reaching their tolerance.
    pub inner_nonconverged: usize,
}

impl SolveReport {
    pub fn final_residuals(&self) -> Residuals {
        self.history.last().map(|r| r.residuals).unwrap_or_default()
    }

    pub fn total_time(&self) -> Duration {
        self.history.iter().map(|r| r.phase1 + r.phase2).sum()
    }

    /// Equality ignoring wall-clock timings.
    pub fn same_numerics(&self, other: &SolveReport) -> bool {
        self.iterations == other.iterations
            && self.converged == other.converged
            && self.inner_nonconverged == other.inner_nonconverged
            && self.history.len() == other.history.len()
            && self.history.iter().zip(&other.history).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.residuals == b.residuals
                    && a.newton_steps == b.newton_steps
                    && a.evaluations == b.evaluations
            })
    }
}

/// Optimized tree together with the final multipliers and the report.
#[derive(Clone, Debug)]
pub struct Solution {
    pub tree: ControlTree,
    pub duals: Vec<DualState>,
    pub report: SolveReport,
}

struct BranchStep {
    z: Vec<f64>,
    lambda: Vec<f64>,
    kappa: Vec<f64>,
    violation: f64,
    change: f64,
    newton_steps: usize,
    evaluations: usize,
    converged: bool,
}

fn branch_phase(
    index: usize,
    branch: &BranchProblem,
    z_prev: &[f64],
    consensus: &[f64],
    duals: &DualState,
    cfg: &SolverConfig,
) -> Result<BranchStep> {
    let relabel = |e: Error| match e {
        Error::NonFinite { stage, .. } => Error::NonFinite { branch: index, stage },
        other => other,
    };
    let sub = solve_branch_subproblem(branch, z_prev, consensus, duals, cfg).map_err(relabel)?;
    let g = branch.ineq_values(&sub.z);
    let h = branch.eq_values(&sub.z);
    if g.iter().chain(&h).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            branch: index,
            stage: "constraint evaluation",
        });
    }
    let violation = g
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v))
        .max(h.iter().fold(0.0_f64, |m, &v| m.max(v.abs())));
    Ok(BranchStep {
        lambda: update_inequality_duals(&duals.lambda, &g, cfg.mu),
        kappa: update_equality_duals(&duals.kappa, &h, cfg.nu),
        violation,
        change: dist_inf(&sub.z, z_prev),
        newton_steps: sub.iterations,
        evaluations: sub.evaluations,
        converged: sub.converged,
        z: sub.z,
    })
}

struct EngineOutput {
    branch_vars: Vec<Vec<f64>>,
    consensus: Vec<f64>,
    duals: Vec<DualState>,
    report: SolveReport,
}

/// Solver with its configuration and (optionally) a worker pool.
#[derive(Clone)]
pub struct DalSolver {
    config: SolverConfig,
    pool: Option<Arc<ThreadPool>>,
}

impl std::fmt::Debug for DalSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DalSolver")
            .field("config", &self.config)
            .field("pooled", &self.pool.is_some())
            .finish()
    }
}

impl DalSolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let pool = if config.workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(Self { config, pool })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Runs the decomposed solve from `init`.
    pub fn solve(&self, problem: &TreeProblem, init: Initialization) -> Result<Solution> {
        init.validate(problem)?;
        let out = self.run(problem.branches(), problem.trunk_len(), init)?;
        Ok(Solution {
            tree: ControlTree::new(problem.horizon(), problem.var_dim(), out.branch_vars, out.consensus)?,
            duals: out.duals,
            report: out.report,
        })
    }

    /// Solves the same tree as one joint problem, with the trunk shared by
    /// substitution instead of consensus. Used as the undecomposed reference.
    pub fn solve_undecomposed(&self, problem: &TreeProblem, init: Initialization) -> Result<Solution> {
        init.validate(problem)?;
        let joint = JointFunctions::new(problem);
        let z0 = joint.pack(&init.consensus, &init.branch_vars);
        let lambda0: Vec<f64> = init.duals.iter().flat_map(|d| d.lambda.iter().copied()).collect();
        let kappa0: Vec<f64> = init.duals.iter().flat_map(|d| d.kappa.iter().copied()).collect();
        let joint = Arc::new(joint);
        let branch = BranchProblem::new(1.0, joint.clone())?;
        let out = self.run(
            std::slice::from_ref(&branch),
            0,
            Initialization {
                branch_vars: vec![z0],
                consensus: Vec::new(),
                duals: vec![DualState {
                    lambda: lambda0,
                    kappa: kappa0,
                    eta: Vec::new(),
                }],
            },
        )?;
        let (trunk, branch_vars) = joint.unpack(&out.branch_vars[0]);
        let duals = joint.split_duals(&out.duals[0], problem.trunk_len());
        Ok(Solution {
            tree: ControlTree::new(problem.horizon(), problem.var_dim(), branch_vars, trunk)?,
            duals,
            report: out.report,
        })
    }

    fn phase_one(
        &self,
        branches: &[BranchProblem],
        vars: &[Vec<f64>],
        consensus: &[f64],
        duals: &[DualState],
    ) -> Result<Vec<BranchStep>> {
        let cfgs = self.branch_configs(branches);
        let work = |s: usize| branch_phase(s, &branches[s], &vars[s], consensus, &duals[s], &cfgs[s]);
        let results: Vec<Result<BranchStep>> = match &self.pool {
            Some(pool) => pool.install(|| (0..branches.len()).into_par_iter().map(work).collect()),
            None => (0..branches.len()).map(work).collect(),
        };
        results.into_iter().collect()
    }

    /// Consensus penalty of each branch.
    fn branch_rhos(&self, branches: &[BranchProblem]) -> Vec<f64> {
        let rho = self.config.rho;
        match self.config.consensus_weighting {
            ConsensusWeighting::Uniform => vec![rho; branches.len()],
            ConsensusWeighting::Belief => {
                let total: f64 = branches.iter().map(BranchProblem::cost_weight).sum();
                let n = branches.len() as f64;
                branches.iter().map(|b| rho * n * b.cost_weight() / total).collect()
            }
        }
    }

    fn branch_configs(&self, branches: &[BranchProblem]) -> Vec<SolverConfig> {
        self.branch_rhos(branches)
            .into_iter()
            .map(|rho| SolverConfig {
                rho,
                ..self.config.clone()
            })
            .collect()
    }

    fn run(&self, branches: &[BranchProblem], trunk_len: usize, init: Initialization) -> Result<EngineOutput> {
        let cfg = &self.config;
        let rhos = self.branch_rhos(branches);
        let Initialization {
            branch_vars: mut vars,
            mut consensus,
            mut duals,
        } = init;
        let mut report = SolveReport::default();

        for iteration in 1..=cfg.max_outer_iters {
            let t0 = Instant::now();
            let steps = self.phase_one(branches, &vars, &consensus, &duals)?;
            let t1 = Instant::now();

            let mut residuals = Residuals::default();
            let mut newton_steps = 0;
            let mut evaluations = 0;
            for (s, step) in steps.into_iter().enumerate() {
                residuals.aula_primal = residuals.aula_primal.max(step.violation);
                residuals.aula_dual = residuals.aula_dual.max(step.change);
                newton_steps += step.newton_steps;
                evaluations += step.evaluations;
                if !step.converged {
                    report.inner_nonconverged += 1;
                }
                vars[s] = step.z;
                duals[s].lambda = step.lambda;
                duals[s].kappa = step.kappa;
            }

            let refs: Vec<&[f64]> = vars.iter().map(Vec::as_slice).collect();
            let next = match cfg.consensus_weighting {
                ConsensusWeighting::Uniform => update_consensus(&refs, trunk_len),
                ConsensusWeighting::Belief => update_consensus_weighted(&refs, &rhos, trunk_len),
            };
            residuals.admm_dual = dist_inf(&next, &consensus);
            consensus = next;
            for ((z, d), &rho) in vars.iter().zip(duals.iter_mut()).zip(&rhos) {
                residuals.admm_primal = residuals.admm_primal.max(dist_inf(&z[..trunk_len], &consensus));
                d.eta = update_consensus_duals(&d.eta, z, &consensus, rho);
            }
            let t2 = Instant::now();

            report.iterations = iteration;
            report.history.push(IterationRecord {
                iteration,
                residuals,
                newton_steps,
                evaluations,
                phase1: t1 - t0,
                phase2: t2 - t1,
            });
            if check_termination(&residuals, cfg) {
                report.converged = true;
                break;
            }
        }

        Ok(EngineOutput {
            branch_vars: vars,
            consensus,
            duals,
            report,
        })
    }
}

/// Convenience wrapper: builds a [`DalSolver`] for `cfg` and solves.
pub fn solve(problem: &TreeProblem, init: Initialization, cfg: &SolverConfig) -> Result<Solution> {
    DalSolver::new(cfg.clone())?.solve(problem, init)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_interpolates_and_repeats_tail() {
        let z = [0.0, 10.0, 20.0, 30.0];
        assert_eq!(shift_sequence(&z, 1, 1.0), vec![10.0, 20.0, 30.0, 30.0]);
        let half = shift_sequence(&z, 1, 0.5);
        assert_eq!(half, vec![5.0, 15.0, 25.0, 30.0]);
        let pairs = [1.0, -1.0, 2.0, -2.0];
        assert_eq!(shift_sequence(&pairs, 2, 1.0), vec![2.0, -2.0, 2.0, -2.0]);
    }
}
