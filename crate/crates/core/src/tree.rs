//! Control-tree topology and the branched optimization problem.
//!
//! A tree has a common trunk of `L` steps followed by one branch of `T`
//! steps per discrete hypothesis. Each branch carries its own cost,
//! inequality and equality constraints over a `T x d` variable sequence;
//! the first `L` steps of every branch must agree with the trunk.

use std::fmt;
use std::sync::Arc;

use crate::belief::BeliefState;
use crate::error::{Error, Result};
use crate::linalg::{BandedSym, SparseRows};

/// Minimum cost weight applied to a branch.
///
/// Zero-probability branches still constrain the trunk; flooring their cost
/// weight keeps their Newton systems well conditioned.
pub const MIN_COST_WEIGHT: f64 = 1e-6;

/// Default trunk length: one second at four steps per second.
pub const DEFAULT_TRUNK_STEPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonSpec {
    /// Steps in the control horizon (`L`).
    pub trunk_steps: usize,
    /// Steps on each branch (`T`).
    pub total_steps: usize,
    /// Step duration in seconds.
    pub dt: f64,
}

impl HorizonSpec {
    pub fn new(trunk_steps: usize, total_steps: usize, dt: f64) -> Result<Self> {
        let h = Self {
            trunk_steps,
            total_steps,
            dt,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk_steps < 1 || self.trunk_steps >= self.total_steps {
            return Err(Error::InvalidHorizon(format!(
                "need 1 <= L < T, got L={} T={}",
                self.trunk_steps, self.total_steps
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidHorizon(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Horizon length in seconds.
    pub fn duration(&self) -> f64 {
        self.total_steps as f64 * self.dt
    }
}

impl Default for HorizonSpec {
    /// 5 s at 4 steps per second with a 1 s trunk.
    fn default() -> Self {
        Self {
            trunk_steps: DEFAULT_TRUNK_STEPS,
            total_steps: 20,
            dt: 0.25,
        }
    }
}

/// Smooth functions defining one branch: cost, `g(z) <= 0` and `h(z) = 0`.
///
/// Variables are a flat vector of length [`num_vars`](Self::num_vars).
/// All curvature information must be symmetric positive semidefinite and
/// confined to [`bandwidth`](Self::bandwidth); every Jacobian row must span
/// at most `bandwidth` index positions.
pub trait BranchFunctions: Send + Sync + fmt::Debug {
    fn num_vars(&self) -> usize;

    fn bandwidth(&self) -> usize;

    fn num_ineq(&self) -> usize;

    fn num_eq(&self) -> usize {
        0
    }

    /// Cost value; writes the gradient into `grad` when given.
    fn cost(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64;

    /// Adds `scale` times the cost curvature (exact or Gauss-Newton) to `hess`.
    fn add_cost_curvature(&self, z: &[f64], scale: f64, hess: &mut BandedSym);

    /// Writes `g(z)` into `out`; pushes one Jacobian row per constraint when
    /// `jac` is given.
    fn inequalities(&self, z: &[f64], out: &mut [f64], jac: Option<&mut SparseRows>);

    /// Writes `h(z)` into `out`; pushes one Jacobian row per constraint when
    /// `jac` is given.
    fn equalities(&self, _z: &[f64], _out: &mut [f64], _jac: Option<&mut SparseRows>) {}
}

/// One branch of the tree with its probability weight.
#[derive(Clone, Debug)]
pub struct BranchProblem {
    weight: f64,
    functions: Arc<dyn BranchFunctions>,
}

impl BranchProblem {
    pub fn new(weight: f64, functions: Arc<dyn BranchFunctions>) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidProbability {
                index: 0,
                value: weight,
            });
        }
        Ok(Self { weight, functions })
    }

    /// Probability `p(s)` of the hypothesis.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Weight applied to the cost, floored at [`MIN_COST_WEIGHT`].
    pub fn cost_weight(&self) -> f64 {
        self.weight.max(MIN_COST_WEIGHT)
    }

    pub fn functions(&self) -> &dyn BranchFunctions {
        self.functions.as_ref()
    }

    pub fn functions_arc(&self) -> Arc<dyn BranchFunctions> {
        Arc::clone(&self.functions)
    }

    pub fn num_vars(&self) -> usize {
        self.functions.num_vars()
    }

    pub fn num_ineq(&self) -> usize {
        self.functions.num_ineq()
    }

    pub fn num_eq(&self) -> usize {
        self.functions.num_eq()
    }

    pub fn ineq_values(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.num_ineq()];
        self.functions.inequalities(z, &mut g, None);
        g
    }

    pub fn eq_values(&self, z: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.num_eq()];
        self.functions.equalities(z, &mut h, None);
        h
    }

    /// Worst constraint violation: `max(max_i g_i^+, max_j |h_j|)`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let g = self.ineq_values(z).into_iter().fold(0.0_f64, |m, v| m.max(v));
        let h = self
            .eq_values(z)
            .into_iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        g.max(h)
    }
}

/// The full branched problem handed to the solver.
#[derive(Clone, Debug)]
pub struct TreeProblem {
    branches: Vec<BranchProblem>,
    horizon: HorizonSpec,
    var_dim: usize,
}

impl TreeProblem {
    pub fn new(branches: Vec<BranchProblem>, horizon: HorizonSpec, var_dim: usize) -> Result<Self> {
        build_tree_problem(branches, horizon, var_dim)
    }

    pub fn branches(&self) -> &[BranchProblem] {
        &self.branches
    }

    pub fn horizon(&self) -> HorizonSpec {
        self.horizon
    }

    pub fn var_dim(&self) -> usize {
        self.var_dim
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    /// Variables per branch, `T * d`.
    pub fn branch_len(&self) -> usize {
        self.horizon.total_steps * self.var_dim
    }

    /// Variables in the trunk, `L * d`.
    pub fn trunk_len(&self) -> usize {
        self.horizon.trunk_steps * self.var_dim
    }

    pub fn belief(&self) -> BeliefState {
        BeliefState::new(self.branches.iter().map(|b| b.weight).collect())
            .expect("weights validated at construction")
    }
}

/// Assembles and validates a tree problem. Branch order is preserved.
pub fn build_tree_problem(
    branches: Vec<BranchProblem>,
    horizon: HorizonSpec,
    var_dim: usize,
) -> Result<TreeProblem> {
    if branches.is_empty() {
        return Err(Error::EmptyProblem);
    }
    horizon.validate()?;
    if var_dim == 0 {
        return Err(Error::DimensionMismatch("variable dimension must be >= 1".into()));
    }
    let n = horizon.total_steps * var_dim;
    for (s, b) in branches.iter().enumerate() {
        if b.num_vars() != n {
            return Err(Error::DimensionMismatch(format!(
                "branch {s} has {} variables, expected T*d = {n}",
                b.num_vars()
            )));
        }
    }
    BeliefState::new(branches.iter().map(|b| b.weight).collect())?;
    Ok(TreeProblem {
        branches,
        horizon,
        var_dim,
    })
}

/// Optimized control-tree: one variable sequence per branch plus the trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTree {
    horizon: HorizonSpec,
    var_dim: usize,
    branch_vars: Vec<Vec<f64>>,
    consensus: Vec<f64>,
}

impl ControlTree {
    pub fn new(
        horizon: HorizonSpec,
        var_dim: usize,
        branch_vars: Vec<Vec<f64>>,
        consensus: Vec<f64>,
    ) -> Result<Self> {
        let n = horizon.total_steps * var_dim;
        if branch_vars.iter().any(|z| z.len() != n) {
            return Err(Error::DimensionMismatch("branch sequence length".into()));
        }
        if consensus.len() != horizon.trunk_steps * var_dim {
            return Err(Error::DimensionMismatch("consensus length".into()));
        }
        Ok(Self {
            horizon,
            var_dim,
            branch_vars,
            consensus,
        })
    }

    pub fn horizon(&self) -> HorizonSpec {
        self.horizon
    }

    pub fn var_dim(&self) -> usize {
        self.var_dim
    }

    pub fn num_branches(&self) -> usize {
        self.branch_vars.len()
    }

    pub fn branch(&self, s: usize) -> &[f64] {
        &self.branch_vars[s]
    }

    pub fn branches(&self) -> &[Vec<f64>] {
        &self.branch_vars
    }

    /// Step `t` of branch `s`, a slice of length `d`.
    pub fn branch_step(&self, s: usize, t: usize) -> &[f64] {
        &self.branch_vars[s][t * self.var_dim..(t + 1) * self.var_dim]
    }

    pub fn consensus(&self) -> &[f64] {
        &self.consensus
    }

    pub fn trunk_step(&self, t: usize) -> &[f64] {
        &self.consensus[t * self.var_dim..(t + 1) * self.var_dim]
    }

    /// `max_s max_{t<L} |z_s(t) - z~(t)|`.
    pub fn max_trunk_disagreement(&self) -> f64 {
        self.branch_vars
            .iter()
            .map(|z| crate::linalg::dist_inf(&z[..self.consensus.len()], &self.consensus))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::crossing_belief;
    use crate::qp::QpBranch;

    fn quad_branch(weight: f64, n: usize) -> BranchProblem {
        BranchProblem::new(weight, Arc::new(QpBranch::diagonal(vec![1.0; n], vec![0.0; n]))).unwrap()
    }

    #[test]
    fn horizon_invariants() {
        assert!(HorizonSpec::new(4, 20, 0.25).is_ok());
        assert!(HorizonSpec::new(0, 20, 0.25).is_err());
        assert!(HorizonSpec::new(20, 20, 0.25).is_err());
        assert!(HorizonSpec::new(4, 20, 0.0).is_err());
    }

    #[test]
    fn two_branch_problem_has_trunk_of_four() {
        let h = HorizonSpec::new(4, 20, 0.25).unwrap();
        let p = build_tree_problem(vec![quad_branch(0.3, 20), quad_branch(0.7, 20)], h, 1).unwrap();
        assert_eq!(p.trunk_len(), 4);
        assert_eq!(p.num_branches(), 2);
    }

    #[test]
    fn single_branch_problem() {
        let h = HorizonSpec::default();
        let p = build_tree_problem(vec![quad_branch(1.0, 20)], h, 1).unwrap();
        assert_eq!(p.belief().probs(), &[1.0]);
    }

    #[test]
    fn weights_from_crossing_belief() {
        let belief = crossing_belief(&[0.1, 0.1, 0.1, 0.1]).unwrap();
        let branches = belief.probs().iter().map(|&w| quad_branch(w, 20)).collect();
        let p = build_tree_problem(branches, HorizonSpec::default(), 1).unwrap();
        let sum: f64 = p.branches().iter().map(|b| b.weight()).sum();
        assert_eq!(sum, 1.0);
        assert_eq!(p.num_branches(), 5);
    }

    #[test]
    fn rejects_bad_problems() {
        let h = HorizonSpec::default();
        assert_eq!(build_tree_problem(vec![], h, 1).unwrap_err(), Error::EmptyProblem);
        let r = build_tree_problem(vec![quad_branch(0.5, 20), quad_branch(0.5, 21)], h, 1);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = build_tree_problem(vec![quad_branch(0.5, 20), quad_branch(0.4, 20)], h, 1);
        assert!(matches!(r, Err(Error::InvalidBelief(_))));
    }

    #[test]
    fn zero_weight_cost_is_floored() {
        let b = quad_branch(0.0, 4);
        assert_eq!(b.weight(), 0.0);
        assert_eq!(b.cost_weight(), MIN_COST_WEIGHT);
    }
}
