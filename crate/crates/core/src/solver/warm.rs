use crate::tree::TreeProblem;

use super::{shift_sequence, update_consensus, DualState, Initialization, Solution};

/// Identifies the hypothesis a branch stands for across planning cycles.
pub type BranchKey = u64;

/// Previous cycle's solution, used to seed the next one.
///
/// Branches are matched by key. A matched branch starts from its previous
/// sequence shifted forward in time and keeps its inequality and equality
/// multipliers; unmatched branches start from the shifted sequence of the
/// previous most probable branch. Consensus multipliers always restart at
/// zero because the consensus target itself moves between cycles.
#[derive(Clone, Debug)]
pub struct WarmStart {
    keys: Vec<BranchKey>,
    weights: Vec<f64>,
    solution: Solution,
}

impl WarmStart {
    pub fn new(keys: Vec<BranchKey>, weights: Vec<f64>, solution: Solution) -> Self {
        assert_eq!(keys.len(), solution.tree.num_branches());
        assert_eq!(weights.len(), keys.len());
        Self {
            keys,
            weights,
            solution,
        }
    }

    pub fn keys(&self) -> &[BranchKey] {
        &self.keys
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn solution(&self) -> &Solution {
        &self.solution
    }

    /// Seeds for `problem`, whose branches carry `keys`, after time has
    /// advanced by `shift_steps` steps.
    pub fn initialization(&self, problem: &TreeProblem, keys: &[BranchKey], shift_steps: f64) -> Initialization {
        assert_eq!(keys.len(), problem.num_branches());
        let tree = &self.solution.tree;
        let d = problem.var_dim();
        let tl = problem.trunk_len();
        let fallback = self
            .weights
            .iter()
            .enumerate()
            .fold(0, |best, (s, &w)| if w > self.weights[best] { s } else { best });
        let same_shape = tree.horizon() == problem.horizon() && tree.var_dim() == d;

        let mut branch_vars = Vec::with_capacity(keys.len());
        let mut duals = Vec::with_capacity(keys.len());
        for (branch, key) in problem.branches().iter().zip(keys) {
            let matched = self.keys.iter().position(|k| k == key).filter(|_| same_shape);
            let source = matched.unwrap_or(fallback);
            let z = if same_shape {
                shift_sequence(tree.branch(source), d, shift_steps)
            } else {
                vec![0.0; problem.branch_len()]
            };
            let mut dual = DualState::for_branch(branch, tl);
            if let Some(s) = matched {
                let prev = &self.solution.duals[s];
                if prev.lambda.len() == dual.lambda.len() {
                    dual.lambda.clone_from(&prev.lambda);
                }
                if prev.kappa.len() == dual.kappa.len() {
                    dual.kappa.clone_from(&prev.kappa);
                }
            }
            branch_vars.push(z);
            duals.push(dual);
        }
        let refs: Vec<&[f64]> = branch_vars.iter().map(Vec::as_slice).collect();
        let consensus = update_consensus(&refs, tl);
        Initialization {
            branch_vars,
            consensus,
            duals,
        }
    }
}
