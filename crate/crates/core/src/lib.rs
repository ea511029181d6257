//! Control-tree model predictive control.
//!
//! A control-tree is a branched plan: a trunk shared by every hypothesis
//! about a partially observed discrete world state, followed by one branch
//! per hypothesis. Branch costs are weighted by the belief; constraints of
//! every branch apply regardless of probability. The tree is optimized with
//! a distributed augmented Lagrangian solver that minimizes the branches
//! independently and couples them through a consensus on the trunk.
//!
//! Modules:
//! - [`belief`], [`tree`]: belief states, tree topology and the generic
//!   branched problem;
//! - [`solver`]: the distributed augmented Lagrangian solver;
//! - [`acc`]: adaptive cruise control among pedestrians (condensed QP);
//! - [`slalom`]: obstacle slalom in SE(2) (non-convex, Gauss-Newton).

pub mod acc;
pub mod belief;
pub mod error;
pub mod linalg;
pub mod qp;
pub mod slalom;
pub mod solver;
pub mod tree;

pub use belief::{crossing_belief, existence_belief, validate_belief, BeliefState};
pub use error::{Error, Result};
pub use solver::{DalSolver, DualState, Initialization, Solution, SolveReport, SolverConfig};
pub use tree::{build_tree_problem, BranchFunctions, BranchProblem, ControlTree, HorizonSpec, TreeProblem};
