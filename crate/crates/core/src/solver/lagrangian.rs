//! The per-branch distributed augmented Lagrangian
//!
//! ```text
//! L_s(z) = p(s) c(z)
//!        + lambda^T g(z) + mu  |[active] g(z)|^2
//!        + kappa^T  h(z) + nu  |h(z)|^2
//!        + eta^T dz      + rho/2 |dz|^2,        dz = z[..L*d] - z~
//! ```

use crate::linalg::{BandedSym, SparseRows};
use crate::tree::BranchProblem;

use super::config::{Activation, SolverConfig};
use super::DualState;

/// Value, gradient and positive-semidefinite curvature of `L_s` at a point.
#[derive(Clone, Debug)]
pub struct LagrangianEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub curvature: BandedSym,
}

/// `L_s` with its branch, consensus target and multipliers fixed.
#[derive(Clone, Copy, Debug)]
pub struct BranchLagrangian<'a> {
    branch: &'a BranchProblem,
    consensus: &'a [f64],
    duals: &'a DualState,
    mu: f64,
    nu: f64,
    rho: f64,
    activation: Activation,
}

impl<'a> BranchLagrangian<'a> {
    pub fn new(
        branch: &'a BranchProblem,
        consensus: &'a [f64],
        duals: &'a DualState,
        cfg: &SolverConfig,
    ) -> Self {
        debug_assert_eq!(duals.lambda.len(), branch.num_ineq());
        debug_assert_eq!(duals.kappa.len(), branch.num_eq());
        debug_assert_eq!(duals.eta.len(), consensus.len());
        Self {
            branch,
            consensus,
            duals,
            mu: cfg.mu,
            nu: cfg.nu,
            rho: cfg.rho,
            activation: cfg.activation,
        }
    }

    #[inline]
    fn active(&self, g: f64, lambda: f64) -> bool {
        match self.activation {
            Activation::ActiveSet => g > 0.0 || lambda > 0.0,
            Activation::Literal => g > 0.0,
        }
    }

    /// Value only.
    pub fn value(&self, z: &[f64]) -> f64 {
        let f = self.branch.functions();
        let mut value = self.branch.cost_weight() * f.cost(z, None);

        let mut g = vec![0.0; f.num_ineq()];
        f.inequalities(z, &mut g, None);
        for (&gi, &li) in g.iter().zip(&self.duals.lambda) {
            value += li * gi;
            if self.active(gi, li) {
                value += self.mu * gi * gi;
            }
        }

        let mut h = vec![0.0; f.num_eq()];
        f.equalities(z, &mut h, None);
        for (&hj, &kj) in h.iter().zip(&self.duals.kappa) {
            value += kj * hj + self.nu * hj * hj;
        }

        for ((&zi, &ci), &ei) in z.iter().zip(self.consensus).zip(&self.duals.eta) {
            let dz = zi - ci;
            value += ei * dz + 0.5 * self.rho * dz * dz;
        }
        value
    }

    /// Value, gradient and Gauss-Newton curvature.
    ///
    /// The curvature keeps the cost curvature supplied by the branch and the
    /// outer products of the penalized constraint gradients; second
    /// derivatives of the constraints themselves are dropped.
    pub fn evaluate(&self, z: &[f64]) -> LagrangianEval {
        let f = self.branch.functions();
        let n = f.num_vars();
        let w = self.branch.cost_weight();

        let mut gradient = vec![0.0; n];
        let mut value = w * f.cost(z, Some(&mut gradient));
        gradient.iter_mut().for_each(|gi| *gi *= w);

        let mut curvature = BandedSym::zeros(n, f.bandwidth());
        f.add_cost_curvature(z, w, &mut curvature);

        let mut jac = SparseRows::new();
        let mut g = vec![0.0; f.num_ineq()];
        f.inequalities(z, &mut g, Some(&mut jac));
        for (r, (&gi, &li)) in g.iter().zip(&self.duals.lambda).enumerate() {
            let row = jac.row(r);
            value += li * gi;
            if self.active(gi, li) {
                value += self.mu * gi * gi;
                row.axpy(li + 2.0 * self.mu * gi, &mut gradient);
                curvature.add_outer(row, 2.0 * self.mu);
            } else {
                row.axpy(li, &mut gradient);
            }
        }

        jac.clear();
        let mut h = vec![0.0; f.num_eq()];
        f.equalities(z, &mut h, Some(&mut jac));
        for (r, (&hj, &kj)) in h.iter().zip(&self.duals.kappa).enumerate() {
            let row = jac.row(r);
            value += kj * hj + self.nu * hj * hj;
            row.axpy(kj + 2.0 * self.nu * hj, &mut gradient);
            curvature.add_outer(row, 2.0 * self.nu);
        }

        for (i, ((&zi, &ci), &ei)) in z.iter().zip(self.consensus).zip(&self.duals.eta).enumerate() {
            let dz = zi - ci;
            value += ei * dz + 0.5 * self.rho * dz * dz;
            gradient[i] += ei + self.rho * dz;
            curvature.add_diag(i, self.rho);
        }

        LagrangianEval {
            value,
            gradient,
            curvature,
        }
    }
}

/// Evaluates `L_s` at `z`.
pub fn branch_lagrangian(
    branch: &BranchProblem,
    z: &[f64],
    consensus: &[f64],
    duals: &DualState,
    cfg: &SolverConfig,
) -> LagrangianEval {
    BranchLagrangian::new(branch, consensus, duals, cfg).evaluate(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{LinearRows, QpBranch};
    use std::sync::Arc;

    fn scalar_branch(weight: f64, h: f64, ineq_rhs: Option<f64>) -> BranchProblem {
        let mut qp = QpBranch::diagonal(vec![h], vec![0.0]);
        if let Some(b) = ineq_rhs {
            let mut rows = LinearRows::new();
            rows.push([(0, 1.0)], b);
            qp = qp.with_inequalities(rows);
        }
        BranchProblem::new(weight, Arc::new(qp)).unwrap()
    }

    #[test]
    fn augmentation_vanishes_at_feasible_consensus() {
        let b = scalar_branch(0.4, 2.0, Some(5.0));
        let duals = DualState::zeros(1, 0, 1);
        let z = [1.5];
        let e = branch_lagrangian(&b, &z, &[1.5], &duals, &SolverConfig::default());
        assert!((e.value - 0.4 * 0.5 * 2.0 * 1.5 * 1.5).abs() < 1e-14);
    }

    #[test]
    fn violated_inequality_adds_mu_g_squared() {
        // zero cost, g(z) = z - 0 evaluated at z = 0.5
        let b = scalar_branch(1.0, 0.0, Some(0.0));
        let duals = DualState::zeros(1, 0, 0);
        let cfg = SolverConfig::default();
        let e = branch_lagrangian(&b, &[0.5], &[], &duals, &cfg);
        assert_eq!(e.value, 0.25);
    }

    #[test]
    fn positive_multiplier_keeps_penalty_active() {
        let b = scalar_branch(1.0, 0.0, Some(0.0));
        let duals = DualState {
            lambda: vec![1.0],
            kappa: vec![],
            eta: vec![],
        };
        let mut cfg = SolverConfig::default();
        let active = branch_lagrangian(&b, &[-0.5], &[], &duals, &cfg);
        assert_eq!(active.value, -0.5 + 0.25);
        cfg.activation = Activation::Literal;
        let literal = branch_lagrangian(&b, &[-0.5], &[], &duals, &cfg);
        assert_eq!(literal.value, -0.5);
    }
}
