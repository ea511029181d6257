//! The whole tree as a single problem.
//!
//! Variables are laid out as `[trunk | tail_0 | tail_1 | ...]`; branch `s`
//! sees `[trunk | tail_s]`. The non-anticipativity constraint is satisfied by
//! construction, and the curvature is stored densely.

use std::sync::Arc;

use crate::linalg::{BandedSym, SparseRows};
use crate::tree::{BranchFunctions, TreeProblem};

use super::DualState;

#[derive(Debug)]
pub struct JointFunctions {
    branches: Vec<(f64, Arc<dyn BranchFunctions>)>,
    branch_len: usize,
    trunk_len: usize,
    num_ineq: usize,
    num_eq: usize,
}

impl JointFunctions {
    pub fn new(problem: &TreeProblem) -> Self {
        let branches: Vec<_> = problem
            .branches()
            .iter()
            .map(|b| (b.cost_weight(), b.functions_arc()))
            .collect();
        Self {
            num_ineq: branches.iter().map(|b| b.1.num_ineq()).sum(),
            num_eq: branches.iter().map(|b| b.1.num_eq()).sum(),
            branches,
            branch_len: problem.branch_len(),
            trunk_len: problem.trunk_len(),
        }
    }

    fn tail_len(&self) -> usize {
        self.branch_len - self.trunk_len
    }

    #[inline]
    fn map_index(&self, s: usize, i: usize) -> usize {
        if i < self.trunk_len {
            i
        } else {
            self.trunk_len + s * self.tail_len() + (i - self.trunk_len)
        }
    }

    fn branch_vars(&self, s: usize, z: &[f64]) -> Vec<f64> {
        let mut out = z[..self.trunk_len].to_vec();
        let start = self.trunk_len + s * self.tail_len();
        out.extend_from_slice(&z[start..start + self.tail_len()]);
        out
    }

    /// Joint vector from a trunk and per-branch sequences (branch trunks ignored).
    pub fn pack(&self, trunk: &[f64], branch_vars: &[Vec<f64>]) -> Vec<f64> {
        let mut out = trunk.to_vec();
        for z in branch_vars {
            out.extend_from_slice(&z[self.trunk_len..]);
        }
        out
    }

    /// Trunk and full per-branch sequences from a joint vector.
    pub fn unpack(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let vars = (0..self.branches.len()).map(|s| self.branch_vars(s, z)).collect();
        (z[..self.trunk_len].to_vec(), vars)
    }

    pub fn split_duals(&self, joint: &DualState, trunk_len: usize) -> Vec<DualState> {
        let (mut gi, mut hi) = (0, 0);
        self.branches
            .iter()
            .map(|(_, f)| {
                let d = DualState {
                    lambda: joint.lambda[gi..gi + f.num_ineq()].to_vec(),
                    kappa: joint.kappa[hi..hi + f.num_eq()].to_vec(),
                    eta: vec![0.0; trunk_len],
                };
                gi += f.num_ineq();
                hi += f.num_eq();
                d
            })
            .collect()
    }

    fn stacked_constraints(
        &self,
        z: &[f64],
        out: &mut [f64],
        jac: Option<&mut SparseRows>,
        equalities: bool,
    ) {
        let mut local = SparseRows::new();
        let mut offset = 0;
        let mut jac = jac;
        for (s, (_, f)) in self.branches.iter().enumerate() {
            let zs = self.branch_vars(s, z);
            let m = if equalities { f.num_eq() } else { f.num_ineq() };
            local.clear();
            let want = jac.is_some();
            let slot = &mut out[offset..offset + m];
            if equalities {
                f.equalities(&zs, slot, want.then_some(&mut local));
            } else {
                f.inequalities(&zs, slot, want.then_some(&mut local));
            }
            if let Some(j) = jac.as_deref_mut() {
                for row in local.rows() {
                    j.push_row(
                        row.indices
                            .iter()
                            .zip(row.values)
                            .map(|(&i, &v)| (self.map_index(s, i), v)),
                    );
                }
            }
            offset += m;
        }
    }
}

impl BranchFunctions for JointFunctions {
    fn num_vars(&self) -> usize {
        self.trunk_len + self.branches.len() * self.tail_len()
    }

    fn bandwidth(&self) -> usize {
        self.num_vars().saturating_sub(1)
    }

    fn num_ineq(&self) -> usize {
        self.num_ineq
    }

    fn num_eq(&self) -> usize {
        self.num_eq
    }

    fn cost(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut value = 0.0;
        let mut local = vec![0.0; self.branch_len];
        match grad {
            Some(g) => {
                g.iter_mut().for_each(|x| *x = 0.0);
                for (s, (w, f)) in self.branches.iter().enumerate() {
                    let zs = self.branch_vars(s, z);
                    value += w * f.cost(&zs, Some(&mut local));
                    for (i, &gi) in local.iter().enumerate() {
                        g[self.map_index(s, i)] += w * gi;
                    }
                }
            }
            None => {
                for (s, (w, f)) in self.branches.iter().enumerate() {
                    value += w * f.cost(&self.branch_vars(s, z), None);
                }
            }
        }
        value
    }

    fn add_cost_curvature(&self, z: &[f64], scale: f64, hess: &mut BandedSym) {
        for (s, (w, f)) in self.branches.iter().enumerate() {
            let zs = self.branch_vars(s, z);
            let mut local = BandedSym::zeros(self.branch_len, f.bandwidth());
            f.add_cost_curvature(&zs, scale * w, &mut local);
            for i in 0..self.branch_len {
                for j in i.saturating_sub(local.bandwidth())..=i {
                    let v = local.get(i, j);
                    if v != 0.0 {
                        hess.add(self.map_index(s, i), self.map_index(s, j), v);
                    }
                }
            }
        }
    }

    fn inequalities(&self, z: &[f64], out: &mut [f64], jac: Option<&mut SparseRows>) {
        self.stacked_constraints(z, out, jac, false);
    }

    fn equalities(&self, z: &[f64], out: &mut [f64], jac: Option<&mut SparseRows>) {
        self.stacked_constraints(z, out, jac, true);
    }
}
