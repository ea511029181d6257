//! Quadratic branch problems with linear constraints.

use crate::linalg::{BandedSym, SparseRows};
use crate::tree::BranchFunctions;

/// Affine rows `a_i . z - b_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearRows {
    rows: SparseRows,
    rhs: Vec<f64>,
}

impl LinearRows {
    pub fn new() -> Self {
        Self {
            rows: SparseRows::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds the row `sum_k v_k z_{i_k} - rhs`.
    pub fn push<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I, rhs: f64) {
        self.rows.push_row(entries);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn eval(&self, z: &[f64], out: &mut [f64]) {
        for (r, (o, b)) in out.iter_mut().zip(&self.rhs).enumerate() {
            *o = self.rows.row(r).dot(z) - b;
        }
    }

    fn max_span(&self) -> usize {
        self.rows.rows().map(|r| r.span()).max().unwrap_or(0)
    }

    fn append_jacobian(&self, jac: &mut SparseRows) {
        for r in self.rows.rows() {
            jac.push_row(r.indices.iter().copied().zip(r.values.iter().copied()));
        }
    }
}

/// `0.5 z^T H z + q^T z + c`, optionally plus a one-sided quadratic
/// penalty `w * sum max(0, a_i z - b_i)^2` for softened constraints.
#[derive(Clone, Debug)]
pub struct QpBranch {
    hessian: BandedSym,
    linear: Vec<f64>,
    constant: f64,
    ineq: LinearRows,
    eq: LinearRows,
    soft: Option<(LinearRows, f64)>,
    bandwidth: usize,
}

impl QpBranch {
    pub fn new(hessian: BandedSym, linear: Vec<f64>, constant: f64) -> Self {
        assert_eq!(hessian.dim(), linear.len());
        let bandwidth = hessian.bandwidth();
        Self {
            hessian,
            linear,
            constant,
            ineq: LinearRows::new(),
            eq: LinearRows::new(),
            soft: None,
            bandwidth,
        }
    }

    /// Separable quadratic `0.5 sum h_i z_i^2 + q_i z_i`.
    pub fn diagonal(h: Vec<f64>, q: Vec<f64>) -> Self {
        let mut hess = BandedSym::zeros(h.len(), 0);
        for (i, &v) in h.iter().enumerate() {
            hess.add_diag(i, v);
        }
        Self::new(hess, q, 0.0)
    }

    pub fn with_inequalities(mut self, rows: LinearRows) -> Self {
        self.bandwidth = self.bandwidth.max(rows.max_span());
        self.ineq = rows;
        self.widen_hessian();
        self
    }

    pub fn with_equalities(mut self, rows: LinearRows) -> Self {
        self.bandwidth = self.bandwidth.max(rows.max_span());
        self.eq = rows;
        self.widen_hessian();
        self
    }

    pub fn with_soft_inequalities(mut self, rows: LinearRows, weight: f64) -> Self {
        self.bandwidth = self.bandwidth.max(rows.max_span());
        self.soft = Some((rows, weight));
        self.widen_hessian();
        self
    }

    fn widen_hessian(&mut self) {
        let n = self.hessian.dim();
        let bw = self.bandwidth.min(n.saturating_sub(1));
        if bw > self.hessian.bandwidth() {
            let mut wide = BandedSym::zeros(n, bw);
            wide.add_scaled(&self.hessian, 1.0);
            self.hessian = wide;
        }
    }

    pub fn hessian(&self) -> &BandedSym {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn inequality_rows(&self) -> &LinearRows {
        &self.ineq
    }

    pub fn equality_rows(&self) -> &LinearRows {
        &self.eq
    }

    pub fn soft_rows(&self) -> Option<(&LinearRows, f64)> {
        self.soft.as_ref().map(|(r, w)| (r, *w))
    }
}

impl BranchFunctions for QpBranch {
    fn num_vars(&self) -> usize {
        self.linear.len()
    }

    fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    fn num_eq(&self) -> usize {
        self.eq.len()
    }

    fn cost(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let n = z.len();
        let mut hz = vec![0.0; n];
        self.hessian.mul_vec(z, &mut hz);
        let mut value = self.constant;
        for i in 0..n {
            value += z[i] * (0.5 * hz[i] + self.linear[i]);
        }
        let mut soft_active = Vec::new();
        if let Some((rows, w)) = &self.soft {
            let mut r = vec![0.0; rows.len()];
            rows.eval(z, &mut r);
            for (k, &v) in r.iter().enumerate() {
                if v > 0.0 {
                    value += w * v * v;
                    soft_active.push((k, v));
                }
            }
        }
        if let Some(g) = grad {
            for i in 0..n {
                g[i] = hz[i] + self.linear[i];
            }
            if let Some((rows, w)) = &self.soft {
                for (k, v) in soft_active {
                    rows.rows.row(k).axpy(2.0 * w * v, g);
                }
            }
        }
        value
    }

    fn add_cost_curvature(&self, z: &[f64], scale: f64, hess: &mut BandedSym) {
        hess.add_scaled(&self.hessian, scale);
        if let Some((rows, w)) = &self.soft {
            for (k, row) in rows.rows.rows().enumerate() {
                if row.dot(z) - rows.rhs[k] > 0.0 {
                    hess.add_outer(row, 2.0 * w * scale);
                }
            }
        }
    }

    fn inequalities(&self, z: &[f64], out: &mut [f64], jac: Option<&mut SparseRows>) {
        self.ineq.eval(z, out);
        if let Some(j) = jac {
            self.ineq.append_jacobian(j);
        }
    }

    fn equalities(&self, z: &[f64], out: &mut [f64], jac: Option<&mut SparseRows>) {
        self.eq.eval(z, out);
        if let Some(j) = jac {
            self.eq.append_jacobian(j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_and_gradient() {
        let mut rows = LinearRows::new();
        rows.push([(0, 1.0)], 1.0);
        let qp = QpBranch::diagonal(vec![2.0, 4.0], vec![-1.0, 0.0]).with_soft_inequalities(rows, 10.0);
        let z = [2.0, 1.0];
        let mut g = [0.0; 2];
        let v = qp.cost(&z, Some(&mut g));
        // 0.5*(2*4 + 4*1) - 2 + 10 * (2-1)^2
        assert!((v - 14.0).abs() < 1e-12);
        assert_eq!(g, [2.0 * 2.0 - 1.0 + 20.0, 4.0]);
    }

    #[test]
    fn constraint_rows_widen_band() {
        let mut rows = LinearRows::new();
        rows.push([(0, 1.0), (3, 1.0)], 0.0);
        let qp = QpBranch::diagonal(vec![1.0; 5], vec![0.0; 5]).with_inequalities(rows);
        assert_eq!(qp.bandwidth(), 3);
        assert_eq!(qp.hessian().bandwidth(), 3);
        let mut g = [0.0];
        qp.inequalities(&[1.0, 0.0, 0.0, 2.0, 0.0], &mut g, None);
        assert_eq!(g, [3.0]);
    }
}
