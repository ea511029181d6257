//! Multiplier, consensus and termination updates applied between the
//! branch minimizations.

use super::config::SolverConfig;

/// `max(0, lambda + 2 mu g)` entrywise.
pub fn update_inequality_duals(lambda: &[f64], g: &[f64], mu: f64) -> Vec<f64> {
    assert_eq!(lambda.len(), g.len());
    lambda
        .iter()
        .zip(g)
        .map(|(&l, &gi)| (l + 2.0 * mu * gi).max(0.0))
        .collect()
}

/// `kappa + 2 nu h` entrywise.
pub fn update_equality_duals(kappa: &[f64], h: &[f64], nu: f64) -> Vec<f64> {
    assert_eq!(kappa.len(), h.len());
    kappa
        .iter()
        .zip(h)
        .map(|(&k, &hj)| k + 2.0 * nu * hj)
        .collect()
}

/// Arithmetic mean of the branch trunks, summed in branch order.
///
/// Each slice may be a full branch sequence; only the first `trunk_len`
/// entries are averaged.
pub fn update_consensus(branch_vars: &[&[f64]], trunk_len: usize) -> Vec<f64> {
    assert!(!branch_vars.is_empty(), "consensus needs at least one branch");
    let mut out = vec![0.0; trunk_len];
    for z in branch_vars {
        for (o, &v) in out.iter_mut().zip(&z[..trunk_len]) {
            *o += v;
        }
    }
    let n = branch_vars.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Weighted mean of the branch trunks, summed in branch order.
pub fn update_consensus_weighted(branch_vars: &[&[f64]], weights: &[f64], trunk_len: usize) -> Vec<f64> {
    assert_eq!(branch_vars.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; trunk_len];
    for (z, &w) in branch_vars.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(&z[..trunk_len]) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// `eta + rho (z - z~)` over the trunk.
pub fn update_consensus_duals(eta: &[f64], z_branch: &[f64], consensus: &[f64], rho: f64) -> Vec<f64> {
    assert_eq!(eta.len(), consensus.len());
    eta.iter()
        .zip(z_branch)
        .zip(consensus)
        .map(|((&e, &z), &c)| e + rho * (z - c))
        .collect()
}

/// The four residuals of one outer iteration, each the worst case over
/// branches, in the infinity norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `max(g^+, |h|)`.
    pub aula_primal: f64,
    /// `|z_s^{k+1} - z_s^k|`.
    pub aula_dual: f64,
    /// `|z_s^{k+1} - z~^{k+1}|` over the trunk.
    pub admm_primal: f64,
    /// `|z~^{k+1} - z~^k|`.
    pub admm_dual: f64,
}

/// True iff every residual is within its threshold.
pub fn check_termination(r: &Residuals, cfg: &SolverConfig) -> bool {
    r.aula_primal <= cfg.eps_pri
        && r.aula_dual <= cfg.eps_dual
        && r.admm_primal <= cfg.xi_pri
        && r.admm_dual <= cfg.xi_dual
}
