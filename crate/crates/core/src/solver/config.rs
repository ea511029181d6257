use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// When the squared inequality penalty is switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Penalize `g_i` iff `g_i > 0` or `lambda_i > 0`.
    #[default]
    ActiveSet,
    /// Penalize `g_i` iff `g_i > 0`.
    Literal,
}

/// How the trunk consensus averages the branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusWeighting {
    /// Plain arithmetic mean over branches.
    #[default]
    Uniform,
    /// Per-branch consensus penalty `rho * N * p_s` (so the penalties
    /// average to `rho`) and the penalty-weighted mean as consensus.
    Belief,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub max_inner_iters: usize,
    /// Stop when the Lagrangian gradient infinity-norm falls below this.
    pub grad_tol: f64,
    /// Stop when a step moves no variable by more than
    /// `step_tol * (1 + |z|_inf)`.
    pub step_tol: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Sufficient-decrease coefficient of the Armijo test.
    pub armijo: f64,
    /// Levenberg damping always added to the curvature diagonal.
    pub damping_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_inner_iters: 50,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            backtrack: 0.5,
            armijo: 1e-4,
            damping_floor: 1e-9,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("step_tol", self.step_tol),
            ("armijo", self.armijo),
            ("damping_floor", self.damping_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("newton.{name} must be > 0")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter("newton.backtrack must be in (0, 1)".into()));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidParameter("newton.max_inner_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Penalties, thresholds and iteration limits of the solver.
///
/// Readable from a plain `key = value` file (TOML), e.g.
///
/// ```text
/// rho = 1.0
/// eps_pri = 1e-3
/// [newton]
/// max_inner_iters = 30
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Inequality penalty weight.
    pub mu: f64,
    /// Equality penalty weight.
    pub nu: f64,
    /// Consensus penalty weight.
    pub rho: f64,
    pub eps_pri: f64,
    pub eps_dual: f64,
    pub xi_pri: f64,
    pub xi_dual: f64,
    pub max_outer_iters: usize,
    pub activation: Activation,
    pub consensus_weighting: ConsensusWeighting,
    /// Threads used for the per-branch phase. 1 runs everything inline.
    pub workers: usize,
    pub newton: NewtonConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: 1.0,
            rho: 1.0,
            eps_pri: 1e-3,
            eps_dual: 1e-3,
            xi_pri: 1e-3,
            xi_dual: 1e-3,
            max_outer_iters: 100,
            activation: Activation::ActiveSet,
            consensus_weighting: ConsensusWeighting::Uniform,
            workers: 1,
            newton: NewtonConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu", self.mu),
            ("nu", self.nu),
            ("rho", self.rho),
            ("eps_pri", self.eps_pri),
            ("eps_dual", self.eps_dual),
            ("xi_pri", self.xi_pri),
            ("xi_dual", self.xi_dual),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidParameter("max_outer_iters must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        self.newton.validate()
    }

    /// Parses and validates a `key = value` config text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("solver config serializes")
    }

    /// Same thresholds everywhere.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.eps_pri = tol;
        self.eps_dual = tol;
        self.xi_pri = tol;
        self.xi_dual = tol;
        self
    }
}
