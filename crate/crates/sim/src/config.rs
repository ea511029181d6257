//! Scenario description, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! duration = 300.0
//! control_rate = 10.0
//! kind = "pedestrian-acc"
//!
//! [acc]
//! density_per_km = 80.0
//! crossing_fraction = 0.25
//! ```

use std::path::Path;

use control_tree::acc::{acc_solver_config, AccCostParams};
use control_tree::slalom::{slalom_solver_config, NonholonomicForm, SlalomCostParams};
use control_tree::{HorizonSpec, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    PedestrianAcc,
    Slalom,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScenarioKind::PedestrianAcc => "pedestrian-acc",
            ScenarioKind::Slalom => "slalom",
        })
    }
}

/// Distance (m) below which an entity's true nature becomes observable,
/// drawn uniformly per entity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevealDistance {
    pub min: f64,
    pub max: f64,
}

impl Default for RevealDistance {
    fn default() -> Self {
        Self { min: 5.0, max: 25.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub trunk_steps: usize,
    pub total_steps: usize,
    /// s
    pub dt: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        let h = HorizonSpec::default();
        Self {
            trunk_steps: h.trunk_steps,
            total_steps: h.total_steps,
            dt: h.dt,
        }
    }
}

impl HorizonConfig {
    pub fn spec(&self) -> Result<HorizonSpec> {
        Ok(HorizonSpec::new(self.trunk_steps, self.total_steps, self.dt)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccScenario {
    /// Pedestrians per km of road.
    pub density_per_km: f64,
    /// Fraction of pedestrians that cross; also the prior crossing
    /// probability reported until a pedestrian's intention is revealed.
    pub crossing_fraction: f64,
    /// Time a crossing pedestrian spends on the lane after stepping out (s).
    pub crossing_duration: f64,
    /// m/s
    pub initial_speed: f64,
    /// No pedestrian is placed closer than this to the start (m).
    pub clear_start: f64,
    pub cost: AccCostParams,
}

impl Default for AccScenario {
    fn default() -> Self {
        Self {
            density_per_km: 20.0,
            crossing_fraction: 0.05,
            crossing_duration: 5.0,
            initial_speed: AccCostParams::default().v_desired,
            clear_start: 40.0,
            cost: AccCostParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlalomScenario {
    /// Longitudinal distance between potential obstacles (m).
    pub spacing: f64,
    /// Fraction of potential obstacles that do not exist.
    pub false_positive_fraction: f64,
    /// Obstacle centers are offset laterally by up to this much (m).
    pub lateral_offset: f64,
    /// m
    pub radius: f64,
    /// m/s
    pub initial_speed: f64,
    /// Position of the first potential obstacle (m).
    pub first_obstacle: f64,
    pub form: NonholonomicForm,
    pub cost: SlalomCostParams,
}

impl Default for SlalomScenario {
    fn default() -> Self {
        Self {
            spacing: 17.0,
            false_positive_fraction: 0.9,
            lateral_offset: 1.0,
            radius: 1.0,
            initial_speed: SlalomCostParams::default().v_desired,
            first_obstacle: 30.0,
            form: NonholonomicForm::NoSlip,
            cost: SlalomCostParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated time (s).
    pub duration: f64,
    /// Re-planning rate (Hz).
    pub control_rate: f64,
    pub kind: ScenarioKind,
    /// Solver threads per episode.
    pub workers: usize,
    pub reveal: RevealDistance,
    pub horizon: HorizonConfig,
    pub acc: AccScenario,
    pub slalom: SlalomScenario,
    /// Overrides the scenario's tuned solver settings.
    pub solver: Option<SolverConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::pedestrian_acc()
    }
}

impl ScenarioConfig {
    /// Ten re-plans per second for five simulated minutes.
    pub fn pedestrian_acc() -> Self {
        Self {
            seed: 0,
            duration: 300.0,
            control_rate: 10.0,
            kind: ScenarioKind::PedestrianAcc,
            workers: 1,
            reveal: RevealDistance::default(),
            horizon: HorizonConfig::default(),
            acc: AccScenario::default(),
            slalom: SlalomScenario::default(),
            solver: None,
        }
    }

    /// Re-plans once per planning step, so that the pose one step back is
    /// always an executed pose.
    pub fn slalom() -> Self {
        let horizon = HorizonConfig::default();
        Self {
            duration: 60.0,
            control_rate: 1.0 / horizon.dt,
            kind: ScenarioKind::Slalom,
            horizon,
            ..Self::pedestrian_acc()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(SimError::InvalidConfig(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return invalid(format!("control_rate must be > 0, got {}", self.control_rate));
        }
        if self.workers == 0 {
            return invalid("workers must be >= 1".into());
        }
        if !(0.0 <= self.reveal.min && self.reveal.min <= self.reveal.max) {
            return invalid("reveal distances need 0 <= min <= max".into());
        }
        for (name, f) in [
            ("acc.crossing_fraction", self.acc.crossing_fraction),
            ("slalom.false_positive_fraction", self.slalom.false_positive_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return invalid(format!("{name} must be in [0, 1], got {f}"));
            }
        }
        if !(self.acc.density_per_km >= 0.0) {
            return invalid("acc.density_per_km must be >= 0".into());
        }
        if !(self.acc.crossing_duration >= 0.0) {
            return invalid("acc.crossing_duration must be >= 0".into());
        }
        if !(self.slalom.spacing > 0.0 && self.slalom.radius > 0.0) {
            return invalid("slalom.spacing and slalom.radius must be > 0".into());
        }
        self.horizon.spec()?;
        self.acc.cost.validate()?;
        self.slalom.cost.validate()?;
        self.solver_config().validate()?;
        Ok(())
    }

    /// Planning period (s).
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Number of planning cycles in an episode.
    pub fn cycles(&self) -> usize {
        (self.duration * self.control_rate).round() as usize
    }

    /// The override if given, else the settings tuned for the scenario kind,
    /// with the configured worker count.
    pub fn solver_config(&self) -> SolverConfig {
        let base = self.solver.clone().unwrap_or_else(|| match self.kind {
            ScenarioKind::PedestrianAcc => acc_solver_config(),
            ScenarioKind::Slalom => slalom_solver_config(),
        });
        SolverConfig {
            workers: self.workers,
            ..base
        }
    }
}
