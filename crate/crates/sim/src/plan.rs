//! One planning problem read from a file, solved once.

use std::path::Path;

use control_tree::acc::{AccCostParams, AccPlan, AccPlanner, CarState, Intent, PedestrianObs};
use control_tree::slalom::{NonholonomicForm, ObstacleHyp, Pose2, SlalomCostParams, SlalomPlan, SlalomPlanner};
use control_tree::{SolveReport, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::config::{HorizonConfig, ScenarioConfig, ScenarioKind};
use crate::controller::Controller;
use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneIntent {
    #[default]
    Uncertain,
    Crossing,
    NotCrossing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePedestrian {
    /// m, along the lane.
    pub position: f64,
    #[serde(default)]
    pub crossing_probability: f64,
    #[serde(default)]
    pub intent: SceneIntent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObstacle {
    /// m
    pub x: f64,
    /// m
    pub y: f64,
    /// m
    #[serde(default = "unit_radius")]
    pub radius: f64,
    #[serde(default = "certain")]
    pub existence_probability: f64,
}

fn unit_radius() -> f64 {
    1.0
}

fn certain() -> f64 {
    1.0
}

/// A scene file:
///
/// ```toml
/// kind = "pedestrian-acc"
/// speed = 13.33
///
/// [[pedestrians]]
/// position = 25.0
/// crossing_probability = 0.15
/// ```
///
/// The vehicle starts at the origin heading along +x. Slalom scenes list
/// `[[obstacles]]` with `x`, `y`, `radius` and `existence_probability`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanScene {
    pub kind: ScenarioKind,
    /// m/s
    pub speed: f64,
    pub pedestrians: Vec<ScenePedestrian>,
    pub obstacles: Vec<SceneObstacle>,
    pub horizon: HorizonConfig,
    pub acc_cost: AccCostParams,
    pub slalom_cost: SlalomCostParams,
    pub form: NonholonomicForm,
    pub solver: Option<SolverConfig>,
}

impl Default for PlanScene {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::PedestrianAcc,
            speed: AccCostParams::default().v_desired,
            pedestrians: Vec::new(),
            obstacles: Vec::new(),
            horizon: HorizonConfig::default(),
            acc_cost: AccCostParams::default(),
            slalom_cost: SlalomCostParams::default(),
            form: NonholonomicForm::NoSlip,
            solver: None,
        }
    }
}

impl PlanScene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Self = toml::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(SimError::InvalidConfig(format!("speed must be >= 0, got {}", self.speed)));
        }
        for p in &self.pedestrians {
            if !p.position.is_finite() || !(0.0..=1.0).contains(&p.crossing_probability) {
                return Err(SimError::InvalidConfig(format!("bad pedestrian {p:?}")));
            }
        }
        for o in &self.obstacles {
            if !(o.x.is_finite() && o.y.is_finite() && o.radius > 0.0) || !(0.0..=1.0).contains(&o.existence_probability) {
                return Err(SimError::InvalidConfig(format!("bad obstacle {o:?}")));
            }
        }
        self.horizon.spec()?;
        Ok(())
    }

    fn solver_config(&self, workers: usize) -> SolverConfig {
        let base = ScenarioConfig {
            kind: self.kind,
            solver: self.solver.clone(),
            workers,
            ..ScenarioConfig::default()
        };
        base.solver_config()
    }
}

/// A solved scene.
#[derive(Clone, Debug)]
pub enum ScenePlan {
    Acc(AccPlan),
    Slalom(SlalomPlan),
}

impl ScenePlan {
    pub fn report(&self) -> &SolveReport {
        match self {
            ScenePlan::Acc(p) => &p.solution.report,
            ScenePlan::Slalom(p) => &p.solution.report,
        }
    }

    pub fn num_branches(&self) -> usize {
        match self {
            ScenePlan::Acc(p) => p.hypotheses.len(),
            ScenePlan::Slalom(p) => p.hypotheses.len(),
        }
    }
}

/// Solves the scene from a cold start. The oracle controller is not
/// meaningful without a hidden truth and plans like `tree-full`.
pub fn plan_scene(scene: &PlanScene, controller: Controller, workers: usize) -> Result<ScenePlan> {
    scene.validate()?;
    let horizon = scene.horizon.spec()?;
    let cfg = scene.solver_config(workers);
    match scene.kind {
        ScenarioKind::PedestrianAcc => {
            let peds: Vec<PedestrianObs> = scene
                .pedestrians
                .iter()
                .enumerate()
                .map(|(i, p)| PedestrianObs {
                    id: i as u64,
                    position: p.position,
                    crossing_prob: p.crossing_probability,
                    intent: match p.intent {
                        SceneIntent::Uncertain => Intent::Uncertain,
                        SceneIntent::Crossing => Intent::Crossing,
                        SceneIntent::NotCrossing => Intent::NotCrossing,
                    },
                })
                .collect();
            let planner = AccPlanner::new(scene.acc_cost, horizon, cfg)?;
            let plan = planner.plan(CarState::new(0.0, scene.speed), &peds, controller.acc_mode(), None)?;
            Ok(ScenePlan::Acc(plan))
        }
        ScenarioKind::Slalom => {
            let obstacles = scene
                .obstacles
                .iter()
                .enumerate()
                .map(|(i, o)| ObstacleHyp::new(i as u64, (o.x, o.y), o.radius, o.existence_probability))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let planner = SlalomPlanner::new(scene.slalom_cost, horizon, cfg)?.with_form(scene.form);
            let q0 = Pose2::new(0.0, 0.0, 0.0);
            let q_prev = Pose2::new(-scene.speed * horizon.dt, 0.0, 0.0);
            let plan = planner.plan(q0, q_prev, &obstacles, controller.slalom_mode(), None)?;
            Ok(ScenePlan::Slalom(plan))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_pedestrians_give_four_branches() {
        let scene = PlanScene::from_toml_str(
            "speed = 13.333\n\
             [[pedestrians]]\nposition = 25.0\ncrossing_probability = 0.15\n\
             [[pedestrians]]\nposition = 35.0\ncrossing_probability = 0.15\n\
             [[pedestrians]]\nposition = 45.0\ncrossing_probability = 0.15\n",
        )
        .unwrap();
        let plan = plan_scene(&scene, Controller::TreeFull, 1).unwrap();
        assert_eq!(plan.num_branches(), 4);
        assert!(plan.report().converged);
    }

    #[test]
    fn empty_scene_is_one_branch() {
        for kind in ["pedestrian-acc", "slalom"] {
            let scene = PlanScene::from_toml_str(&format!("kind = \"{kind}\"\nspeed = 10.0\n")).unwrap();
            assert_eq!(plan_scene(&scene, Controller::TreeFull, 1).unwrap().num_branches(), 1);
        }
    }

    #[test]
    fn rejects_malformed_scenes() {
        assert!(PlanScene::from_toml_str("speed = -1.0").is_err());
        assert!(PlanScene::from_toml_str("[[pedestrians]]\nposition = 5.0\ncrossing_probability = 1.5").is_err());
        assert!(PlanScene::from_toml_str("sped = 3.0").is_err());
        assert!(PlanScene::from_toml_str("speed = ").is_err());
    }
}
