//! Many episodes over a grid of scenario cells, seeds and controllers.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::controller::Controller;
use crate::episode::{run_episode, EpisodeMetrics};
use crate::error::{Result, SimError};

/// Overrides that define one cell of the grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchCell {
    pub label: String,
    pub density_per_km: Option<f64>,
    pub crossing_fraction: Option<f64>,
    pub false_positive_fraction: Option<f64>,
}

impl BatchCell {
    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        if let Some(d) = self.density_per_km {
            cfg.acc.density_per_km = d;
        }
        if let Some(c) = self.crossing_fraction {
            cfg.acc.crossing_fraction = c;
        }
        if let Some(f) = self.false_positive_fraction {
            cfg.slalom.false_positive_fraction = f;
        }
        cfg
    }
}

/// A batch file:
///
/// ```toml
/// seeds = 20
/// controllers = ["tree-full", "tree-2", "single"]
///
/// [scenario]
/// kind = "pedestrian-acc"
/// duration = 300.0
///
/// [[cells]]
/// label = "20/km 5%"
/// density_per_km = 20.0
/// crossing_fraction = 0.05
/// ```
///
/// Episode `i` of every cell and controller uses seed `scenario.seed + i`,
/// so controllers are compared on identical scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub seeds: usize,
    pub controllers: Vec<Controller>,
    pub scenario: ScenarioConfig,
    pub cells: Vec<BatchCell>,
}

impl Default for BatchConfig {
    /// Twenty seeds of the base scenario, no cells.
    fn default() -> Self {
        Self {
            seeds: 20,
            controllers: vec![Controller::TreeFull, Controller::Tree(2), Controller::Single],
            scenario: ScenarioConfig::default(),
            cells: Vec::new(),
        }
    }
}

impl BatchConfig {
    /// The pedestrian grid: 20 and 80 pedestrians per km at several
    /// crossing fractions, full tree against two branches and the worst case.
    pub fn pedestrian_grid(seeds: usize) -> Self {
        let cell = |d: f64, c: f64| BatchCell {
            label: format!("{d}/km {}%", c * 100.0),
            density_per_km: Some(d),
            crossing_fraction: Some(c),
            false_positive_fraction: None,
        };
        Self {
            seeds,
            controllers: vec![Controller::TreeFull, Controller::Tree(2), Controller::Single],
            scenario: ScenarioConfig::pedestrian_acc(),
            cells: vec![
                cell(20.0, 0.05),
                cell(20.0, 0.25),
                cell(80.0, 0.01),
                cell(80.0, 0.05),
                cell(80.0, 0.25),
            ],
        }
    }

    /// The slalom grid: 90% and 75% false positives, oracle against a
    /// four-branch tree and the worst case.
    pub fn slalom_grid(seeds: usize) -> Self {
        let cell = |f: f64| BatchCell {
            label: format!("{}% false positives", f * 100.0),
            false_positive_fraction: Some(f),
            ..BatchCell::default()
        };
        Self {
            seeds,
            controllers: vec![Controller::Oracle, Controller::Tree(4), Controller::Single],
            scenario: ScenarioConfig::slalom(),
            cells: vec![cell(0.9), cell(0.75)],
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
        toml::to_string(self).expect("batch config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.controllers.is_empty() {
            return Err(SimError::InvalidConfig("a batch needs seeds >= 1 and a controller".into()));
        }
        self.scenario.validate()?;
        for cell in self.cells_or_base() {
            cell.apply(&self.scenario).validate()?;
        }
        Ok(())
    }

    /// The cells, or a single unnamed cell of the base scenario.
    pub fn cells_or_base(&self) -> Vec<BatchCell> {
        if self.cells.is_empty() {
            vec![BatchCell {
                label: self.scenario.kind.to_string(),
                ..BatchCell::default()
            }]
        } else {
            self.cells.clone()
        }
    }
}

/// One episode of a batch.
#[derive(Clone, Debug)]
pub struct BatchRow {
    pub cell: String,
    pub seed: u64,
    pub controller: Controller,
    /// `Err` holds the message of a failed episode.
    pub outcome: std::result::Result<EpisodeMetrics, String>,
}

/// Runs every (cell, seed, controller) episode, `threads` at a time. Rows
/// come back in that nesting order whatever the thread count.
pub fn run_batch(cfg: &BatchConfig, threads: usize) -> Result<Vec<BatchRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for cell in cfg.cells_or_base() {
        let base = cell.apply(&cfg.scenario);
        for i in 0..cfg.seeds {
            for &controller in &cfg.controllers {
                let mut scenario = base.clone();
                scenario.seed = base.seed + i as u64;
                jobs.push((cell.label.clone(), scenario, controller));
            }
        }
    }
    let run = |(cell, scenario, controller): &(String, ScenarioConfig, Controller)| BatchRow {
        cell: cell.clone(),
        seed: scenario.seed,
        controller: *controller,
        outcome: run_episode(scenario, *controller).map_err(|e| e.to_string()),
    };
    if threads <= 1 {
        return Ok(jobs.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}

/// Means over the successful episodes of one (cell, controller) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub cell: String,
    pub kind: ScenarioKind,
    pub controller: Controller,
    pub episodes: usize,
    pub failed_episodes: usize,
    pub avg_cost: f64,
    pub realized_cost: f64,
    pub avg_speed: f64,
    pub collisions: usize,
    pub violations: usize,
    pub nonconverged: usize,
    pub planner_failures: usize,
    pub mean_iterations: f64,
    pub plan_mean_ms: f64,
}

/// Summary rows in first-appearance order of the (cell, controller) pairs.
pub fn summarize(rows: &[BatchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Controller)> = Vec::new();
    for r in rows {
        let key = (r.cell.clone(), r.controller);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(cell, controller)| {
            let group: Vec<&BatchRow> = rows.iter().filter(|r| r.cell == cell && r.controller == controller).collect();
            let ok: Vec<&EpisodeMetrics> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let n = ok.len().max(1) as f64;
            let mean = |f: fn(&EpisodeMetrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / n;
            let total = |f: fn(&EpisodeMetrics) -> usize| ok.iter().map(|m| f(m)).sum::<usize>();
            SummaryRow {
                kind: ok.first().map_or(ScenarioKind::PedestrianAcc, |m| m.kind),
                episodes: ok.len(),
                failed_episodes: group.len() - ok.len(),
                avg_cost: mean(|m| m.avg_cost),
                realized_cost: mean(|m| m.realized_cost),
                avg_speed: mean(|m| m.avg_speed),
                collisions: total(|m| m.collisions),
                violations: total(|m| m.violations),
                nonconverged: total(|m| m.nonconverged),
                planner_failures: total(|m| m.failures),
                mean_iterations: mean(|m| m.mean_iterations),
                plan_mean_ms: mean(|m| m.timing.mean_ms),
                cell,
                controller,
            }
        })
        .collect()
}
