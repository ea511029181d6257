//! Closed-loop simulation of control-tree planners.
//!
//! Two scenarios: a car approaching pedestrians of uncertain intention
//! (longitudinal control only), and a vehicle driving a slalom among
//! potential obstacles, many of which are false detections. Scenes are
//! generated from a seed, perception reveals the truth at a random distance
//! per entity, and the planner under test re-plans every control period.

pub mod batch;
pub mod bench;
pub mod config;
pub mod controller;
pub mod episode;
pub mod error;
pub mod output;
pub mod perception;
pub mod plan;
pub mod scene;

pub use batch::{run_batch, summarize, BatchCell, BatchConfig, BatchRow, SummaryRow};
pub use bench::{linear_fit, run_scale_bench, ScaleBenchConfig, ScaleRow};
pub use config::{ScenarioConfig, ScenarioKind};
pub use controller::Controller;
pub use episode::{run_episode, run_episode_traced, CycleRecord, EpisodeMetrics, PlanTiming};
pub use error::{Result, SimError};
pub use scene::{generate_scene, Scene};
