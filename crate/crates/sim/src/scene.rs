//! Randomized scenes, fully determined by the scenario seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Uniform};

use crate::config::{ScenarioConfig, ScenarioKind};

/// Ground truth about one pedestrian standing next to the lane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pedestrian {
    pub id: u64,
    /// Longitudinal position (m).
    pub position: f64,
    /// Whether the pedestrian steps onto the lane when approached.
    pub crosses: bool,
    /// The intention becomes observable below this distance (m).
    pub reveal_distance: f64,
}

/// Ground truth about one potential obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub id: u64,
    pub center: (f64, f64),
    pub radius: f64,
    /// `false` for a false positive of the detector.
    pub exists: bool,
    pub reveal_distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    /// Sorted by position.
    pub pedestrians: Vec<Pedestrian>,
    /// Sorted by longitudinal position.
    pub obstacles: Vec<Obstacle>,
}

/// Road length that an episode cannot outrun: the duration at a speed
/// comfortably above the desired one, plus a horizon's worth of margin.
pub fn road_length(cfg: &ScenarioConfig) -> f64 {
    let v = match cfg.kind {
        ScenarioKind::PedestrianAcc => cfg.acc.cost.v_desired.max(cfg.acc.initial_speed),
        ScenarioKind::Slalom => cfg.slalom.cost.v_desired.max(cfg.slalom.initial_speed),
    };
    (v + 2.0) * cfg.duration + 200.0
}

/// Places the entities of the scenario.
///
/// Pedestrians form a Poisson process of the configured density along the
/// road; potential obstacles are evenly spaced with a random lateral offset.
/// Each entity independently draws its ground truth and its reveal distance.
pub fn generate_scene(cfg: &ScenarioConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let length = road_length(cfg);
    let reveal = Uniform::new_inclusive(cfg.reveal.min, cfg.reveal.max);
    match cfg.kind {
        ScenarioKind::PedestrianAcc => {
            let acc = &cfg.acc;
            let mut pedestrians = Vec::new();
            if acc.density_per_km > 0.0 {
                let gap = Exp::new(acc.density_per_km / 1000.0).expect("positive rate");
                let crosses = Bernoulli::new(acc.crossing_fraction).expect("fraction in [0, 1]");
                let mut x = acc.clear_start;
                loop {
                    x += gap.sample(&mut rng);
                    if x > length {
                        break;
                    }
                    pedestrians.push(Pedestrian {
                        id: pedestrians.len() as u64,
                        position: x,
                        crosses: crosses.sample(&mut rng),
                        reveal_distance: reveal.sample(&mut rng),
                    });
                }
            }
            Scene {
                pedestrians,
                obstacles: Vec::new(),
            }
        }
        ScenarioKind::Slalom => {
            let sl = &cfg.slalom;
            let exists = Bernoulli::new(1.0 - sl.false_positive_fraction).expect("fraction in [0, 1]");
            let count = ((length - sl.first_obstacle) / sl.spacing).floor().max(0.0) as usize + 1;
            let obstacles = (0..count)
                .map(|k| {
                    let y = if sl.lateral_offset > 0.0 {
                        rng.gen_range(-sl.lateral_offset..=sl.lateral_offset)
                    } else {
                        0.0
                    };
                    Obstacle {
                        id: k as u64,
                        center: (sl.first_obstacle + k as f64 * sl.spacing, y),
                        radius: sl.radius,
                        exists: exists.sample(&mut rng),
                        reveal_distance: reveal.sample(&mut rng),
                    }
                })
                .collect();
            Scene {
                pedestrians: Vec::new(),
                obstacles,
            }
        }
    }
}
