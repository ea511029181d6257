//! Simulated perception: what the planner is told about each entity.
//!
//! An entity is reported with its prior probability until the vehicle comes
//! within the entity's reveal distance; from then on its true nature is
//! known. Crossing pedestrians step onto the lane at that moment and leave
//! it after the configured crossing duration. Obstacles revealed as false
//! positives disappear from the stream, real ones are reported as certain.

use control_tree::acc::{Intent, PedestrianObs};
use control_tree::slalom::{Existence, ObstacleHyp};

use crate::scene::{Obstacle, Pedestrian};

/// Entities farther ahead than this are not reported (m).
pub const SENSOR_RANGE: f64 = 150.0;

/// Reveal times of the pedestrians of one scene.
#[derive(Clone, Debug)]
pub struct PedestrianTracker {
    revealed_at: Vec<Option<f64>>,
    prior: f64,
    crossing_duration: f64,
    oracle: bool,
}

impl PedestrianTracker {
    /// With `oracle`, every intention is known from the start.
    pub fn new(count: usize, prior: f64, crossing_duration: f64, oracle: bool) -> Self {
        Self {
            revealed_at: vec![None; count],
            prior,
            crossing_duration,
            oracle,
        }
    }

    /// Index range of the pedestrians between `from` and `to`.
    fn window(pedestrians: &[Pedestrian], from: f64, to: f64) -> std::ops::Range<usize> {
        let lo = pedestrians.partition_point(|p| p.position < from);
        let hi = pedestrians.partition_point(|p| p.position <= to);
        lo..hi
    }

    /// Records the pedestrians whose reveal distance the car at `car_x` has
    /// just entered.
    pub fn update(&mut self, pedestrians: &[Pedestrian], car_x: f64, t: f64) {
        for i in Self::window(pedestrians, car_x, car_x + SENSOR_RANGE) {
            let p = &pedestrians[i];
            if self.revealed_at[i].is_none() && p.position - car_x < p.reveal_distance {
                self.revealed_at[i] = Some(t);
            }
        }
    }

    /// Whether pedestrian `i` stands on the lane at time `t`.
    pub fn on_lane(&self, pedestrians: &[Pedestrian], i: usize, t: f64) -> bool {
        pedestrians[i].crosses && self.revealed_at[i].is_some_and(|t0| t >= t0 && t < t0 + self.crossing_duration)
    }

    /// Indices of the pedestrians on the lane between `from` and `to` at `t`.
    pub fn lane_blockers(&self, pedestrians: &[Pedestrian], from: f64, to: f64, t: f64) -> Vec<usize> {
        Self::window(pedestrians, from, to)
            .filter(|&i| self.on_lane(pedestrians, i, t))
            .collect()
    }

    /// Observations of the pedestrians ahead of `car_x` at time `t`.
    pub fn observe(&self, pedestrians: &[Pedestrian], car_x: f64, t: f64) -> Vec<PedestrianObs> {
        let mut out = Vec::new();
        for i in Self::window(pedestrians, car_x, car_x + SENSOR_RANGE) {
            let p = &pedestrians[i];
            let obs = match (self.revealed_at[i], self.oracle) {
                (None, false) => PedestrianObs::uncertain(p.id, p.position, self.prior),
                (None, true) if p.crosses => PedestrianObs::crossing(p.id, p.position),
                (Some(_), _) if self.on_lane(pedestrians, i, t) => PedestrianObs::crossing(p.id, p.position),
                (Some(_), _) if p.crosses => continue,
                _ => PedestrianObs {
                    id: p.id,
                    position: p.position,
                    crossing_prob: 0.0,
                    intent: Intent::NotCrossing,
                },
            };
            out.push(obs);
        }
        out
    }
}

/// Reveal state of the potential obstacles of one scene.
#[derive(Clone, Debug)]
pub struct ObstacleTracker {
    revealed: Vec<bool>,
    prior: f64,
    oracle: bool,
}

impl ObstacleTracker {
    /// `prior` is the existence probability reported before reveal. With
    /// `oracle`, only real obstacles are reported, all as certain.
    pub fn new(count: usize, prior: f64, oracle: bool) -> Self {
        Self {
            revealed: vec![false; count],
            prior,
            oracle,
        }
    }

    fn window(obstacles: &[Obstacle], from: f64, to: f64) -> std::ops::Range<usize> {
        let lo = obstacles.partition_point(|o| o.center.0 < from);
        let hi = obstacles.partition_point(|o| o.center.0 <= to);
        lo..hi
    }

    pub fn update(&mut self, obstacles: &[Obstacle], x: f64, y: f64) {
        for i in Self::window(obstacles, x - SENSOR_RANGE, x + SENSOR_RANGE) {
            let o = &obstacles[i];
            if (o.center.0 - x).hypot(o.center.1 - y) < o.reveal_distance {
                self.revealed[i] = true;
            }
        }
    }

    /// Observations of the obstacles near `x`, nearest first.
    pub fn observe(&self, obstacles: &[Obstacle], x: f64) -> Vec<ObstacleHyp> {
        let mut out = Vec::new();
        for i in Self::window(obstacles, x - 10.0, x + SENSOR_RANGE) {
            let o = &obstacles[i];
            let known = self.revealed[i] || self.oracle;
            let hyp = match (known, o.exists) {
                (false, _) => ObstacleHyp::new(o.id, o.center, o.radius, self.prior),
                (true, true) => ObstacleHyp::present(o.id, o.center, o.radius),
                (true, false) => continue,
            };
            out.push(hyp.expect("generated obstacles are valid"));
        }
        out
    }
}

/// Whether `h` is a real, confirmed obstacle.
pub fn is_confirmed(h: &ObstacleHyp) -> bool {
    h.resolved == Existence::Present
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peds() -> Vec<Pedestrian> {
        vec![
            Pedestrian {
                id: 0,
                position: 50.0,
                crosses: true,
                reveal_distance: 10.0,
            },
            Pedestrian {
                id: 1,
                position: 80.0,
                crosses: false,
                reveal_distance: 20.0,
            },
        ]
    }

    #[test]
    fn prior_until_reveal_then_truth() {
        let peds = peds();
        let mut tr = PedestrianTracker::new(2, 0.25, 5.0, false);
        tr.update(&peds, 0.0, 0.0);
        let obs = tr.observe(&peds, 0.0, 0.0);
        assert_eq!(obs.len(), 2);
        assert!(obs.iter().all(|o| o.intent == Intent::Uncertain && o.crossing_prob == 0.25));

        tr.update(&peds, 41.0, 3.0);
        let obs = tr.observe(&peds, 41.0, 3.0);
        assert_eq!(obs[0].intent, Intent::Crossing);
        assert!(tr.on_lane(&peds, 0, 3.0));
        assert_eq!(obs[1].intent, Intent::Uncertain);

        tr.update(&peds, 45.0, 8.5);
        assert!(!tr.on_lane(&peds, 0, 8.5));
        let obs = tr.observe(&peds, 45.0, 8.5);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].id, 1);

        tr.update(&peds, 61.0, 10.0);
        let obs = tr.observe(&peds, 61.0, 10.0);
        assert_eq!(obs[0].intent, Intent::NotCrossing);
    }

    #[test]
    fn oracle_knows_intentions() {
        let peds = peds();
        let tr = PedestrianTracker::new(2, 0.25, 5.0, true);
        let obs = tr.observe(&peds, 0.0, 0.0);
        assert_eq!(obs[0].intent, Intent::Crossing);
        assert_eq!(obs[1].intent, Intent::NotCrossing);
    }

    fn obstacles() -> Vec<Obstacle> {
        vec![
            Obstacle {
                id: 0,
                center: (20.0, 0.5),
                radius: 1.0,
                exists: true,
                reveal_distance: 8.0,
            },
            Obstacle {
                id: 1,
                center: (37.0, -0.5),
                radius: 1.0,
                exists: false,
                reveal_distance: 12.0,
            },
        ]
    }

    #[test]
    fn obstacles_resolve_or_vanish() {
        let obs = obstacles();
        let mut tr = ObstacleTracker::new(2, 0.1, false);
        tr.update(&obs, 0.0, 0.0);
        let seen = tr.observe(&obs, 0.0);
        assert!(seen.iter().all(|h| h.resolved == Existence::Uncertain && h.existence_prob == 0.1));

        tr.update(&obs, 13.0, 0.0);
        let seen = tr.observe(&obs, 13.0);
        assert!(is_confirmed(&seen[0]));
        assert_eq!(seen[1].resolved, Existence::Uncertain);

        tr.update(&obs, 26.0, 0.0);
        let seen = tr.observe(&obs, 26.0);
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].id, 0);
    }

    #[test]
    fn oracle_sees_only_real_obstacles() {
        let obs = obstacles();
        let tr = ObstacleTracker::new(2, 0.1, true);
        let seen = tr.observe(&obs, 0.0);
        assert_eq!(seen.len(), 1);
        assert!(is_confirmed(&seen[0]));
    }
}
