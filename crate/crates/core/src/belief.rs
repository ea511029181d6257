//! Belief states over a finite set of discrete hypotheses.

use crate::error::{Error, Result};

/// Tolerance on the unit sum of a belief.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Probability distribution over the discrete states, in state order.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl BeliefState {
    /// Checks the distribution invariants and wraps the vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty distribution".into()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Single certain hypothesis.
    pub fn certain() -> Self {
        Self { probs: vec![1.0] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Same as [`BeliefState::new`].
pub fn validate_belief(probs: Vec<f64>) -> Result<BeliefState> {
    BeliefState::new(probs)
}

fn check_probabilities(probs: &[f64]) -> Result<()> {
    for (index, &value) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability { index, value });
        }
    }
    Ok(())
}

/// Closes a distribution whose leading entries are already known: the last
/// entry is `1 - sum(leading)`, so that summing all entries left to right
/// gives exactly one.
fn close_with_complement(mut leading: Vec<f64>) -> Vec<f64> {
    let partial: f64 = leading.iter().sum();
    if partial > 1.0 {
        // Rounding pushed the leading mass past one; trim it from the largest entry.
        let excess = partial - 1.0;
        if let Some(max) = leading
            .iter_mut()
            .max_by(|a, b| a.partial_cmp(b).unwrap())
        {
            *max -= excess;
        }
    }
    let partial: f64 = leading.iter().sum();
    leading.push((1.0 - partial).max(0.0));
    leading
}

/// Distribution of the closest crossing pedestrian.
///
/// `crossing_probs` must be ordered by increasing distance from the vehicle.
/// Entry `s < n` is the probability that pedestrian `s` crosses while every
/// closer one does not, `p_s * prod_{i<s} (1 - p_i)`; entry `n` is the
/// free-road case and is obtained by complement.
pub fn crossing_belief(crossing_probs: &[f64]) -> Result<BeliefState> {
    check_probabilities(crossing_probs)?;
    let mut survive = 1.0;
    let mut leading = Vec::with_capacity(crossing_probs.len() + 1);
    for &p in crossing_probs {
        leading.push(p * survive);
        survive *= 1.0 - p;
    }
    Ok(BeliefState {
        probs: close_with_complement(leading),
    })
}

/// Joint distribution of independent existence events.
///
/// Combination index `c` has bit `i` set when hypothesis `i` is present; its
/// weight is the product of `p_i` or `1 - p_i`. The last combination (all
/// present) is obtained by complement so the weights sum to exactly one.
pub fn existence_belief(existence_probs: &[f64]) -> Result<BeliefState> {
    check_probabilities(existence_probs)?;
    let k = existence_probs.len();
    let count = 1usize << k;
    let leading: Vec<f64> = (0..count - 1)
        .map(|c| {
            existence_probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if c & (1 << i) != 0 { p } else { 1.0 - p })
                .product()
        })
        .collect();
    Ok(BeliefState {
        probs: close_with_complement(leading),
    })
}
