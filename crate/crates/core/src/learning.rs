//! Per-agent adaptation of the voting constants.
//!
//! After each graded round an agent nudges its weights toward the factors
//! on which the round's leader stood out (reward) or away from them
//! (penalty). The step is centered on the leader's factor mean, so it only
//! redistributes weight between factors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::Round;
use crate::reputation::ReputationFactors;
use crate::voting::{WeightVector, WEIGHT_MAX, WEIGHT_MIN};

/// Delta that maps to a normalized reward of 1.
const REWARD_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningParams {
    pub eta: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub w_init: f64,
    pub history: usize,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            eta: 0.1,
            w_min: WEIGHT_MIN,
            w_max: WEIGHT_MAX,
            w_init: 0.2,
            history: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    weights: WeightVector,
    eta: f64,
    w_min: f64,
    w_max: f64,
    history: VecDeque<(Round, i64)>,
    history_len: usize,
}

impl LearnerState {
    pub fn new(params: &LearningParams) -> Self {
        Self::with_weights(params, WeightVector::uniform(params.w_init))
    }

    /// Starts from explicit weights, clamped into bounds.
    pub fn with_weights(params: &LearningParams, weights: WeightVector) -> Self {
        let weights = WeightVector::from_array(
            weights
                .to_array()
                .map(|w| w.clamp(params.w_min, params.w_max)),
        );
        Self {
            weights,
            eta: params.eta,
            w_min: params.w_min,
            w_max: params.w_max,
            history: VecDeque::with_capacity(params.history),
            history_len: params.history,
        }
    }

    pub fn weights(&self) -> WeightVector {
        self.weights
    }

    /// Most recent `(round, delta)` pairs, oldest first.
    pub fn history(&self) -> impl Iterator<Item = (Round, i64)> + '_ {
        self.history.iter().copied()
    }
}

/// One reward-modulated step:
/// `w_i' = clamp(w_i + eta * (delta / 5) * (f_i - mean(f)), w_min, w_max)`.
pub fn update_weights(
    state: &LearnerState,
    round: Round,
    my_delta: i64,
    leader_factors: &ReputationFactors,
) -> LearnerState {
    let reward = my_delta as f64 / REWARD_SCALE;
    let f = leader_factors.scores();
    let mean = f.iter().sum::<f64>() / f.len() as f64;

    let mut w = state.weights.to_array();
    for (wi, fi) in w.iter_mut().zip(f) {
        *wi = (*wi + state.eta * reward * (fi - mean)).clamp(state.w_min, state.w_max);
    }

    let mut next = state.clone();
    next.weights = WeightVector::from_array(w);
    if next.history_len > 0 {
        if next.history.len() == next.history_len {
            next.history.pop_front();
        }
        next.history.push_back((round, my_delta));
    }
    next
}

pub fn weights_snapshot(state: &LearnerState) -> [f64; 5] {
    state.weights.to_array()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_leader() -> ReputationFactors {
        ReputationFactors::from_scores([0.9, 0.5, 0.5, 0.5, 0.5])
    }

    fn state_at(w: f64) -> LearnerState {
        LearnerState::with_weights(&LearningParams::default(), WeightVector::uniform(w))
    }

    #[test]
    fn flat_leader_leaves_weights() {
        let s = state_at(0.3);
        let next = update_weights(&s, 1, 5, &ReputationFactors::uniform(0.7));
        assert_eq!(weights_snapshot(&next), weights_snapshot(&s));
    }

    #[test]
    fn reward_step() {
        let next = update_weights(&state_at(0.5), 1, 5, &example_leader());
        assert!((weights_snapshot(&next)[0] - 0.532).abs() < 1e-12);
    }

    #[test]
    fn penalty_step() {
        let next = update_weights(&state_at(0.5), 1, -4, &example_leader());
        assert!((weights_snapshot(&next)[0] - 0.4744).abs() < 1e-12);
    }

    #[test]
    fn fresh_snapshot() {
        let s = LearnerState::new(&LearningParams::default());
        assert_eq!(weights_snapshot(&s), [0.2; 5]);
        assert_eq!(weights_snapshot(&s), weights_snapshot(&s));
    }

    #[test]
    fn history_is_bounded() {
        let params = LearningParams {
            history: 3,
            ..Default::default()
        };
        let mut s = LearnerState::new(&params);
        for r in 1..=5 {
            s = update_weights(&s, r, 2, &example_leader());
        }
        let h: Vec<_> = s.history().collect();
        assert_eq!(h, vec![(3, 2), (4, 2), (5, 2)]);
    }
}
