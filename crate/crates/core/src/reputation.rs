//! Per-agent reputation tables: five normalized factor scores plus the
//! cumulative integer reputation driven by the penalty/reward table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only deltas the penalty/reward table can produce.
pub const REPUTATION_DELTAS: [i64; 4] = [5, 2, -1, -4];

/// Starting value of every factor for a freshly joined agent.
pub const NEUTRAL_FACTOR: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReputationError {
    #[error("delta {0} is not a penalty/reward table value")]
    InvalidDelta(i64),
}

/// Reputation table of one agent. Every factor is in `[0, 1]` and oriented so
/// that larger is more vote-worthy: holding, delay and excess computing power
/// are stored inverted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationFactors {
    pub accuracy: f64,
    pub hold_score: f64,
    pub delay_score: f64,
    pub power_score: f64,
    pub illegit_score: f64,
    pub cumulative: i64,
    pub rounds_observed: u64,
}

impl Default for ReputationFactors {
    fn default() -> Self {
        Self::neutral()
    }
}

impl ReputationFactors {
    pub fn neutral() -> Self {
        Self::uniform(NEUTRAL_FACTOR)
    }

    /// All five factors set to `value`, no history.
    pub fn uniform(value: f64) -> Self {
        Self::from_scores([value; 5])
    }

    pub fn from_scores(scores: [f64; 5]) -> Self {
        let [accuracy, hold_score, delay_score, power_score, illegit_score] = scores;
        Self {
            accuracy,
            hold_score,
            delay_score,
            power_score,
            illegit_score,
            cumulative: 0,
            rounds_observed: 0,
        }
    }

    /// Factor scores in canonical order (accuracy, hold, delay, power, illegit).
    pub fn scores(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.hold_score,
            self.delay_score,
            self.power_score,
            self.illegit_score,
        ]
    }

    pub fn is_new(&self) -> bool {
        self.rounds_observed == 0
    }
}

/// The two booleans graded for every validator each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    pub reached_right_consensus: bool,
    pub detected_bad_actor: bool,
}

impl ConsensusOutcome {
    pub fn new(reached_right_consensus: bool, detected_bad_actor: bool) -> Self {
        Self {
            reached_right_consensus,
            detected_bad_actor,
        }
    }
}

/// Raw per-round measurements behind the five factors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundObservation {
    pub txs_assigned: u64,
    pub txs_held: u64,
    pub processing_delay: f64,
    pub capacity_used: f64,
    pub validations_total: u64,
    pub validations_correct: u64,
    pub illegit_seen: u64,
    pub illegit_flagged: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    /// EWMA smoothing weight of the newest observation.
    pub beta: f64,
    /// Processing delay at (and above) which `delay_score` bottoms out.
    pub delay_max: f64,
    /// Capacity setpoint; anything above it is penalized.
    pub power_fair: f64,
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self {
            beta: 0.3,
            delay_max: 5.0,
            power_fair: 1.0,
        }
    }
}

/// Penalty/reward table.
pub fn penalty_reward(outcome: ConsensusOutcome) -> i64 {
    match (outcome.reached_right_consensus, outcome.detected_bad_actor) {
        (true, true) => 5,
        (true, false) => 2,
        (false, true) => -1,
        (false, false) => -4,
    }
}

/// Adds a table delta to the cumulative reputation. Factor fields are untouched.
pub fn apply_delta(
    table: ReputationFactors,
    delta: i64,
) -> Result<ReputationFactors, ReputationError> {
    if !REPUTATION_DELTAS.contains(&delta) {
        return Err(ReputationError::InvalidDelta(delta));
    }
    Ok(ReputationFactors {
        cumulative: table.cumulative + delta,
        ..table
    })
}

fn ewma(old: f64, new: f64, beta: f64) -> f64 {
    ((1.0 - beta) * old + beta * new).clamp(0.0, 1.0)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Folds one round of observations into the factor scores and counts the
/// round as observed. A factor whose denominator is zero this round keeps its
/// previous value.
pub fn refresh_factors(
    table: ReputationFactors,
    obs: &RoundObservation,
    params: &NormalizationParams,
) -> ReputationFactors {
    let beta = params.beta;
    let mut next = table;

    if let Some(acc) = ratio(obs.validations_correct, obs.validations_total) {
        next.accuracy = ewma(table.accuracy, acc, beta);
    }
    if let Some(held) = ratio(obs.txs_held, obs.txs_assigned) {
        next.hold_score = ewma(table.hold_score, 1.0 - held, beta);
    }
    let delay = 1.0 - (obs.processing_delay / params.delay_max).min(1.0);
    next.delay_score = ewma(table.delay_score, delay, beta);

    let excess = ((obs.capacity_used - params.power_fair) / params.power_fair).clamp(0.0, 1.0);
    next.power_score = ewma(table.power_score, 1.0 - excess, beta);

    if let Some(flagged) = ratio(obs.illegit_flagged, obs.illegit_seen) {
        next.illegit_score = ewma(table.illegit_score, flagged, beta);
    }
    next.rounds_observed = table.rounds_observed + 1;
    next
}
