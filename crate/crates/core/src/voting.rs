//! Reputation-weighted voting and leader selection.
//!
//! Every voter scores every other candidate as a weighted sum of the
//! candidate's five factors, one weight per factor. Candidates without any
//! history score the plain sum of the voter's weights.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AgentId;
use crate::reputation::ReputationFactors;

pub const WEIGHT_MIN: f64 = 0.01;
pub const WEIGHT_MAX: f64 = 1.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VotingError {
    #[error("duplicate agent id {0} in {1} list")]
    DuplicateAgent(AgentId, &'static str),
    #[error("no eligible leader")]
    NoEligibleLeader,
}

/// Voting constants, one per factor in canonical order
/// (accuracy, hold, delay, power, illegit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl WeightVector {
    pub fn uniform(value: f64) -> Self {
        Self::from_array([value; 5])
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        let [a, b, c, d, e] = w;
        Self { a, b, c, d, e }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.a, self.b, self.c, self.d, self.e]
    }

    pub fn sum(self) -> f64 {
        self.a + self.b + self.c + self.d + self.e
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::from_array(self.to_array().map(|w| w * k))
    }

    pub fn within(self, lo: f64, hi: f64) -> bool {
        self.to_array().iter().all(|w| (lo..=hi).contains(w))
    }
}

/// A candidate as seen by the voters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: AgentId,
    pub factors: ReputationFactors,
    pub is_new: bool,
}

/// Aggregate scores of all eligible candidates of one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoteTally {
    scores: BTreeMap<AgentId, f64>,
}

impl VoteTally {
    pub fn from_scores(scores: impl IntoIterator<Item = (AgentId, f64)>) -> Self {
        Self {
            scores: scores.into_iter().collect(),
        }
    }

    pub fn get(&self, id: AgentId) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.scores.iter().map(|(id, s)| (*id, *s))
    }

    /// Highest score, ties to the smallest id.
    pub fn argmax(&self) -> Option<AgentId> {
        let mut best: Option<(AgentId, f64)> = None;
        for (id, score) in self.iter() {
            match best {
                Some((_, s)) if score <= s => {}
                _ => best = Some((id, score)),
            }
        }
        best.map(|(id, _)| id)
    }
}

pub fn compute_vote(candidate: &ReputationFactors, is_new_agent: bool, w: &WeightVector) -> f64 {
    if is_new_agent {
        return w.sum();
    }
    w.a * candidate.accuracy
        + w.b * candidate.hold_score
        + w.c * candidate.delay_score
        + w.d * candidate.power_score
        + w.e * candidate.illegit_score
}

/// Sums every voter's score for every candidate, skipping self-votes.
/// Contributions are added in ascending voter id so totals are reproducible.
pub fn collect_votes(
    voters: &[(AgentId, WeightVector)],
    candidates: &[Candidate],
) -> Result<VoteTally, VotingError> {
    let mut seen = BTreeSet::new();
    for (id, _) in voters {
        if !seen.insert(*id) {
            return Err(VotingError::DuplicateAgent(*id, "voter"));
        }
    }
    let mut ordered: Vec<&(AgentId, WeightVector)> = voters.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);

    let mut scores = BTreeMap::new();
    for cand in candidates {
        let total = ordered
            .iter()
            .filter(|(voter, _)| *voter != cand.id)
            .map(|(_, w)| compute_vote(&cand.factors, cand.is_new, w))
            .sum::<f64>();
        if scores.insert(cand.id, total).is_some() {
            return Err(VotingError::DuplicateAgent(cand.id, "candidate"));
        }
    }
    Ok(VoteTally { scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaderChoice {
    pub leader: AgentId,
    /// True when the leader came from an exploration draw rather than argmax.
    pub explored: bool,
}

/// ε-greedy over the tally: with probability `epsilon` a uniformly random
/// candidate, otherwise the argmax. Always consumes the same draws from `rng`
/// regardless of branch.
pub fn select_leader<R: Rng + ?Sized>(
    tally: &VoteTally,
    epsilon: f64,
    rng: &mut R,
) -> Result<LeaderChoice, VotingError> {
    if tally.is_empty() {
        return Err(VotingError::NoEligibleLeader);
    }
    let explore_draw: f64 = rng.random();
    let pick = rng.random_range(0..tally.len());
    if explore_draw < epsilon {
        let leader = tally.iter().nth(pick).map(|(id, _)| id).unwrap();
        Ok(LeaderChoice {
            leader,
            explored: true,
        })
    } else {
        Ok(LeaderChoice {
            leader: tally.argmax().unwrap(),
            explored: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RngSeed, StreamLabel};

    fn cand(id: u32, f: ReputationFactors, is_new: bool) -> Candidate {
        Candidate {
            id: AgentId(id),
            factors: f,
            is_new,
        }
    }

    #[test]
    fn new_agent_scores_weight_sum() {
        let w = WeightVector::uniform(0.2);
        let v = compute_vote(&ReputationFactors::uniform(0.0), true, &w);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_factors_zero_vote() {
        let w = WeightVector::from_array([0.3, 0.9, 0.01, 0.5, 1.0]);
        assert_eq!(
            compute_vote(&ReputationFactors::uniform(0.0), false, &w),
            0.0
        );
    }

    #[test]
    fn dot_product_example() {
        let f = ReputationFactors::from_scores([1.0, 0.5, 1.0, 1.0, 0.0]);
        let v = compute_vote(&f, false, &WeightVector::uniform(0.2));
        assert!((v - 0.7).abs() < 1e-12);
    }

    #[test]
    fn single_voter_single_candidate() {
        let tally = collect_votes(
            &[(AgentId(0), WeightVector::uniform(0.2))],
            &[cand(1, ReputationFactors::uniform(1.0), false)],
        )
        .unwrap();
        assert!((tally.get(AgentId(1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_votes_excluded() {
        let w = WeightVector::uniform(0.2);
        let tally = collect_votes(
            &[(AgentId(0), w), (AgentId(1), w)],
            &[
                cand(0, ReputationFactors::uniform(1.0), false),
                cand(1, ReputationFactors::uniform(1.0), false),
            ],
        )
        .unwrap();
        // one contributing term each
        assert!((tally.get(AgentId(0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((tally.get(AgentId(1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_candidates_tie() {
        let w = WeightVector::from_array([0.1, 0.4, 0.2, 0.7, 0.3]);
        let voters = [(AgentId(0), w), (AgentId(1), w), (AgentId(2), w)];
        let f = ReputationFactors::from_scores([0.3, 0.6, 0.9, 0.1, 0.5]);
        let tally = collect_votes(&voters, &[cand(5, f, false), cand(6, f, false)]).unwrap();
        assert_eq!(tally.get(AgentId(5)), tally.get(AgentId(6)));
    }

    #[test]
    fn duplicates_rejected() {
        let w = WeightVector::uniform(0.2);
        let f = ReputationFactors::neutral();
        assert_eq!(
            collect_votes(&[(AgentId(0), w), (AgentId(0), w)], &[]),
            Err(VotingError::DuplicateAgent(AgentId(0), "voter"))
        );
        assert_eq!(
            collect_votes(&[], &[cand(3, f, false), cand(3, f, false)]),
            Err(VotingError::DuplicateAgent(AgentId(3), "candidate"))
        );
    }

    #[test]
    fn greedy_tie_breaks_to_smallest_id() {
        let tally =
            VoteTally::from_scores([(AgentId(0), 3.2), (AgentId(1), 3.2), (AgentId(2), 1.0)]);
        let mut rng = RngSeed(1).stream(StreamLabel::Leader, 1, 0);
        let choice = select_leader(&tally, 0.0, &mut rng).unwrap();
        assert_eq!(choice.leader, AgentId(0));
        assert!(!choice.explored);
    }

    #[test]
    fn singleton_tally() {
        let tally = VoteTally::from_scores([(AgentId(7), 0.1)]);
        let mut rng = RngSeed(1).stream(StreamLabel::Leader, 1, 0);
        assert_eq!(
            select_leader(&tally, 0.0, &mut rng).unwrap().leader,
            AgentId(7)
        );
    }

    #[test]
    fn empty_tally_errors() {
        let mut rng = RngSeed(1).stream(StreamLabel::Leader, 1, 0);
        assert_eq!(
            select_leader(&VoteTally::default(), 0.05, &mut rng),
            Err(VotingError::NoEligibleLeader)
        );
    }

    #[test]
    fn full_exploration_is_uniform() {
        let tally = VoteTally::from_scores((0..4).map(|i| (AgentId(i), f64::from(i))));
        let mut counts = [0u32; 4];
        for round in 0..10_000 {
            let mut rng = RngSeed(42).stream(StreamLabel::Leader, round, 0);
            let choice = select_leader(&tally, 1.0, &mut rng).unwrap();
            assert!(choice.explored);
            counts[choice.leader.index()] += 1;
        }
        for c in counts {
            assert!((2350..=2650).contains(&c), "{counts:?}");
        }
    }
}
