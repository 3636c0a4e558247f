//! Agent behavior profiles: the honest baseline and four misbehaving kinds
//! (transaction holding, willful delay, outsized computing power, sloppy
//! processing), plus the ground-truth check of whether a round's conduct
//! crossed a misbehavior threshold.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Transaction, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Honest,
    Holder,
    Delayer,
    SuperPower,
    Sloppy,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Honest,
        AgentKind::Holder,
        AgentKind::Delayer,
        AgentKind::SuperPower,
        AgentKind::Sloppy,
    ];

    pub fn is_malicious(self) -> bool {
        self != AgentKind::Honest
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Honest => "honest",
            AgentKind::Holder => "holder",
            AgentKind::Delayer => "delayer",
            AgentKind::SuperPower => "super_power",
            AgentKind::Sloppy => "sloppy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub kind: AgentKind,
    pub hold_prob: f64,
    pub extra_delay: f64,
    pub capacity_multiplier: f64,
    pub error_prob: f64,
    pub detect_skill: f64,
    pub base_delay: f64,
    pub base_capacity: f64,
}

pub const DEFAULT_BASE_DELAY: f64 = 1.0;
pub const DEFAULT_BASE_CAPACITY: f64 = 1.0;

impl AgentProfile {
    /// Default parameterization of `kind`.
    pub fn defaults(kind: AgentKind) -> Self {
        let base = Self {
            kind,
            hold_prob: 0.3,
            extra_delay: 3.0 * DEFAULT_BASE_DELAY,
            capacity_multiplier: 10.0,
            error_prob: 0.25,
            detect_skill: if kind.is_malicious() { 0.6 } else { 0.8 },
            base_delay: DEFAULT_BASE_DELAY,
            base_capacity: DEFAULT_BASE_CAPACITY,
        };
        base.normalized()
    }

    pub fn honest() -> Self {
        Self::defaults(AgentKind::Honest)
    }

    /// Resets parameters the kind does not use to their inert values
    /// (probabilities and delays 0, multiplier 1).
    pub fn normalized(mut self) -> Self {
        if self.kind != AgentKind::Holder {
            self.hold_prob = 0.0;
        }
        if self.kind != AgentKind::Delayer {
            self.extra_delay = 0.0;
        }
        if self.kind != AgentKind::SuperPower {
            self.capacity_multiplier = 1.0;
        }
        if self.kind != AgentKind::Sloppy {
            self.error_prob = 0.0;
        }
        self
    }

    pub fn with_detect_skill(mut self, skill: f64) -> Self {
        self.detect_skill = skill;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Validator,
}

/// What an agent did this round with the transactions it handled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundActions {
    /// Transactions withheld (leader) or left unvalidated (validator).
    pub held_tx_ids: BTreeSet<TxId>,
    pub added_delay: f64,
    /// Base delay plus `added_delay`.
    pub processing_delay: f64,
    pub capacity_used: f64,
    /// Transactions whose legitimacy verdict was mis-processed.
    pub validation_flips: BTreeSet<TxId>,
    /// Illegitimate transactions spotted by the detection draw (before flips).
    pub flagged_illegit: BTreeSet<TxId>,
}

impl RoundActions {
    /// Final per-transaction judgement: detection flag corrected by flips.
    /// Held transactions carry no judgement.
    pub fn judges_illegitimate(&self, tx: TxId) -> Option<bool> {
        if self.held_tx_ids.contains(&tx) {
            return None;
        }
        Some(self.flagged_illegit.contains(&tx) ^ self.validation_flips.contains(&tx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionThresholds {
    /// Largest tolerated added processing delay.
    pub delay_tol: f64,
    /// Largest tolerated capacity.
    pub power_tol: f64,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            delay_tol: 1.0,
            power_tol: 2.0,
        }
    }
}

/// Draws one round of behavior. Draw order per transaction is fixed
/// (hold, detect, flip) so results depend only on the stream.
///
/// Holders withhold transactions in both roles: as leader they keep them out
/// of the block, as validator they sit on them instead of validating.
pub fn act<R: Rng + ?Sized>(
    profile: &AgentProfile,
    _role: Role,
    visible_txs: &[Transaction],
    rng: &mut R,
) -> RoundActions {
    let mut actions = RoundActions {
        added_delay: match profile.kind {
            AgentKind::Delayer => profile.extra_delay,
            _ => 0.0,
        },
        capacity_used: match profile.kind {
            AgentKind::SuperPower => profile.base_capacity * profile.capacity_multiplier,
            _ => profile.base_capacity,
        },
        ..Default::default()
    };
    actions.processing_delay = profile.base_delay + actions.added_delay;

    for tx in visible_txs {
        let hold_draw: f64 = rng.random();
        let detect_draw: f64 = rng.random();
        let flip_draw: f64 = rng.random();

        if profile.kind == AgentKind::Holder && hold_draw < profile.hold_prob {
            actions.held_tx_ids.insert(tx.tx_id);
            continue;
        }
        if !tx.is_legitimate && detect_draw < profile.detect_skill {
            actions.flagged_illegit.insert(tx.tx_id);
        }
        if profile.kind == AgentKind::Sloppy && flip_draw < profile.error_prob {
            actions.validation_flips.insert(tx.tx_id);
        }
    }
    actions
}

/// Whether the round's conduct crossed any misbehavior threshold. Delay and
/// capacity checks are strict.
pub fn ground_truth_bad(actions: &RoundActions, thresholds: &DetectionThresholds) -> bool {
    !actions.held_tx_ids.is_empty()
        || actions.added_delay > thresholds.delay_tol
        || actions.capacity_used > thresholds.power_tol
        || !actions.validation_flips.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RngSeed, StreamLabel};

    fn txs(n: u64, illegit_every: u64) -> Vec<Transaction> {
        (1..=n)
            .map(|i| Transaction {
                tx_id: i,
                created_round: 1,
                is_legitimate: illegit_every == 0 || i % illegit_every != 0,
                fee: 1,
            })
            .collect()
    }

    fn rng(agent: u32) -> rand_chacha::ChaCha8Rng {
        RngSeed(9).stream(StreamLabel::Act, 1, agent)
    }

    #[test]
    fn honest_leader_baseline() {
        let a = act(
            &AgentProfile::honest(),
            Role::Leader,
            &txs(8, 3),
            &mut rng(0),
        );
        assert!(a.held_tx_ids.is_empty());
        assert_eq!(a.added_delay, 0.0);
        assert_eq!(a.processing_delay, DEFAULT_BASE_DELAY);
        assert_eq!(a.capacity_used, DEFAULT_BASE_CAPACITY);
        assert!(a.validation_flips.is_empty());
        assert!(!ground_truth_bad(&a, &DetectionThresholds::default()));
    }

    #[test]
    fn certain_holder_holds_everything() {
        let p = AgentProfile {
            hold_prob: 1.0,
            ..AgentProfile::defaults(AgentKind::Holder)
        };
        let a = act(&p, Role::Leader, &txs(5, 0), &mut rng(1));
        assert_eq!(a.held_tx_ids, (1..=5).collect());
    }

    #[test]
    fn sloppy_flip_rate() {
        let p = AgentProfile {
            error_prob: 0.5,
            ..AgentProfile::defaults(AgentKind::Sloppy)
        };
        let a = act(&p, Role::Validator, &txs(1000, 0), &mut rng(2));
        let flips = a.validation_flips.len();
        assert!((450..=550).contains(&flips), "{flips}");
    }

    #[test]
    fn skilled_honest_flags_exactly_illegit() {
        let p = AgentProfile::honest().with_detect_skill(1.0);
        let view = txs(30, 4);
        let a = act(&p, Role::Validator, &view, &mut rng(3));
        let truth: BTreeSet<TxId> = view
            .iter()
            .filter(|t| !t.is_legitimate)
            .map(|t| t.tx_id)
            .collect();
        assert_eq!(a.flagged_illegit, truth);
    }

    #[test]
    fn delayer_and_super_power_parameters() {
        let d = act(
            &AgentProfile::defaults(AgentKind::Delayer),
            Role::Validator,
            &txs(3, 0),
            &mut rng(4),
        );
        assert_eq!(d.added_delay, 3.0);
        assert_eq!(d.processing_delay, 4.0);
        let s = act(
            &AgentProfile::defaults(AgentKind::SuperPower),
            Role::Leader,
            &txs(3, 0),
            &mut rng(5),
        );
        assert_eq!(s.capacity_used, 10.0);
    }

    #[test]
    fn act_is_reproducible() {
        let p = AgentProfile::defaults(AgentKind::Sloppy);
        let view = txs(40, 5);
        assert_eq!(
            act(&p, Role::Validator, &view, &mut rng(6)),
            act(&p, Role::Validator, &view, &mut rng(6))
        );
    }

    #[test]
    fn ground_truth_thresholds() {
        let th = DetectionThresholds::default();
        let mut a = RoundActions::default();
        assert!(!ground_truth_bad(&a, &th));
        a.held_tx_ids.insert(2);
        assert!(ground_truth_bad(&a, &th));

        let at_tol = RoundActions {
            added_delay: th.delay_tol,
            ..Default::default()
        };
        assert!(!ground_truth_bad(&at_tol, &th));
        let above = RoundActions {
            added_delay: th.delay_tol + 1e-9,
            ..Default::default()
        };
        assert!(ground_truth_bad(&above, &th));
    }

    #[test]
    fn normalization_zeroes_foreign_parameters() {
        let p = AgentProfile {
            kind: AgentKind::Honest,
            hold_prob: 0.9,
            extra_delay: 4.0,
            capacity_multiplier: 7.0,
            error_prob: 0.4,
            ..AgentProfile::honest()
        }
        .normalized();
        assert_eq!(p.hold_prob, 0.0);
        assert_eq!(p.extra_delay, 0.0);
        assert_eq!(p.capacity_multiplier, 1.0);
        assert_eq!(p.error_prob, 0.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(AgentKind::parse(k.as_str()), Some(k));
        }
    }
}
