//! Simulation configuration and its TOML scenario-file form.
//!
//! Parsing is strict: unknown keys anywhere in the document are errors.
//! Per-group agent parameters are optional and fall back to the kind's
//! defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AgentKind, AgentProfile, DetectionThresholds};
use crate::learning::LearningParams;
use crate::model::{RngSeed, Round};
use crate::reputation::NormalizationParams;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// A group of identically parameterized agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentGroup {
    pub kind: AgentKind,
    #[serde(default = "one")]
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_skill: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_capacity: Option<f64>,
}

fn one() -> u32 {
    1
}

impl AgentGroup {
    pub fn new(kind: AgentKind, count: u32) -> Self {
        Self {
            kind,
            count,
            detect_skill: None,
            hold_prob: None,
            extra_delay: None,
            capacity_multiplier: None,
            error_prob: None,
            base_delay: None,
            base_capacity: None,
        }
    }

    /// Resolved profile. `extra_delay` defaults to three times the base delay.
    pub fn profile(&self) -> AgentProfile {
        let d = AgentProfile::defaults(self.kind);
        let base_delay = self.base_delay.unwrap_or(d.base_delay);
        AgentProfile {
            kind: self.kind,
            hold_prob: self.hold_prob.unwrap_or(0.3),
            extra_delay: self.extra_delay.unwrap_or(3.0 * base_delay),
            capacity_multiplier: self.capacity_multiplier.unwrap_or(10.0),
            error_prob: self.error_prob.unwrap_or(0.25),
            detect_skill: self.detect_skill.unwrap_or(d.detect_skill),
            base_delay,
            base_capacity: self.base_capacity.unwrap_or(d.base_capacity),
        }
        .normalized()
    }

    /// The same group with every parameter spelled out.
    pub fn resolved(&self) -> Self {
        let p = self.profile();
        let relevant = |k: AgentKind, v: f64| (self.kind == k).then_some(v);
        Self {
            kind: self.kind,
            count: self.count,
            detect_skill: Some(p.detect_skill),
            hold_prob: relevant(AgentKind::Holder, p.hold_prob),
            extra_delay: relevant(AgentKind::Delayer, p.extra_delay),
            capacity_multiplier: relevant(AgentKind::SuperPower, p.capacity_multiplier),
            error_prob: relevant(AgentKind::Sloppy, p.error_prob),
            base_delay: Some(p.base_delay),
            base_capacity: Some(p.base_capacity),
        }
    }

    fn validate(&self, at: &str) -> Result<(), ConfigError> {
        let p = self.profile();
        let unit = |name: &str, v: Option<f64>| match v {
            Some(x) if !(0.0..=1.0).contains(&x) => {
                Err(invalid(format!("{at}.{name}"), "must be in [0, 1]"))
            }
            _ => Ok(()),
        };
        unit("detect_skill", self.detect_skill)?;
        unit("hold_prob", self.hold_prob)?;
        unit("error_prob", self.error_prob)?;
        if p.extra_delay < 0.0 || !p.extra_delay.is_finite() {
            return Err(invalid(format!("{at}.extra_delay"), "must be ≥ 0"));
        }
        if p.capacity_multiplier < 1.0 || !p.capacity_multiplier.is_finite() {
            return Err(invalid(format!("{at}.capacity_multiplier"), "must be ≥ 1"));
        }
        if p.base_delay < 0.0 || !p.base_delay.is_finite() {
            return Err(invalid(format!("{at}.base_delay"), "must be ≥ 0"));
        }
        if p.base_capacity <= 0.0 || !p.base_capacity.is_finite() {
            return Err(invalid(format!("{at}.base_capacity"), "must be > 0"));
        }
        Ok(())
    }
}

/// An agent arriving after the simulation started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "JoinRow", into = "JoinRow")]
pub struct JoinEvent {
    /// Joins at the end of this round (takes part from the next one).
    pub round: Round,
    pub group: AgentGroup,
}

// Flat on-disk form of a join entry. `#[serde(flatten)]` would accept
// unknown keys silently, so the fields are repeated here.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinRow {
    round: Round,
    kind: AgentKind,
    #[serde(default = "one")]
    count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detect_skill: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hold_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_delay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_capacity: Option<f64>,
}

impl From<JoinRow> for JoinEvent {
    fn from(r: JoinRow) -> Self {
        Self {
            round: r.round,
            group: AgentGroup {
                kind: r.kind,
                count: r.count,
                detect_skill: r.detect_skill,
                hold_prob: r.hold_prob,
                extra_delay: r.extra_delay,
                capacity_multiplier: r.capacity_multiplier,
                error_prob: r.error_prob,
                base_delay: r.base_delay,
                base_capacity: r.base_capacity,
            },
        }
    }
}

impl From<JoinEvent> for JoinRow {
    fn from(j: JoinEvent) -> Self {
        let g = j.group;
        Self {
            round: j.round,
            kind: g.kind,
            count: g.count,
            detect_skill: g.detect_skill,
            hold_prob: g.hold_prob,
            extra_delay: g.extra_delay,
            capacity_multiplier: g.capacity_multiplier,
            error_prob: g.error_prob,
            base_delay: g.base_delay,
            base_capacity: g.base_capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    /// New transactions per round.
    pub tx_rate: u32,
    pub max_txs: usize,
    pub p_illegit: f64,
    /// Accepting fraction needed to commit, in (0.5, 1].
    pub quorum: f64,
    /// Rounds a transaction may stay pending; 0 disables expiry.
    pub tx_ttl: u64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            tx_rate: 8,
            max_txs: 16,
            p_illegit: 0.1,
            quorum: 2.0 / 3.0,
            tx_ttl: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReputationSection {
    pub beta: f64,
    pub delay_max: f64,
    /// Capacity setpoint. Defaults to the median honest base capacity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_fair: Option<f64>,
}

impl Default for ReputationSection {
    fn default() -> Self {
        let n = NormalizationParams::default();
        Self {
            beta: n.beta,
            delay_max: n.delay_max,
            power_fair: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VotingParams {
    pub epsilon: f64,
}

impl Default for VotingParams {
    fn default() -> Self {
        Self { epsilon: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EliminationParams {
    /// Agents strictly below this cumulative reputation are removed.
    pub threshold: i64,
}

impl Default for EliminationParams {
    fn default() -> Self {
        Self { threshold: -20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub rounds: u64,
    pub seed: RngSeed,
    /// Optional cross-check of the summed agent counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<u32>,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub reputation: ReputationSection,
    #[serde(default)]
    pub voting: VotingParams,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub detection: DetectionThresholds,
    #[serde(default)]
    pub elimination: EliminationParams,
    pub agents: Vec<AgentGroup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub join: Vec<JoinEvent>,
}

impl SimulationConfig {
    /// Default parameters with the given population.
    pub fn new(rounds: u64, seed: u64, agents: Vec<AgentGroup>) -> Self {
        Self {
            rounds,
            seed: RngSeed(seed),
            n_agents: None,
            network: NetworkParams::default(),
            reputation: ReputationSection::default(),
            voting: VotingParams::default(),
            learning: LearningParams::default(),
            detection: DetectionThresholds::default(),
            elimination: EliminationParams::default(),
            agents,
            join: Vec::new(),
        }
    }

    /// 14 honest, 2 holders, 2 delayers, 1 super-power, 1 sloppy agent over
    /// 500 rounds with 10% illegitimate transactions.
    pub fn canonical(seed: u64) -> Self {
        Self::new(
            500,
            seed,
            vec![
                AgentGroup::new(AgentKind::Honest, 14),
                AgentGroup::new(AgentKind::Holder, 2),
                AgentGroup::new(AgentKind::Delayer, 2),
                AgentGroup::new(AgentKind::SuperPower, 1),
                AgentGroup::new(AgentKind::Sloppy, 1),
            ],
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config = Self::parse_toml(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Strict parse (unknown keys rejected) without range validation, for
    /// callers that apply overrides before validating.
    pub fn parse_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with every per-group parameter and derived default written out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.agents = self.agents.iter().map(AgentGroup::resolved).collect();
        for j in &mut out.join {
            j.group = j.group.resolved();
        }
        out.reputation.power_fair = Some(self.normalization().power_fair);
        out
    }

    pub fn population(&self) -> Vec<AgentProfile> {
        self.agents
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.profile(), g.count as usize))
            .collect()
    }

    pub fn initial_agents(&self) -> u32 {
        self.agents.iter().map(|g| g.count).sum()
    }

    pub fn normalization(&self) -> NormalizationParams {
        let power_fair = self
            .reputation
            .power_fair
            .unwrap_or_else(|| median_honest_capacity(&self.population()));
        NormalizationParams {
            beta: self.reputation.beta,
            delay_max: self.reputation.delay_max,
            power_fair,
        }
    }

    /// Field-level checks; runs before any round.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds < 1 {
            return Err(invalid("rounds", "rounds ≥ 1 required"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent group required"));
        }
        for (i, g) in self.agents.iter().enumerate() {
            g.validate(&format!("agents[{i}]"))?;
        }
        for (i, j) in self.join.iter().enumerate() {
            j.group.validate(&format!("join[{i}]"))?;
            if j.round < 1 || j.round > self.rounds {
                return Err(invalid(
                    format!("join[{i}].round"),
                    "must be within 1..=rounds",
                ));
            }
        }
        let total = self.initial_agents();
        if total == 0 {
            return Err(invalid("agents", "population must be ≥ 1"));
        }
        if let Some(n) = self.n_agents {
            if n != total {
                return Err(invalid(
                    "n_agents",
                    format!("is {n} but agent groups sum to {total}"),
                ));
            }
        }

        let net = &self.network;
        if !(0.0..=1.0).contains(&net.p_illegit) {
            return Err(invalid("network.p_illegit", "must be in [0, 1]"));
        }
        if !(net.quorum > 0.5 && net.quorum <= 1.0) {
            return Err(invalid("network.quorum", "must be in (0.5, 1]"));
        }
        if net.max_txs == 0 {
            return Err(invalid("network.max_txs", "must be ≥ 1"));
        }

        let rep = &self.reputation;
        if !(0.0..=1.0).contains(&rep.beta) {
            return Err(invalid("reputation.beta", "must be in [0, 1]"));
        }
        if !positive(rep.delay_max) {
            return Err(invalid("reputation.delay_max", "must be > 0"));
        }
        if !positive(self.normalization().power_fair) {
            return Err(invalid("reputation.power_fair", "must be > 0"));
        }

        if !(0.0..=1.0).contains(&self.voting.epsilon) {
            return Err(invalid("voting.epsilon", "must be in [0, 1]"));
        }

        let l = &self.learning;
        if !(l.eta > 0.0 && l.eta <= 1.0) {
            return Err(invalid("learning.eta", "must be in (0, 1]"));
        }
        if !(l.w_min > 0.0 && l.w_min <= l.w_max) {
            return Err(invalid("learning.w_min", "must satisfy 0 < w_min ≤ w_max"));
        }
        if !(l.w_init >= l.w_min && l.w_init <= l.w_max) {
            return Err(invalid("learning.w_init", "must be within [w_min, w_max]"));
        }

        let d = &self.detection;
        if !(d.delay_tol.is_finite() && d.delay_tol >= 0.0) {
            return Err(invalid("detection.delay_tol", "must be ≥ 0"));
        }
        if !positive(d.power_tol) {
            return Err(invalid("detection.power_tol", "must be > 0"));
        }
        Ok(())
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn median_honest_capacity(profiles: &[AgentProfile]) -> f64 {
    let mut caps: Vec<f64> = profiles
        .iter()
        .filter(|p| p.kind == AgentKind::Honest)
        .map(|p| p.base_capacity)
        .collect();
    if caps.is_empty() {
        return NormalizationParams::default().power_fair;
    }
    caps.sort_by(f64::total_cmp);
    let mid = caps.len() / 2;
    if caps.len().is_multiple_of(2) {
        (caps[mid - 1] + caps[mid]) / 2.0
    } else {
        caps[mid]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
rounds = 10
seed = 1

[[agents]]
kind = "honest"
count = 3
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = SimulationConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.network, NetworkParams::default());
        assert_eq!(c.learning, LearningParams::default());
        assert_eq!(c.initial_agents(), 3);
        assert_eq!(c.normalization().power_fair, 1.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("{MINIMAL}\n[network]\nfooo = 3\n");
        let err = SimulationConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("fooo"), "{err}");

        let text = MINIMAL.replace("count = 3", "count = 3\nfooo = 1");
        let err = SimulationConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("fooo"), "{err}");

        let text = format!("fooo = 1\n{MINIMAL}");
        let err = SimulationConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("fooo"), "{err}");
    }

    #[test]
    fn zero_rounds_rejected() {
        let text = MINIMAL.replace("rounds = 10", "rounds = 0");
        let err = SimulationConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("rounds ≥ 1"), "{err}");
    }

    #[test]
    fn population_mismatch_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\nn_agents = 4");
        assert!(matches!(
            SimulationConfig::from_toml_str(&text),
            Err(ConfigError::Invalid { field, .. }) if field == "n_agents"
        ));
    }

    #[test]
    fn bad_probability_names_field() {
        let text = MINIMAL.replace("count = 3", "count = 3\ndetect_skill = 1.5");
        assert!(matches!(
            SimulationConfig::from_toml_str(&text),
            Err(ConfigError::Invalid { field, .. }) if field == "agents[0].detect_skill"
        ));
    }

    #[test]
    fn resolved_defaults_reparse_identically() {
        let c = SimulationConfig::canonical(42);
        let text = c.resolved().to_toml_string();
        let back = SimulationConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.population(), c.population());
        assert_eq!(back.normalization(), c.normalization());
        assert_eq!(back.network, c.network);
    }

    #[test]
    fn group_overrides_apply() {
        let g = AgentGroup {
            hold_prob: Some(1.0),
            ..AgentGroup::new(AgentKind::Holder, 1)
        };
        assert_eq!(g.profile().hold_prob, 1.0);
        let d = AgentGroup {
            base_delay: Some(2.0),
            ..AgentGroup::new(AgentKind::Delayer, 1)
        };
        assert_eq!(d.profile().extra_delay, 6.0);
    }

    #[test]
    fn join_events_parse() {
        let text = format!("{MINIMAL}\n[[join]]\nround = 5\nkind = \"sloppy\"\n");
        let c = SimulationConfig::from_toml_str(&text).unwrap();
        assert_eq!(c.join.len(), 1);
        assert_eq!(c.join[0].group.kind, AgentKind::Sloppy);
    }

    #[test]
    fn unknown_key_in_join_is_rejected() {
        let text = "rounds = 5\nseed = 1\n[[agents]]\nkind = \"honest\"\n[[join]]\nround = 2\nkind = \"honest\"\nbogus = 1\n";
        match SimulationConfig::from_toml_str(text) {
            Err(ConfigError::Parse(m)) => assert!(m.contains("bogus"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
