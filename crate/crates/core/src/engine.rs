//! Round orchestration.
//!
//! One round: generate transactions, vote, elect a leader, propose, verify,
//! grade every validator with the penalty/reward table, refresh reputations,
//! adapt weights, commit or reject, eliminate, admit joiners.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::adversary::{act, ground_truth_bad, AgentKind, AgentProfile, Role, RoundActions};
use crate::chain::{
    audit, commit, propose_block, verify_block, Chain, ChainError, CommitDecision, Mempool,
    TxCounts, TxLedger, TxStatus, Verdict, VerificationResult, VerifyContext,
};
use crate::config::{ConfigError, SimulationConfig};
use crate::learning::{update_weights, weights_snapshot, LearnerState};
use crate::model::{AgentId, Hash32, Round, StreamLabel, Transaction, TxId};
use crate::reputation::{
    apply_delta, penalty_reward, refresh_factors, ConsensusOutcome, NormalizationParams,
    ReputationFactors, RoundObservation,
};
use crate::voting::{collect_votes, select_leader, Candidate, VoteTally, VotingError};

/// Width of the leadership-share windows in the summary.
pub const WINDOW: u64 = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("round {0}: no eligible agents remain")]
    NetworkDeath(Round),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// One agent's simulation slot.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: AgentId,
    pub profile: AgentProfile,
    pub factors: ReputationFactors,
    pub learner: LearnerState,
    pub joined_round: Round,
    pub eliminated_round: Option<Round>,
}

impl AgentState {
    pub fn is_active(&self) -> bool {
        self.eliminated_round.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    Leader,
    Validator,
    /// Present in the population but eliminated earlier.
    Inactive,
}

/// Per-agent line of a round report.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRoundRecord {
    pub agent: AgentId,
    pub kind: AgentKind,
    pub role: AgentRole,
    /// Only validators are graded.
    pub delta: Option<i64>,
    pub outcome: Option<ConsensusOutcome>,
    pub cumulative: i64,
    pub factors: ReputationFactors,
    pub weights: [f64; 5],
    pub eliminated: bool,
}

impl AgentRoundRecord {
    pub fn was_leader(&self) -> bool {
        self.role == AgentRole::Leader
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: Round,
    pub tally: VoteTally,
    pub leader: AgentId,
    pub explored: bool,
    pub block_hash: Hash32,
    pub block_txs: usize,
    pub block_valid: bool,
    pub bad_actor: bool,
    pub committed: bool,
    /// The round had no validators.
    pub degenerate: bool,
    pub agents: Vec<AgentRoundRecord>,
    pub eliminated_this_round: BTreeSet<AgentId>,
    pub joined_this_round: Vec<AgentId>,
}

/// Agents strictly below `threshold` among the currently active ones.
pub fn eliminate(agents: &[AgentState], threshold: i64) -> BTreeSet<AgentId> {
    agents
        .iter()
        .filter(|a| a.is_active() && a.factors.cumulative < threshold)
        .map(|a| a.id)
        .collect()
}

pub struct Engine {
    config: SimulationConfig,
    norm: NormalizationParams,
    agents: Vec<AgentState>,
    mempool: Mempool,
    ledger: TxLedger,
    chain: Chain,
    round: Round,
    next_tx: TxId,
}

impl Engine {
    pub fn new(config: SimulationConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let norm = config.normalization();
        let mut engine = Self {
            norm,
            agents: Vec::new(),
            mempool: Mempool::new(),
            ledger: TxLedger::new(),
            chain: Chain::new(),
            round: 0,
            next_tx: 1,
            config,
        };
        for profile in engine.config.population() {
            engine.admit(profile, 0);
        }
        Ok(engine)
    }

    fn admit(&mut self, profile: AgentProfile, round: Round) -> AgentId {
        let id = AgentId(self.agents.len() as u32);
        self.agents.push(AgentState {
            id,
            profile,
            factors: ReputationFactors::neutral(),
            learner: LearnerState::new(&self.config.learning),
            joined_round: round,
            eliminated_round: None,
        });
        id
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn ledger(&self) -> &TxLedger {
        &self.ledger
    }

    /// Last completed round (0 before the first).
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn audit(&self) -> Result<TxCounts, ChainError> {
        audit(&self.chain, &self.ledger, &self.mempool)
    }

    fn generate_transactions(&mut self, round: Round) {
        let mut rng = self.config.seed.stream(StreamLabel::TxGen, round, 0);
        for _ in 0..self.config.network.tx_rate {
            let legit_draw: f64 = rng.random();
            let tx = Transaction {
                tx_id: self.next_tx,
                created_round: round,
                is_legitimate: legit_draw >= self.config.network.p_illegit,
                fee: rng.random_range(1..=100),
            };
            self.next_tx += 1;
            self.ledger.record(tx);
            self.mempool.push(tx);
        }
    }

    fn block_transactions(&self, ids: &[TxId]) -> Vec<Transaction> {
        ids.iter()
            .map(|id| *self.ledger.get(*id).expect("block txs are registered"))
            .collect()
    }

    /// Runs the next round.
    pub fn step(&mut self) -> Result<RoundReport, SimError> {
        let round = self.round + 1;
        let seed = self.config.seed;
        let net = self.config.network;
        let thresholds = self.config.detection;

        let active: Vec<usize> = (0..self.agents.len())
            .filter(|&i| self.agents[i].is_active())
            .collect();
        if active.is_empty() {
            return Err(SimError::NetworkDeath(round));
        }

        // 1. transactions
        for id in self.mempool.expire(round, net.tx_ttl) {
            self.ledger.set_status(id, TxStatus::Expired);
        }
        self.generate_transactions(round);

        // 2. vote and elect
        let voters: Vec<_> = active
            .iter()
            .map(|&i| (self.agents[i].id, self.agents[i].learner.weights()))
            .collect();
        let candidates: Vec<_> = active
            .iter()
            .map(|&i| {
                let a = &self.agents[i];
                Candidate {
                    id: a.id,
                    factors: a.factors,
                    is_new: a.factors.is_new(),
                }
            })
            .collect();
        let tally = collect_votes(&voters, &candidates)?;
        let mut leader_rng = seed.stream(StreamLabel::Leader, round, 0);
        let choice = select_leader(&tally, self.config.voting.epsilon, &mut leader_rng)?;
        let leader = choice.leader;
        let leader_idx = leader.index();

        // 3. leader acts and proposes
        let view = self.mempool.head(net.max_txs);
        let leader_actions = {
            let mut rng = seed.stream(StreamLabel::Act, round, leader.0);
            act(
                &self.agents[leader_idx].profile,
                Role::Leader,
                &view,
                &mut rng,
            )
        };
        let tip = self.chain.tip().clone();
        let block = propose_block(
            leader,
            round,
            &leader_actions,
            &self.mempool,
            &tip,
            net.max_txs,
        );
        let block_txs = self.block_transactions(&block.tx_ids);

        let block_valid = block_txs.iter().all(|t| t.is_legitimate)
            && leader_actions.held_tx_ids.is_empty()
            && !block
                .tx_ids
                .iter()
                .any(|id| leader_actions.validation_flips.contains(id));
        let bad_actor = ground_truth_bad(&leader_actions, &thresholds);

        // 4. verification
        let validators: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| i != leader_idx)
            .collect();
        let mut own_actions: BTreeMap<usize, RoundActions> = BTreeMap::new();
        let mut results: Vec<VerificationResult> = Vec::with_capacity(validators.len());
        for &i in &validators {
            let agent = &self.agents[i];
            let mut act_rng = seed.stream(StreamLabel::Act, round, agent.id.0);
            let actions = act(&agent.profile, Role::Validator, &block_txs, &mut act_rng);
            let ctx = VerifyContext {
                validator: agent.id,
                profile: &agent.profile,
                own_actions: &actions,
                block: &block,
                tip: &tip,
                view: &view,
                leader_report: &leader_actions,
                thresholds: &thresholds,
                max_txs: net.max_txs,
            };
            let mut verify_rng = seed.stream(StreamLabel::Verify, round, agent.id.0);
            results.push(verify_block(&ctx, &mut verify_rng));
            own_actions.insert(i, actions);
        }

        // 5. grade, reward, refresh
        let mut deltas: BTreeMap<usize, (i64, ConsensusOutcome)> = BTreeMap::new();
        for (result, &i) in results.iter_mut().zip(&validators) {
            let actions = &own_actions[&i];
            let verdict_right = (result.block_verdict == Verdict::Accept) == block_valid;
            let conduct_clean = !ground_truth_bad(actions, &thresholds);
            let outcome = ConsensusOutcome::new(
                verdict_right && conduct_clean,
                bad_actor && result.suspicion == Some(leader),
            );
            result.outcome = Some(outcome);
            let delta = penalty_reward(outcome);
            let agent = &mut self.agents[i];
            agent.factors = apply_delta(agent.factors, delta).expect("table delta");

            let obs = validator_observation(actions, &block_txs);
            agent.factors = refresh_factors(agent.factors, &obs, &self.norm);
            deltas.insert(i, (delta, outcome));
        }
        {
            let obs = leader_observation(&leader_actions, &view);
            let agent = &mut self.agents[leader_idx];
            agent.factors = refresh_factors(agent.factors, &obs, &self.norm);
        }

        // 6. learning, ascending id
        let leader_factors = self.agents[leader_idx].factors;
        for (&i, &(delta, _)) in &deltas {
            let agent = &mut self.agents[i];
            agent.learner = update_weights(&agent.learner, round, delta, &leader_factors);
        }

        // 7. commit
        let (committed, degenerate) = if validators.is_empty() {
            // sole agent: nobody to verify, the proposal stands
            (true, true)
        } else {
            match commit(&results, net.quorum) {
                CommitDecision::Committed => (true, false),
                CommitDecision::Rejected { degenerate } => (false, degenerate),
            }
        };
        let block_hash = block.hash;
        let block_len = block.tx_ids.len();
        if committed {
            let height = block.height;
            let ids: BTreeSet<TxId> = block.tx_ids.iter().copied().collect();
            self.chain.append(block)?;
            for id in &ids {
                self.ledger.set_status(*id, TxStatus::Committed { height });
            }
            self.mempool.remove(&ids);
        } else {
            let discard = quorum_flagged(&results, net.quorum);
            for id in &discard {
                self.ledger.set_status(*id, TxStatus::Discarded);
            }
            self.mempool.remove(&discard);
        }

        // 8. elimination
        let eliminated = eliminate(&self.agents, self.config.elimination.threshold);
        for id in &eliminated {
            self.agents[id.index()].eliminated_round = Some(round);
        }

        let records = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let role = if i == leader_idx {
                    AgentRole::Leader
                } else if deltas.contains_key(&i) {
                    AgentRole::Validator
                } else {
                    AgentRole::Inactive
                };
                AgentRoundRecord {
                    agent: a.id,
                    kind: a.profile.kind,
                    role,
                    delta: deltas.get(&i).map(|d| d.0),
                    outcome: deltas.get(&i).map(|d| d.1),
                    cumulative: a.factors.cumulative,
                    factors: a.factors,
                    weights: weights_snapshot(&a.learner),
                    eliminated: !a.is_active(),
                }
            })
            .collect();

        // 9. arrivals
        let arrivals: Vec<AgentProfile> = self
            .config
            .join
            .iter()
            .filter(|j| j.round == round)
            .flat_map(|j| std::iter::repeat_n(j.group.profile(), j.group.count as usize))
            .collect();
        let joined = arrivals.into_iter().map(|p| self.admit(p, round)).collect();

        self.round = round;
        Ok(RoundReport {
            round,
            tally,
            leader,
            explored: choice.explored,
            block_hash,
            block_txs: block_len,
            block_valid,
            bad_actor,
            committed,
            degenerate,
            agents: records,
            eliminated_this_round: eliminated,
            joined_this_round: joined,
        })
    }
}

fn validator_observation(actions: &RoundActions, block_txs: &[Transaction]) -> RoundObservation {
    let mut obs = RoundObservation {
        txs_assigned: block_txs.len() as u64,
        txs_held: actions.held_tx_ids.len() as u64,
        processing_delay: actions.processing_delay,
        capacity_used: actions.capacity_used,
        ..Default::default()
    };
    for tx in block_txs {
        if !tx.is_legitimate {
            obs.illegit_seen += 1;
            if actions.flagged_illegit.contains(&tx.tx_id) {
                obs.illegit_flagged += 1;
            }
        }
        if let Some(judged_bad) = actions.judges_illegitimate(tx.tx_id) {
            obs.validations_total += 1;
            if judged_bad != tx.is_legitimate {
                obs.validations_correct += 1;
            }
        }
    }
    obs
}

/// The leader screens its view before proposing; holding is measured
/// against that view rather than the block.
fn leader_observation(actions: &RoundActions, view: &[Transaction]) -> RoundObservation {
    validator_observation(actions, view)
}

/// Transactions flagged by at least a quorum of validators.
fn quorum_flagged(results: &[VerificationResult], quorum: f64) -> BTreeSet<TxId> {
    let mut counts: BTreeMap<TxId, usize> = BTreeMap::new();
    for r in results {
        for id in &r.flagged_txs {
            *counts.entry(*id).or_default() += 1;
        }
    }
    let needed = quorum * results.len() as f64 - 1e-12;
    counts
        .into_iter()
        .filter(|(_, c)| *c as f64 >= needed)
        .map(|(id, _)| id)
        .collect()
}

/// Per-agent end-of-run figures.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent: AgentId,
    pub kind: AgentKind,
    pub joined_round: Round,
    pub final_cumulative: i64,
    pub final_factors: ReputationFactors,
    pub final_weights: [f64; 5],
    pub eliminated_round: Option<Round>,
    /// Rounds led in each `WINDOW`-round window.
    pub leadership_by_window: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub seed: u64,
    pub rounds_run: u64,
    pub committed_blocks: u64,
    pub rejected_blocks: u64,
    pub network_death: Option<Round>,
    pub tx_counts: TxCounts,
    pub agents: Vec<AgentSummary>,
    /// Fraction of each window's rounds led by a malicious agent.
    pub malicious_share_by_window: Vec<f64>,
}

impl Summary {
    pub fn mean_cumulative(&self, kind: AgentKind) -> Option<f64> {
        let vals: Vec<i64> = self
            .agents
            .iter()
            .filter(|a| a.kind == kind)
            .map(|a| a.final_cumulative)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<i64>() as f64 / vals.len() as f64)
    }

    /// Stable text rendering, one `key value` record per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# mrlpos summary v1\n");
        s.push_str(&format!("seed {}\n", self.seed));
        s.push_str(&format!("rounds_run {}\n", self.rounds_run));
        s.push_str(&format!("committed_blocks {}\n", self.committed_blocks));
        s.push_str(&format!("rejected_blocks {}\n", self.rejected_blocks));
        match self.network_death {
            Some(r) => s.push_str(&format!("network_death {r}\n")),
            None => s.push_str("network_death none\n"),
        }
        let c = &self.tx_counts;
        s.push_str(&format!(
            "txs generated={} committed={} pending={} expired={} discarded={}\n",
            c.total(),
            c.committed,
            c.pending,
            c.expired,
            c.discarded
        ));
        let shares: Vec<String> = self
            .malicious_share_by_window
            .iter()
            .map(|x| format!("{x:.4}"))
            .collect();
        s.push_str(&format!("malicious_share_by_window {}\n", shares.join(" ")));
        for kind in AgentKind::ALL {
            if let Some(m) = self.mean_cumulative(kind) {
                s.push_str(&format!("mean_cumulative {kind} {m:.4}\n"));
            }
        }
        for a in &self.agents {
            let lead: Vec<String> = a.leadership_by_window.iter().map(u64::to_string).collect();
            let elim = a
                .eliminated_round
                .map_or_else(|| "-".to_string(), |r| r.to_string());
            s.push_str(&format!(
                "agent {} kind={} joined={} cumulative={} eliminated={} led_by_window={}\n",
                a.agent,
                a.kind,
                a.joined_round,
                a.final_cumulative,
                elim,
                lead.join(",")
            ));
        }
        s
    }
}

pub struct SimulationResult {
    pub reports: Vec<RoundReport>,
    pub chain: Chain,
    pub summary: Summary,
    pub engine: Engine,
}

impl SimulationResult {
    pub fn network_died(&self) -> bool {
        self.summary.network_death.is_some()
    }
}

/// Runs every configured round. Stops early, without error, if the whole
/// population is eliminated; `summary.network_death` records the round.
pub fn run_simulation(config: SimulationConfig) -> Result<SimulationResult, SimError> {
    let rounds = config.rounds;
    let mut engine = Engine::new(config)?;
    let mut reports = Vec::with_capacity(rounds as usize);
    let mut network_death = None;
    for _ in 0..rounds {
        match engine.step() {
            Ok(report) => reports.push(report),
            Err(SimError::NetworkDeath(r)) => {
                network_death = Some(r);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let summary = summarize(&engine, &reports, network_death);
    Ok(SimulationResult {
        reports,
        chain: engine.chain().clone(),
        summary,
        engine,
    })
}

fn summarize(engine: &Engine, reports: &[RoundReport], network_death: Option<Round>) -> Summary {
    let windows = (engine.config().rounds as usize).div_ceil(WINDOW as usize);
    let window_of = |r: Round| ((r - 1) / WINDOW) as usize;

    let mut agents: Vec<AgentSummary> = engine
        .agents()
        .iter()
        .map(|a| AgentSummary {
            agent: a.id,
            kind: a.profile.kind,
            joined_round: a.joined_round,
            final_cumulative: a.factors.cumulative,
            final_factors: a.factors,
            final_weights: weights_snapshot(&a.learner),
            eliminated_round: a.eliminated_round,
            leadership_by_window: vec![0; windows],
        })
        .collect();

    let mut malicious = vec![0u64; windows];
    let mut per_window = vec![0u64; windows];
    for rep in reports {
        let w = window_of(rep.round);
        per_window[w] += 1;
        agents[rep.leader.index()].leadership_by_window[w] += 1;
        if agents[rep.leader.index()].kind.is_malicious() {
            malicious[w] += 1;
        }
    }
    let committed = reports.iter().filter(|r| r.committed).count() as u64;

    Summary {
        seed: engine.config().seed.0,
        rounds_run: reports.len() as u64,
        committed_blocks: committed,
        rejected_blocks: reports.len() as u64 - committed,
        network_death,
        tx_counts: engine.ledger().counts(),
        agents,
        malicious_share_by_window: malicious
            .iter()
            .zip(&per_window)
            .map(|(&m, &n)| if n == 0 { 0.0 } else { m as f64 / n as f64 })
            .collect(),
    }
}
