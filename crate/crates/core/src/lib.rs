//! Multi-agent, reputation-driven proof-of-stake consensus simulator.
//!
//! Agents keep a five-factor reputation table for every peer, vote for a
//! leader with learnable per-factor weights, verify the leader's block and
//! are rewarded or penalized on whether they reached the right verdict and
//! caught a misbehaving leader. Agents whose cumulative reputation sinks
//! below a threshold are eliminated.

pub mod adversary;
pub mod chain;
pub mod config;
pub mod engine;
pub mod export;
pub mod learning;
pub mod model;
pub mod reputation;
pub mod voting;

pub use adversary::{
    act, ground_truth_bad, AgentKind, AgentProfile, DetectionThresholds, Role, RoundActions,
};
pub use chain::{Chain, ChainError, Mempool, TxLedger, TxStatus, Verdict, VerificationResult};
pub use config::{AgentGroup, ConfigError, JoinEvent, SimulationConfig};
pub use engine::{run_simulation, Engine, RoundReport, SimError, SimulationResult, Summary};
pub use learning::{update_weights, weights_snapshot, LearnerState, LearningParams};
pub use model::{digest, AgentId, Block, Hash32, RngSeed, Round, StreamLabel, Transaction, TxId};
pub use reputation::{
    apply_delta, penalty_reward, refresh_factors, ConsensusOutcome, NormalizationParams,
    ReputationFactors, RoundObservation,
};
pub use voting::{collect_votes, compute_vote, select_leader, Candidate, VoteTally, WeightVector};
