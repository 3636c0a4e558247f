//! Shared domain types: agent ids, transactions, blocks, the block digest
//! and the keyed random streams every stochastic draw comes from.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Round index. Round 0 is reserved for genesis; simulated rounds start at 1.
pub type Round = u64;

/// Transaction identifier, unique per simulation.
pub type TxId = u64;

/// 32-byte block digest.
pub type Hash32 = [u8; 32];

/// Name of the digest function, written into chain dump headers.
pub const DIGEST_NAME: &str = "sha256";

/// Dense agent identifier. Ids are assigned in join order and never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed 256-bit digest. Stable across platforms and runs.
pub fn digest(bytes: &[u8]) -> Hash32 {
    Sha256::digest(bytes).into()
}

/// A pending or committed transaction. `is_legitimate` is ground truth and
/// never shown to agents directly; they only see it through their own
/// detection draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: TxId,
    pub created_round: Round,
    pub is_legitimate: bool,
    pub fee: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash32,
    pub round: Round,
    pub leader: AgentId,
    pub tx_ids: Vec<TxId>,
    pub hash: Hash32,
}

impl Block {
    /// The chain root: height 0, round 0, an all-zero parent and no payload.
    pub fn genesis() -> Self {
        Self::seal(0, [0u8; 32], 0, AgentId(0), Vec::new())
    }

    /// Builds a block and computes its hash from the other fields.
    pub fn seal(
        height: u64,
        prev_hash: Hash32,
        round: Round,
        leader: AgentId,
        tx_ids: Vec<TxId>,
    ) -> Self {
        let hash = Self::compute_hash(&prev_hash, height, round, leader, &tx_ids);
        Self {
            height,
            prev_hash,
            round,
            leader,
            tx_ids,
            hash,
        }
    }

    /// `H(prev_hash ‖ height ‖ round ‖ leader ‖ len ‖ tx_ids)`, integers
    /// little-endian u64. The length prefix keeps the encoding unambiguous.
    pub fn compute_hash(
        prev_hash: &Hash32,
        height: u64,
        round: Round,
        leader: AgentId,
        tx_ids: &[TxId],
    ) -> Hash32 {
        let mut buf = Vec::with_capacity(32 + 8 * (4 + tx_ids.len()));
        buf.extend_from_slice(prev_hash);
        buf.extend_from_slice(&height.to_le_bytes());
        buf.extend_from_slice(&round.to_le_bytes());
        buf.extend_from_slice(&u64::from(leader.0).to_le_bytes());
        buf.extend_from_slice(&(tx_ids.len() as u64).to_le_bytes());
        for id in tx_ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        digest(&buf)
    }

    pub fn hash_is_valid(&self) -> bool {
        Self::compute_hash(
            &self.prev_hash,
            self.height,
            self.round,
            self.leader,
            &self.tx_ids,
        ) == self.hash
    }

    pub fn is_genesis(&self) -> bool {
        self.height == 0
    }
}

/// Purpose labels for random streams. Each draw site owns one label so that
/// adding draws at one site never shifts the values seen at another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    TxGen,
    Leader,
    Act,
    Verify,
}

impl StreamLabel {
    fn tag(self) -> &'static [u8] {
        match self {
            StreamLabel::TxGen => b"txgen",
            StreamLabel::Leader => b"leader",
            StreamLabel::Act => b"act",
            StreamLabel::Verify => b"verify",
        }
    }
}

/// Root seed of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Independent stream for `(label, round, agent)`. The stream key is
    /// hashed into a ChaCha8 seed, so streams are reproducible and unrelated.
    pub fn stream(self, label: StreamLabel, round: Round, agent: u32) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"mrlpos-stream/v1");
        hasher.update(self.0.to_le_bytes());
        hasher.update(label.tag());
        hasher.update(round.to_le_bytes());
        hasher.update(agent.to_le_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
}
