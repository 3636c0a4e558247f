//! Mempool, block proposal and verification, quorum commit, the transaction
//! ledger and a full-chain integrity audit. Also reads and writes the
//! plain-text chain dump.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AgentProfile, DetectionThresholds, RoundActions};
use crate::model::{AgentId, Block, Hash32, Round, Transaction, TxId, DIGEST_NAME};
use crate::reputation::ConsensusOutcome;

pub const DUMP_MAGIC: &str = "# mrlpos chain dump v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block at height {height} does not link to tip (expected height {expected})")]
    Unlinked { height: u64, expected: u64 },
    #[error("block at height {0} has a hash that does not match its contents")]
    BadHash(u64),
    #[error("chain does not start with the genesis block")]
    BadGenesis,
    #[error("tx {0} appears in more than one committed block")]
    DoubleCommit(TxId),
    #[error("tx {tx}: ledger says {ledger:?} but chain/mempool disagree")]
    Conservation { tx: TxId, ledger: TxStatus },
    #[error("tx {0} is in a block or mempool but was never generated")]
    UnknownTx(TxId),
    #[error("chain dump line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Pending transactions in FIFO order (created round, then id).
#[derive(Debug, Clone, Default)]
pub struct Mempool {
    pending: VecDeque<Transaction>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tx: Transaction) {
        debug_assert!(self.pending.iter().all(|t| t.tx_id != tx.tx_id));
        self.pending.push_back(tx);
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }

    /// The first `n` pending transactions.
    pub fn head(&self, n: usize) -> Vec<Transaction> {
        self.pending.iter().take(n).copied().collect()
    }

    pub fn contains(&self, id: TxId) -> bool {
        self.pending.iter().any(|t| t.tx_id == id)
    }

    /// Removes the given ids; the remaining order is unchanged.
    pub fn remove(&mut self, ids: &BTreeSet<TxId>) {
        self.pending.retain(|t| !ids.contains(&t.tx_id));
    }

    /// Drops transactions older than `ttl` rounds. `ttl == 0` disables expiry.
    pub fn expire(&mut self, round: Round, ttl: u64) -> Vec<TxId> {
        if ttl == 0 {
            return Vec::new();
        }
        let mut expired = Vec::new();
        self.pending.retain(|t| {
            let keep = round.saturating_sub(t.created_round) <= ttl;
            if !keep {
                expired.push(t.tx_id);
            }
            keep
        });
        expired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub validator: AgentId,
    pub block_verdict: Verdict,
    pub flagged_txs: BTreeSet<TxId>,
    pub suspicion: Option<AgentId>,
    /// The block failed linkage or hash checks; no content was examined.
    pub structural_reject: bool,
    /// Filled in by the engine when the round is graded.
    pub outcome: Option<ConsensusOutcome>,
}

/// Builds the block from the first `max_txs` pending transactions minus the
/// ones the leader holds, in mempool order. A zero-transaction block is legal.
pub fn propose_block(
    leader: AgentId,
    round: Round,
    actions: &RoundActions,
    mempool: &Mempool,
    prev: &Block,
    max_txs: usize,
) -> Block {
    let tx_ids = mempool
        .iter()
        .take(max_txs)
        .map(|t| t.tx_id)
        .filter(|id| !actions.held_tx_ids.contains(id))
        .collect();
    Block::seal(prev.height + 1, prev.hash, round, leader, tx_ids)
}

/// Everything a validator looks at when checking a proposal.
#[derive(Debug, Clone, Copy)]
pub struct VerifyContext<'a> {
    pub validator: AgentId,
    pub profile: &'a AgentProfile,
    /// The validator's own judgement pass over the block's transactions.
    pub own_actions: &'a RoundActions,
    pub block: &'a Block,
    pub tip: &'a Block,
    /// The validator's mempool snapshot taken before the proposal.
    pub view: &'a [Transaction],
    /// The leader's conduct as observable by peers: reported delay and
    /// capacity, and which transactions it mis-processed.
    pub leader_report: &'a RoundActions,
    pub thresholds: &'a DetectionThresholds,
    pub max_txs: usize,
}

/// Checks a proposed block.
///
/// The verdict is reject when the validator judges any block transaction
/// illegitimate, notices holding (a transaction inside the capacity cut of
/// its view is missing from the block) or notices processing errors. Delay
/// and capacity anomalies raise suspicion of the leader without rejecting.
/// Each anomaly is noticed with probability `detect_skill`.
pub fn verify_block<R: Rng + ?Sized>(ctx: &VerifyContext<'_>, rng: &mut R) -> VerificationResult {
    let block = ctx.block;
    let linked = block.prev_hash == ctx.tip.hash && block.height == ctx.tip.height + 1;
    if !linked || !block.hash_is_valid() {
        return VerificationResult {
            validator: ctx.validator,
            block_verdict: Verdict::Reject,
            flagged_txs: BTreeSet::new(),
            suspicion: None,
            structural_reject: true,
            outcome: None,
        };
    }

    let skill = ctx.profile.detect_skill;
    let mut notice = |present: bool| {
        let draw: f64 = rng.random();
        present && draw < skill
    };

    let in_block: BTreeSet<TxId> = block.tx_ids.iter().copied().collect();
    let missing = ctx
        .view
        .iter()
        .take(ctx.max_txs)
        .any(|t| !in_block.contains(&t.tx_id));
    let errors = ctx
        .leader_report
        .validation_flips
        .iter()
        .any(|id| in_block.contains(id));

    let holding_seen = notice(missing);
    let errors_seen = notice(errors);
    let delay_seen = notice(ctx.leader_report.added_delay > ctx.thresholds.delay_tol);
    let power_seen = notice(ctx.leader_report.capacity_used > ctx.thresholds.power_tol);

    let flagged_txs: BTreeSet<TxId> = block
        .tx_ids
        .iter()
        .copied()
        .filter(|id| ctx.own_actions.judges_illegitimate(*id) == Some(true))
        .collect();

    let reject = !flagged_txs.is_empty() || holding_seen || errors_seen;
    let suspicious = holding_seen || errors_seen || delay_seen || power_seen;

    VerificationResult {
        validator: ctx.validator,
        block_verdict: if reject {
            Verdict::Reject
        } else {
            Verdict::Accept
        },
        flagged_txs,
        suspicion: suspicious.then_some(block.leader),
        structural_reject: false,
        outcome: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitDecision {
    Committed,
    /// `degenerate` marks a round with no validators at all.
    Rejected {
        degenerate: bool,
    },
}

/// Quorum rule: committed iff the accepting fraction reaches `quorum`.
/// With no validators the block is rejected as degenerate.
pub fn commit(results: &[VerificationResult], quorum: f64) -> CommitDecision {
    if results.is_empty() {
        return CommitDecision::Rejected { degenerate: true };
    }
    let accepts = results
        .iter()
        .filter(|r| r.block_verdict == Verdict::Accept)
        .count();
    if accepts as f64 >= quorum * results.len() as f64 - 1e-12 {
        CommitDecision::Committed
    } else {
        CommitDecision::Rejected { degenerate: false }
    }
}

/// The main chain, genesis first.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    pub fn new() -> Self {
        Self {
            blocks: vec![Block::genesis()],
        }
    }

    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Number of committed blocks, genesis excluded.
    pub fn committed_len(&self) -> usize {
        self.blocks.len().saturating_sub(1)
    }

    pub fn append(&mut self, block: Block) -> Result<(), ChainError> {
        let tip = self.tip();
        if block.prev_hash != tip.hash || block.height != tip.height + 1 {
            return Err(ChainError::Unlinked {
                height: block.height,
                expected: tip.height + 1,
            });
        }
        if !block.hash_is_valid() {
            return Err(ChainError::BadHash(block.height));
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Hash links, consecutive heights, valid hashes, genesis root.
    pub fn verify_links(&self) -> Result<(), ChainError> {
        let genesis = self.blocks.first().ok_or(ChainError::BadGenesis)?;
        if *genesis != Block::genesis() {
            return Err(ChainError::BadGenesis);
        }
        for pair in self.blocks.windows(2) {
            let (prev, b) = (&pair[0], &pair[1]);
            if b.prev_hash != prev.hash || b.height != prev.height + 1 {
                return Err(ChainError::Unlinked {
                    height: b.height,
                    expected: prev.height + 1,
                });
            }
            if !b.hash_is_valid() {
                return Err(ChainError::BadHash(b.height));
            }
        }
        Ok(())
    }

    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{DUMP_MAGIC}")?;
        writeln!(out, "# digest: {DIGEST_NAME}")?;
        writeln!(out, "# fields: height round leader hash prev_hash tx_ids")?;
        for b in &self.blocks {
            let txs = if b.tx_ids.is_empty() {
                "-".to_string()
            } else {
                b.tx_ids
                    .iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            writeln!(
                out,
                "{} {} {} {} {} {}",
                b.height,
                b.round,
                b.leader,
                hex::encode(b.hash),
                hex::encode(b.prev_hash),
                txs
            )?;
        }
        Ok(())
    }

    pub fn parse_dump(text: &str) -> Result<Self, ChainError> {
        let err = |line: usize, message: &str| ChainError::Parse {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == DUMP_MAGIC => {}
            _ => return Err(err(1, "missing dump header")),
        }
        let mut blocks = Vec::new();
        for (idx, line) in lines {
            let n = idx + 1;
            if let Some(meta) = line.strip_prefix("# digest:") {
                if meta.trim() != DIGEST_NAME {
                    return Err(err(n, "unsupported digest"));
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(' ').collect();
            if cols.len() != 6 {
                return Err(err(n, "expected 6 columns"));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|_| err(n, "bad integer"));
            let hash = |s: &str| -> Result<Hash32, ChainError> {
                let bytes = hex::decode(s).map_err(|_| err(n, "bad hex"))?;
                bytes
                    .try_into()
                    .map_err(|_| err(n, "digest must be 32 bytes"))
            };
            let leader = u32::try_from(int(cols[2])?).map_err(|_| err(n, "bad leader id"))?;
            let tx_ids = if cols[5] == "-" {
                Vec::new()
            } else {
                cols[5].split(',').map(int).collect::<Result<_, _>>()?
            };
            blocks.push(Block {
                height: int(cols[0])?,
                round: int(cols[1])?,
                leader: AgentId(leader),
                hash: hash(cols[3])?,
                prev_hash: hash(cols[4])?,
                tx_ids,
            });
        }
        Ok(Self { blocks })
    }
}

/// Lifecycle state of a generated transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxStatus {
    Pending,
    Committed {
        height: u64,
    },
    /// Aged out of the mempool.
    Expired,
    /// Dropped with a rejected block after a quorum of validators flagged it.
    Discarded,
}

/// Ground-truth registry of every transaction ever generated.
#[derive(Debug, Clone, Default)]
pub struct TxLedger {
    txs: BTreeMap<TxId, (Transaction, TxStatus)>,
}

impl TxLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, tx: Transaction) {
        self.txs.insert(tx.tx_id, (tx, TxStatus::Pending));
    }

    pub fn get(&self, id: TxId) -> Option<&Transaction> {
        self.txs.get(&id).map(|(t, _)| t)
    }

    pub fn status(&self, id: TxId) -> Option<TxStatus> {
        self.txs.get(&id).map(|(_, s)| *s)
    }

    pub fn set_status(&mut self, id: TxId, status: TxStatus) {
        if let Some(entry) = self.txs.get_mut(&id) {
            entry.1 = status;
        }
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn counts(&self) -> TxCounts {
        let mut c = TxCounts::default();
        for (_, status) in self.txs.values() {
            match status {
                TxStatus::Pending => c.pending += 1,
                TxStatus::Committed { .. } => c.committed += 1,
                TxStatus::Expired => c.expired += 1,
                TxStatus::Discarded => c.discarded += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TxCounts {
    pub committed: usize,
    pub pending: usize,
    pub expired: usize,
    pub discarded: usize,
}

impl TxCounts {
    pub fn total(&self) -> usize {
        self.committed + self.pending + self.expired + self.discarded
    }
}

/// Full post-run scan: chain links plus transaction conservation. Every
/// generated transaction must be in exactly one state, committed ones in
/// exactly the block the ledger names, pending ones in the mempool.
pub fn audit(chain: &Chain, ledger: &TxLedger, mempool: &Mempool) -> Result<TxCounts, ChainError> {
    chain.verify_links()?;

    let mut committed_at: BTreeMap<TxId, u64> = BTreeMap::new();
    for b in chain.blocks() {
        for id in &b.tx_ids {
            if committed_at.insert(*id, b.height).is_some() {
                return Err(ChainError::DoubleCommit(*id));
            }
            if ledger.status(*id).is_none() {
                return Err(ChainError::UnknownTx(*id));
            }
        }
    }
    let pending: BTreeSet<TxId> = mempool.iter().map(|t| t.tx_id).collect();
    for id in &pending {
        if ledger.status(*id).is_none() {
            return Err(ChainError::UnknownTx(*id));
        }
    }

    for (id, (_, status)) in &ledger.txs {
        let in_chain = committed_at.get(id).copied();
        let in_pool = pending.contains(id);
        let consistent = match status {
            TxStatus::Committed { height } => in_chain == Some(*height) && !in_pool,
            TxStatus::Pending => in_chain.is_none() && in_pool,
            TxStatus::Expired | TxStatus::Discarded => in_chain.is_none() && !in_pool,
        };
        if !consistent {
            return Err(ChainError::Conservation {
                tx: *id,
                ledger: *status,
            });
        }
    }
    Ok(ledger.counts())
}
