//! Synthetic chain driver: a wallet population that mines coinbase blocks,
//! then spends uniformly sampled coins, plus double-spend injection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{
    sha256, Block, BlockHeader, BodyRecord, ChainError, ChainState, Coin, Hash32, Transaction, COIN_BYTES,
};
use crate::rsa_group::{GroupError, GroupParams, Reader};
use crate::wallet::{TxWitness, Wallet, WalletError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("block {height}: {source}")]
    Block { height: u64, source: ChainError },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub type Result<T> = std::result::Result<T, WorkloadError>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadConfig {
    pub txs_per_block: u32,
    pub inputs_per_tx: u32,
    pub outputs_per_tx: u32,
    pub owners: u32,
    /// Leading blocks that only contain coinbase transactions.
    pub coinbase_blocks: u64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { txs_per_block: 20, inputs_per_tx: 2, outputs_per_tx: 2, owners: 8, coinbase_blocks: 2, seed: 0 }
    }
}

pub fn owner_tag(i: u32) -> Hash32 {
    sha256(&[b"owner", &i.to_be_bytes()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub height: u64,
    pub txs: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub update_seconds: f64,
    pub verify_seconds: f64,
    pub block_bytes: usize,
    pub proof_bytes: usize,
}

/// A spend seen on chain, kept so it can be replayed later.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpendRecord {
    pub coin: Coin,
    pub witness: TxWitness,
    pub spent_height: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttackKind {
    /// Replays a spend whose witness is still inside the cache window.
    CacheHit,
    /// Replays a spend whose witness has fallen out of the window.
    StaleWitness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub kind: AttackKind,
    pub witness_height: u64,
    pub spent_height: u64,
    pub tip: u64,
    /// Verdict of `validate_transaction` on the replayed transaction.
    pub standalone: std::result::Result<bool, ChainError>,
    /// Error from applying a block that carries it.
    pub block_error: Option<ChainError>,
}

impl Injection {
    pub fn rejected(&self) -> bool {
        !matches!(self.standalone, Ok(true)) && self.block_error.is_some()
    }
}

pub struct Simulation {
    state: ChainState,
    wallets: Vec<Wallet>,
    cfg: WorkloadConfig,
    rng: ChaCha8Rng,
    spends: Vec<SpendRecord>,
    bodies: Vec<BodyRecord>,
}

impl Simulation {
    pub fn new(state: ChainState, cfg: WorkloadConfig) -> Self {
        let wallets = (0..cfg.owners).map(|i| Wallet::new(owner_tag(i))).collect();
        Self::resume(state, wallets, cfg)
    }

    /// Continues from stored state; the RNG is keyed by seed and tip height.
    pub fn resume(state: ChainState, wallets: Vec<Wallet>, cfg: WorkloadConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ state.tip_height().rotate_left(32));
        Self { state, wallets, cfg, rng, spends: Vec::new(), bodies: Vec::new() }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn wallets(&self) -> &[Wallet] {
        &self.wallets
    }

    pub fn spends(&self) -> &[SpendRecord] {
        &self.spends
    }

    /// Body records of the blocks produced by this simulation.
    pub fn bodies(&self) -> &[BodyRecord] {
        &self.bodies
    }

    pub fn into_parts(self) -> (ChainState, Vec<Wallet>, Vec<BodyRecord>) {
        (self.state, self.wallets, self.bodies)
    }

    fn random_owner(&mut self) -> Hash32 {
        owner_tag(self.rng.gen_range(0..self.cfg.owners.max(1)))
    }

    fn coinbase(&mut self, height: u64, nonce: u64) -> Transaction {
        let outs: Vec<(u64, Hash32)> =
            (0..self.cfg.outputs_per_tx.max(1)).map(|_| (self.rng.gen_range(1..=1000), self.random_owner())).collect();
        Transaction::coinbase(height, nonce, &outs)
    }

    fn next_transactions(&mut self, height: u64) -> Vec<Transaction> {
        let n = self.cfg.txs_per_block as usize;
        if height <= self.cfg.coinbase_blocks || self.cfg.inputs_per_tx == 0 {
            return (0..n as u64).map(|i| self.coinbase(height, i)).collect();
        }
        let mut pool: Vec<(usize, usize)> = self
            .wallets
            .iter()
            .enumerate()
            .flat_map(|(w, wal)| wal.coins().iter().enumerate().filter(|(_, c)| !c.spent).map(move |(i, _)| (w, i)))
            .collect();
        pool.shuffle(&mut self.rng);
        let k = self.cfg.inputs_per_tx as usize;
        let mut txs = Vec::with_capacity(n);
        for chunk in pool.chunks_exact(k).take(n) {
            let inputs: Vec<(Coin, TxWitness)> = chunk
                .iter()
                .map(|&(w, i)| {
                    let c = &self.wallets[w].coins()[i];
                    (c.coin.clone(), c.witness.clone())
                })
                .collect();
            let total: u64 = inputs.iter().map(|(c, _)| c.value).sum();
            let outs = self.cfg.outputs_per_tx.max(1) as u64;
            let outputs: Vec<(u64, Hash32)> = (0..outs)
                .map(|j| {
                    let share = total / outs + if j == 0 { total % outs } else { 0 };
                    (share, self.random_owner())
                })
                .collect();
            txs.push(Transaction::spend(inputs, &outputs));
        }
        if txs.is_empty() {
            txs.push(self.coinbase(height, 0));
        }
        txs
    }

    /// Builds, validates and applies one honest block, then rolls every
    /// wallet forward.
    pub fn step(&mut self) -> Result<BlockReport> {
        let height = self.state.tip_height() + 1;
        let wrap = |source| WorkloadError::Block { height, source };
        let txs = self.next_transactions(height);
        for tx in &txs {
            if !self.state.validate_transaction(tx).map_err(wrap)? {
                return Err(wrap(ChainError::InvalidTransaction(0, "honest wallet produced a bad witness".into())));
            }
        }
        let t0 = Instant::now();
        let block = self.state.assemble_unchecked(txs, height).map_err(wrap)?;
        let update_seconds = t0.elapsed().as_secs_f64();

        let prev = self.state.tip().clone();
        let t1 = Instant::now();
        let digest = self.state.apply_block(&block).map_err(wrap)?;
        let verify_seconds = t1.elapsed().as_secs_f64();

        for tx in &block.transactions {
            for (coin, witness) in tx.inputs.iter().zip(&tx.witnesses) {
                self.spends.push(SpendRecord { coin: coin.clone(), witness: witness.clone(), spent_height: height });
            }
        }
        let params = self.state.protocol().params().clone();
        self.wallets.par_iter_mut().try_for_each(|w| -> Result<()> {
            w.observe_block(&block, &digest, &prev, &params)?;
            w.prune();
            Ok(())
        })?;
        self.bodies.push(BodyRecord::from_block(&block, &digest, &params));

        let (block_bytes, proof_bytes) = block_size(&block, &params);
        Ok(BlockReport {
            height,
            txs: block.transactions.len(),
            inputs: digest.input_primes.len(),
            outputs: digest.output_primes.len(),
            update_seconds,
            verify_seconds,
            block_bytes,
            proof_bytes,
        })
    }

    /// Replays an earlier spend of the requested kind, if one exists, and
    /// reports how the validator treats it. Chain state is left untouched.
    pub fn inject(&mut self, kind: AttackKind) -> Result<Option<Injection>> {
        let tip = self.state.tip_height();
        let depth = self.state.protocol().cache_depth();
        let fits = |r: &SpendRecord| {
            let h = r.witness.witness_height;
            match kind {
                AttackKind::CacheHit => h + depth >= tip && r.spent_height > h,
                AttackKind::StaleWitness => h + depth < tip,
            }
        };
        let candidates: Vec<&SpendRecord> = self.spends.iter().filter(|r| fits(r)).collect();
        let Some(&rec) = candidates.choose(&mut self.rng) else {
            return Ok(None);
        };
        let rec = rec.clone();
        let thief = self.random_owner();
        let tx = Transaction::spend(vec![(rec.coin.clone(), rec.witness.clone())], &[(rec.coin.value, thief)]);
        let standalone = self.state.validate_transaction(&tx);
        let block = self.state.assemble_unchecked(vec![tx], tip + 1)?;
        let block_error = self.state.clone().apply_block(&block).err();
        Ok(Some(Injection {
            kind,
            witness_height: rec.witness.witness_height,
            spent_height: rec.spent_height,
            tip,
            standalone,
            block_error,
        }))
    }

    /// Spends every unspent wallet coin on paper and checks each spend
    /// validates at the tip. Returns how many coins were checked.
    pub fn check_wallets_at_tip(&self) -> Result<usize> {
        let coins: Vec<&crate::wallet::OwnedCoin> = self.wallets.iter().flat_map(|w| w.unspent()).collect();
        let bad = coins
            .par_iter()
            .map(|c| {
                let tx = Transaction::spend(vec![(c.coin.clone(), c.witness.clone())], &[(c.coin.value, c.coin.owner)]);
                self.state.validate_transaction(&tx)
            })
            .position_any(|v| v != Ok(true));
        if let Some(i) = bad {
            let h = coins[i].witness.witness_height;
            return Err(ChainError::InvalidTransaction(i, format!("wallet coin with witness height {h} fails at tip")).into());
        }
        Ok(coins.len())
    }
}

/// Serialized block size and the share taken by input proofs.
pub fn block_size(block: &Block, params: &GroupParams) -> (usize, usize) {
    let env = TxWitness::envelope_len(params);
    let proof = TxWitness::existence_proof_len(params) + TxWitness::unspent_proof_len(params);
    let mut total = BlockHeader::wire_len(params);
    let mut proofs = 0;
    for tx in &block.transactions {
        total += 8 + COIN_BYTES * (tx.inputs.len() + tx.outputs.len()) + env * tx.inputs.len();
        proofs += proof * tx.inputs.len();
    }
    (total, proofs)
}

/// `u32 count`, then per wallet `u64 length | wallet bytes`.
pub fn wallets_to_bytes(wallets: &[Wallet], params: &GroupParams) -> Result<Vec<u8>> {
    let mut out = (wallets.len() as u32).to_be_bytes().to_vec();
    for w in wallets {
        let b = w.to_bytes(params)?;
        out.extend_from_slice(&(b.len() as u64).to_be_bytes());
        out.extend_from_slice(&b);
    }
    Ok(out)
}

pub fn wallets_from_bytes(bytes: &[u8], state: &ChainState) -> Result<Vec<Wallet>> {
    let mut r = Reader::new(bytes);
    let n = r.u32()?;
    let proto = state.protocol();
    (0..n)
        .map(|_| {
            let len = r.u64()? as usize;
            let raw = r.take(len)?;
            Ok(Wallet::from_bytes(raw, state.headers(), |c| proto.coin_prime(c), proto.params())?)
        })
        .collect()
}
