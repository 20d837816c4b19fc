//! Stateless chain state: coins and transactions, block headers carrying the
//! TXO/STXO commitments with their NI-PoE proofs, the append-only header
//! store and the STXO cache. A validator keeps nothing else.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rug::Integer;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accumulator::{
    self, batch_add, prove_ni_poe_with, verify_mem_witness, verify_ni_poe_with, verify_nonmem_witness,
    AccumulatorError, Commitment, NiPoeProof, NonMemWitness,
};
use crate::rsa_group::{product, GroupError, GroupParams, HashToPrime, PrimeMapper, PrimeRep, Reader};
use crate::wallet::TxWitness;

pub type Hash32 = [u8; 32];

/// Default STXO cache depth in blocks.
pub const DEFAULT_CACHE_DEPTH: u64 = 6;

/// Byte length of a canonical coin encoding.
pub const COIN_BYTES: usize = 32 + 4 + 8 + 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("coin appears twice in the block's {0}")]
    DuplicateCoin(&'static str),
    #[error("malformed transaction: {0}")]
    MalformedTransaction(&'static str),
    #[error("witness height {h} is older than tip {tip} minus cache depth {depth}")]
    StaleWitness { h: u64, tip: u64, depth: u64 },
    #[error("witness height {h} is above tip {tip}")]
    FutureWitness { h: u64, tip: u64 },
    #[error("height {0} is not in the header store")]
    UnknownHeight(u64),
    #[error("creation height {k} is above witness height {h}")]
    CreatedAfterWitness { k: u64, h: u64 },
    #[error("commitment proofs do not verify")]
    InvalidCommitmentProof,
    #[error("transaction {0} is invalid: {1}")]
    InvalidTransaction(usize, String),
    #[error("header does not extend the tip: {0}")]
    BrokenChainLink(&'static str),
    #[error("transaction root does not match the block body")]
    TxRootMismatch,
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl From<std::io::Error> for ChainError {
    fn from(e: std::io::Error) -> Self {
        ChainError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ChainError>;

pub fn sha256(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Protocol context shared by miners, validators and wallets: group
/// parameters, the coin and challenge prime mappers, and the cache depth M.
#[derive(Clone)]
pub struct Protocol {
    params: GroupParams,
    coin_mapper: Arc<dyn PrimeMapper>,
    poe_mapper: Arc<dyn PrimeMapper>,
    cache_depth: u64,
}

impl std::fmt::Debug for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Protocol")
            .field("params", &self.params)
            .field("cache_depth", &self.cache_depth)
            .finish_non_exhaustive()
    }
}

impl Protocol {
    pub fn new(params: GroupParams) -> Self {
        let coin_mapper = Arc::new(HashToPrime::for_purpose(&params, "coin"));
        let poe_mapper = Arc::new(accumulator::nipoe_mapper(&params));
        Self { params, coin_mapper, poe_mapper, cache_depth: DEFAULT_CACHE_DEPTH }
    }

    pub fn with_cache_depth(mut self, depth: u64) -> Self {
        assert!(depth >= 1, "cache depth must be at least one block");
        self.cache_depth = depth;
        self
    }

    pub fn with_coin_mapper(mut self, mapper: Arc<dyn PrimeMapper>) -> Self {
        self.coin_mapper = mapper;
        self
    }

    pub fn with_poe_mapper(mut self, mapper: Arc<dyn PrimeMapper>) -> Self {
        self.poe_mapper = mapper;
        self
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn cache_depth(&self) -> u64 {
        self.cache_depth
    }

    pub fn poe_mapper(&self) -> &dyn PrimeMapper {
        self.poe_mapper.as_ref()
    }

    pub fn coin_prime(&self, coin: &Coin) -> Result<PrimeRep> {
        Ok(self.coin_mapper.map(&coin.encode())?)
    }

    pub fn coin_primes(&self, coins: &[&Coin]) -> Result<Vec<PrimeRep>> {
        coins.par_iter().map(|c| self.coin_prime(c)).collect()
    }

    /// Header at height 0 with both commitments equal to g.
    pub fn genesis(&self) -> (BlockHeader, StxoCache) {
        let g = Commitment(self.params.generator());
        let header = BlockHeader {
            height: 0,
            prev_hash: [0; 32],
            tx_root: [0; 32],
            txo_c: g.clone(),
            stxo_c: g,
            pi_txo: NiPoeProof::trivial(),
            pi_stxo: NiPoeProof::trivial(),
            timestamp: 0,
        };
        (header, StxoCache::new(self.cache_depth))
    }
}

/// An output: created by transaction `txid` at position `index`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coin {
    pub txid: Hash32,
    pub index: u32,
    pub value: u64,
    pub owner: Hash32,
}

impl Coin {
    /// `txid | index u32 | value u64 | owner`, all big-endian.
    pub fn encode(&self) -> [u8; COIN_BYTES] {
        let mut out = [0u8; COIN_BYTES];
        out[..32].copy_from_slice(&self.txid);
        out[32..36].copy_from_slice(&self.index.to_be_bytes());
        out[36..44].copy_from_slice(&self.value.to_be_bytes());
        out[44..].copy_from_slice(&self.owner);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != COIN_BYTES {
            return Err(GroupError::Decode(format!("coin must be {COIN_BYTES} bytes")).into());
        }
        Ok(Self {
            txid: bytes[..32].try_into().unwrap(),
            index: u32::from_be_bytes(bytes[32..36].try_into().unwrap()),
            value: u64::from_be_bytes(bytes[36..44].try_into().unwrap()),
            owner: bytes[44..].try_into().unwrap(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub inputs: Vec<Coin>,
    pub outputs: Vec<Coin>,
    pub witnesses: Vec<TxWitness>,
}

impl Transaction {
    /// A coinbase paying `outputs` (value, owner). `height` and `nonce` make
    /// the coin encodings unique chain-wide.
    pub fn coinbase(height: u64, nonce: u64, outputs: &[(u64, Hash32)]) -> Self {
        let txid = sha256(&[b"coinbase", &height.to_be_bytes(), &nonce.to_be_bytes()]);
        Self { inputs: vec![], outputs: make_outputs(txid, outputs), witnesses: vec![] }
    }

    /// Spends `inputs` (each with its witness). Output txids derive from the
    /// input encodings, which are unique because a coin is spent once.
    pub fn spend(inputs: Vec<(Coin, TxWitness)>, outputs: &[(u64, Hash32)]) -> Self {
        let mut h = Sha256::new();
        h.update(b"spend");
        for (c, _) in &inputs {
            h.update(c.encode());
        }
        let txid: Hash32 = h.finalize().into();
        let (inputs, witnesses) = inputs.into_iter().unzip();
        Self { inputs, outputs: make_outputs(txid, outputs), witnesses }
    }

    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Hash over inputs and outputs; witnesses are excluded.
    pub fn id(&self) -> Hash32 {
        let mut h = Sha256::new();
        h.update(b"tx");
        h.update((self.inputs.len() as u32).to_be_bytes());
        for c in &self.inputs {
            h.update(c.encode());
        }
        h.update((self.outputs.len() as u32).to_be_bytes());
        for c in &self.outputs {
            h.update(c.encode());
        }
        h.finalize().into()
    }

    pub fn check_structure(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(ChainError::MalformedTransaction("no outputs"));
        }
        if self.witnesses.len() != self.inputs.len() {
            return Err(ChainError::MalformedTransaction("witness count differs from input count"));
        }
        let mut seen = HashSet::new();
        for c in self.inputs.iter().chain(&self.outputs) {
            if !seen.insert(c.encode()) {
                return Err(ChainError::MalformedTransaction("duplicate coin"));
            }
        }
        Ok(())
    }
}

fn make_outputs(txid: Hash32, outputs: &[(u64, Hash32)]) -> Vec<Coin> {
    outputs
        .iter()
        .enumerate()
        .map(|(i, &(value, owner))| Coin { txid, index: i as u32, value, owner })
        .collect()
}

/// Bitcoin-style Merkle root (odd levels duplicate their last node); the
/// empty list maps to all zeros.
pub fn merkle_root(leaves: &[Hash32]) -> Hash32 {
    if leaves.is_empty() {
        return [0; 32];
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                sha256(&[&pair[0], right])
            })
            .collect();
    }
    level[0]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash32,
    pub tx_root: Hash32,
    pub txo_c: Commitment,
    pub stxo_c: Commitment,
    pub pi_txo: NiPoeProof,
    pub pi_stxo: NiPoeProof,
    pub timestamp: u64,
}

impl BlockHeader {
    /// Wire size for a modulus whose elements take `element_len` bytes
    /// (1616 at 3072 bits).
    pub fn wire_len(params: &GroupParams) -> usize {
        8 + 32 + 32 + 4 * params.element_len() + 8
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::wire_len(params));
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.prev_hash);
        out.extend_from_slice(&self.tx_root);
        out.extend_from_slice(&self.txo_c.to_bytes(params));
        out.extend_from_slice(&self.stxo_c.to_bytes(params));
        out.extend_from_slice(&self.pi_txo.to_bytes(params));
        out.extend_from_slice(&self.pi_stxo.to_bytes(params));
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self> {
        if bytes.len() != Self::wire_len(params) {
            return Err(GroupError::Decode(format!(
                "header must be {} bytes, got {}",
                Self::wire_len(params),
                bytes.len()
            ))
            .into());
        }
        let w = params.element_len();
        let mut r = Reader::new(bytes);
        let height = r.u64()?;
        let prev_hash = r.take(32)?.try_into().unwrap();
        let tx_root = r.take(32)?.try_into().unwrap();
        let txo_c = Commitment::from_bytes(r.take(w)?, params)?;
        let stxo_c = Commitment::from_bytes(r.take(w)?, params)?;
        let pi_txo = NiPoeProof::from_bytes(r.take(w)?, params)?;
        let pi_stxo = NiPoeProof::from_bytes(r.take(w)?, params)?;
        let timestamp = r.u64()?;
        Ok(Self { height, prev_hash, tx_root, txo_c, stxo_c, pi_txo, pi_stxo, timestamp })
    }

    pub fn hash(&self, params: &GroupParams) -> Hash32 {
        sha256(&[&self.to_bytes(params)])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn tx_root(txs: &[Transaction]) -> Hash32 {
        let ids: Vec<Hash32> = txs.iter().map(Transaction::id).collect();
        merkle_root(&ids)
    }

    /// The flat prime lists wallets need to roll their witnesses forward.
    pub fn digest(&self, proto: &Protocol) -> Result<BlockDigest> {
        let (outputs, inputs) = block_primes(proto, &self.transactions)?;
        Ok(BlockDigest { height: self.header.height, output_primes: outputs, input_primes: inputs })
    }
}

/// Per-block witness-update feed: output and input primes in block order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockDigest {
    pub height: u64,
    pub output_primes: Vec<PrimeRep>,
    pub input_primes: Vec<PrimeRep>,
}

/// Prime representatives of all outputs and all inputs of a block, with the
/// duplicate-coin rule enforced on each side.
pub fn block_primes(proto: &Protocol, txs: &[Transaction]) -> Result<(Vec<PrimeRep>, Vec<PrimeRep>)> {
    let outputs: Vec<&Coin> = txs.iter().flat_map(|t| &t.outputs).collect();
    let inputs: Vec<&Coin> = txs.iter().flat_map(|t| &t.inputs).collect();
    let (out_primes, in_primes) = rayon::join(|| primes_unique(proto, &outputs, "outputs"), || {
        primes_unique(proto, &inputs, "inputs")
    });
    Ok((out_primes?, in_primes?))
}

fn primes_unique(proto: &Protocol, coins: &[&Coin], side: &'static str) -> Result<Vec<PrimeRep>> {
    let mut seen = HashSet::with_capacity(coins.len());
    if !coins.iter().all(|c| seen.insert(c.encode())) {
        return Err(ChainError::DuplicateCoin(side));
    }
    let primes = proto.coin_primes(coins)?;
    let mut distinct = HashSet::with_capacity(primes.len());
    if !primes.iter().all(|p| distinct.insert(p)) {
        return Err(ChainError::DuplicateCoin(side));
    }
    Ok(primes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitmentUpdate {
    pub txo_c: Commitment,
    pub stxo_c: Commitment,
    pub pi_txo: NiPoeProof,
    pub pi_stxo: NiPoeProof,
}

/// Miner side: `TXO_C' = TXO_C^(prod outputs)`, `STXO_C' = STXO_C^(prod inputs)`
/// with an NI-PoE for each. The two sides are computed independently.
pub fn update_commitments(proto: &Protocol, prev: &BlockHeader, txs: &[Transaction]) -> Result<CommitmentUpdate> {
    let (outs, ins) = block_primes(proto, txs)?;
    let params = proto.params();
    let advance = |acc: &Commitment, primes: &[PrimeRep]| -> Result<(Commitment, NiPoeProof)> {
        let x = product(primes);
        let next = batch_add(acc, primes, params);
        let proof = prove_ni_poe_with(proto.poe_mapper(), &x, acc.element(), next.element(), params)?;
        Ok((next, proof))
    };
    let (txo, stxo) = rayon::join(|| advance(&prev.txo_c, &outs), || advance(&prev.stxo_c, &ins));
    let (txo_c, pi_txo) = txo?;
    let (stxo_c, pi_stxo) = stxo?;
    Ok(CommitmentUpdate { txo_c, stxo_c, pi_txo, pi_stxo })
}

/// Validator side: recompute both prime products and check both proofs.
/// Never raises anything to the full product.
pub fn verify_commitments(proto: &Protocol, prev: &BlockHeader, txs: &[Transaction], candidate: &BlockHeader) -> bool {
    let Ok((outs, ins)) = block_primes(proto, txs) else {
        return false;
    };
    verify_commitments_with_primes(proto, prev, &outs, &ins, candidate)
}

pub(crate) fn verify_commitments_with_primes(
    proto: &Protocol,
    prev: &BlockHeader,
    outs: &[PrimeRep],
    ins: &[PrimeRep],
    candidate: &BlockHeader,
) -> bool {
    let params = proto.params();
    let check = |x: Integer, from: &Commitment, to: &Commitment, proof: &NiPoeProof| {
        verify_ni_poe_with(proto.poe_mapper(), &x, from.element(), to.element(), proof, params)
    };
    let (b1, b2) = rayon::join(
        || check(product(outs), &prev.txo_c, &candidate.txo_c, &candidate.pi_txo),
        || check(product(ins), &prev.stxo_c, &candidate.stxo_c, &candidate.pi_stxo),
    );
    b1 && b2
}

/// Append-only header chain, contiguous from height 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderStore {
    headers: Vec<BlockHeader>,
}

impl HeaderStore {
    pub fn new(genesis: BlockHeader) -> Self {
        assert_eq!(genesis.height, 0, "header store must start at genesis");
        Self { headers: vec![genesis] }
    }

    pub fn tip(&self) -> &BlockHeader {
        self.headers.last().expect("store is never empty")
    }

    pub fn tip_height(&self) -> u64 {
        self.tip().height
    }

    pub fn get(&self, height: u64) -> Option<&BlockHeader> {
        self.headers.get(usize::try_from(height).ok()?)
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = &BlockHeader> {
        self.headers.iter()
    }

    /// Checks height contiguity and the hash link before appending.
    pub fn push(&mut self, header: BlockHeader, params: &GroupParams) -> Result<()> {
        let tip = self.tip();
        if header.height != tip.height + 1 {
            return Err(ChainError::BrokenChainLink("height is not tip + 1"));
        }
        if header.prev_hash != tip.hash(params) {
            return Err(ChainError::BrokenChainLink("prev_hash does not match tip"));
        }
        self.headers.push(header);
        Ok(())
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        self.headers.iter().flat_map(|h| h.to_bytes(params)).collect()
    }

    /// Parses a record file, re-checking every link.
    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self> {
        let len = BlockHeader::wire_len(params);
        if bytes.is_empty() || bytes.len() % len != 0 {
            return Err(GroupError::Decode("header file is not a whole number of records".into()).into());
        }
        let mut records = bytes.chunks(len);
        let genesis = BlockHeader::from_bytes(records.next().unwrap(), params)?;
        if genesis.height != 0 {
            return Err(ChainError::BrokenChainLink("first record is not genesis"));
        }
        let mut store = Self::new(genesis);
        for rec in records {
            store.push(BlockHeader::from_bytes(rec, params)?, params)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path, params: &GroupParams) -> Result<()> {
        std::fs::write(path, self.to_bytes(params))?;
        Ok(())
    }

    pub fn load(path: &Path, params: &GroupParams) -> Result<Self> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf, params)
    }

    /// Appends one record to an existing header file.
    pub fn append_record(path: &Path, header: &BlockHeader, params: &GroupParams) -> Result<()> {
        let mut f = OpenOptions::new().append(true).create(true).open(path)?;
        f.write_all(&header.to_bytes(params))?;
        Ok(())
    }
}

/// Spent-output primes of the latest M blocks, keyed by height.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StxoCache {
    window: BTreeMap<u64, BTreeSet<PrimeRep>>,
    capacity: u64,
}

impl StxoCache {
    pub fn new(capacity: u64) -> Self {
        Self { window: BTreeMap::new(), capacity }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn bucket_count(&self) -> usize {
        self.window.len()
    }

    pub fn heights(&self) -> impl Iterator<Item = u64> + '_ {
        self.window.keys().copied()
    }

    pub fn bucket(&self, height: u64) -> Option<&BTreeSet<PrimeRep>> {
        self.window.get(&height)
    }

    /// Records the inputs of block `height` and evicts everything at or
    /// below `height - M`.
    pub fn insert(&mut self, height: u64, primes: impl IntoIterator<Item = PrimeRep>) {
        self.window.insert(height, primes.into_iter().collect());
        if let Some(cutoff) = height.checked_sub(self.capacity) {
            self.window = self.window.split_off(&(cutoff + 1));
        }
    }

    /// True if `prime` was spent in any cached block in `(after, through]`.
    pub fn spent_between(&self, prime: &PrimeRep, after: u64, through: u64) -> bool {
        if after >= through {
            return false;
        }
        self.window.range(after + 1..=through).any(|(_, set)| set.contains(prime))
    }

    /// `height u64 | count u32 | count x width-byte primes` per bucket.
    pub fn to_bytes(&self, prime_width: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for (height, set) in &self.window {
            out.extend_from_slice(&height.to_be_bytes());
            out.extend_from_slice(&(set.len() as u32).to_be_bytes());
            for p in set {
                out.extend_from_slice(&p.to_bytes(prime_width));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], prime_width: usize, capacity: u64) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut cache = Self::new(capacity);
        while !r.is_empty() {
            let height = r.u64()?;
            let count = r.u32()? as usize;
            let mut set = BTreeSet::new();
            for _ in 0..count {
                set.insert(PrimeRep::from_bytes(r.take(prime_width)?)?);
            }
            cache.window.insert(height, set);
        }
        Ok(cache)
    }
}

/// Why a spending input was refused. Hard errors (stale, future, unknown
/// height) surface as [`ChainError`]; these are plain verification failures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    Membership(usize),
    NonMembership(usize),
    SpentAfterWitness(usize),
}

/// Checks every input's witness against the headers at its witness height
/// and the STXO cache. Reads only headers, the cache and the witness.
pub fn check_transaction(
    proto: &Protocol,
    tx: &Transaction,
    tip: u64,
    headers: &HeaderStore,
    cache: &StxoCache,
) -> Result<std::result::Result<(), Rejection>> {
    tx.check_structure()?;
    let params = proto.params();
    let depth = proto.cache_depth();
    for (i, (coin, wit)) in tx.inputs.iter().zip(&tx.witnesses).enumerate() {
        let (k, h) = (wit.creation_height, wit.witness_height);
        if h > tip {
            return Err(ChainError::FutureWitness { h, tip });
        }
        if h + depth < tip {
            return Err(ChainError::StaleWitness { h, tip, depth });
        }
        if k > h {
            return Err(ChainError::CreatedAfterWitness { k, h });
        }
        let at_h = headers.get(h).ok_or(ChainError::UnknownHeight(h))?;
        let base = if k == 0 {
            params.generator()
        } else {
            headers.get(k - 1).ok_or(ChainError::UnknownHeight(k - 1))?.stxo_c.element().clone()
        };
        let t = proto.coin_prime(coin)?;
        if !verify_mem_witness(&wit.mem, &t, &at_h.txo_c, params) {
            return Ok(Err(Rejection::Membership(i)));
        }
        let u = NonMemWitness { d: wit.nonmem.d.clone(), b: wit.nonmem.b.clone(), base };
        if !verify_nonmem_witness(&u, &t, &at_h.stxo_c, params) {
            return Ok(Err(Rejection::NonMembership(i)));
        }
        if cache.spent_between(&t, h, tip) {
            return Ok(Err(Rejection::SpentAfterWitness(i)));
        }
    }
    Ok(Ok(()))
}

/// Boolean form of [`check_transaction`].
pub fn validate_transaction(
    proto: &Protocol,
    tx: &Transaction,
    tip: u64,
    headers: &HeaderStore,
    cache: &StxoCache,
) -> Result<bool> {
    Ok(check_transaction(proto, tx, tip, headers, cache)?.is_ok())
}

/// A validator's entire persistent state: headers and the STXO cache.
#[derive(Clone, Debug)]
pub struct ChainState {
    proto: Protocol,
    headers: HeaderStore,
    cache: StxoCache,
}

impl ChainState {
    pub fn genesis(proto: Protocol) -> Self {
        let (header, cache) = proto.genesis();
        Self { headers: HeaderStore::new(header), cache, proto }
    }

    pub fn from_parts(proto: Protocol, headers: HeaderStore, cache: StxoCache) -> Self {
        Self { proto, headers, cache }
    }

    pub fn protocol(&self) -> &Protocol {
        &self.proto
    }

    pub fn headers(&self) -> &HeaderStore {
        &self.headers
    }

    pub fn cache(&self) -> &StxoCache {
        &self.cache
    }

    pub fn tip(&self) -> &BlockHeader {
        self.headers.tip()
    }

    pub fn tip_height(&self) -> u64 {
        self.headers.tip_height()
    }

    pub fn validate_transaction(&self, tx: &Transaction) -> Result<bool> {
        validate_transaction(&self.proto, tx, self.tip_height(), &self.headers, &self.cache)
    }

    fn check_all(&self, txs: &[Transaction]) -> Result<()> {
        let tip = self.tip_height();
        let verdicts: Vec<(usize, Result<std::result::Result<(), Rejection>>)> = txs
            .par_iter()
            .enumerate()
            .map(|(i, tx)| (i, check_transaction(&self.proto, tx, tip, &self.headers, &self.cache)))
            .collect();
        for (i, v) in verdicts {
            match v {
                Ok(Ok(())) => {}
                Ok(Err(r)) => return Err(ChainError::InvalidTransaction(i, format!("{r:?}"))),
                Err(e) => return Err(ChainError::InvalidTransaction(i, e.to_string())),
            }
        }
        Ok(())
    }

    /// Miner side: re-validate the transactions against the current tip and
    /// seal a block on top of it. No proof-of-work.
    pub fn build_block(&self, txs: Vec<Transaction>, timestamp: u64) -> Result<Block> {
        self.check_all(&txs)?;
        self.assemble_unchecked(txs, timestamp)
    }

    /// Seals a block without validating its transactions, as a dishonest
    /// miner would. Commitments and proofs are still computed correctly.
    pub fn assemble_unchecked(&self, txs: Vec<Transaction>, timestamp: u64) -> Result<Block> {
        let prev = self.tip();
        let up = update_commitments(&self.proto, prev, &txs)?;
        let header = BlockHeader {
            height: prev.height + 1,
            prev_hash: prev.hash(self.proto.params()),
            tx_root: Block::tx_root(&txs),
            txo_c: up.txo_c,
            stxo_c: up.stxo_c,
            pi_txo: up.pi_txo,
            pi_stxo: up.pi_stxo,
            timestamp,
        };
        Ok(Block { header, transactions: txs })
    }

    /// Validator side: link, transaction root, commitment proofs and every
    /// transaction are checked before the header is appended and the block's
    /// inputs enter the cache. The block body is then dropped.
    pub fn apply_block(&mut self, block: &Block) -> Result<BlockDigest> {
        let params = self.proto.params();
        let tip = self.tip();
        if block.header.height != tip.height + 1 {
            return Err(ChainError::BrokenChainLink("height is not tip + 1"));
        }
        if block.header.prev_hash != tip.hash(params) {
            return Err(ChainError::BrokenChainLink("prev_hash does not match tip"));
        }
        if block.header.tx_root != Block::tx_root(&block.transactions) {
            return Err(ChainError::TxRootMismatch);
        }
        for (i, tx) in block.transactions.iter().enumerate() {
            tx.check_structure().map_err(|e| ChainError::InvalidTransaction(i, e.to_string()))?;
        }
        let (outs, ins) = block_primes(&self.proto, &block.transactions)?;
        if !verify_commitments_with_primes(&self.proto, tip, &outs, &ins, &block.header) {
            return Err(ChainError::InvalidCommitmentProof);
        }
        self.check_all(&block.transactions)?;
        self.headers.push(block.header.clone(), params)?;
        self.cache.insert(block.header.height, ins.iter().cloned());
        Ok(BlockDigest { height: block.header.height, output_primes: outs, input_primes: ins })
    }
}

/// Block-body digest persisted next to the header file so a stored chain can
/// be replayed: header hash, transaction ids and the two prime lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BodyRecord {
    pub height: u64,
    pub header_hash: Hash32,
    pub txids: Vec<Hash32>,
    pub output_primes: Vec<PrimeRep>,
    pub input_primes: Vec<PrimeRep>,
}

impl BodyRecord {
    pub fn from_block(block: &Block, digest: &BlockDigest, params: &GroupParams) -> Self {
        Self {
            height: block.header.height,
            header_hash: block.header.hash(params),
            txids: block.transactions.iter().map(Transaction::id).collect(),
            output_primes: digest.output_primes.clone(),
            input_primes: digest.input_primes.clone(),
        }
    }

    pub fn to_bytes(&self, prime_width: usize) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.header_hash);
        out.extend_from_slice(&(self.txids.len() as u32).to_be_bytes());
        for id in &self.txids {
            out.extend_from_slice(id);
        }
        for list in [&self.output_primes, &self.input_primes] {
            out.extend_from_slice(&(list.len() as u32).to_be_bytes());
            for p in list {
                out.extend_from_slice(&p.to_bytes(prime_width));
            }
        }
        out
    }

    pub fn read_all(bytes: &[u8], prime_width: usize) -> Result<Vec<Self>> {
        let mut r = Reader::new(bytes);
        let mut out = Vec::new();
        while !r.is_empty() {
            let height = r.u64()?;
            let header_hash = r.take(32)?.try_into().unwrap();
            let n = r.u32()? as usize;
            let txids = (0..n).map(|_| Ok(r.take(32)?.try_into().unwrap())).collect::<Result<Vec<_>>>()?;
            let mut lists = Vec::with_capacity(2);
            for _ in 0..2 {
                let n = r.u32()? as usize;
                let list = (0..n)
                    .map(|_| Ok(PrimeRep::from_bytes(r.take(prime_width)?)?))
                    .collect::<Result<Vec<_>>>()?;
                lists.push(list);
            }
            let input_primes = lists.pop().unwrap();
            let output_primes = lists.pop().unwrap();
            out.push(Self { height, header_hash, txids, output_primes, input_primes });
        }
        Ok(out)
    }
}

/// Replays stored headers against their body records: heights, hash links,
/// header hashes, transaction roots and both commitment proofs. Returns the
/// STXO cache the replay ends with.
pub fn replay(proto: &Protocol, headers: &HeaderStore, bodies: &[BodyRecord]) -> Result<StxoCache> {
    let params = proto.params();
    let (genesis, mut cache) = proto.genesis();
    if *headers.get(0).ok_or(ChainError::UnknownHeight(0))? != genesis {
        return Err(ChainError::BrokenChainLink("genesis does not match parameters"));
    }
    if bodies.len() + 1 != headers.len() {
        return Err(ChainError::BrokenChainLink("body records do not cover the header chain"));
    }
    for (body, pair) in bodies.iter().zip(headers.headers.windows(2)) {
        let (prev, header) = (&pair[0], &pair[1]);
        if body.height != header.height || header.height != prev.height + 1 {
            return Err(ChainError::BrokenChainLink("height mismatch"));
        }
        if header.prev_hash != prev.hash(params) {
            return Err(ChainError::BrokenChainLink("prev_hash does not match"));
        }
        if header.hash(params) != body.header_hash {
            return Err(ChainError::BrokenChainLink("header hash differs from body record"));
        }
        if header.tx_root != merkle_root(&body.txids) {
            return Err(ChainError::TxRootMismatch);
        }
        if !verify_commitments_with_primes(proto, prev, &body.output_primes, &body.input_primes, header) {
            return Err(ChainError::InvalidCommitmentProof);
        }
        cache.insert(header.height, body.input_primes.iter().cloned());
    }
    Ok(cache)
}

/// Width in bytes of a persisted prime.
pub fn prime_width(params: &GroupParams) -> usize {
    (params.prime_bits() as usize).div_ceil(8)
}
