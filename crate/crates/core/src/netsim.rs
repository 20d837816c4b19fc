//! Event-driven block propagation over a random peer graph.
//!
//! Relay model: a node that has received and validated a block offers it to
//! its peers one upload at a time. A peer that already holds the block, or is
//! already receiving it from someone else, is skipped.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetsimError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),
}

pub type Result<T> = std::result::Result<T, NetsimError>;

/// Per-scheme propagation inputs: proof bytes per transaction and the time
/// a validator needs before relaying.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeProfile {
    pub name: &'static str,
    pub per_tx_proof_bytes: u64,
    pub validation_seconds: f64,
}

pub const BONEH: SchemeProfile = SchemeProfile { name: "boneh", per_tx_proof_bytes: 384, validation_seconds: 0.193 };
pub const MINICHAIN: SchemeProfile =
    SchemeProfile { name: "minichain", per_tx_proof_bytes: 960 + 400, validation_seconds: 0.306 };
pub const COMPACTCHAIN: SchemeProfile =
    SchemeProfile { name: "compactchain", per_tx_proof_bytes: 384 + 400, validation_seconds: 0.303 };

pub const SCHEMES: [SchemeProfile; 3] = [BONEH, MINICHAIN, COMPACTCHAIN];

pub fn scheme_by_name(name: &str) -> Option<SchemeProfile> {
    SCHEMES.into_iter().find(|s| s.name == name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub node_count: u32,
    pub miner_count: u32,
    pub miner_hashrate_weights: Vec<f64>,
    pub upload_mbps: f64,
    pub degree: u32,
    pub block_bytes: u64,
    pub per_tx_proof_bytes: u64,
    pub tx_count: u32,
    pub validation_seconds: f64,
    pub rng_seed: u64,
}

/// Ten weights decaying by a factor 0.7, normalized to one.
pub fn default_hashrate_weights(miners: u32) -> Vec<f64> {
    let raw: Vec<f64> = (0..miners).map(|i| 0.7f64.powi(i as i32)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            node_count: 13_000,
            miner_count: 10,
            miner_hashrate_weights: default_hashrate_weights(10),
            upload_mbps: 50.0,
            degree: 8,
            block_bytes: 250_000,
            per_tx_proof_bytes: COMPACTCHAIN.per_tx_proof_bytes,
            tx_count: 1000,
            validation_seconds: COMPACTCHAIN.validation_seconds,
            rng_seed: 0,
        }
    }
}

impl NetConfig {
    pub fn for_scheme(scheme: SchemeProfile) -> Self {
        Self::default().with_scheme(scheme)
    }

    pub fn with_scheme(mut self, scheme: SchemeProfile) -> Self {
        self.per_tx_proof_bytes = scheme.per_tx_proof_bytes;
        self.validation_seconds = scheme.validation_seconds;
        self
    }

    pub fn payload_bytes(&self) -> u64 {
        self.block_bytes + self.tx_count as u64 * self.per_tx_proof_bytes
    }

    /// Seconds to push one payload over one link.
    pub fn transfer_seconds(&self) -> f64 {
        self.payload_bytes() as f64 * 8.0 / (self.upload_mbps * 1e6)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetsimError::DegenerateConfig(m.to_string()));
        if self.node_count == 0 {
            return bad("node_count must be at least 1");
        }
        if self.node_count > 1 && self.degree >= self.node_count {
            return bad("degree must be below node_count");
        }
        if self.miner_count == 0 || self.miner_count > self.node_count {
            return bad("miner_count must be in 1..=node_count");
        }
        if self.miner_hashrate_weights.len() != self.miner_count as usize {
            return bad("one hashrate weight per miner");
        }
        if self.miner_hashrate_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("hashrate weights must be non-negative");
        }
        if (self.miner_hashrate_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("hashrate weights must sum to 1");
        }
        if !(self.upload_mbps > 0.0) || !(self.validation_seconds >= 0.0) {
            return bad("bandwidth must be positive and validation time non-negative");
        }
        Ok(())
    }
}

/// Undirected peer graph; node `i`'s peers in the order they were drawn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub peers: Vec<Vec<u32>>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.peers.len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.peers.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.peers[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }
}

/// Each node draws `degree` distinct outbound peers; links are used in both
/// directions. Redraws until connected.
pub fn build_network(config: &NetConfig) -> Result<Topology> {
    config.validate()?;
    let n = config.node_count as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    for _ in 0..64 {
        let mut peers: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for u in 0..n {
            if n == 1 {
                break;
            }
            for j in sample(&mut rng, n - 1, config.degree as usize).into_iter() {
                let v = if j >= u { j + 1 } else { j };
                let key = (u.min(v), u.max(v));
                if seen.insert(key) {
                    peers[u].push(v as u32);
                    peers[v].push(u as u32);
                }
            }
        }
        let topo = Topology { peers };
        if topo.is_connected() {
            return Ok(topo);
        }
    }
    Err(NetsimError::DegenerateConfig("could not draw a connected graph".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationResult {
    pub origin: u32,
    pub arrival_seconds: Vec<f64>,
    pub consensus_latency: f64,
    pub full_coverage_latency: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    Received(u32),
    UploadFree(u32),
}

#[derive(Clone, Copy, Debug)]
struct Timed(f64, u64, Event);

impl PartialEq for Timed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timed {}

impl PartialOrd for Timed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timed {
    // min-heap on (time, sequence)
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Runs one propagation from a miner drawn by hashrate.
pub fn simulate_propagation(topo: &Topology, config: &NetConfig) -> Result<PropagationResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let dist = WeightedIndex::new(&config.miner_hashrate_weights)
        .map_err(|e| NetsimError::DegenerateConfig(e.to_string()))?;
    let origin = dist.sample(&mut rng) as u32;
    Ok(propagate_from(topo, config, origin))
}

/// Propagation from a fixed origin; the origin has arrival 0.
pub fn propagate_from(topo: &Topology, config: &NetConfig, origin: u32) -> PropagationResult {
    let n = topo.node_count();
    let transfer = config.transfer_seconds();
    let mut arrival = vec![f64::INFINITY; n];
    let mut claimed = vec![false; n];
    let mut cursor = vec![0usize; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Timed>, t: f64, e: Event| {
        heap.push(Timed(t, seq, e));
        seq += 1;
    };

    arrival[origin as usize] = 0.0;
    claimed[origin as usize] = true;
    push(&mut heap, 0.0, Event::UploadFree(origin));
    while let Some(Timed(t, _, ev)) = heap.pop() {
        match ev {
            Event::Received(v) => {
                let ready = t + config.validation_seconds;
                arrival[v as usize] = ready;
                push(&mut heap, ready, Event::UploadFree(v));
            }
            Event::UploadFree(u) => {
                let peers = &topo.peers[u as usize];
                let c = &mut cursor[u as usize];
                while *c < peers.len() && claimed[peers[*c] as usize] {
                    *c += 1;
                }
                if let Some(&v) = peers.get(*c) {
                    claimed[v as usize] = true;
                    *c += 1;
                    push(&mut heap, t + transfer, Event::Received(v));
                    push(&mut heap, t + transfer, Event::UploadFree(u));
                }
            }
        }
    }
    let consensus = consensus_latency(&arrival);
    let full = arrival.iter().copied().fold(0.0, f64::max);
    PropagationResult { origin, arrival_seconds: arrival, consensus_latency: consensus, full_coverage_latency: full }
}

/// Smallest `t` with at least half the nodes (rounded up) arrived by `t`.
pub fn consensus_latency(arrivals: &[f64]) -> f64 {
    assert!(!arrivals.is_empty(), "no arrivals");
    let mut sorted = arrivals.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[arrivals.len().div_ceil(2) - 1]
}

/// Throughput bound: the slowest of verification, commitment update and
/// consensus sets the block interval.
pub fn max_tps(tx_verif_latency: f64, commit_update_latency: f64, consensus_latency: f64, tx_per_block: u32) -> f64 {
    let worst = tx_verif_latency.max(commit_update_latency).max(consensus_latency);
    tx_per_block as f64 / worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub scheme: &'static str,
    pub payload_bytes: u64,
    pub consensus_latency: f64,
    pub full_coverage: f64,
}

/// Every scheme over every seed, with one topology per seed shared by all
/// schemes. Seeds run in parallel.
pub fn sweep(base: &NetConfig, schemes: &[SchemeProfile], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let per_seed: Vec<Result<Vec<SweepRow>>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = NetConfig { rng_seed: seed, ..base.clone() };
            let topo = build_network(&cfg)?;
            schemes
                .iter()
                .map(|s| {
                    let c = cfg.clone().with_scheme(*s);
                    let r = simulate_propagation(&topo, &c)?;
                    Ok(SweepRow {
                        seed,
                        scheme: s.name,
                        payload_bytes: c.payload_bytes(),
                        consensus_latency: r.consensus_latency,
                        full_coverage: r.full_coverage_latency,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}
