//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use compactchain::chain::DEFAULT_CACHE_DEPTH;
use compactchain::netsim::{default_hashrate_weights, scheme_by_name, NetConfig, SchemeProfile, SCHEMES};
use compactchain::workload::WorkloadConfig;

use crate::CliError;

/// Parsed key/value pairs; every key must be consumed by the caller.
#[derive(Debug, Default)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("{source}:{}: expected key = value", i + 1)));
            };
            let key = k.trim().to_string();
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("{source}:{}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { source: source.to_string(), entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{}: bad value {v:?} for {key}", self.source))),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(v) = self.entries.remove(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| CliError::Config(format!("{}: bad list item {s:?} in {key}", self.source))))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn finish(self) -> Result<(), CliError> {
        match self.entries.keys().next() {
            Some(k) => Err(CliError::Config(format!("{}: unknown key {k}", self.source))),
            None => Ok(()),
        }
    }
}

/// Settings shared by the chain and wallet commands.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: PathBuf,
    pub store: PathBuf,
    pub blocks: u32,
    pub workload: WorkloadConfig,
    pub cache_depth: u64,
    pub workers: Option<usize>,
}

impl RunConfig {
    /// Relative paths resolve against the directory holding the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut kv = KeyValues::load(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let required = |v: Option<String>, key: &str| {
            v.map(|p| dir.join(p)).ok_or_else(|| CliError::Config(format!("{}: missing key {key}", path.display())))
        };
        let params = required(kv.take_str("params"), "params")?;
        let store = required(kv.take_str("store"), "store")?;
        let d = WorkloadConfig::default();
        let workload = WorkloadConfig {
            txs_per_block: kv.take("txs_per_block")?.unwrap_or(d.txs_per_block),
            inputs_per_tx: kv.take("inputs_per_tx")?.unwrap_or(d.inputs_per_tx),
            outputs_per_tx: kv.take("outputs_per_tx")?.unwrap_or(d.outputs_per_tx),
            owners: kv.take("owners")?.unwrap_or(d.owners),
            coinbase_blocks: kv.take("coinbase_blocks")?.unwrap_or(d.coinbase_blocks),
            seed: kv.take("seed")?.unwrap_or(d.seed),
        };
        let cfg = Self {
            params,
            store,
            blocks: kv.take("blocks")?.unwrap_or(0),
            workload,
            cache_depth: kv.take("cache_depth")?.unwrap_or(DEFAULT_CACHE_DEPTH),
            workers: kv.take("workers")?,
        };
        kv.finish()?;
        if cfg.workload.owners == 0 || cfg.workload.outputs_per_tx == 0 || cfg.workload.inputs_per_tx == 0 {
            return Err(CliError::Config("owners, inputs_per_tx and outputs_per_tx must be at least 1".into()));
        }
        if cfg.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(cfg)
    }
}

/// A propagation sweep: base network plus the schemes and seeds to run.
#[derive(Clone, Debug, PartialEq)]
pub struct NetsimRun {
    pub base: NetConfig,
    pub schemes: Vec<SchemeProfile>,
    pub seeds: Vec<u64>,
}

impl NetsimRun {
    pub fn from_key_values(mut kv: KeyValues) -> Result<Self, CliError> {
        let d = NetConfig::default();
        let miner_count = kv.take("miner_count")?.unwrap_or(d.miner_count);
        let weights = match kv.take_list::<f64>("miner_hashrate_weights")? {
            Some(w) => {
                let sum: f64 = w.iter().sum();
                w.into_iter().map(|x| x / sum).collect()
            }
            None => default_hashrate_weights(miner_count),
        };
        let custom_bytes: Option<u64> = kv.take("per_tx_proof_bytes")?;
        let custom_secs: Option<f64> = kv.take("validation_seconds")?;
        let rng_seed = kv.take("rng_seed")?.unwrap_or(d.rng_seed);
        let seed_count: u64 = kv.take("seeds")?.unwrap_or(1);
        let named = kv.take_list::<String>("schemes")?;
        let base = NetConfig {
            node_count: kv.take("node_count")?.unwrap_or(d.node_count),
            miner_count,
            miner_hashrate_weights: weights,
            upload_mbps: kv.take("upload_mbps")?.unwrap_or(d.upload_mbps),
            degree: kv.take("degree")?.unwrap_or(d.degree),
            block_bytes: kv.take("block_bytes")?.unwrap_or(d.block_bytes),
            tx_count: kv.take("tx_count")?.unwrap_or(d.tx_count),
            rng_seed,
            ..d
        };
        kv.finish()?;
        let schemes = match (named, custom_bytes, custom_secs) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::Config("give either schemes or per_tx_proof_bytes/validation_seconds".into()))
            }
            (Some(names), None, None) => names
                .iter()
                .map(|n| scheme_by_name(n).ok_or_else(|| CliError::Config(format!("unknown scheme {n:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
            (None, None, None) => SCHEMES.to_vec(),
            (None, b, s) => vec![SchemeProfile {
                name: "custom",
                per_tx_proof_bytes: b.unwrap_or(base.per_tx_proof_bytes),
                validation_seconds: s.unwrap_or(base.validation_seconds),
            }],
        };
        if seed_count == 0 {
            return Err(CliError::Config("seeds must be at least 1".into()));
        }
        let seeds = (rng_seed..rng_seed + seed_count).collect();
        base.validate()?;
        Ok(Self { base, schemes, seeds })
    }
}
