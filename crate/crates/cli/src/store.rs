//! On-disk chain store: header records, STXO cache, body records and the
//! simulated wallets, one file each.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use compactchain::chain::{prime_width, BodyRecord, ChainState, HeaderStore, Protocol, StxoCache};
use compactchain::rsa_group::GroupParams;
use compactchain::wallet::Wallet;
use compactchain::workload::{wallets_from_bytes, wallets_to_bytes};

use crate::CliError;

pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf() }
    }

    pub fn headers_path(&self) -> PathBuf {
        self.dir.join("headers.bin")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.dir.join("cache.bin")
    }

    pub fn bodies_path(&self) -> PathBuf {
        self.dir.join("bodies.bin")
    }

    pub fn wallets_path(&self) -> PathBuf {
        self.dir.join("wallets.bin")
    }

    pub fn exists(&self) -> bool {
        self.headers_path().exists()
    }

    fn read(&self, path: &Path) -> Result<Vec<u8>, CliError> {
        std::fs::read(path).map_err(|e| CliError::io(path, e))
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }

    pub fn init(&self, state: &ChainState, wallets: &[Wallet]) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let params = state.protocol().params();
        self.write(&self.headers_path(), &state.headers().to_bytes(params))?;
        self.write(&self.bodies_path(), &[])?;
        self.save_tail(state, wallets)
    }

    pub fn load_headers(&self, params: &GroupParams) -> Result<HeaderStore, CliError> {
        Ok(HeaderStore::from_bytes(&self.read(&self.headers_path())?, params)?)
    }

    pub fn load_bodies(&self, params: &GroupParams) -> Result<Vec<BodyRecord>, CliError> {
        Ok(BodyRecord::read_all(&self.read(&self.bodies_path())?, prime_width(params))?)
    }

    pub fn load_cache(&self, proto: &Protocol) -> Result<StxoCache, CliError> {
        let bytes = self.read(&self.cache_path())?;
        Ok(StxoCache::from_bytes(&bytes, prime_width(proto.params()), proto.cache_depth())?)
    }

    pub fn load_state(&self, proto: Protocol) -> Result<ChainState, CliError> {
        let headers = self.load_headers(proto.params())?;
        let cache = self.load_cache(&proto)?;
        Ok(ChainState::from_parts(proto, headers, cache))
    }

    pub fn load_wallets(&self, state: &ChainState) -> Result<Vec<Wallet>, CliError> {
        Ok(wallets_from_bytes(&self.read(&self.wallets_path())?, state)?)
    }

    /// Appends new header and body records, then rewrites cache and wallets.
    pub fn append(&self, state: &ChainState, wallets: &[Wallet], bodies: &[BodyRecord]) -> Result<(), CliError> {
        let params = state.protocol().params();
        let new = bodies.len();
        let first = state.headers().len() - new;
        let mut headers = Vec::new();
        for h in state.headers().iter().skip(first) {
            headers.extend_from_slice(&h.to_bytes(params));
        }
        let width = prime_width(params);
        let body_bytes: Vec<u8> = bodies.iter().flat_map(|b| b.to_bytes(width)).collect();
        for (path, bytes) in [(self.headers_path(), headers), (self.bodies_path(), body_bytes)] {
            let mut f = OpenOptions::new().append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
            f.write_all(&bytes).map_err(|e| CliError::io(&path, e))?;
        }
        self.save_tail(state, wallets)
    }

    fn save_tail(&self, state: &ChainState, wallets: &[Wallet]) -> Result<(), CliError> {
        let params = state.protocol().params();
        self.write(&self.cache_path(), &state.cache().to_bytes(prime_width(params)))?;
        self.write(&self.wallets_path(), &wallets_to_bytes(wallets, params)?)
    }
}
