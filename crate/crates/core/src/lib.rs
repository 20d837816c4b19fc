//! CompactChain: a stateless UTXO chain whose entire state lives in two RSA
//! accumulators, one over all transaction outputs (TXO) and one over all
//! spent outputs (STXO).

pub mod rsa_group;
pub mod accumulator;
pub mod chain;
pub mod wallet;
pub mod baselines;
pub mod netsim;
pub mod workload;
pub mod bench;

#[cfg(test)]
mod testutil;
