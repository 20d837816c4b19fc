use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rug::Integer;

use crate::chain::{Coin, Protocol};
use crate::rsa_group::{self, GroupParams, PrimeMapper, PrimeRep};

pub fn toy_params() -> GroupParams {
    GroupParams::new(Integer::from(77), Integer::from(2)).unwrap()
}

/// Small dev modulus so chain-level tests stay fast.
pub fn dev_params(seed: u64) -> GroupParams {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    GroupParams::generate_dev(256, &mut rng).unwrap()
}

pub fn dev_protocol(seed: u64) -> Protocol {
    Protocol::new(dev_params(seed))
}

/// Maps listed coin encodings to pinned primes.
#[derive(Default)]
pub struct TableMapper(pub HashMap<Vec<u8>, PrimeRep>);

impl TableMapper {
    pub fn pin(mut self, coin: &Coin, prime: u64) -> Self {
        self.0.insert(coin.encode().to_vec(), PrimeRep::from_u64(prime).unwrap());
        self
    }
}

impl PrimeMapper for TableMapper {
    fn map(&self, data: &[u8]) -> rsa_group::Result<PrimeRep> {
        self.0.get(data).cloned().ok_or(rsa_group::GroupError::EmptyInput)
    }
}

pub fn toy_protocol(mapper: TableMapper) -> Protocol {
    Protocol::new(toy_params()).with_coin_mapper(Arc::new(mapper))
}

pub fn owner(n: u8) -> [u8; 32] {
    [n; 32]
}
