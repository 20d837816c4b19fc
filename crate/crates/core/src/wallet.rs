//! Wallet side: creating witnesses for freshly mined coins and rolling them
//! forward block by block so they stay within the validators' cache window.

use rayon::prelude::*;
use rug::Integer;
use thiserror::Error;

use crate::accumulator::{
    create_mem_witness, create_nonmem_witness, normalize_nonmem_witness, AccumulatorError, Commitment, MemWitness,
    NonMemWitness, NONMEM_B_BYTES,
};
use crate::chain::{Block, BlockDigest, BlockHeader, ChainError, Coin, Hash32, HeaderStore, COIN_BYTES};
use crate::rsa_group::{bezout, pow_signed, product, GroupElement, GroupError, GroupParams, PrimeRep, Reader};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WalletError {
    #[error("coin is not an output of the block")]
    CoinNotInBlock,
    #[error("coin is already spent in the block that created it")]
    CoinAlreadySpentInBlock,
    #[error("coin was spent")]
    CoinSpent,
    #[error("witness is at height {got}, block expects {expected}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub type Result<T> = std::result::Result<T, WalletError>;

/// Everything a spender attaches to one input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxWitness {
    pub mem: MemWitness,
    pub nonmem: NonMemWitness,
    pub creation_height: u64,
    pub witness_height: u64,
}

impl TxWitness {
    /// Existence proof: the membership witness alone.
    pub fn existence_proof_len(params: &GroupParams) -> usize {
        params.element_len()
    }

    /// Unspent proof: `d` plus the 16-byte `b`.
    pub fn unspent_proof_len(params: &GroupParams) -> usize {
        params.element_len() + NONMEM_B_BYTES
    }

    pub fn envelope_len(params: &GroupParams) -> usize {
        16 + Self::existence_proof_len(params) + Self::unspent_proof_len(params)
    }

    /// `k u64 | h u64 | mem | d | b`.
    pub fn to_bytes(&self, params: &GroupParams) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(Self::envelope_len(params));
        out.extend_from_slice(&self.creation_height.to_be_bytes());
        out.extend_from_slice(&self.witness_height.to_be_bytes());
        out.extend_from_slice(&self.mem.to_bytes(params));
        out.extend_from_slice(&self.nonmem.to_bytes(params)?);
        Ok(out)
    }

    /// `base` is the STXO commitment at `k - 1` (or g), which the envelope
    /// does not carry.
    pub fn from_bytes(bytes: &[u8], base: GroupElement, params: &GroupParams) -> Result<Self> {
        if bytes.len() != Self::envelope_len(params) {
            return Err(GroupError::Decode(format!("witness envelope must be {} bytes", Self::envelope_len(params))).into());
        }
        let w = params.element_len();
        let mut r = Reader::new(bytes);
        let creation_height = r.u64()?;
        let witness_height = r.u64()?;
        let mem = MemWitness::from_bytes(r.take(w)?, params)?;
        let nonmem = NonMemWitness::from_bytes(r.take(w + NONMEM_B_BYTES)?, base, params)?;
        Ok(Self { mem, nonmem, creation_height, witness_height })
    }
}

/// Base of the non-membership relation for a coin created at `k`.
pub fn nonmem_base(headers: &HeaderStore, k: u64, params: &GroupParams) -> Result<GroupElement> {
    if k == 0 {
        return Ok(params.generator());
    }
    let h = headers.get(k - 1).ok_or(ChainError::UnknownHeight(k - 1))?;
    Ok(h.stxo_c.element().clone())
}

/// Fresh witnesses for a coin mined in block `digest.height`, built from the
/// previous header and the block's prime lists.
pub fn generate_witness(
    coin_prime: &PrimeRep,
    digest: &BlockDigest,
    prev: &BlockHeader,
    params: &GroupParams,
) -> Result<TxWitness> {
    let mem = create_mem_witness(&prev.txo_c, &digest.output_primes, coin_prime, params).map_err(|e| match e {
        AccumulatorError::MemberNotInCohort => WalletError::CoinNotInBlock,
        other => other.into(),
    })?;
    let nonmem = create_nonmem_witness(&prev.stxo_c, &digest.input_primes, coin_prime, params).map_err(|e| match e {
        AccumulatorError::MemberPresent => WalletError::CoinAlreadySpentInBlock,
        other => other.into(),
    })?;
    Ok(TxWitness { mem, nonmem, creation_height: digest.height, witness_height: digest.height })
}

/// `w^(prod new outputs)`.
pub fn update_mem_witness(w: &MemWitness, new_outputs: &[PrimeRep], params: &GroupParams) -> MemWitness {
    if new_outputs.is_empty() {
        return w.clone();
    }
    MemWitness(w.0.pow(&product(new_outputs), params))
}

/// Moves `(d, b)` from `stxo_c_h` to `stxo_c_n = stxo_c_h^(prod new inputs)`
/// and normalizes `b` against the coin prime.
pub fn update_nonmem_witness(
    u: &NonMemWitness,
    coin_prime: &PrimeRep,
    stxo_c_h: &Commitment,
    stxo_c_n: &Commitment,
    new_inputs: &[PrimeRep],
    params: &GroupParams,
) -> Result<NonMemWitness> {
    if new_inputs.is_empty() {
        return Ok(u.clone());
    }
    let p = product(new_inputs);
    let bz = bezout(coin_prime.value(), &p).map_err(|e| match e {
        GroupError::NotCoprime => WalletError::CoinSpent,
        other => other.into(),
    })?;
    let r = Integer::from(&bz.a * &u.b);
    let d = u.d.mul(&pow_signed(&stxo_c_h.0, &r, params)?, params);
    let b = Integer::from(&bz.b * &u.b);
    let raw = NonMemWitness { d, b, base: u.base.clone() };
    Ok(normalize_nonmem_witness(&raw, coin_prime, stxo_c_n, params)?)
}

/// Both witnesses moved from the header before `digest` to `next`.
pub fn roll_forward(
    wit: &TxWitness,
    coin_prime: &PrimeRep,
    digest: &BlockDigest,
    prev: &BlockHeader,
    next: &BlockHeader,
    params: &GroupParams,
) -> Result<TxWitness> {
    if wit.witness_height != prev.height || digest.height != next.height {
        return Err(WalletError::HeightMismatch { expected: prev.height, got: wit.witness_height });
    }
    let mem = update_mem_witness(&wit.mem, &digest.output_primes, params);
    let nonmem = update_nonmem_witness(&wit.nonmem, coin_prime, &prev.stxo_c, &next.stxo_c, &digest.input_primes, params)?;
    Ok(TxWitness { mem, nonmem, creation_height: wit.creation_height, witness_height: next.height })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnedCoin {
    pub coin: Coin,
    pub prime: PrimeRep,
    pub witness: TxWitness,
    pub spent: bool,
}

/// Coins belonging to one owner tag, kept current with the chain tip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wallet {
    owner: Hash32,
    coins: Vec<OwnedCoin>,
}

impl Wallet {
    pub fn new(owner: Hash32) -> Self {
        Self { owner, coins: Vec::new() }
    }

    pub fn owner(&self) -> &Hash32 {
        &self.owner
    }

    pub fn coins(&self) -> &[OwnedCoin] {
        &self.coins
    }

    pub fn unspent(&self) -> impl Iterator<Item = &OwnedCoin> {
        self.coins.iter().filter(|c| !c.spent)
    }

    pub fn balance(&self) -> u64 {
        self.unspent().map(|c| c.coin.value).sum()
    }

    /// Drops coins already marked spent.
    pub fn prune(&mut self) {
        self.coins.retain(|c| !c.spent);
    }

    /// Processes an applied block: marks spent coins, rolls the rest
    /// forward, then picks up this owner's new outputs.
    pub fn observe_block(
        &mut self,
        block: &Block,
        digest: &BlockDigest,
        prev: &BlockHeader,
        params: &GroupParams,
    ) -> Result<()> {
        let next = &block.header;
        let spent: std::collections::HashSet<&PrimeRep> = digest.input_primes.iter().collect();
        self.coins
            .par_iter_mut()
            .filter(|c| !c.spent)
            .try_for_each(|c| -> Result<()> {
                if spent.contains(&c.prime) {
                    c.spent = true;
                } else {
                    c.witness = roll_forward(&c.witness, &c.prime, digest, prev, next, params)?;
                }
                Ok(())
            })?;
        let outputs: Vec<&Coin> = block.transactions.iter().flat_map(|t| &t.outputs).collect();
        let fresh: Vec<(Coin, PrimeRep)> = outputs
            .iter()
            .zip(&digest.output_primes)
            .filter(|(c, _)| c.owner == self.owner)
            .map(|(c, p)| ((*c).clone(), p.clone()))
            .collect();
        let made = fresh
            .into_par_iter()
            .map(|(coin, prime)| {
                let witness = generate_witness(&prime, digest, prev, params)?;
                Ok(OwnedCoin { coin, prime, witness, spent: false })
            })
            .collect::<Result<Vec<_>>>()?;
        self.coins.extend(made);
        Ok(())
    }

    /// Records of `coin | spent u8 | envelope`, preceded by the owner tag.
    pub fn to_bytes(&self, params: &GroupParams) -> Result<Vec<u8>> {
        let mut out = self.owner.to_vec();
        for c in &self.coins {
            out.extend_from_slice(&c.coin.encode());
            out.push(c.spent as u8);
            out.extend_from_slice(&c.witness.to_bytes(params)?);
        }
        Ok(out)
    }

    /// Rebuilds a wallet; coin primes are recomputed and non-membership bases
    /// are read from `headers`.
    pub fn from_bytes(
        bytes: &[u8],
        headers: &HeaderStore,
        coin_prime: impl Fn(&Coin) -> std::result::Result<PrimeRep, ChainError>,
        params: &GroupParams,
    ) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let owner: Hash32 = r.take(32)?.try_into().unwrap();
        let env = TxWitness::envelope_len(params);
        let mut coins = Vec::new();
        while !r.is_empty() {
            let coin = Coin::decode(r.take(COIN_BYTES)?)?;
            let spent = r.take(1)?[0] != 0;
            let raw = r.take(env)?;
            let k = u64::from_be_bytes(raw[..8].try_into().unwrap());
            let witness = TxWitness::from_bytes(raw, nonmem_base(headers, k, params)?, params)?;
            let prime = coin_prime(&coin)?;
            coins.push(OwnedCoin { coin, prime, witness, spent });
        }
        Ok(Self { owner, coins })
    }
}
