//! Boneh-style single-accumulator UTXO commitment, kept only for the
//! commitment-update comparison. Deletion folds membership witnesses pairwise
//! with Shamir's trick, so it is quadratic in the number of deleted coins.

use rug::Integer;
use thiserror::Error;

use crate::accumulator::{batch_add, prove_ni_poe, AccumulatorError, Commitment, MemWitness, NiPoeProof};
use crate::rsa_group::{bezout, pow_signed, product, GroupElement, GroupError, GroupParams, PrimeRep};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("exponents are not coprime")]
    NotCoprime,
    #[error("membership witness {0} does not verify")]
    WitnessInvalid(usize),
    #[error(transparent)]
    Accumulator(#[from] AccumulatorError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Commitment to the live UTXO set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtxoCommitment(pub Commitment);

fn coprime_bezout(x1: &Integer, x2: &Integer) -> Result<(Integer, Integer)> {
    let bz = bezout(x1, x2).map_err(|e| match e {
        GroupError::NotCoprime => BaselineError::NotCoprime,
        other => other.into(),
    })?;
    Ok((bz.a, bz.b))
}

/// `w1^b * w2^a` with `a*x1 + b*x2 = 1`, unchecked.
fn combine(w1: &GroupElement, w2: &GroupElement, x1: &Integer, x2: &Integer, params: &GroupParams) -> Result<GroupElement> {
    let (a, b) = coprime_bezout(x1, x2)?;
    Ok(pow_signed(w1, &b, params)?.mul(&pow_signed(w2, &a, params)?, params))
}

/// Combines witnesses of `x1` and `x2` for the same `A` into a witness of
/// `x1 * x2`.
pub fn shamir_trick(
    w1: &GroupElement,
    w2: &GroupElement,
    x1: &PrimeRep,
    x2: &PrimeRep,
    acc: &Commitment,
    params: &GroupParams,
) -> Result<GroupElement> {
    for (i, (w, x)) in [(w1, x1), (w2, x2)].into_iter().enumerate() {
        if w.pow(x.value(), params) != acc.0 {
            return Err(BaselineError::WitnessInvalid(i));
        }
    }
    combine(w1, w2, x1.value(), x2.value(), params)
}

/// Removes `members` from `acc`. Returns the reduced commitment and an
/// NI-PoE that it raised to the deleted product gives back `acc`.
pub fn batch_del(
    acc: &Commitment,
    members: &[(PrimeRep, MemWitness)],
    params: &GroupParams,
) -> Result<(Commitment, NiPoeProof)> {
    for (i, (x, w)) in members.iter().enumerate() {
        if w.0.pow(x.value(), params) != acc.0 {
            return Err(BaselineError::WitnessInvalid(i));
        }
    }
    let Some(((x0, w0), rest)) = members.split_first() else {
        let proof = prove_ni_poe(&Integer::from(1), &acc.0, &acc.0, params)?;
        return Ok((acc.clone(), proof));
    };
    let mut agg = w0.0.clone();
    let mut x_agg = x0.value().clone();
    for (x, w) in rest {
        agg = combine(&agg, &w.0, &x_agg, x.value(), params)?;
        x_agg *= x.value();
    }
    let proof = prove_ni_poe(&x_agg, &agg, &acc.0, params)?;
    Ok((Commitment(agg), proof))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BonehUpdate {
    pub commitment: UtxoCommitment,
    pub after_delete: Commitment,
    pub delete_proof: NiPoeProof,
    pub add_proof: NiPoeProof,
}

/// Deletes the spent inputs, then adds the new outputs.
pub fn boneh_update(
    acc: &UtxoCommitment,
    inputs: &[(PrimeRep, MemWitness)],
    outputs: &[PrimeRep],
    params: &GroupParams,
) -> Result<BonehUpdate> {
    let (after_delete, delete_proof) = batch_del(&acc.0, inputs, params)?;
    let next = batch_add(&after_delete, outputs, params);
    let add_proof = prove_ni_poe(&product(outputs), &after_delete.0, &next.0, params)?;
    Ok(BonehUpdate { commitment: UtxoCommitment(next), after_delete, delete_proof, add_proof })
}
