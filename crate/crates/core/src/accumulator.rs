//! Trapdoorless RSA accumulator primitives relative to an arbitrary base.
//!
//! A commitment to a set of primes `S` over a base `B` is `B^(prod S)`.
//! Non-membership witnesses remember the base they were built against, so
//! the same code verifies both `d^t * A^b = g` and the chained form
//! `d^t * A^b = STXO_C_{k-1}` used by the stateless chain.

use std::fmt;

use rug::{integer::Order, Integer};
use thiserror::Error;

use crate::rsa_group::{
    self, bezout, pow_signed, product, GroupElement, GroupError, GroupParams, HashToPrime,
    PrimeMapper, PrimeRep,
};

/// Width of the serialized `b` coefficient of a non-membership witness.
pub const NONMEM_B_BYTES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AccumulatorError {
    #[error("member is not in the cohort")]
    MemberNotInCohort,
    #[error("element is already accumulated (gcd with the cohort product > 1)")]
    MemberPresent,
    #[error("non-membership coefficient b does not fit in 128-bit two's complement")]
    CoefficientOverflow,
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub type Result<T> = std::result::Result<T, AccumulatorError>;

/// An accumulator value: the base raised to the product of all members.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Commitment(pub GroupElement);

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.0)
    }
}

impl Commitment {
    pub fn element(&self) -> &GroupElement {
        &self.0
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        self.0.to_bytes(params)
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self> {
        Ok(Self(GroupElement::from_bytes(bytes, params)?))
    }
}

impl From<GroupElement> for Commitment {
    fn from(e: GroupElement) -> Self {
        Self(e)
    }
}

/// Membership witness: the accumulator without the member.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MemWitness(pub GroupElement);

impl fmt::Debug for MemWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MemWitness({})", self.0)
    }
}

impl MemWitness {
    pub fn element(&self) -> &GroupElement {
        &self.0
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        self.0.to_bytes(params)
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self> {
        Ok(Self(GroupElement::from_bytes(bytes, params)?))
    }
}

/// Non-membership witness `(d, b)` with `d^t * A^b = base`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NonMemWitness {
    pub d: GroupElement,
    pub b: Integer,
    pub base: GroupElement,
}

impl fmt::Debug for NonMemWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NonMemWitness(d={}, b={}, base={})", self.d, self.b, self.base)
    }
}

impl NonMemWitness {
    /// `d | b` where `b` is 16-byte two's complement. The base is implied by
    /// context and not serialized.
    pub fn to_bytes(&self, params: &GroupParams) -> Result<Vec<u8>> {
        let mut out = self.d.to_bytes(params);
        out.extend_from_slice(&encode_b(&self.b)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], base: GroupElement, params: &GroupParams) -> Result<Self> {
        let width = params.element_len();
        if bytes.len() != width + NONMEM_B_BYTES {
            return Err(GroupError::Decode(format!(
                "non-membership witness must be {} bytes, got {}",
                width + NONMEM_B_BYTES,
                bytes.len()
            ))
            .into());
        }
        let d = GroupElement::from_bytes(&bytes[..width], params)?;
        let b = decode_b(&bytes[width..]);
        Ok(Self { d, b, base })
    }
}

fn encode_b(b: &Integer) -> Result<[u8; NONMEM_B_BYTES]> {
    let v = b.to_i128().ok_or(AccumulatorError::CoefficientOverflow)?;
    Ok(v.to_be_bytes())
}

fn decode_b(bytes: &[u8]) -> Integer {
    Integer::from(i128::from_be_bytes(bytes.try_into().expect("16 bytes")))
}

/// Wesolowski-style proof that `w = u^x`: `Q = u^floor(x / l)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct NiPoeProof(pub GroupElement);

impl fmt::Debug for NiPoeProof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NiPoeProof({})", self.0)
    }
}

impl NiPoeProof {
    pub fn q(&self) -> &GroupElement {
        &self.0
    }

    /// Proof for exponent 1 (or any exponent below the challenge prime).
    pub fn trivial() -> Self {
        Self(GroupElement::one())
    }

    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        self.0.to_bytes(params)
    }

    pub fn from_bytes(bytes: &[u8], params: &GroupParams) -> Result<Self> {
        Ok(Self(GroupElement::from_bytes(bytes, params)?))
    }
}

/// `A^(prod new_primes)`.
pub fn batch_add(acc: &Commitment, new_primes: &[PrimeRep], params: &GroupParams) -> Commitment {
    if new_primes.is_empty() {
        return acc.clone();
    }
    Commitment(acc.0.pow(&product(new_primes), params))
}

/// `base^(prod cohort without member)`; the member must appear exactly once.
pub fn create_mem_witness(
    base: &Commitment,
    cohort: &[PrimeRep],
    member: &PrimeRep,
    params: &GroupParams,
) -> Result<MemWitness> {
    let pos = cohort
        .iter()
        .position(|p| p == member)
        .ok_or(AccumulatorError::MemberNotInCohort)?;
    let mut rest: Vec<PrimeRep> = Vec::with_capacity(cohort.len() - 1);
    rest.extend_from_slice(&cohort[..pos]);
    rest.extend_from_slice(&cohort[pos + 1..]);
    Ok(MemWitness(batch_add(base, &rest, params).0))
}

/// Membership witnesses for every member of `cohort` at once, by recursive
/// halving: O(n log n) exponent bits instead of O(n^2).
pub fn create_all_mem_witnesses(base: &Commitment, cohort: &[PrimeRep], params: &GroupParams) -> Vec<MemWitness> {
    fn go(g: &GroupElement, primes: &[PrimeRep], params: &GroupParams, out: &mut Vec<MemWitness>) {
        match primes.len() {
            0 => {}
            1 => out.push(MemWitness(g.clone())),
            n => {
                let (left, right) = primes.split_at(n / 2);
                let (gl, gr) = rayon::join(|| g.pow(&product(right), params), || g.pow(&product(left), params));
                go(&gl, left, params, out);
                go(&gr, right, params, out);
            }
        }
    }
    let mut out = Vec::with_capacity(cohort.len());
    go(&base.0, cohort, params, &mut out);
    out
}

pub fn verify_mem_witness(w: &MemWitness, member: &PrimeRep, acc: &Commitment, params: &GroupParams) -> bool {
    w.0.pow(member.value(), params) == acc.0
}

/// Non-membership witness of `outsider` against `base^(prod cohort)`.
pub fn create_nonmem_witness(
    base: &Commitment,
    cohort: &[PrimeRep],
    outsider: &PrimeRep,
    params: &GroupParams,
) -> Result<NonMemWitness> {
    let p = product(cohort);
    let bz = bezout(outsider.value(), &p).map_err(|e| match e {
        GroupError::NotCoprime => AccumulatorError::MemberPresent,
        other => other.into(),
    })?;
    let d = pow_signed(&base.0, &bz.a, params)?;
    Ok(NonMemWitness { d, b: bz.b, base: base.0.clone() })
}

pub fn verify_nonmem_witness(u: &NonMemWitness, outsider: &PrimeRep, acc: &Commitment, params: &GroupParams) -> bool {
    match pow_signed(&acc.0, &u.b, params) {
        Ok(ab) => u.d.pow(outsider.value(), params).mul(&ab, params) == u.base,
        Err(_) => false,
    }
}

/// Rewrites `b = q*t + r` with `r` in `(-t/2, t/2]` and folds `A^q` into `d`.
/// The verification equation is unchanged.
pub fn normalize_nonmem_witness(
    u: &NonMemWitness,
    outsider: &PrimeRep,
    acc: &Commitment,
    params: &GroupParams,
) -> Result<NonMemWitness> {
    let t = outsider.value();
    let mut r = Integer::from(u.b.modulo_ref(t));
    let half = Integer::from(t >> 1);
    if r > half {
        r -= t;
    }
    let q = Integer::from(&u.b - &r).div_exact(t);
    if q == 0 {
        return Ok(u.clone());
    }
    let d = u.d.mul(&pow_signed(&acc.0, &q, params)?, params);
    Ok(NonMemWitness { d, b: r, base: u.base.clone() })
}

/// Default challenge mapper for NI-PoE.
pub fn nipoe_mapper(params: &GroupParams) -> HashToPrime {
    HashToPrime::for_purpose(params, "nipoe")
}

/// Length-prefixed `x | u | w`, each big-endian.
fn challenge_input(x: &Integer, u: &GroupElement, w: &GroupElement) -> Vec<u8> {
    let mut out = Vec::new();
    for part in [x, u.value(), w.value()] {
        let digits = part.to_digits::<u8>(Order::Msf);
        out.extend_from_slice(&(digits.len() as u32).to_be_bytes());
        out.extend_from_slice(&digits);
    }
    out
}

pub fn prove_ni_poe(x: &Integer, u: &GroupElement, w: &GroupElement, params: &GroupParams) -> Result<NiPoeProof> {
    prove_ni_poe_with(&nipoe_mapper(params), x, u, w, params)
}

pub fn verify_ni_poe(x: &Integer, u: &GroupElement, w: &GroupElement, proof: &NiPoeProof, params: &GroupParams) -> bool {
    verify_ni_poe_with(&nipoe_mapper(params), x, u, w, proof, params)
}

/// Prover side. `x` must be non-negative.
pub fn prove_ni_poe_with(
    mapper: &dyn PrimeMapper,
    x: &Integer,
    u: &GroupElement,
    w: &GroupElement,
    params: &GroupParams,
) -> Result<NiPoeProof> {
    assert!(*x >= 0, "NI-PoE exponent must be non-negative");
    let l = mapper.map(&challenge_input(x, u, w))?;
    let q = Integer::from(x / l.value());
    Ok(NiPoeProof(u.pow(&q, params)))
}

/// Verifier side: `Q^l * u^(x mod l) == w`.
pub fn verify_ni_poe_with(
    mapper: &dyn PrimeMapper,
    x: &Integer,
    u: &GroupElement,
    w: &GroupElement,
    proof: &NiPoeProof,
    params: &GroupParams,
) -> bool {
    if *x < 0 {
        return false;
    }
    let l = match mapper.map(&challenge_input(x, u, w)) {
        Ok(l) => l,
        Err(_) => return false,
    };
    let r = Integer::from(x % l.value());
    proof.0.pow(l.value(), params).mul(&u.pow(&r, params), params) == *w
}

/// A mapper that ignores its input and returns a fixed prime. For tests and
/// toy examples only.
#[derive(Clone, Debug)]
pub struct FixedPrime(pub PrimeRep);

impl PrimeMapper for FixedPrime {
    fn map(&self, _data: &[u8]) -> rsa_group::Result<PrimeRep> {
        Ok(self.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn toy() -> GroupParams {
        GroupParams::new(Integer::from(77), Integer::from(2)).unwrap()
    }

    fn el(v: u64, p: &GroupParams) -> GroupElement {
        GroupElement::from_u64(v, p).unwrap()
    }

    fn pr(v: u64) -> PrimeRep {
        PrimeRep::from_u64(v).unwrap()
    }

    fn modpow(mut b: u64, mut e: u64, m: u64) -> u64 {
        let mut acc = 1;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % m;
            }
            b = b * b % m;
            e >>= 1;
        }
        acc
    }

    #[test]
    fn batch_add_toy_vectors() {
        let p = toy();
        let g = Commitment(p.generator());
        assert_eq!(batch_add(&g, &[], &p), g);
        assert_eq!(modpow(2, 15, 77), 43);
        let a = batch_add(&g, &[pr(3), pr(5)], &p);
        assert_eq!(*a.0.value(), 43);
        let inc = batch_add(&batch_add(&g, &[pr(3)], &p), &[pr(5)], &p);
        assert_eq!(inc, a);
    }

    #[test]
    fn mem_witness_toy_vectors() {
        let p = toy();
        let g = Commitment(p.generator());
        let w = create_mem_witness(&g, &[pr(3), pr(5)], &pr(3), &p).unwrap();
        assert_eq!(modpow(2, 5, 77), 32);
        assert_eq!(*w.0.value(), 32);
        let w1 = create_mem_witness(&g, &[pr(3)], &pr(3), &p).unwrap();
        assert_eq!(w1.0, g.0);
        assert_eq!(
            create_mem_witness(&g, &[pr(3), pr(5)], &pr(7), &p),
            Err(AccumulatorError::MemberNotInCohort)
        );
    }

    #[test]
    fn verify_mem_toy_vectors() {
        let p = toy();
        let a = Commitment(el(43, &p));
        let w = MemWitness(el(32, &p));
        assert_eq!(modpow(32, 3, 77), 43);
        assert_eq!(modpow(32, 5, 77), 65);
        assert!(verify_mem_witness(&w, &pr(3), &a, &p));
        assert!(!verify_mem_witness(&w, &pr(5), &a, &p));
    }

    #[test]
    fn nonmem_toy_vectors() {
        let p = toy();
        let g = Commitment(p.generator());
        let u = create_nonmem_witness(&g, &[pr(3), pr(5)], &pr(7), &p).unwrap();
        // bezout(7, 15) = (-2, 1); 2^-2 mod 77 = 58
        assert_eq!((u.d.value().clone(), u.b.clone()), (Integer::from(58), Integer::from(1)));
        let a = Commitment(el(43, &p));
        // 58^7 * 43 mod 77 = 9 * 43 mod 77 = 2
        assert_eq!(modpow(58, 7, 77), 9);
        assert_eq!(9 * 43 % 77, 2);
        assert!(verify_nonmem_witness(&u, &pr(7), &a, &p));
        assert!(!verify_nonmem_witness(&u, &pr(5), &a, &p));

        let empty = create_nonmem_witness(&g, &[], &pr(7), &p).unwrap();
        assert!(empty.d.is_one());
        assert_eq!(empty.b, 1);
        assert!(verify_nonmem_witness(&empty, &pr(7), &g, &p));
        assert!(verify_nonmem_witness(&empty, &pr(11), &g, &p));

        assert_eq!(
            create_nonmem_witness(&g, &[pr(7), pr(11)], &pr(7), &p),
            Err(AccumulatorError::MemberPresent)
        );
    }

    #[test]
    fn normalize_toy_vectors() {
        let p = toy();
        let a = Commitment(el(43, &p));
        let base = el(2, &p);
        let u = NonMemWitness { d: el(2, &p), b: Integer::from(9), base: base.clone() };
        let lhs_before = modpow(2, 7, 77) * modpow(43, 9, 77) % 77;
        let n = normalize_nonmem_witness(&u, &pr(7), &a, &p).unwrap();
        assert_eq!((n.d.value().clone(), n.b.clone()), (Integer::from(9), Integer::from(2)));
        let lhs_after = modpow(9, 7, 77) * modpow(43, 2, 77) % 77;
        assert_eq!(lhs_before, 37);
        assert_eq!(lhs_after, 37);

        let in_range = NonMemWitness { d: el(2, &p), b: Integer::from(-3), base: base.clone() };
        assert_eq!(normalize_nonmem_witness(&in_range, &pr(7), &a, &p).unwrap(), in_range);

        let at_t = NonMemWitness { d: el(2, &p), b: Integer::from(7), base };
        let n = normalize_nonmem_witness(&at_t, &pr(7), &a, &p).unwrap();
        assert_eq!(n.b, 0);
        assert_eq!(n.d, el(2, &p).mul(&a.0, &p));
    }

    #[test]
    fn ni_poe_toy_vectors() {
        let p = toy();
        let pinned = FixedPrime(pr(7));
        let (x, u, w) = (Integer::from(15), el(2, &p), el(43, &p));
        let proof = prove_ni_poe_with(&pinned, &x, &u, &w, &p).unwrap();
        // floor(15/7) = 2, Q = 4
        assert_eq!(*proof.0.value(), 4);
        // 4^7 = 60 mod 77; 60 * 2^(15 mod 7) = 120 = 43 mod 77
        assert_eq!(modpow(4, 7, 77), 60);
        assert!(verify_ni_poe_with(&pinned, &x, &u, &w, &proof, &p));
        let tampered = NiPoeProof(proof.0.mul(&p.generator(), &p));
        assert!(!verify_ni_poe_with(&pinned, &x, &u, &w, &tampered, &p));
        // w != u^x with honest Q
        assert!(!verify_ni_poe_with(&pinned, &x, &u, &el(8, &p), &proof, &p));

        let one = prove_ni_poe_with(&pinned, &Integer::from(1), &u, &u, &p).unwrap();
        assert!(one.0.is_one());
    }

    #[test]
    fn serialized_sizes_follow_modulus_width() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = GroupParams::generate_dev(512, &mut rng).unwrap();
        let g = Commitment(p.generator());
        let primes: Vec<PrimeRep> = (0..4u32)
            .map(|i| rsa_group::hash_to_prime(&i.to_be_bytes(), &p).unwrap())
            .collect();
        let outsider = rsa_group::hash_to_prime(b"out", &p).unwrap();
        let acc = batch_add(&g, &primes, &p);
        let u = create_nonmem_witness(&g, &primes, &outsider, &p).unwrap();
        let bytes = u.to_bytes(&p).unwrap();
        assert_eq!(bytes.len(), 64 + NONMEM_B_BYTES);
        let back = NonMemWitness::from_bytes(&bytes, g.0.clone(), &p).unwrap();
        assert_eq!(back, u);
        assert!(verify_nonmem_witness(&back, &outsider, &acc, &p));
        let w = create_mem_witness(&g, &primes, &primes[0], &p).unwrap();
        assert_eq!(w.to_bytes(&p).len(), 64);
        assert_eq!(MemWitness::from_bytes(&w.to_bytes(&p), &p).unwrap(), w);
    }

    #[test]
    fn oversized_b_does_not_serialize() {
        let p = toy();
        let u = NonMemWitness { d: el(2, &p), b: Integer::from(1) << 127, base: el(2, &p) };
        assert_eq!(u.to_bytes(&p), Err(AccumulatorError::CoefficientOverflow));
        let u = NonMemWitness { d: el(2, &p), b: Integer::from(-(Integer::from(1) << 127u32)), base: el(2, &p) };
        assert!(u.to_bytes(&p).is_ok());
    }

    fn dev_params() -> GroupParams {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        GroupParams::generate_dev(256, &mut rng).unwrap()
    }

    fn random_primes(rng: &mut impl Rng, n: usize, p: &GroupParams) -> Vec<PrimeRep> {
        (0..n)
            .map(|_| rsa_group::hash_to_prime(&rng.gen::<[u8; 16]>(), p).unwrap())
            .collect()
    }

    #[test]
    fn all_witnesses_match_one_by_one() {
        let p = dev_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for n in [0usize, 1, 2, 3, 7, 16] {
            let cohort = random_primes(&mut rng, n, &p);
            let g = Commitment(p.generator());
            let all = create_all_mem_witnesses(&g, &cohort, &p);
            assert_eq!(all.len(), n);
            for (w, t) in all.iter().zip(&cohort) {
                assert_eq!(*w, create_mem_witness(&g, &cohort, t, &p).unwrap());
            }
        }
    }

    #[test]
    fn witness_completeness_and_undeniability() {
        let p = dev_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let g = Commitment(p.generator());
        for _ in 0..10 {
            let n = rng.gen_range(1..=64);
            let cohort = random_primes(&mut rng, n, &p);
            let acc = batch_add(&g, &cohort, &p);
            let outsider = rsa_group::hash_to_prime(&rng.gen::<[u8; 16]>(), &p).unwrap();
            let mut honest_mem = Vec::new();
            for m in &cohort {
                let w = create_mem_witness(&g, &cohort, m, &p).unwrap();
                assert!(verify_mem_witness(&w, m, &acc, &p));
                assert_eq!(
                    create_nonmem_witness(&g, &cohort, m, &p),
                    Err(AccumulatorError::MemberPresent)
                );
                honest_mem.push(w);
            }
            let u = create_nonmem_witness(&g, &cohort, &outsider, &p).unwrap();
            assert!(verify_nonmem_witness(&u, &outsider, &acc, &p));
            for w in &honest_mem {
                assert!(!verify_mem_witness(w, &outsider, &acc, &p));
            }
        }
    }

    #[test]
    fn ni_poe_soundness_smoke() {
        let p = dev_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = p.generator();
        for _ in 0..50 {
            let x = Integer::from(rng.gen::<u128>()) * Integer::from(rng.gen::<u64>() | 1);
            let u = g.pow(&Integer::from(rng.gen::<u32>() | 2), &p);
            let w = u.pow(&x, &p);
            let proof = prove_ni_poe(&x, &u, &w, &p).unwrap();
            assert!(verify_ni_poe(&x, &u, &w, &proof, &p));
            assert!(!verify_ni_poe(&Integer::from(&x + 1), &u, &w, &proof, &p));
            assert!(!verify_ni_poe(&x, &u.mul(&g, &p), &w, &proof, &p));
            assert!(!verify_ni_poe(&x, &u, &w.mul(&g, &p), &proof, &p));
            assert!(!verify_ni_poe(&x, &u, &w, &NiPoeProof(proof.0.mul(&g, &p)), &p));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn batch_add_order_independent(seed in any::<u64>(), n in 0usize..24) {
            use rand::seq::SliceRandom;
            let p = dev_params();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut primes = random_primes(&mut rng, n, &p);
            let g = Commitment(p.generator());
            let before = batch_add(&g, &primes, &p);
            primes.shuffle(&mut rng);
            prop_assert_eq!(batch_add(&g, &primes, &p), before);
        }

        #[test]
        fn normalize_preserves_predicate(seed in any::<u64>(), extra in -1_000_000i64..1_000_000) {
            let p = dev_params();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cohort = random_primes(&mut rng, 5, &p);
            let outsider = rsa_group::hash_to_prime(&rng.gen::<[u8; 16]>(), &p).unwrap();
            let g = Commitment(p.generator());
            let acc = batch_add(&g, &cohort, &p);
            let u = create_nonmem_witness(&g, &cohort, &outsider, &p).unwrap();
            // shift b by a multiple of t and compensate in d: still a valid witness
            let shift = Integer::from(extra) * outsider.value();
            let d = u.d.mul(&pow_signed(&acc.0, &Integer::from(-extra), &p).unwrap(), &p);
            let skewed = NonMemWitness { d, b: Integer::from(&u.b + &shift), base: u.base.clone() };
            prop_assert!(verify_nonmem_witness(&skewed, &outsider, &acc, &p));
            let n = normalize_nonmem_witness(&skewed, &outsider, &acc, &p).unwrap();
            prop_assert!(verify_nonmem_witness(&n, &outsider, &acc, &p));
            prop_assert!(Integer::from(n.b.abs_ref()) < *outsider.value());
        }
    }
}
