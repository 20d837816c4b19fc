//! Fixtures and timers for the commitment-update comparison. A workload of
//! size `m` is `m` single-input, single-output transactions.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accumulator::{
    batch_add, create_all_mem_witnesses, create_mem_witness, create_nonmem_witness, verify_ni_poe, Commitment,
    MemWitness, NiPoeProof, NonMemWitness,
};
use crate::baselines::{boneh_update, BonehUpdate, UtxoCommitment};
use crate::chain::{update_commitments, verify_commitments, BlockHeader, Coin, Protocol, Transaction};
use crate::rsa_group::{product, PrimeRep};
use crate::wallet::{roll_forward, TxWitness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Compact,
    Boneh,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Compact => "compact",
            Scheme::Boneh => "boneh",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compact" | "compactchain" => Ok(Scheme::Compact),
            "boneh" => Ok(Scheme::Boneh),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operation {
    Update,
    Verify,
    WitnessUpdate,
}

impl std::str::FromStr for Operation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "update" => Ok(Operation::Update),
            "verify" => Ok(Operation::Verify),
            "witness" | "witness-update" => Ok(Operation::WitnessUpdate),
            other => Err(format!("unknown operation {other:?}")),
        }
    }
}

fn random_coins(rng: &mut ChaCha8Rng, n: usize) -> Vec<Coin> {
    (0..n)
        .map(|i| Coin { txid: rng.gen(), index: i as u32, value: rng.gen_range(1..1_000_000), owner: rng.gen() })
        .collect()
}

fn placeholder_witness(proto: &Protocol) -> TxWitness {
    let g = proto.params().generator();
    TxWitness {
        mem: MemWitness(g.clone()),
        nonmem: NonMemWitness { d: g.clone(), b: 0.into(), base: g },
        creation_height: 0,
        witness_height: 0,
    }
}

/// A block of `m` spends on top of a header that already commits to the
/// spent coins and to a watched coin that stays unspent.
pub struct CompactFixture {
    pub proto: Protocol,
    pub prev: BlockHeader,
    pub next: BlockHeader,
    pub txs: Vec<Transaction>,
    pub watched: PrimeRep,
    pub watched_witness: TxWitness,
}

pub fn compact_fixture(proto: &Protocol, m: usize, seed: u64) -> CompactFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = proto.params();
    let spent = random_coins(&mut rng, m);
    let watched_coin = random_coins(&mut rng, 1).pop().unwrap();
    let (genesis, _) = proto.genesis();
    let refs: Vec<&Coin> = spent.iter().chain([&watched_coin]).collect();
    let primes = proto.coin_primes(&refs).expect("hash to prime");
    let watched = primes.last().unwrap().clone();
    let txo = batch_add(&genesis.txo_c, &primes, params);
    let mut prev = BlockHeader { height: 1, txo_c: txo, ..genesis.clone() };
    prev.prev_hash = genesis.hash(params);
    let watched_witness = TxWitness {
        mem: create_mem_witness(&genesis.txo_c, &primes, &watched, params).expect("member"),
        nonmem: create_nonmem_witness(&genesis.stxo_c, &[], &watched, params).expect("outsider"),
        creation_height: 1,
        witness_height: 1,
    };
    let placeholder = placeholder_witness(proto);
    let outputs = random_coins(&mut rng, m);
    let txs: Vec<Transaction> = spent
        .into_iter()
        .zip(outputs)
        .map(|(i, o)| Transaction { inputs: vec![i], outputs: vec![o], witnesses: vec![placeholder.clone()] })
        .collect();
    let up = update_commitments(proto, &prev, &txs).expect("update");
    let next = BlockHeader {
        height: 2,
        prev_hash: prev.hash(params),
        txo_c: up.txo_c,
        stxo_c: up.stxo_c,
        pi_txo: up.pi_txo,
        pi_stxo: up.pi_stxo,
        ..prev.clone()
    };
    CompactFixture { proto: proto.clone(), prev, next, txs, watched, watched_witness }
}

impl CompactFixture {
    pub fn run(&self, op: Operation) -> f64 {
        let t = Instant::now();
        match op {
            Operation::Update => {
                update_commitments(&self.proto, &self.prev, &self.txs).expect("update");
            }
            Operation::Verify => {
                assert!(verify_commitments(&self.proto, &self.prev, &self.txs, &self.next));
            }
            Operation::WitnessUpdate => {
                let block = crate::chain::Block { header: self.next.clone(), transactions: self.txs.clone() };
                let digest = block.digest(&self.proto).expect("digest");
                roll_forward(&self.watched_witness, &self.watched, &digest, &self.prev, &self.next, self.proto.params())
                    .expect("roll forward");
            }
        }
        t.elapsed().as_secs_f64()
    }
}

/// `m` deletions with valid witnesses plus `m` additions, and one watched
/// coin that survives the block.
pub struct BonehFixture {
    pub proto: Protocol,
    pub acc: UtxoCommitment,
    pub inputs: Vec<(Coin, MemWitness)>,
    pub outputs: Vec<Coin>,
    pub watched: PrimeRep,
    pub watched_witness: MemWitness,
    result: BonehUpdate,
}

pub fn boneh_fixture(proto: &Protocol, m: usize, seed: u64) -> BonehFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = proto.params();
    let spent = random_coins(&mut rng, m);
    let outputs = random_coins(&mut rng, m);
    let watched_coin = random_coins(&mut rng, 1).pop().unwrap();
    let refs: Vec<&Coin> = spent.iter().chain([&watched_coin]).collect();
    let mut primes = proto.coin_primes(&refs).expect("hash to prime");
    let g = Commitment(params.generator());
    let acc = UtxoCommitment(batch_add(&g, &primes, params));
    let mut wits = create_all_mem_witnesses(&g, &primes, params);
    let watched = primes.pop().unwrap();
    let watched_witness = wits.pop().unwrap();
    let inputs: Vec<(Coin, MemWitness)> = spent.into_iter().zip(wits).collect();
    let members: Vec<(PrimeRep, MemWitness)> = primes.into_iter().zip(inputs.iter().map(|(_, w)| w.clone())).collect();
    let out_refs: Vec<&Coin> = outputs.iter().collect();
    let out_primes = proto.coin_primes(&out_refs).expect("hash to prime");
    let result = boneh_update(&acc, &members, &out_primes, params).expect("update");
    BonehFixture { proto: proto.clone(), acc, inputs, outputs, watched, watched_witness, result }
}

impl BonehFixture {
    fn primes(&self) -> (Vec<(PrimeRep, MemWitness)>, Vec<PrimeRep>) {
        let in_refs: Vec<&Coin> = self.inputs.iter().map(|(c, _)| c).collect();
        let in_primes = self.proto.coin_primes(&in_refs).expect("hash to prime");
        let members = in_primes.into_iter().zip(self.inputs.iter().map(|(_, w)| w.clone())).collect();
        let out_refs: Vec<&Coin> = self.outputs.iter().collect();
        (members, self.proto.coin_primes(&out_refs).expect("hash to prime"))
    }

    pub fn result(&self) -> &BonehUpdate {
        &self.result
    }

    pub fn run(&self, op: Operation) -> f64 {
        let params = self.proto.params();
        let t = Instant::now();
        match op {
            Operation::Update => {
                let (members, outs) = self.primes();
                boneh_update(&self.acc, &members, &outs, params).expect("update");
            }
            Operation::Verify => {
                let (members, outs) = self.primes();
                let ins: Vec<PrimeRep> = members.into_iter().map(|(p, _)| p).collect();
                let r = &self.result;
                let check = |x, u: &Commitment, w: &Commitment, pi: &NiPoeProof| verify_ni_poe(&x, &u.0, &w.0, pi, params);
                assert!(check(product(&ins), &r.after_delete, &self.acc.0, &r.delete_proof));
                assert!(check(product(&outs), &r.after_delete, &r.commitment.0, &r.add_proof));
            }
            Operation::WitnessUpdate => {
                let (members, outs) = self.primes();
                let ins: Vec<PrimeRep> = members.into_iter().map(|(p, _)| p).collect();
                let w = boneh_witness_update(
                    &self.watched_witness,
                    &self.watched,
                    &self.result.after_delete,
                    &ins,
                    &outs,
                    params,
                );
                debug_assert!(crate::accumulator::verify_mem_witness(&w, &self.watched, &self.result.commitment.0, params));
            }
        }
        t.elapsed().as_secs_f64()
    }
}

/// Moves a surviving member's witness across a deletion of `deleted` (which
/// produced `reduced`) followed by the addition of `added`.
pub fn boneh_witness_update(
    w: &MemWitness,
    member: &PrimeRep,
    reduced: &Commitment,
    deleted: &[PrimeRep],
    added: &[PrimeRep],
    params: &crate::rsa_group::GroupParams,
) -> MemWitness {
    let bz = crate::rsa_group::bezout(member.value(), &product(deleted)).expect("survivor is coprime");
    // a*s + b*P = 1  =>  (w^b * A'^a)^s = A'
    let after_del = crate::rsa_group::pow_signed(&w.0, &bz.b, params)
        .and_then(|x| Ok(x.mul(&crate::rsa_group::pow_signed(&reduced.0, &bz.a, params)?, params)))
        .expect("units");
    MemWitness(batch_add(&Commitment(after_del), added, params).0)
}

/// Least-squares slope of `ln t` against `ln m`.
pub fn loglog_slope(ms: &[usize], seconds: &[f64]) -> f64 {
    assert_eq!(ms.len(), seconds.len());
    let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = seconds.iter().map(|s| s.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Mean of `reps` timed runs after one discarded warm-up.
pub fn mean_time(reps: usize, mut f: impl FnMut() -> f64) -> f64 {
    f();
    (0..reps).map(|_| f()).sum::<f64>() / reps as f64
}
