//! End-component certificates, MEC certificates and rank certificates.
//!
//! Every certificate is generated by graph search and checked by a validator
//! that only evaluates local conditions, never calling a generator.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::graph::{bfs, internal_successors};
use crate::model::{Mdp, Pair, StateId, StateSet};

/// Witness that `M[D]` is strongly connected: every non-hub state has an
/// internal step decreasing `f` and an internal predecessor with smaller `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcCertificate {
    pub domain: StateSet,
    pub f: BTreeMap<StateId, u64>,
    pub b: BTreeMap<StateId, u64>,
    pub hub: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EcReject {
    Malformed(String),
    NoHub,
    MultipleHubs,
    Forward(StateId),
    Backward(StateId),
}

/// Hub is the smallest id of `D`; `f` and `b` are BFS layers towards and
/// from the hub along `D`-internal pairs. `None` iff `M[D]` is not strongly
/// connected.
pub fn generate_ec_certificate(m: &Mdp, d: &StateSet) -> Option<EcCertificate> {
    let hub = *d.iter().next()?;
    let mask = m.mask(d);
    let succ: BTreeMap<StateId, Vec<StateId>> = d.iter().map(|&s| (s, internal_successors(m, s, &mask))).collect();
    let mut pred: BTreeMap<StateId, Vec<StateId>> = d.iter().map(|&s| (s, Vec::new())).collect();
    for (&s, ts) in &succ {
        for t in ts {
            pred.get_mut(t).expect("internal successor lies in D").push(s);
        }
    }
    let b = bfs(d, hub, |s| succ[&s].clone());
    let f = bfs(d, hub, |s| pred[&s].clone());
    (b.len() == d.len() && f.len() == d.len()).then(|| EcCertificate { domain: d.clone(), f, b, hub })
}

pub fn validate_ec_certificate(m: &Mdp, cert: &EcCertificate) -> Result<(), EcReject> {
    let d = &cert.domain;
    if d.is_empty() || d.iter().any(|&s| s >= m.num_states()) {
        return Err(EcReject::Malformed("domain empty or out of range".into()));
    }
    let keys_f: StateSet = cert.f.keys().copied().collect();
    let keys_b: StateSet = cert.b.keys().copied().collect();
    if &keys_f != d || &keys_b != d {
        return Err(EcReject::Malformed("f and b must be total on the domain".into()));
    }
    let hubs: Vec<StateId> = d.iter().copied().filter(|s| cert.f[s] == 0 && cert.b[s] == 0).collect();
    match hubs.as_slice() {
        [] => return Err(EcReject::NoHub),
        [h] if *h == cert.hub => {}
        [_] => return Err(EcReject::Malformed("hub field disagrees with f and b".into())),
        _ => return Err(EcReject::MultipleHubs),
    }
    let mask = m.mask(d);
    for &s in d {
        if s == cert.hub {
            continue;
        }
        let forward = m
            .internal_choices(s, &mask)
            .any(|c| m.choices(s)[c].support().any(|t| cert.f[&t] < cert.f[&s]));
        if !forward {
            return Err(EcReject::Forward(s));
        }
        let backward = d.iter().any(|&p| {
            cert.b[&p] < cert.b[&s] && m.internal_choices(p, &mask).any(|c| m.choices(p)[c].prob(s) > num_traits::Zero::zero())
        });
        if !backward {
            return Err(EcReject::Backward(s));
        }
    }
    Ok(())
}

/// Witness that a partition is the MEC decomposition of `M[domain]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MecCertificate {
    pub blocks: Vec<StateSet>,
    pub ecs: Vec<EcCertificate>,
    pub rank: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MecReject {
    NotAPartition,
    BlockNotEc(usize, EcReject),
    MissingRank,
    RankViolation(Pair),
}

/// Pairs of `M[domain]` leaving their block, as `(pair, block of source)`.
fn leaving_pairs(m: &Mdp, mask: &[bool], block_of: &BTreeMap<StateId, usize>) -> Vec<(Pair, usize)> {
    let mut out = Vec::new();
    for (&s, &bi) in block_of {
        for c in m.internal_choices(s, mask) {
            if m.choices(s)[c].support().any(|t| block_of[&t] != bi) {
                out.push(((s, c), bi));
            }
        }
    }
    out
}

fn block_index(blocks: &[StateSet]) -> BTreeMap<StateId, usize> {
    blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |&s| (s, i))).collect()
}

pub fn generate_mec_certificate(m: &Mdp, blocks: &[StateSet]) -> Option<MecCertificate> {
    generate_mec_certificate_in(m, &m.all_states(), blocks)
}

/// MEC certificate for `M[domain]`. Ranks are BFS rounds on the quotient
/// graph: blocks without leaving pairs get 1, a block whose every leaving
/// pair reaches an already ranked block gets the next round number.
pub fn generate_mec_certificate_in(m: &Mdp, domain: &StateSet, blocks: &[StateSet]) -> Option<MecCertificate> {
    let block_of = block_index(blocks);
    if block_of.len() != domain.len() || block_of.keys().ne(domain.iter()) || blocks.iter().map(BTreeSet::len).sum::<usize>() != domain.len() {
        return None;
    }
    let ecs = blocks.par_iter().map(|b| generate_ec_certificate(m, b)).collect::<Option<Vec<_>>>()?;
    let mask = m.mask(domain);
    let leaving = leaving_pairs(m, &mask, &block_of);
    let mut by_block: Vec<Vec<Pair>> = vec![Vec::new(); blocks.len()];
    for (p, bi) in leaving {
        by_block[bi].push(p);
    }
    let mut rank: Vec<Option<u64>> = vec![None; blocks.len()];
    let mut round = 1u64;
    loop {
        let ready: Vec<usize> = (0..blocks.len())
            .filter(|&bi| rank[bi].is_none())
            .filter(|&bi| {
                by_block[bi]
                    .iter()
                    .all(|&p| m.choice(p).support().any(|t| rank[block_of[&t]].is_some_and(|r| r < round)))
            })
            .collect();
        if ready.is_empty() {
            break;
        }
        for bi in ready {
            rank[bi] = Some(round);
        }
        round += 1;
    }
    let rank = rank.into_iter().collect::<Option<Vec<_>>>()?;
    Some(MecCertificate { blocks: blocks.to_vec(), ecs, rank })
}

pub fn validate_mec_certificate(m: &Mdp, cert: &MecCertificate) -> Result<(), MecReject> {
    validate_mec_certificate_in(m, &m.all_states(), cert)
}

pub fn validate_mec_certificate_in(m: &Mdp, domain: &StateSet, cert: &MecCertificate) -> Result<(), MecReject> {
    let mut seen = StateSet::new();
    for b in &cert.blocks {
        if b.is_empty() || b.iter().any(|s| !seen.insert(*s)) {
            return Err(MecReject::NotAPartition);
        }
    }
    if &seen != domain {
        return Err(MecReject::NotAPartition);
    }
    if cert.ecs.len() != cert.blocks.len() {
        return Err(MecReject::BlockNotEc(cert.ecs.len().min(cert.blocks.len()), EcReject::Malformed("missing EC certificate".into())));
    }
    for (i, (b, ec)) in cert.blocks.iter().zip(&cert.ecs).enumerate() {
        if &ec.domain != b {
            return Err(MecReject::BlockNotEc(i, EcReject::Malformed("certificate domain differs from block".into())));
        }
        validate_ec_certificate(m, ec).map_err(|e| MecReject::BlockNotEc(i, e))?;
    }
    if cert.rank.len() != cert.blocks.len() {
        return Err(MecReject::MissingRank);
    }
    let block_of = block_index(&cert.blocks);
    let mask = m.mask(domain);
    for (p, bi) in leaving_pairs(m, &mask, &block_of) {
        let min = m.choice(p).support().map(|t| cert.rank[block_of[&t]]).min().expect("internal pairs have support");
        if cert.rank[bi] < 1 + min {
            return Err(MecReject::RankViolation(p));
        }
    }
    Ok(())
}

/// Witness that `Pr^min_s(◇F) > 0` for every state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankCertificate {
    pub target: StateSet,
    pub rank: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankReject {
    Malformed,
    TargetNotZero(StateId),
    Deadlock(StateId),
    Violation(Pair),
}

/// Ranks by backward BFS: a state is ranked in round `j` once each of its
/// pairs has a successor ranked earlier. `None` iff some state has
/// `Pr^min(◇F) = 0`.
pub fn generate_rank_certificate(m: &Mdp, target: &StateSet) -> Option<RankCertificate> {
    let mut rank: Vec<Option<u64>> = m.states().map(|s| target.contains(&s).then_some(0)).collect();
    let mut round = 1u64;
    loop {
        let ready: Vec<StateId> = m
            .states()
            .filter(|&s| rank[s].is_none() && !m.choices(s).is_empty())
            .filter(|&s| m.choices(s).iter().all(|c| c.support().any(|t| rank[t].is_some_and(|r| r < round))))
            .collect();
        if ready.is_empty() {
            break;
        }
        for s in ready {
            rank[s] = Some(round);
        }
        round += 1;
    }
    let rank = rank.into_iter().collect::<Option<Vec<_>>>()?;
    Some(RankCertificate { target: target.clone(), rank })
}

/// Deadlocks outside `F` are rejected: they never reach `F`.
pub fn validate_rank_certificate(m: &Mdp, cert: &RankCertificate) -> Result<(), RankReject> {
    if cert.rank.len() != m.num_states() || cert.target.iter().any(|&s| s >= m.num_states()) {
        return Err(RankReject::Malformed);
    }
    for s in m.states() {
        if cert.target.contains(&s) {
            if cert.rank[s] != 0 {
                return Err(RankReject::TargetNotZero(s));
            }
            continue;
        }
        if m.choices(s).is_empty() {
            return Err(RankReject::Deadlock(s));
        }
        for (c, ch) in m.choices(s).iter().enumerate() {
            let ok = ch.support().map(|t| cert.rank[t]).min().is_some_and(|min| cert.rank[s] >= 1 + min);
            if !ok {
                return Err(RankReject::Violation((s, c)));
            }
        }
    }
    Ok(())
}
