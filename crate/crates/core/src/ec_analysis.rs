//! Satisfying end components, index sets, absence certificates and the
//! CNF reduction showing that the satisfying-EC search is NP-hard.

use std::collections::BTreeSet;

use certimdp_opt::q;
use rayon::prelude::*;

use crate::automata::{RabinPair, RabinProperty};
use crate::component_certs::{
    generate_ec_certificate, generate_mec_certificate_in, validate_mec_certificate_in, EcCertificate, MecCertificate,
    MecReject,
};
use crate::error::{Error, Result};
use crate::graph::{is_trivial_block, mec_decomposition_in};
use crate::model::{Mdp, MdpBuilder, Pair, StateSet};

/// An end component meeting one chosen pair of every property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SatisfyingEc {
    pub states: StateSet,
    /// Pairs internal to `states`.
    pub pairs: Vec<Pair>,
    pub cert: EcCertificate,
    /// Chosen pair index per property.
    pub chosen: Vec<usize>,
}

/// Limits on the exponential parts of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub k_cap: usize,
    pub combination_cap: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { k_cap: 6, combination_cap: 1 << 20 }
    }
}

impl Limits {
    pub fn check(&self, props: &[&RabinProperty]) -> Result<()> {
        if props.len() > self.k_cap {
            return Err(Error::Limit(format!("{} properties exceed the cap of {}", props.len(), self.k_cap)));
        }
        let n = combination_count(props);
        if n > self.combination_cap {
            return Err(Error::Limit(format!("{n} pair combinations exceed the cap of {}", self.combination_cap)));
        }
        Ok(())
    }
}

pub fn combination_count(props: &[&RabinProperty]) -> u128 {
    props.iter().fold(1u128, |acc, p| acc.saturating_mul(p.pairs.len() as u128))
}

/// All pair-index vectors in lexicographic order, first property most
/// significant. One empty vector when `props` is empty.
pub fn combinations(props: &[&RabinProperty]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for p in props {
        out = out.into_iter().flat_map(|c| (0..p.pairs.len()).map(move |i| [c.clone(), vec![i]].concat())).collect();
    }
    out
}

fn chosen_pairs<'a>(props: &[&'a RabinProperty], combo: &[usize]) -> Vec<&'a RabinPair> {
    props.iter().zip(combo).map(|(p, &i)| &p.pairs[i]).collect()
}

fn e_intersection(domain: &StateSet, pairs: &[&RabinPair]) -> StateSet {
    pairs.iter().fold(domain.clone(), |acc, p| acc.intersection(&p.e).copied().collect())
}

pub fn find_satisfying_ec(m: &Mdp, props: &[RabinProperty]) -> Option<SatisfyingEc> {
    let refs: Vec<&RabinProperty> = props.iter().collect();
    find_satisfying_ec_in(m, &m.all_states(), &refs)
}

/// Searches `M[domain]`: per combination, restrict to the intersection of
/// the `E` sets and return the first non-trivial MEC meeting every `F`.
pub fn find_satisfying_ec_in(m: &Mdp, domain: &StateSet, props: &[&RabinProperty]) -> Option<SatisfyingEc> {
    for combo in combinations(props) {
        let pairs = chosen_pairs(props, &combo);
        let e = e_intersection(domain, &pairs);
        if e.is_empty() {
            continue;
        }
        for block in mec_decomposition_in(m, &e) {
            if is_trivial_block(m, &block) || pairs.iter().any(|p| p.f.is_disjoint(&block)) {
                continue;
            }
            let cert = generate_ec_certificate(m, &block).expect("a MEC is strongly connected");
            let mask = m.mask(&block);
            let ec_pairs = block.iter().flat_map(|&s| m.internal_choices(s, &mask).map(move |c| (s, c))).collect();
            return Some(SatisfyingEc { states: block, pairs: ec_pairs, cert, chosen: combo });
        }
    }
    None
}

/// `(block, I)` with the EC witnessing that all properties in `I` hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub block: usize,
    pub set: Vec<usize>,
    pub ec: SatisfyingEc,
}

/// The relation `I*` over the blocks of a MEC partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSets {
    /// Sorted by block, then by the bitmask of `set`.
    pub entries: Vec<IndexEntry>,
    /// Inclusion-minimal index sets without a satisfying EC, per block.
    pub missing: Vec<(usize, Vec<usize>)>,
}

pub fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |acc, &i| acc | (1 << i))
}

pub fn set_of(mask: u64, k: usize) -> Vec<usize> {
    (0..k).filter(|i| mask & (1 << i) != 0).collect()
}

impl IndexSets {
    pub fn pairs(&self) -> BTreeSet<(usize, Vec<usize>)> {
        self.entries.iter().map(|e| (e.block, e.set.clone())).collect()
    }
}

/// For every non-trivial block and every `I ⊆ [k]`, decides whether an EC
/// inside the block satisfies all properties in `I`. Supersets of a failing
/// set are skipped, so every recorded failure is inclusion-minimal.
pub fn compute_index_sets(m: &Mdp, blocks: &[StateSet], props: &[RabinProperty], limits: Limits) -> Result<IndexSets> {
    let k = props.len();
    let all: Vec<&RabinProperty> = props.iter().collect();
    limits.check(&all)?;
    let per_block: Vec<(Vec<IndexEntry>, Vec<(usize, Vec<usize>)>)> = blocks
        .par_iter()
        .enumerate()
        .map(|(bi, block)| {
            let mut entries = Vec::new();
            let mut missing = Vec::new();
            if is_trivial_block(m, block) {
                return (entries, missing);
            }
            let mut failed: Vec<u64> = Vec::new();
            for mask in 0..(1u64 << k) {
                if failed.iter().any(|f| f & mask == *f) {
                    continue;
                }
                let set = set_of(mask, k);
                let sub: Vec<&RabinProperty> = set.iter().map(|&i| &props[i]).collect();
                match find_satisfying_ec_in(m, block, &sub) {
                    Some(ec) => entries.push(IndexEntry { block: bi, set, ec }),
                    None => {
                        failed.push(mask);
                        missing.push((bi, set));
                    }
                }
            }
            (entries, missing)
        })
        .collect();
    let mut out = IndexSets::default();
    for (e, mi) in per_block {
        out.entries.extend(e);
        out.missing.extend(mi);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    Trivial,
    /// The block misses `F` of the chosen pair of this property.
    MissesF(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsenceEntry {
    pub combo: Vec<usize>,
    /// MEC certificate of `M[domain ∩ ⋂E_i]`; empty when the intersection is.
    pub mec: MecCertificate,
    pub evidence: Vec<Evidence>,
}

/// Witness that no EC of `M[domain]` satisfies all properties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsenceCertificate {
    pub domain: StateSet,
    pub properties: Vec<RabinProperty>,
    /// One entry per combination, in lexicographic order.
    pub entries: Vec<AbsenceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbsenceReject {
    MissingCombination(Vec<usize>),
    BadMecCert(Vec<usize>, MecReject),
    EvidenceFalse(Vec<usize>, usize),
}

pub fn generate_absence_certificate(m: &Mdp, props: &[RabinProperty]) -> Option<AbsenceCertificate> {
    generate_absence_certificate_in(m, &m.all_states(), props)
}

/// `None` iff some combination has a non-trivial MEC meeting every `F`.
pub fn generate_absence_certificate_in(m: &Mdp, domain: &StateSet, props: &[RabinProperty]) -> Option<AbsenceCertificate> {
    let refs: Vec<&RabinProperty> = props.iter().collect();
    let entries = combinations(&refs)
        .into_par_iter()
        .map(|combo| {
            let pairs = chosen_pairs(&refs, &combo);
            let e = e_intersection(domain, &pairs);
            let blocks = if e.is_empty() { Vec::new() } else { mec_decomposition_in(m, &e) };
            let evidence = blocks
                .iter()
                .map(|b| {
                    if is_trivial_block(m, b) {
                        Some(Evidence::Trivial)
                    } else {
                        pairs.iter().position(|p| p.f.is_disjoint(b)).map(Evidence::MissesF)
                    }
                })
                .collect::<Option<Vec<_>>>()?;
            let mec = generate_mec_certificate_in(m, &e, &blocks).expect("MEC decomposition is certifiable");
            Some(AbsenceEntry { combo, mec, evidence })
        })
        .collect::<Option<Vec<_>>>()?;
    Some(AbsenceCertificate { domain: domain.clone(), properties: props.to_vec(), entries })
}

pub fn validate_absence_certificate(m: &Mdp, cert: &AbsenceCertificate) -> std::result::Result<(), AbsenceReject> {
    let refs: Vec<&RabinProperty> = cert.properties.iter().collect();
    let combos = combinations(&refs);
    for (i, combo) in combos.iter().enumerate() {
        let Some(entry) = cert.entries.get(i).filter(|e| &e.combo == combo) else {
            return Err(AbsenceReject::MissingCombination(combo.clone()));
        };
        let pairs = chosen_pairs(&refs, combo);
        let e = e_intersection(&cert.domain, &pairs);
        validate_mec_certificate_in(m, &e, &entry.mec).map_err(|r| AbsenceReject::BadMecCert(combo.clone(), r))?;
        if entry.evidence.len() != entry.mec.blocks.len() {
            return Err(AbsenceReject::EvidenceFalse(combo.clone(), entry.evidence.len().min(entry.mec.blocks.len())));
        }
        for (bi, (block, ev)) in entry.mec.blocks.iter().zip(&entry.evidence).enumerate() {
            let holds = match ev {
                Evidence::Trivial => is_trivial_block(m, block),
                Evidence::MissesF(i) => pairs.get(*i).is_some_and(|p| p.f.is_disjoint(block)),
            };
            if !holds {
                return Err(AbsenceReject::EvidenceFalse(combo.clone(), bi));
            }
        }
    }
    if cert.entries.len() != combos.len() {
        return Err(AbsenceReject::MissingCombination(Vec::new()));
    }
    Ok(())
}

/// Parses DIMACS CNF: a `p cnf` header, `c` comments, zero-terminated
/// clauses of nonzero literals.
pub fn parse_dimacs(text: &str) -> Result<Vec<Vec<i32>>> {
    let mut clauses = Vec::new();
    let mut cur = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('p') {
            continue;
        }
        for tok in line.split_whitespace() {
            let lit: i32 = tok.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad literal {tok}") })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut cur));
            } else {
                cur.push(lit);
            }
        }
    }
    if !cur.is_empty() {
        clauses.push(cur);
    }
    Ok(clauses)
}

/// Star MDP with hub `h` (self-loop `stay`, action `go<v>` to `x<v>`) and
/// variable states `x<v>` returning to the hub. Clause `C_j` becomes the
/// property with pair `({x}, S)` per positive literal and `(S, S ∖ {x})`
/// per negative literal. A satisfying EC exists iff the CNF is satisfiable.
pub fn generate_hard_instance(cnf: &[Vec<i32>]) -> Result<(Mdp, Vec<RabinProperty>)> {
    if cnf.iter().any(Vec::is_empty) {
        return Err(Error::Query("empty clause".into()));
    }
    if cnf.iter().flatten().any(|&l| l == 0) {
        return Err(Error::Query("literal 0 is not a variable".into()));
    }
    let n = cnf.iter().flatten().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0);
    let mut b = MdpBuilder::new();
    b.state("h");
    b.transition("h", "stay", q(1, 1), "h")?;
    for v in 1..=n {
        let x = format!("x{v}");
        b.transition("h", &format!("go{v}"), q(1, 1), &x)?;
        b.transition(&x, "back", q(1, 1), "h")?;
    }
    let m = b.build("h")?;
    let all = m.all_states();
    let props = cnf
        .iter()
        .map(|clause| {
            let mut pairs: Vec<RabinPair> = Vec::new();
            for &lit in clause {
                let x = m.id(&format!("x{}", lit.unsigned_abs())).expect("declared variable");
                let pair = if lit > 0 {
                    RabinPair { f: [x].into(), e: all.clone() }
                } else {
                    RabinPair { f: all.clone(), e: all.iter().copied().filter(|&s| s != x).collect() }
                };
                if !pairs.contains(&pair) {
                    pairs.push(pair);
                }
            }
            RabinProperty::rabin(pairs)
        })
        .collect();
    Ok((m, props))
}
