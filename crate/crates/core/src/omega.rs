//! End-to-end certification of Rabin and Streett queries.
//!
//! Pipeline: product with deterministic automata, MEC decomposition with a
//! MEC certificate, index sets, MEC quotient, reachability certificate on
//! the quotient. A bundle holds everything the validator needs; the
//! validator re-checks the product row by row, runs the certificate
//! validators, rebuilds the quotient from the claimed partition and index
//! set, and re-checks the Farkas inequalities.

use std::collections::{BTreeMap, BTreeSet};

use certimdp_opt::rational::{serde_q_map, serde_q_vec};
use certimdp_opt::Q;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::automata::{deterministic_automata, product, Automaton, DeterministicAutomaton, Product, Quantifier, Query, RabinProperty, Rel};
use crate::component_certs::{generate_mec_certificate, validate_ec_certificate, validate_mec_certificate, EcCertificate, MecCertificate, MecReject};
use crate::ec_analysis::{
    compute_index_sets, generate_absence_certificate_in, mask_of, set_of, validate_absence_certificate, AbsenceCertificate,
    AbsenceEntry, AbsenceReject, Evidence, Limits,
};
use crate::error::{Error, Result};
use crate::graph::{is_trivial_block, mec_decomposition};
use crate::io::ModelJson;
use crate::model::{Mdp, StateId, StateSet};
use crate::quotient::{build_quotient, Quotient};
use crate::reach::{
    certify_exists_reach, certify_forall_reach, validate_farkas_xz, validate_farkas_y, ExistsOutcome, FarkasReject, FarkasXZ,
    FarkasY, ForallOutcome, ReachForm,
};

pub const BUNDLE_SCHEMA: &str = "certimdp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certifies {
    /// The bundle proves the query.
    Query,
    /// The bundle proves the dual query, refuting the query.
    Dual,
}

/// EC witness for an index entry `(block, set)`; its domain is `cert.domain`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcEntry {
    pub block: usize,
    pub set: Vec<usize>,
    /// Chosen pair index for every property in `set`, in order.
    pub chosen: Vec<usize>,
    pub cert: EcCertificate,
}

/// Absence entries for `(block, set)`; the properties are those in `set`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsenceRef {
    pub block: usize,
    pub set: Vec<usize>,
    pub entries: Vec<AbsenceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    /// `y` keyed by quotient pair key.
    Exists { ecs: Vec<EcEntry>, y: BTreeMap<String, Q> },
    /// `x` keyed by quotient state name.
    Forall { absence: Vec<AbsenceRef>, x: BTreeMap<String, Q>, z: Vec<Q> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub certifies: Certifies,
    pub product: Option<Product>,
    /// Its blocks are the partition.
    pub mec: MecCertificate,
    pub index: Vec<(usize, Vec<usize>)>,
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Holds(Bundle),
    /// Carries a bundle for the dual query when the MDP is proper.
    Fails(Option<Bundle>),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds(_))
    }

    pub fn bundle(&self) -> Option<&Bundle> {
        match self {
            Verdict::Holds(b) => Some(b),
            Verdict::Fails(b) => b.as_ref(),
        }
    }
}

/// The MDP the query is evaluated on and the query over its states.
pub struct WorkModel {
    pub mdp: Mdp,
    pub product: Option<Product>,
    pub query: Query,
}

pub fn work_model(m: &Mdp, q: &Query, autos: &[Automaton]) -> Result<WorkModel> {
    q.check_well_formed(autos.len())?;
    if !q.uses_automata() {
        return Ok(WorkModel { mdp: m.clone(), product: None, query: q.clone() });
    }
    let dets = deterministic_automata(autos)?;
    let p = product(m, &dets)?;
    let query = p.lift_query(&dets, q);
    Ok(WorkModel { mdp: p.mdp.clone(), product: Some(p), query })
}

fn properties(q: &Query) -> Vec<RabinProperty> {
    q.objectives.iter().map(|o| o.property().clone()).collect()
}

fn lambdas(q: &Query) -> Vec<Q> {
    q.objectives.iter().map(|o| o.lambda.clone()).collect()
}

fn reach_form(qm: &Quotient, quantifier: Quantifier) -> Result<ReachForm> {
    let (g, gbar) = qm.targets();
    let targets = match quantifier {
        Quantifier::ExistsAnd => g,
        Quantifier::ForallOr => gbar,
    };
    ReachForm::from_mdp(&qm.mdp, &qm.sink_states(), &targets)
}

fn y_map(rf: &ReachForm, y: &FarkasY) -> BTreeMap<String, Q> {
    rf.pairs.iter().zip(&y.y).map(|(p, v)| (p.key.clone(), v.clone())).collect()
}

fn x_map(rf: &ReachForm, x: &FarkasXZ) -> BTreeMap<String, Q> {
    rf.states.iter().zip(&x.x).map(|(s, v)| (s.clone(), v.clone())).collect()
}

/// Decides `q` on `m` and returns a certificate bundle for the verdict.
pub fn certify_query(m: &Mdp, q: &Query, autos: &[Automaton], limits: Limits) -> Result<Verdict> {
    if m.is_empty() {
        return Err(Error::Model("empty MDP".into()));
    }
    let rel = q.uniform_rel()?;
    let wm = work_model(m, q, autos)?;
    let work = &wm.mdp;
    let props = properties(&wm.query);
    let k = props.len();
    let blocks = mec_decomposition(work);
    let mec = generate_mec_certificate(work, &blocks).expect("MEC decomposition is certifiable");
    let index = compute_index_sets(work, &blocks, &props, limits)?;
    let pairs: BTreeSet<(usize, Vec<usize>)> = index.pairs();
    let qm = build_quotient(work, &blocks, &pairs, k)?;
    let lambda = lambdas(&wm.query);
    let index_vec: Vec<(usize, Vec<usize>)> = pairs.iter().cloned().collect();
    let proper = m.is_proper();

    let exists_body = |rf: &ReachForm, y: &FarkasY| Body::Exists {
        ecs: index
            .entries
            .iter()
            .map(|e| EcEntry { block: e.block, set: e.set.clone(), chosen: e.ec.chosen.clone(), cert: e.ec.cert.clone() })
            .collect(),
        y: y_map(rf, y),
    };
    let forall_body = |rf: &ReachForm, xz: &FarkasXZ| -> Body {
        let absence = index
            .missing
            .iter()
            .map(|(b, set)| {
                let sub: Vec<RabinProperty> = set.iter().map(|&i| props[i].clone()).collect();
                let cert = generate_absence_certificate_in(work, &blocks[*b], &sub).expect("missing index sets have absence certificates");
                AbsenceRef { block: *b, set: set.clone(), entries: cert.entries }
            })
            .collect();
        Body::Forall { absence, x: x_map(rf, xz), z: xz.z.clone() }
    };
    let bundle = |certifies, body| Bundle { certifies, product: wm.product.clone(), mec: mec.clone(), index: index_vec.clone(), body };

    match wm.query.quantifier {
        Quantifier::ExistsAnd => {
            let rf = reach_form(&qm, Quantifier::ExistsAnd)?;
            match certify_exists_reach(&rf, &lambda, rel)?.outcome {
                ExistsOutcome::Yes(y) => Ok(Verdict::Holds(bundle(Certifies::Query, exists_body(&rf, &y)))),
                ExistsOutcome::No(xz) if proper => {
                    // 1 − x certifies the dual forall query on the complementary sinks.
                    let dual_rf = reach_form(&qm, Quantifier::ForallOr)?;
                    let x = FarkasXZ { x: xz.x.iter().map(|v| Q::one() - v).collect(), z: xz.z };
                    Ok(Verdict::Fails(Some(bundle(Certifies::Dual, forall_body(&dual_rf, &x)))))
                }
                ExistsOutcome::No(_) => Ok(Verdict::Fails(None)),
            }
        }
        Quantifier::ForallOr => {
            let rf = reach_form(&qm, Quantifier::ForallOr)?;
            match certify_forall_reach(&rf, &lambda, rel)? {
                ForallOutcome::Yes(xz) => Ok(Verdict::Holds(bundle(Certifies::Query, forall_body(&rf, &xz)))),
                ForallOutcome::No(y) if proper => {
                    let dual_rf = reach_form(&qm, Quantifier::ExistsAnd)?;
                    Ok(Verdict::Fails(Some(bundle(Certifies::Dual, exists_body(&dual_rf, &y)))))
                }
                ForallOutcome::No(_) => Ok(Verdict::Fails(None)),
            }
        }
    }
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleReject {
    Query(String),
    Product(String),
    Mec(MecReject),
    Index(String),
    /// An `(∃,∧)` index entry lacks a valid satisfying EC.
    Ec { block: usize, set: Vec<usize>, reason: String },
    /// An `(∀,∨)` missing index set lacks a valid absence certificate.
    Absence { block: usize, set: Vec<usize>, reason: String },
    Farkas(String, FarkasReject),
}

impl std::fmt::Display for BundleReject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

type Check = std::result::Result<(), BundleReject>;

/// Re-checks an embedded product against `m` and the automata row by row.
pub fn validate_product(m: &Mdp, autos: &[DeterministicAutomaton], p: &Product) -> std::result::Result<(), String> {
    let n = p.mdp.num_states();
    if p.proj.len() != n || p.auto_states.len() != n || n == 0 {
        return Err("product maps have the wrong length".into());
    }
    let mut index: BTreeMap<(StateId, &[usize]), usize> = BTreeMap::new();
    for v in 0..n {
        let qs = &p.auto_states[v];
        if p.proj[v] >= m.num_states() || qs.len() != autos.len() || qs.iter().zip(autos).any(|(&q, a)| q >= a.num_states) {
            return Err(format!("product state {} is out of range", p.mdp.name(v)));
        }
        if index.insert((p.proj[v], qs.as_slice()), v).is_some() {
            return Err(format!("product state {} is duplicated", p.mdp.name(v)));
        }
    }
    let step = |qs: &[usize], t: StateId| -> Vec<usize> { qs.iter().zip(autos).map(|(&q, a)| a.delta[q][t]).collect() };
    let init_q: Vec<usize> = autos.iter().map(|a| a.initial).collect();
    let init = step(&init_q, m.initial());
    if index.get(&(m.initial(), init.as_slice())) != Some(&p.mdp.initial()) {
        return Err("product initial state is wrong".into());
    }
    for v in 0..n {
        let base = m.choices(p.proj[v]);
        let row = p.mdp.choices(v);
        if base.len() != row.len() {
            return Err(format!("actions of {} differ from the base state", p.mdp.name(v)));
        }
        for (bc, pc) in base.iter().zip(row) {
            if bc.action != pc.action || bc.dist.len() != pc.dist.len() {
                return Err(format!("row {}:{} differs from the base row", p.mdp.name(v), pc.action));
            }
            for (t, pr) in &bc.dist {
                let next = step(&p.auto_states[v], *t);
                let w = index.get(&(*t, next.as_slice())).ok_or_else(|| format!("successor of {} missing", p.mdp.name(v)))?;
                if pc.prob(*w) != *pr {
                    return Err(format!("row {}:{} has a wrong probability", p.mdp.name(v), pc.action));
                }
            }
        }
    }
    Ok(())
}

/// Validates `bundle` as a proof of `q` (or of its dual) on `m`, using only
/// certificate validators, set checks, the quotient rebuild and inequality
/// re-checks.
pub fn validate_bundle(m: &Mdp, q: &Query, autos: &[Automaton], bundle: &Bundle, limits: Limits) -> Check {
    let claimed = match bundle.certifies {
        Certifies::Query => q.clone(),
        Certifies::Dual => {
            if !m.is_proper() {
                return Err(BundleReject::Query("dual bundles need a proper MDP".into()));
            }
            q.dual()
        }
    };
    claimed.check_well_formed(autos.len()).map_err(|e| BundleReject::Query(e.to_string()))?;
    let rel = claimed.uniform_rel().map_err(|e| BundleReject::Query(e.to_string()))?;
    let (work, tq) = if claimed.uses_automata() {
        let dets = deterministic_automata(autos).map_err(|e| BundleReject::Query(e.to_string()))?;
        let p = bundle.product.as_ref().ok_or_else(|| BundleReject::Product("automaton query without product".into()))?;
        validate_product(m, &dets, p).map_err(BundleReject::Product)?;
        (p.mdp.clone(), p.lift_query(&dets, &claimed))
    } else {
        if bundle.product.is_some() {
            return Err(BundleReject::Product("product given for a state-based query".into()));
        }
        (m.clone(), claimed)
    };
    let props = properties(&tq);
    let k = props.len();
    let refs: Vec<&RabinProperty> = props.iter().collect();
    limits.check(&refs).map_err(|e| BundleReject::Query(e.to_string()))?;
    validate_mec_certificate(&work, &bundle.mec).map_err(BundleReject::Mec)?;
    let blocks = &bundle.mec.blocks;
    let index: BTreeSet<(usize, Vec<usize>)> = bundle.index.iter().cloned().collect();
    if index.len() != bundle.index.len() {
        return Err(BundleReject::Index("duplicate index entry".into()));
    }
    let qm = build_quotient(&work, blocks, &index, k).map_err(|e| BundleReject::Index(e.to_string()))?;
    let lambda = lambdas(&tq);
    let rf = reach_form(&qm, tq.quantifier).map_err(|e| BundleReject::Index(e.to_string()))?;

    match (&bundle.body, tq.quantifier) {
        (Body::Exists { ecs, y }, Quantifier::ExistsAnd) => {
            check_ec_entries(&work, blocks, &index, ecs, &props)?;
            let y = by_keys(rf.pairs.iter().map(|p| p.key.as_str()), y, "y")?;
            validate_farkas_y(&rf, &FarkasY { y }, &lambda, rel).map_err(|r| BundleReject::Farkas("y".into(), r))
        }
        (Body::Forall { absence, x, z }, Quantifier::ForallOr) => {
            check_absence(&work, blocks, &index, absence, &props)?;
            let x = by_keys(rf.states.iter().map(String::as_str), x, "x")?;
            validate_farkas_xz(&rf, &FarkasXZ { x, z: z.clone() }, &lambda, rel).map_err(|r| BundleReject::Farkas("x,z".into(), r))
        }
        _ => Err(BundleReject::Query("bundle body does not match the quantifier".into())),
    }
}

fn by_keys<'a>(keys: impl Iterator<Item = &'a str>, map: &BTreeMap<String, Q>, what: &str) -> std::result::Result<Vec<Q>, BundleReject> {
    let keys: Vec<&str> = keys.collect();
    if keys.len() != map.len() || keys.iter().any(|k| !map.contains_key(*k)) {
        return Err(BundleReject::Farkas(format!("{what} keys differ from the rebuilt quotient"), FarkasReject::Malformed("keys".into())));
    }
    Ok(keys.iter().map(|k| map[*k].clone()).collect())
}

/// Every index entry has an EC inside its block that is non-trivial,
/// strongly connected by certificate, and meets the chosen pairs literally.
fn check_ec_entries(
    work: &Mdp,
    blocks: &[StateSet],
    index: &BTreeSet<(usize, Vec<usize>)>,
    ecs: &[EcEntry],
    props: &[RabinProperty],
) -> Check {
    let mut covered = BTreeSet::new();
    for e in ecs {
        let fail = |reason: &str| BundleReject::Ec { block: e.block, set: e.set.clone(), reason: reason.into() };
        if !index.contains(&(e.block, e.set.clone())) {
            return Err(fail("entry not in the index set"));
        }
        let d = &e.cert.domain;
        if !d.is_subset(&blocks[e.block]) {
            return Err(fail("EC leaves its block"));
        }
        validate_ec_certificate(work, &e.cert).map_err(|r| fail(&format!("{r:?}")))?;
        if is_trivial_block(work, d) {
            return Err(fail("EC is trivial"));
        }
        if e.chosen.len() != e.set.len() {
            return Err(fail("one chosen pair per property required"));
        }
        for (&i, &c) in e.set.iter().zip(&e.chosen) {
            let Some(pair) = props[i].pairs.get(c) else {
                return Err(fail("chosen pair out of range"));
            };
            if pair.f.is_disjoint(d) || !d.is_subset(&pair.e) {
                return Err(fail("EC does not satisfy the chosen pair"));
            }
        }
        covered.insert((e.block, e.set.clone()));
    }
    if let Some((b, s)) = index.iter().find(|e| !covered.contains(e)) {
        return Err(BundleReject::Ec { block: *b, set: s.clone(), reason: "no EC witness".into() });
    }
    Ok(())
}

/// Every non-trivial block and index set outside the index relation is
/// covered by a valid absence certificate for some subset.
fn check_absence(
    work: &Mdp,
    blocks: &[StateSet],
    index: &BTreeSet<(usize, Vec<usize>)>,
    absence: &[AbsenceRef],
    props: &[RabinProperty],
) -> Check {
    let k = props.len();
    let mut proven: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for a in absence {
        let fail = |reason: String| BundleReject::Absence { block: a.block, set: a.set.clone(), reason };
        if a.block >= blocks.len() || a.set.iter().any(|&i| i >= k) || a.set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("entry out of range".into()));
        }
        let cert = AbsenceCertificate {
            domain: blocks[a.block].clone(),
            properties: a.set.iter().map(|&i| props[i].clone()).collect(),
            entries: a.entries.clone(),
        };
        validate_absence_certificate(work, &cert).map_err(|r: AbsenceReject| fail(format!("{r:?}")))?;
        proven.entry(a.block).or_default().push(mask_of(&a.set));
    }
    for (b, block) in blocks.iter().enumerate() {
        if is_trivial_block(work, block) {
            continue;
        }
        for mask in 0..(1u64 << k) {
            let set = set_of(mask, k);
            if index.contains(&(b, set.clone())) {
                continue;
            }
            let covered = proven.get(&b).is_some_and(|ms| ms.iter().any(|&j| j & mask == j));
            if !covered {
                return Err(BundleReject::Absence { block: b, set, reason: "no absence certificate".into() });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EcJson {
    #[serde(rename = "D")]
    domain: Vec<String>,
    f: BTreeMap<String, String>,
    b: BTreeMap<String, String>,
    hub: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MecJson {
    blocks: Vec<EcJson>,
    r: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductJson {
    model: ModelJson,
    base: Vec<String>,
    auto: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexJson {
    block: usize,
    set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EcEntryJson {
    block: usize,
    set: Vec<usize>,
    chosen: Vec<usize>,
    ec: EcJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EvidenceJson {
    Trivial,
    MissesF(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AbsenceEntryJson {
    combo: Vec<usize>,
    mec: MecJson,
    evidence: Vec<EvidenceJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AbsenceJson {
    block: usize,
    set: Vec<usize>,
    entries: Vec<AbsenceEntryJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExistsJson {
    ecs: Vec<EcEntryJson>,
    #[serde(with = "serde_q_map")]
    y: BTreeMap<String, Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForallJson {
    absence: Vec<AbsenceJson>,
    #[serde(with = "serde_q_map")]
    x: BTreeMap<String, Q>,
    #[serde(with = "serde_q_vec")]
    z: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleJson {
    schema: String,
    certifies: Certifies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    product: Option<ProductJson>,
    mec: MecJson,
    index: Vec<IndexJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exists: Option<ExistsJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forall: Option<ForallJson>,
}

fn names(m: &Mdp, set: &StateSet) -> Vec<String> {
    set.iter().map(|&s| m.name(s).to_string()).collect()
}

fn ec_to_json(m: &Mdp, c: &EcCertificate) -> EcJson {
    let nat = |map: &BTreeMap<StateId, u64>| map.iter().map(|(s, v)| (m.name(*s).to_string(), v.to_string())).collect();
    EcJson { domain: names(m, &c.domain), f: nat(&c.f), b: nat(&c.b), hub: m.name(c.hub).to_string() }
}

fn mec_to_json(m: &Mdp, c: &MecCertificate) -> MecJson {
    MecJson { blocks: c.ecs.iter().map(|e| ec_to_json(m, e)).collect(), r: c.rank.iter().map(u64::to_string).collect() }
}

/// Canonical JSON of a standalone MEC certificate, as in the `mec` field of
/// a bundle.
pub fn mec_certificate_to_json(m: &Mdp, c: &MecCertificate) -> String {
    serde_json::to_string_pretty(&mec_to_json(m, c)).expect("certificate serializes")
}

/// Strict inverse of [`mec_certificate_to_json`].
pub fn mec_certificate_from_json(m: &Mdp, text: &str) -> Result<MecCertificate> {
    let j: MecJson = serde_json::from_str(text).map_err(|e| schema_err(e.to_string()))?;
    mec_from_json(m, &j)
}

fn schema_err(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn parse_nat(s: &str) -> Result<u64> {
    let v: u64 = s.parse().map_err(|_| schema_err(format!("expected a natural, got {s:?}")))?;
    if v.to_string() != s {
        return Err(schema_err(format!("natural {s:?} is not canonical")));
    }
    Ok(v)
}

fn state_id(m: &Mdp, name: &str) -> Result<StateId> {
    m.id(name).ok_or_else(|| schema_err(format!("unknown state {name}")))
}

fn state_set(m: &Mdp, list: &[String]) -> Result<StateSet> {
    let set = list.iter().map(|n| state_id(m, n)).collect::<Result<StateSet>>()?;
    if set.len() != list.len() {
        return Err(schema_err("duplicate state in set"));
    }
    Ok(set)
}

fn ec_from_json(m: &Mdp, j: &EcJson) -> Result<EcCertificate> {
    let nat = |map: &BTreeMap<String, String>| -> Result<BTreeMap<StateId, u64>> {
        map.iter().map(|(s, v)| Ok((state_id(m, s)?, parse_nat(v)?))).collect()
    };
    Ok(EcCertificate { domain: state_set(m, &j.domain)?, f: nat(&j.f)?, b: nat(&j.b)?, hub: state_id(m, &j.hub)? })
}

fn mec_from_json(m: &Mdp, j: &MecJson) -> Result<MecCertificate> {
    let ecs = j.blocks.iter().map(|e| ec_from_json(m, e)).collect::<Result<Vec<_>>>()?;
    Ok(MecCertificate {
        blocks: ecs.iter().map(|e| e.domain.clone()).collect(),
        ecs,
        rank: j.r.iter().map(|r| parse_nat(r)).collect::<Result<_>>()?,
    })
}

/// Canonical bundle JSON. State names refer to the product when present.
pub fn bundle_to_json(m: &Mdp, b: &Bundle) -> String {
    let work = b.product.as_ref().map_or(m, |p| &p.mdp);
    let product = b.product.as_ref().map(|p| ProductJson {
        model: ModelJson::from_mdp(&p.mdp),
        base: p.proj.iter().map(|&s| m.name(s).to_string()).collect(),
        auto: p.auto_states.clone(),
    });
    let (exists, forall) = match &b.body {
        Body::Exists { ecs, y } => (
            Some(ExistsJson {
                ecs: ecs
                    .iter()
                    .map(|e| EcEntryJson { block: e.block, set: e.set.clone(), chosen: e.chosen.clone(), ec: ec_to_json(work, &e.cert) })
                    .collect(),
                y: y.clone(),
            }),
            None,
        ),
        Body::Forall { absence, x, z } => (
            None,
            Some(ForallJson {
                absence: absence
                    .iter()
                    .map(|a| AbsenceJson {
                        block: a.block,
                        set: a.set.clone(),
                        entries: a
                            .entries
                            .iter()
                            .map(|e| AbsenceEntryJson {
                                combo: e.combo.clone(),
                                mec: mec_to_json(work, &e.mec),
                                evidence: e
                                    .evidence
                                    .iter()
                                    .map(|ev| match ev {
                                        Evidence::Trivial => EvidenceJson::Trivial,
                                        Evidence::MissesF(i) => EvidenceJson::MissesF(*i),
                                    })
                                    .collect(),
                            })
                            .collect(),
                    })
                    .collect(),
                x: x.clone(),
                z: z.clone(),
            }),
        ),
    };
    let j = BundleJson {
        schema: BUNDLE_SCHEMA.into(),
        certifies: b.certifies,
        product,
        mec: mec_to_json(work, &b.mec),
        index: b.index.iter().map(|(block, set)| IndexJson { block: *block, set: set.clone() }).collect(),
        exists,
        forall,
    };
    serde_json::to_string_pretty(&j).expect("bundle serializes")
}

/// Strict parse: unknown fields, non-canonical rationals or naturals, and
/// unknown state names are schema errors.
pub fn bundle_from_json(m: &Mdp, text: &str) -> Result<Bundle> {
    let j: BundleJson = serde_json::from_str(text).map_err(|e| schema_err(e.to_string()))?;
    if j.schema != BUNDLE_SCHEMA {
        return Err(schema_err(format!("expected schema {BUNDLE_SCHEMA}")));
    }
    let product = match &j.product {
        None => None,
        Some(p) => {
            let mdp = p.model.to_mdp()?;
            if p.base.len() != mdp.num_states() || p.auto.len() != mdp.num_states() {
                return Err(schema_err("product maps have the wrong length"));
            }
            let proj = p.base.iter().map(|n| state_id(m, n)).collect::<Result<Vec<_>>>()?;
            Some(Product { mdp, proj, auto_states: p.auto.clone() })
        }
    };
    let work = product.as_ref().map_or(m, |p| &p.mdp);
    let mec = mec_from_json(work, &j.mec)?;
    let index = j.index.iter().map(|e| (e.block, e.set.clone())).collect();
    let body = match (&j.exists, &j.forall) {
        (Some(e), None) => Body::Exists {
            ecs: e
                .ecs
                .iter()
                .map(|x| Ok(EcEntry { block: x.block, set: x.set.clone(), chosen: x.chosen.clone(), cert: ec_from_json(work, &x.ec)? }))
                .collect::<Result<_>>()?,
            y: e.y.clone(),
        },
        (None, Some(f)) => Body::Forall {
            absence: f
                .absence
                .iter()
                .map(|a| {
                    Ok(AbsenceRef {
                        block: a.block,
                        set: a.set.clone(),
                        entries: a
                            .entries
                            .iter()
                            .map(|e| {
                                Ok(AbsenceEntry {
                                    combo: e.combo.clone(),
                                    mec: mec_from_json(work, &e.mec)?,
                                    evidence: e
                                        .evidence
                                        .iter()
                                        .map(|ev| match ev {
                                            EvidenceJson::Trivial => Evidence::Trivial,
                                            EvidenceJson::MissesF(i) => Evidence::MissesF(*i),
                                        })
                                        .collect(),
                                })
                            })
                            .collect::<Result<_>>()?,
                    })
                })
                .collect::<Result<_>>()?,
            x: f.x.clone(),
            z: f.z.clone(),
        },
        _ => return Err(schema_err("exactly one of exists/forall required")),
    };
    Ok(Bundle { certifies: j.certifies, product, mec, index, body })
}

/// Whether `rel` and the thresholds of a bundle's claim are consistent with
/// a quantifier: a convenience for callers printing verdicts.
pub fn claim_symbol(rel: Rel) -> &'static str {
    rel.symbol()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::parse_query;
    use crate::model::tests::example_mdp;

    const PSI: &str = r#"{"quantifier":"exists-and","objectives":[
        {"pairs":[{"F":["s1"],"E":"*"},{"F":"*","E":["s4"]}],"rel":">=","lambda":"1/4"},
        {"pairs":[{"F":"*","E":["s2","s3","s4"]}],"rel":">=","lambda":"3/4"}]}"#;
    const PHI: &str = r#"{"quantifier":"forall-or","objectives":[
        {"pairs":[{"F":["s1"],"E":"*"},{"F":"*","E":["s4"]}],"rel":">=","lambda":"1/4"},
        {"pairs":[{"F":"*","E":["s2","s3","s4"]}],"rel":">=","lambda":"1/4"}]}"#;

    #[test]
    fn running_example_psi_holds_with_a_valid_bundle() {
        let m = example_mdp();
        let q = parse_query(&m, PSI).unwrap();
        let v = certify_query(&m, &q, &[], Limits::default()).unwrap();
        let Verdict::Holds(b) = &v else { panic!("expected holds") };
        assert_eq!(b.mec.rank, vec![2, 1, 1]);
        validate_bundle(&m, &q, &[], b, Limits::default()).unwrap();
        let text = bundle_to_json(&m, b);
        let back = bundle_from_json(&m, &text).unwrap();
        assert_eq!(&back, b);
        assert_eq!(bundle_to_json(&m, &back), text);
    }

    #[test]
    fn running_example_phi_holds() {
        let m = example_mdp();
        let q = parse_query(&m, PHI).unwrap();
        let v = certify_query(&m, &q, &[], Limits::default()).unwrap();
        let Verdict::Holds(b) = &v else { panic!("expected holds") };
        validate_bundle(&m, &q, &[], b, Limits::default()).unwrap();
        let text = bundle_to_json(&m, b);
        assert_eq!(&bundle_from_json(&m, &text).unwrap(), b);
    }

    #[test]
    fn certain_conjunction_fails_with_a_dual_bundle() {
        let m = example_mdp();
        let q = parse_query(&m, &PSI.replace("1/4", "1").replace("3/4", "1")).unwrap();
        let v = certify_query(&m, &q, &[], Limits::default()).unwrap();
        let Verdict::Fails(Some(b)) = &v else { panic!("expected a dual bundle") };
        assert_eq!(b.certifies, Certifies::Dual);
        validate_bundle(&m, &q, &[], b, Limits::default()).unwrap();
        let mut flipped = b.clone();
        flipped.certifies = Certifies::Query;
        assert!(validate_bundle(&m, &q, &[], &flipped, Limits::default()).is_err());
    }

    #[test]
    fn dropping_a_used_tau_is_rejected() {
        let m = example_mdp();
        let q = parse_query(&m, PSI).unwrap();
        let Verdict::Holds(b) = certify_query(&m, &q, &[], Limits::default()).unwrap() else { panic!() };
        let mut bad = b.clone();
        bad.index.retain(|e| e != &(1, vec![1]));
        assert!(validate_bundle(&m, &q, &[], &bad, Limits::default()).is_err());
    }

    #[test]
    fn strict_schema() {
        let m = example_mdp();
        let q = parse_query(&m, PSI).unwrap();
        let Verdict::Holds(b) = certify_query(&m, &q, &[], Limits::default()).unwrap() else { panic!() };
        let text = bundle_to_json(&m, &b);
        let extra = text.replacen("\"schema\"", "\"extra\": 1,\n  \"schema\"", 1);
        assert!(bundle_from_json(&m, &extra).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let y = v["exists"]["y"].as_object_mut().unwrap();
        let key = y.keys().next().unwrap().clone();
        y.insert(key, serde_json::Value::String("2/4".into()));
        assert!(bundle_from_json(&m, &v.to_string()).is_err());
    }
}
