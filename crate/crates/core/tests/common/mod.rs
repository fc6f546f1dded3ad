//! Brute-force oracles and random instance generators shared by the
//! integration tests. The oracles work on explicit state sets and policy
//! enumeration; they only use the library for model and query types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use certimdp::automata::{Objective, PropertyKind, Quantifier, Query, RabinPair, RabinProperty, Rel, Target, Uba, UnambiguityFlag};
use certimdp::component_certs::{EcCertificate, MecCertificate};
use certimdp::ec_analysis::Evidence;
use certimdp::model::{Choice, Labeling, Mdp, StateSet};
use certimdp::omega::{Body, Bundle, Certifies};
use certimdp::reach::ReachForm;
use certimdp_opt::{q, Q};
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- generators

pub fn random_subset(r: &mut StdRng, n: usize, p: f64) -> StateSet {
    (0..n).filter(|_| r.gen_bool(p)).collect()
}

/// Up to three successors with weights in 1..=3; a lossy draw keeps 3/4 of
/// the mass.
pub fn random_dist(r: &mut StdRng, n: usize, lossy: bool) -> Vec<(usize, Q)> {
    let size = r.gen_range(1..=n.min(3));
    let targets = sample(r, n, size).into_vec();
    let weights: Vec<i64> = (0..size).map(|_| r.gen_range(1..=3)).collect();
    let total: i64 = weights.iter().sum();
    let scale = if lossy && r.gen_bool(0.25) { q(3, 4) } else { Q::one() };
    let mut dist: Vec<(usize, Q)> = targets.into_iter().zip(weights).map(|(t, w)| (t, q(w, total) * &scale)).collect();
    dist.sort_by_key(|(t, _)| *t);
    dist
}

/// Random MDP over `s0..`. Proper instances have full mass everywhere and
/// no deadlocks.
pub fn random_mdp(r: &mut StdRng, min_states: usize, max_states: usize, max_actions: usize, proper: bool) -> Mdp {
    let n = r.gen_range(min_states..=max_states);
    let choices = (0..n)
        .map(|_| {
            let a = if !proper && r.gen_bool(0.1) { 0 } else { r.gen_range(1..=max_actions) };
            (0..a).map(|i| Choice { action: format!("a{i}"), dist: random_dist(r, n, !proper) }).collect()
        })
        .collect();
    Mdp::new((0..n).map(|i| format!("s{i}")).collect(), 0, choices).expect("generated MDP is valid")
}

/// Random DTMC, optionally sub-stochastic.
pub fn random_dtmc(r: &mut StdRng, max_states: usize, lossy: bool) -> Mdp {
    let n = r.gen_range(1..=max_states);
    let choices = (0..n).map(|_| vec![Choice { action: "go".into(), dist: random_dist(r, n, lossy) }]).collect();
    Mdp::new((0..n).map(|i| format!("s{i}")).collect(), 0, choices).expect("generated chain is valid")
}

pub fn random_property(r: &mut StdRng, n: usize, kind: PropertyKind) -> RabinProperty {
    let pairs = (0..r.gen_range(1..=2)).map(|_| RabinPair { f: random_subset(r, n, 0.4), e: random_subset(r, n, 0.7) }).collect();
    RabinProperty { pairs, kind }
}

pub fn random_lambda(r: &mut StdRng) -> Q {
    [q(0, 1), q(1, 4), q(1, 3), q(1, 2), q(2, 3), q(3, 4), q(1, 1)][r.gen_range(0..7)].clone()
}

/// Random state-based query with `1..=max_k` objectives and one relation.
pub fn random_query(r: &mut StdRng, n: usize, max_k: usize) -> Query {
    let quantifier = if r.gen_bool(0.5) { Quantifier::ExistsAnd } else { Quantifier::ForallOr };
    let kind = match quantifier {
        Quantifier::ExistsAnd => PropertyKind::Rabin,
        Quantifier::ForallOr => PropertyKind::Streett,
    };
    let rel = if r.gen_bool(0.7) { Rel::Ge } else { Rel::Gt };
    let k = r.gen_range(1..=max_k);
    let objectives = (0..k)
        .map(|_| Objective { target: Target::Pairs(random_property(r, n, kind)), rel, lambda: random_lambda(r) })
        .collect();
    Query { quantifier, objectives }
}

/// Random labeling over at most `labels` names; every state gets one or two.
pub fn random_labeling(r: &mut StdRng, m: &Mdp, labels: usize) -> Labeling {
    let map: BTreeMap<String, Vec<String>> = m
        .states()
        .map(|s| {
            let mut ls: Vec<String> = (0..r.gen_range(1..=2)).map(|_| format!("l{}", r.gen_range(0..labels))).collect();
            ls.sort();
            ls.dedup();
            (m.name(s).to_string(), ls)
        })
        .collect();
    Labeling::from_map(m, &map).expect("labels name known states")
}

/// One label per block of `blocks`.
pub fn block_labeling(m: &Mdp, blocks: &BTreeSet<StateSet>) -> Labeling {
    let mut map = BTreeMap::new();
    for (i, b) in blocks.iter().enumerate() {
        for &s in b {
            map.insert(m.name(s).to_string(), vec![format!("D{i}")]);
        }
    }
    Labeling::from_map(m, &map).expect("labels name known states")
}

/// Complete deterministic Büchi automaton over the states of `m`.
pub fn random_dba(r: &mut StdRng, m: &Mdp, max_states: usize) -> Uba {
    let nq = r.gen_range(1..=max_states);
    let delta = (0..nq).map(|_| m.states().map(|_| vec![r.gen_range(0..nq)]).collect()).collect();
    let mut accepting: BTreeSet<usize> = (0..nq).filter(|_| r.gen_bool(0.4)).collect();
    if accepting.is_empty() && r.gen_bool(0.8) {
        accepting.insert(r.gen_range(0..nq));
    }
    Uba { num_states: nq, initial: 0, alphabet: m.names().to_vec(), delta, accepting, unambiguous: UnambiguityFlag::Verified }
}

// ---------------------------------------------------------------- linear algebra

/// Gaussian elimination; `None` when the matrix is singular.
pub fn gauss(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        b.swap(c, p);
        let inv = Q::one() / &a[c][c];
        for j in c..n {
            a[c][j] = &a[c][j] * &inv;
        }
        b[c] = &b[c] * &inv;
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in c..n {
                    let d = &f * &a[c][j];
                    a[i][j] -= d;
                }
                let d = &f * &b[c];
                b[i] -= d;
            }
        }
    }
    Some(b)
}

/// Nodes that reach `goal` along `succ`.
pub fn backward_reach(n: usize, goal: &[bool], succ: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = goal.to_vec();
    loop {
        let mut changed = false;
        for v in 0..n {
            if !seen[v] && succ(v).iter().any(|&w| seen[w]) {
                seen[v] = true;
                changed = true;
            }
        }
        if !changed {
            return seen;
        }
    }
}

/// Least solution of `x = r + P x` for a single-action chain: zero where no
/// positive reward is reachable, unique elsewhere.
pub fn least_solution(rows: &[Vec<(usize, Q)>], reward: &[Q]) -> Vec<Q> {
    let n = rows.len();
    let goal: Vec<bool> = reward.iter().map(|r| !r.is_zero()).collect();
    let live = backward_reach(n, &goal, |v| rows[v].iter().map(|(w, _)| *w).collect());
    let idx: Vec<usize> = (0..n).filter(|&v| live[v]).collect();
    let pos: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut a = vec![vec![Q::zero(); idx.len()]; idx.len()];
    let mut b = vec![Q::zero(); idx.len()];
    for (i, &v) in idx.iter().enumerate() {
        a[i][i] += Q::one();
        for (w, p) in &rows[v] {
            if let Some(&j) = pos.get(w) {
                a[i][j] -= p;
            }
        }
        b[i] = reward[v].clone();
    }
    let sol = gauss(a, b).expect("live part is transient");
    let mut x = vec![Q::zero(); n];
    for (i, &v) in idx.iter().enumerate() {
        x[v] = sol[i].clone();
    }
    x
}

// ---------------------------------------------------------------- end components

/// Explicit MDP over `0..n`; `rows[s]` lists the distributions of `s`.
#[derive(Debug, Clone)]
pub struct Arena {
    pub n: usize,
    pub init: usize,
    pub rows: Vec<Vec<Vec<(usize, Q)>>>,
}

impl Arena {
    pub fn of(m: &Mdp) -> Arena {
        Arena { n: m.num_states(), init: m.initial(), rows: m.states().map(|s| m.choices(s).iter().map(|c| c.dist.clone()).collect()).collect() }
    }

    /// `M_{S'}` on the same indices: states outside `keep` lose their actions
    /// and mass into them is dropped.
    pub fn restrict(&self, keep: &StateSet) -> Arena {
        let rows = (0..self.n)
            .map(|s| {
                if !keep.contains(&s) {
                    return Vec::new();
                }
                self.rows[s].iter().map(|d| d.iter().filter(|(t, _)| keep.contains(t)).cloned().collect()).collect()
            })
            .collect();
        Arena { n: self.n, init: self.init, rows }
    }

    /// Distributions of `s` with mass one inside `d`.
    pub fn internal(&self, d: &StateSet, s: usize) -> Vec<usize> {
        (0..self.rows[s].len())
            .filter(|&a| {
                let dist = &self.rows[s][a];
                dist.iter().all(|(t, _)| d.contains(t)) && dist.iter().map(|(_, p)| p).sum::<Q>().is_one()
            })
            .collect()
    }

    fn internal_edges(&self, d: &StateSet, s: usize) -> Vec<usize> {
        self.internal(d, s).into_iter().flat_map(|a| self.rows[s][a].iter().map(|(t, _)| *t).collect::<Vec<_>>()).collect()
    }

    /// Strong connectivity of `D` under its internal distributions.
    pub fn strongly_connected(&self, d: &StateSet) -> bool {
        let Some(&start) = d.iter().next() else { return false };
        let reach = |rev: bool| -> StateSet {
            let mut seen = StateSet::from([start]);
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in d {
                    let edge = if rev { self.internal_edges(d, w).contains(&v) } else { self.internal_edges(d, v).contains(&w) };
                    if edge && seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            seen
        };
        reach(false) == *d && reach(true) == *d
    }

    /// State sets of end components.
    pub fn is_ec(&self, d: &StateSet) -> bool {
        !d.is_empty() && d.iter().all(|&s| !self.internal(d, s).is_empty()) && self.strongly_connected(d)
    }

    pub fn ec_sets(&self) -> Vec<StateSet> {
        assert!(self.n <= 12, "subset enumeration");
        (1u32..(1 << self.n)).map(|mask| (0..self.n).filter(|i| mask & (1 << i) != 0).collect()).filter(|d| self.is_ec(d)).collect()
    }

    /// Maximal EC state sets plus singletons for the remaining states.
    pub fn mecs(&self) -> BTreeSet<StateSet> {
        let ecs = self.ec_sets();
        let mut out: BTreeSet<StateSet> = ecs.iter().filter(|d| !ecs.iter().any(|e| e != *d && d.is_subset(e))).cloned().collect();
        let covered: StateSet = out.iter().flatten().copied().collect();
        out.extend((0..self.n).filter(|s| !covered.contains(s)).map(|s| StateSet::from([s])));
        out
    }

    pub fn is_trivial(&self, block: &StateSet) -> bool {
        block.len() == 1 && !self.is_ec(block)
    }
}

pub fn sat_pair(d: &StateSet, p: &RabinPair) -> bool {
    !p.f.is_disjoint(d) && d.is_subset(&p.e)
}

pub fn sat_rabin(d: &StateSet, prop: &RabinProperty) -> bool {
    prop.pairs.iter().any(|p| sat_pair(d, p))
}

/// All `I ⊆ [k]` such that some EC inside `block` satisfies every property in `I`.
pub fn index_sets(ecs: &[StateSet], block: &StateSet, props: &[RabinProperty]) -> BTreeSet<Vec<usize>> {
    let k = props.len();
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << k) {
        let set: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        if ecs.iter().any(|d| d.is_subset(block) && set.iter().all(|&i| sat_rabin(d, &props[i]))) {
            out.insert(set);
        }
    }
    out
}

/// Whether ranks `r ≥ 1` exist with `r(B) ≥ 1 + min r(successor block)` for
/// every distribution internal to `domain` that leaves its block.
pub fn ranks_exist(a: &Arena, domain: &StateSet, blocks: &[StateSet]) -> bool {
    let block_of: BTreeMap<usize, usize> = blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |&s| (s, i))).collect();
    let mut leaving: Vec<Vec<Vec<usize>>> = vec![Vec::new(); blocks.len()];
    for (bi, b) in blocks.iter().enumerate() {
        for &s in b {
            for act in a.internal(domain, s) {
                let succ: Vec<usize> = a.rows[s][act].iter().map(|(t, _)| block_of[t]).collect();
                if succ.iter().any(|&t| t != bi) {
                    leaving[bi].push(succ);
                }
            }
        }
    }
    let mut ranked = vec![false; blocks.len()];
    loop {
        let next: Vec<usize> =
            (0..blocks.len()).filter(|&b| !ranked[b] && leaving[b].iter().all(|succ| succ.iter().any(|&t| ranked[t]))).collect();
        if next.is_empty() {
            return ranked.iter().all(|&x| x);
        }
        for b in next {
            ranked[b] = true;
        }
    }
}

// ---------------------------------------------------------------- achievable sets

/// Interval of `t` with optional strict ends.
struct Interval {
    lo: Q,
    lo_strict: bool,
    hi: Q,
    hi_strict: bool,
}

impl Interval {
    fn nonempty(&self) -> bool {
        self.lo < self.hi || (self.lo == self.hi && !self.lo_strict && !self.hi_strict)
    }

    fn raise(&mut self, v: Q, strict: bool) {
        if v > self.lo || (v == self.lo && strict) {
            self.lo = v;
            self.lo_strict = strict;
        }
    }

    fn lower(&mut self, v: Q, strict: bool) {
        if v < self.hi || (v == self.hi && strict) {
            self.hi = v;
            self.hi_strict = strict;
        }
    }
}

/// Whether a convex combination of `points` meets `λ` componentwise under
/// `rel`. Supports one or two dimensions: in the plane, the upper frontier
/// of a polygon consists of segments between two points.
pub fn dominated(points: &[Vec<Q>], lambda: &[Q], rel: Rel) -> bool {
    let k = lambda.len();
    assert!(k == 1 || k == 2, "dominance oracle supports k <= 2");
    let strict = rel == Rel::Gt;
    for p in points {
        for qv in points {
            // t·p + (1 − t)·q for t ∈ [0, 1].
            let mut iv = Interval { lo: Q::zero(), lo_strict: false, hi: Q::one(), hi_strict: false };
            let mut ok = true;
            for i in 0..k {
                let d = &p[i] - &qv[i];
                let need = &lambda[i] - &qv[i];
                if d.is_zero() {
                    ok &= rel.holds(&qv[i], &lambda[i]);
                } else if d > Q::zero() {
                    iv.raise(need / d, strict);
                } else {
                    iv.lower(need / d, strict);
                }
            }
            if ok && iv.nonempty() {
                return true;
            }
        }
    }
    false
}

/// Whether some convex combination of `points` violates every
/// `p_i ▷ λ_i`, the failure condition of a disjunctive universal query.
pub fn some_point_violates_all(points: &[Vec<Q>], lambda: &[Q], rel: Rel) -> bool {
    let neg: Vec<Vec<Q>> = points.iter().map(|p| p.iter().map(|v| -v.clone()).collect()).collect();
    let nl: Vec<Q> = lambda.iter().map(|v| -v.clone()).collect();
    // p < λ is −p > −λ and p ≤ λ is −p ≥ −λ.
    dominated(&neg, &nl, rel.flip())
}

/// Cartesian product of action choices; `None` beyond `cap` policies.
pub fn policies(counts: &[usize], cap: usize) -> Option<Vec<Vec<usize>>> {
    let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c.max(1)))?;
    if total > cap {
        return None;
    }
    let mut out = vec![Vec::new()];
    for &c in counts {
        out = out.into_iter().flat_map(|p: Vec<usize>| (0..c.max(1)).map(move |a| [p.clone(), vec![a]].concat())).collect();
    }
    Some(out)
}

/// One quotient action: successor blocks and the direct target mass.
struct QAction {
    succ: Vec<(usize, Q)>,
    target: Vec<Q>,
}

/// Target probabilities of every memoryless deterministic policy on the MEC
/// quotient of `a`. For the existential reading sink `⊥_I` counts for
/// objective `i` iff `i ∈ I`, for the universal reading iff `i ∉ I`.
pub fn quotient_points(a: &Arena, props: &[RabinProperty], quantifier: Quantifier, cap: usize) -> Option<Vec<Vec<Q>>> {
    let k = props.len();
    let ecs = a.ec_sets();
    let blocks: Vec<StateSet> = a.mecs().into_iter().collect();
    let block_of: BTreeMap<usize, usize> = blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |&s| (s, i))).collect();
    let mut acts: Vec<Vec<QAction>> = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        let mut row = Vec::new();
        for &s in b {
            for dist in &a.rows[s] {
                let stays = dist.iter().all(|(t, _)| block_of[t] == bi) && dist.iter().map(|(_, p)| p).sum::<Q>().is_one();
                if stays {
                    continue;
                }
                let mut succ: BTreeMap<usize, Q> = BTreeMap::new();
                for (t, p) in dist {
                    *succ.entry(block_of[t]).or_default() += p;
                }
                row.push(QAction { succ: succ.into_iter().collect(), target: vec![Q::zero(); k] });
            }
        }
        for set in index_sets(&ecs, b, props) {
            let target = (0..k)
                .map(|i| {
                    let hit = set.contains(&i) == (quantifier == Quantifier::ExistsAnd);
                    if hit { Q::one() } else { Q::zero() }
                })
                .collect();
            row.push(QAction { succ: Vec::new(), target });
        }
        acts.push(row);
    }
    let counts: Vec<usize> = acts.iter().map(Vec::len).collect();
    let init = block_of[&a.init];
    let mut points = Vec::new();
    for pol in policies(&counts, cap)? {
        let n = blocks.len();
        let mut point = Vec::with_capacity(k);
        for i in 0..k {
            let mut m = vec![vec![Q::zero(); n]; n];
            let mut r = vec![Q::zero(); n];
            for b in 0..n {
                m[b][b] += Q::one();
                if let Some(act) = acts[b].get(pol[b]) {
                    for (t, p) in &act.succ {
                        m[b][*t] -= p;
                    }
                    r[b] = act.target[i].clone();
                }
            }
            let x = gauss(m, r).expect("the MEC quotient has no end components");
            point.push(x[init].clone());
        }
        points.push(point);
    }
    Some(points)
}

/// Decides a state-based query on `a` by enumeration on its MEC quotient.
pub fn decide(a: &Arena, q: &Query, cap: usize) -> Option<bool> {
    let props: Vec<RabinProperty> = q.objectives.iter().map(|o| o.property().clone()).collect();
    let lambda: Vec<Q> = q.objectives.iter().map(|o| o.lambda.clone()).collect();
    let rel = q.objectives[0].rel;
    assert!(q.objectives.iter().all(|o| o.rel == rel));
    let points = quotient_points(a, &props, q.quantifier, cap)?;
    Some(match q.quantifier {
        Quantifier::ExistsAnd => dominated(&points, &lambda, rel),
        Quantifier::ForallOr => !some_point_violates_all(&points, &lambda, rel),
    })
}

/// Minimum of `|Λ(S')|` over witnessing `S' ∋ s̄`, with the number of
/// policies per decision capped.
pub fn min_witness_labels(m: &Mdp, q: &Query, labels: &Labeling, cap: usize) -> Option<Option<usize>> {
    let a = Arena::of(m);
    let n = m.num_states();
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << n) {
        if mask & (1 << m.initial()) == 0 {
            continue;
        }
        let keep: StateSet = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let cost = labels.labels_of_set(&keep).len();
        if best.is_some_and(|b| b <= cost) {
            continue;
        }
        if decide(&a.restrict(&keep), q, cap)? {
            best = Some(cost);
        }
    }
    Some(best)
}

// ---------------------------------------------------------------- bundle re-check

/// Literal conditions of an EC certificate.
pub fn ec_cert_ok(a: &Arena, c: &EcCertificate) -> bool {
    let d = &c.domain;
    if d.is_empty() || d.iter().any(|&s| s >= a.n) {
        return false;
    }
    if c.f.keys().copied().collect::<StateSet>() != *d || c.b.keys().copied().collect::<StateSet>() != *d {
        return false;
    }
    let hubs: Vec<usize> = d.iter().copied().filter(|s| c.f[s] == 0 && c.b[s] == 0).collect();
    if hubs != [c.hub] {
        return false;
    }
    d.iter().filter(|&&s| s != c.hub).all(|&s| {
        let fwd = a.internal(d, s).iter().any(|&act| a.rows[s][act].iter().any(|(t, _)| c.f[t] < c.f[&s]));
        let bwd = d.iter().any(|&p| c.b[&p] < c.b[&s] && a.internal(d, p).iter().any(|&act| a.rows[p][act].iter().any(|(t, _)| *t == s)));
        fwd && bwd
    })
}

/// Literal conditions of a MEC certificate for `M[domain]`.
pub fn mec_cert_ok(a: &Arena, domain: &StateSet, c: &MecCertificate) -> bool {
    let mut seen = StateSet::new();
    for b in &c.blocks {
        if b.is_empty() || b.iter().any(|s| !seen.insert(*s)) {
            return false;
        }
    }
    if seen != *domain || c.ecs.len() != c.blocks.len() || c.rank.len() != c.blocks.len() {
        return false;
    }
    if c.blocks.iter().zip(&c.ecs).any(|(b, e)| e.domain != *b || !ec_cert_ok(a, e)) {
        return false;
    }
    let block_of: BTreeMap<usize, usize> = c.blocks.iter().enumerate().flat_map(|(i, b)| b.iter().map(move |&s| (s, i))).collect();
    for (bi, b) in c.blocks.iter().enumerate() {
        for &s in b {
            for act in a.internal(domain, s) {
                let succ: Vec<usize> = a.rows[s][act].iter().map(|(t, _)| block_of[t]).collect();
                if succ.iter().any(|&t| t != bi) {
                    let min = succ.iter().map(|&t| c.rank[t]).min().expect("nonempty support");
                    if c.rank[bi] < 1 + min {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn combos(props: &[&RabinProperty]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for p in props {
        let mut next = Vec::new();
        for c in &out {
            for i in 0..p.pairs.len() {
                let mut c2: Vec<usize> = c.clone();
                c2.push(i);
                next.push(c2);
            }
        }
        out = next;
    }
    out
}

fn set_label(set: &[usize]) -> String {
    format!("{{{}}}", set.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
}

fn mask(set: &[usize]) -> u64 {
    set.iter().map(|&i| 1u64 << i).sum()
}

/// One pair of the rebuilt quotient.
struct RPair {
    state: usize,
    key: String,
    succ: Vec<(usize, Q)>,
    /// Mass per sink.
    exits: Vec<(usize, Q)>,
}

impl RPair {
    fn mass(&self) -> Q {
        self.succ.iter().chain(&self.exits).map(|(_, p)| p).sum()
    }
}

/// Re-checks every condition of a bundle for a state-based query: MEC
/// certificate, index entries, satisfying ECs or absence certificates, and
/// the Farkas rows over a quotient rebuilt here from the bundle data.
pub fn recheck_bundle(m: &Mdp, q: &Query, b: &Bundle) -> bool {
    let a = Arena::of(m);
    let claimed = match b.certifies {
        Certifies::Query => q.clone(),
        Certifies::Dual if m.is_proper() => q.dual(),
        Certifies::Dual => return false,
    };
    if b.product.is_some() {
        return false;
    }
    let want_kind = match claimed.quantifier {
        Quantifier::ExistsAnd => PropertyKind::Rabin,
        Quantifier::ForallOr => PropertyKind::Streett,
    };
    if claimed.objectives.iter().any(|o| o.kind() != want_kind || o.lambda < Q::zero() || o.lambda > Q::one() || o.property().pairs.is_empty()) {
        return false;
    }
    let rel = claimed.objectives[0].rel;
    if claimed.objectives.iter().any(|o| o.rel != rel) {
        return false;
    }
    let props: Vec<RabinProperty> = claimed.objectives.iter().map(|o| o.property().clone()).collect();
    let lambda: Vec<Q> = claimed.objectives.iter().map(|o| o.lambda.clone()).collect();
    let k = props.len();
    if !mec_cert_ok(&a, &(0..a.n).collect(), &b.mec) {
        return false;
    }
    let blocks = &b.mec.blocks;
    let index: BTreeSet<(usize, Vec<usize>)> = b.index.iter().cloned().collect();
    if index.len() != b.index.len() {
        return false;
    }
    if index.iter().any(|(bl, set)| *bl >= blocks.len() || set.iter().any(|&i| i >= k) || set.windows(2).any(|w| w[0] >= w[1])) {
        return false;
    }
    let block_of: BTreeMap<usize, usize> = blocks.iter().enumerate().flat_map(|(i, bl)| bl.iter().map(move |&s| (s, i))).collect();
    let mut sinks: Vec<Vec<usize>> = index.iter().map(|(_, s)| s.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    sinks.sort_by_key(|s| mask(s));
    let mut pairs: Vec<RPair> = Vec::new();
    for (bi, bl) in blocks.iter().enumerate() {
        let before = pairs.len();
        for &s in bl {
            for (c, dist) in a.rows[s].iter().enumerate() {
                let stays = dist.iter().all(|(t, _)| block_of[t] == bi) && dist.iter().map(|(_, p)| p).sum::<Q>().is_one();
                if stays {
                    continue;
                }
                let mut succ: BTreeMap<usize, Q> = BTreeMap::new();
                for (t, p) in dist {
                    *succ.entry(block_of[t]).or_default() += p;
                }
                let key = format!("B{bi}:{}:{}", m.name(s), m.choices(s)[c].action);
                pairs.push(RPair { state: bi, key, succ: succ.into_iter().collect(), exits: Vec::new() });
            }
        }
        let mut taus: Vec<&Vec<usize>> = index.iter().filter(|(x, _)| *x == bi).map(|(_, s)| s).collect();
        taus.sort_by_key(|s| mask(s));
        for set in taus {
            let j = sinks.iter().position(|x| x == set).expect("sink exists");
            pairs.push(RPair { state: bi, key: format!("B{bi}:tau{}", set_label(set)), succ: Vec::new(), exits: vec![(j, Q::one())] });
        }
        if pairs.len() == before {
            pairs.push(RPair { state: bi, key: format!("B{bi}:stop"), succ: Vec::new(), exits: Vec::new() });
        }
    }
    let nb = blocks.len();
    // Every block reaches a sink or loses mass.
    let exiting: Vec<bool> = (0..nb).map(|s| pairs.iter().any(|p| p.state == s && (!p.exits.is_empty() || !p.mass().is_one()))).collect();
    let reach = backward_reach(nb, &exiting, |v| pairs.iter().filter(|p| p.state == v).flat_map(|p| p.succ.iter().map(|(t, _)| *t)).collect());
    if reach.iter().any(|r| !r) {
        return false;
    }
    let exists = claimed.quantifier == Quantifier::ExistsAnd;
    let in_target = |j: usize, i: usize| sinks[j].contains(&i) == exists;
    let target_mass = |p: &RPair, i: usize| -> Q { p.exits.iter().filter(|(j, _)| in_target(*j, i)).map(|(_, x)| x).sum() };
    let init = block_of[&m.initial()];

    match (&b.body, claimed.quantifier) {
        (Body::Exists { ecs, y }, Quantifier::ExistsAnd) => {
            let mut covered = BTreeSet::new();
            for e in ecs {
                if !index.contains(&(e.block, e.set.clone())) {
                    return false;
                }
                let d = &e.cert.domain;
                if !d.is_subset(&blocks[e.block]) || !ec_cert_ok(&a, &e.cert) || a.is_trivial(d) || e.chosen.len() != e.set.len() {
                    return false;
                }
                for (&i, &c) in e.set.iter().zip(&e.chosen) {
                    match props[i].pairs.get(c) {
                        Some(p) if sat_pair(d, p) => {}
                        _ => return false,
                    }
                }
                covered.insert((e.block, e.set.clone()));
            }
            if covered != index {
                return false;
            }
            let keys: BTreeSet<&str> = pairs.iter().map(|p| p.key.as_str()).collect();
            if keys.len() != y.len() || y.keys().any(|key| !keys.contains(key.as_str())) {
                return false;
            }
            let yv: Vec<Q> = pairs.iter().map(|p| y[&p.key].clone()).collect();
            if yv.iter().any(|v| v < &Q::zero()) {
                return false;
            }
            for s in 0..nb {
                let out: Q = pairs.iter().zip(&yv).filter(|(p, _)| p.state == s).map(|(_, v)| v).sum();
                let inflow: Q = pairs.iter().zip(&yv).flat_map(|(p, v)| p.succ.iter().filter(|(t, _)| *t == s).map(move |(_, x)| v * x)).sum();
                let delta = if s == init { Q::one() } else { Q::zero() };
                if out - inflow > delta {
                    return false;
                }
            }
            (0..k).all(|i| {
                let got: Q = pairs.iter().zip(&yv).map(|(p, v)| v * target_mass(p, i)).sum();
                rel.holds(&got, &lambda[i])
            })
        }
        (Body::Forall { absence, x, z }, Quantifier::ForallOr) => {
            let mut proven: Vec<(usize, u64)> = Vec::new();
            for ab in absence {
                if ab.block >= nb || ab.set.iter().any(|&i| i >= k) || ab.set.windows(2).any(|w| w[0] >= w[1]) {
                    return false;
                }
                let sub: Vec<&RabinProperty> = ab.set.iter().map(|&i| &props[i]).collect();
                let all = combos(&sub);
                if all.len() != ab.entries.len() {
                    return false;
                }
                for (combo, entry) in all.iter().zip(&ab.entries) {
                    if &entry.combo != combo {
                        return false;
                    }
                    let chosen: Vec<&RabinPair> = sub.iter().zip(combo).map(|(p, &c)| &p.pairs[c]).collect();
                    let e: StateSet = chosen.iter().fold(blocks[ab.block].clone(), |acc, p| acc.intersection(&p.e).copied().collect());
                    if !mec_cert_ok(&a, &e, &entry.mec) || entry.evidence.len() != entry.mec.blocks.len() {
                        return false;
                    }
                    for (bl, ev) in entry.mec.blocks.iter().zip(&entry.evidence) {
                        let holds = match ev {
                            Evidence::Trivial => a.is_trivial(bl),
                            Evidence::MissesF(i) => chosen.get(*i).is_some_and(|p| p.f.is_disjoint(bl)),
                        };
                        if !holds {
                            return false;
                        }
                    }
                }
                proven.push((ab.block, mask(&ab.set)));
            }
            for (bi, bl) in blocks.iter().enumerate() {
                if a.is_trivial(bl) {
                    continue;
                }
                for msk in 0u64..(1 << k) {
                    let set: Vec<usize> = (0..k).filter(|i| msk & (1 << i) != 0).collect();
                    if index.contains(&(bi, set)) {
                        continue;
                    }
                    if !proven.iter().any(|&(pb, j)| pb == bi && j & msk == j) {
                        return false;
                    }
                }
            }
            let names: BTreeSet<String> = (0..nb).map(|i| format!("B{i}")).collect();
            if x.len() != nb || x.keys().any(|key| !names.contains(key)) {
                return false;
            }
            let xv: Vec<Q> = (0..nb).map(|i| x[&format!("B{i}")].clone()).collect();
            if z.len() != k || z.iter().any(|v| v < &Q::zero()) || z.iter().all(Q::is_zero) {
                return false;
            }
            for p in &pairs {
                let mut lhs = xv[p.state].clone();
                for (t, v) in &p.succ {
                    lhs -= v * &xv[*t];
                }
                let rhs: Q = (0..k).map(|i| &z[i] * target_mass(p, i)).sum();
                if lhs > rhs {
                    return false;
                }
            }
            let lz: Q = lambda.iter().zip(z).map(|(l, v)| l * v).sum();
            if !rel.holds(&xv[init], &lz) {
                return false;
            }
            // No end component among the blocks of the rebuilt quotient.
            let inner = Arena {
                n: nb,
                init,
                rows: (0..nb).map(|s| pairs.iter().filter(|p| p.state == s && p.exits.is_empty()).map(|p| p.succ.clone()).collect()).collect(),
            };
            inner.ec_sets().is_empty()
        }
        _ => false,
    }
}

// ---------------------------------------------------------------- reachability forms

/// Rows and per-target rewards of `rf` under a memoryless policy given as
/// one pair index per state.
fn rf_chain(rf: &ReachForm, policy: &[usize]) -> (Vec<Vec<(usize, Q)>>, Vec<Vec<Q>>) {
    let rows = policy.iter().map(|&p| rf.pairs[p].succ.clone()).collect();
    let rewards = (0..rf.targets.len())
        .map(|i| policy.iter().map(|&p| rf.pairs[p].exits.iter().filter(|(f, _)| rf.targets[i][*f]).map(|(_, x)| x).sum()).collect())
        .collect();
    (rows, rewards)
}

/// All memoryless deterministic policies of `rf`; `None` beyond `cap`.
pub fn rf_policies(rf: &ReachForm, cap: usize) -> Option<Vec<Vec<usize>>> {
    let counts: Vec<usize> = (0..rf.states.len()).map(|s| rf.first[s + 1] - rf.first[s]).collect();
    Some(policies(&counts, cap)?.into_iter().map(|p| p.iter().enumerate().map(|(s, &a)| rf.first[s] + a).collect()).collect())
}

/// Per-state probability of reaching target `i` under `policy`.
pub fn rf_values(rf: &ReachForm, policy: &[usize], i: usize) -> Vec<Q> {
    let (rows, rewards) = rf_chain(rf, policy);
    least_solution(&rows, &rewards[i])
}

/// Target probabilities from the initial state under `policy`.
pub fn rf_point(rf: &ReachForm, policy: &[usize]) -> Vec<Q> {
    (0..rf.targets.len()).map(|i| rf_values(rf, policy, i)[rf.initial].clone()).collect()
}

/// Expected number of times each pair is taken from the initial state,
/// restricted to states that still exit or lose mass under `policy`.
pub fn rf_visits(rf: &ReachForm, policy: &[usize]) -> Vec<Q> {
    let n = rf.states.len();
    let exits: Vec<bool> = policy
        .iter()
        .map(|&p| {
            let pr = &rf.pairs[p];
            let mass: Q = pr.succ.iter().chain(&pr.exits).map(|(_, x)| x).sum();
            !pr.exits.is_empty() || !mass.is_one()
        })
        .collect();
    let live = backward_reach(n, &exits, |v| rf.pairs[policy[v]].succ.iter().map(|(t, _)| *t).collect());
    let idx: Vec<usize> = (0..n).filter(|&v| live[v]).collect();
    let pos: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut a = vec![vec![Q::zero(); idx.len()]; idx.len()];
    let mut b = vec![Q::zero(); idx.len()];
    for (i, &v) in idx.iter().enumerate() {
        a[i][i] += Q::one();
        for (t, p) in &rf.pairs[policy[v]].succ {
            if let Some(&j) = pos.get(t) {
                a[j][i] -= p;
            }
        }
        if v == rf.initial {
            b[i] = Q::one();
        }
    }
    let sol = gauss(a, b).expect("live part is transient");
    let mut y = vec![Q::zero(); rf.pairs.len()];
    for (i, &v) in idx.iter().enumerate() {
        y[policy[v]] = sol[i].clone();
    }
    y
}

/// No end component among the non-frontier states of `rf`.
pub fn rf_ec_free(rf: &ReachForm) -> bool {
    let n = rf.states.len();
    let rows = (0..n).map(|s| (rf.first[s]..rf.first[s + 1]).map(|p| rf.pairs[p].succ.clone()).collect()).collect();
    Arena { n, init: rf.initial, rows }.ec_sets().is_empty()
}

// ---------------------------------------------------------------- automata on chains

/// Acceptance probability of every reachable `(s, q)` for a deterministic
/// Büchi automaton on a chain, where `(s, q)` means the automaton is in `q`
/// and reads `s` next. A run is accepted iff it ends up in a closed,
/// mass-preserving SCC of the product that contains an accepting state.
pub fn dba_values(c: &Mdp, a: &Uba) -> BTreeMap<(usize, usize), Q> {
    let start = (c.initial(), a.initial);
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::from([(start, 0)]);
    let mut order = vec![start];
    let mut rows: Vec<Vec<(usize, Q)>> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let (s, qs) = order[i];
        let mut row = Vec::new();
        if let Some(&next) = a.delta[qs][s].first() {
            for ch in c.choices(s) {
                for (t, p) in &ch.dist {
                    let key = (*t, next);
                    let id = *ids.entry(key).or_insert_with(|| {
                        order.push(key);
                        order.len() - 1
                    });
                    row.push((id, p.clone()));
                }
            }
        }
        rows.push(row);
        i += 1;
    }
    let n = order.len();
    let reach: Vec<StateSet> = (0..n)
        .map(|v| {
            let mut seen = StateSet::from([v]);
            let mut stack = vec![v];
            while let Some(u) = stack.pop() {
                for (w, _) in &rows[u] {
                    if seen.insert(*w) {
                        stack.push(*w);
                    }
                }
            }
            seen
        })
        .collect();
    // v lies in a good bottom SCC iff everything it reaches reaches it back,
    // no state there loses mass, and an accepting state occurs.
    let good: Vec<bool> = (0..n)
        .map(|v| {
            reach[v].iter().all(|&w| reach[w].contains(&v))
                && reach[v].iter().all(|&w| rows[w].iter().map(|(_, p)| p).sum::<Q>().is_one())
                && reach[v].iter().any(|&w| a.accepting.contains(&order[w].1))
        })
        .collect();
    let absorbed: Vec<Vec<(usize, Q)>> = (0..n).map(|v| if good[v] { Vec::new() } else { rows[v].clone() }).collect();
    let reward: Vec<Q> = good.iter().map(|&g| if g { Q::one() } else { Q::zero() }).collect();
    let x = least_solution(&absorbed, &reward);
    order.into_iter().zip(x).collect()
}

/// Acceptance probability of the chain `c` restricted to `keep`.
pub fn dba_probability_on(c: &Mdp, a: &Uba, keep: &StateSet) -> Q {
    let choices = c
        .states()
        .map(|s| {
            c.choices(s)
                .iter()
                .map(|ch| Choice {
                    action: ch.action.clone(),
                    dist: if keep.contains(&s) { ch.dist.iter().filter(|(t, _)| keep.contains(t)).cloned().collect() } else { Vec::new() },
                })
                .collect()
        })
        .collect();
    let sub = Mdp::new(c.names().to_vec(), c.initial(), choices).expect("restriction of a valid chain");
    dba_values(&sub, a)[&(c.initial(), a.initial)].clone()
}
