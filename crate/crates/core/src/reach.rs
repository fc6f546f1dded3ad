//! Multi-objective reachability with Farkas certificates.
//!
//! A reachability form splits the states into a frontier, whose members are
//! treated as absorbing, and the remaining states, each with at least one
//! pair. Mass a pair does not assign to any state is lost.
//!
//! `∃ ⋀ Pr(◇G_i) ▷ λ_i` holds iff some `y ≥ 0` has `Aᵀy ≤ δ_in` and
//! `Tᵀy ▷ λ`. On EC-free forms `∀ ⋁ Pr(◇G_i) ▷ λ_i` holds iff some `x` and
//! nonzero `z ≥ 0` have `Ax ≤ Tz` and `x(s̄) ▷ λᵀz`.

use std::collections::VecDeque;

use certimdp_opt::linsys::solve_linear_system;
use certimdp_opt::lp::{lp_solve, LinearProgram, Relation, Sense};
use certimdp_opt::{q, Q};
use num_traits::{One, Zero};

use crate::automata::Rel;
use crate::component_certs::{generate_mec_certificate, MecCertificate};
use crate::error::{Error, Result};
use crate::graph::{is_trivial_block, mec_decomposition};
use crate::model::{Choice, Mdp, Pair, StateId, StateSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RfPair {
    pub state: usize,
    pub key: String,
    /// Mass into non-frontier states.
    pub succ: Vec<(usize, Q)>,
    /// Mass into frontier states.
    pub exits: Vec<(usize, Q)>,
}

impl RfPair {
    pub fn loss(&self) -> Q {
        Q::one() - self.succ.iter().chain(&self.exits).map(|(_, p)| p).sum::<Q>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachForm {
    pub states: Vec<String>,
    pub frontier: Vec<String>,
    pub initial: usize,
    /// Grouped by state in increasing order.
    pub pairs: Vec<RfPair>,
    /// Pairs of state `s` are `first[s]..first[s + 1]`.
    pub first: Vec<usize>,
    /// `targets[i][f]`: whether frontier state `f` belongs to `G_i`.
    pub targets: Vec<Vec<bool>>,
    /// MDP state of every non-frontier state.
    pub origin_states: Vec<StateId>,
    /// MDP state of every frontier state.
    pub origin_frontier: Vec<StateId>,
    /// MDP pair of every pair; `None` for the stop pair of a deadlock.
    pub origin_pairs: Vec<Option<Pair>>,
}

impl ReachForm {
    /// Builds the form of `m` with the given frontier. Deadlocks outside the
    /// frontier receive a zero-mass `stop` pair. Errors if the initial state
    /// is on the frontier, a target leaves the frontier, or some state can
    /// neither reach the frontier nor lose mass.
    pub fn from_mdp(m: &Mdp, frontier: &StateSet, targets: &[StateSet]) -> Result<ReachForm> {
        if m.is_empty() {
            return Err(Error::ReachForm("empty MDP".into()));
        }
        if frontier.contains(&m.initial()) {
            return Err(Error::ReachForm("initial state lies on the frontier".into()));
        }
        if targets.iter().any(|g| !g.is_subset(frontier)) {
            return Err(Error::ReachForm("target outside the frontier".into()));
        }
        let origin_states: Vec<StateId> = m.states().filter(|s| !frontier.contains(s)).collect();
        let origin_frontier: Vec<StateId> = frontier.iter().copied().collect();
        let mut local = vec![(false, 0usize); m.num_states()];
        for (i, &s) in origin_states.iter().enumerate() {
            local[s] = (false, i);
        }
        for (i, &s) in origin_frontier.iter().enumerate() {
            local[s] = (true, i);
        }
        let mut pairs = Vec::new();
        let mut first = vec![0];
        let mut origin_pairs = Vec::new();
        for (i, &s) in origin_states.iter().enumerate() {
            if m.choices(s).is_empty() {
                pairs.push(RfPair { state: i, key: format!("{}:stop", m.name(s)), succ: Vec::new(), exits: Vec::new() });
                origin_pairs.push(None);
            }
            for (c, ch) in m.choices(s).iter().enumerate() {
                let (mut succ, mut exits) = (Vec::new(), Vec::new());
                for (t, p) in &ch.dist {
                    match local[*t] {
                        (true, f) => exits.push((f, p.clone())),
                        (false, j) => succ.push((j, p.clone())),
                    }
                }
                pairs.push(RfPair { state: i, key: m.pair_key((s, c)), succ, exits });
                origin_pairs.push(Some((s, c)));
            }
            first.push(pairs.len());
        }
        let rf = ReachForm {
            states: origin_states.iter().map(|&s| m.name(s).to_string()).collect(),
            frontier: origin_frontier.iter().map(|&s| m.name(s).to_string()).collect(),
            initial: local[m.initial()].1,
            pairs,
            first,
            targets: targets.iter().map(|g| origin_frontier.iter().map(|f| g.contains(f)).collect()).collect(),
            origin_states,
            origin_frontier,
            origin_pairs,
        };
        let exits = rf.can_exit(|_| true);
        if let Some(s) = exits.iter().position(|e| !e) {
            return Err(Error::ReachForm(format!("state {} cannot reach the frontier", rf.states[s])));
        }
        Ok(rf)
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn k(&self) -> usize {
        self.targets.len()
    }

    pub fn pairs_of(&self, s: usize) -> std::ops::Range<usize> {
        self.first[s]..self.first[s + 1]
    }

    pub fn target_mass(&self, p: usize, i: usize) -> Q {
        self.pairs[p].exits.iter().filter(|(f, _)| self.targets[i][*f]).map(|(_, x)| x).sum()
    }

    /// `Σ_i z_i · P(p, G_i)`.
    pub fn weighted_mass(&self, p: usize, z: &[Q]) -> Q {
        (0..self.k()).filter(|&i| !z[i].is_zero()).map(|i| &z[i] * self.target_mass(p, i)).sum()
    }

    /// Same pairs, targets replaced.
    pub fn with_targets(&self, targets: Vec<Vec<bool>>) -> ReachForm {
        ReachForm { targets, ..self.clone() }
    }

    /// Adds a frontier state `loss` absorbing every lost mass and targets
    /// `(F ∖ G_i) ∪ {loss}`. Pair indices are unchanged.
    pub fn complement(&self) -> ReachForm {
        let mut rf = self.clone();
        let loss = rf.frontier.len();
        rf.frontier.push("loss".into());
        rf.origin_frontier.push(usize::MAX);
        for p in &mut rf.pairs {
            let l = p.loss();
            if !l.is_zero() {
                p.exits.push((loss, l));
            }
        }
        rf.targets = self.targets.iter().map(|g| g.iter().map(|b| !b).chain([true]).collect()).collect();
        rf
    }

    /// States from which, under some pair selection admitted by `allowed`,
    /// the frontier or a lossy pair is reached.
    fn can_exit(&self, allowed: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut done = vec![false; self.n()];
        let mut queue = VecDeque::new();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.n()];
        for (pi, p) in self.pairs.iter().enumerate() {
            if !allowed(pi) {
                continue;
            }
            if !p.exits.is_empty() || !p.loss().is_zero() {
                if !done[p.state] {
                    done[p.state] = true;
                    queue.push_back(p.state);
                }
            }
            for (t, _) in &p.succ {
                preds[*t].push(p.state);
            }
        }
        while let Some(t) = queue.pop_front() {
            for &s in &preds[t] {
                if !done[s] {
                    done[s] = true;
                    queue.push_back(s);
                }
            }
        }
        done
    }

    /// The non-frontier part as an MDP; exiting mass is dropped.
    pub fn inner_mdp(&self) -> Mdp {
        let choices = (0..self.n())
            .map(|s| {
                self.pairs_of(s)
                    .map(|p| Choice { action: self.pairs[p].key.clone(), dist: self.pairs[p].succ.clone() })
                    .collect()
            })
            .collect();
        Mdp::new(self.states.clone(), self.initial, choices).expect("inner part of a valid form")
    }

    /// No end component among non-frontier states.
    pub fn is_ec_free(&self) -> bool {
        let inner = self.inner_mdp();
        mec_decomposition(&inner).iter().all(|b| is_trivial_block(&inner, b))
    }

    /// States that reach the frontier or lose mass under `policy`.
    fn transient(&self, policy: &[usize]) -> Vec<bool> {
        self.can_exit(|p| policy[self.pairs[p].state] == p)
    }

    /// Least solution of `v = r_σ + P_σ v`.
    pub fn evaluate(&self, policy: &[usize], reward: &[Q]) -> Vec<Q> {
        let live = self.transient(policy);
        let idx: Vec<usize> = (0..self.n()).filter(|&s| live[s]).collect();
        let mut pos = vec![usize::MAX; self.n()];
        for (i, &s) in idx.iter().enumerate() {
            pos[s] = i;
        }
        let mut a = vec![vec![Q::zero(); idx.len()]; idx.len()];
        let mut b = vec![Q::zero(); idx.len()];
        for (i, &s) in idx.iter().enumerate() {
            a[i][i] += Q::one();
            let p = policy[s];
            for (t, pr) in &self.pairs[p].succ {
                if live[*t] {
                    a[i][pos[*t]] -= pr;
                }
            }
            b[i] = reward[p].clone();
        }
        let sol = solve_linear_system(&a, &b).expect("square system").unique().expect("transient part is nonsingular");
        let mut v = vec![Q::zero(); self.n()];
        for (i, &s) in idx.iter().enumerate() {
            v[s] = sol[i].clone();
        }
        v
    }

    /// Expected visits of every pair under `policy` from the initial state;
    /// zero on states that never exit, since they contribute to no target.
    pub fn visiting_times(&self, policy: &[usize]) -> Vec<Q> {
        let live = self.transient(policy);
        let idx: Vec<usize> = (0..self.n()).filter(|&s| live[s]).collect();
        let mut pos = vec![usize::MAX; self.n()];
        for (i, &s) in idx.iter().enumerate() {
            pos[s] = i;
        }
        let mut a = vec![vec![Q::zero(); idx.len()]; idx.len()];
        let mut b = vec![Q::zero(); idx.len()];
        for (i, &s) in idx.iter().enumerate() {
            a[i][i] += Q::one();
            for (t, pr) in &self.pairs[policy[s]].succ {
                if live[*t] {
                    a[pos[*t]][i] -= pr;
                }
            }
            if s == self.initial {
                b[i] = Q::one();
            }
        }
        let sol = solve_linear_system(&a, &b).expect("square system").unique().expect("transient part is nonsingular");
        let mut y = vec![Q::zero(); self.pairs.len()];
        for (i, &s) in idx.iter().enumerate() {
            y[policy[s]] = sol[i].clone();
        }
        y
    }

    /// `Tᵀy`: the target probabilities certified by `y`.
    pub fn point_of(&self, y: &[Q]) -> Vec<Q> {
        (0..self.k())
            .map(|i| self.pairs.iter().enumerate().map(|(p, _)| &y[p] * self.target_mass(p, i)).sum())
            .collect()
    }

    fn q_value(&self, p: usize, reward: &[Q], v: &[Q]) -> Q {
        let mut val = reward[p].clone();
        for (t, pr) in &self.pairs[p].succ {
            val += pr * &v[*t];
        }
        val
    }

    /// Policy iteration for `max_σ E[Σ reward]` followed by the choice of an
    /// optimal policy that exits from every state. Ties go to the smallest
    /// pair index.
    pub fn optimal_policy(&self, reward: &[Q]) -> (Vec<usize>, Vec<Q>) {
        let mut policy: Vec<usize> = (0..self.n()).map(|s| self.first[s]).collect();
        let mut v = self.evaluate(&policy, reward);
        loop {
            let mut improved = false;
            for s in 0..self.n() {
                let cur = self.q_value(policy[s], reward, &v);
                let mut best = (cur.clone(), policy[s]);
                for p in self.pairs_of(s) {
                    let val = self.q_value(p, reward, &v);
                    if val > best.0 {
                        best = (val, p);
                    }
                }
                if best.0 > cur {
                    policy[s] = best.1;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
            v = self.evaluate(&policy, reward);
        }
        // Attractor towards exits along value-preserving pairs.
        let optimal: Vec<bool> = (0..self.pairs.len()).map(|p| self.q_value(p, reward, &v) == v[self.pairs[p].state]).collect();
        let mut chosen: Vec<Option<usize>> = vec![None; self.n()];
        let mut frontier: Vec<usize> = Vec::new();
        for (p, pr) in self.pairs.iter().enumerate() {
            if optimal[p] && chosen[pr.state].is_none() && (!pr.exits.is_empty() || !pr.loss().is_zero()) {
                chosen[pr.state] = Some(p);
                frontier.push(pr.state);
            }
        }
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for (p, pr) in self.pairs.iter().enumerate() {
                if optimal[p] && chosen[pr.state].is_none() && pr.succ.iter().any(|(t, _)| chosen[*t].is_some() && !next.contains(t)) {
                    chosen[pr.state] = Some(p);
                    next.push(pr.state);
                }
            }
            frontier = next;
        }
        let proper: Vec<usize> = chosen.iter().zip(&policy).map(|(c, p)| c.unwrap_or(*p)).collect();
        (proper, v)
    }
}

/// `y` indexed like the pairs of the form.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasY {
    pub y: Vec<Q>,
}

/// `x` indexed like the non-frontier states, `z` like the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasXZ {
    pub x: Vec<Q>,
    pub z: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExistsOutcome {
    Yes(FarkasY),
    /// Certificate for the negation on the complemented form.
    No(FarkasXZ),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForallOutcome {
    Yes(FarkasXZ),
    /// Certificate for the negation on the complemented form.
    No(FarkasY),
}

/// A memoryless deterministic scheduler with its target probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointScheduler {
    pub policy: Vec<usize>,
    pub point: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistsRun {
    pub outcome: ExistsOutcome,
    /// Every scheduler found, in discovery order.
    pub schedulers: Vec<PointScheduler>,
    /// Mixture weights over `schedulers` when the outcome is `Yes`.
    pub gamma: Vec<Q>,
}

pub const ROUND_CAP: usize = 10_000;

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decides `∃σ ⋀ Pr^σ(◇G_i) ▷ λ_i` by separating `λ` from the downward
/// closure of the achievable points found so far.
pub fn certify_exists_reach(rf: &ReachForm, lambda: &[Q], rel: Rel) -> Result<ExistsRun> {
    let k = rf.k();
    if lambda.len() != k || k == 0 {
        return Err(Error::Query(format!("{} thresholds for {} targets", lambda.len(), k)));
    }
    if rel == Rel::Ge && lambda.iter().all(|l| l <= &Q::zero()) {
        let y = FarkasY { y: vec![Q::zero(); rf.pairs.len()] };
        return Ok(ExistsRun { outcome: ExistsOutcome::Yes(y), schedulers: Vec::new(), gamma: Vec::new() });
    }
    let mut found: Vec<PointScheduler> = Vec::new();
    for _ in 0..ROUND_CAP {
        let z = if found.is_empty() {
            vec![q(1, k as i64); k]
        } else {
            let (d, z) = separation(&found, lambda);
            let inside = match rel {
                Rel::Ge => d <= Q::zero(),
                Rel::Gt => d < Q::zero(),
            };
            if inside {
                let gamma = mixture(&found, lambda, rel);
                let mut y = vec![Q::zero(); rf.pairs.len()];
                for (g, s) in gamma.iter().zip(&found) {
                    if g.is_zero() {
                        continue;
                    }
                    for (acc, v) in y.iter_mut().zip(rf.visiting_times(&s.policy)) {
                        *acc += g * v;
                    }
                }
                return Ok(ExistsRun { outcome: ExistsOutcome::Yes(FarkasY { y }), schedulers: found, gamma });
            }
            z
        };
        let reward: Vec<Q> = (0..rf.pairs.len()).map(|p| rf.weighted_mass(p, &z)).collect();
        let (policy, v) = rf.optimal_policy(&reward);
        let y = rf.visiting_times(&policy);
        let point = rf.point_of(&y);
        let (zq, zl) = (dot(&z, &point), dot(&z, lambda));
        let fails = match rel {
            Rel::Ge => zq < zl,
            Rel::Gt => zq <= zl,
        };
        if fails {
            return Ok(ExistsRun { outcome: ExistsOutcome::No(FarkasXZ { x: v, z }), schedulers: found, gamma: Vec::new() });
        }
        found.push(PointScheduler { policy, point });
    }
    Err(Error::Limit(format!("no verdict after {ROUND_CAP} rounds")))
}

/// `max_{z ≥ 0, Σz = 1} zᵀλ − max_j zᵀq_j`.
fn separation(found: &[PointScheduler], lambda: &[Q]) -> (Q, Vec<Q>) {
    let k = lambda.len();
    let mut lp = LinearProgram::new(Sense::Maximize);
    let z: Vec<usize> = (0..k).map(|i| lp.add_nonneg(format!("z{i}"))).collect();
    let w = lp.add_free("w");
    for s in found {
        let mut row: Vec<(usize, Q)> = z.iter().zip(&s.point).map(|(&v, p)| (v, p.clone())).collect();
        row.push((w, -Q::one()));
        lp.add_constraint(row, Relation::Le, Q::zero());
    }
    lp.add_constraint(z.iter().map(|&v| (v, Q::one())).collect(), Relation::Eq, Q::one());
    let mut obj: Vec<(usize, Q)> = z.iter().zip(lambda).map(|(&v, l)| (v, l.clone())).collect();
    obj.push((w, -Q::one()));
    lp.set_objective(Sense::Maximize, obj);
    let sol = lp_solve(&lp).optimal().expect("separation LP is feasible and bounded");
    (sol.objective, z.iter().map(|&v| sol.values[v].clone()).collect())
}

/// Convex weights whose mixture meets the thresholds.
fn mixture(found: &[PointScheduler], lambda: &[Q], rel: Rel) -> Vec<Q> {
    let mut lp = LinearProgram::new(Sense::Maximize);
    let g: Vec<usize> = (0..found.len()).map(|j| lp.add_nonneg(format!("g{j}"))).collect();
    let t = lp.add_var("t", None, Some(Q::one()));
    for (i, l) in lambda.iter().enumerate() {
        let mut row: Vec<(usize, Q)> = g.iter().zip(found).map(|(&v, s)| (v, s.point[i].clone())).collect();
        if rel == Rel::Gt {
            row.push((t, -Q::one()));
        }
        lp.add_constraint(row, Relation::Ge, l.clone());
    }
    lp.add_constraint(g.iter().map(|&v| (v, Q::one())).collect(), Relation::Eq, Q::one());
    let obj = if rel == Rel::Gt { vec![(t, Q::one())] } else { Vec::new() };
    lp.set_objective(if rel == Rel::Gt { Sense::Maximize } else { Sense::Feasibility }, obj);
    let sol = lp_solve(&lp).optimal().expect("threshold lies in the convex hull");
    g.iter().map(|&v| sol.values[v].clone()).collect()
}

/// Decides `∀σ ⋁ Pr^σ(◇G_i) ▷ λ_i` on an EC-free form, via the existential
/// query for the complemented targets with thresholds `1 − λ_i` and the
/// flipped relation.
pub fn certify_forall_reach(rf: &ReachForm, lambda: &[Q], rel: Rel) -> Result<ForallOutcome> {
    if !rf.is_ec_free() {
        return Err(Error::ReachForm("end component outside the frontier".into()));
    }
    let comp = rf.complement();
    let flipped: Vec<Q> = lambda.iter().map(|l| Q::one() - l).collect();
    Ok(match certify_exists_reach(&comp, &flipped, rel.flip())?.outcome {
        ExistsOutcome::Yes(y) => ForallOutcome::No(y),
        ExistsOutcome::No(FarkasXZ { x, z }) => {
            ForallOutcome::Yes(FarkasXZ { x: x.into_iter().map(|v| Q::one() - v).collect(), z })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FarkasReject {
    Malformed(String),
    Negative(usize),
    Flow(usize),
    Threshold(usize),
    NegativeZ(usize),
    ZeroZ,
    Row(usize),
    InitialThreshold,
    NotEcFree,
}

/// Re-checks `y ≥ 0`, `Aᵀy ≤ δ_in` and `Tᵀy ▷ λ` row by row.
pub fn validate_farkas_y(rf: &ReachForm, cert: &FarkasY, lambda: &[Q], rel: Rel) -> std::result::Result<(), FarkasReject> {
    if cert.y.len() != rf.pairs.len() || lambda.len() != rf.k() {
        return Err(FarkasReject::Malformed("dimension mismatch".into()));
    }
    if let Some(p) = cert.y.iter().position(|v| v < &Q::zero()) {
        return Err(FarkasReject::Negative(p));
    }
    let mut inflow = vec![Q::zero(); rf.n()];
    for (p, pr) in rf.pairs.iter().enumerate() {
        for (t, x) in &pr.succ {
            inflow[*t] += &cert.y[p] * x;
        }
    }
    for (s, inflow) in inflow.iter().enumerate() {
        let out: Q = rf.pairs_of(s).map(|p| &cert.y[p]).sum();
        let delta = if s == rf.initial { Q::one() } else { Q::zero() };
        if out - inflow > delta {
            return Err(FarkasReject::Flow(s));
        }
    }
    for (i, got) in rf.point_of(&cert.y).iter().enumerate() {
        if !rel.holds(got, &lambda[i]) {
            return Err(FarkasReject::Threshold(i));
        }
    }
    Ok(())
}

/// Re-checks `z ≥ 0`, `z ≠ 0`, `Ax ≤ Tz`, `x(s̄) ▷ λᵀz` and EC-freeness.
pub fn validate_farkas_xz(rf: &ReachForm, cert: &FarkasXZ, lambda: &[Q], rel: Rel) -> std::result::Result<(), FarkasReject> {
    if cert.x.len() != rf.n() || cert.z.len() != rf.k() || lambda.len() != rf.k() {
        return Err(FarkasReject::Malformed("dimension mismatch".into()));
    }
    if let Some(i) = cert.z.iter().position(|v| v < &Q::zero()) {
        return Err(FarkasReject::NegativeZ(i));
    }
    if cert.z.iter().all(Q::is_zero) {
        return Err(FarkasReject::ZeroZ);
    }
    if (0..rf.n()).any(|s| rf.pairs_of(s).is_empty()) {
        return Err(FarkasReject::Malformed("state without pairs".into()));
    }
    for (p, pr) in rf.pairs.iter().enumerate() {
        let mut lhs = cert.x[pr.state].clone();
        for (t, v) in &pr.succ {
            lhs -= v * &cert.x[*t];
        }
        if lhs > rf.weighted_mass(p, &cert.z) {
            return Err(FarkasReject::Row(p));
        }
    }
    if !rel.holds(&cert.x[rf.initial], &dot(lambda, &cert.z)) {
        return Err(FarkasReject::InitialThreshold);
    }
    if !rf.is_ec_free() {
        return Err(FarkasReject::NotEcFree);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opt {
    Max,
    Min,
}

/// Pointwise brackets on `Pr^opt_s(◇G_i)` from a primal/dual pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AllStateBounds {
    pub lower: Vec<Q>,
    pub upper: Vec<Q>,
    pub gap: Q,
    pub x: Vec<Q>,
    pub y: Vec<Q>,
    /// For `Min`: certifies the end components whose states are fixed to 0.
    pub zero_cert: Option<MecCertificate>,
}

fn zero_set(rf: &ReachForm) -> (Vec<bool>, MecCertificate) {
    let inner = rf.inner_mdp();
    let blocks = mec_decomposition(&inner);
    let mut zero = vec![false; rf.n()];
    for b in &blocks {
        if !is_trivial_block(&inner, b) {
            for &s in b {
                zero[s] = true;
            }
        }
    }
    let cert = generate_mec_certificate(&inner, &blocks).expect("MEC decomposition is certifiable");
    (zero, cert)
}

/// Solves the primal and dual single-objective LPs for target `i`.
/// `Max`: `x − Δ ≤ Pr^max ≤ x`. `Min`: `x ≤ Pr^min ≤ x + Δ`, with the states
/// of non-trivial end components fixed to 0 and certified by a MEC
/// certificate of the inner MDP.
pub fn all_state_bounds(rf: &ReachForm, opt: Opt, i: usize) -> Result<AllStateBounds> {
    if i >= rf.k() {
        return Err(Error::Query(format!("no target {i}")));
    }
    let (zero, zero_cert) = match opt {
        Opt::Max => (vec![false; rf.n()], None),
        Opt::Min => {
            let (z, c) = zero_set(rf);
            (z, Some(c))
        }
    };
    let (primal, dual) = bound_lps(rf, opt, i, &zero);
    let x = lp_solve(&primal).optimal().ok_or_else(|| Error::Infeasible("primal bound LP has no optimum".into()))?.values;
    let y = lp_solve(&dual).optimal().ok_or_else(|| Error::Infeasible("dual bound LP has no optimum".into()))?.values;
    let mut b = bounds_from_pair(rf, opt, i, &x, &y)?;
    b.zero_cert = zero_cert;
    Ok(b)
}

/// Primal over states, dual over pairs. States in `zero` are fixed to 0
/// and their pairs dropped.
fn bound_lps(rf: &ReachForm, opt: Opt, i: usize, zero: &[bool]) -> (LinearProgram, LinearProgram) {
    let (psense, dsense) = match opt {
        Opt::Max => (Sense::Minimize, Sense::Maximize),
        Opt::Min => (Sense::Maximize, Sense::Minimize),
    };
    let mut primal = LinearProgram::new(psense);
    let x: Vec<usize> = (0..rf.n())
        .map(|s| if zero[s] { primal.add_var(format!("x{s}"), Some(Q::zero()), Some(Q::zero())) } else { primal.add_nonneg(format!("x{s}")) })
        .collect();
    let mut dual = LinearProgram::new(dsense);
    let y: Vec<usize> = (0..rf.pairs.len())
        .map(|p| {
            let fixed = zero[rf.pairs[p].state];
            dual.add_var(format!("y{p}"), Some(Q::zero()), if fixed { Some(Q::zero()) } else { None })
        })
        .collect();
    let prel = if opt == Opt::Max { Relation::Ge } else { Relation::Le };
    for (p, pr) in rf.pairs.iter().enumerate() {
        if zero[pr.state] {
            continue;
        }
        let mut row = vec![(x[pr.state], Q::one())];
        row.extend(pr.succ.iter().map(|(t, v)| (x[*t], -v.clone())));
        primal.add_constraint(row, prel, rf.target_mass(p, i));
    }
    primal.set_objective(psense, x.iter().map(|&v| (v, Q::one())).collect());
    let drel = if opt == Opt::Max { Relation::Le } else { Relation::Ge };
    let mut rows: Vec<Vec<(usize, Q)>> = vec![Vec::new(); rf.n()];
    for (p, pr) in rf.pairs.iter().enumerate() {
        if zero[pr.state] {
            continue;
        }
        rows[pr.state].push((y[p], Q::one()));
        for (t, v) in &pr.succ {
            rows[*t].push((y[p], -v.clone()));
        }
    }
    for (s, row) in rows.into_iter().enumerate() {
        if !zero[s] {
            dual.add_constraint(row, drel, Q::one());
        }
    }
    dual.set_objective(dsense, (0..rf.pairs.len()).map(|p| (y[p], rf.target_mass(p, i))).collect());
    (primal, dual)
}

/// Brackets from any feasible primal/dual pair; errors if either is
/// infeasible.
pub fn bounds_from_pair(rf: &ReachForm, opt: Opt, i: usize, x: &[Q], y: &[Q]) -> Result<AllStateBounds> {
    let zero = match opt {
        Opt::Max => vec![false; rf.n()],
        Opt::Min => zero_set(rf).0,
    };
    let (primal, dual) = bound_lps(rf, opt, i, &zero);
    if !primal.is_feasible_point(x) || !dual.is_feasible_point(y) {
        return Err(Error::Infeasible("bound pair is not feasible".into()));
    }
    let (pv, dv) = (primal.objective_value(x), dual.objective_value(y));
    let gap = match opt {
        Opt::Max => pv - dv,
        Opt::Min => dv - pv,
    };
    let (lower, upper) = match opt {
        Opt::Max => (x.iter().map(|v| v - &gap).collect(), x.to_vec()),
        Opt::Min => (x.to_vec(), x.iter().map(|v| v + &gap).collect()),
    };
    Ok(AllStateBounds { lower, upper, gap, x: x.to_vec(), y: y.to_vec(), zero_cert: None })
}
