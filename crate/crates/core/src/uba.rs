//! Markov chains against unambiguous Büchi automata.
//!
//! The product matrix `B` over pairs `(s, q)` has `B((s,q),(s',q')) =
//! P(s,s')` when `q' ∈ δ(q, s)`: the automaton reads the current state. The
//! value vector `v(s,q) = Pr_s(L(q))` is the unique solution of `Bv = v`,
//! `μ_Dᵀ v_D = 1` on accepting recurrent SCCs and `v_D = 0` on the other
//! recurrent SCCs. A feasible `x ≥ 0` with `x ≤ Bx` and `μ_Dᵀ x_D ≤ 1` is
//! bounded by `v`, which yields the witness MILP.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use certimdp_opt::linsys::{solve_linear_system, LinearSolution};
use certimdp_opt::lp::{lp_solve, LinearProgram, Relation, Sense};
use certimdp_opt::milp::{milp_solve, MilpModel, MilpOutcome};
use certimdp_opt::Q;
use num_traits::{One, Signed, Zero};

use crate::automata::{Automaton, PropertyKind, Quantifier, Query, Rel, Target, Uba};
use crate::error::{Error, Result};
use crate::graph::{can_reach, sccs};
use crate::model::{Labeling, Mdp, StateId, StateSet};
use crate::witness::WitnessResult;

#[derive(Debug, Clone, PartialEq)]
pub struct UbaProduct {
    /// `(s, q)` per product state, in discovery order from the initial pair.
    pub states: Vec<(StateId, usize)>,
    /// Sparse rows of `B`, sorted by column.
    pub rows: Vec<Vec<(usize, Q)>>,
    pub initial: usize,
    /// Strongly connected components, each sorted, ordered by least member.
    pub sccs: Vec<StateSet>,
    pub recurrent: Vec<bool>,
    pub accepting: Vec<bool>,
}

impl UbaProduct {
    /// Indices of accepting recurrent SCCs.
    pub fn positive(&self) -> Vec<usize> {
        (0..self.sccs.len()).filter(|&d| self.recurrent[d] && self.accepting[d]).collect()
    }

    /// Indices of non-accepting recurrent SCCs.
    pub fn negative(&self) -> Vec<usize> {
        (0..self.sccs.len()).filter(|&d| self.recurrent[d] && !self.accepting[d]).collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, s: StateId, q: usize) -> Option<usize> {
        self.states.iter().position(|&p| p == (s, q))
    }

    /// `Σ_j B(i, j) x(j)`.
    pub fn apply(&self, i: usize, x: &[Q]) -> Q {
        self.rows[i].iter().map(|(j, b)| b * &x[*j]).sum()
    }

    /// Removes the non-accepting recurrent SCCs that do not contain the
    /// initial pair; mass into them is dropped, matching `v = 0` there.
    pub fn pruned(&self) -> UbaProduct {
        let drop: BTreeSet<usize> =
            self.negative().into_iter().filter(|&d| !self.sccs[d].contains(&self.initial)).flat_map(|d| self.sccs[d].clone()).collect();
        if drop.is_empty() {
            return self.clone();
        }
        let keep: Vec<usize> = (0..self.states.len()).filter(|i| !drop.contains(i)).collect();
        let mut new_id = vec![usize::MAX; self.states.len()];
        for (n, &i) in keep.iter().enumerate() {
            new_id[i] = n;
        }
        let rows = keep
            .iter()
            .map(|&i| self.rows[i].iter().filter(|(j, _)| !drop.contains(j)).map(|(j, b)| (new_id[*j], b.clone())).collect())
            .collect();
        let mut comps: Vec<(StateSet, bool, bool)> = Vec::new();
        for (d, scc) in self.sccs.iter().enumerate() {
            if scc.iter().all(|i| !drop.contains(i)) {
                comps.push((scc.iter().map(|&i| new_id[i]).collect(), self.recurrent[d], self.accepting[d]));
            }
        }
        comps.sort_by_key(|c| *c.0.first().expect("SCCs are nonempty"));
        UbaProduct {
            states: keep.iter().map(|&i| self.states[i]).collect(),
            rows,
            initial: new_id[self.initial],
            sccs: comps.iter().map(|c| c.0.clone()).collect(),
            recurrent: comps.iter().map(|c| c.1).collect(),
            accepting: comps.iter().map(|c| c.2).collect(),
        }
    }
}

fn check_chain(c: &Mdp, a: &Uba) -> Result<()> {
    if c.is_empty() || !c.is_dtmc() {
        return Err(Error::Model("the UBA pipeline needs a Markov chain with one action per state".into()));
    }
    if a.alphabet.as_slice() != c.names() || a.delta.iter().any(|r| r.len() != c.num_states()) {
        return Err(Error::Automaton("alphabet differs from the chain's state set".into()));
    }
    Ok(())
}

/// Product restricted to pairs reachable from `(s̄, q̄)`, with recurrence
/// decided per SCC and without pruning.
pub fn build_uba_product_unpruned(c: &Mdp, a: &Uba) -> Result<UbaProduct> {
    check_chain(c, a)?;
    let init = (c.initial(), a.initial);
    let mut index: BTreeMap<(StateId, usize), usize> = BTreeMap::from([(init, 0)]);
    let mut states = vec![init];
    let mut rows: Vec<Vec<(usize, Q)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (s, q) = states[i];
        let mut row: BTreeMap<usize, Q> = BTreeMap::new();
        for (t, p) in &c.choices(s)[0].dist {
            for &q2 in &a.delta[q][s] {
                let key = (*t, q2);
                let j = *index.entry(key).or_insert_with(|| {
                    states.push(key);
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                });
                *row.entry(j).or_default() += p;
            }
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
        }
        rows[i] = row.into_iter().collect();
    }
    rows.resize(states.len(), Vec::new());
    let nodes: Vec<usize> = (0..states.len()).collect();
    let comps = sccs(&nodes, |i| rows[i].iter().map(|(j, _)| *j).collect());
    let mut recurrent = Vec::with_capacity(comps.len());
    for d in &comps {
        recurrent.push(is_recurrent(&rows, d)?);
    }
    let accepting = comps.iter().map(|d| d.iter().any(|&i| a.accepting.contains(&states[i].1))).collect();
    Ok(UbaProduct { states, rows, initial: 0, sccs: comps, recurrent, accepting })
}

/// The pruned product.
pub fn build_uba_product(c: &Mdp, a: &Uba) -> Result<UbaProduct> {
    Ok(build_uba_product_unpruned(c, a)?.pruned())
}

fn block(rows: &[Vec<(usize, Q)>], d: &StateSet) -> (Vec<usize>, Vec<Vec<Q>>) {
    let ids: Vec<usize> = d.iter().copied().collect();
    let pos: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut mat = vec![vec![Q::zero(); ids.len()]; ids.len()];
    for (k, &i) in ids.iter().enumerate() {
        for (j, b) in &rows[i] {
            if let Some(&l) = pos.get(j) {
                mat[k][l] = b.clone();
            }
        }
    }
    (ids, mat)
}

/// `ρ(B_D) = 1`, decided by the kernel of `B_D − I` after an LP guard
/// `{B_D x ≤ x, x ≥ 1}` certifies `ρ(B_D) ≤ 1`.
fn is_recurrent(rows: &[Vec<(usize, Q)>], d: &StateSet) -> Result<bool> {
    let (ids, mat) = block(rows, d);
    let n = ids.len();
    if n == 1 && mat[0][0].is_zero() {
        return Ok(false);
    }
    let mut lp = LinearProgram::new(Sense::Feasibility);
    let x: Vec<usize> = (0..n).map(|k| lp.add_var(format!("x{k}"), Some(Q::one()), None)).collect();
    for (k, row) in mat.iter().enumerate() {
        let mut coeffs: Vec<(usize, Q)> = row.iter().enumerate().filter(|(_, b)| !b.is_zero()).map(|(l, b)| (x[l], b.clone())).collect();
        coeffs.push((x[k], -Q::one()));
        lp.add_constraint(coeffs, Relation::Le, Q::zero());
    }
    if !lp_solve(&lp).is_feasible() {
        return Err(Error::Automaton("product block with spectral radius above one: the automaton is likely ambiguous".into()));
    }
    let a: Vec<Vec<Q>> = mat
        .iter()
        .enumerate()
        .map(|(k, row)| row.iter().enumerate().map(|(l, b)| if k == l { b - Q::one() } else { b.clone() }).collect())
        .collect();
    match solve_linear_system(&a, &vec![Q::zero(); n])? {
        LinearSolution::Unique(_) => Ok(false),
        LinearSolution::Affine { kernel, .. } => {
            // Perron-Frobenius: a one-dimensional kernel spanned by a positive vector.
            let ok = kernel.len() == 1 && (kernel[0].iter().all(Q::is_positive) || kernel[0].iter().all(Q::is_negative));
            if !ok {
                return Err(Error::Automaton("recurrent block without a positive eigenvector".into()));
            }
            Ok(true)
        }
        LinearSolution::Inconsistent => unreachable!("homogeneous systems are consistent"),
    }
}

/// `μ_D` per accepting recurrent SCC, keyed by SCC index.
pub type Normalizer = BTreeMap<usize, BTreeMap<usize, Q>>;

/// Whether `D` is closed under `B` with row sums one; then `v ≡ 1` on `D`.
fn closed_stochastic(p: &UbaProduct, d: &StateSet) -> bool {
    d.iter().all(|&i| p.rows[i].iter().all(|(j, _)| d.contains(j)) && p.rows[i].iter().map(|(_, b)| b).sum::<Q>().is_one())
}

/// Dirac normalizers on closed stochastic SCCs. Other accepting recurrent
/// SCCs need the `general-normalizers` feature.
pub fn compute_normalizers(c: &Mdp, a: &Uba, p: &UbaProduct) -> Result<Normalizer> {
    let mut out = Normalizer::new();
    for d in p.positive() {
        let scc = &p.sccs[d];
        let least = *scc.iter().min_by_key(|&&i| p.states[i]).expect("SCCs are nonempty");
        if closed_stochastic(p, scc) {
            out.insert(d, BTreeMap::from([(least, Q::one())]));
            continue;
        }
        out.insert(d, general_normalizer(c, a, p, scc, least)?);
    }
    Ok(out)
}

#[cfg(not(feature = "general-normalizers"))]
fn general_normalizer(_: &Mdp, _: &Uba, p: &UbaProduct, _: &StateSet, least: usize) -> Result<BTreeMap<usize, Q>> {
    let (s, q) = p.states[least];
    Err(Error::Automaton(format!(
        "no normalizer for the recurrent class of ({s}, {q}): it is not closed and general normalizers are disabled"
    )))
}

/// `μ = e_d / v(d)` with `v(d)` the probability that some run from `d`
/// stays in `D` forever. Such runs are accepting almost surely, and the
/// accepted runs from `d` never leave `D`, so this probability is `v(d)`.
/// It is computed on the subset chain over `(s, α)`; by König's lemma a run
/// staying in `D` exists iff `α` never becomes empty.
#[cfg(feature = "general-normalizers")]
fn general_normalizer(c: &Mdp, a: &Uba, p: &UbaProduct, d: &StateSet, least: usize) -> Result<BTreeMap<usize, Q>> {
    let in_d: BTreeSet<(StateId, usize)> = d.iter().map(|&i| p.states[i]).collect();
    let (s0, q0) = p.states[least];
    type Node = (StateId, BTreeSet<usize>);
    let start: Node = (s0, BTreeSet::from([q0]));
    let mut index: BTreeMap<Node, usize> = BTreeMap::from([(start.clone(), 0)]);
    let mut nodes = vec![start];
    // Successor distribution per node; mass to the empty set or lost by the
    // chain is the failure mass.
    let mut succ: Vec<Vec<(usize, Q)>> = Vec::new();
    let mut fail: Vec<Q> = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let (s, alpha) = nodes[i].clone();
        let ch = &c.choices(s)[0];
        let mut row = Vec::new();
        let mut lost = Q::one() - ch.mass();
        for (t, pr) in &ch.dist {
            let next: BTreeSet<usize> =
                alpha.iter().flat_map(|&q| a.delta[q][s].iter().copied()).filter(|&q2| in_d.contains(&(*t, q2))).collect();
            if next.is_empty() {
                lost += pr;
                continue;
            }
            let key = (*t, next);
            let j = *index.entry(key.clone()).or_insert_with(|| {
                nodes.push(key);
                nodes.len() - 1
            });
            row.push((j, pr.clone()));
        }
        succ.push(row);
        fail.push(lost);
        i += 1;
    }
    let n = nodes.len();
    let ids: Vec<usize> = (0..n).collect();
    let goal: Vec<bool> = fail.iter().map(|f| !f.is_zero()).collect();
    let reach = can_reach(&ids, &goal, |v| succ[v].iter().map(|(w, _)| *w).collect());
    // Failure probability: zero where failure is unreachable, else the unique
    // solution of x = Σ P x + fail.
    let mut a_mat = vec![vec![Q::zero(); n]; n];
    let mut b = vec![Q::zero(); n];
    for v in 0..n {
        a_mat[v][v] = Q::one();
        if reach[v] {
            for (w, pr) in &succ[v] {
                a_mat[v][*w] -= pr;
            }
            b[v] = fail[v].clone();
        }
    }
    let x = solve_linear_system(&a_mat, &b)?.unique().ok_or_else(|| Error::Automaton("singular subset-chain system".into()))?;
    let stay = Q::one() - &x[0];
    if !stay.is_positive() {
        return Err(Error::Automaton("accepting recurrent class with zero acceptance probability".into()));
    }
    Ok(BTreeMap::from([(least, Q::one() / stay)]))
}

/// Solves `Bv = v`, `μ_Dᵀ v_D = 1` on `𝒟⁺` and `v_D = 0` on `𝒟⁻`.
pub fn compute_value_vector(p: &UbaProduct, n: &Normalizer) -> Result<Vec<Q>> {
    let size = p.states.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..size {
        let mut row = vec![Q::zero(); size];
        row[i] = Q::one();
        for (j, v) in &p.rows[i] {
            row[*j] -= v;
        }
        a.push(row);
        b.push(Q::zero());
    }
    for d in p.positive() {
        let mu = n.get(&d).ok_or_else(|| Error::Automaton(format!("missing normalizer for class {d}")))?;
        let mut row = vec![Q::zero(); size];
        for (i, w) in mu {
            row[*i] = w.clone();
        }
        a.push(row);
        b.push(Q::one());
    }
    for d in p.negative() {
        for &i in &p.sccs[d] {
            let mut row = vec![Q::zero(); size];
            row[i] = Q::one();
            a.push(row);
            b.push(Q::zero());
        }
    }
    match solve_linear_system(&a, &b)? {
        LinearSolution::Unique(v) => Ok(v),
        _ => Err(Error::Automaton("value-vector system is singular or inconsistent: invalid normalizer".into())),
    }
}

/// `Pr_C(L(A))` through the product and its value vector.
pub fn uba_probability(c: &Mdp, a: &Uba) -> Result<Q> {
    let p = build_uba_product(c, a)?;
    let n = compute_normalizers(c, a, &p)?;
    Ok(compute_value_vector(&p, &n)?[p.initial].clone())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UbaReject {
    Length,
    Bounds(usize),
    /// `x(i) > (Bx)(i)`.
    Row(usize),
    /// `μ_Dᵀ x_D > 1`.
    Normalizer(usize),
    Threshold,
}

/// Re-checks `0 ≤ x ≤ 1`, `x ≤ Bx`, `μ_Dᵀ x_D ≤ 1`, `x = 0` on `𝒟⁻` and the
/// threshold at the initial pair.
pub fn validate_uba_solution(p: &UbaProduct, n: &Normalizer, x: &[Q], lambda: &Q, rel: Rel) -> std::result::Result<(), UbaReject> {
    if x.len() != p.states.len() {
        return Err(UbaReject::Length);
    }
    if let Some(i) = x.iter().position(|v| v.is_negative() || *v > Q::one()) {
        return Err(UbaReject::Bounds(i));
    }
    for d in p.negative() {
        if let Some(&i) = p.sccs[d].iter().find(|&&i| !x[i].is_zero()) {
            return Err(UbaReject::Bounds(i));
        }
    }
    if let Some(i) = (0..x.len()).find(|&i| x[i] > p.apply(i, x)) {
        return Err(UbaReject::Row(i));
    }
    for (d, mu) in n {
        if mu.iter().map(|(i, w)| w * &x[*i]).sum::<Q>() > Q::one() {
            return Err(UbaReject::Normalizer(*d));
        }
    }
    if !rel.holds(&x[p.initial], lambda) {
        return Err(UbaReject::Threshold);
    }
    Ok(())
}

/// One objective `P▷λ(L(A))` of a chain query.
#[derive(Debug, Clone, PartialEq)]
pub struct UbaObjective {
    pub automaton: Uba,
    pub rel: Rel,
    pub lambda: Q,
}

/// Reads a query whose objectives all name automata by their language.
/// Exists-and reads as a conjunction, forall-or as a disjunction.
pub fn uba_objectives(q: &Query, autos: &[Automaton]) -> Result<Vec<UbaObjective>> {
    q.objectives
        .iter()
        .enumerate()
        .map(|(i, o)| match &o.target {
            Target::Automaton(a, PropertyKind::Rabin) => {
                let automaton = autos
                    .get(*a)
                    .ok_or_else(|| Error::Query(format!("objective {i} names missing automaton {a}")))?
                    .as_uba()
                    .ok_or_else(|| Error::Automaton(format!("automaton {a} is not a Büchi automaton")))?;
                Ok(UbaObjective { automaton, rel: o.rel, lambda: o.lambda.clone() })
            }
            _ => Err(Error::Query(format!("objective {i}: chain queries need an automaton language (kind rabin) with a lower bound"))),
        })
        .collect()
}

/// Whether `C_{S'}` satisfies every objective (all of them, or one of them
/// for a disjunction).
pub fn uba_holds_on(c: &Mdp, objs: &[UbaObjective], quantifier: Quantifier, s_prime: &StateSet) -> Result<bool> {
    let sub = c.induced_subsystem(s_prime)?;
    let mut verdicts = Vec::new();
    for o in objs {
        let pr = uba_probability(&sub.mdp, &o.automaton.restrict(&sub))?;
        verdicts.push(o.rel.holds(&pr, &o.lambda));
    }
    Ok(match quantifier {
        Quantifier::ExistsAnd => verdicts.iter().all(|&v| v),
        Quantifier::ForallOr => verdicts.iter().any(|&v| v),
    })
}

/// Label-minimal witness on a chain. Conjunctions share one MILP; a
/// disjunction takes the best single-objective witness.
pub fn uba_witness(c: &Mdp, objs: &[UbaObjective], quantifier: Quantifier, labels: &Labeling) -> Result<WitnessResult> {
    if objs.is_empty() {
        return Err(Error::Query("at least one objective required".into()));
    }
    let result = match quantifier {
        Quantifier::ExistsAnd => conjunctive_witness(c, objs, labels)?,
        Quantifier::ForallOr => {
            let mut best: Option<WitnessResult> = None;
            for o in objs {
                match conjunctive_witness(c, std::slice::from_ref(o), labels) {
                    Ok(w) if best.as_ref().map_or(true, |b| w.objective < b.objective) => best = Some(w),
                    Ok(_) | Err(Error::Infeasible(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            best.ok_or_else(|| Error::Infeasible("no disjunct holds".into()))?
        }
    };
    if !uba_holds_on(c, objs, quantifier, &result.states)? {
        return Err(Error::Infeasible("MILP solution failed re-verification".into()));
    }
    Ok(result)
}

fn conjunctive_witness(c: &Mdp, objs: &[UbaObjective], labels: &Labeling) -> Result<WitnessResult> {
    let mut milp = MilpModel::new(LinearProgram::new(Sense::Minimize));
    let mut betas: BTreeMap<usize, usize> = BTreeMap::new();
    let mut beta = |milp: &mut MilpModel, l: usize| *betas.entry(l).or_insert_with(|| milp.add_binary(format!("beta{l}")));
    let mut xs: Vec<(UbaProduct, Vec<usize>)> = Vec::new();
    for (k, o) in objs.iter().enumerate() {
        let p = build_uba_product(c, &o.automaton)?;
        let n = compute_normalizers(c, &o.automaton, &p)?;
        let x: Vec<usize> = (0..p.states.len()).map(|i| milp.lp.add_var(format!("x{k}_{i}"), Some(Q::zero()), Some(Q::one()))).collect();
        for i in 0..p.states.len() {
            let mut row: Vec<(usize, Q)> = p.rows[i].iter().map(|(j, b)| (x[*j], -b.clone())).collect();
            row.push((x[i], Q::one()));
            milp.lp.add_constraint(row, Relation::Le, Q::zero());
            for &l in labels.labels_of(p.states[i].0) {
                let b = beta(&mut milp, l);
                milp.add_indicator(b, x[i]);
            }
        }
        for mu in n.values() {
            milp.lp.add_constraint(mu.iter().map(|(i, w)| (x[*i], w.clone())).collect(), Relation::Le, Q::one());
        }
        for d in p.negative() {
            for &i in &p.sccs[d] {
                milp.lp.add_constraint(vec![(x[i], Q::one())], Relation::Eq, Q::zero());
            }
        }
        let r = milp.lp.add_constraint(vec![(x[p.initial], Q::one())], Relation::Ge, o.lambda.clone());
        if o.rel == Rel::Gt {
            milp.strict_rows.push(r);
        }
        xs.push((p, x));
    }
    for &l in labels.labels_of(c.initial()) {
        let b = beta(&mut milp, l);
        milp.lp.add_constraint(vec![(b, Q::one())], Relation::Ge, Q::one());
    }
    let objective: Vec<(usize, Q)> = betas.values().map(|&b| (b, Q::one())).collect();
    milp.lp.set_objective(Sense::Minimize, objective);
    let (outcome, stats) = milp_solve(&milp);
    let values = match outcome {
        MilpOutcome::Optimal(sol) => sol.values,
        _ => return Err(Error::Infeasible("threshold unachievable on the chain".into())),
    };
    let mut states = StateSet::from([c.initial()]);
    for (p, x) in &xs {
        states.extend((0..p.states.len()).filter(|&i| values[x[i]].is_positive()).map(|i| p.states[i].0));
    }
    let labels_used = labels.labels_of_set(&states);
    Ok(WitnessResult { objective: labels_used.len(), labels: labels_used, states, minimal_guarantee: true, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::UnambiguityFlag;
    use crate::model::MdpBuilder;
    use certimdp_opt::{q, qi};

    fn chain(edges: &[(&str, &str, Q)], init: &str) -> Mdp {
        let mut b = MdpBuilder::new();
        for (s, t, p) in edges {
            b.transition(s, "go", p.clone(), t).unwrap();
        }
        b.build(init).unwrap()
    }

    /// Deterministic Büchi automaton for "eventually always `goal`": state 1
    /// is entered on `goal` and kept while reading `goal`.
    fn eventually_forever(c: &Mdp, goal: &str) -> Uba {
        let g = c.id(goal).unwrap();
        let delta = (0..2).map(|_| c.states().map(|s| vec![usize::from(s == g)]).collect()).collect();
        Uba {
            num_states: 2,
            initial: 0,
            alphabet: c.names().to_vec(),
            delta,
            accepting: BTreeSet::from([1]),
            unambiguous: UnambiguityFlag::Verified,
        }
    }

    fn accept_all(c: &Mdp) -> Uba {
        Uba {
            num_states: 1,
            initial: 0,
            alphabet: c.names().to_vec(),
            delta: vec![c.states().map(|_| vec![0]).collect()],
            accepting: BTreeSet::from([0]),
            unambiguous: UnambiguityFlag::Verified,
        }
    }

    fn goal_sink() -> Mdp {
        chain(&[("i", "goal", q(1, 2)), ("i", "sink", q(1, 2)), ("goal", "goal", qi(1)), ("sink", "sink", qi(1))], "i")
    }

    #[test]
    fn self_loop_with_accept_all() {
        let c = chain(&[("s", "s", qi(1))], "s");
        let a = accept_all(&c);
        let p = build_uba_product(&c, &a).unwrap();
        assert_eq!(p.rows, vec![vec![(0, qi(1))]]);
        assert_eq!(p.positive(), vec![0]);
        assert_eq!(uba_probability(&c, &a).unwrap(), qi(1));
    }

    #[test]
    fn goal_sink_values_and_witness() {
        let c = goal_sink();
        let a = eventually_forever(&c, "goal");
        assert_eq!(uba_probability(&c, &a).unwrap(), q(1, 2));
        let objs = [UbaObjective { automaton: a, rel: Rel::Ge, lambda: q(1, 2) }];
        let w = uba_witness(&c, &objs, Quantifier::ExistsAnd, &Labeling::per_state(&c)).unwrap();
        let names: Vec<&str> = w.states.iter().map(|&s| c.name(s)).collect();
        assert_eq!(names, ["i", "goal"]);
        assert_eq!(w.objective, 2);
    }

    #[test]
    fn value_vector_satisfies_its_own_checks() {
        let c = goal_sink();
        let a = eventually_forever(&c, "goal");
        let p = build_uba_product(&c, &a).unwrap();
        let n = compute_normalizers(&c, &a, &p).unwrap();
        let v = compute_value_vector(&p, &n).unwrap();
        validate_uba_solution(&p, &n, &v, &q(1, 2), Rel::Ge).unwrap();
        assert_eq!(validate_uba_solution(&p, &n, &v, &q(1, 2), Rel::Gt), Err(UbaReject::Threshold));
        let mut bad = v.clone();
        bad[p.initial] = q(2, 3);
        assert_eq!(validate_uba_solution(&p, &n, &bad, &q(1, 2), Rel::Ge), Err(UbaReject::Row(p.initial)));
        assert_eq!(validate_uba_solution(&p, &n, &v[1..], &q(1, 2), Rel::Ge), Err(UbaReject::Length));
    }

    #[test]
    fn pruning_keeps_values() {
        let c = goal_sink();
        let a = eventually_forever(&c, "goal");
        let full = build_uba_product_unpruned(&c, &a).unwrap();
        assert!(!full.negative().is_empty());
        let pruned = full.pruned();
        assert!(pruned.negative().is_empty());
        let vf = compute_value_vector(&full, &compute_normalizers(&c, &a, &full).unwrap()).unwrap();
        let vp = compute_value_vector(&pruned, &compute_normalizers(&c, &a, &pruned).unwrap()).unwrap();
        for (i, st) in pruned.states.iter().enumerate() {
            assert_eq!(vp[i], vf[full.index_of(st.0, st.1).unwrap()]);
        }
    }

    /// Automaton state `q_x` asserts that the current letter is `x` and
    /// guesses the next one, so every word has exactly one run. The
    /// recurrent class has rows summing to two and is not closed.
    #[test]
    fn guessing_automaton_needs_a_general_normalizer() {
        let c = chain(&[("s", "s", q(1, 2)), ("s", "t", q(1, 2)), ("t", "s", q(1, 2)), ("t", "t", q(1, 2))], "s");
        let (s, t) = (c.id("s").unwrap(), c.id("t").unwrap());
        let mut delta = vec![vec![Vec::new(); 2]; 3];
        delta[0] = vec![vec![1, 2]; 2];
        delta[1][s] = vec![1, 2];
        delta[2][t] = vec![1, 2];
        let a = Uba {
            num_states: 3,
            initial: 0,
            alphabet: c.names().to_vec(),
            delta,
            accepting: BTreeSet::from([1, 2]),
            unambiguous: UnambiguityFlag::Trusted,
        };
        let p = build_uba_product(&c, &a).unwrap();
        assert_eq!(p.positive().len(), 1);
        assert!(p.rows.iter().any(|r| r.iter().map(|(_, b)| b).sum::<Q>() > Q::one()));
        let res = compute_normalizers(&c, &a, &p);
        if cfg!(feature = "general-normalizers") {
            let v = compute_value_vector(&p, &res.unwrap()).unwrap();
            assert_eq!(v[p.index_of(s, 1).unwrap()], qi(1));
            assert_eq!(v[p.index_of(s, 2).unwrap()], qi(0));
            assert_eq!(v[p.initial], qi(1));
        } else {
            assert!(res.is_err());
        }
    }

    #[test]
    fn empty_language_has_no_positive_class() {
        let c = goal_sink();
        let a = eventually_forever(&c, "i");
        let p = build_uba_product(&c, &a).unwrap();
        assert!(p.positive().is_empty());
        assert_eq!(uba_probability(&c, &a).unwrap(), qi(0));
    }
}
