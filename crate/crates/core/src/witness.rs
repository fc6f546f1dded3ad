//! Label-minimal witnessing subsystems.
//!
//! Quotient MILPs pick blocks of the MEC quotient and lift them to the union
//! of their states. The exact encoding for conjunctive Rabin queries works
//! on the original model with one circulation per copy MDP. Every returned
//! subsystem is re-checked by the decision procedure before it is reported.

use std::collections::{BTreeMap, BTreeSet};

use certimdp_opt::lp::{LinearProgram, Relation, Sense};
use certimdp_opt::milp::{milp_solve, MilpModel, MilpOutcome, MilpStats};
use certimdp_opt::Q;
use num_traits::{One, Zero};

use crate::automata::{Automaton, Quantifier, Query, RabinPair, RabinProperty, Rel};
use crate::ec_analysis::{combinations, set_of, Limits};
use crate::error::{Error, Result};
use crate::graph::mec_decomposition;
use crate::model::{Choice, Labeling, Mdp, Pair, StateId, StateSet};
use crate::omega::{certify_query, work_model, WorkModel};
use crate::quotient::build_quotient;
use crate::reach::ReachForm;

/// Cap on the number of copy MDPs of the exact encoding.
pub const COPY_CAP: usize = 255;

#[derive(Debug, Clone, Copy)]
pub struct WitnessProblem<'a> {
    pub m: &'a Mdp,
    pub q: &'a Query,
    pub autos: &'a [Automaton],
    pub labels: &'a Labeling,
    pub limits: Limits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessResult {
    /// States of the witnessing subsystem; always contains the initial state.
    pub states: StateSet,
    pub labels: BTreeSet<usize>,
    /// Optimal number of labels.
    pub objective: usize,
    /// Whether the objective is the minimum over all subsystems.
    pub minimal_guarantee: bool,
    pub stats: MilpStats,
}

/// Whether `M_{S'}` satisfies `q`.
pub fn is_witness(m: &Mdp, q: &Query, autos: &[Automaton], s_prime: &StateSet, limits: Limits) -> Result<bool> {
    let sub = m.induced_subsystem(s_prime)?;
    let autos: Vec<Automaton> = autos.iter().map(|a| a.restrict(&sub)).collect();
    Ok(certify_query(&sub.mdp, &q.restrict(&sub), &autos, limits)?.holds())
}

/// Binary `β(l)` per label, created on first use.
struct Betas {
    vars: BTreeMap<usize, usize>,
}

impl Betas {
    fn new() -> Self {
        Betas { vars: BTreeMap::new() }
    }

    fn get(&mut self, milp: &mut MilpModel, l: usize) -> usize {
        *self.vars.entry(l).or_insert_with(|| milp.add_binary(format!("beta{l}")))
    }

    /// `var > 0` needs every label in `labels`.
    fn link(&mut self, milp: &mut MilpModel, labels: &BTreeSet<usize>, var: usize) {
        for &l in labels {
            let b = self.get(milp, l);
            milp.add_indicator(b, var);
        }
    }

    /// The initial state belongs to every subsystem, so its labels count.
    fn force(&mut self, milp: &mut MilpModel, labels: &BTreeSet<usize>) {
        for &l in labels {
            let b = self.get(milp, l);
            milp.lp.add_constraint(vec![(b, Q::one())], Relation::Ge, Q::one());
        }
    }

    fn objective(&self, milp: &mut MilpModel) {
        milp.lp.set_objective(Sense::Minimize, self.vars.values().map(|&b| (b, Q::one())).collect());
    }
}

fn solve(milp: &MilpModel) -> Result<(Vec<Q>, MilpStats)> {
    let (outcome, stats) = milp_solve(milp);
    match outcome {
        MilpOutcome::Optimal(sol) => Ok((sol.values, stats)),
        MilpOutcome::Infeasible => Err(Error::Infeasible("no witnessing subsystem: the query does not hold".into())),
        MilpOutcome::Unbounded => unreachable!("label objectives are bounded"),
    }
}

fn labels_of_work(wm: &WorkModel, labels: &Labeling) -> Labeling {
    match &wm.product {
        Some(p) => labels.pull_back(&p.proj),
        None => labels.clone(),
    }
}

/// Maps work-model states to original states, adds the initial state and
/// re-verifies.
fn finish(wp: &WitnessProblem, wm: &WorkModel, work_states: StateSet, minimal: bool, stats: MilpStats) -> Result<WitnessResult> {
    let mut states = match &wm.product {
        Some(p) => p.project(&work_states),
        None => work_states,
    };
    states.insert(wp.m.initial());
    if !is_witness(wp.m, wp.q, wp.autos, &states, wp.limits)? {
        return Err(Error::Infeasible("MILP solution failed re-verification".into()));
    }
    let labels = wp.labels.labels_of_set(&states);
    Ok(WitnessResult { objective: labels.len(), labels, states, minimal_guarantee: minimal, stats })
}

struct QuotientSetup {
    wm: WorkModel,
    labels: Labeling,
    blocks: Vec<StateSet>,
    rf: ReachForm,
    lambda: Vec<Q>,
    rel: Rel,
}

impl QuotientSetup {
    fn new(wp: &WitnessProblem, quantifier: Quantifier) -> Result<Self> {
        if wp.q.quantifier != quantifier {
            return Err(Error::Query(format!("witness method needs a {quantifier:?} query")));
        }
        let rel = wp.q.uniform_rel()?;
        let wm = work_model(wp.m, wp.q, wp.autos)?;
        let labels = labels_of_work(&wm, wp.labels);
        let props: Vec<RabinProperty> = wm.query.objectives.iter().map(|o| o.property().clone()).collect();
        let blocks = mec_decomposition(&wm.mdp);
        let index = crate::ec_analysis::compute_index_sets(&wm.mdp, &blocks, &props, wp.limits)?;
        let qm = build_quotient(&wm.mdp, &blocks, &index.pairs(), props.len())?;
        let (g, gbar) = qm.targets();
        let targets = if quantifier == Quantifier::ExistsAnd { g } else { gbar };
        let rf = ReachForm::from_mdp(&qm.mdp, &qm.sink_states(), &targets)?;
        let lambda = wm.query.objectives.iter().map(|o| o.lambda.clone()).collect();
        Ok(QuotientSetup { wm, labels, blocks, rf, lambda, rel })
    }

    /// `Λ̂(D)` of the block behind form state `j`.
    fn block_labels(&self, j: usize) -> BTreeSet<usize> {
        self.labels.labels_of_set(&self.blocks[self.rf.origin_states[j]])
    }

    fn lift(&self, chosen: impl Iterator<Item = usize>) -> StateSet {
        let mut out: StateSet = chosen.flat_map(|j| self.blocks[self.rf.origin_states[j]].iter().copied()).collect();
        out.extend(&self.blocks[self.rf.origin_states[self.rf.initial]]);
        out
    }
}

/// Minimal witness for a `(∀,∨)` query: `(x, z) ∈ H_▷` on the quotient with
/// `x(D) > 0` only if all labels of `D` are selected. `Σz = 1` and `x ≤ 1`
/// lose nothing since the inequalities are homogeneous and `x` is bounded by
/// weighted reachability.
pub fn witness_forall(wp: &WitnessProblem) -> Result<WitnessResult> {
    let st = QuotientSetup::new(wp, Quantifier::ForallOr)?;
    // Cutting the initial MEC lets the adversary lose all mass, which only a
    // disjunct `>= 0` survives; that disjunct is met by the initial state alone.
    if st.rel == Rel::Ge && st.lambda.iter().any(Q::is_zero) {
        return finish(wp, &st.wm, StateSet::new(), true, MilpStats::default());
    }
    let rf = &st.rf;
    let mut milp = MilpModel::new(LinearProgram::new(Sense::Minimize));
    let x: Vec<usize> = (0..rf.n()).map(|j| milp.lp.add_var(format!("x{j}"), Some(Q::zero()), Some(Q::one()))).collect();
    let z: Vec<usize> = (0..rf.k()).map(|i| milp.lp.add_nonneg(format!("z{i}"))).collect();
    for (p, pair) in rf.pairs.iter().enumerate() {
        let mut row = vec![(x[pair.state], Q::one())];
        row.extend(pair.succ.iter().map(|(t, pr)| (x[*t], -pr.clone())));
        row.extend((0..rf.k()).map(|i| (z[i], -rf.target_mass(p, i))));
        milp.lp.add_constraint(row, Relation::Le, Q::zero());
    }
    let mut th = vec![(x[rf.initial], Q::one())];
    th.extend(z.iter().zip(&st.lambda).map(|(&zi, l)| (zi, -l.clone())));
    let row = milp.lp.add_constraint(th, Relation::Ge, Q::zero());
    if st.rel == Rel::Gt {
        milp.strict_rows.push(row);
    }
    milp.lp.add_constraint(z.iter().map(|&zi| (zi, Q::one())).collect(), Relation::Eq, Q::one());
    let mut betas = Betas::new();
    for j in 0..rf.n() {
        betas.link(&mut milp, &st.block_labels(j), x[j]);
    }
    betas.force(&mut milp, &st.block_labels(rf.initial));
    betas.objective(&mut milp);
    let (vals, stats) = solve(&milp)?;
    let chosen = (0..rf.n()).filter(|&j| vals[x[j]] > Q::zero());
    finish(wp, &st.wm, st.lift(chosen), true, stats)
}

/// Witness for a `(∃,∧)` query via `y ∈ F_▷` on the quotient. Minimal when
/// the labeling is constant on every MEC.
pub fn witness_exists_quotient(wp: &WitnessProblem) -> Result<WitnessResult> {
    let st = QuotientSetup::new(wp, Quantifier::ExistsAnd)?;
    let rf = &st.rf;
    let mut milp = MilpModel::new(LinearProgram::new(Sense::Minimize));
    let y: Vec<usize> = (0..rf.pairs.len()).map(|p| milp.lp.add_nonneg(format!("y{p}"))).collect();
    // Outflow minus inflow at most the initial mass.
    let mut rows: Vec<Vec<(usize, Q)>> = vec![Vec::new(); rf.n()];
    for (p, pair) in rf.pairs.iter().enumerate() {
        rows[pair.state].push((y[p], Q::one()));
        for (t, pr) in &pair.succ {
            rows[*t].push((y[p], -pr.clone()));
        }
    }
    for (j, row) in rows.into_iter().enumerate() {
        let rhs = if j == rf.initial { Q::one() } else { Q::zero() };
        milp.lp.add_constraint(row, Relation::Le, rhs);
    }
    for (i, l) in st.lambda.iter().enumerate() {
        let row: Vec<(usize, Q)> = (0..rf.pairs.len()).map(|p| (y[p], rf.target_mass(p, i))).filter(|(_, c)| !c.is_zero()).collect();
        let r = milp.lp.add_constraint(row, Relation::Ge, l.clone());
        if st.rel == Rel::Gt {
            milp.strict_rows.push(r);
        }
    }
    let mut betas = Betas::new();
    for (p, pair) in rf.pairs.iter().enumerate() {
        betas.link(&mut milp, &st.block_labels(pair.state), y[p]);
    }
    betas.force(&mut milp, &st.block_labels(rf.initial));
    betas.objective(&mut milp);
    let (vals, stats) = solve(&milp)?;
    let chosen: BTreeSet<usize> = rf.pairs.iter().enumerate().filter(|(p, _)| vals[y[*p]] > Q::zero()).map(|(_, pr)| pr.state).collect();
    let minimal = st.labels.is_block_equivalent(&st.blocks);
    finish(wp, &st.wm, st.lift(chosen.into_iter()), minimal, stats)
}

// ---------------------------------------------------------------- copy MDPs

/// `k` copies of `M` over `⋂E_i`; moving from a state of `F_i` in copy `i`
/// lands in copy `i ⊕ 1`. Successors outside `⋂E_i` are dropped, so pairs
/// leaving it lose mass and never lie in an end component.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyMdp {
    /// States `⟨s, i⟩` named `s#i`; choices in the order of `M`.
    pub mdp: Mdp,
    pub base: Vec<(StateId, usize)>,
    /// `jump[v]`: whether the pairs of copy state `v` jump.
    pub jump: Vec<bool>,
}

impl CopyMdp {
    /// `{(s, a) : some (⟨s, i⟩, a) in pairs}`.
    pub fn project(&self, pairs: &BTreeSet<Pair>) -> BTreeSet<Pair> {
        pairs.iter().map(|&(v, c)| (self.base[v].0, c)).collect()
    }
}

pub fn build_copy_mdp(m: &Mdp, pairs: &[RabinPair]) -> Result<CopyMdp> {
    let k = pairs.len();
    if k == 0 {
        return Err(Error::Query("copy MDP needs at least one pair".into()));
    }
    let e: StateSet = pairs.iter().skip(1).fold(pairs[0].e.clone(), |acc, p| acc.intersection(&p.e).copied().collect());
    let e: Vec<StateId> = e.into_iter().filter(|&s| s < m.num_states()).collect();
    let pos: BTreeMap<StateId, usize> = e.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let id = |s: usize, i: usize| i * e.len() + pos[&s];
    let mut names = Vec::new();
    let mut base = Vec::new();
    let mut jump = Vec::new();
    let mut choices = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        for &s in &e {
            names.push(format!("{}#{i}", m.name(s)));
            base.push((s, i));
            let jumps = pair.f.contains(&s);
            jump.push(jumps);
            let next = if jumps { (i + 1) % k } else { i };
            choices.push(
                m.choices(s)
                    .iter()
                    .map(|c| Choice {
                        action: c.action.clone(),
                        dist: c.dist.iter().filter(|(t, _)| pos.contains_key(t)).map(|(t, p)| (id(*t, next), p.clone())).collect(),
                    })
                    .collect(),
            );
        }
    }
    let initial = if pos.contains_key(&m.initial()) { id(m.initial(), 0) } else { 0 };
    Ok(CopyMdp { mdp: Mdp::new(names, initial, choices)?, base, jump })
}

/// Pairs of `copy` lying in a MEC that contains a jump pair.
fn jump_mec_pairs(copy: &CopyMdp) -> Vec<Vec<Pair>> {
    let m = &copy.mdp;
    mec_decomposition(m)
        .into_iter()
        .filter_map(|block| {
            let mask = m.mask(&block);
            let pairs: Vec<Pair> = block.iter().flat_map(|&v| m.internal_choices(v, &mask).map(move |c| (v, c))).collect();
            pairs.iter().any(|&(v, _)| copy.jump[v]).then_some(pairs)
        })
        .collect()
}

/// Circulation `x ∈ S_𝔭` over `pairs` of `copy`; returns one variable per pair.
fn add_circulation(milp: &mut MilpModel, copy: &CopyMdp, pairs: &[Pair], tag: &str) -> Vec<usize> {
    let m = &copy.mdp;
    let vars: Vec<usize> = pairs.iter().map(|&(v, c)| milp.lp.add_nonneg(format!("x{tag}_{v}_{c}"))).collect();
    let mut rows: BTreeMap<StateId, Vec<(usize, Q)>> = BTreeMap::new();
    for (&(v, c), &var) in pairs.iter().zip(&vars) {
        rows.entry(v).or_default().push((var, Q::one()));
        for (t, p) in &m.choice((v, c)).dist {
            rows.entry(*t).or_default().push((var, -p.clone()));
        }
    }
    for row in rows.into_values() {
        milp.lp.add_constraint(row, Relation::Eq, Q::zero());
    }
    vars
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalEc {
    pub states: StateSet,
    pub pairs: BTreeSet<Pair>,
    pub labels: BTreeSet<usize>,
    pub stats: MilpStats,
}

/// A label-minimal end component satisfying every pair of `pairs`, or `None`
/// when no end component does. Every state of `⋂E_i` needs a label.
pub fn witness_min_ec(m: &Mdp, labels: &Labeling, pairs: &[RabinPair]) -> Result<Option<MinimalEc>> {
    let copy = build_copy_mdp(m, pairs)?;
    if copy.base.iter().any(|&(s, _)| labels.labels_of(s).is_empty()) {
        return Err(Error::Model("minimal end components need a label on every state".into()));
    }
    let cm = &copy.mdp;
    let mut milp = MilpModel::new(LinearProgram::new(Sense::Minimize));
    let cand: Vec<Pair> = cm
        .pairs()
        .filter(|&(v, c)| {
            let ch = cm.choice((v, c));
            ch.mass().is_one()
        })
        .collect();
    let x = add_circulation(&mut milp, &copy, &cand, "");
    let jumps: Vec<(usize, Q)> = cand.iter().zip(&x).filter(|((v, _), _)| copy.jump[*v]).map(|(_, &var)| (var, Q::one())).collect();
    milp.lp.add_constraint(jumps, Relation::Ge, Q::one());
    let mut betas = Betas::new();
    for (&(v, _), &var) in cand.iter().zip(&x) {
        betas.link(&mut milp, labels.labels_of(copy.base[v].0), var);
    }
    betas.objective(&mut milp);
    let (outcome, stats) = milp_solve(&milp);
    let Some(sol) = outcome.optimal() else {
        return Ok(None);
    };
    let support: BTreeSet<Pair> = cand.iter().zip(&x).filter(|(_, &var)| sol.values[var] > Q::zero()).map(|(p, _)| *p).collect();
    // The support is a union of end components; keep one that jumps.
    let sub_states: StateSet = support.iter().map(|&(v, _)| v).collect();
    let (sub, kept, ids) = restrict_pairs(cm, &sub_states, &support);
    for block in mec_decomposition(&sub) {
        let block_pairs: BTreeSet<Pair> = block
            .iter()
            .flat_map(|&v| kept[v].iter().map(|&c| (ids[v], c)).collect::<Vec<_>>())
            .filter(|p| support.contains(p))
            .collect();
        if block_pairs.iter().any(|&(v, _)| copy.jump[v]) && !block_pairs.is_empty() {
            let pairs = copy.project(&block_pairs);
            let states: StateSet = pairs.iter().map(|&(s, _)| s).collect();
            let labels = labels.labels_of_set(&states);
            return Ok(Some(MinimalEc { states, pairs, labels, stats }));
        }
    }
    unreachable!("a circulation with jump mass contains a jumping end component")
}

/// The sub-MDP of `m` on `states` keeping only `pairs`, with the original
/// choice index and state id of every kept choice and state.
fn restrict_pairs(m: &Mdp, states: &StateSet, pairs: &BTreeSet<Pair>) -> (Mdp, Vec<Vec<usize>>, Vec<StateId>) {
    let ids: Vec<StateId> = states.iter().copied().collect();
    let local: BTreeMap<StateId, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut kept = Vec::new();
    let choices = ids
        .iter()
        .map(|&v| {
            let cs: Vec<usize> = (0..m.choices(v).len()).filter(|&c| pairs.contains(&(v, c))).collect();
            let row = cs
                .iter()
                .map(|&c| {
                    let ch = m.choice((v, c));
                    Choice { action: ch.action.clone(), dist: ch.dist.iter().map(|(t, p)| (local[t], p.clone())).collect() }
                })
                .collect();
            kept.push(cs);
            row
        })
        .collect();
    let names = ids.iter().map(|&v| m.name(v).to_string()).collect();
    (Mdp::new(names, 0, choices).expect("restriction of a valid MDP"), kept, ids)
}

/// Exact minimal witness for a `(∃,∧)` query, also when a witness includes
/// only part of an end component.
///
/// Transient flow `y` with per-state sinks `y_I(s)`; mass may stop at `s`
/// for index set `I` only up to the jump mass `x_I(s)` of circulations in
/// the copy MDPs of the pair tuples in `P_I`, which places `s` in an end
/// component satisfying every property in `I`.
pub fn witness_exists_exact(wp: &WitnessProblem) -> Result<WitnessResult> {
    if wp.q.quantifier != Quantifier::ExistsAnd {
        return Err(Error::Query("exact witnesses need an exists-and query".into()));
    }
    let rel = wp.q.uniform_rel()?;
    let wm = work_model(wp.m, wp.q, wp.autos)?;
    let labels = labels_of_work(&wm, wp.labels);
    let m = &wm.mdp;
    let props: Vec<RabinProperty> = wm.query.objectives.iter().map(|o| o.property().clone()).collect();
    let k = props.len();
    let mut copies = Vec::new();
    for mask in 1u64..(1 << k) {
        let set = set_of(mask, k);
        let refs: Vec<&RabinProperty> = set.iter().map(|&i| &props[i]).collect();
        for combo in combinations(&refs) {
            let tuple: Vec<RabinPair> = refs.iter().zip(&combo).map(|(p, &c)| p.pairs[c].clone()).collect();
            copies.push((set.clone(), tuple));
            if copies.len() > COPY_CAP {
                return Err(Error::Limit(format!("more than {COPY_CAP} copy MDPs")));
            }
        }
    }

    let mut milp = MilpModel::new(LinearProgram::new(Sense::Minimize));
    let mut betas = Betas::new();
    // Jump mass per (I, s): x_I(s).
    let mut jump_mass: BTreeMap<(Vec<usize>, StateId), Vec<(usize, Q)>> = BTreeMap::new();
    let mut circ_vars: Vec<(StateId, usize)> = Vec::new();
    for (ci, (set, tuple)) in copies.iter().enumerate() {
        let copy = build_copy_mdp(m, tuple)?;
        let pairs: Vec<Pair> = jump_mec_pairs(&copy).concat();
        let x = add_circulation(&mut milp, &copy, &pairs, &ci.to_string());
        for (&(v, _), &var) in pairs.iter().zip(&x) {
            let s = copy.base[v].0;
            circ_vars.push((s, var));
            betas.link(&mut milp, labels.labels_of(s), var);
            if copy.jump[v] {
                jump_mass.entry((set.clone(), s)).or_default().push((var, Q::one()));
            }
        }
    }
    let y: Vec<Vec<usize>> =
        m.states().map(|s| (0..m.choices(s).len()).map(|c| milp.lp.add_nonneg(format!("y_{s}_{c}"))).collect()).collect();
    let ys: Vec<usize> = m.states().map(|s| milp.lp.add_nonneg(format!("ys_{s}"))).collect();
    let mut y_sets: BTreeMap<(Vec<usize>, StateId), usize> = BTreeMap::new();
    for ((set, s), terms) in &jump_mass {
        let v = milp.lp.add_nonneg(format!("yI_{}_{s}", crate::quotient::set_label(set)));
        let mut row = terms.clone();
        row.push((v, -Q::one()));
        milp.lp.add_constraint(row, Relation::Ge, Q::zero());
        y_sets.insert((set.clone(), *s), v);
    }
    let mut inflow: Vec<Vec<(usize, Q)>> = m.states().map(|s| vec![(ys[s], Q::one())]).collect();
    for (s, c) in m.pairs() {
        for (t, p) in &m.choice((s, c)).dist {
            inflow[*t].push((y[s][c], -p.clone()));
        }
        betas.link(&mut milp, labels.labels_of(s), y[s][c]);
    }
    for (s, row) in inflow.into_iter().enumerate() {
        let rhs = if s == m.initial() { Q::one() } else { Q::zero() };
        milp.lp.add_constraint(row, Relation::Eq, rhs);
    }
    for s in m.states() {
        let mut row = vec![(ys[s], Q::one())];
        row.extend(y[s].iter().map(|&v| (v, -Q::one())));
        row.extend(y_sets.iter().filter(|((_, t), _)| *t == s).map(|(_, &v)| (v, -Q::one())));
        milp.lp.add_constraint(row, Relation::Ge, Q::zero());
    }
    for (i, o) in wm.query.objectives.iter().enumerate() {
        let row: Vec<(usize, Q)> = y_sets.iter().filter(|((set, _), _)| set.contains(&i)).map(|(_, &v)| (v, Q::one())).collect();
        let r = milp.lp.add_constraint(row, Relation::Ge, o.lambda.clone());
        if rel == Rel::Gt {
            milp.strict_rows.push(r);
        }
    }
    betas.force(&mut milp, labels.labels_of(m.initial()));
    betas.objective(&mut milp);
    let (vals, stats) = solve(&milp)?;
    let mut support: StateSet = m.pairs().filter(|&(s, c)| vals[y[s][c]] > Q::zero()).map(|(s, _)| s).collect();
    support.extend(circ_vars.iter().filter(|(_, v)| vals[*v] > Q::zero()).map(|(s, _)| *s));
    finish(wp, &wm, support, true, stats)
}
