//! Rabin/Streett properties, multi-objective queries, deterministic and
//! unambiguous automata over state alphabets, and the product construction.

use std::collections::{BTreeSet, HashMap, VecDeque};

use certimdp_opt::rational::{format_q, parse_strict};
use certimdp_opt::Q;
use num_traits::{One, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Choice, Mdp, StateId, StateSet, SubMdp};

/// `(F, E)`: visit `F` infinitely often and eventually stay in `E`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RabinPair {
    pub f: StateSet,
    pub e: StateSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    /// The disjunction over pairs.
    Rabin,
    /// The complement of the Rabin reading of the same pairs.
    Streett,
}

impl PropertyKind {
    pub fn flip(self) -> Self {
        match self {
            PropertyKind::Rabin => PropertyKind::Streett,
            PropertyKind::Streett => PropertyKind::Rabin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RabinProperty {
    pub pairs: Vec<RabinPair>,
    pub kind: PropertyKind,
}

impl RabinProperty {
    pub fn rabin(pairs: Vec<RabinPair>) -> Self {
        RabinProperty { pairs, kind: PropertyKind::Rabin }
    }

    /// Same pairs, complemented semantics.
    pub fn dualize(&self) -> Self {
        RabinProperty { pairs: self.pairs.clone(), kind: self.kind.flip() }
    }

    /// Whether a set of states, as the infinity set of a run, meets the
    /// Rabin reading of the pairs.
    pub fn rabin_accepts(&self, inf: &StateSet) -> bool {
        self.pairs.iter().any(|p| !p.f.is_disjoint(inf) && inf.is_subset(&p.e))
    }

    /// Whether the property itself holds for the infinity set.
    pub fn accepts(&self, inf: &StateSet) -> bool {
        self.rabin_accepts(inf) == (self.kind == PropertyKind::Rabin)
    }

    /// The property over the states of a renumbered part.
    pub fn restrict(&self, sub: &SubMdp) -> Self {
        let map = |set: &StateSet| -> StateSet { set.iter().filter_map(|&s| sub.from_parent(s)).collect() };
        RabinProperty { pairs: self.pairs.iter().map(|p| RabinPair { f: map(&p.f), e: map(&p.e) }).collect(), kind: self.kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantifier {
    #[serde(rename = "exists-and")]
    ExistsAnd,
    #[serde(rename = "forall-or")]
    ForallOr,
}

/// Lower-bound relation `▷`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rel {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Rel {
    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
        }
    }

    /// The relation of the negated bound after complementing.
    pub fn flip(self) -> Self {
        match self {
            Rel::Ge => Rel::Gt,
            Rel::Gt => Rel::Ge,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Pairs(RabinProperty),
    /// Index into the automaton list; the property is the automaton language
    /// (`Rabin`) or its complement (`Streett`).
    Automaton(usize, PropertyKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Objective {
    pub target: Target,
    pub rel: Rel,
    pub lambda: Q,
}

impl Objective {
    pub fn property(&self) -> &RabinProperty {
        match &self.target {
            Target::Pairs(p) => p,
            Target::Automaton(..) => panic!("automaton objective used before the product was taken"),
        }
    }

    pub fn kind(&self) -> PropertyKind {
        match &self.target {
            Target::Pairs(p) => p.kind,
            Target::Automaton(_, k) => *k,
        }
    }
}

/// `∃𝔊 ⋀ P▷λ(φ_i)` or `∀𝔊 ⋁ P▷λ(φ_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub quantifier: Quantifier,
    pub objectives: Vec<Objective>,
}

impl Query {
    pub fn k(&self) -> usize {
        self.objectives.len()
    }

    pub fn uses_automata(&self) -> bool {
        self.objectives.iter().any(|o| matches!(o.target, Target::Automaton(..)))
    }

    /// The negation, valid on proper MDPs: quantifier, kinds and relations
    /// flip and every threshold becomes `1 - λ`.
    pub fn dual(&self) -> Query {
        let quantifier = match self.quantifier {
            Quantifier::ExistsAnd => Quantifier::ForallOr,
            Quantifier::ForallOr => Quantifier::ExistsAnd,
        };
        let objectives = self
            .objectives
            .iter()
            .map(|o| Objective {
                target: match &o.target {
                    Target::Pairs(p) => Target::Pairs(p.dualize()),
                    Target::Automaton(i, k) => Target::Automaton(*i, k.flip()),
                },
                rel: o.rel.flip(),
                lambda: Q::one() - &o.lambda,
            })
            .collect();
        Query { quantifier, objectives }
    }

    /// The query over the states of a renumbered part.
    pub fn restrict(&self, sub: &SubMdp) -> Query {
        Query {
            quantifier: self.quantifier,
            objectives: self
                .objectives
                .iter()
                .map(|o| Objective {
                    target: match &o.target {
                        Target::Pairs(p) => Target::Pairs(p.restrict(sub)),
                        t => t.clone(),
                    },
                    rel: o.rel,
                    lambda: o.lambda.clone(),
                })
                .collect(),
        }
    }

    /// The common relation of all objectives.
    pub fn uniform_rel(&self) -> Result<Rel> {
        let r = self.objectives.first().ok_or_else(|| Error::Query("no objectives".into()))?.rel;
        if self.objectives.iter().any(|o| o.rel != r) {
            return Err(Error::Query("all objectives must share one relation".into()));
        }
        Ok(r)
    }

    /// Checks the shape the certification pipeline expects.
    pub fn check_well_formed(&self, num_automata: usize) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(Error::Query("at least one objective required".into()));
        }
        let want = match self.quantifier {
            Quantifier::ExistsAnd => PropertyKind::Rabin,
            Quantifier::ForallOr => PropertyKind::Streett,
        };
        for (i, o) in self.objectives.iter().enumerate() {
            if o.lambda < Q::zero() || o.lambda > Q::one() {
                return Err(Error::Query(format!("threshold of objective {i} outside [0,1]")));
            }
            if o.kind() != want {
                return Err(Error::Query(format!(
                    "objective {i}: {:?} queries take {:?} properties",
                    self.quantifier, want
                )));
            }
            match &o.target {
                Target::Pairs(p) if p.pairs.is_empty() => {
                    return Err(Error::Query(format!("objective {i} has no pairs")));
                }
                Target::Automaton(a, _) if *a >= num_automata => {
                    return Err(Error::Query(format!("objective {i} names missing automaton {a}")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- query JSON

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairJson {
    #[serde(rename = "F")]
    f: Value,
    #[serde(rename = "E")]
    e: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectiveJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<PairJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    automaton: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<PropertyKind>,
    rel: String,
    lambda: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryJson {
    quantifier: Quantifier,
    objectives: Vec<ObjectiveJson>,
}

fn parse_state_list(m: &Mdp, v: &Value) -> Result<StateSet> {
    match v {
        Value::String(s) if s == "*" => Ok(m.all_states()),
        Value::Array(items) => items
            .iter()
            .map(|it| {
                let name = it.as_str().ok_or_else(|| Error::Query("state names must be strings".into()))?;
                m.id(name).ok_or_else(|| Error::Query(format!("unknown state {name}")))
            })
            .collect(),
        _ => Err(Error::Query("expected a list of state names or \"*\"".into())),
    }
}

/// Parses the query JSON against `m`.
///
/// Upper bounds (`<=`, `<`) are rewritten into lower bounds on the
/// complement: `P≤λ(φ) = P≥1-λ(¬φ)`. This identity needs a proper MDP.
/// Without an explicit `kind`, exists-and objectives are Rabin and forall-or
/// objectives are Streett.
pub fn parse_query(m: &Mdp, text: &str) -> Result<Query> {
    let j: QueryJson = serde_json::from_str(text).map_err(|e| Error::Query(e.to_string()))?;
    let default_kind = match j.quantifier {
        Quantifier::ExistsAnd => PropertyKind::Rabin,
        Quantifier::ForallOr => PropertyKind::Streett,
    };
    let mut objectives = Vec::new();
    for (i, o) in j.objectives.iter().enumerate() {
        let lambda = parse_strict(&o.lambda).map_err(|e| Error::Query(format!("objective {i}: {e}")))?;
        let mut kind = o.kind.unwrap_or(default_kind);
        let (rel, lambda) = match o.rel.as_str() {
            ">=" => (Rel::Ge, lambda),
            ">" => (Rel::Gt, lambda),
            "<=" | "<" => {
                if !m.is_proper() {
                    return Err(Error::Query("upper bounds need a proper MDP".into()));
                }
                kind = kind.flip();
                (if o.rel == "<=" { Rel::Ge } else { Rel::Gt }, Q::one() - lambda)
            }
            r => return Err(Error::Query(format!("unknown relation {r}"))),
        };
        let target = match (&o.pairs, o.automaton) {
            (Some(pairs), None) => {
                let pairs = pairs
                    .iter()
                    .map(|p| Ok(RabinPair { f: parse_state_list(m, &p.f)?, e: parse_state_list(m, &p.e)? }))
                    .collect::<Result<Vec<_>>>()?;
                Target::Pairs(RabinProperty { pairs, kind })
            }
            (None, Some(a)) => Target::Automaton(a, kind),
            _ => return Err(Error::Query(format!("objective {i} needs exactly one of pairs/automaton"))),
        };
        objectives.push(Objective { target, rel, lambda });
    }
    Ok(Query { quantifier: j.quantifier, objectives })
}

fn state_list_json(m: &Mdp, set: &StateSet) -> Value {
    Value::Array(set.iter().map(|&s| Value::String(m.name(s).to_string())).collect())
}

/// Canonical query JSON; kinds are always explicit.
pub fn query_to_value(m: &Mdp, q: &Query) -> Value {
    let objectives = q
        .objectives
        .iter()
        .map(|o| {
            let (pairs, automaton) = match &o.target {
                Target::Pairs(p) => (
                    Some(
                        p.pairs
                            .iter()
                            .map(|pr| PairJson { f: state_list_json(m, &pr.f), e: state_list_json(m, &pr.e) })
                            .collect(),
                    ),
                    None,
                ),
                Target::Automaton(a, _) => (None, Some(*a)),
            };
            ObjectiveJson {
                pairs,
                automaton,
                kind: Some(o.kind()),
                rel: o.rel.symbol().to_string(),
                lambda: format_q(&o.lambda),
            }
        })
        .collect();
    serde_json::to_value(QueryJson { quantifier: q.quantifier, objectives }).expect("query serializes")
}

pub fn query_from_value(m: &Mdp, v: &Value) -> Result<Query> {
    parse_query(m, &v.to_string())
}

// ---------------------------------------------------------------- automata

/// Complete deterministic automaton with Rabin acceptance over pairs of
/// automaton states. The alphabet is the MDP state set, by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicAutomaton {
    pub num_states: usize,
    pub initial: usize,
    pub alphabet: Vec<String>,
    /// `delta[q][letter]`.
    pub delta: Vec<Vec<usize>>,
    /// `(F, E)` over automaton states.
    pub acceptance: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnambiguityFlag {
    Verified,
    Trusted,
}

/// Büchi automaton, possibly nondeterministic and partial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Uba {
    pub num_states: usize,
    pub initial: usize,
    pub alphabet: Vec<String>,
    /// `delta[q][letter]`, sorted and duplicate-free.
    pub delta: Vec<Vec<Vec<usize>>>,
    pub accepting: BTreeSet<usize>,
    pub unambiguous: UnambiguityFlag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Automaton {
    Deterministic(DeterministicAutomaton),
    Uba(Uba),
}

impl DeterministicAutomaton {
    /// Büchi view when the acceptance is a single pair with `E = Q`.
    pub fn to_uba(&self) -> Option<Uba> {
        let [(f, e)] = self.acceptance.as_slice() else {
            return None;
        };
        if e.len() != self.num_states {
            return None;
        }
        Some(Uba {
            num_states: self.num_states,
            initial: self.initial,
            alphabet: self.alphabet.clone(),
            delta: self.delta.iter().map(|row| row.iter().map(|&q| vec![q]).collect()).collect(),
            accepting: f.clone(),
            unambiguous: UnambiguityFlag::Verified,
        })
    }

    fn check_alphabet(&self, m: &Mdp) -> Result<()> {
        if self.alphabet.as_slice() != m.names() {
            return Err(Error::Automaton("alphabet differs from the MDP state set".into()));
        }
        if self.delta.len() != self.num_states || self.delta.iter().any(|r| r.len() != self.alphabet.len()) {
            return Err(Error::Automaton("automaton incomplete".into()));
        }
        Ok(())
    }
}

impl Uba {
    /// The automaton over the alphabet of a renumbered part.
    pub fn restrict(&self, sub: &SubMdp) -> Uba {
        Uba {
            alphabet: sub.mdp.names().to_vec(),
            delta: self.delta.iter().map(|row| sub.to_parent.iter().map(|&s| row[s].clone()).collect()).collect(),
            ..self.clone()
        }
    }
}

impl Automaton {
    /// The automaton over the alphabet of a renumbered part.
    pub fn restrict(&self, sub: &SubMdp) -> Automaton {
        match self {
            Automaton::Deterministic(d) => Automaton::Deterministic(DeterministicAutomaton {
                alphabet: sub.mdp.names().to_vec(),
                delta: d.delta.iter().map(|row| sub.to_parent.iter().map(|&s| row[s]).collect()).collect(),
                ..d.clone()
            }),
            Automaton::Uba(u) => Automaton::Uba(u.restrict(sub)),
        }
    }

    pub fn as_uba(&self) -> Option<Uba> {
        match self {
            Automaton::Deterministic(d) => d.to_uba(),
            Automaton::Uba(u) => Some(u.clone()),
        }
    }
}

/// Outcome of [`check_unambiguous`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnambiguityVerdict {
    Verified,
    /// Letters leading into a cycle of the self-product carrying two
    /// distinct accepting runs.
    Refuted(Vec<String>),
}

/// Decides unambiguity on the self-product `Q × Q`.
///
/// The automaton is ambiguous iff some pair `(q1, q2)` with `q1 ≠ q2` is
/// reachable from `(q̄, q̄)` and, from it, a nontrivial SCC is reachable
/// that contains a pair with `q1 ∈ F` and a pair with `q2 ∈ F`.
pub fn check_unambiguous(a: &Uba) -> UnambiguityVerdict {
    let n = a.num_states;
    let id = |p: usize, q: usize| p * n + q;
    let mut g: DiGraph<(), usize> = DiGraph::new();
    let nodes: Vec<_> = (0..n * n).map(|_| g.add_node(())).collect();
    for p in 0..n {
        for q in 0..n {
            for (l, (sp, sq)) in a.delta[p].iter().zip(&a.delta[q]).enumerate() {
                for &p2 in sp {
                    for &q2 in sq {
                        g.add_edge(nodes[id(p, q)], nodes[id(p2, q2)], l);
                    }
                }
            }
        }
    }
    // BFS with parents from the start, tracking whether the runs diverged.
    let start = (id(a.initial, a.initial), false);
    let mut parent: HashMap<(usize, bool), ((usize, bool), usize)> = HashMap::new();
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some((v, div)) = queue.pop_front() {
        for e in g.edges(nodes[v]) {
            use petgraph::visit::EdgeRef;
            let w = e.target().index();
            let next = (w, div || w / n != w % n);
            if seen.insert(next) {
                parent.insert(next, ((v, div), *e.weight()));
                queue.push_back(next);
            }
        }
    }
    let sccs = tarjan_scc(&g);
    for comp in sccs {
        let nontrivial = comp.len() > 1 || g.contains_edge(comp[0], comp[0]);
        if !nontrivial {
            continue;
        }
        let has1 = comp.iter().any(|v| a.accepting.contains(&(v.index() / n)));
        let has2 = comp.iter().any(|v| a.accepting.contains(&(v.index() % n)));
        if !(has1 && has2) {
            continue;
        }
        if let Some(&v) = comp.iter().find(|v| seen.contains(&(v.index(), true))) {
            let mut word = Vec::new();
            let mut cur = (v.index(), true);
            while let Some(&(prev, l)) = parent.get(&cur) {
                word.push(a.alphabet[l].clone());
                cur = prev;
            }
            word.reverse();
            return UnambiguityVerdict::Refuted(word);
        }
    }
    UnambiguityVerdict::Verified
}

// ---------------------------------------------------------------- product

/// Reachable product of an MDP with deterministic automata.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub mdp: Mdp,
    /// Base MDP state of every product state.
    pub proj: Vec<StateId>,
    /// Automaton states of every product state.
    pub auto_states: Vec<Vec<usize>>,
}

/// Builds the product restricted to states reachable from
/// `⟨s̄, δ_1(q̄_1, s̄), …⟩`; a transition to `s'` moves automaton `i` to
/// `δ_i(q_i, s')`. Product states are named `s|q1.q2…`.
pub fn product(m: &Mdp, autos: &[DeterministicAutomaton]) -> Result<Product> {
    for a in autos {
        a.check_alphabet(m)?;
    }
    let step = |qs: &[usize], s: StateId| -> Vec<usize> { qs.iter().zip(autos).map(|(&q, a)| a.delta[q][s]).collect() };
    let init_q: Vec<usize> = autos.iter().map(|a| a.initial).collect();
    let init = (m.initial(), step(&init_q, m.initial()));
    let mut index: HashMap<(StateId, Vec<usize>), usize> = HashMap::from([(init.clone(), 0)]);
    let mut states = vec![init];
    let mut choices: Vec<Vec<Choice>> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let (s, qs) = states[i].clone();
        let mut row = Vec::new();
        for c in m.choices(s) {
            let mut dist = Vec::new();
            for (t, p) in &c.dist {
                let key = (*t, step(&qs, *t));
                let id = *index.entry(key.clone()).or_insert_with(|| {
                    states.push(key);
                    states.len() - 1
                });
                dist.push((id, p.clone()));
            }
            row.push(Choice { action: c.action.clone(), dist });
        }
        choices.push(row);
        i += 1;
    }
    let names = states
        .iter()
        .map(|(s, qs)| format!("{}|{}", m.name(*s), qs.iter().map(usize::to_string).collect::<Vec<_>>().join(".")))
        .collect();
    let mdp = Mdp::new(names, 0, choices)?;
    Ok(Product {
        mdp,
        proj: states.iter().map(|(s, _)| *s).collect(),
        auto_states: states.into_iter().map(|(_, qs)| qs).collect(),
    })
}

impl Product {
    /// Lifts the acceptance of automaton `i` to product states.
    pub fn lift(&self, autos: &[DeterministicAutomaton], i: usize, kind: PropertyKind) -> RabinProperty {
        let lift_set = |set: &BTreeSet<usize>| -> StateSet {
            (0..self.proj.len()).filter(|&v| set.contains(&self.auto_states[v][i])).collect()
        };
        RabinProperty {
            pairs: autos[i].acceptance.iter().map(|(f, e)| RabinPair { f: lift_set(f), e: lift_set(e) }).collect(),
            kind,
        }
    }

    /// Lifts a property over base states along the projection.
    pub fn lift_state_property(&self, p: &RabinProperty) -> RabinProperty {
        let lift_set = |set: &StateSet| -> StateSet { (0..self.proj.len()).filter(|&v| set.contains(&self.proj[v])).collect() };
        RabinProperty {
            pairs: p.pairs.iter().map(|pr| RabinPair { f: lift_set(&pr.f), e: lift_set(&pr.e) }).collect(),
            kind: p.kind,
        }
    }

    /// The query over product states.
    pub fn lift_query(&self, autos: &[DeterministicAutomaton], q: &Query) -> Query {
        Query {
            quantifier: q.quantifier,
            objectives: q
                .objectives
                .iter()
                .map(|o| Objective {
                    target: Target::Pairs(match &o.target {
                        Target::Pairs(p) => self.lift_state_property(p),
                        Target::Automaton(i, k) => self.lift(autos, *i, *k),
                    }),
                    rel: o.rel,
                    lambda: o.lambda.clone(),
                })
                .collect(),
        }
    }

    /// Base states touched by a set of product states.
    pub fn project(&self, set: &StateSet) -> StateSet {
        set.iter().map(|&v| self.proj[v]).collect()
    }
}

/// Requires every automaton objective to refer to a deterministic automaton.
pub fn deterministic_automata(autos: &[Automaton]) -> Result<Vec<DeterministicAutomaton>> {
    autos
        .iter()
        .map(|a| match a {
            Automaton::Deterministic(d) => Ok(d.clone()),
            Automaton::Uba(_) => Err(Error::Automaton("MDP queries need deterministic automata".into())),
        })
        .collect()
}
