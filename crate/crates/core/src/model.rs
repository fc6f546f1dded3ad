//! Exact-rational MDPs, sub-MDPs, subsystems and labelings.
//!
//! States are dense ids `0..n` with a name table. A choice is an action name
//! plus a sparse distribution sorted by successor id; a state-action pair is
//! addressed as `(state, choice index)`. Action names only need to be unique
//! per state: the pair `(state, action)` is the globally unique action id.
//! Names never contain whitespace; state names also exclude `:`, so the
//! key `state:action` splits at its first colon.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use certimdp_opt::Q;
use num_traits::{One, Zero};

use crate::error::{model_err, Result};

pub type StateId = usize;
pub type StateSet = BTreeSet<StateId>;
/// A state-action pair `(state, choice index)`.
pub type Pair = (StateId, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub action: String,
    /// Positive entries only, sorted by successor, no duplicates.
    pub dist: Vec<(StateId, Q)>,
}

impl Choice {
    pub fn mass(&self) -> Q {
        self.dist.iter().map(|(_, p)| p).sum()
    }

    pub fn prob(&self, t: StateId) -> Q {
        self.dist
            .binary_search_by_key(&t, |(s, _)| *s)
            .map(|i| self.dist[i].1.clone())
            .unwrap_or_else(|_| Q::zero())
    }

    /// Probability mass into the states selected by `mask`.
    pub fn mass_into(&self, mask: &[bool]) -> Q {
        self.dist.iter().filter(|(t, _)| mask[*t]).map(|(_, p)| p).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.dist.iter().map(|(t, _)| *t)
    }

    /// Whether the choice stays inside `mask` with total mass one.
    pub fn is_internal(&self, mask: &[bool]) -> bool {
        self.support().all(|t| mask[t]) && self.mass().is_one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stochasticity {
    Proper,
    SubStochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    names: Vec<String>,
    index: HashMap<String, StateId>,
    initial: StateId,
    choices: Vec<Vec<Choice>>,
    stochasticity: Stochasticity,
}

/// A renumbered part of a parent MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMdp {
    pub mdp: Mdp,
    /// Parent id of every state of `mdp`.
    pub to_parent: Vec<StateId>,
}

impl SubMdp {
    pub fn from_parent(&self, s: StateId) -> Option<StateId> {
        self.to_parent.binary_search(&s).ok()
    }
}

impl Mdp {
    /// Validates and builds an MDP. `initial` is ignored for an empty state set.
    pub fn new(names: Vec<String>, initial: StateId, mut choices: Vec<Vec<Choice>>) -> Result<Mdp> {
        let n = names.len();
        if choices.len() != n {
            return model_err(format!("{} states but {} choice lists", n, choices.len()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name.chars().any(|ch| ch.is_whitespace() || ch == ':') {
                return model_err(format!("invalid state name {name:?}"));
            }
            if index.insert(name.clone(), i).is_some() {
                return model_err(format!("duplicate state {name}"));
            }
        }
        if n > 0 && initial >= n {
            return model_err("initial state out of range");
        }
        let mut proper = n > 0;
        for (s, row) in choices.iter_mut().enumerate() {
            let mut seen = BTreeSet::new();
            if row.is_empty() {
                proper = false;
            }
            for c in row.iter_mut() {
                if !seen.insert(c.action.clone()) {
                    return model_err(format!("duplicate action {} at {}", c.action, names[s]));
                }
                if c.action.is_empty() || c.action.chars().any(char::is_whitespace) {
                    return model_err(format!("invalid action name {:?}", c.action));
                }
                c.dist.sort_by_key(|(t, _)| *t);
                for w in c.dist.windows(2) {
                    if w[0].0 == w[1].0 {
                        return model_err(format!("duplicate successor in {}:{}", names[s], c.action));
                    }
                }
                for (t, p) in &c.dist {
                    if *t >= n {
                        return model_err(format!("successor out of range in {}:{}", names[s], c.action));
                    }
                    if *p <= Q::zero() || *p > Q::one() {
                        return model_err(format!("probability outside (0,1] in {}:{}", names[s], c.action));
                    }
                }
                let mass = c.mass();
                if mass > Q::one() {
                    return model_err(format!("row sum exceeds 1 in {}:{}", names[s], c.action));
                }
                if !mass.is_one() {
                    proper = false;
                }
            }
        }
        Ok(Mdp {
            names,
            index,
            initial: if n == 0 { 0 } else { initial },
            choices,
            stochasticity: if proper { Stochasticity::Proper } else { Stochasticity::SubStochastic },
        })
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn states(&self) -> std::ops::Range<StateId> {
        0..self.names.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn name(&self, s: StateId) -> &str {
        &self.names[s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<StateId> {
        self.index.get(name).copied()
    }

    pub fn choices(&self, s: StateId) -> &[Choice] {
        &self.choices[s]
    }

    pub fn choice(&self, (s, c): Pair) -> &Choice {
        &self.choices[s][c]
    }

    pub fn stochasticity(&self) -> Stochasticity {
        self.stochasticity
    }

    pub fn is_proper(&self) -> bool {
        self.stochasticity == Stochasticity::Proper
    }

    /// Exactly one action per state.
    pub fn is_dtmc(&self) -> bool {
        self.choices.iter().all(|r| r.len() == 1)
    }

    pub fn num_pairs(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    /// All enabled pairs in (state, choice) order.
    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        self.choices.iter().enumerate().flat_map(|(s, r)| (0..r.len()).map(move |c| (s, c)))
    }

    /// Globally unique action id `state:action`.
    pub fn pair_key(&self, (s, c): Pair) -> String {
        format!("{}:{}", self.names[s], self.choices[s][c].action)
    }

    pub fn pair_by_key(&self, key: &str) -> Option<Pair> {
        let (state, action) = key.split_once(':')?;
        let s = self.id(state)?;
        let c = self.choices[s].iter().position(|ch| ch.action == action)?;
        Some((s, c))
    }

    pub fn mask(&self, set: &StateSet) -> Vec<bool> {
        let mut m = vec![false; self.num_states()];
        for &s in set {
            m[s] = true;
        }
        m
    }

    pub fn all_states(&self) -> StateSet {
        self.states().collect()
    }

    /// Pairs of `s` that stay inside `domain` with mass one.
    pub fn internal_choices<'a>(&'a self, s: StateId, domain: &'a [bool]) -> impl Iterator<Item = usize> + 'a {
        self.choices[s].iter().enumerate().filter(move |(_, c)| c.is_internal(domain)).map(|(i, _)| i)
    }

    /// `M[D]`: the states of `D` with every pair whose support lies in `D` and
    /// whose mass is one, renumbered in increasing parent order.
    pub fn sub_mdp(&self, d: &StateSet) -> SubMdp {
        let mask = self.mask(d);
        self.restrict(d, |c| c.is_internal(&mask).then(|| c.clone()))
    }

    /// `M_{S'}`: every pair of every state in `S'` kept, successors outside
    /// `S'` dropped without renormalization.
    pub fn induced_subsystem(&self, s_prime: &StateSet) -> Result<SubMdp> {
        if !s_prime.contains(&self.initial) || self.is_empty() {
            return model_err("subsystem must contain the initial state");
        }
        let mask = self.mask(s_prime);
        Ok(self.restrict(s_prime, |c| {
            Some(Choice {
                action: c.action.clone(),
                dist: c.dist.iter().filter(|(t, _)| mask[*t]).cloned().collect(),
            })
        }))
    }

    fn restrict(&self, d: &StateSet, mut keep: impl FnMut(&Choice) -> Option<Choice>) -> SubMdp {
        let to_parent: Vec<StateId> = d.iter().copied().collect();
        let mut new_id = vec![usize::MAX; self.num_states()];
        for (i, &s) in to_parent.iter().enumerate() {
            new_id[s] = i;
        }
        let names = to_parent.iter().map(|&s| self.names[s].clone()).collect();
        let choices = to_parent
            .iter()
            .map(|&s| {
                self.choices[s]
                    .iter()
                    .filter_map(&mut keep)
                    .map(|c| Choice {
                        action: c.action,
                        dist: c.dist.into_iter().map(|(t, p)| (new_id[t], p)).collect(),
                    })
                    .collect()
            })
            .collect();
        let initial = if d.contains(&self.initial) { new_id[self.initial] } else { 0 };
        let mdp = Mdp::new(names, initial, choices).expect("restriction of a valid MDP is valid");
        SubMdp { mdp, to_parent }
    }

    /// Maps a set of parent ids through a renumbering.
    pub fn lift_set(sub: &SubMdp, set: &StateSet) -> StateSet {
        set.iter().map(|&s| sub.to_parent[s]).collect()
    }
}

/// Incremental builder used by the text parsers.
#[derive(Debug, Default)]
pub struct MdpBuilder {
    names: Vec<String>,
    index: HashMap<String, StateId>,
    choices: Vec<Vec<(String, BTreeMap<StateId, Q>)>>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn has_action(&self, src: &str, action: &str) -> bool {
        self.index.get(src).is_some_and(|&s| self.choices[s].iter().any(|(a, _)| a == action))
    }

    /// Returns the id of `name`, declaring it on first use.
    pub fn state(&mut self, name: &str) -> StateId {
        if let Some(&s) = self.index.get(name) {
            return s;
        }
        let s = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), s);
        self.choices.push(Vec::new());
        s
    }

    /// Declares an action without transitions (a zero-mass pair).
    pub fn action(&mut self, src: &str, action: &str) {
        let s = self.state(src);
        if !self.choices[s].iter().any(|(a, _)| a == action) {
            self.choices[s].push((action.to_string(), BTreeMap::new()));
        }
    }

    pub fn transition(&mut self, src: &str, action: &str, prob: Q, dst: &str) -> Result<()> {
        let s = self.state(src);
        let t = self.state(dst);
        self.action(src, action);
        let row = &mut self.choices[s].iter_mut().find(|(a, _)| a == action).expect("declared").1;
        if row.contains_key(&t) {
            return model_err(format!("duplicate triple {src} {action} {dst}"));
        }
        row.insert(t, prob);
        Ok(())
    }

    pub fn build(self, initial: &str) -> Result<Mdp> {
        let Some(&init) = self.index.get(initial) else {
            return model_err(format!("unknown initial state {initial}"));
        };
        let choices = self
            .choices
            .into_iter()
            .map(|r| r.into_iter().map(|(action, d)| Choice { action, dist: d.into_iter().collect() }).collect())
            .collect();
        Mdp::new(self.names, init, choices)
    }
}

/// A total map from states to finite label sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    names: Vec<String>,
    of_state: Vec<BTreeSet<usize>>,
}

impl Labeling {
    /// One distinct label per state, named after the state.
    pub fn per_state(m: &Mdp) -> Labeling {
        Labeling {
            names: m.names().to_vec(),
            of_state: m.states().map(|s| BTreeSet::from([s])).collect(),
        }
    }

    /// Labels in order of first appearance along increasing state ids.
    /// States missing from `map` receive no labels.
    pub fn from_map(m: &Mdp, map: &BTreeMap<String, Vec<String>>) -> Result<Labeling> {
        for k in map.keys() {
            if m.id(k).is_none() {
                return model_err(format!("labeling names unknown state {k}"));
            }
        }
        let mut names: Vec<String> = Vec::new();
        let mut idx: HashMap<String, usize> = HashMap::new();
        let mut of_state = Vec::with_capacity(m.num_states());
        for s in m.states() {
            let mut set = BTreeSet::new();
            for l in map.get(m.name(s)).map(Vec::as_slice).unwrap_or_default() {
                let id = *idx.entry(l.clone()).or_insert_with(|| {
                    names.push(l.clone());
                    names.len() - 1
                });
                set.insert(id);
            }
            of_state.push(set);
        }
        Ok(Labeling { names, of_state })
    }

    pub fn num_labels(&self) -> usize {
        self.names.len()
    }

    pub fn label_name(&self, l: usize) -> &str {
        &self.names[l]
    }

    pub fn labels_of(&self, s: StateId) -> &BTreeSet<usize> {
        &self.of_state[s]
    }

    pub fn labels_of_set<'a>(&self, set: impl IntoIterator<Item = &'a StateId>) -> BTreeSet<usize> {
        set.into_iter().flat_map(|&s| self.of_state[s].iter().copied()).collect()
    }

    /// Whether all states of each block carry identical label sets.
    pub fn is_block_equivalent(&self, blocks: &[StateSet]) -> bool {
        blocks.iter().all(|b| {
            let mut it = b.iter();
            match it.next() {
                Some(&first) => it.all(|&s| self.of_state[s] == self.of_state[first]),
                None => true,
            }
        })
    }

    /// Labeling of a renumbered part, sharing label ids with `self`.
    pub fn restrict(&self, sub: &SubMdp) -> Labeling {
        Labeling {
            names: self.names.clone(),
            of_state: sub.to_parent.iter().map(|&s| self.of_state[s].clone()).collect(),
        }
    }

    /// Pulls labels back along a projection `state -> base state`.
    pub fn pull_back(&self, proj: &[StateId]) -> Labeling {
        Labeling {
            names: self.names.clone(),
            of_state: proj.iter().map(|&s| self.of_state[s].clone()).collect(),
        }
    }
}
