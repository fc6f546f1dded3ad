//! MEC quotients with index-set sinks.
//!
//! Every block becomes one state. Pairs leaving their block keep their
//! action id `state:action`, with successor mass summed per block. A block
//! with entry `(D, I)` gets an action `tau{I}` into the sink `bot{I}`. A
//! block left without any action gets a zero-mass `stop` action, so that
//! every non-sink state constrains the reachability certificates.

use std::collections::{BTreeMap, BTreeSet};

use certimdp_opt::Q;
use num_traits::One;

use crate::ec_analysis::mask_of;
use crate::error::{Error, Result};
use crate::model::{Choice, Mdp, Pair, StateId, StateSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuotientAction {
    Original(Pair),
    Tau(Vec<usize>),
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quotient {
    /// States `0..blocks.len()` are blocks, then one state per sink.
    pub mdp: Mdp,
    pub blocks: Vec<StateSet>,
    /// Index set of every sink, ordered by bitmask.
    pub sinks: Vec<Vec<usize>>,
    /// Origin of every choice of every quotient state.
    pub origin: Vec<Vec<QuotientAction>>,
    pub k: usize,
}

pub fn set_label(set: &[usize]) -> String {
    format!("{{{}}}", set.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
}

/// Builds `M_{/𝒟}^I`. Sinks exist exactly for the index sets occurring in
/// `index`; the others would be unreachable.
pub fn build_quotient(m: &Mdp, blocks: &[StateSet], index: &BTreeSet<(usize, Vec<usize>)>, k: usize) -> Result<Quotient> {
    let mut block_of = vec![usize::MAX; m.num_states()];
    for (i, b) in blocks.iter().enumerate() {
        for &s in b {
            if s >= m.num_states() || block_of[s] != usize::MAX {
                return Err(Error::Model("blocks do not form a partition".into()));
            }
            block_of[s] = i;
        }
    }
    if block_of.contains(&usize::MAX) || blocks.iter().any(BTreeSet::is_empty) {
        return Err(Error::Model("blocks do not form a partition".into()));
    }
    for (b, set) in index {
        if *b >= blocks.len() {
            return Err(Error::Model(format!("index set names unknown block {b}")));
        }
        if set.iter().any(|&i| i >= k) || set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model(format!("index set {set:?} is not a sorted subset of 0..{k}")));
        }
    }
    let mut sinks: Vec<Vec<usize>> = index.iter().map(|(_, s)| s.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    sinks.sort_by_key(|s| mask_of(s));
    let sink_id: BTreeMap<&Vec<usize>, StateId> = sinks.iter().enumerate().map(|(j, s)| (s, blocks.len() + j)).collect();

    let mut names: Vec<String> = (0..blocks.len()).map(|i| format!("B{i}")).collect();
    names.extend(sinks.iter().map(|s| format!("bot{}", set_label(s))));
    let mut choices: Vec<Vec<Choice>> = Vec::with_capacity(names.len());
    let mut origin: Vec<Vec<QuotientAction>> = Vec::with_capacity(names.len());
    for (bi, block) in blocks.iter().enumerate() {
        let mut row = Vec::new();
        let mut orow = Vec::new();
        for &s in block {
            for (c, ch) in m.choices(s).iter().enumerate() {
                if ch.support().all(|t| block_of[t] == bi) && ch.mass().is_one() {
                    continue;
                }
                let mut agg: BTreeMap<StateId, Q> = BTreeMap::new();
                for (t, p) in &ch.dist {
                    *agg.entry(block_of[*t]).or_default() += p;
                }
                row.push(Choice { action: m.pair_key((s, c)), dist: agg.into_iter().collect() });
                orow.push(QuotientAction::Original((s, c)));
            }
        }
        let mut taus: Vec<&Vec<usize>> = index.iter().filter(|(b, _)| *b == bi).map(|(_, s)| s).collect();
        taus.sort_by_key(|s| mask_of(s));
        for set in taus {
            row.push(Choice { action: format!("tau{}", set_label(set)), dist: vec![(sink_id[set], Q::one())] });
            orow.push(QuotientAction::Tau(set.clone()));
        }
        if row.is_empty() {
            row.push(Choice { action: "stop".into(), dist: Vec::new() });
            orow.push(QuotientAction::Stop);
        }
        choices.push(row);
        origin.push(orow);
    }
    for _ in &sinks {
        choices.push(Vec::new());
        origin.push(Vec::new());
    }
    let mdp = Mdp::new(names, block_of[m.initial()], choices)?;
    Ok(Quotient { mdp, blocks: blocks.to_vec(), sinks, origin, k })
}

impl Quotient {
    pub fn sink_states(&self) -> StateSet {
        (self.blocks.len()..self.mdp.num_states()).collect()
    }

    pub fn sink_of(&self, set: &[usize]) -> Option<StateId> {
        self.sinks.iter().position(|s| s == set).map(|j| self.blocks.len() + j)
    }

    /// `(G_i, Ḡ_i)` for every objective: sinks whose index set does or does
    /// not contain `i`.
    pub fn targets(&self) -> (Vec<StateSet>, Vec<StateSet>) {
        let mut g = vec![StateSet::new(); self.k];
        let mut gbar = vec![StateSet::new(); self.k];
        for (j, set) in self.sinks.iter().enumerate() {
            for i in 0..self.k {
                if set.contains(&i) { &mut g[i] } else { &mut gbar[i] }.insert(self.blocks.len() + j);
            }
        }
        (g, gbar)
    }

    /// Original states of a set of quotient states; sinks contribute none.
    pub fn expand(&self, set: &StateSet) -> StateSet {
        set.iter().filter(|&&s| s < self.blocks.len()).flat_map(|&s| self.blocks[s].iter().copied()).collect()
    }
}
