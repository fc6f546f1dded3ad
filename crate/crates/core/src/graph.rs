//! Graph primitives over a domain of MDP states.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::model::{Mdp, StateId, StateSet};

/// SCCs of the graph on `nodes` whose edges come from `succ`, each sorted,
/// ordered by smallest member.
pub fn sccs(nodes: &[StateId], succ: impl Fn(StateId) -> Vec<StateId>) -> Vec<StateSet> {
    let mut local = std::collections::HashMap::new();
    let mut g: DiGraph<StateId, ()> = DiGraph::new();
    for &v in nodes {
        local.insert(v, g.add_node(v));
    }
    for &v in nodes {
        for w in succ(v) {
            if let Some(&t) = local.get(&w) {
                g.add_edge(local[&v], t, ());
            }
        }
    }
    let mut out: Vec<StateSet> = tarjan_scc(&g).into_iter().map(|c| c.into_iter().map(|i| g[i]).collect()).collect();
    out.sort_by_key(|c| *c.iter().next().expect("nonempty scc"));
    out
}

/// Successors of `s` along pairs internal to `mask`.
pub fn internal_successors(m: &Mdp, s: StateId, mask: &[bool]) -> Vec<StateId> {
    let mut out: Vec<StateId> = m
        .choices(s)
        .iter()
        .filter(|c| c.is_internal(mask))
        .flat_map(|c| c.support())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Maximal end components of `M[domain]` plus singleton blocks for the
/// remaining states, by iterated SCC refinement. Blocks are ordered by
/// smallest member.
pub fn mec_decomposition_in(m: &Mdp, domain: &StateSet) -> Vec<StateSet> {
    let mut parts: Vec<StateSet> = vec![domain.clone()];
    loop {
        let mut next = Vec::with_capacity(parts.len());
        let mut changed = false;
        for p in &parts {
            if p.len() == 1 {
                next.push(p.clone());
                continue;
            }
            let mask = m.mask(p);
            let nodes: Vec<StateId> = p.iter().copied().collect();
            let split = sccs(&nodes, |s| internal_successors(m, s, &mask));
            changed |= split.len() > 1;
            next.extend(split);
        }
        parts = next;
        if !changed {
            break;
        }
    }
    parts.sort_by_key(|c| *c.iter().next().expect("nonempty block"));
    parts
}

pub fn mec_decomposition(m: &Mdp) -> Vec<StateSet> {
    if m.is_empty() {
        return Vec::new();
    }
    mec_decomposition_in(m, &m.all_states())
}

/// A singleton without a self-loop pair of mass one.
pub fn is_trivial_block(m: &Mdp, block: &StateSet) -> bool {
    if block.len() != 1 {
        return false;
    }
    let s = *block.iter().next().expect("singleton");
    let mask = m.mask(block);
    let none = m.internal_choices(s, &mask).next().is_none();
    none
}

/// BFS distances from `start` along `succ`, restricted to `nodes`.
pub fn bfs(nodes: &StateSet, start: StateId, succ: impl Fn(StateId) -> Vec<StateId>) -> std::collections::BTreeMap<StateId, u64> {
    let mut dist = std::collections::BTreeMap::from([(start, 0u64)]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for w in succ(v) {
            if nodes.contains(&w) && !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// States of `nodes` from which `goal` is reachable along `succ`.
pub fn can_reach(nodes: &[StateId], goal: &[bool], succ: impl Fn(StateId) -> Vec<StateId>) -> Vec<bool> {
    let n = goal.len();
    let mut pred: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for &v in nodes {
        for w in succ(v) {
            pred[w].push(v);
        }
    }
    let mut seen = goal.to_vec();
    let mut queue: VecDeque<StateId> = (0..n).filter(|&v| goal[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &p in &pred[v] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}
