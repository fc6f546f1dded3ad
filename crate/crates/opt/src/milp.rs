//! Exact best-first branch-and-bound over binary variables.
//!
//! Indicator links `b = 0 ⟹ x = 0` are enforced by branching: the `b = 0`
//! child pins `x` to zero through its upper bound, so no numeric big-M is
//! needed. Rows listed in `strict_rows` are read as `>` (for `>=` rows) or
//! `<` (for `<=` rows) and are decided by maximizing a common slack.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_traits::{One, Signed, Zero};

use crate::lp::{lp_solve, LinearProgram, LpOutcome, LpSolution, Relation, Sense};
use crate::rational::Q;

/// `binary = 0` forces `var = 0`; `var` must be bounded below by zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Indicator {
    pub binary: usize,
    pub var: usize,
}

/// A linear program with binary variables and indicator links.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    pub lp: LinearProgram,
    /// Variables restricted to `{0, 1}`; bounds are clamped to `[0, 1]`.
    pub binaries: Vec<usize>,
    pub indicators: Vec<Indicator>,
    /// Constraint indices whose relation is strict.
    pub strict_rows: Vec<usize>,
}

/// Search statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MilpStats {
    pub nodes: usize,
    pub lp_solves: usize,
    pub pivots: usize,
}

/// Verdict of [`milp_solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum MilpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl MilpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            MilpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

impl MilpModel {
    pub fn new(lp: LinearProgram) -> Self {
        MilpModel {
            lp,
            ..MilpModel::default()
        }
    }

    /// Adds a binary variable and returns its index.
    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        let b = self.lp.add_var(name, Some(Q::zero()), Some(Q::one()));
        self.binaries.push(b);
        b
    }

    pub fn add_indicator(&mut self, binary: usize, var: usize) {
        self.indicators.push(Indicator { binary, var });
    }

    /// Whether `values` is feasible, integral and respects indicators and strict rows.
    pub fn is_feasible_point(&self, values: &[Q]) -> bool {
        self.lp.is_feasible_point(values)
            && self.binaries.iter().all(|&b| values[b].is_zero() || values[b].is_one())
            && self
                .indicators
                .iter()
                .all(|ind| !values[ind.binary].is_zero() || values[ind.var].is_zero())
            && self.strict_rows.iter().all(|&r| {
                let c = &self.lp.constraints[r];
                let lhs = c.lhs(values);
                match c.relation {
                    Relation::Ge => lhs > c.rhs,
                    Relation::Le => lhs < c.rhs,
                    Relation::Eq => false,
                }
            })
    }
}

struct Node {
    bound: Q,
    seq: u64,
    fixed: Vec<Option<bool>>,
    solution: LpSolution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the smallest bound, then the oldest node, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    /// Minimization objective over variables (maximization is negated).
    costs: Vec<(usize, Q)>,
    stats: MilpStats,
}

impl<'a> Search<'a> {
    fn node_lp(&self, fixed: &[Option<bool>], objective: &[(usize, Q)]) -> LinearProgram {
        let mut lp = self.model.lp.clone();
        for (&b, f) in self.model.binaries.iter().zip(fixed) {
            let v = &mut lp.variables[b];
            match f {
                None => {
                    v.lower = Some(clamp01(v.lower.clone(), true));
                    v.upper = Some(clamp01(v.upper.clone(), false));
                }
                Some(val) => {
                    let x = if *val { Q::one() } else { Q::zero() };
                    v.lower = Some(x.clone());
                    v.upper = Some(x);
                }
            }
        }
        for ind in &self.model.indicators {
            let pos = self.binary_pos(ind.binary);
            if fixed[pos] == Some(false) {
                lp.variables[ind.var].upper = Some(Q::zero());
            }
        }
        lp.set_objective(Sense::Minimize, objective.to_vec());
        lp
    }

    fn binary_pos(&self, var: usize) -> usize {
        self.model
            .binaries
            .iter()
            .position(|&b| b == var)
            .expect("indicator binary is declared binary")
    }

    fn solve(&mut self, lp: &LinearProgram) -> LpOutcome {
        self.stats.lp_solves += 1;
        let out = lp_solve(lp);
        if let LpOutcome::Optimal(s) = &out {
            self.stats.pivots += s.pivots;
        }
        out
    }

    fn evaluate(&mut self, fixed: Vec<Option<bool>>, seq: u64) -> Result<Option<Node>, ()> {
        let lp = self.node_lp(&fixed, &self.costs.clone());
        match self.solve(&lp) {
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => Err(()),
            LpOutcome::Optimal(solution) => Ok(Some(Node {
                bound: solution.objective.clone(),
                seq,
                fixed,
                solution,
            })),
        }
    }

    /// Maximizes a common slack on the strict rows with every binary fixed.
    fn strict_candidate(&mut self, fixed: &[Option<bool>]) -> Option<LpSolution> {
        let mut lp = self.node_lp(fixed, &[]);
        let t = lp.add_var("__strict_slack", Some(Q::zero()), Some(Q::one()));
        for &r in &self.model.strict_rows {
            let c = &mut lp.constraints[r];
            match c.relation {
                Relation::Ge => c.coeffs.push((t, -Q::one())),
                Relation::Le => c.coeffs.push((t, Q::one())),
                Relation::Eq => return None,
            }
        }
        lp.set_objective(Sense::Maximize, vec![(t, Q::one())]);
        let sol = self.solve(&lp).optimal()?;
        if !sol.objective.is_positive() {
            return None;
        }
        let mut values = sol.values;
        values.pop();
        let objective = self.costs.iter().map(|(j, c)| c * &values[*j]).sum();
        Some(LpSolution {
            values,
            objective,
            pivots: sol.pivots,
        })
    }
}

fn clamp01(bound: Option<Q>, lower: bool) -> Q {
    match (bound, lower) {
        (Some(b), true) if b > Q::zero() => b.min(Q::one()),
        (Some(b), false) if b < Q::one() => b.max(Q::zero()),
        (_, true) => Q::zero(),
        (_, false) => Q::one(),
    }
}

fn is_binaries_only_integer(model: &MilpModel) -> bool {
    model.lp.objective.iter().all(|(j, c)| c.is_integer() && model.binaries.contains(j))
}

/// Solves `model` exactly.
///
/// When the objective has integer coefficients on binaries only, ties between
/// equal-objective assignments are broken towards setting lower-indexed
/// binaries (in `binaries` order) to one. The reported objective is the
/// unperturbed value.
pub fn milp_solve(model: &MilpModel) -> (MilpOutcome, MilpStats) {
    let sign = match model.lp.sense {
        Sense::Maximize => -Q::one(),
        _ => Q::one(),
    };
    let mut costs: Vec<(usize, Q)> = match model.lp.sense {
        Sense::Feasibility => Vec::new(),
        _ => model.lp.objective.iter().map(|(j, c)| (*j, c * &sign)).collect(),
    };
    if model.lp.sense != Sense::Feasibility && is_binaries_only_integer(model) {
        let mut weight = Q::new(1.into(), 2.into());
        let half = Q::new(1.into(), 2.into());
        for &b in &model.binaries {
            weight *= &half;
            costs.push((b, -weight.clone()));
        }
        costs = crate::lp::merge_terms(costs);
    }
    let mut search = Search {
        model,
        costs,
        stats: MilpStats::default(),
    };
    let nb = model.binaries.len();
    let root = match search.evaluate(vec![None; nb], 0) {
        Err(()) => return (MilpOutcome::Unbounded, search.stats),
        Ok(None) => return (MilpOutcome::Infeasible, search.stats),
        Ok(Some(n)) => n,
    };
    let mut seq = 1u64;
    let mut heap = BinaryHeap::from([root]);
    let mut incumbent: Option<LpSolution> = None;
    while let Some(node) = heap.pop() {
        if incumbent.as_ref().is_some_and(|inc| node.bound >= inc.objective) {
            break;
        }
        search.stats.nodes += 1;
        let x = &node.solution.values;
        let branch_on = model
            .binaries
            .iter()
            .position(|&b| !x[b].is_zero() && !x[b].is_one())
            .or_else(|| {
                model.indicators.iter().find_map(|ind| {
                    let pos = search.binary_pos(ind.binary);
                    (node.fixed[pos].is_none() && x[ind.binary].is_zero() && !x[ind.var].is_zero())
                        .then_some(pos)
                })
            });
        let branch_on = match branch_on {
            Some(pos) => Some(pos),
            None if model.strict_rows.is_empty() || model.is_feasible_point(x) => {
                let candidate = node.solution.clone();
                if incumbent.as_ref().map_or(true, |inc| candidate.objective < inc.objective) {
                    incumbent = Some(candidate);
                }
                None
            }
            None => {
                let mut all_fixed = node.fixed.clone();
                for (pos, &b) in model.binaries.iter().enumerate() {
                    all_fixed[pos] = Some(x[b].is_one());
                }
                match search.strict_candidate(&all_fixed) {
                    Some(candidate) => {
                        if incumbent.as_ref().map_or(true, |inc| candidate.objective < inc.objective) {
                            incumbent = Some(candidate);
                        }
                        None
                    }
                    None => node.fixed.iter().position(Option::is_none),
                }
            }
        };
        let Some(pos) = branch_on else { continue };
        for val in [false, true] {
            let mut fixed = node.fixed.clone();
            fixed[pos] = Some(val);
            match search.evaluate(fixed, seq) {
                Err(()) => return (MilpOutcome::Unbounded, search.stats),
                Ok(None) => {}
                Ok(Some(child)) => {
                    if incumbent.as_ref().map_or(true, |inc| child.bound < inc.objective) {
                        heap.push(child);
                    }
                }
            }
            seq += 1;
        }
    }
    let stats = search.stats;
    match incumbent {
        None => (MilpOutcome::Infeasible, stats),
        Some(mut sol) => {
            sol.objective = match model.lp.sense {
                Sense::Feasibility => Q::zero(),
                _ => model.lp.objective_value(&sol.values),
            };
            (MilpOutcome::Optimal(sol), stats)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn knapsack_optimum() {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 4 → a = c = 1, value 8.
        let mut m = MilpModel::new(LinearProgram::new(Sense::Maximize));
        let v: Vec<usize> = ["a", "b", "c"].iter().map(|n| m.add_binary(*n)).collect();
        m.lp.add_constraint(vec![(v[0], qi(2)), (v[1], qi(3)), (v[2], qi(1))], Relation::Le, qi(4));
        m.lp.set_objective(Sense::Maximize, vec![(v[0], qi(5)), (v[1], qi(4)), (v[2], qi(3))]);
        let (out, _) = milp_solve(&m);
        let sol = out.optimal().unwrap();
        assert_eq!(sol.objective, qi(8));
        assert_eq!(sol.values, vec![qi(1), qi(0), qi(1)]);
    }

    #[test]
    fn integral_root_needs_one_node() {
        let mut m = MilpModel::new(LinearProgram::new(Sense::Minimize));
        let b = m.add_binary("b");
        let x = m.lp.add_nonneg("x");
        m.lp.add_constraint(vec![(x, qi(1)), (b, qi(1))], Relation::Ge, qi(1));
        m.lp.set_objective(Sense::Minimize, vec![(x, qi(2)), (b, qi(1))]);
        let (out, stats) = milp_solve(&m);
        assert_eq!(out.optimal().unwrap().objective, qi(1));
        assert_eq!(stats.nodes, 1);
    }

    #[test]
    fn indicator_forces_zero() {
        // min b s.t. x >= 1/2, b = 0 ⟹ x = 0 → b = 1.
        let mut m = MilpModel::new(LinearProgram::new(Sense::Minimize));
        let b = m.add_binary("b");
        let x = m.lp.add_nonneg("x");
        m.lp.add_constraint(vec![(x, qi(1))], Relation::Ge, q(1, 2));
        m.lp.set_objective(Sense::Minimize, vec![(b, qi(1))]);
        m.add_indicator(b, x);
        let (out, _) = milp_solve(&m);
        assert_eq!(out.optimal().unwrap().values, vec![qi(1), q(1, 2)]);
    }

    #[test]
    fn strict_row_excludes_boundary() {
        // min b s.t. x > 0, x <= b.
        let mut m = MilpModel::new(LinearProgram::new(Sense::Minimize));
        let b = m.add_binary("b");
        let x = m.lp.add_nonneg("x");
        let r = m.lp.add_constraint(vec![(x, qi(1))], Relation::Ge, qi(0));
        m.lp.add_constraint(vec![(x, qi(1)), (b, qi(-1))], Relation::Le, qi(0));
        m.lp.set_objective(Sense::Minimize, vec![(b, qi(1))]);
        m.strict_rows.push(r);
        let (out, _) = milp_solve(&m);
        let sol = out.optimal().unwrap();
        assert_eq!(sol.objective, qi(1));
        assert!(m.is_feasible_point(&sol.values));

        m.lp.constraints[r].rhs = qi(1);
        assert_eq!(milp_solve(&m).0, MilpOutcome::Infeasible);
    }

    #[test]
    fn ties_prefer_lower_indexed_ones() {
        // min a + b s.t. a + b >= 1: both single choices cost 1; a is preferred.
        let mut m = MilpModel::new(LinearProgram::new(Sense::Minimize));
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.lp.add_constraint(vec![(a, qi(1)), (b, qi(1))], Relation::Ge, qi(1));
        m.lp.set_objective(Sense::Minimize, vec![(a, qi(1)), (b, qi(1))]);
        let sol = milp_solve(&m).0.optimal().unwrap();
        assert_eq!(sol.values, vec![qi(1), qi(0)]);
        assert_eq!(sol.objective, qi(1));
    }
}
