//! Exact two-phase primal simplex with Bland's rule.
//!
//! Variables may carry optional lower and upper bounds; the program is
//! rewritten into standard form `A x (<=,=,>=) b, x >= 0` over fresh columns,
//! solved on a dense rational tableau and mapped back.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::Q;

/// Row relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    /// Whether `lhs rel rhs` holds.
    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
        }
    }

    fn flipped(self) -> Relation {
        match self {
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ge => Relation::Le,
        }
    }
}

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[serde(rename = "min")]
    Minimize,
    #[serde(rename = "max")]
    Maximize,
    #[serde(rename = "feasibility")]
    Feasibility,
}

/// A continuous variable with optional bounds (`None` = unbounded side).
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: Option<Q>,
    pub upper: Option<Q>,
}

/// A linear row `Σ coeff·x rel rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Q)>,
    pub relation: Relation,
    pub rhs: Q,
}

impl Constraint {
    /// Left-hand side at `values`.
    pub fn lhs(&self, values: &[Q]) -> Q {
        self.coeffs.iter().map(|(j, c)| c * &values[*j]).sum()
    }
}

/// A linear program over rational data.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, Q)>,
    pub sense: Sense,
}

/// Optimal primal point.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<Q>,
    pub objective: Q,
    pub pivots: usize,
}

/// Verdict of [`lp_solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible)
    }
}

impl Default for LinearProgram {
    fn default() -> Self {
        LinearProgram::new(Sense::Feasibility)
    }
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            sense,
        }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: Option<Q>, upper: Option<Q>) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    /// Adds a variable bounded below by zero.
    pub fn add_nonneg(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, Some(Q::zero()), None)
    }

    /// Adds an unbounded variable.
    pub fn add_free(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, None, None)
    }

    /// Adds a row; zero coefficients are dropped and duplicates summed.
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, Q)>, relation: Relation, rhs: Q) -> usize {
        self.constraints.push(Constraint {
            coeffs: merge_terms(coeffs),
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, sense: Sense, coeffs: Vec<(usize, Q)>) {
        self.sense = sense;
        self.objective = merge_terms(coeffs);
    }

    /// Objective value at `values`.
    pub fn objective_value(&self, values: &[Q]) -> Q {
        self.objective.iter().map(|(j, c)| c * &values[*j]).sum()
    }

    /// Whether `values` satisfies every bound and row exactly.
    pub fn is_feasible_point(&self, values: &[Q]) -> bool {
        values.len() == self.variables.len()
            && self.variables.iter().zip(values).all(|(v, x)| {
                v.lower.as_ref().map_or(true, |l| x >= l) && v.upper.as_ref().map_or(true, |u| x <= u)
            })
            && self
                .constraints
                .iter()
                .all(|c| c.relation.holds(&c.lhs(values), &c.rhs))
    }
}

/// Sums duplicate indices and drops zero terms, sorted by index.
pub fn merge_terms(coeffs: Vec<(usize, Q)>) -> Vec<(usize, Q)> {
    let mut map: BTreeMap<usize, Q> = BTreeMap::new();
    for (j, c) in coeffs {
        *map.entry(j).or_insert_with(Q::zero) += c;
    }
    map.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

#[derive(Debug, Clone)]
enum ColumnMap {
    /// `x = offset + col`.
    Shift(Q, usize),
    /// `x = offset - col`.
    Negated(Q, usize),
    /// `x = pos - neg`.
    Split(usize, usize),
    /// `x` is pinned by equal bounds and has no column.
    Fixed(Q),
}

/// Solves `lp` exactly.
///
/// Panics if a coefficient references an undeclared variable.
pub fn lp_solve(lp: &LinearProgram) -> LpOutcome {
    let nvars = lp.variables.len();
    for c in &lp.constraints {
        assert!(c.coeffs.iter().all(|(j, _)| *j < nvars), "constraint references unknown variable");
    }
    assert!(lp.objective.iter().all(|(j, _)| *j < nvars), "objective references unknown variable");

    let mut ncols = 0usize;
    let mut maps = Vec::with_capacity(nvars);
    let mut rows: Vec<(BTreeMap<usize, Q>, Relation, Q)> = Vec::new();
    for v in &lp.variables {
        match (&v.lower, &v.upper) {
            (Some(l), Some(u)) if l == u => maps.push(ColumnMap::Fixed(l.clone())),
            (Some(l), Some(u)) => {
                if l > u {
                    return LpOutcome::Infeasible;
                }
                maps.push(ColumnMap::Shift(l.clone(), ncols));
                rows.push((BTreeMap::from([(ncols, Q::one())]), Relation::Le, u - l));
                ncols += 1;
            }
            (Some(l), None) => {
                maps.push(ColumnMap::Shift(l.clone(), ncols));
                ncols += 1;
            }
            (None, Some(u)) => {
                maps.push(ColumnMap::Negated(u.clone(), ncols));
                ncols += 1;
            }
            (None, None) => {
                maps.push(ColumnMap::Split(ncols, ncols + 1));
                ncols += 2;
            }
        }
    }
    let substitute = |terms: &[(usize, Q)]| -> (BTreeMap<usize, Q>, Q) {
        let mut out: BTreeMap<usize, Q> = BTreeMap::new();
        let mut constant = Q::zero();
        for (j, a) in terms {
            match &maps[*j] {
                ColumnMap::Shift(off, col) => {
                    constant += a * off;
                    *out.entry(*col).or_insert_with(Q::zero) += a;
                }
                ColumnMap::Negated(off, col) => {
                    constant += a * off;
                    *out.entry(*col).or_insert_with(Q::zero) -= a;
                }
                ColumnMap::Split(p, n) => {
                    *out.entry(*p).or_insert_with(Q::zero) += a;
                    *out.entry(*n).or_insert_with(Q::zero) -= a;
                }
                ColumnMap::Fixed(v) => constant += a * v,
            }
        }
        out.retain(|_, c| !c.is_zero());
        (out, constant)
    };
    for c in &lp.constraints {
        let (coeffs, constant) = substitute(&c.coeffs);
        rows.push((coeffs, c.relation, &c.rhs - constant));
    }
    let (obj_cols, obj_const) = match lp.sense {
        Sense::Feasibility => (BTreeMap::new(), Q::zero()),
        Sense::Minimize => substitute(&lp.objective),
        Sense::Maximize => {
            let (mut cols, k) = substitute(&lp.objective);
            for v in cols.values_mut() {
                *v = -v.clone();
            }
            (cols, -k)
        }
    };

    let (status, col_values, pivots) = solve_standard(ncols, rows, &obj_cols);
    match status {
        StdStatus::Infeasible => return LpOutcome::Infeasible,
        StdStatus::Unbounded => return LpOutcome::Unbounded,
        StdStatus::Optimal => {}
    }
    let values: Vec<Q> = maps
        .iter()
        .map(|m| match m {
            ColumnMap::Shift(off, col) => off + &col_values[*col],
            ColumnMap::Negated(off, col) => off - &col_values[*col],
            ColumnMap::Split(p, n) => &col_values[*p] - &col_values[*n],
            ColumnMap::Fixed(v) => v.clone(),
        })
        .collect();
    let objective = match lp.sense {
        Sense::Feasibility => Q::zero(),
        _ => lp.objective_value(&values),
    };
    let _ = obj_const;
    LpOutcome::Optimal(LpSolution {
        values,
        objective,
        pivots,
    })
}

enum StdStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
    obj: Vec<Q>,
    width: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Q {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let mut pr = std::mem::take(&mut self.rows[r]);
        if !pr[c].is_one() {
            let inv = Q::one() / &pr[c];
            for v in pr.iter_mut() {
                if !v.is_zero() {
                    *v *= &inv;
                }
            }
        }
        let nz: Vec<usize> = (0..=self.width).filter(|&j| !pr[j].is_zero()).collect();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for &j in &nz {
                row[j] -= &f * &pr[j];
            }
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for &j in &nz {
                self.obj[j] -= &f * &pr[j];
            }
        }
        self.rows[r] = pr;
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed`; returns false if unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        #[cfg(debug_assertions)]
        let mut seen = std::collections::HashSet::new();
        loop {
            #[cfg(debug_assertions)]
            {
                let mut key = self.basis.clone();
                key.sort_unstable();
                assert!(seen.insert(key), "simplex revisited a basis");
            }
            let Some(enter) = (0..allowed).find(|&j| self.obj[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((leave, _)) = best else {
                return false;
            };
            self.pivot(leave, enter);
        }
    }

    fn load_objective(&mut self, costs: &[Q]) {
        let mut obj = vec![Q::zero(); self.width + 1];
        obj[..costs.len()].clone_from_slice(costs);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs.get(b).cloned().unwrap_or_else(Q::zero);
            if cb.is_zero() {
                continue;
            }
            for (j, v) in self.rows[i].iter().enumerate() {
                if !v.is_zero() {
                    obj[j] -= &cb * v;
                }
            }
        }
        self.obj = obj;
    }
}

fn solve_standard(
    nstruct: usize,
    rows: Vec<(BTreeMap<usize, Q>, Relation, Q)>,
    costs: &BTreeMap<usize, Q>,
) -> (StdStatus, Vec<Q>, usize) {
    let mut rows: Vec<(BTreeMap<usize, Q>, Relation, Q)> = rows
        .into_iter()
        .map(|(mut coeffs, rel, rhs)| {
            if rhs.is_negative() {
                for v in coeffs.values_mut() {
                    *v = -v.clone();
                }
                (coeffs, rel.flipped(), -rhs)
            } else {
                (coeffs, rel, rhs)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let first_art = nstruct + n_slack;
    let width = first_art + n_art;
    let m = rows.len();
    let mut table = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        obj: Vec::new(),
        width,
        pivots: 0,
    };
    let mut next_slack = nstruct;
    let mut next_art = first_art;
    for (coeffs, rel, rhs) in rows.drain(..) {
        let mut row = vec![Q::zero(); width + 1];
        for (j, v) in coeffs {
            row[j] = v;
        }
        row[width] = rhs;
        match rel {
            Relation::Le => {
                row[next_slack] = Q::one();
                table.basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -Q::one();
                next_slack += 1;
                row[next_art] = Q::one();
                table.basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = Q::one();
                table.basis.push(next_art);
                next_art += 1;
            }
        }
        table.rows.push(row);
    }

    if n_art > 0 {
        let mut phase1 = vec![Q::zero(); width];
        for c in phase1.iter_mut().skip(first_art) {
            *c = Q::one();
        }
        table.load_objective(&phase1);
        let bounded = table.run(width);
        debug_assert!(bounded, "phase one is bounded below by zero");
        if !table.obj[width].is_zero() {
            return (StdStatus::Infeasible, Vec::new(), table.pivots);
        }
        let mut keep = vec![true; table.rows.len()];
        for r in 0..table.rows.len() {
            if table.basis[r] < first_art {
                continue;
            }
            match (0..first_art).find(|&j| !table.rows[r][j].is_zero()) {
                Some(j) => table.pivot(r, j),
                None => keep[r] = false,
            }
        }
        let mut k = keep.iter();
        table.rows.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        table.basis.retain(|_| *k.next().unwrap());
    }

    let mut phase2 = vec![Q::zero(); width];
    for (&j, c) in costs {
        phase2[j] = c.clone();
    }
    table.load_objective(&phase2);
    if !table.run(first_art) {
        return (StdStatus::Unbounded, Vec::new(), table.pivots);
    }
    let mut values = vec![Q::zero(); nstruct];
    for (i, &b) in table.basis.iter().enumerate() {
        if b < nstruct {
            values[b] = table.rows[i][width].clone();
        }
    }
    (StdStatus::Optimal, values, table.pivots)
}
