//! LP and MILP results against exhaustive oracles.

use certimdp_opt::{
    lp_solve, milp_solve, q, qi, solve_linear_system, LinearProgram, LinearSolution, LpOutcome, MilpModel,
    MilpOutcome, Relation, Sense, Q,
};
use itertools::Itertools;
use num_traits::{One, Zero};
use proptest::prelude::*;

/// Independent Gaussian elimination returning the unique solution, if any.
fn gauss_unique(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero())?;
        a.swap(c, p);
        b.swap(c, p);
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let f = &a[i][c] / &a[c][c];
                for j in c..n {
                    let d = &f * &a[c][j];
                    a[i][j] -= d;
                }
                let d = &f * &b[c];
                b[i] -= d;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

/// Rows as (coeffs, relation, rhs) with `0 <= x <= ub` box bounds.
#[derive(Debug, Clone)]
struct BoxLp {
    n: usize,
    ub: Vec<i64>,
    rows: Vec<(Vec<i64>, Relation, i64)>,
    obj: Vec<i64>,
}

fn to_lp(inst: &BoxLp) -> LinearProgram {
    let mut lp = LinearProgram::new(Sense::Maximize);
    for j in 0..inst.n {
        lp.add_var(format!("x{j}"), Some(qi(0)), Some(qi(inst.ub[j])));
    }
    for (coeffs, rel, rhs) in &inst.rows {
        lp.add_constraint(coeffs.iter().enumerate().map(|(j, &c)| (j, qi(c))).collect(), *rel, qi(*rhs));
    }
    lp.set_objective(Sense::Maximize, inst.obj.iter().enumerate().map(|(j, &c)| (j, qi(c))).collect());
    lp
}

/// Best objective over all vertices of the box-bounded polytope.
fn vertex_oracle(inst: &BoxLp) -> Option<Q> {
    let n = inst.n;
    let mut hyper: Vec<(Vec<Q>, Q)> = Vec::new();
    for (coeffs, _, rhs) in &inst.rows {
        hyper.push((coeffs.iter().map(|&c| qi(c)).collect(), qi(*rhs)));
    }
    for j in 0..n {
        let e: Vec<Q> = (0..n).map(|i| if i == j { Q::one() } else { Q::zero() }).collect();
        hyper.push((e.clone(), Q::zero()));
        hyper.push((e, qi(inst.ub[j])));
    }
    let lp = to_lp(inst);
    let mut best: Option<Q> = None;
    for subset in (0..hyper.len()).combinations(n) {
        let a = subset.iter().map(|&i| hyper[i].0.clone()).collect();
        let b = subset.iter().map(|&i| hyper[i].1.clone()).collect();
        if let Some(x) = gauss_unique(a, b) {
            if lp.is_feasible_point(&x) {
                let v = lp.objective_value(&x);
                if best.as_ref().map_or(true, |bv| v > *bv) {
                    best = Some(v);
                }
            }
        }
    }
    best
}

fn box_lp() -> impl Strategy<Value = BoxLp> {
    (2usize..=5).prop_flat_map(|n| {
        let rel = prop_oneof![Just(Relation::Le), Just(Relation::Ge), Just(Relation::Eq)];
        let row = (prop::collection::vec(-3i64..=3, n), rel, -4i64..=8);
        (
            Just(n),
            prop::collection::vec(1i64..=4, n),
            prop::collection::vec(row, 1..=4),
            prop::collection::vec(-3i64..=3, n),
        )
            .prop_map(|(n, ub, rows, obj)| BoxLp { n, ub, rows, obj })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_matches_vertex_enumeration(inst in box_lp()) {
        let lp = to_lp(&inst);
        match (lp_solve(&lp), vertex_oracle(&inst)) {
            (LpOutcome::Optimal(sol), Some(best)) => {
                prop_assert!(lp.is_feasible_point(&sol.values));
                prop_assert_eq!(sol.objective, best);
            }
            (LpOutcome::Infeasible, None) => {}
            (got, want) => prop_assert!(false, "solver {:?} oracle {:?}", got, want),
        }
    }

    #[test]
    fn milp_matches_binary_enumeration(
        nb in 1usize..=6,
        seed_rows in prop::collection::vec((prop::collection::vec(-3i64..=3, 8), -2i64..=6), 1..=3),
        obj in prop::collection::vec(-2i64..=3, 8),
        links in prop::collection::vec(any::<bool>(), 6),
    ) {
        // Binaries 0..nb, then two continuous variables in [0, 3].
        let mut m = MilpModel::new(LinearProgram::new(Sense::Minimize));
        for j in 0..nb {
            m.add_binary(format!("b{j}"));
        }
        let c0 = m.lp.add_var("c0", Some(qi(0)), Some(qi(3)));
        let c1 = m.lp.add_var("c1", Some(qi(0)), Some(qi(3)));
        let nv = nb + 2;
        for (coeffs, rhs) in &seed_rows {
            m.lp.add_constraint((0..nv).map(|j| (j, qi(coeffs[j]))).collect(), Relation::Ge, qi(*rhs));
        }
        m.lp.set_objective(Sense::Minimize, (0..nv).map(|j| (j, qi(obj[j]))).collect());
        for (j, &l) in links.iter().take(nb).enumerate() {
            if l {
                m.add_indicator(j, if j % 2 == 0 { c0 } else { c1 });
            }
        }
        let mut best: Option<Q> = None;
        for mask in 0u32..(1 << nb) {
            let mut lp = m.lp.clone();
            for j in 0..nb {
                let v = qi(((mask >> j) & 1) as i64);
                lp.variables[j].lower = Some(v.clone());
                lp.variables[j].upper = Some(v);
            }
            for ind in &m.indicators {
                if (mask >> ind.binary) & 1 == 0 {
                    lp.variables[ind.var].upper = Some(qi(0));
                }
            }
            if let LpOutcome::Optimal(s) = lp_solve(&lp) {
                if best.as_ref().map_or(true, |b| s.objective < *b) {
                    best = Some(s.objective);
                }
            }
        }
        let (out, _) = milp_solve(&m);
        match (out, best) {
            (MilpOutcome::Optimal(sol), Some(b)) => {
                prop_assert!(m.is_feasible_point(&sol.values));
                prop_assert_eq!(sol.objective, b);
            }
            (MilpOutcome::Infeasible, None) => {}
            (got, want) => prop_assert!(false, "solver {:?} oracle {:?}", got, want),
        }
    }

    #[test]
    fn linear_solutions_satisfy_system(
        rows in prop::collection::vec(prop::collection::vec(-4i64..=4, 4), 1..=5),
        rhs in prop::collection::vec(-5i64..=5, 5),
    ) {
        let a: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(|&v| qi(v)).collect()).collect();
        let b: Vec<Q> = rhs.iter().take(a.len()).map(|&v| qi(v)).collect();
        let check = |x: &[Q]| a.iter().zip(&b).all(|(row, r)| row.iter().zip(x).map(|(p, q)| p * q).sum::<Q>() == *r);
        match solve_linear_system(&a, &b).unwrap() {
            LinearSolution::Unique(x) => prop_assert!(check(&x)),
            LinearSolution::Affine { particular, kernel } => {
                prop_assert!(check(&particular));
                let shifted: Vec<Q> = particular.iter().zip(&kernel[0]).map(|(p, k)| p + k * q(3, 2)).collect();
                prop_assert!(check(&shifted));
            }
            LinearSolution::Inconsistent => {
                // The simplex feasibility phase must agree.
                let mut lp = LinearProgram::new(Sense::Feasibility);
                for j in 0..4 {
                    lp.add_free(format!("x{j}"));
                }
                for (row, r) in a.iter().zip(&b) {
                    lp.add_constraint(row.iter().cloned().enumerate().collect(), Relation::Eq, r.clone());
                }
                prop_assert_eq!(lp_solve(&lp), LpOutcome::Infeasible);
            }
        }
    }
}

#[test]
fn unbounded_direction_is_reported() {
    let mut lp = LinearProgram::new(Sense::Maximize);
    let x = lp.add_nonneg("x");
    let y = lp.add_nonneg("y");
    lp.add_constraint(vec![(x, qi(1)), (y, qi(-1))], Relation::Le, qi(1));
    lp.set_objective(Sense::Maximize, vec![(x, qi(1)), (y, qi(1))]);
    assert_eq!(lp_solve(&lp), LpOutcome::Unbounded);
}
