//! Exact Gaussian elimination.

use num_traits::{One, Zero};

use crate::rational::{bit_size, Q};
use crate::OptError;

/// Solution set of `A x = b`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearSolution {
    /// Exactly one solution.
    Unique(Vec<Q>),
    /// No solution.
    Inconsistent,
    /// `particular + span(kernel)`; `kernel` is a basis of the null space.
    Affine { particular: Vec<Q>, kernel: Vec<Vec<Q>> },
}

impl LinearSolution {
    /// The unique solution, if any.
    pub fn unique(self) -> Option<Vec<Q>> {
        match self {
            LinearSolution::Unique(x) => Some(x),
            _ => None,
        }
    }
}

/// Solves `A x = b` for a dense `rows × cols` matrix.
///
/// Reduces to row echelon form; among candidate pivots in a column the one
/// with the smallest bit size is chosen to limit coefficient growth.
pub fn solve_linear_system(a: &[Vec<Q>], b: &[Q]) -> Result<LinearSolution, OptError> {
    if a.len() != b.len() {
        return Err(OptError::Dimension(format!(
            "{} rows but right-hand side of length {}",
            a.len(),
            b.len()
        )));
    }
    let cols = a.first().map_or(0, Vec::len);
    if let Some(bad) = a.iter().position(|r| r.len() != cols) {
        return Err(OptError::Dimension(format!(
            "row {bad} has length {} instead of {cols}",
            a[bad].len()
        )));
    }
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let rows = m.len();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows)
            .filter(|&i| !m[i][c].is_zero())
            .min_by_key(|&i| bit_size(&m[i][c]))
        else {
            continue;
        };
        m.swap(r, p);
        let inv = Q::one() / &m[r][c];
        for v in m[r].iter_mut().skip(c) {
            if !v.is_zero() {
                *v *= &inv;
            }
        }
        let pivot_row = std::mem::take(&mut m[r]);
        let nz: Vec<usize> = (c..=cols).filter(|&j| !pivot_row[j].is_zero()).collect();
        for (i, row) in m.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for &j in &nz {
                row[j] -= &factor * &pivot_row[j];
            }
        }
        m[r] = pivot_row;
        pivot_cols.push(c);
        r += 1;
    }
    if m[r..].iter().any(|row| !row[cols].is_zero()) {
        return Ok(LinearSolution::Inconsistent);
    }
    let mut particular = vec![Q::zero(); cols];
    for (i, &c) in pivot_cols.iter().enumerate() {
        particular[c] = m[i][cols].clone();
    }
    if pivot_cols.len() == cols {
        return Ok(LinearSolution::Unique(particular));
    }
    let mut is_pivot = vec![false; cols];
    for &c in &pivot_cols {
        is_pivot[c] = true;
    }
    let kernel = (0..cols)
        .filter(|&f| !is_pivot[f])
        .map(|f| {
            let mut v = vec![Q::zero(); cols];
            v[f] = Q::one();
            for (i, &c) in pivot_cols.iter().enumerate() {
                v[c] = -m[i][f].clone();
            }
            v
        })
        .collect();
    Ok(LinearSolution::Affine { particular, kernel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn mat(rows: &[&[i64]]) -> Vec<Vec<Q>> {
        rows.iter().map(|r| r.iter().map(|&v| qi(v)).collect()).collect()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = mat(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]);
        let b = vec![q(1, 2), qi(-3), q(7, 5)];
        assert_eq!(solve_linear_system(&a, &b).unwrap(), LinearSolution::Unique(b.clone()));
    }

    #[test]
    fn inconsistent_system() {
        let a = mat(&[&[1, 1], &[2, 2]]);
        let b = vec![qi(1), qi(3)];
        assert_eq!(solve_linear_system(&a, &b).unwrap(), LinearSolution::Inconsistent);
    }

    #[test]
    fn stochastic_irreducible_kernel_is_positive_line() {
        // (B - I) x = 0 with B = [[1/2,1/2],[1/3,2/3]].
        let a = vec![vec![q(-1, 2), q(1, 2)], vec![q(1, 3), q(-1, 3)]];
        let b = vec![qi(0), qi(0)];
        match solve_linear_system(&a, &b).unwrap() {
            LinearSolution::Affine { kernel, .. } => {
                assert_eq!(kernel.len(), 1);
                assert_eq!(kernel[0][0], kernel[0][1]);
                assert!(kernel[0][0] > qi(0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overdetermined_consistent_system() {
        let a = mat(&[&[1, 0], &[0, 1], &[1, 1]]);
        let b = vec![qi(2), qi(3), qi(5)];
        assert_eq!(
            solve_linear_system(&a, &b).unwrap(),
            LinearSolution::Unique(vec![qi(2), qi(3)])
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = mat(&[&[1, 0]]);
        assert!(solve_linear_system(&a, &[qi(1), qi(2)]).is_err());
    }

    #[test]
    fn kernel_vectors_solve_homogeneous_system() {
        let a = mat(&[&[1, 2, 3, 4], &[2, 4, 6, 8], &[0, 1, 1, 0]]);
        let b = vec![qi(10), qi(20), qi(2)];
        let LinearSolution::Affine { particular, kernel } = solve_linear_system(&a, &b).unwrap()
        else {
            panic!("expected affine solution")
        };
        assert_eq!(kernel.len(), 2);
        for (row, rhs) in a.iter().zip(&b) {
            let dot: Q = row.iter().zip(&particular).map(|(x, y)| x * y).sum();
            assert_eq!(&dot, rhs);
            for k in &kernel {
                let dk: Q = row.iter().zip(k).map(|(x, y)| x * y).sum();
                assert!(dk.is_zero());
            }
        }
    }
}
