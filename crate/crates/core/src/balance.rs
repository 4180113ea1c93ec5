//! Sinkhorn-Knopp balancing of a nonnegative weight matrix into a doubly
//! stochastic operator `S = diag(r) · W · diag(c)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::validate_weights;
use crate::matrix::Matrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const UNDERFLOW_GUARD: f64 = 1e-300;

/// A nonnegative square matrix whose rows and columns sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DSOperator {
    matrix: Matrix,
    tolerance_achieved: f64,
    iterations_used: usize,
}

impl DSOperator {
    /// Accepts an existing matrix after checking it is doubly stochastic at `tol`.
    pub fn from_matrix(matrix: Matrix, tol: f64) -> Result<DSOperator> {
        let report = verify_doubly_stochastic(&matrix, tol)?;
        if !report.pass {
            return Err(Error::invalid(format!(
                "matrix is not doubly stochastic at tolerance {tol:e} (row residual {:e}, column residual {:e}, min entry {:e})",
                report.max_row_residual, report.max_col_residual, report.min_entry
            )));
        }
        Ok(DSOperator {
            tolerance_achieved: report.residual(),
            matrix,
            iterations_used: 0,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn tolerance_achieved(&self) -> f64 {
        self.tolerance_achieved
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations_used
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalanceResult {
    pub operator: DSOperator,
    pub row_scaling: Vec<f64>,
    pub col_scaling: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublyStochasticReport {
    pub max_row_residual: f64,
    pub max_col_residual: f64,
    pub min_entry: f64,
    pub pass: bool,
}

impl DoublyStochasticReport {
    pub fn residual(&self) -> f64 {
        self.max_row_residual.max(self.max_col_residual)
    }
}

pub fn verify_doubly_stochastic(s: &Matrix, tol: f64) -> Result<DoublyStochasticReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let max_dev = |sums: Vec<f64>| sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let max_row_residual = max_dev(s.row_sums());
    let max_col_residual = max_dev(s.col_sums());
    // Implicit zeros count toward the minimum.
    let explicit_min = s.triplets().map(|(_, _, v)| v).fold(f64::INFINITY, f64::min);
    let n = s.n();
    let min_entry = if s.nnz() < n * n {
        explicit_min.min(0.0)
    } else {
        explicit_min
    };
    let pass = n > 0
        && max_row_residual <= tol
        && max_col_residual <= tol
        && min_entry >= 0.0
        && s.triplets().all(|(_, _, v)| v.is_finite());
    Ok(DoublyStochasticReport {
        max_row_residual,
        max_col_residual,
        min_entry,
        pass,
    })
}

/// Alternating column/row normalisation starting from `r = 1`.
///
/// Each sweep sets `c = 1 / (Wᵀ r)` then `r = 1 / (W c)`. Iteration stops once
/// both row- and column-sum residuals of `diag(r) W diag(c)` are within `tol`.
pub fn sinkhorn_knopp(w: &Matrix, tol: f64, max_iter: usize) -> Result<BalanceResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    let diag = validate_weights(w);
    if w.n() == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if !diag.balanceable() {
        return Err(Error::Unbalanceable(diag.issues.join("; ")));
    }

    let n = w.n();
    let mut r = vec![1.0; n];
    let mut c = vec![1.0; n];
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let wt_r = w.matvec_transpose(&r);
        for (cj, s) in c.iter_mut().zip(&wt_r) {
            *cj = 1.0 / s;
        }
        let w_c = w.matvec(&c);
        for (ri, s) in r.iter_mut().zip(&w_c) {
            *ri = 1.0 / s;
        }
        guard(&r, iteration)?;
        guard(&c, iteration)?;

        // Column sums of diag(r) W diag(c) are c_j (Wᵀ r)_j; rows are r_i (W c)_i.
        let col_sums = w.matvec_transpose(&r);
        let col_res = c
            .iter()
            .zip(&col_sums)
            .map(|(cj, s)| (cj * s - 1.0).abs())
            .fold(0.0, f64::max);
        let row_res = r
            .iter()
            .zip(&w_c)
            .map(|(ri, s)| (ri * s - 1.0).abs())
            .fold(0.0, f64::max);
        residual = col_res.max(row_res);
        if residual <= tol {
            let matrix = w.scaled(&r, &c);
            let report = verify_doubly_stochastic(&matrix, tol)?;
            if report.pass {
                return Ok(BalanceResult {
                    operator: DSOperator {
                        matrix,
                        tolerance_achieved: report.residual(),
                        iterations_used: iteration,
                    },
                    row_scaling: r,
                    col_scaling: c,
                });
            }
            residual = report.residual();
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

fn guard(v: &[f64], iteration: usize) -> Result<()> {
    match v.iter().find(|x| !(x.is_finite() && **x >= UNDERFLOW_GUARD)) {
        Some(&value) => Err(Error::ScalingUnderflow { iteration, value }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Storage;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn permutation_balances_in_one_sweep() {
        let p = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let res = sinkhorn_knopp(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(res.operator.iterations_used(), 1);
        assert_eq!(res.operator.matrix(), &p);
        assert!(res.row_scaling.iter().chain(&res.col_scaling).all(|&x| x == 1.0));
    }

    #[test]
    fn all_ones_two_by_two() {
        let res = sinkhorn_knopp(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for (_, _, v) in res.operator.matrix().triplets() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_solved_fixed_point() {
        // Symmetric scaling d with d^2 (1 + 2) = 1 gives entries 1/3 and 2/3.
        let res = sinkhorn_knopp(&m(&[&[1.0, 2.0], &[2.0, 1.0]]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let s = res.operator.matrix();
        assert!((s.get(0, 0) - 1.0 / 3.0).abs() < 1e-10);
        assert!((s.get(0, 1) - 2.0 / 3.0).abs() < 1e-10);
        assert!((s.get(1, 0) - 2.0 / 3.0).abs() < 1e-10);
        assert!((s.get(1, 1) - 1.0 / 3.0).abs() < 1e-10);
        let rebuilt = m(&[&[1.0, 2.0], &[2.0, 1.0]]).scaled(&res.row_scaling, &res.col_scaling);
        assert!(rebuilt.max_abs_diff(s) < 1e-15);
    }

    #[test]
    fn zero_column_is_unbalanceable() {
        let err = sinkhorn_knopp(&m(&[&[1.0, 0.0], &[1.0, 0.0]]), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap_err();
        assert!(matches!(err, Error::Unbalanceable(ref s) if s.contains("empty column")));
    }

    #[test]
    fn support_without_total_support_does_not_converge() {
        // The off-diagonal entry lies on no positive diagonal, so it must vanish in the limit.
        let err = sinkhorn_knopp(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), DEFAULT_TOL, 500).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 500);
                assert!(residual > DEFAULT_TOL);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sparse_storage_matches_dense() {
        let rows = [&[2.0, 1.0, 0.0][..], &[0.5, 3.0, 1.0], &[1.0, 0.0, 4.0]];
        let dense = m(&rows);
        let sparse = dense.with_storage(Storage::Sparse);
        let a = sinkhorn_knopp(&dense, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let b = sinkhorn_knopp(&sparse, 1e-12, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(b.operator.matrix().storage(), Storage::Sparse);
        assert!(a.operator.matrix().max_abs_diff(b.operator.matrix()) < 1e-15);
        assert_eq!(a.operator.iterations_used(), b.operator.iterations_used());
    }

    #[test]
    fn verify_reports() {
        let id = Matrix::identity(3);
        let r = verify_doubly_stochastic(&id, 1e-12).unwrap();
        assert!(r.pass);
        assert_eq!(r.residual(), 0.0);

        let bad = m(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let r = verify_doubly_stochastic(&bad, 1e-6).unwrap();
        assert!(!r.pass);
        assert!((r.max_col_residual - 0.1).abs() < 1e-12);
        assert!(r.max_row_residual < 1e-15);

        let neg = m(&[&[1.5, -0.5], &[-0.5, 1.5]]);
        assert!(!verify_doubly_stochastic(&neg, 1e-6).unwrap().pass);
    }

    #[test]
    fn from_matrix_rejects_non_stochastic() {
        assert!(DSOperator::from_matrix(m(&[&[0.9, 0.1], &[0.2, 0.8]]), 1e-8).is_err());
        assert!(DSOperator::from_matrix(Matrix::identity(4), 1e-8).is_ok());
    }

    #[test]
    fn idempotent_on_doubly_stochastic_input() {
        let s = m(&[&[0.2, 0.3, 0.5], &[0.5, 0.2, 0.3], &[0.3, 0.5, 0.2]]);
        let res = sinkhorn_knopp(&s, 1e-12, DEFAULT_MAX_ITER).unwrap();
        assert!(res.operator.matrix().max_abs_diff(&s) < 1e-12);
        assert!(res
            .row_scaling
            .iter()
            .chain(&res.col_scaling)
            .all(|x| (x - 1.0).abs() < 1e-12));
    }
}
