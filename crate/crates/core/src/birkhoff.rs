//! Birkhoff–von Neumann decomposition of a doubly stochastic operator into a
//! convex combination of permutation matrices.

use serde::{Deserialize, Serialize};

use crate::balance::{verify_doubly_stochastic, DSOperator};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Storage};

pub const DEFAULT_ZERO_TOL: f64 = 1e-12;
const INPUT_TOL: f64 = 1e-8;

/// A bijection stored as its image array: row `i` maps to column `perm[i]`,
/// i.e. `P[i][perm[i]] = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Permutation> {
        let mut seen = vec![false; images.len()];
        for &j in &images {
            if j >= images.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::invalid(format!("{images:?} is not a permutation")));
            }
        }
        Ok(Permutation(images))
    }

    pub fn identity(n: usize) -> Permutation {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffTerm {
    #[serde(rename = "a")]
    pub coefficient: f64,
    #[serde(rename = "perm")]
    pub permutation: Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffDecomposition {
    pub terms: Vec<BirkhoffTerm>,
}

impl BirkhoffDecomposition {
    pub fn count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient).sum()
    }

    /// `(N − 1)² + 1`
    pub fn max_terms(n: usize) -> usize {
        n.saturating_sub(1).pow(2) + 1
    }
}

/// Greedy extraction: repeatedly find a perfect matching on the entries above
/// the structural-zero threshold, peel off `a · P` with `a` the smallest
/// matched entry, and stop when no perfect matching remains.
///
/// Entries at or below `max(zero_tol, 2·N·δ)` count as zero, where `δ` is the
/// input's row/column-sum residual. Coefficients are renormalised to sum to 1.
pub fn birkhoff_decompose(s: &DSOperator, zero_tol: f64) -> Result<BirkhoffDecomposition> {
    if !(zero_tol.is_finite() && zero_tol > 0.0) {
        return Err(Error::invalid(format!("zero_tol must be positive, got {zero_tol}")));
    }
    let report = verify_doubly_stochastic(s.matrix(), INPUT_TOL)?;
    if !report.pass {
        return Err(Error::invalid(format!(
            "operator is not doubly stochastic at {INPUT_TOL:e} (residual {:e})",
            report.residual()
        )));
    }
    let n = s.n();
    let eps = zero_tol.max(2.0 * n as f64 * report.residual());

    let mut residual = Residual::new(s.matrix(), eps);
    let mut matching = Matching::new(n);
    let mut terms = Vec::new();
    loop {
        if !matching.complete(&residual) {
            break;
        }
        let row_to_col = matching.row_to_col();
        let (argmin, a) = row_to_col
            .iter()
            .enumerate()
            .map(|(i, &j)| (i, residual.get(i, j)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("n > 0");
        for (i, &j) in row_to_col.iter().enumerate() {
            let left = if i == argmin { 0.0 } else { residual.get(i, j) - a };
            if left <= eps {
                residual.remove(i, j);
                matching.unmatch(i, j);
            } else {
                residual.set(i, j, left);
            }
        }
        terms.push(BirkhoffTerm {
            coefficient: a,
            permutation: Permutation(row_to_col),
        });
    }

    let residual_mass = residual.mass();
    if terms.is_empty() || residual_mass > n as f64 * eps {
        return Err(Error::DecompositionFailed { residual_mass });
    }
    let total: f64 = terms.iter().map(|t| t.coefficient).sum();
    for t in &mut terms {
        t.coefficient /= total;
    }
    Ok(BirkhoffDecomposition { terms })
}

/// `Σ a_i P_i` as an `n × n` matrix.
pub fn reconstruct(d: &BirkhoffDecomposition, n: usize) -> Result<Matrix> {
    let mut triplets = Vec::with_capacity(d.count() * n);
    for (k, t) in d.terms.iter().enumerate() {
        if t.permutation.len() != n {
            return Err(Error::invalid(format!(
                "term {k} permutes {} elements, expected {n}",
                t.permutation.len()
            )));
        }
        let p = Permutation::new(t.permutation.0.clone())?;
        triplets.extend(p.0.iter().enumerate().map(|(i, &j)| (i, j, t.coefficient)));
    }
    Matrix::from_triplets(n, triplets, Storage::auto(n))
}

/// Remaining mass, row-wise sorted `(col, value)` lists with every value > eps.
struct Residual {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Residual {
    fn new(s: &Matrix, eps: f64) -> Residual {
        Residual {
            rows: (0..s.n())
                .map(|i| s.row(i).filter(|&(_, v)| v > eps).collect())
                .collect(),
        }
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.rows[i].binary_search_by_key(&j, |&(c, _)| c).ok()
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.rows[i][k].1)
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.find(i, j).expect("entry present");
        self.rows[i][k].1 = v;
    }

    fn remove(&mut self, i: usize, j: usize) {
        if let Some(k) = self.find(i, j) {
            self.rows[i].remove(k);
        }
    }

    fn mass(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, v)| v).sum()
    }
}

/// Bipartite matching kept across extraction steps; only rows whose matched
/// entry vanished are re-augmented.
struct Matching {
    row_match: Vec<Option<usize>>,
    col_match: Vec<Option<usize>>,
}

impl Matching {
    fn new(n: usize) -> Matching {
        Matching {
            row_match: vec![None; n],
            col_match: vec![None; n],
        }
    }

    fn unmatch(&mut self, i: usize, j: usize) {
        self.row_match[i] = None;
        self.col_match[j] = None;
    }

    fn row_to_col(&self) -> Vec<usize> {
        self.row_match.iter().map(|j| j.expect("complete matching")).collect()
    }

    /// Matches free rows to their lowest free column, then augments the rest
    /// in ascending order; false if some row stays free.
    fn complete(&mut self, residual: &Residual) -> bool {
        let n = self.row_match.len();
        for i in 0..n {
            if self.row_match[i].is_none() {
                if let Some(&(j, _)) = residual.rows[i].iter().find(|&&(j, _)| self.col_match[j].is_none()) {
                    self.row_match[i] = Some(j);
                    self.col_match[j] = Some(i);
                }
            }
        }
        let mut visited = vec![false; n];
        for i in 0..n {
            if self.row_match[i].is_some() {
                continue;
            }
            visited.iter_mut().for_each(|v| *v = false);
            if !self.augment(i, residual, &mut visited) {
                return false;
            }
        }
        true
    }

    fn augment(&mut self, i: usize, residual: &Residual, visited: &mut [bool]) -> bool {
        for &(j, _) in &residual.rows[i] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let free = match self.col_match[j] {
                None => true,
                Some(k) => self.augment(k, residual, visited),
            };
            if free {
                self.row_match[i] = Some(j);
                self.col_match[j] = Some(i);
                return true;
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(rows: &[&[f64]]) -> DSOperator {
        let m = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        DSOperator::from_matrix(m, 1e-12).unwrap()
    }

    fn sorted(d: &BirkhoffDecomposition) -> Vec<(Vec<usize>, f64)> {
        let mut v: Vec<_> = d
            .terms
            .iter()
            .map(|t| (t.permutation.0.clone(), t.coefficient))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    #[test]
    fn permutation_is_a_single_term() {
        let s = op(&[&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let d = birkhoff_decompose(&s, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(d.count(), 1);
        assert_eq!(d.terms[0].coefficient, 1.0);
        assert_eq!(d.terms[0].permutation.images(), &[2, 0, 1]);
    }

    #[test]
    fn uniform_two_by_two() {
        let d = birkhoff_decompose(&op(&[&[0.5, 0.5], &[0.5, 0.5]]), DEFAULT_ZERO_TOL).unwrap();
        assert_eq!(sorted(&d), vec![(vec![0, 1], 0.5), (vec![1, 0], 0.5)]);
    }

    #[test]
    fn thirds_two_by_two() {
        // Only two 2x2 permutations exist: a·I + b·swap with a = S00 and b = S01.
        let d = birkhoff_decompose(
            &op(&[&[1.0 / 3.0, 2.0 / 3.0], &[2.0 / 3.0, 1.0 / 3.0]]),
            DEFAULT_ZERO_TOL,
        )
        .unwrap();
        let terms = sorted(&d);
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].0, vec![0, 1]);
        assert!((terms[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((terms[1].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_examples() {
        let id = BirkhoffDecomposition {
            terms: vec![BirkhoffTerm {
                coefficient: 1.0,
                permutation: Permutation::identity(3),
            }],
        };
        assert_eq!(reconstruct(&id, 3).unwrap(), Matrix::identity(3));
        let half = BirkhoffDecomposition {
            terms: vec![
                BirkhoffTerm {
                    coefficient: 0.5,
                    permutation: Permutation::identity(2),
                },
                BirkhoffTerm {
                    coefficient: 0.5,
                    permutation: Permutation::new(vec![1, 0]).unwrap(),
                },
            ],
        };
        let m = reconstruct(&half, 2).unwrap();
        assert!(m.triplets().all(|(_, _, v)| v == 0.5));
        assert_eq!(m.nnz(), 4);
        assert!(reconstruct(&half, 3).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![1, 2, 0]).is_ok());
    }

    #[test]
    fn rejects_non_stochastic_input() {
        let m = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let s = DSOperator::from_matrix(m, 1e-12).unwrap();
        assert!(birkhoff_decompose(&s, 0.0).is_err());
    }

    #[test]
    fn three_by_three_round_trip() {
        let s = op(&[&[0.2, 0.3, 0.5], &[0.5, 0.2, 0.3], &[0.3, 0.5, 0.2]]);
        let d = birkhoff_decompose(&s, DEFAULT_ZERO_TOL).unwrap();
        assert!(d.count() <= BirkhoffDecomposition::max_terms(3));
        assert!((d.coefficient_sum() - 1.0).abs() < 1e-12);
        assert!(reconstruct(&d, 3).unwrap().max_abs_diff(s.matrix()) < 1e-12);
        assert!(d.terms.iter().all(|t| t.coefficient > 0.0));
    }

    #[test]
    fn json_schema() {
        let d = birkhoff_decompose(&op(&[&[0.5, 0.5], &[0.5, 0.5]]), DEFAULT_ZERO_TOL).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"terms":[{"a":0.5,"perm":[0,1]},{"a":0.5,"perm":[1,0]}]}"#);
        let back: BirkhoffDecomposition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }
}
