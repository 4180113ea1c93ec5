use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use dsgso::{sinkhorn_knopp, verify_doubly_stochastic, Error, Matrix, Storage};

fn positive_matrix() -> impl Strategy<Value = Matrix> {
    (2usize..12).prop_flat_map(|n| {
        prop::collection::vec(0.05f64..5.0, n * n).prop_map(move |v| {
            let rows: Vec<Vec<f64>> = v.chunks(n).map(<[f64]>::to_vec).collect();
            Matrix::from_rows(&rows).unwrap()
        })
    })
}

/// Positive diagonal and a symmetric off-diagonal pattern, which guarantees
/// total support.
fn patterned_matrix() -> impl Strategy<Value = Matrix> {
    (3usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..2.0, n * n),
            prop::collection::vec(any::<bool>(), n * n),
        )
            .prop_map(move |(vals, keep)| {
                let mut t = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        let (a, b) = (i.min(j), i.max(j));
                        if i == j || keep[a * n + b] {
                            t.push((i, j, vals[i * n + j]));
                        }
                    }
                }
                Matrix::from_triplets(n, t, Storage::Dense).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positive_matrices_balance(w in positive_matrix()) {
        let res = sinkhorn_knopp(&w, 1e-10, 10_000).unwrap();
        let report = verify_doubly_stochastic(res.operator.matrix(), 1e-10).unwrap();
        prop_assert!(report.pass);
        prop_assert!(res.row_scaling.iter().chain(&res.col_scaling).all(|v| *v > 0.0));
        // S = diag(r) W diag(c)
        let rebuilt = w.scaled(&res.row_scaling, &res.col_scaling);
        prop_assert!(rebuilt.max_abs_diff(res.operator.matrix()) < 1e-14);
    }

    #[test]
    fn zero_pattern_is_preserved(w in patterned_matrix()) {
        let s = sinkhorn_knopp(&w, 1e-10, 10_000).unwrap().operator;
        let n = w.n();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(w.get(i, j) > 0.0, s.matrix().get(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn diagonal_rescaling_does_not_change_the_limit(
        w in positive_matrix(),
        seed in prop::collection::vec(0.2f64..5.0, 24),
    ) {
        let n = w.n();
        let (d1, d2) = (&seed[..n], &seed[12..12 + n]);
        let a = sinkhorn_knopp(&w, 1e-12, 10_000).unwrap().operator;
        let b = sinkhorn_knopp(&w.scaled(d1, d2), 1e-12, 10_000).unwrap().operator;
        prop_assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-9);
    }

    #[test]
    fn symmetric_input_gives_symmetric_output(w in positive_matrix()) {
        let sym = Matrix::from_triplets(
            w.n(),
            w.triplets().map(|(i, j, v)| (i, j, 0.5 * (v + w.get(j, i)))),
            Storage::Dense,
        ).unwrap();
        let s = sinkhorn_knopp(&sym, 1e-12, 10_000).unwrap().operator;
        prop_assert!(s.matrix().is_symmetric(1e-10));
    }

    #[test]
    fn balancing_is_idempotent(w in positive_matrix()) {
        let s = sinkhorn_knopp(&w, 1e-12, 10_000).unwrap().operator;
        let again = sinkhorn_knopp(s.matrix(), 1e-12, 10_000).unwrap().operator;
        prop_assert!(s.matrix().max_abs_diff(again.matrix()) < 1e-11);
    }
}

#[test]
fn sparse_storage_matches_dense() {
    let rows = vec![
        vec![1.0, 0.0, 2.0, 0.0],
        vec![0.0, 3.0, 0.0, 1.0],
        vec![2.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 4.0],
    ];
    let dense = Matrix::from_rows(&rows).unwrap();
    let sparse = dense.with_storage(Storage::Sparse);
    let a = sinkhorn_knopp(&dense, 1e-12, 10_000).unwrap().operator;
    let b = sinkhorn_knopp(&sparse, 1e-12, 10_000).unwrap().operator;
    assert_eq!(b.matrix().storage(), Storage::Sparse);
    assert_abs_diff_eq!(a.matrix().max_abs_diff(b.matrix()), 0.0, epsilon = 1e-15);
}

#[test]
fn failures_are_reported_not_hidden() {
    let empty_row = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    assert!(matches!(
        sinkhorn_knopp(&empty_row, 1e-10, 100),
        Err(Error::Unbalanceable(_))
    ));

    let no_total_support = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
    match sinkhorn_knopp(&no_total_support, 1e-10, 200) {
        Err(Error::NotConverged { iterations, residual }) => {
            assert_eq!(iterations, 200);
            assert!(residual > 1e-10);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}
