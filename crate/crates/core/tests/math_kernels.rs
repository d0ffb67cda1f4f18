use nuce_core::math::{argmax_row, frobenius_sq, matmul, softmax_rows, DenseMatrix};
use proptest::prelude::*;

fn dense(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DenseMatrix::new(rows, cols, v).unwrap())
}

#[test]
fn logits_match_scalar_dot_products() {
    let h = DenseMatrix::from_rows(&[[0.3, -1.2, 2.0], [1.5, 0.25, -0.75]]).unwrap();
    let w = DenseMatrix::from_rows(&[[1.0, 0.5, -0.5], [-2.0, 0.1, 0.3]]).unwrap();
    let u = matmul(&h, &w.transpose()).unwrap();
    for i in 0..2 {
        for k in 0..2 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += h.get(i, j) * w.get(k, j);
            }
            assert_eq!(u.get(i, k), acc);
        }
    }
    assert_eq!(h.matmul_transposed(&w).unwrap(), u);
}

/// `exp(x)` for small |x| by Taylor series with compensated summation.
fn exp_series(x: f64) -> f64 {
    let (mut sum, mut comp, mut term) = (0.0f64, 0.0f64, 1.0f64);
    for n in 0..60 {
        if n > 0 {
            term *= x / n as f64;
        }
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

#[test]
fn softmax_matches_series_oracle() {
    let p = softmax_rows(&DenseMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
    let e = [exp_series(-2.0), exp_series(-1.0), 1.0];
    let z: f64 = e.iter().sum();
    for k in 0..3 {
        assert!((p.get(0, k) - e[k] / z).abs() < 1e-15, "k={k}");
    }
}

#[test]
fn frobenius_matches_row_norms() {
    let a = DenseMatrix::from_rows(&[
        [0.5, -1.0, 2.0],
        [1.5, 0.0, -0.25],
        [3.0, 1.0, 1.0],
        [-0.5, 0.75, 2.5],
    ])
    .unwrap();
    let rows: f64 = (0..4)
        .map(|r| a.row(r).iter().map(|v| v * v).sum::<f64>())
        .sum();
    assert!((frobenius_sq(&a) - rows).abs() < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_normalized(v in prop::collection::vec(-1e3f64..1e3, 12)) {
        let p = softmax_rows(&DenseMatrix::new(3, 4, v).unwrap());
        for r in 0..3 {
            let s: f64 = p.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn matmul_associative(a in dense(3, 4), b in dense(4, 2), c in dense(2, 3)) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn frobenius_is_trace_of_gram(a in dense(5, 5)) {
        let g = matmul(&a.transpose(), &a).unwrap();
        let trace: f64 = (0..5).map(|i| g.get(i, i)).sum();
        prop_assert!((frobenius_sq(&a) - trace).abs() < 1e-9);
    }

    #[test]
    fn argmax_is_first_maximum(v in prop::collection::vec(-5i32..5, 1..10)) {
        let f: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let i = argmax_row(&f).unwrap();
        prop_assert!(f.iter().all(|&x| x <= f[i]));
        prop_assert!(f[..i].iter().all(|&x| x < f[i]));
    }
}
