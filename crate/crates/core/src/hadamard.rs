//! Walsh–Hadamard transform by in-place butterflies.

use crate::error::{Error, Result};

/// Normalized transform `(1/√m) H_m v`. The normalized Hadamard matrix is
/// symmetric and orthogonal, so applying this twice returns `v`.
pub fn fwht(v: &[f64]) -> Result<Vec<f64>> {
    let m = v.len();
    if !m.is_power_of_two() {
        return Err(Error::invalid(format!("fwht length {m} is not a power of two")));
    }
    let mut out = v.to_vec();
    fwht_unnormalized(&mut out);
    let s = 1.0 / (m as f64).sqrt();
    out.iter_mut().for_each(|x| *x *= s);
    Ok(out)
}

/// Unnormalized `H_m v` in place. Length must be a power of two.
pub fn fwht_unnormalized(v: &mut [f64]) {
    debug_assert!(v.len().is_power_of_two());
    let m = v.len();
    let mut h = 1;
    while h < m {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Unnormalized `H_rows · X` for a row-major `rows × cols` block, i.e. the
/// transform applied down every column at once. Butterflies combine whole
/// rows so the inner loop stays contiguous.
pub(crate) fn fwht_rows(data: &mut [f64], rows: usize, cols: usize) {
    debug_assert!(rows.is_power_of_two());
    debug_assert_eq!(data.len(), rows * cols);
    let mut h = 1;
    while h < rows {
        for block in data.chunks_exact_mut(2 * h * cols) {
            let (lo, hi) = block.split_at_mut(h * cols);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Sign of entry `(i, j)` of the unnormalized Hadamard matrix (zero-based):
/// `+1` when `popcount(i & j)` is even, `-1` otherwise.
#[inline]
pub fn hadamard_sign(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded_rng};
    use proptest::prelude::*;

    /// `H_m` from the block recursion `[[H, H], [H, -H]]`.
    fn recursive_hadamard(m: usize) -> Vec<Vec<f64>> {
        let mut h = vec![vec![1.0]];
        while h.len() < m {
            let n = h.len();
            let mut next = vec![vec![0.0; 2 * n]; 2 * n];
            for i in 0..n {
                for j in 0..n {
                    next[i][j] = h[i][j];
                    next[i][j + n] = h[i][j];
                    next[i + n][j] = h[i][j];
                    next[i + n][j + n] = -h[i][j];
                }
            }
            h = next;
        }
        h
    }

    #[test]
    fn small_cases() {
        let s = 1.0 / 2f64.sqrt();
        let out = fwht(&[1.0, 0.0]).unwrap();
        assert!((out[0] - s).abs() < 1e-15 && (out[1] - s).abs() < 1e-15);
        assert_eq!(fwht(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        assert!(fwht(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn m8_matches_dense_operator_and_inverts() {
        let v = gaussian_matrix(1, 8, &mut seeded_rng(7)).into_vec();
        let h = recursive_hadamard(8);
        let s = 1.0 / 8f64.sqrt();
        let dense: Vec<f64> = h.iter().map(|r| s * r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()).collect();
        let fast = fwht(&v).unwrap();
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = fwht(&fast).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_matches_recursive_definition() {
        assert_eq!(hadamard_sign(1, 1), -1.0);
        for j in 0..64 {
            assert_eq!(hadamard_sign(0, j), 1.0);
        }
        let h = recursive_hadamard(8);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(hadamard_sign(i, j), h[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn basis_vectors_give_hadamard_columns() {
        for b in 0..=6 {
            let m = 1usize << b;
            let h = recursive_hadamard(m);
            let s = 1.0 / (m as f64).sqrt();
            for j in 0..m {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                let col = fwht(&e).unwrap();
                for i in 0..m {
                    assert!((col[i] - s * h[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn row_transform_equals_per_column_transform() {
        let (rows, cols) = (16, 5);
        let x = gaussian_matrix(rows, cols, &mut seeded_rng(11));
        let mut blocked = x.as_slice().to_vec();
        fwht_rows(&mut blocked, rows, cols);
        let xt = x.transpose();
        for j in 0..cols {
            let mut col = xt.row(j).to_vec();
            fwht_unnormalized(&mut col);
            for i in 0..rows {
                assert!((blocked[i * cols + j] - col[i]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn involution_and_norm(b in 0u32..=10, seed in any::<u64>()) {
            let m = 1usize << b;
            let v = gaussian_matrix(1, m, &mut seeded_rng(seed)).into_vec();
            let t = fwht(&v).unwrap();
            let n0: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n1: f64 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n0 - n1).abs() < 1e-10 * n0.max(1.0));
            let back = fwht(&t).unwrap();
            for (a, b) in back.iter().zip(&v) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
