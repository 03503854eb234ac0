//! Thin SVD, spectral norm by power iteration, and column orthonormalization.

use nalgebra::linalg::SVD;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng;

/// Thin SVD `m = u · diag(sigma) · vt` with `k = min(rows, cols)` components,
/// sorted by non-increasing singular value.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdResult {
    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        let k = self.sigma.len();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i)[..k].iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }
}

fn max_sweeps(rows: usize, cols: usize) -> usize {
    1000 + 200 * rows.min(cols)
}

fn decompose(m: &DenseMatrix, want_u: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.is_empty() {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    SVD::try_new(m.to_nalgebra(), want_u, true, f64::EPSILON, max_sweeps(m.rows(), m.cols()))
        .ok_or_else(|| Error::Numerical(format!("svd of {}x{} matrix did not converge", m.rows(), m.cols())))
}

/// Sorting permutation for singular values, largest first.
fn descending_order(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order
}

fn sorted_vt(vt: &nalgebra::DMatrix<f64>, order: &[usize]) -> DenseMatrix {
    let d = vt.ncols();
    let mut data = Vec::with_capacity(order.len() * d);
    for &i in order {
        data.extend(vt.row(i).iter().copied());
    }
    DenseMatrix::from_parts(order.len(), d, data)
}

/// Thin SVD. Non-convergence of the iterative phase is reported as
/// [`Error::Numerical`].
pub fn svd(m: &DenseMatrix) -> Result<SvdResult> {
    let dec = decompose(m, true)?;
    let s = dec.singular_values.as_slice();
    let order = descending_order(s);
    let u_raw = dec.u.as_ref().expect("u requested");
    let vt_raw = dec.v_t.as_ref().expect("vt requested");

    let n = m.rows();
    let k = order.len();
    let mut u = Vec::with_capacity(n * k);
    for i in 0..n {
        for &c in &order {
            u.push(u_raw[(i, c)]);
        }
    }
    Ok(SvdResult {
        u: DenseMatrix::from_parts(n, k, u),
        sigma: order.iter().map(|&i| s[i].max(0.0)).collect(),
        vt: sorted_vt(vt_raw, &order),
    })
}

/// Singular values and right singular vectors only; the sketch shrink never
/// needs `u`.
pub fn svd_right(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let dec = decompose(m, false)?;
    let s = dec.singular_values.as_slice();
    let order = descending_order(s);
    let vt = sorted_vt(dec.v_t.as_ref().expect("vt requested"), &order);
    Ok((order.iter().map(|&i| s[i].max(0.0)).collect(), vt))
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_START_SEED: u64 = 0x5eed_0f_f00d;

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Power iteration from a fixed seeded start vector; the estimate is
/// `‖M x‖` for the current unit iterate, i.e. the square root of the Rayleigh
/// quotient of `M²`, which also converges when `λ` and `-λ` are both dominant.
/// Stops once successive estimates differ by less than `tol · estimate`.
pub fn spectral_norm(m: &DenseMatrix, tol: f64) -> Result<f64> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::mismatch("spectral_norm needs a square matrix", n, m.cols()));
    }
    if n == 0 || m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut x = rng::gaussian_matrix(1, n, &mut rng::seeded_rng(POWER_START_SEED)).into_vec();
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(m.row(i), &x);
        }
        let est = norm(&y);
        if est == 0.0 {
            // start vector in the null space; the fixed seed makes this a
            // measure-zero event, fall back to a basis vector sweep
            return Ok(basis_fallback(m));
        }
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / est);
        if (est - prev).abs() < tol * est {
            return Ok(est);
        }
        prev = est;
    }
    Ok(prev)
}

fn basis_fallback(m: &DenseMatrix) -> f64 {
    (0..m.rows()).map(|i| norm(m.row(i))).fold(0.0, f64::max)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
}

/// Orthonormal basis for the column space of a full-column-rank `d × r`
/// matrix (thin Householder QR, `R` diagonal made positive).
pub fn orthonormal_columns(m: &DenseMatrix) -> Result<DenseMatrix> {
    let (d, r) = m.shape();
    if r > d {
        return Err(Error::invalid(format!("cannot orthonormalize {r} columns in dimension {d}")));
    }
    let qr = m.to_nalgebra().qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    for j in 0..r {
        if rdiag[j] == 0.0 {
            return Err(Error::Numerical("rank-deficient input to orthonormalization".into()));
        }
        if rdiag[j] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(DenseMatrix::from_nalgebra(&q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded_rng};
    use proptest::prelude::*;

    fn assert_orthonormal_rows(m: &DenseMatrix, tol: f64) {
        let g = m.matmul(&m.transpose()).unwrap();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.get(i, j) - e).abs() < tol, "({i},{j}) = {}", g.get(i, j));
            }
        }
    }

    fn check_svd(m: &DenseMatrix) {
        let s = svd(m).unwrap();
        let k = m.rows().min(m.cols());
        assert_eq!(s.sigma.len(), k);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.sigma.iter().all(|&v| v >= 0.0));
        assert_orthonormal_rows(&s.u.transpose(), 1e-10);
        assert_orthonormal_rows(&s.vt, 1e-10);
        let err = s.reconstruct().sub(m).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * m.frobenius_norm().max(1e-300), "reconstruction error {err}");
    }

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(svd(&DenseMatrix::identity(2)).unwrap().sigma, vec![1.0, 1.0]);
        let d = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]).unwrap();
        let s = svd(&d).unwrap();
        assert_eq!(s.sigma, vec![3.0, 0.0]);
        check_svd(&d);
    }

    #[test]
    fn random_5x3_reconstructs() {
        let m = gaussian_matrix(5, 3, &mut seeded_rng(42));
        check_svd(&m);
    }

    #[test]
    fn wide_and_tall() {
        check_svd(&gaussian_matrix(4, 17, &mut seeded_rng(1)));
        check_svd(&gaussian_matrix(17, 4, &mut seeded_rng(2)));
    }

    #[test]
    fn empty_is_rejected() {
        assert!(svd(&DenseMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn svd_right_agrees_with_full() {
        let m = gaussian_matrix(6, 9, &mut seeded_rng(5));
        let full = svd(&m).unwrap();
        let (s, vt) = svd_right(&m).unwrap();
        for (a, b) in s.iter().zip(&full.sigma) {
            assert!((a - b).abs() < 1e-12);
        }
        // rows agree up to sign
        for i in 0..vt.rows() {
            let c = dot(vt.row(i), full.vt.row(i)).abs();
            assert!((c - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_norm_cases() {
        let d = DenseMatrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, -5.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((spectral_norm(&d, 1e-12).unwrap() - 5.0).abs() < 1e-9);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(4, 4), 1e-9).unwrap(), 0.0);
        // equal and opposite dominant eigenvalues
        let pm = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, -2.0]]).unwrap();
        assert!((spectral_norm(&pm, 1e-12).unwrap() - 2.0).abs() < 1e-9);
        assert!(spectral_norm(&DenseMatrix::zeros(2, 3), 1e-9).is_err());
    }

    #[test]
    fn spectral_norm_matches_eigen_oracle() {
        let g = gaussian_matrix(6, 6, &mut seeded_rng(3));
        let sym = g.add(&g.transpose()).unwrap();
        let eig = nalgebra::SymmetricEigen::new(sym.to_nalgebra());
        let expected = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let got = spectral_norm(&sym, 1e-10).unwrap();
        assert!((got - expected).abs() < 1e-8 * expected.max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn orthonormal_columns_of_gaussian() {
        let g = gaussian_matrix(8, 8, &mut seeded_rng(9));
        let q = orthonormal_columns(&g).unwrap();
        assert_orthonormal_rows(&q.transpose(), 1e-10);
        assert!(orthonormal_columns(&gaussian_matrix(3, 4, &mut seeded_rng(1))).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn svd_invariants_hold(rows in 1usize..=64, cols in 1usize..=64, seed in any::<u64>()) {
            let m = gaussian_matrix(rows, cols, &mut seeded_rng(seed));
            check_svd(&m);
        }
    }
}
