//! Online centering of a chunked stream.
//!
//! Each raw chunk `A_j` is turned into `G_j = [A_j − μ_j; ς]` where `μ_j` is
//! the chunk mean and `ς = √(τh/(τ+h)) (μ_j − φ)` corrects for the drift
//! between the chunk mean and the running mean `φ` of the `τ` rows seen
//! before it. The first chunk has no correction row. Stacking every `G_j`
//! gives exactly the Gram matrix of the globally centered data.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CenteringState {
    phi: Vec<f64>,
    tau: u64,
}

impl CenteringState {
    pub fn new(d: usize) -> Self {
        Self {
            phi: vec![0.0; d],
            tau: 0,
        }
    }

    /// Resumes from a known running mean and count.
    pub fn from_parts(phi: Vec<f64>, tau: u64) -> Self {
        Self { phi, tau }
    }

    /// Running row mean of every raw row absorbed.
    pub fn mean(&self) -> &[f64] {
        &self.phi
    }

    pub fn count(&self) -> u64 {
        self.tau
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// Centers one chunk and returns its `G_j`.
    pub fn center_chunk(&mut self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() == 0 {
            return Err(Error::invalid("cannot center an empty chunk"));
        }
        if a.cols() != self.dim() {
            return Err(Error::mismatch("centering chunk columns", self.dim(), a.cols()));
        }
        let mu = a.row_mean();
        let h = a.rows() as u64;
        let centered = a.sub_row_vector(&mu)?;
        if self.tau == 0 {
            self.phi = mu;
            self.tau = h;
            return Ok(centered);
        }
        let correction = self.absorb_mean(&mu, h);
        let corr = DenseMatrix::from_parts(1, correction.len(), correction);
        DenseMatrix::vstack(&[&centered, &corr])
    }

    /// Folds in a group of `n` rows with mean `mu` and returns its correction
    /// row `ς`. Used directly by the distributed merge, where the group is a
    /// whole worker.
    pub fn absorb_mean(&mut self, mu: &[f64], n: u64) -> Vec<f64> {
        debug_assert_eq!(mu.len(), self.dim());
        let (tau, n_f) = (self.tau as f64, n as f64);
        let total = tau + n_f;
        let w = (tau * n_f / total).sqrt();
        let correction = mu.iter().zip(&self.phi).map(|(m, p)| w * (m - p)).collect();
        for (p, m) in self.phi.iter_mut().zip(mu) {
            *p = tau * *p / total + n_f * m / total;
        }
        self.tau += n;
        correction
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded_rng};

    #[test]
    fn first_chunk_is_plainly_centered() {
        let mut cs = CenteringState::new(2);
        let g = cs.center_chunk(&DenseMatrix::from_rows(&[[1.0, 1.0], [3.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(cs.mean(), &[2.0, 2.0]);
        assert_eq!(cs.count(), 2);
    }

    #[test]
    fn equal_means_give_zero_correction() {
        let mut cs = CenteringState::new(2);
        let z = DenseMatrix::zeros(1, 2);
        cs.center_chunk(&z).unwrap();
        let g = cs.center_chunk(&z).unwrap();
        assert_eq!(g.rows(), 2);
        assert_eq!(g.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn stacked_gram_equals_centered_gram() {
        let mut rng = seeded_rng(13);
        let chunks: Vec<DenseMatrix> = [3, 5, 2].iter().map(|&h| gaussian_matrix(h, 4, &mut rng)).collect();
        let mut cs = CenteringState::new(4);
        let gs: Vec<DenseMatrix> = chunks.iter().map(|c| cs.center_chunk(c).unwrap()).collect();
        assert_eq!(gs.iter().map(|g| g.rows()).collect::<Vec<_>>(), vec![3, 6, 3]);

        let refs: Vec<&DenseMatrix> = chunks.iter().collect();
        let a = DenseMatrix::vstack(&refs).unwrap();
        let mu = a.row_mean();
        let expected = a.sub_row_vector(&mu).unwrap().gram();
        let grefs: Vec<&DenseMatrix> = gs.iter().collect();
        let got = DenseMatrix::vstack(&grefs).unwrap().gram();
        assert!(got.sub(&expected).unwrap().max_abs() < 1e-10);
        for (p, m) in cs.mean().iter().zip(&mu) {
            assert!((p - m).abs() <= 1e-12 * m.abs().max(1.0));
        }
        assert_eq!(cs.count(), 10);
    }

    #[test]
    fn errors() {
        let mut cs = CenteringState::new(3);
        assert!(cs.center_chunk(&DenseMatrix::zeros(0, 3)).is_err());
        assert!(cs.center_chunk(&DenseMatrix::zeros(2, 2)).is_err());
    }
}
