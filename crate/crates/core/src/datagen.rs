//! Synthetic data generators.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::orthonormal_columns;
use crate::matrix::DenseMatrix;
use crate::rng::{gaussian_matrix, seeded_rng, Rng};

/// Low-rank signal plus Gaussian noise: `A = P Λ U + Z / γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// Signal rank.
    pub k: usize,
    /// Noise divisor.
    pub gamma: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            k: 10,
            gamma: 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.d {
            return Err(Error::invalid(format!("signal rank k = {} must lie in [1, d = {}]", self.k, self.d)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("noise divisor gamma = {} must be positive", self.gamma)));
        }
        Ok(())
    }
}

/// `k × d` matrix with orthonormal rows from an orthonormalized Gaussian.
fn orthonormal_rows(k: usize, d: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    Ok(orthonormal_columns(&gaussian_matrix(d, k, rng))?.transpose())
}

/// Draws `U`, then `P` and `Z` row by row, from one seeded stream.
/// `Λ_ii = 1 − (i − 1)/k` (1-indexed), so the signal spectrum decays
/// linearly down to `1/k`.
pub fn synth_lowrank(cfg: &SynthConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    let (n, d, k) = (cfg.n, cfg.d, cfg.k);
    let mut rng = seeded_rng(cfg.seed);
    let u = orthonormal_rows(k, d, &mut rng)?;
    let lambda: Vec<f64> = (0..k).map(|i| 1.0 - i as f64 / k as f64).collect();
    let inv_gamma = 1.0 / cfg.gamma;

    let mut data = Vec::with_capacity(n * d);
    let mut coef = vec![0.0; k];
    for _ in 0..n {
        for (c, l) in coef.iter_mut().zip(&lambda) {
            let p: f64 = StandardNormal.sample(&mut rng);
            *c = p * l;
        }
        let start = data.len();
        data.extend((0..d).map(|_| inv_gamma * rng.sample::<f64, _>(StandardNormal)));
        let row = &mut data[start..];
        for (c, urow) in coef.iter().zip(u.row_iter()) {
            for (x, v) in row.iter_mut().zip(urow) {
                *x += c * v;
            }
        }
    }
    Ok(DenseMatrix::from_parts(n, d, data))
}

/// Gaussian clusters living in a shared low-dimensional subspace with a
/// decaying per-axis scale, plus isotropic noise. Used for the retrieval
/// experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    /// Dimension of the subspace holding centers and within-cluster spread.
    pub intrinsic_dim: usize,
    /// Standard deviation of cluster centers along each intrinsic axis.
    pub center_scale: f64,
    /// Within-cluster standard deviation along each intrinsic axis.
    pub spread: f64,
    /// Standard deviation of the isotropic ambient noise.
    pub noise: f64,
    /// Intrinsic axis `i` (0-based) is scaled by `(i + 1)^(-decay)`.
    pub decay: f64,
    pub seed: u64,
}

impl ClusterConfig {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            clusters: 10,
            intrinsic_dim: 64,
            center_scale: 0.5,
            spread: 0.5,
            noise: 0.15,
            decay: 0.3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::invalid("need at least one cluster"));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.d {
            return Err(Error::invalid(format!(
                "intrinsic dimension {} must lie in [1, d = {}]",
                self.intrinsic_dim, self.d
            )));
        }
        for (name, v) in [
            ("center_scale", self.center_scale),
            ("spread", self.spread),
            ("noise", self.noise),
            ("decay", self.decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Rows are drawn i.i.d.: pick a cluster uniformly, add within-cluster
/// Gaussian spread in the intrinsic subspace, add ambient noise.
pub fn synth_clustered(cfg: &ClusterConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    let (d, k) = (cfg.d, cfg.intrinsic_dim);
    let mut rng = seeded_rng(cfg.seed);
    let basis = orthonormal_rows(k, d, &mut rng)?;
    let axis: Vec<f64> = (0..k).map(|i| ((i + 1) as f64).powf(-cfg.decay)).collect();
    let centers = gaussian_matrix(cfg.clusters, k, &mut rng).scale(cfg.center_scale);

    let mut data = Vec::with_capacity(cfg.n * d);
    let mut coord = vec![0.0; k];
    for _ in 0..cfg.n {
        let c = rng.gen_range(0..cfg.clusters);
        for ((x, &m), &s) in coord.iter_mut().zip(centers.row(c)).zip(&axis) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = s * (m + cfg.spread * z);
        }
        let start = data.len();
        data.extend((0..d).map(|_| cfg.noise * rng.sample::<f64, _>(StandardNormal)));
        let row = &mut data[start..];
        for (c, brow) in coord.iter().zip(basis.row_iter()) {
            for (x, v) in row.iter_mut().zip(brow) {
                *x += c * v;
            }
        }
    }
    Ok(DenseMatrix::from_parts(cfg.n, d, data))
}

/// Splits off the last `n_queries` rows as held-out queries.
pub fn hold_out(a: &DenseMatrix, n_queries: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    if n_queries == 0 || n_queries >= a.rows() {
        return Err(Error::invalid(format!("cannot hold out {n_queries} of {} rows", a.rows())));
    }
    let split = a.rows() - n_queries;
    Ok((a.slice_rows(0, split), a.slice_rows(split, a.rows())))
}
