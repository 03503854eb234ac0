//! Subsampled randomized Hadamard transform `Φ = √(m/q) · S · H · D`.
//!
//! `D` is an `m × m` diagonal of Rademacher signs, `H` the normalized
//! Walsh–Hadamard matrix and `S` picks `q` of its `m` rows uniformly without
//! replacement. Two application routes are provided: [`SrhtOperator::apply`]
//! transforms the whole buffer at once, [`SrhtOperator::apply_blocked`]
//! streams it in blocks of `p` rows (`p` the largest power of two `≤ q`) and
//! never holds more than `p + q` rows of working data.
//!
//! The blocked route relies on `H_m = H_{m/p} ⊗ H_p`: block `J` of the input
//! contributes `hadamard_sign(I, J) · (H_p D_J F_J)[i']` to a sampled row with
//! global index `I·p + i'`.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hadamard::{fwht_rows, hadamard_sign};
use crate::matrix::DenseMatrix;
use crate::rng::{seeded_rng, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SrhtOperator {
    m: usize,
    q: usize,
    sample_indices: Vec<usize>,
    signs: Vec<f64>,
    seed: u64,
}

/// Working-set accounting for one blocked application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockedStats {
    /// Rows per block (`p`).
    pub block_rows: usize,
    /// Number of blocks processed (`m / p`).
    pub blocks: usize,
    /// Largest number of rows held at once: block buffer plus output.
    pub peak_rows: usize,
}

impl SrhtOperator {
    /// Draws `m` signs and then `q` distinct sample indices (partial
    /// Fisher–Yates) from a ChaCha8 stream seeded with `seed`.
    pub fn new(m: usize, q: usize, seed: u64) -> Result<Self> {
        if !m.is_power_of_two() {
            return Err(Error::invalid(format!("srht source rows m = {m} must be a power of two")));
        }
        if q == 0 || q > m {
            return Err(Error::invalid(format!("srht target rows q = {q} must lie in [1, {m}]")));
        }
        let mut rng = seeded_rng(seed);
        let signs = (0..m).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let sample_indices = sample_without_replacement(m, q, &mut rng);
        Ok(Self {
            m,
            q,
            sample_indices,
            signs,
            seed,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_indices(&self) -> &[usize] {
        &self.sample_indices
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    /// Block size of the streamed route: the largest power of two `≤ q`.
    pub fn block_rows(&self) -> usize {
        1usize << (usize::BITS - 1 - self.q.leading_zeros())
    }

    /// Reference route: materializes `H·D·F` with one transform down each
    /// column, then keeps the sampled rows.
    pub fn apply(&self, f: &DenseMatrix) -> Result<DenseMatrix> {
        if f.rows() != self.m {
            return Err(Error::mismatch("srht input rows", self.m, f.rows()));
        }
        let d = f.cols();
        let mut hdf = f.as_slice().to_vec();
        for (row, &s) in hdf.chunks_exact_mut(d.max(1)).zip(&self.signs) {
            row.iter_mut().for_each(|x| *x *= s);
        }
        fwht_rows(&mut hdf, self.m, d);
        // (√(m/q)) · (1/√m)
        let scale = 1.0 / (self.q as f64).sqrt();
        let mut out = Vec::with_capacity(self.q * d);
        for &s in &self.sample_indices {
            out.extend(hdf[s * d..(s + 1) * d].iter().map(|x| x * scale));
        }
        Ok(DenseMatrix::from_parts(self.q, d, out))
    }

    /// Streamed route over exactly `m` rows of width `d`.
    pub fn apply_blocked<I, R>(&self, rows: I, d: usize) -> Result<DenseMatrix>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        self.apply_blocked_with_stats(rows, d).map(|(c, _)| c)
    }

    pub fn apply_blocked_with_stats<I, R>(&self, rows: I, d: usize) -> Result<(DenseMatrix, BlockedStats)>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f64]>,
    {
        let p = self.block_rows();
        let blocks = self.m / p;
        // FWHT carries 1/√p, the block sign carries 1/√(m/p), S carries √(m/q)
        let fwht_scale = 1.0 / (p as f64).sqrt();
        let accum_scale = (self.m as f64 / self.q as f64).sqrt() / ((self.m / p) as f64).sqrt();
        let targets: Vec<(usize, usize)> = self.sample_indices.iter().map(|&s| (s / p, s % p)).collect();

        let mut out = vec![0.0; self.q * d];
        let mut block = Vec::with_capacity(p * d);
        let mut peak_rows = self.q;
        let mut seen = 0usize;
        let mut block_idx = 0usize;
        let mut rows = rows.into_iter();

        while block_idx < blocks {
            block.clear();
            for local in 0..p {
                let Some(r) = rows.next() else {
                    return Err(Error::StreamLength {
                        expected: self.m,
                        found: seen,
                    });
                };
                let r = r.as_ref();
                if r.len() != d {
                    return Err(Error::mismatch("srht streamed row width", d, r.len()));
                }
                let s = self.signs[block_idx * p + local];
                block.extend(r.iter().map(|x| x * s));
                seen += 1;
            }
            peak_rows = peak_rows.max(self.q + block.len() / d.max(1));
            fwht_rows(&mut block, p, d);
            block.iter_mut().for_each(|x| *x *= fwht_scale);

            for (out_row, &(global, local)) in out.chunks_exact_mut(d.max(1)).zip(&targets) {
                let coef = accum_scale * hadamard_sign(global, block_idx);
                for (o, z) in out_row.iter_mut().zip(&block[local * d..(local + 1) * d]) {
                    *o += coef * z;
                }
            }
            block_idx += 1;
        }
        let extra = rows.count();
        if extra > 0 {
            return Err(Error::StreamLength {
                expected: self.m,
                found: self.m + extra,
            });
        }
        Ok((
            DenseMatrix::from_parts(self.q, d, out),
            BlockedStats {
                block_rows: p,
                blocks,
                peak_rows,
            },
        ))
    }

    /// Dense `q × m` matrix of the operator. Quadratic memory; meant for
    /// inspection and tests.
    pub fn to_dense(&self) -> DenseMatrix {
        let scale = 1.0 / (self.q as f64).sqrt();
        let mut data = Vec::with_capacity(self.q * self.m);
        for &s in &self.sample_indices {
            data.extend((0..self.m).map(|j| scale * hadamard_sign(s, j) * self.signs[j]));
        }
        DenseMatrix::from_parts(self.q, self.m, data)
    }
}

/// First `q` entries of a partial Fisher–Yates shuffle of `0..m`.
fn sample_without_replacement(m: usize, q: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..q {
        let j = rng.gen_range(i..m);
        idx.swap(i, j);
    }
    idx.truncate(q);
    idx
}
