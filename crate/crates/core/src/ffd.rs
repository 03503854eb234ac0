//! Faster Frequent Directions: rows are buffered `m` at a time, each full
//! buffer is compressed to `ℓ/2` rows by a fresh SRHT and folded into the
//! sketch's lower half, followed by a shrink.

use crate::error::{Error, Result};
use crate::fd::SketchState;
use crate::matrix::DenseMatrix;
use crate::rng::derive_seed;
use crate::srht::SrhtOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct FfdSketcher {
    m: usize,
    d: usize,
    sketch: SketchState,
    buffer: Vec<f64>,
    trial: u64,
    seed: u64,
}

impl FfdSketcher {
    /// `ell` even, `m` a power of two with `m ≥ ell/2`.
    pub fn new(ell: usize, m: usize, d: usize, seed: u64) -> Result<Self> {
        let sketch = SketchState::new(ell, d)?;
        if !m.is_power_of_two() {
            return Err(Error::invalid(format!("ffd buffer rows m = {m} must be a power of two")));
        }
        if m < ell / 2 {
            return Err(Error::invalid(format!("ffd buffer rows m = {m} must be at least ell/2 = {}", ell / 2)));
        }
        Ok(Self {
            m,
            d,
            sketch,
            buffer: Vec::with_capacity(m * d),
            trial: 0,
            seed,
        })
    }

    /// Rebuilds a sketcher from checkpointed parts.
    pub fn from_parts(
        sketch: SketchState,
        m: usize,
        buffered: DenseMatrix,
        trial: u64,
        seed: u64,
    ) -> Result<Self> {
        let mut s = Self::new(sketch.ell(), m, sketch.cols(), seed)?;
        if buffered.cols() != s.d {
            return Err(Error::mismatch("ffd buffer columns", s.d, buffered.cols()));
        }
        if buffered.rows() >= m {
            return Err(Error::invalid("checkpointed ffd buffer must hold fewer than m rows"));
        }
        s.sketch = sketch;
        s.buffer.extend_from_slice(buffered.as_slice());
        s.trial = trial;
        Ok(s)
    }

    pub fn ell(&self) -> usize {
        self.sketch.ell()
    }

    pub fn buffer_rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of compressions performed so far.
    pub fn trial(&self) -> u64 {
        self.trial
    }

    pub fn pending_rows(&self) -> usize {
        self.buffer.len() / self.d
    }

    pub fn pending(&self) -> DenseMatrix {
        DenseMatrix::from_parts(self.pending_rows(), self.d, self.buffer.clone())
    }

    pub fn sketch(&self) -> &SketchState {
        &self.sketch
    }

    /// Operator used for compression number `trial`.
    pub fn operator_for_trial(&self, trial: u64) -> Result<SrhtOperator> {
        SrhtOperator::new(self.m, self.ell() / 2, derive_seed(self.seed, trial))
    }

    pub fn insert(&mut self, rows: &DenseMatrix) -> Result<()> {
        if rows.cols() != self.d {
            return Err(Error::mismatch("ffd insert columns", self.d, rows.cols()));
        }
        for r in rows.row_iter() {
            self.insert_row(r)?;
        }
        Ok(())
    }

    /// Buffers one row; an all-zero row is dropped. A buffer that reaches `m`
    /// rows is compressed immediately.
    pub fn insert_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::mismatch("ffd insert columns", self.d, row.len()));
        }
        if row.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        self.buffer.extend_from_slice(row);
        if self.buffer.len() == self.m * self.d {
            self.compress()?;
        }
        Ok(())
    }

    fn compress(&mut self) -> Result<()> {
        let op = self.operator_for_trial(self.trial)?;
        let c = op.apply_blocked(self.buffer.chunks_exact(self.d), self.d)?;
        self.sketch.absorb_block(&c)?;
        self.buffer.clear();
        self.trial += 1;
        Ok(())
    }

    /// Flushes pending rows into the sketch with plain FD insertion and
    /// returns the sketch. Calling it again without new rows returns the same
    /// matrix.
    pub fn finalize(&mut self) -> Result<DenseMatrix> {
        let pending = std::mem::take(&mut self.buffer);
        for r in pending.chunks_exact(self.d) {
            self.sketch.insert_row(r)?;
        }
        self.buffer = pending;
        self.buffer.clear();
        Ok(self.sketch.matrix().clone())
    }

    /// The sketch as [`finalize`](Self::finalize) would return it, computed on
    /// a copy so the live buffer is left alone.
    pub fn snapshot(&self) -> Result<DenseMatrix> {
        let mut sketch = self.sketch.clone();
        for r in self.buffer.chunks_exact(self.d) {
            sketch.insert_row(r)?;
        }
        Ok(sketch.into_matrix())
    }
}
