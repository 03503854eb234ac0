//! Frequent Directions.
//!
//! The sketch is an `ℓ × d` matrix whose leading `occupied` rows may be
//! non-zero and whose remaining rows are exactly zero. Rows enter one at a
//! time into the first zero row; when none is left the sketch is shrunk by
//! subtracting the `(ℓ/2)`-th largest squared singular value from every
//! squared singular value. After any sequence of insertions of the rows of
//! `A`, `0 ⪯ AᵀA − BᵀB` and `‖AᵀA − BᵀB‖₂ ≤ (2/ℓ)‖A‖²_F`.

use crate::error::{Error, Result};
use crate::linalg::svd_right;
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SketchState {
    ell: usize,
    d: usize,
    b: DenseMatrix,
    occupied: usize,
}

impl SketchState {
    /// Empty sketch. `ell` must be even and at least 2.
    pub fn new(ell: usize, d: usize) -> Result<Self> {
        validate_ell(ell)?;
        if d == 0 {
            return Err(Error::invalid("sketch needs at least one column"));
        }
        Ok(Self {
            ell,
            d,
            b: DenseMatrix::zeros(ell, d),
            occupied: 0,
        })
    }

    /// Adopts an existing `ℓ × d` sketch matrix. Rows after the last non-zero
    /// row count as free.
    pub fn from_matrix(b: DenseMatrix) -> Result<Self> {
        let (ell, d) = b.shape();
        validate_ell(ell)?;
        let occupied = (0..ell).rev().find(|&i| b.row(i).iter().any(|&v| v != 0.0)).map_or(0, |i| i + 1);
        Ok(Self { ell, d, b, occupied })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.b
    }

    /// Inserts every row of `rows`, shrinking whenever the sketch is full and
    /// another row must enter.
    pub fn insert(&mut self, rows: &DenseMatrix) -> Result<()> {
        if rows.cols() != self.d {
            return Err(Error::mismatch("fd insert columns", self.d, rows.cols()));
        }
        for r in rows.row_iter() {
            self.insert_row(r)?;
        }
        Ok(())
    }

    /// Inserts one row. An all-zero row changes nothing and takes no slot.
    pub fn insert_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::mismatch("fd insert columns", self.d, row.len()));
        }
        if row.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if self.occupied == self.ell {
            self.shrink()?;
        }
        let slot = self.occupied;
        self.b.row_mut(slot).copy_from_slice(row);
        self.occupied += 1;
        Ok(())
    }

    /// `B ← Σ̂ Vᵀ` with `Σ̂ᵢ = √max(σᵢ² − σ²_{ℓ/2}, 0)`. Leaves at most
    /// `ℓ/2 − 1` non-zero rows.
    pub fn shrink(&mut self) -> Result<()> {
        if self.occupied == 0 {
            return Ok(());
        }
        let (sigma, vt) = svd_right(&self.b)?;
        let half = self.ell / 2;
        let delta = sigma.get(half - 1).map_or(0.0, |s| s * s);

        let mut kept = 0;
        let mut next = DenseMatrix::zeros(self.ell, self.d);
        for (i, &s) in sigma.iter().enumerate() {
            let shrunk = (s * s - delta).max(0.0).sqrt();
            if shrunk == 0.0 {
                // sorted, so everything after is zero too
                break;
            }
            for (o, v) in next.row_mut(i).iter_mut().zip(vt.row(i)) {
                *o = shrunk * v;
            }
            kept = i + 1;
        }
        self.b = next;
        self.occupied = kept;
        Ok(())
    }

    /// Writes `c` into the bottom `c.rows()` rows, shrinking first if any of
    /// them is occupied, then shrinks. This is the FFD update.
    pub(crate) fn absorb_block(&mut self, c: &DenseMatrix) -> Result<()> {
        let h = c.rows();
        if c.cols() != self.d {
            return Err(Error::mismatch("sketch block columns", self.d, c.cols()));
        }
        if h > self.ell / 2 {
            return Err(Error::invalid("compressed block exceeds half the sketch"));
        }
        let start = self.ell - h;
        if self.occupied > start {
            self.shrink()?;
        }
        for (i, r) in c.row_iter().enumerate() {
            self.b.row_mut(start + i).copy_from_slice(r);
        }
        self.occupied = self.ell;
        self.shrink()
    }
}

fn validate_ell(ell: usize) -> Result<()> {
    if ell < 2 || ell % 2 != 0 {
        return Err(Error::invalid(format!("sketch size ell = {ell} must be even and at least 2")));
    }
    Ok(())
}
