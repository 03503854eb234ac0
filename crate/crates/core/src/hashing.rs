//! Online sketching hashing.
//!
//! A stream of raw chunks is centered online, fed into a sketcher (plain FD
//! gives the OSH baseline, FFD gives FROSH), and every `eta` chunks the top
//! `r` right singular vectors of the sketch become the projection of a
//! [`HashModel`]. Hash bit `k` of a row `a` is `sgn((a − μ)·w_k)` with
//! `sgn(0) = +1`.

use serde::{Deserialize, Serialize};

use crate::centering::CenteringState;
use crate::error::{Error, Result};
use crate::fd::SketchState;
use crate::ffd::FfdSketcher;
use crate::linalg::{orthonormal_columns, svd_right};
use crate::matrix::DenseMatrix;
use crate::rng::{gaussian_matrix, seeded_rng};

/// Tolerance on `wᵀw = I` accepted when a model is built from raw parts.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketcherKind {
    Fd,
    Ffd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Code length `r`.
    pub bits: usize,
    /// Sketch rows `ℓ`.
    pub ell: usize,
    /// FFD buffer rows `m`; `None` picks [`default_buffer_rows`].
    pub buffer_rows: Option<usize>,
    /// Chunks between model emissions.
    pub eta: usize,
    pub seed: u64,
    pub sketcher: SketcherKind,
}

impl TrainConfig {
    /// FROSH defaults: `ℓ = 2r`, `m` from the data width, one model per chunk.
    pub fn new(bits: usize) -> Self {
        Self {
            bits,
            ell: 2 * bits,
            buffer_rows: None,
            eta: 1,
            seed: 0,
            sketcher: SketcherKind::Ffd,
        }
    }

    pub fn with_sketcher(mut self, kind: SketcherKind) -> Self {
        self.sketcher = kind;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ell(mut self, ell: usize) -> Self {
        self.ell = ell;
        self
    }

    pub fn with_eta(mut self, eta: usize) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_buffer_rows(mut self, m: usize) -> Self {
        self.buffer_rows = Some(m);
        self
    }

    /// FFD buffer size used for `d`-dimensional data.
    pub fn effective_buffer_rows(&self, d: usize) -> usize {
        self.buffer_rows.unwrap_or_else(|| default_buffer_rows(d, self.ell))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::invalid("code length must be at least one bit"));
        }
        if self.ell < 2 || self.ell % 2 != 0 {
            return Err(Error::invalid(format!("sketch size ell = {} must be even and at least 2", self.ell)));
        }
        if self.bits > self.ell {
            return Err(Error::invalid(format!("bits = {} exceeds sketch size ell = {}", self.bits, self.ell)));
        }
        if self.bits > d {
            return Err(Error::invalid(format!("bits = {} exceeds data dimension {d}", self.bits)));
        }
        if self.eta == 0 {
            return Err(Error::invalid("eta must be at least 1"));
        }
        Ok(())
    }
}

/// Smallest power of two `≥ 4d`, raised to `ℓ/2` if that is larger.
pub fn default_buffer_rows(d: usize, ell: usize) -> usize {
    (4 * d).max(ell / 2).max(1).next_power_of_two()
}

/// Either sketching backend behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Sketcher {
    Fd(SketchState),
    Ffd(FfdSketcher),
}

impl Sketcher {
    pub fn new(kind: SketcherKind, ell: usize, m: usize, d: usize, seed: u64) -> Result<Self> {
        Ok(match kind {
            SketcherKind::Fd => Sketcher::Fd(SketchState::new(ell, d)?),
            SketcherKind::Ffd => Sketcher::Ffd(FfdSketcher::new(ell, m, d, seed)?),
        })
    }

    pub fn from_config(cfg: &TrainConfig, d: usize) -> Result<Self> {
        Self::new(cfg.sketcher, cfg.ell, cfg.effective_buffer_rows(d), d, cfg.seed)
    }

    pub fn kind(&self) -> SketcherKind {
        match self {
            Sketcher::Fd(_) => SketcherKind::Fd,
            Sketcher::Ffd(_) => SketcherKind::Ffd,
        }
    }

    pub fn insert(&mut self, rows: &DenseMatrix) -> Result<()> {
        match self {
            Sketcher::Fd(s) => s.insert(rows),
            Sketcher::Ffd(s) => s.insert(rows),
        }
    }

    /// Current sketch including any pending FFD rows, without touching state.
    pub fn snapshot(&self) -> Result<DenseMatrix> {
        match self {
            Sketcher::Fd(s) => Ok(s.matrix().clone()),
            Sketcher::Ffd(s) => s.snapshot(),
        }
    }

    pub fn finalize(&mut self) -> Result<DenseMatrix> {
        match self {
            Sketcher::Fd(s) => Ok(s.matrix().clone()),
            Sketcher::Ffd(s) => s.finalize(),
        }
    }
}

/// Projection `w` (`d × r`, orthonormal columns) and center `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashModel {
    w: DenseMatrix,
    mu: Vec<f64>,
}

impl HashModel {
    /// Checks shapes and `wᵀw = I` within [`ORTHONORMALITY_TOL`].
    pub fn new(w: DenseMatrix, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != w.rows() {
            return Err(Error::mismatch("model center length", w.rows(), mu.len()));
        }
        if w.cols() == 0 {
            return Err(Error::invalid("model needs at least one bit"));
        }
        if let Some(i) = mu.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let model = Self { w, mu };
        let dev = model.orthonormality_error();
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::Numerical(format!("projection columns deviate from orthonormal by {dev:e}")));
        }
        Ok(model)
    }

    /// Top `r` right singular vectors of `sketch`, each sign-normalized so its
    /// largest-magnitude entry is positive.
    pub fn from_sketch(sketch: &DenseMatrix, mu: Vec<f64>, r: usize) -> Result<Self> {
        let (_, vt) = svd_right(sketch)?;
        if r > vt.rows() {
            return Err(Error::invalid(format!(
                "cannot extract {r} directions from a {}x{} sketch",
                sketch.rows(),
                sketch.cols()
            )));
        }
        let d = sketch.cols();
        let mut w = DenseMatrix::zeros(d, r);
        for k in 0..r {
            let v = vt.row(k);
            let pivot = v.iter().fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
            let s = if pivot < 0.0 { -1.0 } else { 1.0 };
            for (j, &x) in v.iter().enumerate() {
                w.as_mut_slice()[j * r + k] = s * x;
            }
        }
        Self::new(w, mu)
    }

    pub fn projection(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn center(&self) -> &[f64] {
        &self.mu
    }

    pub fn bits(&self) -> usize {
        self.w.cols()
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// Largest entry of `|wᵀw − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.w.gram();
        let r = g.rows();
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - e).abs());
            }
        }
        worst
    }

    /// Projections `(a − μ)·w_k` for one row.
    pub fn project_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, (&a, &m)) in row.iter().zip(&self.mu).enumerate() {
            let c = a - m;
            if c == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.w.row(j)) {
                *o += c * w;
            }
        }
    }

    pub fn hash(&self, rows: &DenseMatrix) -> Result<BinaryCodes> {
        if rows.cols() != self.dim() {
            return Err(Error::mismatch("hash input columns", self.dim(), rows.cols()));
        }
        let r = self.bits();
        let mut codes = BinaryCodes::zeros(rows.rows(), r);
        let mut proj = vec![0.0; r];
        for (i, row) in rows.row_iter().enumerate() {
            self.project_row(row, &mut proj);
            for (k, &p) in proj.iter().enumerate() {
                if p >= 0.0 {
                    codes.set(i, k);
                }
            }
        }
        Ok(codes)
    }
}

/// Random-projection baseline: orthonormalized Gaussian `d × r`, zero center.
pub fn lsh_model(d: usize, r: usize, seed: u64) -> Result<HashModel> {
    if r == 0 {
        return Err(Error::invalid("code length must be at least one bit"));
    }
    if r > d {
        return Err(Error::invalid(format!("bits = {r} exceeds data dimension {d}")));
    }
    let g = gaussian_matrix(d, r, &mut seeded_rng(seed));
    HashModel::new(orthonormal_columns(&g)?, vec![0.0; d])
}

/// Packed `n × r` bit matrix; bit `k` of code `i` lives in word `k / 64`,
/// position `k % 64`. Padding bits stay zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodes {
    n: usize,
    bits: usize,
    words: Vec<u64>,
}

impl BinaryCodes {
    pub fn zeros(n: usize, bits: usize) -> Self {
        Self {
            n,
            bits,
            words: vec![0; n * words_per_code(bits)],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        words_per_code(self.bits)
    }

    pub fn code(&self, i: usize) -> &[u64] {
        let w = self.words_per_code();
        &self.words[i * w..(i + 1) * w]
    }

    pub fn bit(&self, i: usize, k: usize) -> bool {
        self.code(i)[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, k: usize) {
        assert!(k < self.bits, "bit {k} out of range");
        let w = self.words_per_code();
        self.words[i * w + k / 64] |= 1u64 << (k % 64);
    }

    pub fn hamming(&self, i: usize, query: &[u64]) -> u32 {
        self.code(i).iter().zip(query).map(|(a, b)| (a ^ b).count_ones()).sum()
    }
}

fn words_per_code(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Database indices sorted by Hamming distance to `query`, ties by index.
pub fn hamming_rank(query: &[u64], db: &BinaryCodes) -> Result<Vec<usize>> {
    if query.len() != db.words_per_code() {
        return Err(Error::mismatch("query code words", db.words_per_code(), query.len()));
    }
    // counting sort over the r+1 possible distances keeps index order stable
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); db.bits() + 1];
    for i in 0..db.len() {
        buckets[db.hamming(i, query) as usize].push(i);
    }
    Ok(buckets.into_iter().flatten().collect())
}

/// Streaming trainer: online centering, sketching, periodic model emission.
#[derive(Debug, Clone)]
pub struct OnlineHasher {
    cfg: TrainConfig,
    centering: CenteringState,
    sketcher: Sketcher,
    since_emit: usize,
    chunks: usize,
}

impl OnlineHasher {
    pub fn new(cfg: TrainConfig, d: usize) -> Result<Self> {
        cfg.validate(d)?;
        let sketcher = Sketcher::from_config(&cfg, d)?;
        Ok(Self {
            cfg,
            centering: CenteringState::new(d),
            sketcher,
            since_emit: 0,
            chunks: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.centering.dim()
    }

    pub fn centering(&self) -> &CenteringState {
        &self.centering
    }

    pub fn sketcher(&self) -> &Sketcher {
        &self.sketcher
    }

    pub fn chunks_seen(&self) -> usize {
        self.chunks
    }

    /// Centers and sketches one chunk. Returns a model when this chunk
    /// completes a group of `eta`; training carries on either way.
    pub fn push_chunk(&mut self, chunk: &DenseMatrix) -> Result<Option<HashModel>> {
        let g = self.centering.center_chunk(chunk)?;
        self.sketcher.insert(&g)?;
        self.chunks += 1;
        self.since_emit += 1;
        if self.since_emit == self.cfg.eta {
            self.since_emit = 0;
            return self.model().map(Some);
        }
        Ok(None)
    }

    /// Model from the current state; pending FFD rows are flushed into a copy
    /// of the sketch.
    pub fn model(&self) -> Result<HashModel> {
        if self.chunks == 0 {
            return Err(Error::invalid("no data has been absorbed yet"));
        }
        HashModel::from_sketch(&self.sketcher.snapshot()?, self.centering.mean().to_vec(), self.cfg.bits)
    }

    pub fn sketch_snapshot(&self) -> Result<DenseMatrix> {
        self.sketcher.snapshot()
    }

    /// Flushes the sketcher and returns the sketch.
    pub fn finalize_sketch(&mut self) -> Result<DenseMatrix> {
        self.sketcher.finalize()
    }
}

/// Runs the trainer over `chunks` and returns every emitted model.
pub fn train_stream<I>(chunks: I, cfg: &TrainConfig) -> Result<Vec<HashModel>>
where
    I: IntoIterator,
    I::Item: AsRef<DenseMatrix>,
{
    let mut trainer: Option<OnlineHasher> = None;
    let mut models = Vec::new();
    for chunk in chunks {
        let chunk = chunk.as_ref();
        let t = match &mut trainer {
            Some(t) => t,
            None => trainer.insert(OnlineHasher::new(cfg.clone(), chunk.cols())?),
        };
        if chunk.cols() != t.dim() {
            return Err(Error::mismatch("chunk columns", t.dim(), chunk.cols()));
        }
        if let Some(m) = t.push_chunk(chunk)? {
            models.push(m);
        }
    }
    Ok(models)
}
