//! Distributed training: every worker sketches its own partition with the
//! online trainer, then a single merge folds the worker sketches together
//! with FD, appending one centering correction row per worker.

use std::thread;

use crate::centering::CenteringState;
use crate::error::{Error, Result};
use crate::fd::SketchState;
use crate::hashing::{HashModel, OnlineHasher, TrainConfig};
use crate::matrix::DenseMatrix;
use crate::rng::derive_seed;

/// What a worker ships to the merging node.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSummary {
    pub sketch: DenseMatrix,
    pub mean: Vec<f64>,
    pub count: u64,
    pub worker_id: usize,
}

/// Result of merging worker summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSketch {
    pub sketch: DenseMatrix,
    pub mean: Vec<f64>,
    pub count: u64,
}

impl MergedSketch {
    pub fn model(&self, bits: usize) -> Result<HashModel> {
        HashModel::from_sketch(&self.sketch, self.mean.clone(), bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Serial,
    Concurrent,
}

const WORKER_STREAM: u64 = 1 << 63;

/// Seed used by worker `worker_id`. Worker 0 keeps the master seed so a
/// single-worker run reproduces single-machine training.
pub fn worker_seed(master: u64, worker_id: usize) -> u64 {
    if worker_id == 0 {
        master
    } else {
        derive_seed(master, WORKER_STREAM | worker_id as u64)
    }
}

impl OnlineHasher {
    /// Summary of everything absorbed so far; pending FFD rows are flushed
    /// into a copy of the sketch.
    pub fn summary(&self, worker_id: usize) -> Result<WorkerSummary> {
        if self.chunks_seen() == 0 {
            return Err(Error::invalid("worker has absorbed no data"));
        }
        Ok(WorkerSummary {
            sketch: self.sketch_snapshot()?,
            mean: self.centering().mean().to_vec(),
            count: self.centering().count(),
            worker_id,
        })
    }
}

/// Runs the online trainer over one partition, streamed in chunks of the
/// effective FFD buffer size, with `cfg.seed` used as is.
pub fn worker_sketch(part: &DenseMatrix, cfg: &TrainConfig, worker_id: usize) -> Result<WorkerSummary> {
    if part.rows() == 0 {
        return Err(Error::invalid(format!("worker {worker_id} received no rows")));
    }
    let d = part.cols();
    let mut trainer = OnlineHasher::new(cfg.clone(), d)?;
    for chunk in part.row_chunks(cfg.effective_buffer_rows(d)) {
        trainer.push_chunk(&chunk)?;
    }
    trainer.summary(worker_id)
}

/// Folds summaries together in ascending `worker_id` order.
pub fn merge(summaries: &[WorkerSummary], ell: usize) -> Result<MergedSketch> {
    let mut ordered: Vec<&WorkerSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.worker_id);
    if ordered.windows(2).any(|w| w[0].worker_id == w[1].worker_id) {
        return Err(Error::invalid("duplicate worker id in merge"));
    }
    let Some(first) = ordered.first() else {
        return Err(Error::invalid("merge needs at least one summary"));
    };
    let d = first.sketch.cols();
    for s in &ordered {
        if s.sketch.rows() != ell {
            return Err(Error::mismatch("worker sketch rows", ell, s.sketch.rows()));
        }
        if s.sketch.cols() != d || s.mean.len() != d {
            return Err(Error::mismatch("worker sketch columns", d, s.sketch.cols()));
        }
        if s.count == 0 {
            return Err(Error::invalid(format!("worker {} reports zero rows", s.worker_id)));
        }
    }

    let mut sketch = SketchState::from_matrix(first.sketch.clone())?;
    let mut centering = CenteringState::from_parts(first.mean.clone(), first.count);
    for s in &ordered[1..] {
        let correction = centering.absorb_mean(&s.mean, s.count);
        sketch.insert(&s.sketch)?;
        sketch.insert_row(&correction)?;
    }
    Ok(MergedSketch {
        sketch: sketch.into_matrix(),
        mean: centering.mean().to_vec(),
        count: centering.count(),
    })
}

/// Worker `i` sketches `parts[i]` with seed [`worker_seed`]`(cfg.seed, i)`;
/// the summaries are then merged in worker order. The schedule only decides
/// whether workers run on their own threads; the result is the same.
pub fn sketch_distributed(parts: &[DenseMatrix], cfg: &TrainConfig, schedule: Schedule) -> Result<MergedSketch> {
    if parts.is_empty() {
        return Err(Error::invalid("distributed training needs at least one part"));
    }
    let d = parts[0].cols();
    if let Some(p) = parts.iter().find(|p| p.cols() != d) {
        return Err(Error::mismatch("partition columns", d, p.cols()));
    }
    cfg.validate(d)?;
    let run = |i: usize, part: &DenseMatrix| {
        let wcfg = cfg.clone().with_seed(worker_seed(cfg.seed, i));
        worker_sketch(part, &wcfg, i)
    };
    let summaries: Vec<WorkerSummary> = match schedule {
        Schedule::Serial => parts.iter().enumerate().map(|(i, p)| run(i, p)).collect::<Result<_>>()?,
        Schedule::Concurrent => thread::scope(|scope| {
            let handles: Vec<_> = parts
                .iter()
                .enumerate()
                .map(|(i, p)| scope.spawn(move || run(i, p)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?,
    };
    merge(&summaries, cfg.ell)
}

pub fn train_distributed(parts: &[DenseMatrix], cfg: &TrainConfig) -> Result<HashModel> {
    sketch_distributed(parts, cfg, Schedule::Concurrent)?.model(cfg.bits)
}

/// Splits rows into `workers` contiguous parts of `n / workers` rows, the
/// remainder going to the last part.
pub fn split_even(a: &DenseMatrix, workers: usize) -> Result<Vec<DenseMatrix>> {
    if workers == 0 || workers > a.rows() {
        return Err(Error::invalid(format!("cannot split {} rows across {workers} workers", a.rows())));
    }
    let base = a.rows() / workers;
    Ok((0..workers)
        .map(|i| {
            let end = if i + 1 == workers { a.rows() } else { (i + 1) * base };
            a.slice_rows(i * base, end)
        })
        .collect())
}
