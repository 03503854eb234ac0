//! Sketch-error metrics and retrieval evaluation.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{hamming_rank, HashModel};
use crate::linalg::spectral_norm;
use crate::matrix::DenseMatrix;

/// Power-iteration tolerance used by the error metrics.
pub const METRIC_TOL: f64 = 1e-9;

/// `‖AᵀA − BᵀB‖₂ / ‖A‖²_F`.
pub fn relative_error(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    if a.cols() != b.cols() {
        return Err(Error::mismatch("relative error columns", a.cols(), b.cols()));
    }
    let fro = a.frobenius_norm_sq();
    if fro == 0.0 {
        return Ok(0.0);
    }
    Ok(spectral_norm(&a.gram().sub(&b.gram())?, METRIC_TOL)? / fro)
}

/// Same metric against the row-centered data, `A − μ`.
pub fn centered_relative_error(a: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    relative_error(&a.sub_row_vector(&a.row_mean())?, b)
}

/// Database, queries and exact nearest-neighbour ground truth.
#[derive(Debug, Clone)]
pub struct RetrievalTask {
    pub database: DenseMatrix,
    pub queries: DenseMatrix,
    /// For each query, the indices of its `⌈fraction · n⌉` closest database
    /// rows, nearest first.
    pub truth: Vec<Vec<usize>>,
}

/// Exact Euclidean ground truth; ties at the boundary go to the lower index.
/// Queries are split across `threads` workers; the result does not depend on
/// the thread count.
pub fn make_task(database: DenseMatrix, queries: DenseMatrix, fraction: f64, threads: usize) -> Result<RetrievalTask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("truth fraction {fraction} must lie in (0, 1]")));
    }
    if database.cols() != queries.cols() {
        return Err(Error::mismatch("query columns", database.cols(), queries.cols()));
    }
    if database.rows() == 0 {
        return Err(Error::invalid("empty database"));
    }
    let k = ((fraction * database.rows() as f64).ceil() as usize).clamp(1, database.rows());
    let nq = queries.rows();
    let threads = threads.max(1).min(nq.max(1));
    let per = nq.div_ceil(threads).max(1);

    let truth = thread::scope(|scope| {
        let handles: Vec<_> = (0..nq)
            .step_by(per)
            .map(|start| {
                let (db, qs) = (&database, &queries);
                scope.spawn(move || {
                    (start..(start + per).min(nq))
                        .map(|q| nearest(db, qs.row(q), k))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("ground-truth worker panicked"))
            .collect::<Vec<_>>()
    });
    Ok(RetrievalTask {
        database,
        queries,
        truth,
    })
}

fn nearest(db: &DenseMatrix, q: &[f64], k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = db
        .row_iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
        dist.truncate(k);
    }
    dist.sort_unstable_by(cmp);
    dist.into_iter().map(|(_, i)| i).collect()
}

fn membership(truth: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &t in truth {
        if t < n {
            m[t] = true;
        }
    }
    m
}

/// Mean of precision@k over the ranks `k` at which true neighbours appear.
/// Zero for an empty truth set.
pub fn average_precision(ranking: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let n = ranking.iter().copied().max().map_or(0, |m| m + 1).max(truth.iter().copied().max().map_or(0, |m| m + 1));
    let is_true = membership(truth, n);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &idx) in ranking.iter().enumerate() {
        if is_true[idx] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / truth.len() as f64
}

pub fn map_score(rankings: &[Vec<usize>], truths: &[Vec<usize>]) -> Result<f64> {
    if rankings.len() != truths.len() {
        return Err(Error::mismatch("rankings vs truth sets", truths.len(), rankings.len()));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = rankings.iter().zip(truths).map(|(r, t)| average_precision(r, t)).sum();
    Ok(total / rankings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub returned: usize,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall, averaged over queries, when the top `c` ranked
/// points are returned, for each `c` in `cuts`.
pub fn pr_curve(rankings: &[Vec<usize>], truths: &[Vec<usize>], cuts: &[usize]) -> Result<Vec<PrPoint>> {
    if rankings.len() != truths.len() {
        return Err(Error::mismatch("rankings vs truth sets", truths.len(), rankings.len()));
    }
    let nq = rankings.len().max(1) as f64;
    let mut recall = vec![0.0; cuts.len()];
    let mut precision = vec![0.0; cuts.len()];
    for (ranking, truth) in rankings.iter().zip(truths) {
        let n = ranking.len();
        let is_true = membership(truth, n.max(truth.iter().copied().max().map_or(0, |m| m + 1)));
        let mut prefix_hits = Vec::with_capacity(n + 1);
        prefix_hits.push(0usize);
        for &idx in ranking {
            let last = *prefix_hits.last().unwrap();
            prefix_hits.push(last + usize::from(is_true[idx]));
        }
        for (j, &c) in cuts.iter().enumerate() {
            let c = c.min(n);
            let hits = prefix_hits[c] as f64;
            if c > 0 {
                precision[j] += hits / c as f64;
            }
            if !truth.is_empty() {
                recall[j] += hits / truth.len() as f64;
            }
        }
    }
    Ok(cuts
        .iter()
        .enumerate()
        .map(|(j, &c)| PrPoint {
            returned: c,
            recall: recall[j] / nq,
            precision: precision[j] / nq,
        })
        .collect())
}

/// `count` cut points spread geometrically over `1..=n`.
pub fn default_cuts(n: usize, count: usize) -> Vec<usize> {
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let mut cuts: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            ((n as f64).powf(t).round() as usize).clamp(1, n)
        })
        .collect();
    cuts.dedup();
    cuts
}

/// Hamming rankings of the database for every query under `model`.
pub fn hamming_rankings(model: &HashModel, task: &RetrievalTask) -> Result<Vec<Vec<usize>>> {
    let db = model.hash(&task.database)?;
    let qs = model.hash(&task.queries)?;
    (0..qs.len()).map(|i| hamming_rank(qs.code(i), &db)).collect()
}

pub fn retrieval_map(model: &HashModel, task: &RetrievalTask) -> Result<f64> {
    map_score(&hamming_rankings(model, task)?, &task.truth)
}
