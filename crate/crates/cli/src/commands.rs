use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use frosketch::datagen::{hold_out, synth_clustered, synth_lowrank, ClusterConfig, SynthConfig};
use frosketch::distributed::{merge, split_even, worker_seed, worker_sketch};
use frosketch::eval::{default_cuts, hamming_rankings, make_task, map_score, pr_curve, PrPoint, METRIC_TOL};
use frosketch::hashing::default_buffer_rows;
use frosketch::io::{self as fio, Fsk1Reader, MatrixFormat};
use frosketch::linalg::spectral_norm;
use frosketch::{
    lsh_model, DenseMatrix, Error, HashModel, OnlineHasher, Result, SketchState, Sketcher, SketcherKind, TrainConfig,
    WorkerSummary,
};
use serde::Serialize;

use crate::args::*;
use crate::manifest::RunManifest;

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Row source that hands out blocks without holding more than one block of
/// an FSK1 file in memory. CSV input is parsed up front.
enum Rows {
    Fsk1(Fsk1Reader<BufReader<File>>),
    Memory { data: DenseMatrix, pos: usize },
}

impl Rows {
    fn open(path: &Path) -> Result<Self> {
        Ok(match MatrixFormat::from_path(path) {
            MatrixFormat::Fsk1 => Rows::Fsk1(Fsk1Reader::new(BufReader::new(File::open(path)?))?),
            MatrixFormat::Csv => Rows::Memory {
                data: fio::load_matrix(path, MatrixFormat::Csv)?,
                pos: 0,
            },
        })
    }

    fn cols(&self) -> usize {
        match self {
            Rows::Fsk1(r) => r.cols(),
            Rows::Memory { data, .. } => data.cols(),
        }
    }

    fn next_block(&mut self, max_rows: usize) -> Result<Option<DenseMatrix>> {
        match self {
            Rows::Fsk1(r) => r.next_block(max_rows),
            Rows::Memory { data, pos } => {
                if *pos >= data.rows() {
                    return Ok(None);
                }
                let end = (*pos + max_rows).min(data.rows());
                let block = data.slice_rows(*pos, end);
                *pos = end;
                Ok(Some(block))
            }
        }
    }
}

fn load(path: &Path) -> Result<DenseMatrix> {
    fio::load_matrix(path, MatrixFormat::from_path(path))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::new("synth", args);
    let seed = args.seed.seed;
    manifest.seed("data", seed);
    let a = manifest.time("generate", || match args.kind {
        DataKind::Lowrank => synth_lowrank(&SynthConfig {
            n: args.n,
            d: args.d,
            k: args.k,
            gamma: args.gamma,
            seed,
        }),
        DataKind::Clustered => synth_clustered(&ClusterConfig {
            clusters: args.clusters,
            intrinsic_dim: args.intrinsic_dim.unwrap_or(args.d.min(64)),
            center_scale: args.center_scale,
            spread: args.spread,
            noise: args.noise,
            decay: args.decay,
            ..ClusterConfig::new(args.n, args.d, seed)
        }),
    })?;
    manifest.time("write", || fio::save_matrix(&a, &args.out, MatrixFormat::from_path(&args.out)))?;
    manifest.write_for(&args.out)
}

#[derive(Serialize)]
struct SketchReport {
    method: SketchMethod,
    ell: usize,
    m: usize,
    relative_error: Option<f64>,
    time_ms: f64,
}

pub fn sketch(args: &SketchArgs) -> Result<()> {
    let mut manifest = RunManifest::new("sketch", args);
    let mut rows = Rows::open(&args.input)?;
    let d = rows.cols();
    let m = args.m.unwrap_or_else(|| default_buffer_rows(d, args.ell));
    let kind = match args.method {
        SketchMethod::Fd => SketcherKind::Fd,
        SketchMethod::Ffd => SketcherKind::Ffd,
    };
    let seed = args.seed.seed;
    if kind == SketcherKind::Ffd {
        manifest.seed("srht", seed);
    }
    let mut sketcher = Sketcher::new(kind, args.ell, m, d, seed)?;
    while let Some(block) = manifest.time("read", || rows.next_block(m))? {
        manifest.time("sketch", || sketcher.insert(&block))?;
    }
    let b = manifest.time("sketch", || sketcher.finalize())?;
    let time_ms = manifest.timings_ms["sketch"];

    let relative_error = match args.report {
        Report::None => None,
        Report::Exact => Some(manifest.time("report", || exact_error(&args.input, &b, m))?),
    };
    let state = SketchState::from_matrix(b)?;
    manifest.time("write", || fio::save_sketch(&state, &args.out))?;
    let report = SketchReport {
        method: args.method,
        ell: args.ell,
        m,
        relative_error,
        time_ms,
    };
    print_json(&report)?;
    manifest.extra("report", &report);
    manifest.write_for(&args.out)
}

/// Second pass over the input: `‖AᵀA − BᵀB‖₂ / ‖A‖²_F`.
fn exact_error(input: &Path, b: &DenseMatrix, m: usize) -> Result<f64> {
    let mut rows = Rows::open(input)?;
    let mut gram = DenseMatrix::zeros(b.cols(), b.cols());
    let mut fro = 0.0;
    while let Some(block) = rows.next_block(m)? {
        gram = gram.add(&block.gram())?;
        fro += block.frobenius_norm_sq();
    }
    if fro == 0.0 {
        return Ok(0.0);
    }
    Ok(spectral_norm(&gram.sub(&b.gram())?, METRIC_TOL)? / fro)
}

fn train_config(p: &ModelParams, kind: SketcherKind) -> TrainConfig {
    let mut cfg = TrainConfig::new(p.bits).with_sketcher(kind).with_seed(p.seed.seed);
    if let Some(ell) = p.ell {
        cfg = cfg.with_ell(ell);
    }
    if let Some(m) = p.m {
        cfg = cfg.with_buffer_rows(m);
    }
    cfg
}

fn round_path(base: &Path, round: usize) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(format!(".round{round:03}"));
    PathBuf::from(s)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", args);
    let mut rows = Rows::open(&args.input)?;
    let d = rows.cols();
    let seed = args.params.seed.seed;
    let kind = match args.method {
        HashMethod::Lsh => {
            manifest.seed("projection", seed);
            let model = manifest.time("train", || lsh_model(d, args.params.bits, seed))?;
            manifest.timings_ms.insert("sketch".into(), 0.0);
            manifest.extra("passes", 0);
            fio::save_model(&model, &args.model_out)?;
            return manifest.write_for(&args.model_out);
        }
        HashMethod::Osh => SketcherKind::Fd,
        HashMethod::Frosh => SketcherKind::Ffd,
        HashMethod::Dfrosh => return Err(bad("use the dfrosh command for distributed training")),
    };
    let mut cfg = train_config(&args.params, kind);
    if let Some(eta) = args.eta {
        cfg = cfg.with_eta(eta);
    } else {
        cfg = cfg.with_eta(usize::MAX);
    }
    let m = cfg.effective_buffer_rows(d);
    if kind == SketcherKind::Ffd {
        manifest.seed("srht", cfg.seed);
    }
    let mut trainer = OnlineHasher::new(cfg.clone(), d)?;
    let mut emitted = 0;
    while let Some(block) = manifest.time("read", || rows.next_block(m))? {
        if let Some(model) = manifest.time("sketch", || trainer.push_chunk(&block))? {
            emitted += 1;
            fio::save_model(&model, &round_path(&args.model_out, emitted))?;
        }
    }
    let model = manifest.time("train", || trainer.model())?;
    manifest.extra("ell", cfg.ell);
    manifest.extra("m", m);
    manifest.extra("chunks", trainer.chunks_seen());
    manifest.extra("round_models", emitted);
    manifest.extra("passes", 1);
    fio::save_model(&model, &args.model_out)?;
    manifest.write_for(&args.model_out)
}

/// Runs the workers in waves of at most `threads` at a time.
fn run_workers(parts: &[DenseMatrix], cfg: &TrainConfig, threads: usize) -> Result<Vec<WorkerSummary>> {
    let run = |i: usize| worker_sketch(&parts[i], &cfg.clone().with_seed(worker_seed(cfg.seed, i)), i);
    if threads <= 1 {
        return (0..parts.len()).map(run).collect();
    }
    let mut out = Vec::with_capacity(parts.len());
    for wave in (0..parts.len()).collect::<Vec<_>>().chunks(threads) {
        let results: Vec<Result<WorkerSummary>> = thread::scope(|s| {
            let handles: Vec<_> = wave.iter().map(|&i| s.spawn(move || run(i))).collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

fn summary_path(dir: &Path, id: usize) -> PathBuf {
    dir.join(format!("worker-{id:03}.fsk"))
}

pub fn dfrosh(args: &DfroshArgs, threads: usize) -> Result<()> {
    let mut manifest = RunManifest::new("dfrosh", args);
    let a = manifest.time("read", || load(&args.input))?;
    let parts = split_even(&a, args.workers)?;
    let cfg = train_config(&args.params, SketcherKind::Ffd);
    cfg.validate(a.cols())?;
    manifest.seed("master", cfg.seed);
    for i in 0..args.workers {
        manifest.seed(format!("worker_{i}"), worker_seed(cfg.seed, i));
    }
    let summaries = manifest.time("sketch", || run_workers(&parts, &cfg, threads))?;
    let merged = manifest.time("merge", || merge(&summaries, cfg.ell))?;
    let model = manifest.time("train", || merged.model(cfg.bits))?;
    if let Some(dir) = &args.summaries {
        fs::create_dir_all(dir)?;
        for s in &summaries {
            fio::save_summary(s, &summary_path(dir, s.worker_id))?;
        }
    }
    manifest.extra("ell", cfg.ell);
    manifest.extra("m", cfg.effective_buffer_rows(a.cols()));
    fio::save_model(&model, &args.model_out)?;
    manifest.write_for(&args.model_out)
}

pub fn worker(args: &WorkerArgs) -> Result<()> {
    let mut manifest = RunManifest::new("worker", args);
    let a = manifest.time("read", || load(&args.input))?;
    let part = match args.workers {
        Some(w) => {
            if args.worker_id >= w {
                return Err(bad(format!("worker id {} out of range for {w} workers", args.worker_id)));
            }
            split_even(&a, w)?.swap_remove(args.worker_id)
        }
        None => a,
    };
    let cfg = train_config(&args.params, SketcherKind::Ffd);
    let seed = worker_seed(cfg.seed, args.worker_id);
    manifest.seed("master", cfg.seed);
    manifest.seed("worker", seed);
    let summary = manifest.time("sketch", || worker_sketch(&part, &cfg.clone().with_seed(seed), args.worker_id))?;
    fio::save_summary(&summary, &args.out)?;
    manifest.write_for(&args.out)
}

pub fn merge_cmd(args: &MergeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("merge", args);
    let summaries = manifest.time("read", || args.summaries.iter().map(|p| fio::load_summary(p)).collect::<Result<Vec<_>>>())?;
    let ell = summaries[0].sketch.rows();
    let merged = manifest.time("merge", || merge(&summaries, ell))?;
    let model = manifest.time("train", || merged.model(args.bits))?;
    fio::save_model(&model, &args.out)?;
    manifest.write_for(&args.out)
}

#[derive(Serialize)]
struct RoundRecord<'a> {
    round: usize,
    bits: usize,
    method: &'a str,
    map: f64,
    time_ms: f64,
}

#[derive(Serialize)]
struct CurveRecord<'a> {
    method: &'a str,
    bits: usize,
    pr_curve: Vec<PrPoint>,
}

/// Incremental trainer for round-by-round evaluation.
enum RoundTrainer {
    Fixed(HashModel),
    Single { trainer: Option<OnlineHasher>, cfg: TrainConfig },
    Distributed { workers: Vec<Option<OnlineHasher>>, cfg: TrainConfig },
}

impl RoundTrainer {
    fn absorb(&mut self, part: &DenseMatrix) -> Result<HashModel> {
        match self {
            RoundTrainer::Fixed(model) => Ok(model.clone()),
            RoundTrainer::Single { trainer, cfg } => {
                let t = feed(trainer, cfg, part)?;
                t.model()
            }
            RoundTrainer::Distributed { workers, cfg } => {
                let pieces = split_even(part, workers.len())?;
                for (i, (slot, piece)) in workers.iter_mut().zip(&pieces).enumerate() {
                    let wcfg = cfg.clone().with_seed(worker_seed(cfg.seed, i));
                    feed(slot, &wcfg, piece)?;
                }
                let summaries = workers
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w.as_ref().expect("worker fed above").summary(i))
                    .collect::<Result<Vec<_>>>()?;
                merge(&summaries, cfg.ell)?.model(cfg.bits)
            }
        }
    }
}

fn feed<'a>(slot: &'a mut Option<OnlineHasher>, cfg: &TrainConfig, part: &DenseMatrix) -> Result<&'a mut OnlineHasher> {
    let d = part.cols();
    let t = match slot {
        Some(t) => t,
        None => slot.insert(OnlineHasher::new(cfg.clone().with_eta(usize::MAX), d)?),
    };
    for chunk in part.row_chunks(cfg.effective_buffer_rows(d)) {
        t.push_chunk(&chunk)?;
    }
    Ok(t)
}

pub fn eval(args: &EvalArgs, threads: usize) -> Result<()> {
    let mut manifest = RunManifest::new("eval", args);
    let db = manifest.time("read", || load(&args.db))?;
    let (db, queries) = match &args.queries {
        Some(q) => (db, manifest.time("read", || load(q))?),
        None => {
            if !(args.query_fraction > 0.0 && args.query_fraction < 1.0) {
                return Err(bad(format!("query fraction {} must lie in (0, 1)", args.query_fraction)));
            }
            let nq = ((args.query_fraction * db.rows() as f64).ceil() as usize).max(1);
            hold_out(&db, nq)?
        }
    };
    let d = db.cols();
    let task = manifest.time("ground_truth", || make_task(db, queries, args.fraction, threads))?;
    let seed = args.params.seed.seed;

    let (label, mut trainer, rounds) = match (&args.model, args.method) {
        (Some(path), _) => {
            let model = fio::load_model(path)?;
            ("model", RoundTrainer::Fixed(model), 1)
        }
        (None, method) => {
            let method = method.unwrap_or(HashMethod::Frosh);
            if args.rounds == 0 {
                return Err(bad("rounds must be at least 1"));
            }
            let t = match method {
                HashMethod::Lsh => {
                    manifest.seed("projection", seed);
                    RoundTrainer::Fixed(lsh_model(d, args.params.bits, seed)?)
                }
                HashMethod::Osh | HashMethod::Frosh => {
                    let kind = if method == HashMethod::Osh { SketcherKind::Fd } else { SketcherKind::Ffd };
                    let cfg = train_config(&args.params, kind);
                    cfg.validate(d)?;
                    manifest.seed("srht", cfg.seed);
                    RoundTrainer::Single { trainer: None, cfg }
                }
                HashMethod::Dfrosh => {
                    let cfg = train_config(&args.params, SketcherKind::Ffd);
                    cfg.validate(d)?;
                    if args.workers == 0 {
                        return Err(bad("need at least one worker"));
                    }
                    manifest.seed("master", cfg.seed);
                    RoundTrainer::Distributed { workers: vec![None; args.workers], cfg }
                }
            };
            let label = match method {
                HashMethod::Lsh => "lsh",
                HashMethod::Osh => "osh",
                HashMethod::Frosh => "frosh",
                HashMethod::Dfrosh => "dfrosh",
            };
            (label, t, args.rounds)
        }
    };

    let parts = if rounds == 1 { vec![task.database.clone()] } else { split_even(&task.database, rounds)? };
    let mut records = Vec::with_capacity(rounds);
    let mut model = None;
    for (i, part) in parts.iter().enumerate() {
        let start = std::time::Instant::now();
        let m = trainer.absorb(part)?;
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        *manifest.timings_ms.entry("train".into()).or_insert(0.0) += time_ms;
        let map = manifest.time("evaluate", || map_score(&hamming_rankings(&m, &task)?, &task.truth))?;
        records.push(RoundRecord {
            round: i + 1,
            bits: m.bits(),
            method: label,
            map,
            time_ms,
        });
        model = Some(m);
    }
    let model = model.expect("at least one round");
    let rankings = hamming_rankings(&model, &task)?;
    let curve = CurveRecord {
        method: label,
        bits: model.bits(),
        pr_curve: pr_curve(&rankings, &task.truth, &default_cuts(task.database.rows(), args.pr_points))?,
    };

    let mut lines = Vec::new();
    for r in &records {
        lines.push(serde_json::to_string(r)?);
    }
    lines.push(serde_json::to_string(&curve)?);
    let text = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
            manifest.write_for(path)
        }
        None => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
