//! End-to-end acceptance checks. Runs sequentially (timing comparisons share
//! the machine with nothing else) and prints one line per criterion.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use frosketch::datagen::{hold_out, synth_clustered, synth_lowrank, ClusterConfig, SynthConfig};
use frosketch::distributed::{sketch_distributed, split_even, Schedule};
use frosketch::eval::{make_task, retrieval_map};
use frosketch::rng::{gaussian_matrix, seeded_rng};
use frosketch::{
    lsh_model, train_distributed, train_stream, CenteringState, DenseMatrix, FfdSketcher, HashModel, OnlineHasher,
    SketchState, SketcherKind, SrhtOperator, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

/// Largest absolute eigenvalue of a symmetric matrix, by dense
/// eigendecomposition.
fn sym_norm(m: &DenseMatrix) -> f64 {
    let (r, c) = m.shape();
    let dm = nalgebra::DMatrix::from_row_slice(r, c, m.as_slice());
    nalgebra::SymmetricEigen::new(dm).eigenvalues.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

fn gram_error(gram: &DenseMatrix, b: &DenseMatrix) -> f64 {
    sym_norm(&gram.sub(&b.gram()).unwrap())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fd_sketch(a: &DenseMatrix, ell: usize) -> DenseMatrix {
    let mut s = SketchState::new(ell, a.cols()).unwrap();
    s.insert(a).unwrap();
    s.into_matrix()
}

fn ffd_sketch(a: &DenseMatrix, ell: usize, m: usize, seed: u64) -> DenseMatrix {
    let mut s = FfdSketcher::new(ell, m, a.cols(), seed).unwrap();
    s.insert(a).unwrap();
    s.finalize().unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fd_bound() -> Outcome {
    let mut rng = seeded_rng(1001);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..50 {
        let ell = [4, 8, 16][rng.gen_range(0..3)];
        let n = rng.gen_range(1..=500);
        let d = rng.gen_range(1..=64);
        let scales: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let g = gaussian_matrix(n, d, &mut rng);
        let a = DenseMatrix::from_fn(n, d, |i, j| g.get(i, j) * scales[j]).unwrap();
        let b = fd_sketch(&a, ell);
        let err = gram_error(&a.gram(), &b);
        let bound = 2.0 / ell as f64 * a.frobenius_norm_sq();
        worst = worst.max(err / bound);
        if err > bound {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} violations, worst error/bound = {worst:.3}"))
}

fn blocked_srht() -> Outcome {
    let mut worst: f64 = 0.0;
    for (m, q, d) in [(8, 4, 3), (16, 16, 2), (64, 8, 5), (256, 32, 8)] {
        for seed in 0..20u64 {
            let op = SrhtOperator::new(m, q, seed).unwrap();
            let f = gaussian_matrix(m, d, &mut seeded_rng(seed + 500));
            let direct = op.apply(&f).unwrap();
            let blocked = op.apply_blocked(f.row_iter(), d).unwrap();
            worst = worst.max(direct.sub(&blocked).unwrap().max_abs());
        }
    }
    check(worst <= 1e-10, format!("max |direct - blocked| = {worst:.2e}"))
}

fn srht_expectation() -> Outcome {
    let (m, q, d, trials) = (16, 4, 4, 5000u64);
    let f = gaussian_matrix(m, d, &mut seeded_rng(77));
    let target = f.gram();
    let mut acc = DenseMatrix::zeros(d, d);
    for seed in 0..trials {
        let y = SrhtOperator::new(m, q, seed).unwrap().apply(&f).unwrap();
        acc = acc.add(&y.gram()).unwrap();
    }
    let mean = acc.scale(1.0 / trials as f64);
    let cutoff = 0.1 * target.max_abs();
    let mut worst: f64 = 0.0;
    for (t, e) in target.as_slice().iter().zip(mean.as_slice()) {
        if t.abs() > cutoff {
            worst = worst.max((e - t).abs() / t.abs());
        }
    }
    check(worst <= 0.10, format!("worst relative deviation on large entries = {:.2}%", 100.0 * worst))
}

fn centering_exactness() -> Outcome {
    let mut rng = seeded_rng(404);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=300);
        let d = rng.gen_range(1..=12);
        let offset: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let a = gaussian_matrix(n, d, &mut rng).sub_row_vector(&offset).unwrap();
        let cuts = rng.gen_range(0..n.min(20));
        let mut bounds: Vec<usize> = (1..n).collect();
        bounds.shuffle(&mut rng);
        bounds.truncate(cuts);
        bounds.extend([0, n]);
        bounds.sort_unstable();

        let mut state = CenteringState::new(d);
        let mut gs = Vec::new();
        for w in bounds.windows(2) {
            gs.push(state.center_chunk(&a.slice_rows(w[0], w[1])).unwrap());
        }
        let refs: Vec<&DenseMatrix> = gs.iter().collect();
        let stacked = DenseMatrix::vstack(&refs).unwrap();
        let centered = a.sub_row_vector(&a.row_mean()).unwrap();
        worst = worst.max(stacked.gram().sub(&centered.gram()).unwrap().max_abs());
    }
    check(worst <= 1e-10, format!("max Gram deviation over 100 partitions = {worst:.2e}"))
}

fn ffd_accuracy() -> Outcome {
    let ells = [16, 32, 64];
    let (mut fd_errs, mut ffd_errs) = (vec![Vec::new(); 3], vec![Vec::new(); 3]);
    for seed in 0..10u64 {
        let a = synth_lowrank(&SynthConfig::new(20000, 256, seed)).unwrap();
        let gram = a.gram();
        let fro = a.frobenius_norm_sq();
        for (k, &ell) in ells.iter().enumerate() {
            fd_errs[k].push(gram_error(&gram, &fd_sketch(&a, ell)) / fro);
            ffd_errs[k].push(gram_error(&gram, &ffd_sketch(&a, ell, 1024, seed)) / fro);
        }
    }
    let fd: Vec<f64> = fd_errs.into_iter().map(median).collect();
    let ffd: Vec<f64> = ffd_errs.into_iter().map(median).collect();
    let parity = fd.iter().zip(&ffd).all(|(a, b)| *b <= 1.5 * a);
    let monotone = ffd.windows(2).all(|w| w[1] < w[0]);
    let detail = ells
        .iter()
        .zip(fd.iter().zip(&ffd))
        .map(|(l, (a, b))| format!("l={l}: fd {a:.4} ffd {b:.4} ({:.2}x)", b / a))
        .collect::<Vec<_>>()
        .join(", ");
    check(parity && monotone, format!("{detail}; monotone = {monotone}"))
}

fn ffd_speed() -> Outcome {
    let a = synth_lowrank(&SynthConfig::new(50000, 512, 6)).unwrap();
    let (mut fd_best, mut ffd_best) = (Duration::MAX, Duration::MAX);
    for rep in 0..3u64 {
        let t = Instant::now();
        std::hint::black_box(ffd_sketch(&a, 64, 2048, rep));
        ffd_best = ffd_best.min(t.elapsed());
        let t = Instant::now();
        std::hint::black_box(fd_sketch(&a, 64));
        fd_best = fd_best.min(t.elapsed());
    }
    let ratio = ffd_best.as_secs_f64() / fd_best.as_secs_f64();
    check(
        ratio <= 0.7,
        format!("fd {:.0} ms, ffd {:.0} ms, ratio {ratio:.3}", fd_best.as_secs_f64() * 1e3, ffd_best.as_secs_f64() * 1e3),
    )
}

fn chunk_determinism() -> Outcome {
    let (n, d, ell, m, seed) = (3000, 20, 8, 64, 0xfeed);
    let a = gaussian_matrix(n, d, &mut seeded_rng(9));
    let reference = ffd_sketch(&a, ell, m, seed);
    let mut rng = seeded_rng(10);
    let mut mismatches = 0;
    for _ in 0..10 {
        let mut sk = FfdSketcher::new(ell, m, d, seed).unwrap();
        let mut start = 0;
        while start < n {
            let len = rng.gen_range(1..=(3 * m)).min(n - start);
            sk.insert(&a.slice_rows(start, start + len)).unwrap();
            start += len;
        }
        if sk.finalize().unwrap().as_slice() != reference.as_slice() {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} of 10 partitions differ from the single-call sketch"))
}

fn dfrosh_quality() -> Outcome {
    let (n, d) = (8192, 64);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut counts_ok = true;
    for seed in 0..10u64 {
        let base = synth_lowrank(&SynthConfig::new(n, d, 100 + seed)).unwrap();
        let offset: Vec<f64> = gaussian_matrix(1, d, &mut seeded_rng(200 + seed)).into_vec();
        let a = base.sub_row_vector(&offset).unwrap();
        let mu = a.row_mean();
        let centered = a.sub_row_vector(&mu).unwrap();
        let gram = centered.gram();
        let fro = centered.frobenius_norm_sq();
        let cfg = TrainConfig::new(16).with_ell(32).with_buffer_rows(256).with_seed(seed);
        let mut errs = Vec::new();
        for w in [1, 2, 4, 8] {
            let merged = sketch_distributed(&split_even(&a, w).unwrap(), &cfg, Schedule::Concurrent).unwrap();
            errs.push(gram_error(&gram, &merged.sketch) / fro);
            let scale = mu.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let dev = merged.mean.iter().zip(&mu).fold(0.0f64, |s, (x, y)| s.max((x - y).abs())) / scale;
            worst_mean = worst_mean.max(dev);
            counts_ok &= merged.count == n as u64;
        }
        for e in &errs[1..] {
            worst_ratio = worst_ratio.max(e / errs[0]);
        }
    }
    check(
        worst_ratio <= 2.0 && worst_mean <= 1e-12 && counts_ok,
        format!("worst error ratio vs one worker {worst_ratio:.3}, worst relative mean deviation {worst_mean:.1e}, counts exact = {counts_ok}"),
    )
}

fn final_model(a: &DenseMatrix, cfg: &TrainConfig) -> HashModel {
    let mut t = OnlineHasher::new(cfg.clone(), a.cols()).unwrap();
    for chunk in a.row_chunks(cfg.effective_buffer_rows(a.cols())) {
        t.push_chunk(&chunk).unwrap();
    }
    t.model().unwrap()
}

fn retrieval() -> Outcome {
    let (n, d, nq, bits, seed) = (20000, 256, 200, 32, 2024);
    let data = synth_clustered(&ClusterConfig::new(n + nq, d, seed)).unwrap();
    let (db, queries) = hold_out(&data, nq).unwrap();
    let task = make_task(db.clone(), queries, 0.02, 1).unwrap();
    let cfg = TrainConfig::new(bits).with_seed(seed);

    let lsh = retrieval_map(&lsh_model(d, bits, seed).unwrap(), &task).unwrap();
    let osh = retrieval_map(&final_model(&db, &cfg.clone().with_sketcher(SketcherKind::Fd)), &task).unwrap();
    let frosh = retrieval_map(&final_model(&db, &cfg), &task).unwrap();
    let dfrosh = retrieval_map(&train_distributed(&split_even(&db, 5).unwrap(), &cfg).unwrap(), &task).unwrap();
    check(
        frosh > lsh + 0.05 && (frosh - osh).abs() < 0.03 && (dfrosh - frosh).abs() < 0.03,
        format!("MAP lsh {lsh:.4}, osh {osh:.4}, frosh {frosh:.4}, dfrosh(5) {dfrosh:.4}"),
    )
}

fn model_contracts() -> Outcome {
    let a = gaussian_matrix(600, 24, &mut seeded_rng(5)).sub_row_vector(&[0.7; 24]).unwrap();
    let chunks = a.row_chunks(50);
    let mut models = Vec::new();
    for kind in [SketcherKind::Fd, SketcherKind::Ffd] {
        let cfg = TrainConfig::new(8).with_buffer_rows(64).with_sketcher(kind).with_eta(1).with_seed(3);
        models.extend(train_stream(&chunks, &cfg).unwrap());
        models.push(train_distributed(&split_even(&a, 3).unwrap(), &cfg).unwrap());
    }
    models.push(lsh_model(24, 8, 3).unwrap());
    let worst = models.iter().map(HashModel::orthonormality_error).fold(0.0, f64::max);

    let deterministic = models.iter().all(|m| m.hash(&a).unwrap() == m.clone().hash(&a).unwrap());

    // the center itself projects to zero on every bit
    let all_ones = models[..models.len() - 1].iter().all(|m| {
        let c = m.hash(&DenseMatrix::from_rows(&[m.center()]).unwrap()).unwrap();
        (0..m.bits()).all(|k| c.bit(0, k))
    });
    let axis = HashModel::new(DenseMatrix::identity(3), vec![0.0; 3]).unwrap();
    let c = axis.hash(&DenseMatrix::from_rows(&[[0.0, -1.0, 2.0]]).unwrap()).unwrap();
    let ties = c.bit(0, 0) && !c.bit(0, 1) && c.bit(0, 2);

    check(
        worst <= 1e-8 && deterministic && all_ones && ties,
        format!(
            "{} models, worst |WᵀW - I| = {worst:.1e}, deterministic = {deterministic}, zero maps to 1 = {}",
            models.len(),
            all_ones && ties
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("1 fd error bound", Duration::from_secs(30), fd_bound),
        ("2 blocked srht equals direct", Duration::from_secs(10), blocked_srht),
        ("3 srht gram expectation", Duration::from_secs(60), srht_expectation),
        ("4 online centering exactness", Duration::from_secs(10), centering_exactness),
        ("5 ffd accuracy parity", Duration::from_secs(300), ffd_accuracy),
        ("6 ffd speed ordering", Duration::from_secs(300), ffd_speed),
        ("7 chunk boundary determinism", Duration::from_secs(30), chunk_determinism),
        ("8 distributed quality", Duration::from_secs(180), dfrosh_quality),
        ("9 retrieval pipeline", Duration::from_secs(600), retrieval),
        ("10 hash model contracts", Duration::from_secs(5), model_contracts),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.split(' ').next() == Some(o.as_str())) {
            continue;
        }
        let t = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s budget", budget.as_secs())),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
