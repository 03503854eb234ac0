use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use frosketch::rng::{gaussian_matrix, seeded_rng};
use frosketch::SrhtOperator;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Peak bytes allocated on top of what was live when `f` started.
fn peak_extra<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let out = f();
    (out, PEAK.load(Ordering::SeqCst) - base)
}

// single test in this binary so no other test thread allocates during a probe
#[test]
fn blocked_workspace_stays_within_p_plus_q_rows() {
    let (m, q, d) = (1024, 32, 8);
    let f = gaussian_matrix(m, d, &mut seeded_rng(4));
    let op = SrhtOperator::new(m, q, 17).unwrap();
    let p = op.block_rows();
    assert_eq!(p, 32);

    let (blocked, blocked_bytes) = peak_extra(|| op.apply_blocked_with_stats(f.row_iter(), d).unwrap());
    let (direct, direct_bytes) = peak_extra(|| op.apply(&f).unwrap());
    let (c, stats) = blocked;

    let worst = c
        .as_slice()
        .iter()
        .zip(direct.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "blocked and direct differ by {worst}");

    assert!(stats.peak_rows <= p + q, "{} rows held", stats.peak_rows);
    // row buffers plus one (block, row) index pair per sampled row
    let row_bytes = d * std::mem::size_of::<f64>();
    let bound = (p + q) * row_bytes + q * 2 * std::mem::size_of::<usize>();
    assert!(blocked_bytes <= bound, "blocked route allocated {blocked_bytes} bytes, bound {bound}");
    // the probe can tell the routes apart: the direct one copies all m rows
    assert!(direct_bytes >= m * row_bytes, "direct route allocated only {direct_bytes} bytes");
}
