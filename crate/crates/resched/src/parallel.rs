//! Scoped-thread helpers. Results never depend on the thread count: work is
//! split by item and every random stream is seeded per item.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::RngCore;
use resched_core::eval::{best_of, sample_seeds, solve_seeded, Policy, Solution};
use resched_core::instance::Instance;
use resched_core::pdr::Rule;
use resched_core::train::{normalized_advantage, EpisodeTrace};

pub const THREADS_ENV: &str = "RESCHED_THREADS";

/// `--threads`, then `RESCHED_THREADS`, then the number of cores.
pub fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f` over `0..n` on up to `threads` workers, results in index order.
pub fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                slots.lock().expect("worker panicked")[i] = Some(value);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|v| v.expect("every index ran")).collect()
}

/// Best of `k` seeded runs of `policy`; identical for any thread count.
pub fn best_of_k<R: RngCore + ?Sized>(
    policy: Policy<'_>,
    instance: &Instance,
    k: usize,
    rng: &mut R,
    threads: usize,
) -> Solution {
    let seeds = sample_seeds(k.max(1), rng);
    best_of(map_indexed(seeds.len(), threads, |i| solve_seeded(policy, instance, seeds[i]))).expect("k >= 1")
}

/// Per-step advantages with baseline rollouts spread over workers.
pub fn advantages(trace: &EpisodeTrace<'_>, rule: Rule, threads: usize) -> Vec<f64> {
    map_indexed(trace.steps.len(), threads, |t| normalized_advantage(t, trace, rule))
}
