//! Random instances following Taillard's procedure: every job visits each
//! machine once in a uniformly random order, durations uniform on 1..=99.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Instance, InstanceError, ProblemKind};
use crate::Time;

pub const MAX_DURATION: Time = 99;

fn draw_jobs<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Vec<Vec<(usize, Time)>> {
    let mut order: Vec<usize> = (0..m).collect();
    (0..n)
        .map(|_| {
            let durations: Vec<Time> = (0..m).map(|_| rng.gen_range(1..=MAX_DURATION)).collect();
            order.shuffle(rng);
            order.iter().copied().zip(durations).collect()
        })
        .collect()
}

/// Taillard-style `n x m` JSP instance.
pub fn generate_jsp<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Instance, InstanceError> {
    if n == 0 || m == 0 {
        return Err(InstanceError::Generator("job and machine counts must be positive"));
    }
    Instance::jsp(m, draw_jobs(n, m, rng))
}

/// Flexible variant: the Taillard body, after which each operation gets
/// `q ~ U(1, m)` eligible machines. Its Taillard machine (and duration) is one
/// of them; the other `q - 1` are distinct machines with fresh U(1, 99)
/// durations.
pub fn generate_fjsp<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Instance, InstanceError> {
    if n == 0 || m == 0 {
        return Err(InstanceError::Generator("job and machine counts must be positive"));
    }
    let mut others: Vec<usize> = Vec::with_capacity(m);
    let jobs = draw_jobs(n, m, rng)
        .into_iter()
        .map(|ops| {
            ops.into_iter()
                .map(|(machine, duration)| {
                    let q = rng.gen_range(1..=m);
                    others.clear();
                    others.extend((0..m).filter(|&l| l != machine));
                    others.shuffle(rng);
                    let mut options = alloc::vec![(machine, duration)];
                    for &extra in &others[..q - 1] {
                        options.push((extra, rng.gen_range(1..=MAX_DURATION)));
                    }
                    options.sort_unstable_by_key(|&(l, _)| l);
                    options
                })
                .collect()
        })
        .collect();
    Instance::new(m, jobs)
}

/// Training distribution: `n ~ U(3, max_jobs)`, `m ~ U(3, min(n, max_machines))`,
/// `k_j = m`.
pub fn generate_training_instance<R: Rng + ?Sized>(
    max_jobs: usize,
    max_machines: usize,
    kind: ProblemKind,
    rng: &mut R,
) -> Result<Instance, InstanceError> {
    if max_jobs < 3 || max_machines < 3 {
        return Err(InstanceError::Generator("training sizes must be at least 3x3"));
    }
    let n = rng.gen_range(3..=max_jobs);
    let m = rng.gen_range(3..=n.min(max_machines));
    match kind {
        ProblemKind::Jsp => generate_jsp(n, m, rng),
        ProblemKind::Fjsp => generate_fjsp(n, m, rng),
    }
}
