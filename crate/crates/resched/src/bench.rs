//! Benchmark harness: every method on every instance file of a directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resched_core::env::validate;
use resched_core::eval::{gap, BenchRow, ReferenceTable};

use crate::files::read_instance;
use crate::parallel::map_indexed;
use crate::policy::Solver;

#[derive(Debug, Default)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub warnings: Vec<String>,
    /// Schedules that failed validation.
    pub invalid: usize,
}

pub struct BenchOptions<'a> {
    pub solvers: &'a [Solver],
    pub samples: usize,
    pub seed: u64,
    pub threads: usize,
    pub references: Option<&'a ReferenceTable>,
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

/// Runs every solver on every file. Unreadable files are reported and
/// skipped; rows come out in (file, solver) order.
pub fn run_bench(files: &[PathBuf], options: &BenchOptions<'_>) -> BenchOutcome {
    let mut out = BenchOutcome::default();
    let mut instances = Vec::new();
    for path in files {
        match read_instance(path, None) {
            Ok(inst) => instances.push((stem(path), path.clone(), inst)),
            Err(e) => out.warnings.push(format!("skipping {e}")),
        }
    }
    let per = options.solvers.len();
    let jobs = instances.len() * per;
    let results = map_indexed(jobs, options.threads, |k| {
        let (_, _, inst) = &instances[k / per];
        let solver = &options.solvers[k % per];
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(k as u64);
        let started = Instant::now();
        let sol = solver.solve(inst, options.samples, &mut rng, 1);
        (sol, started.elapsed().as_secs_f64())
    });
    for (k, (sol, seconds)) in results.into_iter().enumerate() {
        let (name, path, inst) = &instances[k / per];
        let solver = &options.solvers[k % per];
        if let Err(violations) = validate(&sol.records, inst) {
            out.invalid += 1;
            out.warnings.push(format!(
                "{}: {} produced {} violations",
                path.display(),
                solver.label(options.samples),
                violations.len()
            ));
        }
        let found = options.references.and_then(|r| r.find(name));
        let benchmark = match found {
            Some((b, _)) => b.to_string(),
            None => path.parent().map(stem).unwrap_or_default(),
        };
        let gap = match found {
            Some((_, reference)) => gap(f64::from(sol.makespan), reference).unwrap_or(f64::NAN),
            None => {
                if k % per == 0 {
                    out.warnings.push(format!("{name}: no reference makespan, gap left empty"));
                }
                f64::NAN
            }
        };
        out.rows.push(BenchRow {
            benchmark,
            instance: name.clone(),
            n: inst.n_jobs(),
            m: inst.n_machines(),
            method: solver.label(options.samples),
            makespan: sol.makespan,
            gap,
            seconds,
        });
    }
    out
}
