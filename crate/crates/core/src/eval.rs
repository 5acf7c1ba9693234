//! Inference, makespan gaps and benchmark report rows.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{Candidate, ConstructionState, DispatchRecord};
use crate::graph::encode_with;
use crate::instance::Instance;
use crate::nn::{evaluate, GraphBatch, PolicyParams};
use crate::pdr::Rule;
use crate::Time;

/// A complete schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub records: Vec<DispatchRecord>,
    pub makespan: Time,
}

impl Solution {
    fn of(state: &ConstructionState<'_>) -> Self {
        Self { records: state.records().to_vec(), makespan: state.makespan().expect("finished episode") }
    }
}

/// How a schedule gets built.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'p> {
    Rule(Rule),
    Greedy(&'p PolicyParams),
    Sample(&'p PolicyParams),
    Random,
}

/// Probabilities of the policy over `candidates`.
pub fn policy_probabilities(
    params: &PolicyParams,
    state: &ConstructionState<'_>,
    candidates: &[Candidate],
) -> Vec<f64> {
    if candidates.len() == 1 {
        return alloc::vec![1.0];
    }
    let graph = encode_with(state, candidates);
    let trace = evaluate(params, &GraphBatch::single(&graph)).expect("candidates present");
    trace.probabilities(0)
}

/// Index drawn from `probs` with one uniform draw.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn greedy_pick(params: &PolicyParams, state: &ConstructionState<'_>, candidates: &[Candidate]) -> usize {
    if candidates.len() == 1 {
        return 0;
    }
    let graph = encode_with(state, candidates);
    evaluate(params, &GraphBatch::single(&graph)).expect("candidates present").argmax(0)
}

/// Builds one schedule. `rng` is only drawn from by the sampling policies.
pub fn solve<R: Rng + ?Sized>(policy: Policy<'_>, instance: &Instance, rng: &mut R) -> Solution {
    let mut state = ConstructionState::reset(instance);
    match policy {
        Policy::Rule(rule) => state.run_to_end(|s, c| rule.pick(s, c)),
        Policy::Greedy(params) => state.run_to_end(|s, c| greedy_pick(params, s, c)),
        Policy::Sample(params) => {
            state.run_to_end(
                |s, c| {
                    if c.len() == 1 {
                        0
                    } else {
                        sample_index(&policy_probabilities(params, s, c), rng)
                    }
                },
            )
        }
        Policy::Random => state.run_to_end(|_, c| rng.gen_range(0..c.len())),
    }
    Solution::of(&state)
}

pub fn solve_greedy(params: &PolicyParams, instance: &Instance) -> Solution {
    solve(Policy::Greedy(params), instance, &mut rand::rngs::mock::StepRng::new(0, 0))
}

pub fn solve_rule(rule: Rule, instance: &Instance) -> Solution {
    solve(Policy::Rule(rule), instance, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// One seed per sample, drawn up front so that sample `i` does not depend on
/// how samples are spread over threads.
pub fn sample_seeds<R: RngCore + ?Sized>(k: usize, rng: &mut R) -> Vec<u64> {
    (0..k).map(|_| rng.next_u64()).collect()
}

/// Sample number `i` of a best-of-k run.
pub fn solve_seeded(policy: Policy<'_>, instance: &Instance, seed: u64) -> Solution {
    solve(policy, instance, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Best (first on ties) of `solutions`.
pub fn best_of(solutions: impl IntoIterator<Item = Solution>) -> Option<Solution> {
    solutions.into_iter().fold(None, |best: Option<Solution>, s| match best {
        Some(b) if b.makespan <= s.makespan => Some(b),
        _ => Some(s),
    })
}

/// Best of `k` softmax samples, single-threaded.
pub fn solve_sample_k<R: RngCore + ?Sized>(
    params: &PolicyParams,
    instance: &Instance,
    k: usize,
    rng: &mut R,
) -> Solution {
    assert!(k >= 1, "k must be positive");
    let seeds = sample_seeds(k, rng);
    best_of(seeds.iter().map(|&s| solve_seeded(Policy::Sample(params), instance, s))).expect("k >= 1")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("reference makespan must be positive, got {0}")]
    BadReference(f64),
    #[error("reference table line {line}: {message}")]
    ReferenceSyntax { line: usize, message: String },
}

/// Relative gap of `makespan` over `reference`.
pub fn gap(makespan: f64, reference: f64) -> Result<f64, EvalError> {
    if reference <= 0.0 || reference.is_nan() {
        return Err(EvalError::BadReference(reference));
    }
    Ok((makespan - reference) / reference)
}

/// `(benchmark, instance) -> reference makespan`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceTable {
    entries: BTreeMap<(String, String), f64>,
}

impl ReferenceTable {
    /// Parses `benchmark,instance,makespan` rows; a header row and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("benchmark,")) {
                continue;
            }
            let err = |message: &str| EvalError::ReferenceSyntax { line: i + 1, message: message.into() };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected 3 fields"));
            }
            let value: f64 = fields[2].parse().map_err(|_| err("makespan is not a number"))?;
            if value.is_nan() || value <= 0.0 {
                return Err(err("makespan must be positive"));
            }
            entries.insert((fields[0].to_string(), fields[1].to_ascii_lowercase()), value);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, benchmark: &str, instance: &str) -> Option<f64> {
        self.entries.get(&(benchmark.to_string(), instance.to_ascii_lowercase())).copied()
    }

    /// Looks `instance` up in any benchmark.
    pub fn find(&self, instance: &str) -> Option<(&str, f64)> {
        let name = instance.to_ascii_lowercase();
        self.entries.iter().find(|((_, i), _)| *i == name).map(|((b, _), v)| (b.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const REPORT_HEADER: &str = "benchmark,instance,n,m,method,makespan,gap,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub benchmark: String,
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub makespan: Time,
    /// NaN when there is no reference.
    pub gap: f64,
    pub seconds: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        let gap = if self.gap.is_nan() { String::from("NaN") } else { alloc::format!("{:.6}", self.gap) };
        alloc::format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.benchmark,
            self.instance,
            self.n,
            self.m,
            self.method,
            self.makespan,
            gap,
            self.seconds
        )
    }
}

/// Mean gap of one method on one `n x m` class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub benchmark: String,
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub mean_gap: f64,
    pub instances: usize,
    /// Rows left out for lack of a reference.
    pub missing: usize,
}

/// Per-class means of per-instance gaps, in first-seen order.
pub fn summarize(rows: &[BenchRow]) -> Vec<ClassSummary> {
    let mut out: Vec<ClassSummary> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for row in rows {
        let k = match out
            .iter()
            .position(|c| c.benchmark == row.benchmark && c.n == row.n && c.m == row.m && c.method == row.method)
        {
            Some(k) => k,
            None => {
                out.push(ClassSummary {
                    benchmark: row.benchmark.clone(),
                    n: row.n,
                    m: row.m,
                    method: row.method.clone(),
                    mean_gap: f64::NAN,
                    instances: 0,
                    missing: 0,
                });
                sums.push(0.0);
                out.len() - 1
            }
        };
        if row.gap.is_nan() {
            out[k].missing += 1;
        } else {
            out[k].instances += 1;
            sums[k] += row.gap;
        }
    }
    for (c, s) in out.iter_mut().zip(sums) {
        if c.instances > 0 {
            c.mean_gap = s / c.instances as f64;
        }
    }
    out
}

/// Report CSV with a header, one line per row.
pub fn report_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.csv());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::validate;
    use crate::instance::fixtures::{fjsp_3x3, jsp_3x3, single_op};
    use crate::instance::generate_jsp;
    use crate::nn::PolicyShape;

    const SMALL: PolicyShape = PolicyShape { hidden: 8, layers: 1, mlp_hidden_layers: 1 };

    #[test]
    fn gap_values() {
        assert!((gap(1356.0, 1231.0).unwrap() - 0.101544).abs() < 1e-6);
        assert!((gap(1462.0, 1231.0).unwrap() - 0.187652).abs() < 1e-6);
        assert_eq!(gap(7.0, 7.0).unwrap(), 0.0);
        assert!(gap(1.0, 0.0).is_err());
        assert!(gap(1.0, -3.0).is_err());
        assert!(gap(5.0, 4.0).unwrap() < gap(6.0, 4.0).unwrap());
    }

    #[test]
    fn zero_policy_walks_the_first_candidate() {
        let inst = jsp_3x3();
        let p = PolicyParams::zeros(SMALL);
        let greedy = solve_greedy(&p, &inst);
        let mut s = ConstructionState::reset(&inst);
        s.run_to_end(|_, _| 0);
        assert_eq!(greedy.records, s.records());
        assert!(greedy.makespan >= 12);
        assert_eq!(solve_greedy(&p, &single_op(4)).makespan, 4);
    }

    #[test]
    fn every_solver_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyParams::init(SMALL, &mut rng);
        for inst in [jsp_3x3(), fjsp_3x3(), generate_jsp(6, 4, &mut rng).unwrap()] {
            for policy in [Policy::Rule(Rule::Spt), Policy::Greedy(&p), Policy::Sample(&p), Policy::Random] {
                let sol = solve(policy, &inst, &mut rng);
                assert_eq!(validate(&sol.records, &inst), Ok(()));
            }
        }
    }

    #[test]
    fn best_of_k_is_nested_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = generate_jsp(5, 4, &mut rng).unwrap();
        let p = PolicyParams::init(SMALL, &mut rng);
        let a = solve_sample_k(&p, &inst, 20, &mut ChaCha8Rng::seed_from_u64(7));
        let b = solve_sample_k(&p, &inst, 20, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let small = solve_sample_k(&p, &inst, 5, &mut ChaCha8Rng::seed_from_u64(7));
        assert!(a.makespan <= small.makespan);
        let seeds = sample_seeds(20, &mut ChaCha8Rng::seed_from_u64(7));
        for s in seeds {
            assert!(a.makespan <= solve_seeded(Policy::Sample(&p), &inst, s).makespan);
        }
    }

    #[test]
    fn sampling_follows_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs = [0.2, 0.5, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..30000 {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 30000.0 - p).abs() < 0.015);
        }
    }

    #[test]
    fn reference_table() {
        let t = ReferenceTable::parse("benchmark,instance,makespan\nta,ta01,1231\n# note\nmk,MK01,40\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("ta", "TA01"), Some(1231.0));
        assert_eq!(t.find("mk01"), Some(("mk", 40.0)));
        assert!(t.get("ta", "ta02").is_none());
        assert!(matches!(ReferenceTable::parse("ta,ta01,0"), Err(EvalError::ReferenceSyntax { line: 1, .. })));
        assert!(ReferenceTable::parse("ta,ta01").is_err());
    }

    #[test]
    fn summaries_skip_missing_references() {
        let row = |inst: &str, gap: f64| BenchRow {
            benchmark: "ta".into(),
            instance: inst.into(),
            n: 15,
            m: 15,
            method: "mwkr".into(),
            makespan: 100,
            gap,
            seconds: 0.0,
        };
        let rows = [row("a", 0.1), row("b", 0.3), row("c", f64::NAN)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean_gap - 0.2).abs() < 1e-12);
        assert_eq!((s[0].instances, s[0].missing), (2, 1));
        let csv = report_csv(&rows);
        assert!(csv.starts_with(REPORT_HEADER));
        assert!(csv.contains("ta,c,15,15,mwkr,100,NaN,0.000"));
        assert!(csv.contains("ta,a,15,15,mwkr,100,0.100000,0.000"));
        assert!(summarize(&[]).is_empty());
    }
}
