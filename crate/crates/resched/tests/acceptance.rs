//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `RESCHED_ACCEPTANCE=1,4,9` runs a subset. Criterion 7 trains a full-size
//! policy for 20k episodes and dominates the runtime.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resched::files::{list_dir, read_instance};
use resched::parallel::{advantages, best_of_k, map_indexed, thread_count};
use resched_core::env::{validate, ConstructionState};
use resched_core::eval::{gap, sample_seeds, solve, solve_greedy, solve_rule, solve_seeded, Policy, ReferenceTable};
use resched_core::graph::encode;
use resched_core::instance::{
    generate_fjsp, generate_jsp, generate_training_instance, parse_fjsp, parse_orlib_jsp, Instance, ProblemKind,
};
use resched_core::nn::{backward, evaluate, forward, GraphBatch, StepObjective};
use resched_core::pdr::Rule;
use resched_core::train::{run_episode, select_checkpoint, TrainConfig, Trainer};
use resched_core::{PolicyParams, PolicyShape, Time};

const JSP_3X3: &str = "3 3\n0 3 2 5 1 4\n2 2 1 4 0 3\n0 3 2 2\n";
const FJSP_3X3: &str = "3 3\n3 2 1 3 2 2 2 1 3 3 5 2 2 4 3 3\n3 1 3 2 1 2 4 1 1 3\n2 2 1 3 2 4 2 1 2 3 2\n";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Minimum makespan over every construction rollout.
fn exhaustive(state: &ConstructionState<'_>, best: &mut Time) {
    if state.is_terminal() {
        *best = (*best).min(state.makespan().unwrap());
        return;
    }
    for c in state.candidates().unwrap() {
        exhaustive(&state.after(&c).unwrap(), best);
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let jsp = parse_orlib_jsp(JSP_3X3).unwrap();
    let fjsp = parse_fjsp(FJSP_3X3).unwrap();
    let mut a = Time::MAX;
    exhaustive(&ConstructionState::reset(&jsp), &mut a);
    let mut b = Time::MAX;
    exhaustive(&ConstructionState::reset(&fjsp), &mut b);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        a == 12 && b == 9 && secs < 10.0,
        format!("JSP minimum {a} (want 12), FJSP minimum {b} (want 9), {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut bound_breaks = 0;
    for i in 0..1000 {
        let n = rng.gen_range(1..=15);
        let m = rng.gen_range(1..=10);
        let inst = if i % 2 == 0 { generate_jsp(n, m, &mut rng) } else { generate_fjsp(n, m, &mut rng) }.unwrap();
        let sol = solve(Policy::Random, &inst, &mut rng);
        if let Err(v) = validate(&sol.records, &inst) {
            violations += v.len();
        }
        let job_bound = (0..inst.n_jobs())
            .map(|j| inst.job(j).iter().map(|op| op.options.iter().map(|o| o.duration).min().unwrap()).sum::<Time>())
            .max()
            .unwrap();
        if sol.makespan < job_bound {
            bound_breaks += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        violations == 0 && bound_breaks == 0 && secs < 120.0,
        format!("{violations} violations, {bound_breaks} lower-bound breaches over 1000 instances, {secs:.1}s"),
    )
}

/// Per-class average gaps of the four rules on Taillard instances.
const PDR_TABLE: [(Rule, [f64; 8]); 4] = [
    (Rule::Mwkr, [0.191, 0.233, 0.218, 0.239, 0.251, 0.168, 0.179, 0.083]),
    (Rule::Mor, [0.205, 0.235, 0.217, 0.228, 0.249, 0.173, 0.176, 0.091]),
    (Rule::Spt, [0.258, 0.328, 0.277, 0.352, 0.344, 0.241, 0.255, 0.144]),
    (Rule::Fifo, [0.239, 0.314, 0.273, 0.311, 0.311, 0.206, 0.239, 0.135]),
];
const TA_CLASSES: [(usize, usize); 8] =
    [(15, 15), (20, 15), (20, 20), (30, 15), (30, 20), (50, 15), (50, 20), (100, 20)];

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let refs = ReferenceTable::parse(&std::fs::read_to_string(data_dir().join("reference.csv")).unwrap()).unwrap();
    let files = list_dir(&data_dir().join("ta")).unwrap();
    let instances: Vec<(String, Instance)> = files
        .iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), read_instance(p, None).unwrap()))
        .collect();
    let threads = thread_count(None);
    let mut gaps: BTreeMap<(usize, usize, Rule), Vec<f64>> = BTreeMap::new();
    let jobs: Vec<(usize, Rule)> = (0..instances.len()).flat_map(|i| Rule::ALL.map(|r| (i, r))).collect();
    let results = map_indexed(jobs.len(), threads, |k| {
        let (i, rule) = jobs[k];
        let sol = solve_rule(rule, &instances[i].1);
        (validate(&sol.records, &instances[i].1).is_ok(), sol.makespan)
    });
    let mut invalid = 0;
    for (&(i, rule), (ok, makespan)) in jobs.iter().zip(results) {
        invalid += usize::from(!ok);
        let (name, inst) = &instances[i];
        let reference = refs.get("ta", name).expect("reference for every TA instance");
        gaps.entry((inst.n_jobs(), inst.n_machines(), rule))
            .or_default()
            .push(gap(f64::from(makespan), reference).unwrap());
    }
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    let mut complete = true;
    for (rule, row) in PDR_TABLE {
        let mut cells = Vec::new();
        for (&(n, m), want) in TA_CLASSES.iter().zip(row) {
            let Some(g) = gaps.get(&(n, m, rule)) else {
                complete = false;
                continue;
            };
            complete &= g.len() == 10;
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            worst = worst.max((mean - want).abs());
            cells.push(format!("{n}x{m} {mean:.3}/{want:.3}"));
        }
        lines.push(format!("{rule}: {}", cells.join(" ")));
    }
    let secs = started.elapsed().as_secs_f64();
    for l in &lines {
        println!("    {l}");
    }
    outcome(
        complete && invalid == 0 && worst <= 0.05 && secs < 300.0,
        format!(
            "{} instances, max |deviation| {worst:.3} (tolerance 0.05), {invalid} invalid, {secs:.1}s",
            instances.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let a = gap(1356.0, 1231.0).unwrap();
    let b = gap(1462.0, 1231.0).unwrap();
    outcome(
        (a - 0.1015).abs() <= 1e-4 && (b - 0.1877).abs() <= 1e-4,
        format!("gap(1356,1231) = {a:.6}, gap(1462,1231) = {b:.6}"),
    )
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = generate_jsp(5, 3, &mut rng).unwrap();
    let mut params = PolicyParams::init(PolicyShape::default(), &mut rng);
    // move epsilons and biases off zero so every parameter kind is exercised
    for v in params.as_mut_slice() {
        *v += rng.gen_range(-0.02..0.02);
    }
    let trace = run_episode(&params, &inst, &mut rng);
    let mut batch = GraphBatch::new();
    let mut objectives = Vec::new();
    for step in trace.steps.iter().filter(|s| s.candidates.len() > 1) {
        batch.push(&step.graph);
        objectives.push(StepObjective {
            action: step.action,
            log_prob_weight: rng.gen_range(-1.0..1.0),
            entropy_weight: 0.01,
        });
    }
    let value = |p: &PolicyParams| -> f64 {
        let t = evaluate(p, &batch).unwrap();
        objectives
            .iter()
            .enumerate()
            .map(|(g, o)| o.log_prob_weight * t.log_probs(g)[o.action] + o.entropy_weight * t.entropy(g))
            .sum()
    };
    let fwd = forward(&params, &batch).unwrap();
    let mut grad = params.zeroed_like();
    backward(&params, &batch, &fwd, &objectives, &mut grad).unwrap();
    // A step only counts when both one-sided differences agree, i.e. no ReLU
    // changes sign inside [x - h, x + h] (a kink there biases the central
    // difference by up to half their gap); otherwise retry with a smaller step.
    let steps = [1e-5, 1e-6, 1e-7];
    let mut worst = 0.0f64;
    let mut shrunk = 0;
    let probes = 150;
    for _ in 0..probes {
        let i = rng.gen_range(0..params.len());
        let keep = params.as_slice()[i];
        let centre = value(&params);
        let mut err = f64::INFINITY;
        for (k, &h) in steps.iter().enumerate() {
            params.as_mut_slice()[i] = keep + h;
            let up = value(&params);
            params.as_mut_slice()[i] = keep - h;
            let down = value(&params);
            params.as_mut_slice()[i] = keep;
            let (fwd, bwd) = ((up - centre) / h, (centre - down) / h);
            if (fwd - bwd).abs() > 1e-4 * fwd.abs().max(bwd.abs()).max(1e-6) {
                continue;
            }
            let fd = (up - down) / (2.0 * h);
            err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            shrunk += usize::from(k > 0);
            break;
        }
        worst = worst.max(err);
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!(
            "{probes} probes over {} parameters ({shrunk} needed a smaller step), max relative error {worst:.2e}, {secs:.1}s",
            params.len()
        ),
    )
}

/// Copy of `inst` with jobs and machines renamed by the two permutations.
fn relabel(inst: &Instance, job_perm: &[usize], machine_perm: &[usize]) -> Instance {
    let mut jobs = vec![Vec::new(); inst.n_jobs()];
    for (j, ops) in inst.jobs().iter().enumerate() {
        jobs[job_perm[j]] = ops
            .iter()
            .map(|op| op.options.iter().map(|o| (machine_perm[o.machine], o.duration)).collect::<Vec<_>>())
            .collect::<Vec<_>>();
    }
    Instance::new(inst.n_machines(), jobs).unwrap()
}

fn shuffled<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shape = PolicyShape { hidden: 64, ..PolicyShape::default() };
    let mut mismatched = 0;
    let mut steps = 0;
    for i in 0..100 {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(2..=6);
        let inst = if i % 2 == 0 { generate_jsp(n, m, &mut rng) } else { generate_fjsp(n, m, &mut rng) }.unwrap();
        let params = PolicyParams::init(shape, &mut rng);
        let jp = shuffled(n, &mut rng);
        let mp = shuffled(m, &mut rng);
        let twin = relabel(&inst, &jp, &mp);
        // follow the original greedy rollout and compare each choice
        let mut a = ConstructionState::reset(&inst);
        let mut b = ConstructionState::reset(&twin);
        while !a.is_terminal() {
            let ca = a.candidates().unwrap();
            let cb = b.candidates().unwrap();
            let pick = |s: &ConstructionState<'_>, c: &[resched_core::Candidate]| {
                if c.len() == 1 {
                    0
                } else {
                    evaluate(&params, &GraphBatch::single(&encode(s).unwrap())).unwrap().argmax(0)
                }
            };
            let x = ca[pick(&a, &ca)];
            let y = cb[pick(&b, &cb)];
            steps += 1;
            if (jp[x.job], mp[x.machine], x.op) != (y.job, y.machine, y.op) {
                mismatched += 1;
                break;
            }
            a.step(&x).unwrap();
            b.step(&y).unwrap();
        }
    }
    let mut graph_diffs = 0;
    for i in 0..100 {
        let inst = if i % 2 == 0 { generate_jsp(6, 4, &mut rng) } else { generate_fjsp(6, 4, &mut rng) }.unwrap();
        let mut s = ConstructionState::reset(&inst);
        for _ in 0..rng.gen_range(1..inst.n_ops()) {
            let c = s.candidates().unwrap();
            s.step(&c[rng.gen_range(0..c.len())]).unwrap();
        }
        let desc = s.residual_view();
        let fresh = desc.to_instance().unwrap();
        let twin = desc.to_state(&fresh);
        let (g, h) = (encode(&s).unwrap(), encode(&twin).unwrap());
        let same = g.ops.iter().map(|o| o.features).eq(h.ops.iter().map(|o| o.features))
            && g.machines == h.machines
            && g.op_edges == h.op_edges
            && g.option_edges == h.option_edges
            && g.candidates == h.candidates;
        graph_diffs += usize::from(!same);
    }
    outcome(
        mismatched == 0 && graph_diffs == 0,
        format!("(a) {mismatched}/100 relabelled rollouts diverged over {steps} greedy steps; (b) {graph_diffs}/100 residual graphs differ"),
    )
}

/// Trained parameters shared by criteria 7 and 8.
struct Trained {
    params: PolicyParams,
}

fn criterion_7() -> (Outcome, Option<Trained>) {
    let started = Instant::now();
    let threads = thread_count(None);
    let config = TrainConfig {
        episodes: 20_000,
        max_jobs: 6,
        max_machines: 6,
        kind: ProblemKind::Jsp,
        seed: 7,
        checkpoint_every: 2000,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let held_out: Vec<Instance> = (0..20).map(|_| generate_jsp(6, 6, &mut rng).unwrap()).collect();
    let validation: Vec<Instance> =
        (0..20).map(|_| generate_training_instance(6, 6, ProblemKind::Jsp, &mut rng).unwrap()).collect();
    let references: Vec<f64> = held_out
        .iter()
        .map(|inst| f64::from(best_of_k(Policy::Random, inst, 10_000, &mut rng, threads).makespan))
        .collect();
    let random_means: Vec<f64> = held_out
        .iter()
        .map(|inst| {
            let seeds = sample_seeds(200, &mut rng);
            seeds.iter().map(|&s| f64::from(solve_seeded(Policy::Random, inst, s).makespan)).sum::<f64>() / 200.0
        })
        .collect();
    let mean_gap = |p: &PolicyParams| -> f64 {
        held_out
            .iter()
            .zip(&references)
            .map(|(inst, &r)| gap(f64::from(solve_greedy(p, inst).makespan), r).unwrap())
            .sum::<f64>()
            / held_out.len() as f64
    };

    let mut trainer = Trainer::new(config).unwrap();
    let untrained = mean_gap(&trainer.params);
    let mut checkpoints = Vec::new();
    let mut skipped = 0;
    while !trainer.is_done() {
        let log = trainer.step_with(|trace, rule| advantages(trace, rule, threads)).unwrap();
        skipped += usize::from(log.skipped);
        if trainer.checkpoint_due() {
            checkpoints.push(trainer.params.clone());
            println!("    episode {} held-out gap {:.4}", trainer.episode(), mean_gap(&trainer.params));
        }
    }
    let chosen = select_checkpoint(&checkpoints, &validation).unwrap();
    let params = checkpoints.swap_remove(chosen);
    let trained = mean_gap(&params);
    let improvement = (untrained - trained) / untrained;
    let beats = held_out
        .iter()
        .zip(&random_means)
        .filter(|(inst, &mean)| f64::from(solve_greedy(&params, inst).makespan) < mean)
        .count();
    let secs = started.elapsed().as_secs_f64();
    let pass = improvement >= 0.2 && beats >= 18;
    (
        outcome(
            pass,
            format!(
                "gap {untrained:.4} -> {trained:.4} (relative improvement {:.1}%, need 20%), beats random mean on {beats}/20 (need 18), checkpoint {} of {}, {skipped} skipped updates, {:.0} min",
                improvement * 100.0,
                chosen + 1,
                checkpoints.len() + 1,
                secs / 60.0
            ),
        ),
        Some(Trained { params }),
    )
}

fn criterion_8(trained: Option<&Trained>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fallback;
    let (params, which) = match trained {
        Some(t) => (&t.params, "trained"),
        None => {
            fallback = PolicyParams::init(PolicyShape::default(), &mut rng);
            (&fallback, "untrained")
        }
    };
    let instances: Vec<Instance> = (0..20).map(|_| generate_jsp(6, 6, &mut rng).unwrap()).collect();
    let threads = thread_count(None);
    let mut sums = [0.0f64; 3];
    let mut nested = true;
    for inst in &instances {
        let seeds = sample_seeds(100, &mut rng);
        let spans = map_indexed(100, threads, |i| solve_seeded(Policy::Sample(params), inst, seeds[i]).makespan);
        let best = |k: usize| *spans[..k].iter().min().unwrap();
        let (b1, b10, b100) = (best(1), best(10), best(100));
        nested &= b100 <= b10 && b10 <= b1;
        sums[0] += f64::from(b1);
        sums[1] += f64::from(b10);
        sums[2] += f64::from(b100);
    }
    let means = sums.map(|s| s / instances.len() as f64);
    outcome(
        nested && means[2] <= means[1] && means[1] <= means[0],
        format!(
            "{which} policy, mean best-of-1 {:.2}, best-of-10 {:.2}, best-of-100 {:.2}",
            means[0], means[1], means[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    let config = TrainConfig { episodes: 5, max_jobs: 6, max_machines: 6, seed: 9, ..TrainConfig::default() };
    let run = |threads: usize| {
        let mut t = Trainer::new(config.clone()).unwrap();
        let mut logs = Vec::new();
        while !t.is_done() {
            logs.push(t.step_with(|trace, rule| advantages(trace, rule, threads)).unwrap().csv());
        }
        (logs, t.params)
    };
    let (la, pa) = run(1);
    let (lb, pb) = run(1);
    let (lc, _) = run(2);
    let logs_same = la == lb && pa == pb && la == lc;

    let gen = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..20)
            .map(|i| if i % 2 == 0 { generate_jsp(8, 5, &mut rng) } else { generate_fjsp(8, 5, &mut rng) }.unwrap())
            .collect::<Vec<_>>()
    };
    let instances_same = gen() == gen();

    let inst = generate_jsp(8, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let params = PolicyParams::init(PolicyShape::default(), &mut ChaCha8Rng::seed_from_u64(4));
    let sample =
        |threads: usize| best_of_k(Policy::Sample(&params), &inst, 16, &mut ChaCha8Rng::seed_from_u64(5), threads);
    let a = sample(1);
    let samples_same = a == sample(1) && a == sample(2);
    outcome(
        logs_same && instances_same && samples_same,
        format!("training logs identical: {logs_same}, instances identical: {instances_same}, sampled schedules identical: {samples_same}"),
    )
}

fn main() {
    // the test harness passes its own flags; only the filter variable is read
    let selected: Option<Vec<u32>> =
        std::env::var("RESCHED_ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: u32| selected.as_ref().is_none_or(|s| s.contains(&k));
    let mut failures = 0;
    let mut report = |k: u32, o: Outcome| {
        println!("criterion {k}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    };
    let plain: [(u32, fn() -> Outcome); 6] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6)];
    for (k, f) in plain {
        if wanted(k) {
            report(k, f());
        }
    }
    let mut trained = None;
    if wanted(7) {
        let (o, t) = criterion_7();
        report(7, o);
        trained = t;
    }
    if wanted(8) {
        report(8, criterion_8(trained.as_ref()));
    }
    if wanted(9) {
        report(9, criterion_9());
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
