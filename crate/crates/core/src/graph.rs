//! Residual heterogeneous graph of a construction state.
//!
//! Operation nodes exist only for operations that are not completed. Machine
//! nodes exist for every machine. Relations:
//! * `O -> O`: every ordered pair of surviving operations of the same job;
//! * `O -> M` / `M -> O`: one edge per legal (operation, machine) option of a
//!   surviving operation. An ongoing operation keeps only the machine running it.
//!
//! Node features (all ratios scaled by the largest duration of the original
//! instance):
//! * operation: one-hot {ongoing, ready, unready}, processing time (mean over
//!   options, remaining time when ongoing), remaining job work over the
//!   original job total;
//! * machine: one-hot {processing, idle}, remaining time of the operation it
//!   runs (0 when idle);
//! * option edge: the duration on that machine (remaining time when ongoing).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::env::{Candidate, ConstructionState, EnvError, OperationStatus};

pub const OP_FEATURES: usize = 5;
pub const MACHINE_FEATURES: usize = 3;
pub const EDGE_FEATURES: usize = 1;

/// `(op_dim, machine_dim, edge_dim)`.
pub const fn feature_dims() -> (usize, usize, usize) {
    (OP_FEATURES, MACHINE_FEATURES, EDGE_FEATURES)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpNode {
    pub job: usize,
    pub index: usize,
    pub features: [f64; OP_FEATURES],
}

/// An `O <-> M` option edge; both directions share the feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionEdge {
    pub op: usize,
    pub machine: usize,
    pub feature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGraph {
    pub ops: Vec<OpNode>,
    pub machines: Vec<[f64; MACHINE_FEATURES]>,
    /// `(source, target)` operation node pairs.
    pub op_edges: Vec<(usize, usize)>,
    pub option_edges: Vec<OptionEdge>,
    /// `(machine node, op node)` for each environment candidate, same order.
    pub candidates: Vec<(usize, usize)>,
}

impl ResidualGraph {
    pub fn n_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    /// Line-oriented dump of nodes, edges and candidates.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, op) in self.ops.iter().enumerate() {
            let _ = write!(out, "op {i} job {} index {}", op.job, op.index);
            for f in op.features {
                let _ = write!(out, " {f}");
            }
            out.push('\n');
        }
        for (l, features) in self.machines.iter().enumerate() {
            let _ = write!(out, "machine {l}");
            for f in features {
                let _ = write!(out, " {f}");
            }
            out.push('\n');
        }
        for (s, t) in &self.op_edges {
            let _ = writeln!(out, "oo {s} {t}");
        }
        for e in &self.option_edges {
            let _ = writeln!(out, "om {} {} {}", e.op, e.machine, e.feature);
        }
        for (k, (m, o)) in self.candidates.iter().enumerate() {
            let _ = writeln!(out, "candidate {k} {m} {o}");
        }
        out
    }
}

/// Builds the residual graph of a non-terminal state.
pub fn encode(state: &ConstructionState<'_>) -> Result<ResidualGraph, EnvError> {
    let mut candidates = Vec::new();
    state.candidates_into(&mut candidates)?;
    Ok(encode_with(state, &candidates))
}

/// Like [`encode`] with the state's candidate list already at hand.
pub fn encode_with(state: &ConstructionState<'_>, candidates: &[Candidate]) -> ResidualGraph {
    let instance = state.instance();
    let norms = state.normalization();
    let scale = norms.op_time_max;
    let mut ops = Vec::new();
    let mut op_edges = Vec::new();
    let mut option_edges = Vec::new();
    let mut machines = alloc::vec![[0.0, 1.0, 0.0]; instance.n_machines()];
    // node id of the job's next undispatched operation, for candidate lookup
    let mut next_node = alloc::vec![usize::MAX; instance.n_jobs()];

    for (job, specs) in instance.jobs().iter().enumerate() {
        let first = ops.len();
        let mut work_after = 0.0;
        let mut tail = Vec::new();
        // walk backwards to accumulate the job's remaining work
        for spec in specs.iter().rev() {
            let status = state.status(job, spec.index);
            if status == OperationStatus::Completed {
                break;
            }
            let time = match state.remaining(job, spec.index) {
                Some(left) => f64::from(left),
                None => spec.mean_duration(),
            };
            work_after += time;
            tail.push((spec, status, time, work_after));
        }
        for (spec, status, time, work) in tail.into_iter().rev() {
            let node = ops.len();
            let onehot = match status {
                OperationStatus::Ongoing => [1.0, 0.0, 0.0],
                OperationStatus::Ready => [0.0, 1.0, 0.0],
                _ => [0.0, 0.0, 1.0],
            };
            ops.push(OpNode {
                job,
                index: spec.index,
                features: [onehot[0], onehot[1], onehot[2], time / scale, work / norms.job_totals[job]],
            });
            if spec.index == state.next_op(job) {
                next_node[job] = node;
            }
            if status == OperationStatus::Ongoing {
                let rec = state.record_of(job, spec.index).expect("ongoing operations have a record");
                machines[rec.machine] = [1.0, 0.0, time / scale];
                option_edges.push(OptionEdge { op: node, machine: rec.machine, feature: time / scale });
            } else {
                for o in &spec.options {
                    option_edges.push(OptionEdge {
                        op: node,
                        machine: o.machine,
                        feature: f64::from(o.duration) / scale,
                    });
                }
            }
        }
        for a in first..ops.len() {
            for b in first..ops.len() {
                if a != b {
                    op_edges.push((a, b));
                }
            }
        }
    }

    let candidates = candidates.iter().map(|c| (c.machine, next_node[c.job])).collect();
    ResidualGraph { ops, machines, op_edges, option_edges, candidates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::{play, OPTIMAL_ORDER};
    use crate::instance::fixtures::{fjsp_3x3, jsp_3x3};
    use crate::instance::{generate_fjsp, generate_jsp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dims() {
        assert_eq!(feature_dims(), (5, 3, 1));
        assert_eq!(OP_FEATURES, 3 + 1 + 1);
    }

    #[test]
    fn initial_graph_of_3x3() {
        let inst = jsp_3x3();
        let g = encode(&ConstructionState::reset(&inst)).unwrap();
        assert_eq!(g.n_ops(), 8);
        assert_eq!(g.ops[0].features, [0.0, 1.0, 0.0, 3.0 / 5.0, 1.0]);
        assert_eq!(g.ops[1].features, [0.0, 0.0, 1.0, 1.0, 9.0 / 12.0]);
        assert!(g.machines.iter().all(|m| *m == [0.0, 1.0, 0.0]));
        // 3*2 + 3*2 + 2*1 ordered pairs
        assert_eq!(g.op_edges.len(), 14);
        assert_eq!(g.option_edges.len(), 8);
        assert_eq!(g.candidates, [(0, 0), (2, 3), (0, 6)]);
        // M1 neighbours: O11, O23, O31
        let m1: Vec<usize> = g.option_edges.iter().filter(|e| e.machine == 0).map(|e| e.op).collect();
        assert_eq!(m1, [0, 5, 6]);
    }

    #[test]
    fn walkthrough_s3_drops_finished_and_truncates_ongoing() {
        let inst = jsp_3x3();
        let states = play(&inst, &OPTIMAL_ORDER);
        let g = encode(&states[3]).unwrap();
        assert_eq!(g.n_ops(), 6);
        let o22 = g.ops.iter().find(|o| (o.job, o.index) == (1, 1)).unwrap();
        assert_eq!(o22.features[..4], [1.0, 0.0, 0.0, 3.0 / 5.0]);
        assert_eq!(o22.features[4], 6.0 / 9.0);
        assert_eq!(g.machines[1], [1.0, 0.0, 3.0 / 5.0]);
        assert!(g.ops.iter().all(|o| !matches!((o.job, o.index), (0, 0) | (1, 0))));
        let edges_of_o22: Vec<_> =
            g.option_edges.iter().filter(|e| g.ops[e.op].job == 1 && g.ops[e.op].index == 1).collect();
        assert_eq!(edges_of_o22.len(), 1);
        assert_eq!(edges_of_o22[0].feature, 3.0 / 5.0);
        assert_eq!(g.candidates.len(), 2);
        for &(m, o) in &g.candidates {
            assert_eq!(g.ops[o].features[1], 1.0);
            assert_eq!(g.machines[m][1], 1.0);
        }
    }

    #[test]
    fn flexible_features_average_nodes_but_not_edges() {
        let inst = fjsp_3x3();
        let g = encode(&ConstructionState::reset(&inst)).unwrap();
        assert_eq!(g.ops[0].features[3], 2.5 / 5.0);
        let edges: Vec<f64> = g.option_edges.iter().filter(|e| e.op == 0).map(|e| e.feature).collect();
        assert_eq!(edges, [3.0 / 5.0, 2.0 / 5.0]);
        assert_eq!(g.candidates.len(), 5);
    }

    #[test]
    fn terminal_state_has_no_graph() {
        let inst = jsp_3x3();
        let last = play(&inst, &OPTIMAL_ORDER).pop().unwrap();
        assert_eq!(encode(&last), Err(EnvError::Terminal));
    }

    #[test]
    fn residual_twin_encodes_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..200 {
            let inst =
                if trial % 2 == 0 { generate_jsp(6, 4, &mut rng) } else { generate_fjsp(6, 4, &mut rng) }.unwrap();
            let mut s = ConstructionState::reset(&inst);
            for _ in 0..rng.gen_range(0..inst.n_ops()) {
                let c = s.candidates().unwrap();
                s.step(&c[rng.gen_range(0..c.len())]).unwrap();
            }
            let desc = s.residual_view();
            let fresh = desc.to_instance().unwrap();
            let twin = desc.to_state(&fresh);
            let (a, b) = (encode(&s).unwrap(), encode(&twin).unwrap());
            assert_eq!(a.machines, b.machines);
            assert_eq!(a.op_edges, b.op_edges);
            assert_eq!(a.option_edges, b.option_edges);
            assert_eq!(a.candidates, b.candidates);
            let fa: Vec<_> = a.ops.iter().map(|o| o.features).collect();
            let fb: Vec<_> = b.ops.iter().map(|o| o.features).collect();
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn features_are_bounded_and_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let inst = generate_fjsp(5, 5, &mut rng).unwrap();
            let mut s = ConstructionState::reset(&inst);
            while !s.is_terminal() {
                let g = encode(&s).unwrap();
                assert_eq!(g.n_machines(), 5);
                for op in &g.ops {
                    assert_eq!(op.features[..3].iter().sum::<f64>(), 1.0);
                    assert!((0.0..=1.0).contains(&op.features[3]));
                    // an ongoing flexible operation may run longer than its
                    // option mean, so the job ratio can pass 1
                    assert!(op.features[4] > 0.0 && op.features[4] <= 99.0);
                }
                for m in &g.machines {
                    assert_eq!(m[0] + m[1], 1.0);
                    assert!((0.0..=1.0).contains(&m[2]));
                    if m[1] == 1.0 {
                        assert_eq!(m[2], 0.0);
                    }
                }
                assert!(g.option_edges.iter().all(|e| e.feature > 0.0 && e.feature <= 1.0));
                assert!(g.op_edges.iter().all(|&(x, y)| g.ops[x].job == g.ops[y].job && x != y));
                let c = s.candidates().unwrap();
                s.step(&c[rng.gen_range(0..c.len())]).unwrap();
            }
        }
    }

    #[test]
    fn dump_lists_everything() {
        let inst = jsp_3x3();
        let g = encode(&ConstructionState::reset(&inst)).unwrap();
        let text = g.dump();
        assert_eq!(text.lines().filter(|l| l.starts_with("oo ")).count(), 14);
        assert!(text.starts_with("op 0 job 0 index 0 0 1 0 0.6 1\n"));
        assert!(text.contains("candidate 2 0 6\n"));
    }
}
