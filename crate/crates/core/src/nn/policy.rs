//! HGIN forward pass, candidate scoring and exact backward.
//!
//! Per layer, with `t` the option-edge feature:
//! ```text
//! h'_m = MLP_mm((1 + eps_mm) h_m) + MLP_om(sum_{o ~ m} [h_o | t])
//! h'_o = MLP_oo((1 + eps_oo) h_o + sum_{u same job} h_u) + MLP_mo(sum_{m ~ o} [h_m | t])
//! ```
//! The relation term is skipped for nodes without option edges. A candidate
//! `(m, o)` scores `MLP_score([h_m | h_o])`, and the policy is a softmax over
//! the candidates of each graph.

use alloc::vec::Vec;
use core::ops::Range;

use super::mlp::{self, MlpCache};
use super::{NeuralError, PolicyParams, Relation};
use crate::graph::ResidualGraph;

/// Disjoint union of residual graphs, each with its own candidate group.
#[derive(Debug, Clone, Default)]
pub struct GraphBatch {
    op_features: Vec<f64>,
    machine_features: Vec<f64>,
    op_edges: Vec<(usize, usize)>,
    /// `(op, machine, feature)`.
    option_edges: Vec<(usize, usize, f64)>,
    /// `(machine, op)` in batch node indices.
    candidates: Vec<(usize, usize)>,
    groups: Vec<usize>,
    n_ops: usize,
    n_machines: usize,
}

impl GraphBatch {
    pub fn new() -> Self {
        Self { groups: alloc::vec![0], ..Default::default() }
    }

    pub fn single(graph: &ResidualGraph) -> Self {
        let mut batch = Self::new();
        batch.push(graph);
        batch
    }

    pub fn push(&mut self, g: &ResidualGraph) {
        let (o0, m0) = (self.n_ops, self.n_machines);
        for op in &g.ops {
            self.op_features.extend_from_slice(&op.features);
        }
        for m in &g.machines {
            self.machine_features.extend_from_slice(m);
        }
        self.op_edges.extend(g.op_edges.iter().map(|&(s, t)| (s + o0, t + o0)));
        self.option_edges.extend(g.option_edges.iter().map(|e| (e.op + o0, e.machine + m0, e.feature)));
        self.candidates.extend(g.candidates.iter().map(|&(m, o)| (m + m0, o + o0)));
        self.groups.push(self.candidates.len());
        self.n_ops += g.n_ops();
        self.n_machines += g.n_machines();
    }

    pub fn n_graphs(&self) -> usize {
        self.groups.len() - 1
    }

    pub fn n_ops(&self) -> usize {
        self.n_ops
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn group(&self, g: usize) -> Range<usize> {
        self.groups[g]..self.groups[g + 1]
    }
}

/// Nodes with at least one option edge, and the row each takes in the
/// relation MLP batch.
#[derive(Debug, Clone)]
struct Active {
    nodes: Vec<usize>,
    row: Vec<usize>,
}

impl Active {
    fn new(n: usize, touched: impl Iterator<Item = usize>) -> Self {
        let mut row = alloc::vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for v in touched {
            if row[v] == usize::MAX {
                row[v] = 0;
            }
        }
        for (v, r) in row.iter_mut().enumerate() {
            if *r != usize::MAX {
                *r = nodes.len();
                nodes.push(v);
            }
        }
        Self { nodes, row }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    hm: Vec<f64>,
    ho: Vec<f64>,
    mlps: [MlpCache; 4],
}

/// Scores, probabilities and (optionally) everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    version: u64,
    groups: Vec<usize>,
    scores: Vec<f64>,
    log_probs: Vec<f64>,
    entropies: Vec<f64>,
    n_ops: usize,
    n_machines: usize,
    caches: Option<Caches>,
}

#[derive(Debug, Clone)]
struct Caches {
    layers: Vec<LayerCache>,
    active_m: Active,
    active_o: Active,
    score: MlpCache,
}

impl ForwardTrace {
    pub fn n_groups(&self) -> usize {
        self.groups.len() - 1
    }

    fn range(&self, g: usize) -> Range<usize> {
        self.groups[g]..self.groups[g + 1]
    }

    pub fn scores(&self, g: usize) -> &[f64] {
        &self.scores[self.range(g)]
    }

    pub fn log_probs(&self, g: usize) -> &[f64] {
        &self.log_probs[self.range(g)]
    }

    pub fn probabilities(&self, g: usize) -> Vec<f64> {
        self.log_probs(g).iter().map(|&l| libm::exp(l)).collect()
    }

    pub fn entropy(&self, g: usize) -> f64 {
        self.entropies[g]
    }

    /// Highest-probability candidate, first on ties.
    pub fn argmax(&self, g: usize) -> usize {
        let s = self.scores(g);
        let mut best = 0;
        for (i, &v) in s.iter().enumerate() {
            if v > s[best] {
                best = i;
            }
        }
        best
    }
}

/// Gradient weights for one candidate group: the objective is
/// `log_prob_weight * log p(action) + entropy_weight * H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepObjective {
    pub action: usize,
    pub log_prob_weight: f64,
    pub entropy_weight: f64,
}

fn axpy_row(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Sums `[h_src | t]` over option edges into rows of the active targets.
fn aggregate(
    h_src: &[f64],
    h: usize,
    edges: &[(usize, usize, f64)],
    active: &Active,
    src_of: impl Fn(&(usize, usize, f64)) -> (usize, usize),
) -> Vec<f64> {
    let w = h + 1;
    let mut x = alloc::vec![0.0; active.nodes.len() * w];
    for e in edges {
        let (src, dst) = src_of(e);
        let r = active.row[dst];
        let row = &mut x[r * w..(r + 1) * w];
        axpy_row(&mut row[..h], &h_src[src * h..(src + 1) * h]);
        row[h] += e.2;
    }
    x
}

fn log_softmax(scores: &[f64], out: &mut Vec<f64>) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(scores.iter().map(|&s| libm::exp(s - max)).sum::<f64>());
    let start = out.len();
    out.extend(scores.iter().map(|&s| s - lse));
    -out[start..].iter().map(|&l| libm::exp(l) * l).sum::<f64>()
}

fn run(params: &PolicyParams, batch: &GraphBatch, keep: bool) -> Result<ForwardTrace, NeuralError> {
    if (0..batch.n_graphs()).any(|g| batch.group(g).is_empty()) {
        return Err(NeuralError::NoCandidates);
    }
    let layout = params.layout();
    let p = params.as_slice();
    let h = layout.shape.hidden;
    let (no, nm) = (batch.n_ops, batch.n_machines);

    let active_m = Active::new(nm, batch.option_edges.iter().map(|e| e.1));
    let active_o = Active::new(no, batch.option_edges.iter().map(|e| e.0));

    let mut hm = mlp::encode(p, &layout.machine_encoder, &batch.machine_features, nm);
    let mut ho = mlp::encode(p, &layout.op_encoder, &batch.op_features, no);
    let mut layers = Vec::new();

    for slot in &layout.layers {
        let mm = &slot.mlps[Relation::MachineSelf as usize];
        let oo = &slot.mlps[Relation::OpOp as usize];
        let om = &slot.mlps[Relation::OpToMachine as usize];
        let mo = &slot.mlps[Relation::MachineToOp as usize];
        let e_mm = 1.0 + p[slot.eps[Relation::MachineSelf as usize]];
        let e_oo = 1.0 + p[slot.eps[Relation::OpOp as usize]];

        let mm_in: Vec<f64> = hm.iter().map(|v| e_mm * v).collect();
        let mut oo_in: Vec<f64> = ho.iter().map(|v| e_oo * v).collect();
        for &(s, t) in &batch.op_edges {
            axpy_row(&mut oo_in[t * h..(t + 1) * h], &ho[s * h..(s + 1) * h]);
        }
        let om_in = aggregate(&ho, h, &batch.option_edges, &active_m, |e| (e.0, e.1));
        let mo_in = aggregate(&hm, h, &batch.option_edges, &active_o, |e| (e.1, e.0));

        let (n_am, n_ao) = (active_m.nodes.len(), active_o.nodes.len());
        let (mut hm_next, om_out, mut ho_next, mo_out) = if keep {
            let (a, ca) = mlp::forward(p, mm, mm_in, nm);
            let (b, cb) = mlp::forward(p, om, om_in, n_am);
            let (c, cc) = mlp::forward(p, oo, oo_in, no);
            let (d, cd) = mlp::forward(p, mo, mo_in, n_ao);
            let (hm_in, ho_in) = (core::mem::take(&mut hm), core::mem::take(&mut ho));
            layers.push(LayerCache { hm: hm_in, ho: ho_in, mlps: [ca, cc, cb, cd] });
            (a, b, c, d)
        } else {
            (
                mlp::infer(p, mm, &mm_in, nm),
                mlp::infer(p, om, &om_in, n_am),
                mlp::infer(p, oo, &oo_in, no),
                mlp::infer(p, mo, &mo_in, n_ao),
            )
        };
        for (r, &m) in active_m.nodes.iter().enumerate() {
            axpy_row(&mut hm_next[m * h..(m + 1) * h], &om_out[r * h..(r + 1) * h]);
        }
        for (r, &o) in active_o.nodes.iter().enumerate() {
            axpy_row(&mut ho_next[o * h..(o + 1) * h], &mo_out[r * h..(r + 1) * h]);
        }
        hm = hm_next;
        ho = ho_next;
    }

    let nc = batch.candidates.len();
    let mut x = Vec::with_capacity(nc * 2 * h);
    for &(m, o) in &batch.candidates {
        x.extend_from_slice(&hm[m * h..(m + 1) * h]);
        x.extend_from_slice(&ho[o * h..(o + 1) * h]);
    }
    let (scores, score_cache) = if keep {
        let (s, c) = mlp::forward(p, &layout.score, x, nc);
        (s, Some(c))
    } else {
        (mlp::infer(p, &layout.score, &x, nc), None)
    };

    let mut log_probs = Vec::with_capacity(nc);
    let entropies = (0..batch.n_graphs()).map(|g| log_softmax(&scores[batch.group(g)], &mut log_probs)).collect();

    let caches = score_cache.map(|score| Caches { layers, active_m, active_o, score });
    Ok(ForwardTrace {
        version: params.version(),
        groups: batch.groups.clone(),
        scores,
        log_probs,
        entropies,
        n_ops: no,
        n_machines: nm,
        caches,
    })
}

/// Forward pass keeping what [`backward`] needs.
pub fn forward(params: &PolicyParams, batch: &GraphBatch) -> Result<ForwardTrace, NeuralError> {
    run(params, batch, true)
}

/// Forward pass for inference only.
pub fn evaluate(params: &PolicyParams, batch: &GraphBatch) -> Result<ForwardTrace, NeuralError> {
    run(params, batch, false)
}

/// Adds the gradient of `sum_g objective_g` with respect to the parameters
/// into `grad`.
pub fn backward(
    params: &PolicyParams,
    batch: &GraphBatch,
    trace: &ForwardTrace,
    objectives: &[StepObjective],
    grad: &mut [f64],
) -> Result<(), NeuralError> {
    if trace.version != params.version() {
        return Err(NeuralError::StaleTrace);
    }
    let Some(caches) = &trace.caches else { return Err(NeuralError::Dimension("trace was taken without caches")) };
    if objectives.len() != trace.n_groups() {
        return Err(NeuralError::ObjectiveMismatch { given: objectives.len(), expected: trace.n_groups() });
    }
    if batch.n_ops != trace.n_ops || batch.n_machines != trace.n_machines || batch.groups != trace.groups {
        return Err(NeuralError::Dimension("batch does not match trace"));
    }
    if grad.len() != params.len() {
        return Err(NeuralError::Dimension("gradient length"));
    }
    let layout = params.layout();
    let p = params.as_slice();
    let h = layout.shape.hidden;
    let (no, nm) = (batch.n_ops, batch.n_machines);

    // d objective / d score
    let mut ds = alloc::vec![0.0; trace.scores.len()];
    for (g, obj) in objectives.iter().enumerate() {
        let range = trace.range(g);
        if obj.action >= range.len() {
            return Err(NeuralError::Dimension("action outside candidate group"));
        }
        let ent = trace.entropies[g];
        for (i, k) in range.enumerate() {
            let lp = trace.log_probs[k];
            let pr = libm::exp(lp);
            let hit = if i == obj.action { 1.0 } else { 0.0 };
            ds[k] = obj.log_prob_weight * (hit - pr) - obj.entropy_weight * pr * (lp + ent);
        }
    }

    let dx = mlp::backward(p, &layout.score, &caches.score, ds, grad, true);
    let mut dhm = alloc::vec![0.0; nm * h];
    let mut dho = alloc::vec![0.0; no * h];
    for (c, &(m, o)) in batch.candidates.iter().enumerate() {
        let row = &dx[c * 2 * h..(c + 1) * 2 * h];
        axpy_row(&mut dhm[m * h..(m + 1) * h], &row[..h]);
        axpy_row(&mut dho[o * h..(o + 1) * h], &row[h..]);
    }

    let (am, ao) = (&caches.active_m, &caches.active_o);
    for (slot, cache) in layout.layers.iter().zip(&caches.layers).rev() {
        let mm = &slot.mlps[Relation::MachineSelf as usize];
        let oo = &slot.mlps[Relation::OpOp as usize];
        let om = &slot.mlps[Relation::OpToMachine as usize];
        let mo = &slot.mlps[Relation::MachineToOp as usize];
        let [c_mm, c_oo, c_om, c_mo] = &cache.mlps;
        let e_mm = 1.0 + p[slot.eps[Relation::MachineSelf as usize]];
        let e_oo = 1.0 + p[slot.eps[Relation::OpOp as usize]];

        let gather = |d: &[f64], active: &Active| {
            let mut out = Vec::with_capacity(active.nodes.len() * h);
            for &v in &active.nodes {
                out.extend_from_slice(&d[v * h..(v + 1) * h]);
            }
            out
        };
        let d_om_out = gather(&dhm, am);
        let d_mo_out = gather(&dho, ao);
        let d_mm_in = mlp::backward(p, mm, c_mm, dhm, grad, true);
        let d_om_in = mlp::backward(p, om, c_om, d_om_out, grad, true);
        let d_oo_in = mlp::backward(p, oo, c_oo, dho, grad, true);
        let d_mo_in = mlp::backward(p, mo, c_mo, d_mo_out, grad, true);

        grad[slot.eps[Relation::MachineSelf as usize]] +=
            d_mm_in.iter().zip(&cache.hm).map(|(a, b)| a * b).sum::<f64>();
        grad[slot.eps[Relation::OpOp as usize]] += d_oo_in.iter().zip(&cache.ho).map(|(a, b)| a * b).sum::<f64>();

        let mut next_dhm: Vec<f64> = d_mm_in.iter().map(|v| e_mm * v).collect();
        let mut next_dho: Vec<f64> = d_oo_in.iter().map(|v| e_oo * v).collect();
        for &(s, t) in &batch.op_edges {
            axpy_row(&mut next_dho[s * h..(s + 1) * h], &d_oo_in[t * h..(t + 1) * h]);
        }
        let w = h + 1;
        for &(o, m, _) in &batch.option_edges {
            let r = am.row[m];
            axpy_row(&mut next_dho[o * h..(o + 1) * h], &d_om_in[r * w..r * w + h]);
            let r = ao.row[o];
            axpy_row(&mut next_dhm[m * h..(m + 1) * h], &d_mo_in[r * w..r * w + h]);
        }
        dhm = next_dhm;
        dho = next_dho;
    }

    mlp::encode_backward(p, &layout.machine_encoder, &batch.machine_features, &dhm, nm, grad);
    mlp::encode_backward(p, &layout.op_encoder, &batch.op_features, &dho, no, grad);
    Ok(())
}
