//! Heterogeneous GIN policy with exact hand-written gradients.
//!
//! All learnable values live in one flat `f64` vector; [`Layout`] names the
//! blocks inside it (encoders, per-layer relation MLPs and their epsilons, the
//! score MLP). Gradients and optimizer moments share the layout.

mod checkpoint;
mod linalg;
mod mlp;
mod policy;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use thiserror::Error;

use crate::graph::{EDGE_FEATURES, MACHINE_FEATURES, OP_FEATURES};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use policy::{backward, evaluate, forward, ForwardTrace, GraphBatch, StepObjective};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NeuralError {
    #[error("no candidates to score")]
    NoCandidates,
    #[error("trace was produced by different parameters")]
    StaleTrace,
    #[error("objective covers {given} groups but the trace has {expected}")]
    ObjectiveMismatch { given: usize, expected: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Network sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyShape {
    /// Width of embeddings and of every MLP hidden layer.
    pub hidden: usize,
    /// Number of HGIN layers.
    pub layers: usize,
    /// Hidden layers per MLP.
    pub mlp_hidden_layers: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self { hidden: 256, layers: 3, mlp_hidden_layers: 2 }
    }
}

/// The four HGIN relations. `MachineSelf` carries a machine's own embedding,
/// `OpOp` aggregates same-job operations together with the node itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    MachineSelf = 0,
    OpOp = 1,
    OpToMachine = 2,
    MachineToOp = 3,
}

impl Relation {
    pub const ALL: [Relation; 4] =
        [Relation::MachineSelf, Relation::OpOp, Relation::OpToMachine, Relation::MachineToOp];

    pub fn tag(self) -> &'static str {
        match self {
            Relation::MachineSelf => "mm",
            Relation::OpOp => "oo",
            Relation::OpToMachine => "om",
            Relation::MachineToOp => "mo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearSlot {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LinearSlot {
    pub fn len(&self) -> usize {
        self.fan_in * self.fan_out + self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.fan_out == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSlot {
    pub linears: Vec<LinearSlot>,
}

impl MlpSlot {
    pub fn fan_in(&self) -> usize {
        self.linears[0].fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.linears[self.linears.len() - 1].fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HginSlot {
    /// Indexed by `Relation as usize`.
    pub mlps: [MlpSlot; 4],
    pub eps: [usize; 4],
}

/// A named contiguous block of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub shape: PolicyShape,
    pub op_encoder: LinearSlot,
    pub machine_encoder: LinearSlot,
    pub layers: Vec<HginSlot>,
    pub score: MlpSlot,
    pub blocks: Vec<Block>,
    pub len: usize,
}

struct Builder {
    blocks: Vec<Block>,
    len: usize,
}

impl Builder {
    fn take(&mut self, name: String, len: usize) -> usize {
        let offset = self.len;
        self.blocks.push(Block { name, offset, len });
        self.len += len;
        offset
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearSlot {
        let weight = self.take(alloc::format!("{prefix}.weight"), fan_in * fan_out);
        let bias = self.take(alloc::format!("{prefix}.bias"), fan_out);
        LinearSlot { weight, bias, fan_in, fan_out }
    }

    fn mlp(&mut self, prefix: &str, fan_in: usize, hidden: usize, hidden_layers: usize, fan_out: usize) -> MlpSlot {
        let mut linears = Vec::with_capacity(hidden_layers + 1);
        let mut width = fan_in;
        for i in 0..hidden_layers {
            linears.push(self.linear(&alloc::format!("{prefix}.fc{i}"), width, hidden));
            width = hidden;
        }
        linears.push(self.linear(&alloc::format!("{prefix}.fc{hidden_layers}"), width, fan_out));
        MlpSlot { linears }
    }
}

impl Layout {
    pub fn new(shape: PolicyShape) -> Self {
        let h = shape.hidden;
        let mut b = Builder { blocks: Vec::new(), len: 0 };
        let op_encoder = b.linear("op_encoder", OP_FEATURES, h);
        let machine_encoder = b.linear("machine_encoder", MACHINE_FEATURES, h);
        let layers = (0..shape.layers)
            .map(|k| {
                let mlps = Relation::ALL.map(|r| {
                    let fan_in = match r {
                        Relation::MachineSelf | Relation::OpOp => h,
                        Relation::OpToMachine | Relation::MachineToOp => h + EDGE_FEATURES,
                    };
                    b.mlp(&alloc::format!("layer{k}.{}", r.tag()), fan_in, h, shape.mlp_hidden_layers, h)
                });
                let eps = Relation::ALL.map(|r| b.take(alloc::format!("layer{k}.eps_{}", r.tag()), 1));
                HginSlot { mlps, eps }
            })
            .collect();
        let score = b.mlp("score", 2 * h, h, shape.mlp_hidden_layers, 1);
        Layout { shape, op_encoder, machine_encoder, layers, score, blocks: b.blocks, len: b.len }
    }

    fn linears(&self) -> impl Iterator<Item = &LinearSlot> {
        [&self.op_encoder, &self.machine_encoder].into_iter().chain(
            self.layers
                .iter()
                .flat_map(|l| l.mlps.iter().flat_map(|m| m.linears.iter()))
                .chain(self.score.linears.iter()),
        )
    }
}

static VERSIONS: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    VERSIONS.fetch_add(1, Ordering::Relaxed)
}

/// All learnable parameters of the policy.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    layout: Arc<Layout>,
    data: Vec<f64>,
    version: u64,
}

impl PartialEq for PolicyParams {
    fn eq(&self, other: &Self) -> bool {
        self.layout.shape == other.layout.shape && self.data == other.data
    }
}

impl PolicyParams {
    /// All-zero parameters: every candidate scores 0, the policy is uniform.
    pub fn zeros(shape: PolicyShape) -> Self {
        let layout = Layout::new(shape);
        let data = alloc::vec![0.0; layout.len];
        Self { layout: Arc::new(layout), data, version: next_version() }
    }

    /// Glorot-uniform weights, zero biases, zero epsilons.
    pub fn init<R: Rng + ?Sized>(shape: PolicyShape, rng: &mut R) -> Self {
        let mut params = Self::zeros(shape);
        let layout = params.layout.clone();
        for lin in layout.linears() {
            let bound = libm::sqrt(6.0 / (lin.fan_in + lin.fan_out) as f64);
            for w in &mut params.data[lin.weight..lin.weight + lin.fan_in * lin.fan_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    pub(crate) fn from_parts(shape: PolicyShape, data: Vec<f64>) -> Option<Self> {
        let layout = Layout::new(shape);
        (data.len() == layout.len).then(|| Self { layout: Arc::new(layout), data, version: next_version() })
    }

    pub fn shape(&self) -> PolicyShape {
        self.layout.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access; invalidates traces taken from these parameters.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.version = next_version();
        &mut self.data
    }

    pub(crate) fn version(&self) -> u64 {
        self.version
    }

    pub fn zeroed_like(&self) -> Vec<f64> {
        alloc::vec![0.0; self.data.len()]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
