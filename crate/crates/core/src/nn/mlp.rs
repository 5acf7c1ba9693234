//! Batched MLP forward and backward.
//!
//! Weights are stored `fan_in x fan_out` row-major so a batch `X (rows x in)`
//! maps to `X W + b`. Hidden layers use ReLU, the last layer is linear.

use alloc::vec::Vec;

use super::linalg::gemm;
use super::{LinearSlot, MlpSlot};

/// Inputs seen by each linear layer of one forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct MlpCache {
    inputs: Vec<Vec<f64>>,
    rows: usize,
}

fn linear(params: &[f64], lin: &LinearSlot, x: &[f64], rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * lin.fan_out);
    let bias = &params[lin.bias..lin.bias + lin.fan_out];
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    let w = &params[lin.weight..lin.weight + lin.fan_in * lin.fan_out];
    gemm(rows, lin.fan_in, lin.fan_out, x, false, w, false, 1.0, &mut out);
    out
}

/// Parameter gradients of one linear layer; returns the input gradient when
/// asked for.
fn linear_backward(
    params: &[f64],
    lin: &LinearSlot,
    x: &[f64],
    dy: &[f64],
    rows: usize,
    grad: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let (fi, fo) = (lin.fan_in, lin.fan_out);
    gemm(fi, rows, fo, x, true, dy, false, 1.0, &mut grad[lin.weight..lin.weight + fi * fo]);
    let db = &mut grad[lin.bias..lin.bias + fo];
    for row in dy.chunks_exact(fo) {
        for (g, v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    want_dx.then(|| {
        let mut dx = alloc::vec![0.0; rows * fi];
        gemm(rows, fo, fi, dy, false, &params[lin.weight..lin.weight + fi * fo], true, 0.0, &mut dx);
        dx
    })
}

pub(crate) fn forward(params: &[f64], slot: &MlpSlot, x: Vec<f64>, rows: usize) -> (Vec<f64>, MlpCache) {
    let mut inputs = Vec::with_capacity(slot.linears.len());
    let mut cur = x;
    let last = slot.linears.len() - 1;
    for (i, lin) in slot.linears.iter().enumerate() {
        let mut out = linear(params, lin, &cur, rows);
        if i < last {
            for v in &mut out {
                *v = v.max(0.0);
            }
        }
        inputs.push(cur);
        cur = out;
    }
    (cur, MlpCache { inputs, rows })
}

/// Forward without keeping a cache.
pub(crate) fn infer(params: &[f64], slot: &MlpSlot, x: &[f64], rows: usize) -> Vec<f64> {
    let mut cur = linear(params, &slot.linears[0], x, rows);
    for lin in &slot.linears[1..] {
        for v in &mut cur {
            *v = v.max(0.0);
        }
        cur = linear(params, lin, &cur, rows);
    }
    cur
}

/// Accumulates parameter gradients into `grad` and returns `dL/dx` when
/// `want_dx` is set (an empty vector otherwise).
pub(crate) fn backward(
    params: &[f64],
    slot: &MlpSlot,
    cache: &MlpCache,
    dy: Vec<f64>,
    grad: &mut [f64],
    want_dx: bool,
) -> Vec<f64> {
    let rows = cache.rows;
    let mut d = dy;
    for i in (0..slot.linears.len()).rev() {
        let x = &cache.inputs[i];
        let need = i > 0 || want_dx;
        let dx = linear_backward(params, &slot.linears[i], x, &d, rows, grad, need);
        match dx {
            Some(mut dx) => {
                if i > 0 {
                    // x is a ReLU output, so x > 0 marks the active units
                    for (g, v) in dx.iter_mut().zip(x) {
                        if *v <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                d = dx;
            }
            None => return Vec::new(),
        }
    }
    d
}

/// Single linear layer, used for the input encoders.
pub(crate) fn encode(params: &[f64], lin: &LinearSlot, x: &[f64], rows: usize) -> Vec<f64> {
    linear(params, lin, x, rows)
}

pub(crate) fn encode_backward(params: &[f64], lin: &LinearSlot, x: &[f64], dy: &[f64], rows: usize, grad: &mut [f64]) {
    linear_backward(params, lin, x, dy, rows, grad, false);
}
