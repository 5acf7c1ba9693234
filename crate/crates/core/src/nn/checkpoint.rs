//! Binary checkpoint format.
//!
//! Layout, little endian: magic `RSCHKPT\0`, version `u32`, header `u32`s
//! (op features, machine features, edge features, hidden, layers, MLP hidden
//! layers, block count), then per block: name length `u32`, UTF-8 name,
//! element count `u64`, `f64` values.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::{Layout, PolicyParams, PolicyShape};
use crate::graph::{EDGE_FEATURES, MACHINE_FEATURES, OP_FEATURES};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RSCHKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("feature widths {found:?} do not match this build {expected:?}")]
    FeatureMismatch { found: [u32; 3], expected: [u32; 3] },
    #[error("block `{name}` does not match the architecture: {reason}")]
    Block { name: String, reason: &'static str },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let layout = params.layout();
    let s = layout.shape;
    let mut out = Vec::with_capacity(64 + params.len() * 8 + layout.blocks.len() * 32);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    for v in
        [OP_FEATURES, MACHINE_FEATURES, EDGE_FEATURES, s.hidden, s.layers, s.mlp_hidden_layers, layout.blocks.len()]
    {
        put_u32(&mut out, v as u32);
    }
    for block in &layout.blocks {
        put_u32(&mut out, block.name.len() as u32);
        out.extend_from_slice(block.name.as_bytes());
        out.extend_from_slice(&(block.len as u64).to_le_bytes());
        for v in &params.as_slice()[block.offset..block.offset + block.len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<PolicyParams, CheckpointError> {
    let mut r = Reader { bytes };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let found = [r.u32()?, r.u32()?, r.u32()?];
    let expected = [OP_FEATURES as u32, MACHINE_FEATURES as u32, EDGE_FEATURES as u32];
    if found != expected {
        return Err(CheckpointError::FeatureMismatch { found, expected });
    }
    let shape =
        PolicyShape { hidden: r.u32()? as usize, layers: r.u32()? as usize, mlp_hidden_layers: r.u32()? as usize };
    let n_blocks = r.u32()? as usize;
    let layout = Layout::new(shape);
    if n_blocks != layout.blocks.len() {
        return Err(CheckpointError::Block { name: String::new(), reason: "block count" });
    }
    let mut data = Vec::with_capacity(layout.len);
    for block in &layout.blocks {
        let name_len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Block { name: block.name.clone(), reason: "name is not UTF-8" })?;
        if name != block.name {
            return Err(CheckpointError::Block { name: name.into(), reason: "unexpected block name" });
        }
        if r.u64()? != block.len as u64 {
            return Err(CheckpointError::Block { name: block.name.clone(), reason: "element count" });
        }
        for chunk in r.take(block.len * 8)?.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
    }
    if !r.bytes.is_empty() {
        return Err(CheckpointError::Trailing(r.bytes.len()));
    }
    Ok(PolicyParams::from_parts(shape, data).expect("layout length"))
}
