//! Residual-scheduling construction engine for job-shop (JSP) and flexible
//! job-shop (FJSP) problems.
//!
//! Schedules are built one dispatch at a time. Every decision is taken on the
//! *residual* problem: finished operations are dropped, ongoing ones are
//! truncated to their remaining time and the clock is rebased to zero. A
//! heterogeneous GIN policy scores the candidate (machine, operation) pairs of
//! that residual graph and is trained with REINFORCE against a dispatching-rule
//! baseline.
//!
//! The crate is `no_std` (it needs `alloc`); file IO, threads and the CLI live
//! in the companion `resched` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod env;
pub mod eval;
pub mod graph;
pub mod instance;
pub mod nn;
pub mod pdr;
pub mod train;

pub use env::{Candidate, ConstructionState, DispatchRecord, EnvError, OperationStatus};
pub use graph::ResidualGraph;
pub use instance::{Format, Instance, InstanceError, ProblemKind};
pub use nn::{PolicyParams, PolicyShape};
pub use pdr::Rule;

/// Integral time unit used for durations, clocks and makespans.
pub type Time = u32;
