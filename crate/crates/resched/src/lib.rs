//! File formats, parallel drivers and the command-line front end for
//! `resched-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod files;
pub mod parallel;
pub mod policy;

pub use error::CliError;
