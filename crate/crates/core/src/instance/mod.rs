//! Problem instances: jobs, operations and their machine options.

mod generate;
mod parse;

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::Time;

pub use generate::{generate_fjsp, generate_jsp, generate_training_instance, MAX_DURATION};
pub use parse::{parse, parse_fjsp, parse_orlib_jsp, parse_taillard_jsp, serialize, Format, ParseError};

/// One machine an operation may run on, and how long it takes there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProcessingOption {
    pub machine: usize,
    pub duration: Time,
}

impl ProcessingOption {
    pub fn new(machine: usize, duration: Time) -> Self {
        Self { machine, duration }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationSpec {
    pub job: usize,
    pub index: usize,
    pub options: Vec<ProcessingOption>,
}

impl OperationSpec {
    pub fn option_on(&self, machine: usize) -> Option<&ProcessingOption> {
        self.options.iter().find(|o| o.machine == machine)
    }

    /// Mean duration over the eligible machines (the duration itself for JSP).
    pub fn mean_duration(&self) -> f64 {
        let total: u64 = self.options.iter().map(|o| u64::from(o.duration)).sum();
        total as f64 / self.options.len() as f64
    }

    pub fn max_duration(&self) -> Time {
        self.options.iter().map(|o| o.duration).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Jsp,
    Fjsp,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Jsp => "jsp",
            ProblemKind::Fjsp => "fjsp",
        })
    }
}

impl core::str::FromStr for ProblemKind {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsp" => Ok(ProblemKind::Jsp),
            "fjsp" => Ok(ProblemKind::Fjsp),
            other => Err(alloc::format!("unknown problem kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("instance has no jobs")]
    NoJobs,
    #[error("instance has no machines")]
    NoMachines,
    #[error("job {job} has no operations")]
    EmptyJob { job: usize },
    #[error("operation {index} of job {job} has no machine options")]
    NoOptions { job: usize, index: usize },
    #[error("operation {index} of job {job} references machine {machine} but only {machines} exist")]
    MachineOutOfRange { job: usize, index: usize, machine: usize, machines: usize },
    #[error("operation {index} of job {job} lists machine {machine} twice")]
    DuplicateMachine { job: usize, index: usize, machine: usize },
    #[error("operation {index} of job {job} has zero duration on machine {machine}")]
    ZeroDuration { job: usize, index: usize, machine: usize },
    #[error("invalid generator arguments: {0}")]
    Generator(&'static str),
}

/// An immutable JSP/FJSP problem.
///
/// Machines are 0-based. Operations are also addressed by a flat id
/// (`op_id(job, index)`), jobs laid out one after another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n_machines: usize,
    jobs: Vec<Vec<OperationSpec>>,
    offsets: Vec<usize>,
    kind: ProblemKind,
}

impl Instance {
    /// Builds an instance from per-job lists of per-operation options
    /// `(machine, duration)`.
    pub fn new(n_machines: usize, jobs: Vec<Vec<Vec<(usize, Time)>>>) -> Result<Self, InstanceError> {
        if n_machines == 0 {
            return Err(InstanceError::NoMachines);
        }
        if jobs.is_empty() {
            return Err(InstanceError::NoJobs);
        }
        let mut built = Vec::with_capacity(jobs.len());
        let mut offsets = Vec::with_capacity(jobs.len() + 1);
        let mut flexible = false;
        let mut total = 0;
        for (job, ops) in jobs.into_iter().enumerate() {
            if ops.is_empty() {
                return Err(InstanceError::EmptyJob { job });
            }
            offsets.push(total);
            total += ops.len();
            let mut specs = Vec::with_capacity(ops.len());
            for (index, raw) in ops.into_iter().enumerate() {
                if raw.is_empty() {
                    return Err(InstanceError::NoOptions { job, index });
                }
                let mut options: Vec<ProcessingOption> = Vec::with_capacity(raw.len());
                for (machine, duration) in raw {
                    if machine >= n_machines {
                        return Err(InstanceError::MachineOutOfRange { job, index, machine, machines: n_machines });
                    }
                    if duration == 0 {
                        return Err(InstanceError::ZeroDuration { job, index, machine });
                    }
                    if options.iter().any(|o| o.machine == machine) {
                        return Err(InstanceError::DuplicateMachine { job, index, machine });
                    }
                    options.push(ProcessingOption { machine, duration });
                }
                flexible |= options.len() > 1;
                specs.push(OperationSpec { job, index, options });
            }
            built.push(specs);
        }
        offsets.push(total);
        let kind = if flexible { ProblemKind::Fjsp } else { ProblemKind::Jsp };
        Ok(Self { n_machines, jobs: built, offsets, kind })
    }

    /// JSP convenience constructor: one `(machine, duration)` per operation.
    pub fn jsp(n_machines: usize, jobs: Vec<Vec<(usize, Time)>>) -> Result<Self, InstanceError> {
        let jobs = jobs.into_iter().map(|ops| ops.into_iter().map(|op| alloc::vec![op]).collect()).collect();
        Self::new(n_machines, jobs)
    }

    pub fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn n_machines(&self) -> usize {
        self.n_machines
    }

    pub fn n_ops(&self) -> usize {
        self.offsets[self.jobs.len()]
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn jobs(&self) -> &[Vec<OperationSpec>] {
        &self.jobs
    }

    pub fn job(&self, job: usize) -> &[OperationSpec] {
        &self.jobs[job]
    }

    pub fn job_len(&self, job: usize) -> usize {
        self.jobs[job].len()
    }

    pub fn op(&self, job: usize, index: usize) -> &OperationSpec {
        &self.jobs[job][index]
    }

    pub fn op_id(&self, job: usize, index: usize) -> usize {
        self.offsets[job] + index
    }

    pub fn operations(&self) -> impl Iterator<Item = &OperationSpec> {
        self.jobs.iter().flatten()
    }

    /// True when every job has exactly one operation per machine, each machine
    /// once (the Taillard layout).
    pub fn is_rectangular_permutation(&self) -> bool {
        self.kind == ProblemKind::Jsp
            && self.jobs.iter().all(|ops| {
                if ops.len() != self.n_machines {
                    return false;
                }
                let mut seen = alloc::vec![false; self.n_machines];
                ops.iter().all(|op| !core::mem::replace(&mut seen[op.options[0].machine], true))
            })
    }

    /// Largest single option duration in the instance.
    pub fn max_duration(&self) -> Time {
        self.operations().map(OperationSpec::max_duration).max().unwrap_or(0)
    }

    /// Total work of a job, FJSP operations counted at their mean duration.
    pub fn job_work(&self, job: usize) -> f64 {
        self.jobs[job].iter().map(OperationSpec::mean_duration).sum()
    }
}
