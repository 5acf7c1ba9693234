//! Construction environment: partial schedules, candidate pairs, dispatch
//! transitions and the residual view of a state.
//!
//! After every dispatch the clock jumps forward across completion events until
//! some (idle machine, ready operation) pair exists, so the schedules built here
//! are non-delay and an externally observed non-terminal state always has at
//! least one candidate.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use thiserror::Error;

use crate::instance::{Instance, ProcessingOption};
use crate::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DispatchRecord {
    pub job: usize,
    pub op: usize,
    pub machine: usize,
    pub start: Time,
    pub end: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperationStatus {
    Completed,
    Ongoing,
    Ready,
    Unready,
}

/// A legal (machine, operation) pair at the current clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub machine: usize,
    pub job: usize,
    pub op: usize,
    pub duration: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("state is terminal")]
    Terminal,
    #[error("state is not terminal")]
    NotTerminal,
    #[error("illegal dispatch of operation {op} of job {job} on machine {machine}: {reason}")]
    Illegal { job: usize, op: usize, machine: usize, reason: &'static str },
}

/// Scales used by the graph features. They come from the original instance
/// and stay fixed for a whole episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    /// Largest option duration of the original instance.
    pub op_time_max: f64,
    /// Total work of each original job (FJSP operations at mean duration).
    pub job_totals: Vec<f64>,
}

impl Normalization {
    pub fn of(instance: &Instance) -> Self {
        Self {
            op_time_max: f64::from(instance.max_duration()),
            job_totals: (0..instance.n_jobs()).map(|j| instance.job_work(j)).collect(),
        }
    }
}

/// A partial solution `S_t` with its dispatching time `tau_t`.
#[derive(Debug, Clone)]
pub struct ConstructionState<'a> {
    instance: &'a Instance,
    norms: Arc<Normalization>,
    clock: Time,
    records: Vec<DispatchRecord>,
    op_record: Vec<Option<usize>>,
    machine_free: Vec<Time>,
    job_next: Vec<usize>,
    job_free: Vec<Time>,
    undispatched: usize,
}

impl<'a> ConstructionState<'a> {
    /// `S_0`: nothing dispatched, clock at zero.
    pub fn reset(instance: &'a Instance) -> Self {
        Self::with_normalization(instance, Arc::new(Normalization::of(instance)))
    }

    fn with_normalization(instance: &'a Instance, norms: Arc<Normalization>) -> Self {
        Self {
            instance,
            norms,
            clock: 0,
            records: Vec::with_capacity(instance.n_ops()),
            op_record: alloc::vec![None; instance.n_ops()],
            machine_free: alloc::vec![0; instance.n_machines()],
            job_next: alloc::vec![0; instance.n_jobs()],
            job_free: alloc::vec![0; instance.n_jobs()],
            undispatched: instance.n_ops(),
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norms
    }

    pub fn clock(&self) -> Time {
        self.clock
    }

    pub fn records(&self) -> &[DispatchRecord] {
        &self.records
    }

    pub fn is_terminal(&self) -> bool {
        self.undispatched == 0
    }

    /// Index of the next undispatched operation of `job` (== job length when done).
    pub fn next_op(&self, job: usize) -> usize {
        self.job_next[job]
    }

    /// Completion time of the job's last dispatched operation: when its next
    /// operation became (or becomes) available.
    pub fn job_available_at(&self, job: usize) -> Time {
        self.job_free[job]
    }

    pub fn machine_free_at(&self, machine: usize) -> Time {
        self.machine_free[machine]
    }

    pub fn machine_idle(&self, machine: usize) -> bool {
        self.machine_free[machine] <= self.clock
    }

    pub fn record_of(&self, job: usize, op: usize) -> Option<&DispatchRecord> {
        self.op_record[self.instance.op_id(job, op)].map(|r| &self.records[r])
    }

    pub fn status(&self, job: usize, op: usize) -> OperationStatus {
        if let Some(rec) = self.record_of(job, op) {
            return if rec.end <= self.clock { OperationStatus::Completed } else { OperationStatus::Ongoing };
        }
        if op == self.job_next[job]
            && self.job_free[job] <= self.clock
            && self.instance.op(job, op).options.iter().any(|o| self.machine_idle(o.machine))
        {
            OperationStatus::Ready
        } else {
            OperationStatus::Unready
        }
    }

    /// Remaining processing time of an ongoing operation at the current clock.
    pub fn remaining(&self, job: usize, op: usize) -> Option<Time> {
        self.record_of(job, op).filter(|r| r.end > self.clock).map(|r| r.end - self.clock)
    }

    fn job_candidates(&self, job: usize, out: &mut Vec<Candidate>) {
        let op = self.job_next[job];
        if op >= self.instance.job_len(job) || self.job_free[job] > self.clock {
            return;
        }
        let start = out.len();
        for o in &self.instance.op(job, op).options {
            if self.machine_idle(o.machine) {
                out.push(Candidate { machine: o.machine, job, op, duration: o.duration });
            }
        }
        out[start..].sort_unstable_by_key(|c| c.machine);
    }

    /// Appends the candidate set `C_t`, ordered by (job, op, machine).
    pub fn candidates_into(&self, out: &mut Vec<Candidate>) -> Result<(), EnvError> {
        if self.is_terminal() {
            return Err(EnvError::Terminal);
        }
        for job in 0..self.instance.n_jobs() {
            self.job_candidates(job, out);
        }
        Ok(())
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>, EnvError> {
        let mut out = Vec::new();
        self.candidates_into(&mut out)?;
        Ok(out)
    }

    fn has_candidate(&self) -> bool {
        (0..self.instance.n_jobs()).any(|job| {
            let op = self.job_next[job];
            op < self.instance.job_len(job)
                && self.job_free[job] <= self.clock
                && self.instance.op(job, op).options.iter().any(|o| self.machine_idle(o.machine))
        })
    }

    fn check(&self, c: &Candidate) -> Result<ProcessingOption, EnvError> {
        let illegal = |reason| EnvError::Illegal { job: c.job, op: c.op, machine: c.machine, reason };
        if self.is_terminal() {
            return Err(EnvError::Terminal);
        }
        if c.job >= self.instance.n_jobs() || c.op >= self.instance.job_len(c.job) {
            return Err(illegal("no such operation"));
        }
        if self.job_next[c.job] != c.op {
            return Err(illegal("operation is not the next undispatched one of its job"));
        }
        if self.job_free[c.job] > self.clock {
            return Err(illegal("job predecessor has not completed"));
        }
        let option = *self.instance.op(c.job, c.op).option_on(c.machine).ok_or(illegal("machine is not eligible"))?;
        if option.duration != c.duration {
            return Err(illegal("duration does not match the machine option"));
        }
        if !self.machine_idle(c.machine) {
            return Err(illegal("machine is busy"));
        }
        Ok(option)
    }

    fn dispatch(&mut self, c: &Candidate, duration: Time) {
        let end = self.clock + duration;
        let id = self.instance.op_id(c.job, c.op);
        self.op_record[id] = Some(self.records.len());
        self.records.push(DispatchRecord { job: c.job, op: c.op, machine: c.machine, start: self.clock, end });
        self.machine_free[c.machine] = end;
        self.job_free[c.job] = end;
        self.job_next[c.job] += 1;
        self.undispatched -= 1;
    }

    /// Moves the clock to the next completion event until a candidate exists,
    /// or to the makespan once everything is dispatched.
    fn advance(&mut self) {
        if self.is_terminal() {
            self.clock = self.clock.max(self.machine_free.iter().copied().max().unwrap_or(0));
            return;
        }
        while !self.has_candidate() {
            let next = self
                .machine_free
                .iter()
                .copied()
                .filter(|&t| t > self.clock)
                .min()
                .expect("undispatched work with every machine idle always has a candidate");
            self.clock = next;
        }
    }

    /// Dispatches `candidate` at the current clock and advances time.
    pub fn step(&mut self, candidate: &Candidate) -> Result<(), EnvError> {
        let option = self.check(candidate)?;
        self.dispatch(candidate, option.duration);
        self.advance();
        Ok(())
    }

    /// Like [`step`](Self::step) but returns the successor, leaving `self` intact.
    pub fn after(&self, candidate: &Candidate) -> Result<Self, EnvError> {
        let mut next = self.clone();
        next.step(candidate)?;
        Ok(next)
    }

    pub fn makespan(&self) -> Result<Time, EnvError> {
        if !self.is_terminal() {
            return Err(EnvError::NotTerminal);
        }
        Ok(self.records.iter().map(|r| r.end).max().unwrap_or(0))
    }

    /// The residual problem: completed operations dropped, ongoing ones
    /// truncated to their remaining time, clock rebased to zero.
    pub fn residual_view(&self) -> ResidualDescriptor {
        let mut jobs = Vec::new();
        let mut job_totals = Vec::new();
        for (job, ops) in self.instance.jobs().iter().enumerate() {
            let mut remaining = Vec::new();
            for spec in ops {
                match self.record_of(job, spec.index) {
                    Some(rec) if rec.end <= self.clock => {}
                    Some(rec) => remaining.push(ResidualOp {
                        index: spec.index,
                        options: alloc::vec![ProcessingOption::new(rec.machine, rec.end - self.clock)],
                        ongoing: true,
                    }),
                    None => {
                        remaining.push(ResidualOp { index: spec.index, options: spec.options.clone(), ongoing: false })
                    }
                }
            }
            if !remaining.is_empty() {
                jobs.push(ResidualJob { job, ops: remaining });
                job_totals.push(self.norms.job_totals[job]);
            }
        }
        ResidualDescriptor {
            n_machines: self.instance.n_machines(),
            jobs,
            norms: Normalization { op_time_max: self.norms.op_time_max, job_totals },
        }
    }

    /// Plays `choose` from this state to termination; `choose` receives the
    /// state and its candidates and returns an index into them.
    pub fn run_to_end<F>(&mut self, mut choose: F)
    where
        F: FnMut(&ConstructionState<'a>, &[Candidate]) -> usize,
    {
        let mut buf = Vec::new();
        while !self.is_terminal() {
            buf.clear();
            self.candidates_into(&mut buf).expect("non-terminal");
            let pick = buf[choose(self, &buf)];
            self.step(&pick).expect("candidate from the environment is legal");
        }
    }
}

/// Residual makespan of the continuation from `state_t` to `terminal`:
/// latest completion among operations not completed at `state_t`, measured
/// from its clock.
pub fn residual_makespan(state_t: &ConstructionState<'_>, terminal: &ConstructionState<'_>) -> Time {
    let tau = state_t.clock;
    terminal.records.iter().map(|r| r.end).filter(|&end| end > tau).max().map_or(0, |end| end - tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualOp {
    /// Position in the original job.
    pub index: usize,
    pub options: Vec<ProcessingOption>,
    /// Dispatched and still running; `options` then holds only its machine and
    /// remaining time.
    pub ongoing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualJob {
    /// Original job id.
    pub job: usize,
    pub ops: Vec<ResidualOp>,
}

/// History-free description of the remaining problem at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDescriptor {
    pub n_machines: usize,
    pub jobs: Vec<ResidualJob>,
    /// Original-instance scales, one job total per residual job.
    pub norms: Normalization,
}

impl ResidualDescriptor {
    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn n_ops(&self) -> usize {
        self.jobs.iter().map(|j| j.ops.len()).sum()
    }

    /// A fresh instance with the residual operations; ongoing ones become
    /// forced single-machine operations of their remaining length. `None` when
    /// nothing remains.
    pub fn to_instance(&self) -> Option<Instance> {
        if self.jobs.is_empty() {
            return None;
        }
        let jobs = self
            .jobs
            .iter()
            .map(|j| j.ops.iter().map(|op| op.options.iter().map(|o| (o.machine, o.duration)).collect()).collect())
            .collect();
        Some(Instance::new(self.n_machines, jobs).expect("residual of a valid instance is valid"))
    }

    /// The state of `instance` (built by [`to_instance`](Self::to_instance))
    /// equivalent to the original state: ongoing operations dispatched at time
    /// zero, original normalization scales.
    pub fn to_state<'b>(&self, instance: &'b Instance) -> ConstructionState<'b> {
        let mut state = ConstructionState::with_normalization(instance, Arc::new(self.norms.clone()));
        for (j, job) in self.jobs.iter().enumerate() {
            if let Some(op) = job.ops.first().filter(|op| op.ongoing) {
                let o = op.options[0];
                state.dispatch(&Candidate { machine: o.machine, job: j, op: 0, duration: o.duration }, o.duration);
            }
        }
        state.advance();
        state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    Missing,
    Duplicate,
    UnknownOperation,
    IllegalMachine,
    Duration,
    Precedence,
    Overlap,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::Missing => "MISSING",
            ViolationKind::Duplicate => "DUPLICATE",
            ViolationKind::UnknownOperation => "UNKNOWN",
            ViolationKind::IllegalMachine => "MACHINE",
            ViolationKind::Duration => "DURATION",
            ViolationKind::Precedence => "PRECEDENCE",
            ViolationKind::Overlap => "OVERLAP",
        })
    }
}

/// One broken constraint; displays as `KIND job op machine detail`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub job: usize,
    pub op: usize,
    pub machine: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {}", self.kind, self.job, self.op, self.machine, self.detail)
    }
}

/// Checks a complete schedule against every JSP/FJSP constraint.
pub fn validate(records: &[DispatchRecord], instance: &Instance) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let mut push = |kind, r: &DispatchRecord, detail: String| {
        violations.push(Violation { kind, job: r.job, op: r.op, machine: r.machine, detail })
    };
    let mut seen: Vec<Option<&DispatchRecord>> = alloc::vec![None; instance.n_ops()];
    for r in records {
        if r.job >= instance.n_jobs() || r.op >= instance.job_len(r.job) {
            push(ViolationKind::UnknownOperation, r, String::from("operation does not exist"));
            continue;
        }
        let id = instance.op_id(r.job, r.op);
        if seen[id].is_some() {
            push(ViolationKind::Duplicate, r, String::from("operation scheduled more than once"));
            continue;
        }
        seen[id] = Some(r);
        match instance.op(r.job, r.op).option_on(r.machine) {
            None => push(ViolationKind::IllegalMachine, r, String::from("machine not eligible")),
            Some(o) if r.end < r.start || r.end - r.start != o.duration => push(
                ViolationKind::Duration,
                r,
                alloc::format!("expected {} got {}", o.duration, r.end.wrapping_sub(r.start)),
            ),
            Some(_) => {}
        }
    }
    for (job, ops) in instance.jobs().iter().enumerate() {
        for op in 0..ops.len() {
            let id = instance.op_id(job, op);
            match seen[id] {
                None => violations.push(Violation {
                    kind: ViolationKind::Missing,
                    job,
                    op,
                    machine: usize::MAX,
                    detail: String::from("operation never scheduled"),
                }),
                Some(r) if op > 0 => {
                    if let Some(prev) = seen[id - 1] {
                        if r.start < prev.end {
                            let detail = alloc::format!("starts {} before predecessor ends {}", r.start, prev.end);
                            violations.push(Violation {
                                kind: ViolationKind::Precedence,
                                job,
                                op,
                                machine: r.machine,
                                detail,
                            });
                        }
                    }
                }
                Some(_) => {}
            }
        }
    }
    let mut by_machine: Vec<&DispatchRecord> = seen.iter().flatten().copied().collect();
    by_machine.sort_by_key(|r| (r.machine, r.start, r.end));
    for pair in by_machine.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.machine == b.machine && b.start < a.end {
            let detail = alloc::format!("overlaps job {} op {} ({}..{})", a.job, a.op, a.start, a.end);
            violations.push(Violation {
                kind: ViolationKind::Overlap,
                job: b.job,
                op: b.op,
                machine: b.machine,
                detail,
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// One `job,op,machine,start,end` line per record (0-based ids, no header).
pub fn gantt_csv(records: &[DispatchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.job, r.op, r.machine, r.start, r.end);
    }
    out
}
