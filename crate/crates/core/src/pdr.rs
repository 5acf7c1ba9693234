//! Priority dispatching rules.

use core::fmt;
use core::str::FromStr;

use crate::env::{residual_makespan, Candidate, ConstructionState, EnvError};
use crate::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Most work remaining in the candidate's job.
    Mwkr,
    /// Most operations remaining in the candidate's job.
    Mor,
    /// Shortest processing time of the candidate itself.
    Spt,
    /// Operation that has been waiting longest (its job predecessor finished
    /// earliest).
    Fifo,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Mwkr, Rule::Mor, Rule::Spt, Rule::Fifo];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Mwkr => "mwkr",
            Rule::Mor => "mor",
            Rule::Spt => "spt",
            Rule::Fifo => "fifo",
        }
    }

    /// Priority of a candidate; larger wins, earlier candidate on ties.
    fn priority(self, state: &ConstructionState<'_>, c: &Candidate) -> f64 {
        match self {
            Rule::Mwkr => remaining_work(state, c.job),
            Rule::Mor => (state.instance().job_len(c.job) - c.op) as f64,
            Rule::Spt => -f64::from(c.duration),
            Rule::Fifo => -f64::from(state.job_available_at(c.job)),
        }
    }

    /// Index of the chosen candidate within `candidates`.
    pub fn pick(self, state: &ConstructionState<'_>, candidates: &[Candidate]) -> usize {
        let mut best = 0;
        let mut best_priority = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let p = self.priority(state, c);
            if p > best_priority {
                best = i;
                best_priority = p;
            }
        }
        best
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mwkr" => Ok(Rule::Mwkr),
            "mor" => Ok(Rule::Mor),
            "spt" => Ok(Rule::Spt),
            "fifo" => Ok(Rule::Fifo),
            other => Err(alloc::format!("unknown dispatching rule `{other}`")),
        }
    }
}

/// Work left in `job`: remaining time of an ongoing operation plus the mean
/// duration of every undispatched one.
pub fn remaining_work(state: &ConstructionState<'_>, job: usize) -> f64 {
    let ops = state.instance().job(job);
    let next = state.next_op(job);
    let ongoing = if next > 0 { state.remaining(job, next - 1).map_or(0.0, f64::from) } else { 0.0 };
    ongoing + ops[next..].iter().map(|op| op.mean_duration()).sum::<f64>()
}

pub fn select(state: &ConstructionState<'_>, rule: Rule) -> Result<Candidate, EnvError> {
    let candidates = state.candidates()?;
    Ok(candidates[rule.pick(state, &candidates)])
}

/// Follows `rule` from a copy of `state` to the end and returns the residual
/// makespan measured from `state`'s clock.
pub fn rollout(state: &ConstructionState<'_>, rule: Rule) -> Time {
    let mut sim = state.clone();
    sim.run_to_end(|s, c| rule.pick(s, c));
    residual_makespan(state, &sim)
}
