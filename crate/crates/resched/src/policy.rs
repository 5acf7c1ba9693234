//! Policy specifications: `pdr:<rule>`, `model:<checkpoint>` or `random`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngCore;
use resched_core::eval::{solve_greedy, solve_rule, Policy, Solution};
use resched_core::instance::Instance;
use resched_core::pdr::Rule;
use resched_core::PolicyParams;

use crate::files::load_checkpoint;
use crate::parallel::best_of_k;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Pdr(Rule),
    Model(PathBuf),
    Random,
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("random") {
            return Ok(PolicySpec::Random);
        }
        match s.split_once(':') {
            Some(("pdr", rule)) => rule.parse().map(PolicySpec::Pdr),
            Some(("model", path)) if !path.is_empty() => Ok(PolicySpec::Model(PathBuf::from(path))),
            _ => Err(format!("bad policy `{s}`: expected pdr:<rule>, model:<checkpoint> or random")),
        }
    }
}

/// A policy ready to run.
#[derive(Debug, Clone)]
pub enum Solver {
    Pdr(Rule),
    Model(PolicyParams),
    Random,
}

impl Solver {
    pub fn load(spec: &PolicySpec) -> Result<Self, CliError> {
        Ok(match spec {
            PolicySpec::Pdr(rule) => Solver::Pdr(*rule),
            PolicySpec::Model(path) => Solver::Model(load_checkpoint(Path::new(path))?),
            PolicySpec::Random => Solver::Random,
        })
    }

    /// Report label; sampled model runs are tagged with their sample count.
    pub fn label(&self, samples: usize) -> String {
        match self {
            Solver::Pdr(rule) => rule.name().to_string(),
            Solver::Model(_) if samples > 1 => format!("model+{samples}"),
            Solver::Model(_) => "model".to_string(),
            Solver::Random if samples > 1 => format!("random+{samples}"),
            Solver::Random => "random".to_string(),
        }
    }

    /// Rules and the greedy model are deterministic; `samples > 1` turns a
    /// model into best-of-k sampling and random into best-of-k random runs.
    pub fn solve<R: RngCore + ?Sized>(
        &self,
        instance: &Instance,
        samples: usize,
        rng: &mut R,
        threads: usize,
    ) -> Solution {
        match self {
            Solver::Pdr(rule) => solve_rule(*rule, instance),
            Solver::Model(params) if samples <= 1 => solve_greedy(params, instance),
            Solver::Model(params) => best_of_k(Policy::Sample(params), instance, samples, rng, threads),
            Solver::Random => best_of_k(Policy::Random, instance, samples, rng, threads),
        }
    }
}
