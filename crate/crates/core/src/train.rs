//! REINFORCE with a normalized, rule-based advantage.
//!
//! For step `t` of an episode the advantage is
//! `A_t = (T_b - T_pi) / T_b`, where both makespans are residual, measured
//! from the step's clock: `T_pi` from the episode's own continuation and `T_b`
//! from committing `a_t` and then following the baseline rule. One Adam ascent
//! step on `sum_t A_t log pi(a_t) + c H(pi_t)` is taken per episode.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{residual_makespan, Candidate, ConstructionState};
use crate::eval::{sample_index, solve_greedy};
use crate::graph::{encode_with, ResidualGraph};
use crate::instance::{generate_training_instance, Instance, InstanceError, ProblemKind};
use crate::nn::{backward, evaluate, forward, GraphBatch, NeuralError, PolicyParams, PolicyShape, StepObjective};
use crate::pdr::Rule;
use crate::Time;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Training instances have `U(3, max_jobs)` jobs.
    pub max_jobs: usize,
    pub max_machines: usize,
    pub kind: ProblemKind,
    pub baseline: Rule,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Episodes between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub shape: PolicyShape,
    /// Graphs per forward/backward batch during an update.
    pub backward_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1_000_000,
            max_jobs: 10,
            max_machines: 10,
            kind: ProblemKind::Jsp,
            baseline: Rule::Mwkr,
            entropy_coef: 1e-2,
            learning_rate: 1e-4,
            lr_decay: 0.99,
            lr_decay_every: 1000,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            checkpoint_every: 1000,
            shape: PolicyShape::default(),
            backward_chunk: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("expected {expected} advantages, got {given}")]
    Advantages { given: usize, expected: usize },
    #[error("nothing to select from")]
    Empty,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = TrainError::Config;
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(bad("learning rate must lie in (0, 1)"));
        }
        if self.entropy_coef.is_nan() || self.entropy_coef < 0.0 {
            return Err(bad("entropy coefficient must be non-negative"));
        }
        if self.episodes == 0 {
            return Err(bad("at least one episode is needed"));
        }
        if self.max_jobs < 3 || self.max_machines < 3 {
            return Err(bad("instance bounds must be at least 3"));
        }
        if self.lr_decay_every == 0 || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(bad("learning-rate decay must be in (0, 1] with a positive period"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_epsilon.is_nan()
            || self.adam_epsilon <= 0.0
        {
            return Err(bad("Adam betas must lie in [0, 1) and epsilon be positive"));
        }
        if self.backward_chunk == 0 || self.shape.hidden == 0 {
            return Err(bad("chunk size and hidden width must be positive"));
        }
        Ok(())
    }

    /// `key=value` lines describing the run, for log headers.
    pub fn describe(&self) -> Vec<String> {
        let s = self.shape;
        alloc::vec![
            alloc::format!("episodes={}", self.episodes),
            alloc::format!("max_jobs={}", self.max_jobs),
            alloc::format!("max_machines={}", self.max_machines),
            alloc::format!("kind={}", self.kind),
            alloc::format!("baseline={}", self.baseline),
            alloc::format!("entropy_coef={}", self.entropy_coef),
            alloc::format!("learning_rate={}", self.learning_rate),
            alloc::format!("lr_decay={}", self.lr_decay),
            alloc::format!("lr_decay_every={}", self.lr_decay_every),
            alloc::format!("beta1={}", self.beta1),
            alloc::format!("beta2={}", self.beta2),
            alloc::format!("adam_epsilon={}", self.adam_epsilon),
            alloc::format!("seed={}", self.seed),
            alloc::format!("checkpoint_every={}", self.checkpoint_every),
            alloc::format!("hidden={}", s.hidden),
            alloc::format!("layers={}", s.layers),
            alloc::format!("mlp_hidden_layers={}", s.mlp_hidden_layers),
        ]
    }
}

/// Learning rate used for the update after `episode` (0-based).
pub fn lr_at(episode: usize, config: &TrainConfig) -> f64 {
    let decays = (episode / config.lr_decay_every) as f64;
    config.learning_rate * libm::pow(config.lr_decay, decays)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: alloc::vec![0.0; len], v: alloc::vec![0.0; len], steps: 0 }
    }

    /// One ascent step along `grad`.
    pub fn ascend(&mut self, params: &mut PolicyParams, grad: &[f64], lr: f64, config: &TrainConfig) {
        let (b1, b2) = (config.beta1, config.beta2);
        self.steps += 1;
        let c1 = 1.0 - libm::pow(b1, self.steps as f64);
        let c2 = 1.0 - libm::pow(b2, self.steps as f64);
        for (((p, g), m), v) in params.as_mut_slice().iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p += lr * (*m / c1) / (libm::sqrt(*v / c2) + config.adam_epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeStep<'a> {
    /// State before the action.
    pub state: ConstructionState<'a>,
    pub graph: ResidualGraph,
    pub candidates: Vec<Candidate>,
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub clock: Time,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace<'a> {
    pub steps: Vec<EpisodeStep<'a>>,
    pub terminal: ConstructionState<'a>,
    pub makespan: Time,
}

/// Rolls out one episode, sampling every action from the policy.
pub fn run_episode<'a, R: Rng + ?Sized>(
    params: &PolicyParams,
    instance: &'a Instance,
    rng: &mut R,
) -> EpisodeTrace<'a> {
    let mut state = ConstructionState::reset(instance);
    let mut steps = Vec::with_capacity(instance.n_ops());
    while !state.is_terminal() {
        let candidates = state.candidates().expect("not terminal");
        let graph = encode_with(&state, &candidates);
        let (action, log_prob, entropy) = if candidates.len() == 1 {
            (0, 0.0, 0.0)
        } else {
            let trace = evaluate(params, &GraphBatch::single(&graph)).expect("candidates present");
            let a = sample_index(&trace.probabilities(0), rng);
            (a, trace.log_probs(0)[a], trace.entropy(0))
        };
        let next = state.after(&candidates[action]).expect("legal candidate");
        let clock = state.clock();
        steps.push(EpisodeStep {
            state: core::mem::replace(&mut state, next),
            graph,
            candidates,
            action,
            log_prob,
            entropy,
            clock,
        });
    }
    let makespan = state.makespan().expect("terminal");
    EpisodeTrace { steps, terminal: state, makespan }
}

/// `(T_b - T_pi) / T_b`, or 0 when both are empty.
pub fn advantage_from(baseline: Time, policy: Time) -> f64 {
    if baseline == 0 {
        0.0
    } else {
        (f64::from(baseline) - f64::from(policy)) / f64::from(baseline)
    }
}

/// Residual makespan from step `t` when its action is followed by `rule`.
pub fn baseline_makespan(trace: &EpisodeTrace<'_>, t: usize, rule: Rule) -> Time {
    let step = &trace.steps[t];
    let mut sim = step.state.after(&step.candidates[step.action]).expect("legal candidate");
    sim.run_to_end(|s, c| rule.pick(s, c));
    residual_makespan(&step.state, &sim)
}

pub fn normalized_advantage(t: usize, trace: &EpisodeTrace<'_>, rule: Rule) -> f64 {
    let own = residual_makespan(&trace.steps[t].state, &trace.terminal);
    advantage_from(baseline_makespan(trace, t, rule), own)
}

pub fn compute_advantages(trace: &EpisodeTrace<'_>, rule: Rule) -> Vec<f64> {
    (0..trace.steps.len()).map(|t| normalized_advantage(t, trace, rule)).collect()
}

/// Gradient of `sum_t A_t log pi(a_t) + c H(pi_t)` over the episode. Steps
/// with one candidate contribute nothing and are skipped.
pub fn episode_gradient(
    params: &PolicyParams,
    trace: &EpisodeTrace<'_>,
    advantages: &[f64],
    entropy_coef: f64,
    chunk: usize,
) -> Result<Vec<f64>, TrainError> {
    if advantages.len() != trace.steps.len() {
        return Err(TrainError::Advantages { given: advantages.len(), expected: trace.steps.len() });
    }
    let mut grad = params.zeroed_like();
    let decisions: Vec<usize> = (0..trace.steps.len()).filter(|&t| trace.steps[t].candidates.len() > 1).collect();
    for part in decisions.chunks(chunk.max(1)) {
        let mut batch = GraphBatch::new();
        let mut objectives = Vec::with_capacity(part.len());
        for &t in part {
            let step = &trace.steps[t];
            batch.push(&step.graph);
            objectives.push(StepObjective {
                action: step.action,
                log_prob_weight: advantages[t],
                entropy_weight: entropy_coef,
            });
        }
        let fwd = forward(params, &batch)?;
        backward(params, &batch, &fwd, &objectives, &mut grad)?;
    }
    Ok(grad)
}

/// Per-episode log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub makespan: Time,
    pub mean_advantage: f64,
    pub entropy: f64,
    pub lr: f64,
    /// The gradient was not finite and no update was applied.
    pub skipped: bool,
}

pub const LOG_HEADER: &str = "episode,makespan,mean_advantage,entropy,lr";

impl EpisodeLog {
    pub fn csv(&self) -> String {
        alloc::format!("{},{},{},{},{}", self.episode, self.makespan, self.mean_advantage, self.entropy, self.lr)
    }
}

/// Applies one update from a finished episode. Returns `false` (leaving
/// parameters and optimizer untouched) when the gradient is not finite.
pub fn update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    trace: &EpisodeTrace<'_>,
    advantages: &[f64],
    config: &TrainConfig,
    episode: usize,
) -> Result<bool, TrainError> {
    let grad = episode_gradient(params, trace, advantages, config.entropy_coef, config.backward_chunk)?;
    if !grad.iter().all(|g| g.is_finite()) {
        return Ok(false);
    }
    adam.ascend(params, &grad, lr_at(episode, config), config);
    Ok(true)
}

/// Drives training one episode at a time; the caller owns logging,
/// checkpointing and how advantages are computed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: PolicyParams,
    pub adam: AdamState,
    rng: ChaCha8Rng,
    episode: usize,
}

impl Trainer {
    /// Fresh Glorot initialization from the configured seed.
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = PolicyParams::init(config.shape, &mut rng);
        Ok(Self { adam: AdamState::new(params.len()), params, rng, episode: 0, config })
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn is_done(&self) -> bool {
        self.episode >= self.config.episodes
    }

    /// Whether a checkpoint is due after the last completed episode.
    pub fn checkpoint_due(&self) -> bool {
        let every = self.config.checkpoint_every;
        every > 0 && self.episode > 0 && (self.episode.is_multiple_of(every) || self.is_done())
    }

    /// One episode with a caller-supplied advantage computation.
    pub fn step_with<F>(&mut self, advantages: F) -> Result<EpisodeLog, TrainError>
    where
        F: FnOnce(&EpisodeTrace<'_>, Rule) -> Vec<f64>,
    {
        let c = &self.config;
        let instance = generate_training_instance(c.max_jobs, c.max_machines, c.kind, &mut self.rng)?;
        let trace = run_episode(&self.params, &instance, &mut self.rng);
        let adv = advantages(&trace, self.config.baseline);
        let applied = update(&mut self.params, &mut self.adam, &trace, &adv, &self.config, self.episode)?;
        let decisions: Vec<&EpisodeStep<'_>> = trace.steps.iter().filter(|s| s.candidates.len() > 1).collect();
        let entropy = if decisions.is_empty() {
            0.0
        } else {
            decisions.iter().map(|s| s.entropy).sum::<f64>() / decisions.len() as f64
        };
        let log = EpisodeLog {
            episode: self.episode,
            makespan: trace.makespan,
            mean_advantage: if adv.is_empty() { 0.0 } else { adv.iter().sum::<f64>() / adv.len() as f64 },
            entropy,
            lr: lr_at(self.episode, &self.config),
            skipped: !applied,
        };
        self.episode += 1;
        Ok(log)
    }

    pub fn step(&mut self) -> Result<EpisodeLog, TrainError> {
        self.step_with(compute_advantages)
    }
}

/// Index of the checkpoint with the lowest mean greedy makespan on
/// `validation`; the earliest wins ties.
pub fn select_checkpoint(checkpoints: &[PolicyParams], validation: &[Instance]) -> Result<usize, TrainError> {
    if checkpoints.is_empty() || validation.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut best = (0, f64::INFINITY);
    for (i, params) in checkpoints.iter().enumerate() {
        let total: f64 = validation.iter().map(|inst| f64::from(solve_greedy(params, inst).makespan)).sum();
        let mean = total / validation.len() as f64;
        if mean < best.1 {
            best = (i, mean);
        }
    }
    Ok(best.0)
}
