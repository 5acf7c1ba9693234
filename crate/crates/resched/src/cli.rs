//! `resched` command line.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resched_core::env::{gantt_csv, validate};
use resched_core::eval::{report_csv, solve_greedy, summarize, ReferenceTable};
use resched_core::instance::{generate_fjsp, generate_jsp, generate_training_instance, Format, Instance, ProblemKind};
use resched_core::pdr::Rule;
use resched_core::train::{TrainConfig, Trainer, LOG_HEADER};
use resched_core::PolicyShape;

use crate::bench::{run_bench, BenchOptions};
use crate::config::{merge, ConfigFile};
use crate::files::{list_dir, parse_gantt, read_instance, read_text, save_checkpoint, write_atomic, write_instance};
use crate::parallel::{advantages, thread_count};
use crate::policy::{PolicySpec, Solver};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "resched", version, about = "Residual scheduling for job-shop and flexible job-shop problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random instances.
    Generate(GenerateArgs),
    /// Build one schedule and print its makespan.
    Solve(SolveArgs),
    /// Train a policy with REINFORCE.
    Train(TrainArgs),
    /// Run methods over a directory of instances and report gaps.
    Bench(BenchArgs),
    /// Check a schedule against an instance.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, requires = "machines", conflicts_with = "train_dist")]
    pub jobs: Option<usize>,
    #[arg(long, requires = "jobs")]
    pub machines: Option<usize>,
    /// Sample sizes as for training: n ~ U(3, N), m ~ U(3, min(n, M)).
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    pub train_dist: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "jsp")]
    pub kind: ProblemKind,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Instance format; guessed from the file when omitted.
    #[arg(long)]
    pub format: Option<Format>,
    /// pdr:<mwkr|mor|spt|fifo>, model:<checkpoint> or random.
    #[arg(long, default_value = "pdr:mwkr")]
    pub policy: PolicySpec,
    /// Best of this many sampled schedules (model and random policies).
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the schedule as job,op,machine,start,end rows.
    #[arg(long)]
    pub gantt: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory for the log and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub max_jobs: Option<usize>,
    #[arg(long)]
    pub max_machines: Option<usize>,
    #[arg(long)]
    pub kind: Option<ProblemKind>,
    #[arg(long)]
    pub baseline: Option<Rule>,
    #[arg(long)]
    pub entropy_coef: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Generated validation instances used to keep the best checkpoint as
    /// best.bin; 0 disables selection.
    #[arg(long)]
    pub validation: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print progress every this many episodes (0 for silence).
    #[arg(long, default_value_t = 1000)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// Reference CSV `benchmark,instance,makespan`.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Comma-separated policy specs.
    #[arg(long, value_delimiter = ',', default_value = "pdr:mwkr,pdr:mor,pdr:spt,pdr:fifo")]
    pub methods: Vec<PolicySpec>,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print per-class mean gaps to stderr.
    #[arg(long)]
    pub summary: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub format: Option<Format>,
    /// Schedule CSV with job,op,machine,start,end rows.
    #[arg(long)]
    pub schedule: PathBuf,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train(a),
        Command::Bench(a) => bench(a),
        Command::Validate(a) => validate_cmd(a),
    }
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;
    let format = match a.kind {
        ProblemKind::Jsp => Format::Orlib,
        ProblemKind::Fjsp => Format::Fjsp,
    };
    for idx in 0..a.count {
        let inst = match (&a.train_dist, a.jobs, a.machines) {
            (Some(d), _, _) => generate_training_instance(d[0], d[1], a.kind, &mut rng),
            (None, Some(n), Some(m)) => match a.kind {
                ProblemKind::Jsp => generate_jsp(n, m, &mut rng),
                ProblemKind::Fjsp => generate_fjsp(n, m, &mut rng),
            },
            _ => return Err(CliError::Usage("give --jobs and --machines, or --train-dist N M".into())),
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let name = format!("{}_{}x{}_{idx}.txt", a.kind, inst.n_jobs(), inst.n_machines());
        write_instance(&a.out.join(name), &inst, format)?;
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<(), CliError> {
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let inst = read_instance(&a.instance, a.format)?;
    let solver = Solver::load(&a.policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let sol = solver.solve(&inst, a.samples, &mut rng, thread_count(a.threads));
    println!("makespan {}", sol.makespan);
    if let Some(path) = &a.gantt {
        fs::write(path, gantt_csv(&sol.records)).map_err(CliError::io(path))?;
    }
    report_violations(&sol.records, &inst)
}

fn report_violations(records: &[resched_core::DispatchRecord], inst: &Instance) -> Result<(), CliError> {
    match validate(records, inst) {
        Ok(()) => Ok(()),
        Err(violations) => {
            for v in &violations {
                eprintln!("{v}");
            }
            Err(CliError::Invalid(format!("{} constraint violations", violations.len())))
        }
    }
}

const TRAIN_KEYS: [&str; 14] = [
    "episodes",
    "max_jobs",
    "max_machines",
    "kind",
    "baseline",
    "entropy_coef",
    "learning_rate",
    "lr_decay",
    "lr_decay_every",
    "seed",
    "checkpoint_every",
    "hidden",
    "layers",
    "validation",
];

/// Training configuration from defaults, then the config file, then flags.
pub fn train_config(a: &TrainArgs, file: &ConfigFile) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let shape = PolicyShape {
        hidden: merge(a.hidden, file, "hidden", d.shape.hidden)?,
        layers: merge(a.layers, file, "layers", d.shape.layers)?,
        mlp_hidden_layers: d.shape.mlp_hidden_layers,
    };
    let c = TrainConfig {
        episodes: merge(a.episodes, file, "episodes", d.episodes)?,
        max_jobs: merge(a.max_jobs, file, "max_jobs", d.max_jobs)?,
        max_machines: merge(a.max_machines, file, "max_machines", d.max_machines)?,
        kind: merge(a.kind, file, "kind", d.kind)?,
        baseline: merge(a.baseline, file, "baseline", d.baseline)?,
        entropy_coef: merge(a.entropy_coef, file, "entropy_coef", d.entropy_coef)?,
        learning_rate: merge(a.learning_rate, file, "learning_rate", d.learning_rate)?,
        lr_decay: merge(a.lr_decay, file, "lr_decay", d.lr_decay)?,
        lr_decay_every: merge(a.lr_decay_every, file, "lr_decay_every", d.lr_decay_every)?,
        seed: merge(a.seed, file, "seed", d.seed)?,
        checkpoint_every: merge(a.checkpoint_every, file, "checkpoint_every", d.checkpoint_every)?,
        shape,
        ..d
    };
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn mean_greedy(params: &resched_core::PolicyParams, validation: &[Instance]) -> f64 {
    let total: f64 = validation.iter().map(|i| f64::from(solve_greedy(params, i).makespan)).sum();
    total / validation.len() as f64
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let file = match &a.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    for key in file.unknown_keys(&TRAIN_KEYS) {
        eprintln!("warning: unknown config key `{key}`");
    }
    let config = train_config(&a, &file)?;
    let n_validation = merge(a.validation, &file, "validation", 0usize)?;
    let threads = thread_count(a.threads);
    fs::create_dir_all(&a.out).map_err(CliError::io(&a.out))?;

    let validation: Vec<Instance> = {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        (0..n_validation)
            .map(|_| generate_training_instance(config.max_jobs, config.max_machines, config.kind, &mut rng))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?
    };

    let log_path = a.out.join("train_log.csv");
    let mut log = fs::File::create(&log_path).map_err(CliError::io(&log_path))?;
    let mut header = String::new();
    for line in config.describe() {
        header.push_str(&format!("# {line}\n"));
    }
    header.push_str(LOG_HEADER);
    header.push('\n');
    log.write_all(header.as_bytes()).map_err(CliError::io(&log_path))?;

    let mut trainer = Trainer::new(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut best = f64::INFINITY;
    while !trainer.is_done() {
        let row = trainer
            .step_with(|trace, rule| advantages(trace, rule, threads))
            .map_err(|e| CliError::Data(e.to_string()))?;
        if row.skipped {
            eprintln!("warning: episode {} produced a non-finite gradient; update skipped", row.episode);
        }
        writeln!(log, "{}", row.csv()).map_err(CliError::io(&log_path))?;
        if a.progress > 0 && (row.episode + 1) % a.progress == 0 {
            eprintln!(
                "episode {} makespan {} advantage {:.4} entropy {:.4}",
                row.episode + 1,
                row.makespan,
                row.mean_advantage,
                row.entropy
            );
        }
        if trainer.checkpoint_due() {
            let ep = trainer.episode();
            save_checkpoint(&a.out.join(format!("ckpt_{ep:08}.bin")), &trainer.params)?;
            save_checkpoint(&a.out.join("latest.bin"), &trainer.params)?;
            if !validation.is_empty() {
                let score = mean_greedy(&trainer.params, &validation);
                if score < best {
                    best = score;
                    save_checkpoint(&a.out.join("best.bin"), &trainer.params)?;
                }
            }
        }
    }
    log.flush().map_err(CliError::io(&log_path))?;
    save_checkpoint(&a.out.join("latest.bin"), &trainer.params)
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let references = match &a.reference {
        Some(path) => Some(
            ReferenceTable::parse(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        ),
        None => {
            eprintln!("warning: no --ref given, gaps are NaN");
            None
        }
    };
    let solvers: Vec<Solver> = a.methods.iter().map(Solver::load).collect::<Result<_, _>>()?;
    let files = list_dir(&a.dir)?;
    let outcome = run_bench(
        &files,
        &BenchOptions {
            solvers: &solvers,
            samples: a.samples,
            seed: a.seed,
            threads: thread_count(a.threads),
            references: references.as_ref(),
        },
    );
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let csv = report_csv(&outcome.rows);
    match &a.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    if a.summary {
        for c in summarize(&outcome.rows) {
            eprintln!(
                "{} {}x{} {} mean_gap {:.4} over {} ({} without reference)",
                c.benchmark, c.n, c.m, c.method, c.mean_gap, c.instances, c.missing
            );
        }
    }
    if outcome.invalid > 0 {
        return Err(CliError::Invalid(format!("{} schedules failed validation", outcome.invalid)));
    }
    Ok(())
}

fn validate_cmd(a: ValidateArgs) -> Result<(), CliError> {
    let inst = read_instance(&a.instance, a.format)?;
    let records = parse_gantt(&read_text(Path::new(&a.schedule))?)?;
    report_violations(&records, &inst)?;
    let makespan = records.iter().map(|r| r.end).max().unwrap_or(0);
    println!("ok makespan {makespan}");
    Ok(())
}
