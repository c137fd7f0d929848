use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use graphlab_bench::formats::Problem;
use graphlab_bench::runner::{self, Algo, BenchConfig, BenchError};
use graphlab_bench::synth::{self, SynthOptions, SynthSpec};
use graphlab_core::consistency::{ExecutionTrace, Verdict};
use graphlab_core::{ConsistencyModel, SchedulerKind};

#[derive(Parser)]
#[command(name = "graphlab", about = "Run and check graph-parallel benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an algorithm at one or more worker counts.
    Run(RunArgs),
    /// Write a synthetic problem file.
    Synth {
        #[command(flatten)]
        source: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a recorded trace for sequential consistency.
    CheckTrace {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        algo: Algo,
        #[command(flatten)]
        source: SourceArgs,
        /// Defaults to the algorithm's model.
        #[arg(long)]
        consistency: Option<ConsistencyModel>,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// `grid2d:AxB`, `grid3d:AxBxC`, `random-bipartite:NxM` or `lasso-synth:NxM`.
    #[arg(long)]
    synth: SynthSpec,
    #[arg(long, default_value_t = 2)]
    card: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, conflicts_with = "synth")]
    problem: Option<PathBuf>,
    #[arg(long)]
    synth: Option<SynthSpec>,
    #[arg(long, default_value_t = 2)]
    card: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Generator seed for `--synth`.
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl SourceArgs {
    fn load(&self) -> Result<Problem, BenchError> {
        match (&self.problem, &self.synth) {
            (Some(path), _) => runner::load_problem(path),
            (None, Some(spec)) => {
                let opts = SynthOptions { card: self.card, density: self.density, seed: self.synth_seed };
                synth::synth(spec, &opts).map_err(|e| BenchError::Usage(e.to_string()))
            }
            (None, None) => Err(BenchError::Usage("one of --problem or --synth is required".into())),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algo: Algo,
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    workers: Vec<usize>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    #[arg(long)]
    consistency: Option<ConsistencyModel>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 10)]
    sweeps: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Background learning sync period in milliseconds.
    #[arg(long)]
    sync_period: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Trace of the run with the most workers.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Appends one JSON record per run.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<(), BenchError> {
    let problem = args.source.load()?;
    let cfg = BenchConfig {
        algo: args.algo,
        workers: args.workers,
        scheduler: args.scheduler,
        consistency: args.consistency,
        seed: args.seed,
        tol: args.tol,
        samples: args.samples,
        sweeps: args.sweeps,
        steps: args.steps,
        sync_period: args.sync_period.map(Duration::from_millis),
        lambda: args.lambda,
        record_trace: args.trace_out.is_some(),
    };
    let out = runner::run_bench(&problem, &cfg)?;
    print!("{}", out.report.speedup_table());
    if let Some(path) = &args.report_out {
        out.report.append_to(path)?;
    }
    if let (Some(path), Some(trace)) = (&args.trace_out, &out.trace) {
        trace.write_to(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().cmd {
        Cmd::Run(args) => run(args),
        Cmd::Synth { source, out } => {
            let opts = SynthOptions { card: source.card, density: source.density, seed: source.seed };
            synth::synth(&source.synth, &opts)
                .map_err(|e| BenchError::Usage(e.to_string()))
                .and_then(|p| Ok(std::fs::write(&out, p.write())?))
        }
        Cmd::CheckTrace { trace, algo, source, consistency } => (|| {
            let problem = source.load()?;
            let t = ExecutionTrace::parse(BufReader::new(File::open(&trace)?))?;
            let model = consistency.unwrap_or(algo.default_model());
            match runner::check_trace(&problem, algo, model, &t)? {
                Verdict::Serializable(order) => {
                    println!("serializable: {} updates under {model}", order.len());
                    Ok(())
                }
                Verdict::Violation(c) => Err(BenchError::Usage(format!(
                    "violation: tasks {} and {} conflict on {:?}",
                    c.first, c.second, c.unit
                ))),
            }
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphlab: {e}");
            ExitCode::FAILURE
        }
    }
}
