use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::{
    BenchError, DistributionKind, ExperimentSpec, KernelId, LifeOptions, ModelKind,
    PlacementOptions,
};
use crate::kernels::{Boundary, Decomposition};
use crate::work_sharing::SchedulePolicy;

#[derive(Debug, Parser)]
#[command(
    name = "forkbench",
    version,
    about = "Time parallel kernels across schedules and worker counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time one configuration at each worker count.
    Run(RunArgs),
    /// Time every policy x chunk combination at each worker count.
    Sweep(SweepArgs),
    /// Recompute the summary for an existing results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct KernelArgs {
    /// sum, pi-rect, pi-simpson, run-avg, life, prefix-sum, primes, placement
    #[arg(long)]
    kernel: KernelId,
    /// serial, work-share or message-pass
    #[arg(long, default_value = "work-share")]
    model: ModelKind,
    /// Problem size: elements, intervals, grid side or prime bound.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Generations to run (life).
    #[arg(long)]
    steps: Option<usize>,
    /// row, col or RxC tiles (life).
    #[arg(long, default_value = "row")]
    decomposition: Decomposition,
    /// dead or toroidal (life).
    #[arg(long, default_value = "dead")]
    boundary: Boundary,
    /// Grid fixture file (life).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// block, cyclic or first-touch (placement).
    #[arg(long, default_value = "block")]
    distribution: DistributionKind,
    /// Elements per page (placement).
    #[arg(long, default_value_t = 1)]
    page_size: usize,
    /// Access trace CSV of `element,node` records (placement).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// static, dynamic, guided or runtime
    #[arg(long, default_value = "static")]
    policy: String,
    /// Chunk size, or guided minimum chunk.
    #[arg(long)]
    chunk: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Comma-separated policies; `name:chunk` pins that policy's chunk.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "static,dynamic,guided,runtime"
    )]
    policies: Vec<String>,
    /// Comma-separated chunk sizes; `none` for the policy default.
    #[arg(long, value_delimiter = ',', default_value = "none")]
    chunks: Vec<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results CSV written by `run` or `sweep`.
    input: PathBuf,
}

/// What the binary should do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invocation {
    Run {
        specs: Vec<ExperimentSpec>,
        out: Option<PathBuf>,
    },
    Report {
        input: PathBuf,
    },
}

/// Parses a full argument list, program name first.
pub fn parse_args<I, T>(argv: I) -> Result<Invocation, BenchError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| BenchError::Cli(Box::new(e)))?;
    match cli.command {
        Command::Run(args) => {
            let policy = policy_from(&args.policy, args.chunk)?;
            let out = args.kernel.out.clone();
            Ok(Invocation::Run {
                specs: vec![spec_from(&args.kernel, policy, args.chunk)?],
                out,
            })
        }
        Command::Sweep(args) => {
            let chunks = args
                .chunks
                .iter()
                .map(|c| chunk_token(c, "--chunks"))
                .collect::<Result<Vec<_>, _>>()?;
            let mut specs = Vec::new();
            if args.kernel.model == ModelKind::WorkShare {
                for token in &args.policies {
                    // `name:chunk` pins the chunk instead of crossing with --chunks
                    let (name, pinned) = match token.split_once(':') {
                        Some((name, c)) => (name, vec![chunk_token(c, "--policies")?]),
                        None => (token.as_str(), chunks.clone()),
                    };
                    for chunk in pinned {
                        specs.push(spec_from(&args.kernel, policy_from(name, chunk)?, chunk)?);
                    }
                }
            } else {
                specs.push(spec_from(&args.kernel, SchedulePolicy::default(), None)?);
            }
            Ok(Invocation::Run {
                specs,
                out: args.kernel.out.clone(),
            })
        }
        Command::Report(args) => Ok(Invocation::Report { input: args.input }),
    }
}

fn chunk_token(token: &str, flag: &str) -> Result<Option<usize>, BenchError> {
    match token.trim() {
        "none" => Ok(None),
        tok => tok
            .parse::<usize>()
            .ok()
            .filter(|&c| c > 0)
            .map(Some)
            .ok_or_else(|| BenchError::Usage(format!("{flag}: bad chunk {tok:?}"))),
    }
}

fn policy_from(name: &str, chunk: Option<usize>) -> Result<SchedulePolicy, BenchError> {
    SchedulePolicy::from_parts(name.trim(), chunk)
        .map_err(|e| BenchError::Usage(format!("--policy: {e}")))
}

fn spec_from(
    args: &KernelArgs,
    policy: SchedulePolicy,
    chunk: Option<usize>,
) -> Result<ExperimentSpec, BenchError> {
    let life = match (args.kernel, args.steps) {
        (KernelId::Life, None) => {
            return Err(BenchError::Usage("kernel life requires --steps".into()))
        }
        (_, Some(steps)) => Some(LifeOptions {
            steps,
            decomposition: args.decomposition,
            boundary: args.boundary,
            grid: args.grid.clone(),
        }),
        (_, None) => None,
    };
    let mut spec = ExperimentSpec {
        kernel: args.kernel,
        model: args.model,
        policy,
        chunk,
        workers: args.workers.clone(),
        n: args.n,
        trials: args.trials,
        seed: args.seed,
        life,
        placement: PlacementOptions {
            distribution: args.distribution,
            elements_per_page: args.page_size,
            trace: args.trace.clone(),
        },
    };
    spec.normalize()?;
    Ok(spec)
}
