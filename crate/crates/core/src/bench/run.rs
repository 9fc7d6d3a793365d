use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::path::Path;
use std::time::Instant;

use fnv::FnvHasher;

use super::{
    BenchError, DistributionKind, ExperimentSpec, KernelId, ModelKind, ResultRow, ResultTable,
};
use crate::kernels::{self, ExecModel, Grid};
use crate::placement::{self, Access, ArrayDescriptor, Distribution, LocalityReport};
use crate::team::{Team, TeamConfig};
use crate::work_sharing::SchedulePolicy;

/// A kernel's result in checksummable form.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelOutput {
    Real(f64),
    Reals(Vec<f64>),
    Count(u64),
    Ints(Vec<i64>),
    Grid(Grid),
    Locality(LocalityReport),
}

/// Rounds to 12 significant digits so results that differ only in the
/// last bits of a floating-point reduction hash the same.
fn round12(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// FNV-1a over the little-endian encoding of the output. Reals are rounded
/// to 12 significant digits first; sequences are prefixed with their length.
pub fn checksum(out: &KernelOutput) -> u64 {
    let mut h = FnvHasher::default();
    let len = |h: &mut FnvHasher, n: usize| h.write(&(n as u64).to_le_bytes());
    match out {
        KernelOutput::Real(x) => h.write(&round12(*x).to_le_bytes()),
        KernelOutput::Reals(xs) => {
            len(&mut h, xs.len());
            for x in xs {
                h.write(&round12(*x).to_le_bytes());
            }
        }
        KernelOutput::Count(c) => h.write(&c.to_le_bytes()),
        KernelOutput::Ints(xs) => {
            len(&mut h, xs.len());
            for x in xs {
                h.write(&x.to_le_bytes());
            }
        }
        KernelOutput::Grid(g) => {
            len(&mut h, g.width());
            len(&mut h, g.height());
            let cells: Vec<u8> = g.cells().iter().map(|&c| c as u8).collect();
            h.write(&cells);
        }
        KernelOutput::Locality(r) => {
            h.write(&r.local_accesses.to_le_bytes());
            h.write(&r.remote_accesses.to_le_bytes());
        }
    }
    h.finish()
}

/// Kernel input, built once per spec outside the timed region.
enum Input {
    Reals(Vec<f64>),
    Ints(Vec<i64>),
    Size(usize),
    Grid(Grid),
    Placement {
        desc: ArrayDescriptor,
        trace: Option<Vec<Access>>,
    },
}

fn open(path: &Path) -> Result<File, BenchError> {
    File::open(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn prepare(spec: &ExperimentSpec) -> Result<Input, BenchError> {
    Ok(match spec.kernel {
        KernelId::Sum => Input::Reals(kernels::random_reals(spec.n, spec.seed)),
        KernelId::RunAvg => Input::Reals((0..spec.n).map(|i| i as f64).collect()),
        KernelId::PrefixSum => Input::Ints(kernels::random_ints(spec.n, spec.seed)),
        KernelId::PiRect | KernelId::PiSimpson | KernelId::Primes => Input::Size(spec.n),
        KernelId::Life => {
            let opts = spec
                .life
                .as_ref()
                .ok_or_else(|| BenchError::Usage("kernel life requires --steps".into()))?;
            let grid = match &opts.grid {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    text.parse()?
                }
                None => Grid::random(spec.n, spec.n, opts.boundary, spec.seed)?,
            };
            Input::Grid(grid)
        }
        KernelId::Placement => {
            let desc = ArrayDescriptor::new(spec.n, spec.placement.elements_per_page)?;
            let trace = match &spec.placement.trace {
                Some(path) => Some(placement::read_trace(open(path)?)?),
                None => None,
            };
            Input::Placement { desc, trace }
        }
    })
}

fn execute(
    spec: &ExperimentSpec,
    input: &Input,
    model: ExecModel,
    team: &Team,
) -> Result<KernelOutput, BenchError> {
    let kernel_err = |source| BenchError::Kernel {
        kernel: spec.kernel,
        source,
    };
    let out = match (spec.kernel, input) {
        (KernelId::Sum, Input::Reals(a)) => {
            KernelOutput::Real(kernels::vector_sum(a, model, team).map_err(kernel_err)?)
        }
        (KernelId::PiRect, &Input::Size(n)) => {
            KernelOutput::Real(kernels::pi_rectangle(n, model, team).map_err(kernel_err)?)
        }
        (KernelId::PiSimpson, &Input::Size(n)) => {
            KernelOutput::Real(kernels::pi_simpson(n, model, team).map_err(kernel_err)?)
        }
        (KernelId::RunAvg, Input::Reals(a)) => {
            KernelOutput::Reals(kernels::running_average(a, model, team).map_err(kernel_err)?)
        }
        (KernelId::PrefixSum, Input::Ints(a)) => {
            KernelOutput::Ints(kernels::prefix_sum(a, model, team).map_err(kernel_err)?)
        }
        (KernelId::Primes, &Input::Size(n)) => {
            KernelOutput::Count(kernels::prime_count(n as u64, model, team).map_err(kernel_err)?)
        }
        (KernelId::Life, Input::Grid(g)) => {
            let opts = spec
                .life
                .as_ref()
                .expect("prepared life input implies options");
            KernelOutput::Grid(
                kernels::life_run(g, opts.steps, opts.decomposition, model, team)
                    .map_err(kernel_err)?,
            )
        }
        (KernelId::Placement, Input::Placement { desc, trace }) => {
            let trace = placement_trace(spec, *desc, trace.as_deref(), team)?;
            let dist = match spec.placement.distribution {
                DistributionKind::Block => Distribution::Block,
                DistributionKind::Cyclic => Distribution::Cyclic,
                DistributionKind::FirstTouch => Distribution::FirstTouch {
                    trace: trace.clone(),
                },
            };
            let map = placement::place_pages(desc, &dist, team.size())?;
            KernelOutput::Locality(placement::locality_cost(&map, desc, &trace)?)
        }
        _ => unreachable!("input built for a different kernel"),
    };
    Ok(out)
}

/// The trace file if one was given, otherwise the schedule's own trace
/// with one memory node per worker.
fn placement_trace(
    spec: &ExperimentSpec,
    desc: ArrayDescriptor,
    file: Option<&[Access]>,
    team: &Team,
) -> Result<Vec<Access>, BenchError> {
    if let Some(trace) = file {
        return Ok(trace.to_vec());
    }
    let policy = match spec.model {
        ModelKind::WorkShare => team.resolve(spec.policy),
        _ => SchedulePolicy::default(),
    };
    Ok(placement::schedule_access_trace(
        desc.extent(),
        policy,
        team.size(),
    )?)
}

/// Locality counted directly from page ownership formulas, independent of
/// the page-map code.
fn placement_oracle(
    spec: &ExperimentSpec,
    desc: ArrayDescriptor,
    trace: &[Access],
    nodes: usize,
) -> KernelOutput {
    let per_page = desc.elements_per_page();
    let pages = desc.extent().div_ceil(per_page);
    let mut first: HashMap<usize, usize> = HashMap::new();
    for a in trace {
        first.entry(a.element / per_page).or_insert(a.node);
    }
    let owner = |page: usize| match spec.placement.distribution {
        DistributionKind::Block => page / pages.div_ceil(nodes),
        DistributionKind::Cyclic => page % nodes,
        DistributionKind::FirstTouch => first.get(&page).copied().unwrap_or(0),
    };
    let local = trace
        .iter()
        .filter(|a| owner(a.element / per_page) == a.node)
        .count() as u64;
    KernelOutput::Locality(LocalityReport {
        local_accesses: local,
        remote_accesses: trace.len() as u64 - local,
    })
}

type OracleKey = (KernelId, usize, u64, String);

/// Runs one spec, reusing serial-oracle checksums from `cache`.
fn run_with_cache(
    spec: &ExperimentSpec,
    cache: &mut HashMap<OracleKey, u64>,
) -> Result<ResultTable, BenchError> {
    let input = prepare(spec)?;
    let model = spec.exec_model();
    let (policy, chunk) = spec.policy_columns();
    let mut table = ResultTable::default();
    let key = (spec.kernel, spec.n, spec.seed, format!("{:?}", spec.life));
    for &p in &spec.workers {
        let team = Team::new(TeamConfig::from_env(p)?);
        let expected = match (&input, spec.kernel) {
            (Input::Placement { desc, trace }, _) => {
                let trace = placement_trace(spec, *desc, trace.as_deref(), &team)?;
                checksum(&placement_oracle(spec, *desc, &trace, p))
            }
            _ => match cache.get(&key) {
                Some(&c) => c,
                None => {
                    let c = checksum(&execute(spec, &input, ExecModel::Serial, &team)?);
                    cache.insert(key.clone(), c);
                    c
                }
            },
        };
        for trial in 0..spec.trials {
            let start = Instant::now();
            let out = execute(spec, &input, model, &team)?;
            let elapsed = start.elapsed();
            let sum = checksum(&out);
            table.rows.push(ResultRow {
                kernel: spec.kernel.to_string(),
                model: spec.model.name().to_string(),
                policy: policy.clone(),
                chunk,
                workers: p,
                n: spec.n,
                trial,
                wall_time_ns: (elapsed.as_nanos() as u64).max(1),
                checksum: sum,
                verified: sum == expected,
            });
        }
    }
    Ok(table)
}

/// Times `spec` at each worker count, `spec.trials` times each, and checks
/// every result against the serial oracle.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable, BenchError> {
    run_with_cache(spec, &mut HashMap::new())
}

/// Runs specs in order, sharing oracle results between them.
pub fn run_experiments(specs: &[ExperimentSpec]) -> Result<ResultTable, BenchError> {
    let mut cache = HashMap::new();
    let mut table = ResultTable::default();
    for spec in specs {
        table.rows.extend(run_with_cache(spec, &mut cache)?.rows);
    }
    Ok(table)
}
