//! Benchmark kernels in serial, work-sharing and message-passing forms.
//!
//! Every kernel takes an [`ExecModel`] and a [`Team`]; the team's size is
//! the degree of parallelism. Serial runs ignore the team, so the serial
//! variants double as correctness oracles for the parallel ones.

mod life;
mod numeric;
mod scan;

pub use life::{life_run, life_step_serial, Boundary, Decomposition, Grid, GridParseError};
pub use numeric::{
    is_prime, pi_rectangle, pi_simpson, prime_count, running_average, running_average_counted,
    vector_sum,
};
pub use scan::prefix_sum;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::message_passing::{Communicator, MpError, Wire};
use crate::team::{Team, TeamError};
use crate::work_sharing::{
    parallel_map, parallel_reduce, Reducible, ReductionOp, SchedulePolicy, WorkShareError,
};

/// How a kernel is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecModel {
    Serial,
    WorkShare { policy: SchedulePolicy },
    MessagePass,
}

impl ExecModel {
    pub fn name(&self) -> &'static str {
        match self {
            ExecModel::Serial => "serial",
            ExecModel::WorkShare { .. } => "work-share",
            ExecModel::MessagePass => "message-pass",
        }
    }
}

impl fmt::Display for ExecModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecModel::WorkShare { policy } => write!(f, "work-share({policy})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    WorkShare(#[from] WorkShareError),
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error(transparent)]
    MessagePassing(#[from] MpError),
}

/// Reduces `f(i)` over `[0, n)` under the given model.
///
/// Message passing deals indices to ranks cyclically, folds locally, then
/// reduces to rank 0 and broadcasts the result back.
pub(crate) fn reduce_indices<T, F>(
    n: usize,
    model: ExecModel,
    team: &Team,
    op: ReductionOp,
    f: F,
) -> Result<T, KernelError>
where
    T: Reducible + Wire,
    F: Fn(usize) -> T + Sync,
{
    match model {
        ExecModel::Serial => Ok(op.fold((0..n).map(f))),
        ExecModel::WorkShare { policy } => Ok(parallel_reduce(team, n, policy, op, f)?),
        ExecModel::MessagePass => {
            let comm = Communicator::from_env(team.size())?;
            let p = team.size();
            let all = comm.run(team, |ep| {
                let local = op.fold((ep.rank()..n).step_by(p).map(&f));
                ep.allreduce(op, local)
            })?;
            Ok(all[0])
        }
    }
}

/// Evaluates `f(i)` for every index under the given model, results in
/// index order.
pub(crate) fn map_indices<T, F>(
    n: usize,
    model: ExecModel,
    team: &Team,
    f: F,
) -> Result<Vec<T>, KernelError>
where
    T: Send + Copy + Default,
    Vec<T>: Wire,
    F: Fn(usize) -> T + Sync,
{
    const GATHER: u32 = 1;
    match model {
        ExecModel::Serial => Ok((0..n).map(f).collect()),
        ExecModel::WorkShare { policy } => Ok(parallel_map(team, n, policy, f)?),
        ExecModel::MessagePass => {
            let comm = Communicator::from_env(team.size())?;
            let p = team.size();
            let mut all = comm.run(team, |ep| {
                let mine: Vec<T> = (ep.rank()..n).step_by(p).map(&f).collect();
                if ep.rank() != 0 {
                    ep.send_value(0, GATHER, &mine)?;
                    return Ok(Vec::new());
                }
                let mut out = vec![T::default(); n];
                for (k, v) in mine.into_iter().enumerate() {
                    out[k * p] = v;
                }
                for src in 1..p {
                    let theirs: Vec<T> = ep.recv_value(src, GATHER)?;
                    for (k, v) in theirs.into_iter().enumerate() {
                        out[src + k * p] = v;
                    }
                }
                Ok(out)
            })?;
            Ok(all.swap_remove(0))
        }
    }
}

/// Balanced contiguous split: part `k` of `parts` over `[0, total)`.
pub(crate) fn split_bounds(k: usize, parts: usize, total: usize) -> (usize, usize) {
    (k * total / parts, (k + 1) * total / parts)
}

/// `n` reals drawn uniformly from `[0, 1)` with a fixed seed.
pub fn random_reals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// `n` integers drawn uniformly from `[-1000, 1000]` with a fixed seed.
pub fn random_ints(n: usize, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1000..=1000)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_bounds_cover() {
        let parts: Vec<_> = (0..3).map(|k| split_bounds(k, 3, 10)).collect();
        assert_eq!(parts, vec![(0, 3), (3, 6), (6, 10)]);
    }

    #[test]
    fn seeded_data_is_reproducible() {
        assert_eq!(random_reals(5, 3), random_reals(5, 3));
        assert_ne!(random_ints(5, 3), random_ints(5, 4));
        assert!(random_ints(1000, 1)
            .iter()
            .all(|v| (-1000..=1000).contains(v)));
    }

    #[test]
    fn map_indices_models_agree() {
        for p in [1, 3] {
            let team = Team::with_size(p).unwrap();
            for model in [
                ExecModel::Serial,
                ExecModel::WorkShare {
                    policy: SchedulePolicy::Dynamic { chunk: 2 },
                },
                ExecModel::MessagePass,
            ] {
                let got = map_indices(10, model, &team, |i| i as f64 * 0.5).unwrap();
                assert_eq!(got, (0..10).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
            }
        }
    }
}
