//! Work-sharing constructs on top of a [`Team`]: parallel loops under the
//! four scheduling policies, reductions and sections.
//!
//! The `parallel_*` functions are called from the controlling context and
//! fork the team themselves. Inside an existing fork, [`Worker::for_each`]
//! and [`Worker::for_each_chunk`] run one worker's share of a loop against a
//! shared [`ChunkSource`], optionally skipping the closing barrier.

mod reduction;
mod schedule;

pub use reduction::{Reducible, ReductionOp};
pub use schedule::{
    plan_static, round_robin_claims, ChunkError, ChunkSource, Claim, IterationRange,
    ScheduleParseError, SchedulePolicy,
};

use thiserror::Error;

use crate::team::{Team, TeamError, Worker};

/// Whether a work-sharing construct ends with a team barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BarrierMode {
    #[default]
    Wait,
    NoWait,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkShareError {
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Team(#[from] TeamError),
}

impl Worker<'_> {
    /// Claims chunks from `source` until it runs dry for this worker, then
    /// waits at the team barrier unless `mode` is [`BarrierMode::NoWait`].
    pub fn for_each_chunk<F>(
        &self,
        source: &ChunkSource,
        mut body: F,
        mode: BarrierMode,
    ) -> Result<(), WorkShareError>
    where
        F: FnMut(IterationRange),
    {
        while let Some(range) = source.claim(self.id())? {
            body(range);
        }
        if mode == BarrierMode::Wait {
            self.barrier()?;
        }
        Ok(())
    }

    /// Runs this worker's share of a sections construct: tasks `id`,
    /// `id + size`, `id + 2 * size`, ...
    pub fn sections(&self, tasks: &[&(dyn Fn() + Sync)]) {
        tasks
            .iter()
            .skip(self.id())
            .step_by(self.team().size())
            .for_each(|task| task());
    }

    /// Per-index form of [`Worker::for_each_chunk`].
    pub fn for_each<F>(
        &self,
        source: &ChunkSource,
        body: F,
        mode: BarrierMode,
    ) -> Result<(), WorkShareError>
    where
        F: Fn(usize),
    {
        self.for_each_chunk(source, |range| range.iter().for_each(&body), mode)
    }
}

fn chunk_source(
    team: &Team,
    extent: usize,
    policy: SchedulePolicy,
) -> Result<ChunkSource, ChunkError> {
    ChunkSource::new(team.resolve(policy), extent, team.size())
}

/// Runs `body(i)` exactly once for every `i` in `[0, extent)`.
///
/// `Runtime` is resolved through the team. With [`BarrierMode::NoWait`]
/// workers skip the closing barrier; completion is still guaranteed by the
/// join when this returns.
pub fn parallel_for<F>(
    team: &Team,
    extent: usize,
    policy: SchedulePolicy,
    body: F,
    mode: BarrierMode,
) -> Result<(), WorkShareError>
where
    F: Fn(usize) + Sync,
{
    let source = chunk_source(team, extent, policy)?;
    team.fork(|w| w.for_each(&source, &body, mode))?;
    Ok(())
}

/// Like [`parallel_for`], but also returns the chunk log in issue order.
pub fn parallel_for_logged<F>(
    team: &Team,
    extent: usize,
    policy: SchedulePolicy,
    body: F,
) -> Result<Vec<Claim>, WorkShareError>
where
    F: Fn(usize) + Sync,
{
    let source = ChunkSource::recording(team.resolve(policy), extent, team.size())?;
    team.fork(|w| w.for_each(&source, &body, BarrierMode::NoWait))?;
    Ok(source.take_log().unwrap_or_default())
}

/// Reduces `body(i)` over `[0, extent)` with `op`.
///
/// Each chunk is folded locally from the identity. At the join the chunk
/// partials are combined in ascending order of their start index, so the
/// result is reproducible for a fixed schedule and worker count even for
/// floating-point payloads.
pub fn parallel_reduce<T, F>(
    team: &Team,
    extent: usize,
    policy: SchedulePolicy,
    op: ReductionOp,
    body: F,
) -> Result<T, WorkShareError>
where
    T: Reducible,
    F: Fn(usize) -> T + Sync,
{
    let source = chunk_source(team, extent, policy)?;
    let per_worker = team.fork(|w| {
        let mut partials = Vec::new();
        w.for_each_chunk(
            &source,
            |range| {
                let partial = range
                    .iter()
                    .fold(op.identity(), |acc, i| op.combine(acc, body(i)));
                partials.push((range.start, partial));
            },
            BarrierMode::NoWait,
        )?;
        Ok::<_, WorkShareError>(partials)
    })?;
    let mut partials: Vec<(usize, T)> = per_worker.into_iter().flatten().collect();
    partials.sort_unstable_by_key(|&(start, _)| start);
    Ok(op.fold(partials.into_iter().map(|(_, v)| v)))
}

/// Evaluates `body(i)` for every index and returns the results in index
/// order.
pub fn parallel_map<T, F>(
    team: &Team,
    extent: usize,
    policy: SchedulePolicy,
    body: F,
) -> Result<Vec<T>, WorkShareError>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let source = chunk_source(team, extent, policy)?;
    let per_worker = team.fork(|w| {
        let mut pieces = Vec::new();
        w.for_each_chunk(
            &source,
            |range| pieces.push((range.start, range.iter().map(&body).collect::<Vec<T>>())),
            BarrierMode::NoWait,
        )?;
        Ok::<_, WorkShareError>(pieces)
    })?;
    let mut pieces: Vec<(usize, Vec<T>)> = per_worker.into_iter().flatten().collect();
    pieces.sort_unstable_by_key(|(start, _)| *start);
    let mut out = Vec::with_capacity(extent);
    for (_, piece) in pieces {
        out.extend(piece);
    }
    Ok(out)
}

/// Runs each task exactly once; task `t` goes to worker `t % team.size()`.
pub fn parallel_sections(team: &Team, tasks: &[&(dyn Fn() + Sync)]) -> Result<(), WorkShareError> {
    team.fork(|w| {
        w.sections(tasks);
        Ok::<_, TeamError>(())
    })?;
    Ok(())
}
