//! Fork-join worker teams.
//!
//! A [`Team`] is a fixed group of logical workers with dense ids
//! `0..size`. [`Team::fork`] runs one body per worker and joins them all
//! before returning; worker 0 runs on the calling thread and acts as the
//! master. Bodies can synchronise through the team-wide barrier.

use std::any::Any;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::work_sharing::{ScheduleParseError, SchedulePolicy};

/// Environment variable consulted for `runtime` scheduling.
pub const SCHEDULE_ENV: &str = "FORKBENCH_SCHEDULE";
/// Environment variable holding the barrier timeout, in milliseconds.
pub const BARRIER_TIMEOUT_ENV: &str = "FORKBENCH_BARRIER_TIMEOUT_MS";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TeamError {
    #[error("a team needs at least one worker")]
    NoWorkers,
    #[error("worker id {id} out of range for a team of {size}")]
    WorkerOutOfRange { id: usize, size: usize },
    #[error("barrier timed out after {0:?}; some workers never arrived")]
    BarrierTimeout(Duration),
    #[error("barrier broken by a failed worker")]
    BarrierBroken,
    #[error("invalid {var} value {value:?}")]
    InvalidEnv { var: &'static str, value: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleParseError),
    #[error("workers failed: {}", format_failures(.0))]
    WorkersFailed(Vec<WorkerFailure>),
}

impl TeamError {
    /// Ids of the workers that failed, if this is an aggregate failure.
    pub fn failed_workers(&self) -> Vec<usize> {
        match self {
            TeamError::WorkersFailed(f) => f.iter().map(|f| f.worker).collect(),
            _ => Vec::new(),
        }
    }
}

/// One worker's failure inside a fork.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerFailure {
    pub worker: usize,
    pub message: String,
}

impl fmt::Display for WorkerFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "worker {}: {}", self.worker, self.message)
    }
}

fn format_failures(failures: &[WorkerFailure]) -> String {
    failures
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parameters for [`Team::new`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamConfig {
    num_workers: usize,
    runtime_schedule: SchedulePolicy,
    barrier_timeout: Option<Duration>,
}

impl TeamConfig {
    pub fn new(num_workers: usize) -> Result<Self, TeamError> {
        if num_workers == 0 {
            return Err(TeamError::NoWorkers);
        }
        Ok(Self {
            num_workers,
            runtime_schedule: SchedulePolicy::default(),
            barrier_timeout: None,
        })
    }

    /// Builds a config whose runtime schedule and barrier timeout come from
    /// `FORKBENCH_SCHEDULE` and `FORKBENCH_BARRIER_TIMEOUT_MS`.
    pub fn from_env(num_workers: usize) -> Result<Self, TeamError> {
        let schedule = std::env::var(SCHEDULE_ENV).ok();
        let timeout = std::env::var(BARRIER_TIMEOUT_ENV).ok();
        Self::new(num_workers)?
            .with_env_schedule(schedule.as_deref())?
            .with_env_barrier_timeout(timeout.as_deref())
    }

    /// Sets the runtime schedule from a raw environment value.
    pub fn with_env_schedule(mut self, value: Option<&str>) -> Result<Self, TeamError> {
        self.runtime_schedule = resolve_schedule_from_env(value)?;
        Ok(self)
    }

    fn with_env_barrier_timeout(self, value: Option<&str>) -> Result<Self, TeamError> {
        match value.map(str::trim) {
            None | Some("") => Ok(self),
            Some(v) => {
                let ms = v.parse::<u64>().map_err(|_| TeamError::InvalidEnv {
                    var: BARRIER_TIMEOUT_ENV,
                    value: v.to_string(),
                })?;
                Ok(self.with_barrier_timeout(Duration::from_millis(ms)))
            }
        }
    }

    pub fn with_barrier_timeout(mut self, timeout: Duration) -> Self {
        self.barrier_timeout = Some(timeout);
        self
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn runtime_schedule(&self) -> SchedulePolicy {
        self.runtime_schedule
    }
}

/// Parses a schedule environment value of the form `policy[,chunk]`.
///
/// Policy names are `static`, `dynamic` and `guided`, matched
/// case-insensitively; whitespace is ignored. An absent or blank value
/// yields static scheduling with no chunk.
pub fn resolve_schedule_from_env(
    value: Option<&str>,
) -> Result<SchedulePolicy, ScheduleParseError> {
    let Some(raw) = value else {
        return Ok(SchedulePolicy::default());
    };
    let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Ok(SchedulePolicy::default());
    }
    let policy: SchedulePolicy = compact.parse()?;
    if policy == SchedulePolicy::Runtime {
        // `runtime` cannot refer to itself.
        return Err(ScheduleParseError::UnknownPolicy(compact));
    }
    Ok(policy)
}

#[derive(Debug, Default)]
struct BarrierState {
    arrived: usize,
    generation: u64,
    broken: bool,
}

/// A fork-join team of `size` logical workers.
#[derive(Debug)]
pub struct Team {
    size: usize,
    runtime_schedule: SchedulePolicy,
    barrier_timeout: Option<Duration>,
    barrier: Mutex<BarrierState>,
    released: Condvar,
}

impl Team {
    pub fn new(config: TeamConfig) -> Self {
        Self {
            size: config.num_workers,
            runtime_schedule: config.runtime_schedule,
            barrier_timeout: config.barrier_timeout,
            barrier: Mutex::new(BarrierState::default()),
            released: Condvar::new(),
        }
    }

    /// Shorthand for a team of `size` workers with default configuration.
    pub fn with_size(size: usize) -> Result<Self, TeamError> {
        TeamConfig::new(size).map(Self::new)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// The policy `runtime` scheduling resolves to for this team.
    pub fn runtime_schedule(&self) -> SchedulePolicy {
        self.runtime_schedule
    }

    /// Replaces `Runtime` with the team's runtime schedule.
    pub fn resolve(&self, policy: SchedulePolicy) -> SchedulePolicy {
        match policy {
            SchedulePolicy::Runtime => self.runtime_schedule,
            other => other,
        }
    }

    /// Number of completed barrier episodes.
    pub fn barrier_generation(&self) -> u64 {
        self.lock_barrier().generation
    }

    /// Runs `body` once per worker id and joins them all.
    ///
    /// Results come back indexed by worker id. A worker that returns an
    /// error or panics does not stop the others; its failure is reported
    /// after every worker has finished. A failure also breaks the barrier so
    /// that peers blocked on it are released with [`TeamError::BarrierBroken`].
    pub fn fork<R, E, F>(&self, body: F) -> Result<Vec<R>, TeamError>
    where
        F: Fn(&Worker<'_>) -> Result<R, E> + Sync,
        R: Send,
        E: fmt::Display,
    {
        self.reset_barrier();
        let run = |id: usize| -> Result<R, String> {
            let worker = Worker { id, team: self };
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| body(&worker)));
            let result = match outcome {
                Ok(Ok(value)) => Ok(value),
                Ok(Err(e)) => Err(e.to_string()),
                Err(payload) => Err(panic_message(payload)),
            };
            if result.is_err() {
                self.break_barrier();
            }
            result
        };

        let outcomes: Vec<Result<R, String>> = thread::scope(|scope| {
            let handles: Vec<_> = (1..self.size)
                .map(|id| {
                    let run = &run;
                    scope.spawn(move || run(id))
                })
                .collect();
            let mut outcomes = Vec::with_capacity(self.size);
            outcomes.push(run(0));
            for handle in handles {
                // `run` catches panics itself, so join only fails on abort.
                outcomes.push(handle.join().unwrap_or_else(|p| Err(panic_message(p))));
            }
            outcomes
        });

        let mut values = Vec::with_capacity(self.size);
        let mut failures = Vec::new();
        for (worker, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(v) => values.push(v),
                Err(message) => failures.push(WorkerFailure { worker, message }),
            }
        }
        if failures.is_empty() {
            Ok(values)
        } else {
            Err(TeamError::WorkersFailed(failures))
        }
    }

    /// Blocks until all `size` workers have entered the current barrier
    /// generation.
    ///
    /// Every worker of the team must call this the same number of times
    /// within a fork; otherwise the callers deadlock, or time out when a
    /// barrier timeout is configured.
    pub fn barrier_wait(&self, worker_id: usize) -> Result<(), TeamError> {
        if worker_id >= self.size {
            return Err(TeamError::WorkerOutOfRange {
                id: worker_id,
                size: self.size,
            });
        }
        let mut state = self.lock_barrier();
        if state.broken {
            return Err(TeamError::BarrierBroken);
        }
        state.arrived += 1;
        if state.arrived == self.size {
            state.arrived = 0;
            state.generation += 1;
            self.released.notify_all();
            return Ok(());
        }

        let generation = state.generation;
        let deadline = self.barrier_timeout.map(|t| (t, Instant::now() + t));
        while state.generation == generation && !state.broken {
            state = match deadline {
                None => self.released.wait(state).unwrap_or_else(|e| e.into_inner()),
                Some((timeout, at)) => {
                    let now = Instant::now();
                    if now >= at {
                        state.broken = true;
                        self.released.notify_all();
                        return Err(TeamError::BarrierTimeout(timeout));
                    }
                    self.released
                        .wait_timeout(state, at - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
        if state.generation == generation {
            Err(TeamError::BarrierBroken)
        } else {
            Ok(())
        }
    }

    fn lock_barrier(&self) -> MutexGuard<'_, BarrierState> {
        self.barrier.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn reset_barrier(&self) {
        let mut state = self.lock_barrier();
        state.arrived = 0;
        state.broken = false;
    }

    fn break_barrier(&self) {
        let mut state = self.lock_barrier();
        if !state.broken {
            state.broken = true;
            self.released.notify_all();
        }
    }
}

/// A worker's view of its team inside [`Team::fork`].
#[derive(Debug, Clone, Copy)]
pub struct Worker<'t> {
    id: usize,
    team: &'t Team,
}

impl<'t> Worker<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn team(&self) -> &'t Team {
        self.team
    }

    pub fn is_master(&self) -> bool {
        self.id == 0
    }

    pub fn barrier(&self) -> Result<(), TeamError> {
        self.team.barrier_wait(self.id)
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::convert::Infallible;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn zero_workers_rejected() {
        assert_eq!(TeamConfig::new(0), Err(TeamError::NoWorkers));
        assert_eq!(Team::with_size(1).unwrap().size(), 1);
    }

    #[test]
    fn fork_visits_each_id_once() {
        let team = Team::with_size(4).unwrap();
        let ids = team.fork(|w| Ok::<_, Infallible>(w.id())).unwrap();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let set: BTreeSet<_> = ids.into_iter().collect();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn serial_team_returns_body_value() {
        let team = Team::with_size(1).unwrap();
        assert_eq!(team.fork(|_| Ok::<_, Infallible>(7)).unwrap(), vec![7]);
    }

    #[test]
    fn failing_worker_is_reported_after_join() {
        let team = Team::with_size(3).unwrap();
        let done = [const { AtomicUsize::new(0) }; 3];
        let err = team
            .fork(|w| {
                if w.id() == 1 {
                    return Err("boom");
                }
                done[w.id()].store(1, Ordering::SeqCst);
                Ok(())
            })
            .unwrap_err();
        assert_eq!(err.failed_workers(), vec![1]);
        assert_eq!(done[0].load(Ordering::SeqCst), 1);
        assert_eq!(done[2].load(Ordering::SeqCst), 1);
    }

    #[test]
    fn panics_count_as_failures() {
        let team = Team::with_size(2).unwrap();
        let err = team
            .fork(|w| {
                if w.id() == 0 {
                    panic!("master down");
                }
                Ok::<_, Infallible>(())
            })
            .unwrap_err();
        assert_eq!(err.failed_workers(), vec![0]);
        assert!(err.to_string().contains("master down"));
    }

    #[test]
    fn barrier_single_worker_is_immediate() {
        let team = Team::with_size(1).unwrap();
        team.fork(|w| w.barrier()).unwrap();
        assert_eq!(team.barrier_generation(), 1);
    }

    #[test]
    fn barrier_counter_harness() {
        let team = Team::with_size(4).unwrap();
        let counter = AtomicUsize::new(0);
        let seen = team
            .fork(|w| {
                counter.fetch_add(1, Ordering::SeqCst);
                w.barrier()?;
                Ok::<_, TeamError>(counter.load(Ordering::SeqCst))
            })
            .unwrap();
        assert_eq!(seen, vec![4; 4]);
    }

    #[test]
    fn barrier_rejects_out_of_range_id() {
        let team = Team::with_size(2).unwrap();
        assert_eq!(
            team.barrier_wait(2),
            Err(TeamError::WorkerOutOfRange { id: 2, size: 2 })
        );
    }

    #[test]
    fn missing_participant_times_out() {
        let team = Team::new(
            TeamConfig::new(2)
                .unwrap()
                .with_barrier_timeout(Duration::from_millis(100)),
        );
        let err = team
            .fork(|w| if w.id() == 0 { w.barrier() } else { Ok(()) })
            .unwrap_err();
        let TeamError::WorkersFailed(failures) = err else {
            panic!("expected aggregate failure");
        };
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].worker, 0);
        assert!(failures[0].message.contains("timed out"));
    }

    #[test]
    fn failure_releases_barrier_waiters() {
        let team = Team::with_size(3).unwrap();
        let err = team
            .fork(|w| {
                if w.id() == 2 {
                    return Err(TeamError::BarrierBroken);
                }
                w.barrier()
            })
            .unwrap_err();
        assert_eq!(err.failed_workers(), vec![0, 1, 2]);
        // the team is usable again afterwards
        team.fork(|w| w.barrier()).unwrap();
    }

    #[test]
    fn schedule_env_grammar() {
        use SchedulePolicy::*;
        assert_eq!(resolve_schedule_from_env(None), Ok(Static { chunk: None }));
        assert_eq!(
            resolve_schedule_from_env(Some("  ")),
            Ok(Static { chunk: None })
        );
        assert_eq!(
            resolve_schedule_from_env(Some("guided,4")),
            Ok(Guided { min_chunk: 4 })
        );
        assert_eq!(
            resolve_schedule_from_env(Some(" DYNAMIC , 8 ")),
            Ok(Dynamic { chunk: 8 })
        );
        assert_eq!(
            resolve_schedule_from_env(Some("dynamic")),
            Ok(Dynamic { chunk: 1 })
        );
        assert_eq!(
            resolve_schedule_from_env(Some("static,3")),
            Ok(Static { chunk: Some(3) })
        );
        assert_eq!(
            resolve_schedule_from_env(Some("dynamic,0")),
            Err(ScheduleParseError::InvalidChunk("0".into()))
        );
        assert_eq!(
            resolve_schedule_from_env(Some("fifo")),
            Err(ScheduleParseError::UnknownPolicy("fifo".into()))
        );
        assert!(resolve_schedule_from_env(Some("runtime")).is_err());
        assert!(resolve_schedule_from_env(Some("static,x")).is_err());
        assert!(resolve_schedule_from_env(Some("static,1,2")).is_err());
    }

    #[test]
    fn runtime_policy_resolves_through_team() {
        let team = Team::new(
            TeamConfig::new(2)
                .unwrap()
                .with_env_schedule(Some("guided,2"))
                .unwrap(),
        );
        assert_eq!(
            team.resolve(SchedulePolicy::Runtime),
            SchedulePolicy::Guided { min_chunk: 2 }
        );
    }
}
