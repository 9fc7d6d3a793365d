//! Loop scheduling: how an iteration space `[0, extent)` is dealt out to
//! the workers of a team.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

/// Loop scheduling policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulePolicy {
    /// Blocks assigned up front. Without a chunk each worker gets one
    /// contiguous block; with a chunk, blocks are dealt round-robin.
    Static { chunk: Option<usize> },
    /// Workers take `chunk` iterations at a time from a shared queue.
    Dynamic { chunk: usize },
    /// Like dynamic, but the block size starts large and shrinks towards
    /// `min_chunk`.
    Guided { min_chunk: usize },
    /// Resolved from the team's configured runtime schedule.
    Runtime,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        SchedulePolicy::Static { chunk: None }
    }
}

impl SchedulePolicy {
    pub const DEFAULT_DYNAMIC_CHUNK: usize = 1;
    pub const DEFAULT_GUIDED_MIN: usize = 1;

    /// Builds a policy from a name and an optional chunk.
    pub fn from_parts(name: &str, chunk: Option<usize>) -> Result<Self, ScheduleParseError> {
        if chunk == Some(0) {
            return Err(ScheduleParseError::InvalidChunk("0".into()));
        }
        match name.to_ascii_lowercase().as_str() {
            "static" => Ok(SchedulePolicy::Static { chunk }),
            "dynamic" => Ok(SchedulePolicy::Dynamic {
                chunk: chunk.unwrap_or(Self::DEFAULT_DYNAMIC_CHUNK),
            }),
            "guided" => Ok(SchedulePolicy::Guided {
                min_chunk: chunk.unwrap_or(Self::DEFAULT_GUIDED_MIN),
            }),
            "runtime" => Ok(SchedulePolicy::Runtime),
            _ => Err(ScheduleParseError::UnknownPolicy(name.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulePolicy::Static { .. } => "static",
            SchedulePolicy::Dynamic { .. } => "dynamic",
            SchedulePolicy::Guided { .. } => "guided",
            SchedulePolicy::Runtime => "runtime",
        }
    }

    pub fn chunk(&self) -> Option<usize> {
        match *self {
            SchedulePolicy::Static { chunk } => chunk,
            SchedulePolicy::Dynamic { chunk } => Some(chunk),
            SchedulePolicy::Guided { min_chunk } => Some(min_chunk),
            SchedulePolicy::Runtime => None,
        }
    }
}

impl fmt::Display for SchedulePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chunk() {
            Some(c) => write!(f, "{},{}", self.name(), c),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleParseError {
    #[error("unknown schedule policy {0:?}")]
    UnknownPolicy(String),
    #[error("chunk must be a positive integer, got {0:?}")]
    InvalidChunk(String),
}

/// Parses `policy[,chunk]`, case-insensitive.
impl FromStr for SchedulePolicy {
    type Err = ScheduleParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(',');
        let name = parts.next().unwrap_or_default().trim();
        let chunk = match parts.next() {
            None => None,
            Some(tok) => {
                let tok = tok.trim();
                match tok.parse::<usize>() {
                    Ok(c) if c > 0 => Some(c),
                    _ => return Err(ScheduleParseError::InvalidChunk(tok.to_string())),
                }
            }
        };
        if let Some(extra) = parts.next() {
            return Err(ScheduleParseError::InvalidChunk(extra.trim().to_string()));
        }
        Self::from_parts(name, chunk)
    }
}

/// Half-open iteration range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IterationRange {
    pub start: usize,
    pub end: usize,
}

impl IterationRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl From<IterationRange> for std::ops::Range<usize> {
    fn from(r: IterationRange) -> Self {
        r.start..r.end
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("worker id {id} out of range for {workers} workers")]
    WorkerOutOfRange { id: usize, workers: usize },
    #[error("runtime schedule must be resolved before building a chunk source")]
    UnresolvedRuntime,
    #[error("a chunk source needs at least one worker")]
    NoWorkers,
    #[error("chunk size must be positive")]
    ZeroChunk,
}

/// Static assignment of `[0, extent)` to `workers` workers.
///
/// Without a chunk, worker `w` receives the single block starting at
/// `w * ceil(extent / workers)`. With a chunk, blocks of `chunk` iterations
/// are dealt round-robin. Empty blocks are never listed.
pub fn plan_static(
    extent: usize,
    workers: usize,
    chunk: Option<usize>,
) -> Vec<Vec<IterationRange>> {
    assert!(workers >= 1, "plan_static needs at least one worker");
    let mut plan = vec![Vec::new(); workers];
    match chunk {
        None => {
            let block = extent.div_ceil(workers);
            for (w, ranges) in plan.iter_mut().enumerate() {
                let start = (w * block).min(extent);
                let end = (start + block).min(extent);
                if start < end {
                    ranges.push(IterationRange::new(start, end));
                }
            }
        }
        Some(chunk) => {
            assert!(chunk >= 1, "chunk must be positive");
            for (b, start) in (0..extent).step_by(chunk).enumerate() {
                let end = (start + chunk).min(extent);
                plan[b % workers].push(IterationRange::new(start, end));
            }
        }
    }
    plan
}

/// One issued chunk, as recorded by a logging [`ChunkSource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claim {
    pub worker: usize,
    pub range: IterationRange,
}

#[derive(Debug)]
enum Dealer {
    Static {
        plan: Vec<Vec<IterationRange>>,
        next: Vec<AtomicUsize>,
    },
    Dynamic {
        chunk: usize,
        cursor: AtomicUsize,
    },
    Guided {
        min_chunk: usize,
        cursor: AtomicUsize,
    },
}

/// Shared state that hands out disjoint, non-empty iteration ranges.
///
/// Safe to claim from concurrently; every range is issued at most once and
/// exhausting the source covers `[0, extent)` exactly.
#[derive(Debug)]
pub struct ChunkSource {
    extent: usize,
    workers: usize,
    policy: SchedulePolicy,
    dealer: Dealer,
    log: Option<Mutex<Vec<Claim>>>,
}

impl ChunkSource {
    pub fn new(policy: SchedulePolicy, extent: usize, workers: usize) -> Result<Self, ChunkError> {
        if workers == 0 {
            return Err(ChunkError::NoWorkers);
        }
        if policy.chunk() == Some(0) {
            return Err(ChunkError::ZeroChunk);
        }
        let dealer = match policy {
            SchedulePolicy::Static { chunk } => {
                let plan = plan_static(extent, workers, chunk);
                let next = (0..workers).map(|_| AtomicUsize::new(0)).collect();
                Dealer::Static { plan, next }
            }
            SchedulePolicy::Dynamic { chunk } => Dealer::Dynamic {
                chunk,
                cursor: AtomicUsize::new(0),
            },
            SchedulePolicy::Guided { min_chunk } => Dealer::Guided {
                min_chunk,
                cursor: AtomicUsize::new(0),
            },
            SchedulePolicy::Runtime => return Err(ChunkError::UnresolvedRuntime),
        };
        Ok(Self {
            extent,
            workers,
            policy,
            dealer,
            log: None,
        })
    }

    /// Like [`ChunkSource::new`], but remembers every claim in issue order.
    pub fn recording(
        policy: SchedulePolicy,
        extent: usize,
        workers: usize,
    ) -> Result<Self, ChunkError> {
        let mut source = Self::new(policy, extent, workers)?;
        source.log = Some(Mutex::new(Vec::new()));
        Ok(source)
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn policy(&self) -> SchedulePolicy {
        self.policy
    }

    /// Takes the next range for `worker_id`, or `None` once nothing is left
    /// for it.
    pub fn claim(&self, worker_id: usize) -> Result<Option<IterationRange>, ChunkError> {
        if worker_id >= self.workers {
            return Err(ChunkError::WorkerOutOfRange {
                id: worker_id,
                workers: self.workers,
            });
        }
        let range = match &self.dealer {
            Dealer::Static { plan, next } => {
                let mine = &plan[worker_id];
                let k = next[worker_id].fetch_add(1, Ordering::Relaxed);
                mine.get(k).copied()
            }
            Dealer::Dynamic { chunk, cursor } => {
                let start = cursor.fetch_add(*chunk, Ordering::Relaxed);
                (start < self.extent)
                    .then(|| IterationRange::new(start, (start + chunk).min(self.extent)))
            }
            Dealer::Guided { min_chunk, cursor } => {
                let mut start = cursor.load(Ordering::Relaxed);
                loop {
                    if start >= self.extent {
                        break None;
                    }
                    let remaining = self.extent - start;
                    let size = remaining
                        .div_ceil(self.workers)
                        .max(*min_chunk)
                        .min(remaining);
                    match cursor.compare_exchange_weak(
                        start,
                        start + size,
                        Ordering::Relaxed,
                        Ordering::Relaxed,
                    ) {
                        Ok(_) => break Some(IterationRange::new(start, start + size)),
                        Err(current) => start = current,
                    }
                }
            }
        };
        if let (Some(range), Some(log)) = (range, &self.log) {
            log.lock().unwrap_or_else(|e| e.into_inner()).push(Claim {
                worker: worker_id,
                range,
            });
        }
        Ok(range)
    }

    /// Recorded claims, if this source was built with [`ChunkSource::recording`].
    pub fn take_log(&self) -> Option<Vec<Claim>> {
        self.log
            .as_ref()
            .map(|log| std::mem::take(&mut *log.lock().unwrap_or_else(|e| e.into_inner())))
    }
}

/// Deterministic claim log obtained by letting workers claim in strict
/// round-robin turns until the source is exhausted.
pub fn round_robin_claims(
    policy: SchedulePolicy,
    extent: usize,
    workers: usize,
) -> Result<Vec<Claim>, ChunkError> {
    let source = ChunkSource::new(policy, extent, workers)?;
    let mut claims = Vec::new();
    let mut active = vec![true; workers];
    while active.iter().any(|&a| a) {
        for (worker, live) in active.iter_mut().enumerate() {
            if !*live {
                continue;
            }
            match source.claim(worker)? {
                Some(range) => claims.push(Claim { worker, range }),
                None => *live = false,
            }
        }
    }
    Ok(claims)
}
