//! In-process, rank-addressed message passing.
//!
//! A [`Communicator`] of size `p` owns one [`Endpoint`] per rank. Sends are
//! buffered without bound and never block; receives block until an envelope
//! with exactly the requested `(source, tag)` arrives. Messages on one
//! `(source, dest, tag)` channel are delivered in send order.
//!
//! The collectives ([`Endpoint::bcast`], [`Endpoint::reduce`],
//! [`Endpoint::barrier`]) are linear: the root loops over the other ranks.
//! They travel on a tag space separate from user tags, so they never match
//! a user `recv`.

mod wire;

pub use wire::{Wire, WireError};

use std::collections::{HashMap, VecDeque};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::team::{Team, TeamError};
use crate::work_sharing::{Reducible, ReductionOp};

/// Environment variable holding the receive timeout, in milliseconds.
pub const MP_TIMEOUT_ENV: &str = "FORKBENCH_MP_TIMEOUT_MS";

pub type Rank = usize;
pub type Tag = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpError {
    #[error("a communicator needs at least one rank")]
    EmptyGroup,
    #[error("rank {rank} out of range for a communicator of {size}")]
    RankOutOfRange { rank: Rank, size: usize },
    #[error("rank {rank} timed out after {timeout:?} waiting on source {src}; probable deadlock")]
    Timeout {
        rank: Rank,
        src: Rank,
        timeout: Duration,
    },
    #[error("invalid {MP_TIMEOUT_ENV} value {0:?}")]
    InvalidTimeout(String),
    #[error("team of {team} cannot drive a communicator of {comm}")]
    SizeMismatch { team: usize, comm: usize },
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Channel {
    User(Tag),
    Bcast,
    Reduce,
    Barrier,
}

/// One message in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub src: Rank,
    pub dest: Rank,
    pub tag: Tag,
    pub payload: Vec<u8>,
}

#[derive(Debug, Default)]
struct Mailbox {
    queues: Mutex<HashMap<(Rank, Channel), VecDeque<Envelope>>>,
    arrived: Condvar,
}

impl Mailbox {
    fn lock(&self) -> MutexGuard<'_, HashMap<(Rank, Channel), VecDeque<Envelope>>> {
        self.queues.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// A group of `size` ranks sharing a set of mailboxes.
#[derive(Debug)]
pub struct Communicator {
    endpoints: Vec<Endpoint>,
}

impl Communicator {
    pub fn new(size: usize) -> Result<Self, MpError> {
        Self::build(size, None)
    }

    /// Like [`Communicator::new`] with the receive timeout taken from
    /// `FORKBENCH_MP_TIMEOUT_MS` when set.
    pub fn from_env(size: usize) -> Result<Self, MpError> {
        let timeout = match std::env::var(MP_TIMEOUT_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(Duration::from_millis(
                v.trim()
                    .parse()
                    .map_err(|_| MpError::InvalidTimeout(v.clone()))?,
            )),
            _ => None,
        };
        Self::build(size, timeout)
    }

    pub fn with_timeout(size: usize, timeout: Duration) -> Result<Self, MpError> {
        Self::build(size, Some(timeout))
    }

    fn build(size: usize, timeout: Option<Duration>) -> Result<Self, MpError> {
        if size == 0 {
            return Err(MpError::EmptyGroup);
        }
        let shared = std::sync::Arc::new(Shared {
            mailboxes: (0..size).map(|_| Mailbox::default()).collect(),
            timeout,
        });
        let endpoints = (0..size)
            .map(|rank| Endpoint {
                rank,
                shared: shared.clone(),
            })
            .collect();
        Ok(Self { endpoints })
    }

    pub fn size(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoint(&self, rank: Rank) -> Result<&Endpoint, MpError> {
        self.endpoints.get(rank).ok_or(MpError::RankOutOfRange {
            rank,
            size: self.size(),
        })
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    /// Messages sent but not yet received, across all mailboxes.
    pub fn pending(&self) -> usize {
        self.endpoints[0]
            .shared
            .mailboxes
            .iter()
            .map(|m| m.lock().values().map(VecDeque::len).sum::<usize>())
            .sum()
    }

    /// Runs `body` once per rank on a team of the same size, with worker id
    /// equal to rank.
    pub fn run<R, F>(&self, team: &Team, body: F) -> Result<Vec<R>, TeamError>
    where
        R: Send,
        F: Fn(&Endpoint) -> Result<R, MpError> + Sync,
    {
        if team.size() != self.size() {
            let err = MpError::SizeMismatch {
                team: team.size(),
                comm: self.size(),
            };
            return team.fork(|_| Err::<R, _>(err.clone()));
        }
        team.fork(|w| body(&self.endpoints[w.id()]))
    }
}

#[derive(Debug)]
struct Shared {
    mailboxes: Vec<Mailbox>,
    timeout: Option<Duration>,
}

/// One rank's handle on its communicator. Owned by one worker at a time.
#[derive(Debug)]
pub struct Endpoint {
    rank: Rank,
    shared: std::sync::Arc<Shared>,
}

impl Endpoint {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.mailboxes.len()
    }

    fn check_rank(&self, rank: Rank) -> Result<(), MpError> {
        if rank < self.size() {
            Ok(())
        } else {
            Err(MpError::RankOutOfRange {
                rank,
                size: self.size(),
            })
        }
    }

    /// Enqueues `payload` for `dest` and returns immediately.
    pub fn send(&self, dest: Rank, tag: Tag, payload: &[u8]) -> Result<(), MpError> {
        self.post(dest, Channel::User(tag), payload.to_vec())
    }

    /// Blocks until a message from `src` with `tag` arrives and returns its
    /// payload.
    pub fn recv(&self, src: Rank, tag: Tag) -> Result<Vec<u8>, MpError> {
        self.take(src, Channel::User(tag)).map(|e| e.payload)
    }

    /// Typed convenience over [`Endpoint::send`].
    pub fn send_value<T: Wire>(&self, dest: Rank, tag: Tag, value: &T) -> Result<(), MpError> {
        self.send(dest, tag, &value.encode())
    }

    /// Typed convenience over [`Endpoint::recv`].
    pub fn recv_value<T: Wire>(&self, src: Rank, tag: Tag) -> Result<T, MpError> {
        Ok(T::decode(&self.recv(src, tag)?)?)
    }

    fn post(&self, dest: Rank, channel: Channel, payload: Vec<u8>) -> Result<(), MpError> {
        self.check_rank(dest)?;
        let tag = match channel {
            Channel::User(t) => t,
            _ => Tag::MAX,
        };
        let envelope = Envelope {
            src: self.rank,
            dest,
            tag,
            payload,
        };
        let mailbox = &self.shared.mailboxes[dest];
        mailbox
            .lock()
            .entry((self.rank, channel))
            .or_default()
            .push_back(envelope);
        mailbox.arrived.notify_all();
        Ok(())
    }

    fn take(&self, src: Rank, channel: Channel) -> Result<Envelope, MpError> {
        self.check_rank(src)?;
        let mailbox = &self.shared.mailboxes[self.rank];
        let deadline = self.shared.timeout.map(|t| (t, Instant::now() + t));
        let mut queues = mailbox.lock();
        loop {
            if let Some(envelope) = queues
                .get_mut(&(src, channel))
                .and_then(VecDeque::pop_front)
            {
                return Ok(envelope);
            }
            queues = match deadline {
                None => mailbox
                    .arrived
                    .wait(queues)
                    .unwrap_or_else(|e| e.into_inner()),
                Some((timeout, at)) => {
                    let now = Instant::now();
                    if now >= at {
                        return Err(MpError::Timeout {
                            rank: self.rank,
                            src,
                            timeout,
                        });
                    }
                    mailbox
                        .arrived
                        .wait_timeout(queues, at - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
    }

    /// Every rank returns `root`'s `value`. Only the root's argument is
    /// used.
    pub fn bcast(&self, root: Rank, value: &[u8]) -> Result<Vec<u8>, MpError> {
        self.check_rank(root)?;
        if self.rank == root {
            for dest in (0..self.size()).filter(|&d| d != root) {
                self.post(dest, Channel::Bcast, value.to_vec())?;
            }
            Ok(value.to_vec())
        } else {
            self.take(root, Channel::Bcast).map(|e| e.payload)
        }
    }

    /// Combines every rank's contribution at `root`, folding in ascending
    /// rank order. The root gets `Some(result)`, everyone else `None`.
    pub fn reduce<T>(
        &self,
        root: Rank,
        op: ReductionOp,
        contribution: T,
    ) -> Result<Option<T>, MpError>
    where
        T: Reducible + Wire,
    {
        self.check_rank(root)?;
        if self.rank != root {
            self.post(root, Channel::Reduce, contribution.encode())?;
            return Ok(None);
        }
        let mut acc = op.identity();
        for src in 0..self.size() {
            let value = if src == root {
                contribution
            } else {
                T::decode(&self.take(src, Channel::Reduce)?.payload)?
            };
            acc = op.combine(acc, value);
        }
        Ok(Some(acc))
    }

    /// [`Endpoint::reduce`] to rank 0 followed by a broadcast of the result.
    pub fn allreduce<T>(&self, op: ReductionOp, contribution: T) -> Result<T, MpError>
    where
        T: Reducible + Wire,
    {
        let reduced = self.reduce(0, op, contribution)?;
        let bytes = reduced.map(|v| v.encode()).unwrap_or_default();
        Ok(T::decode(&self.bcast(0, &bytes)?)?)
    }

    /// No rank returns until all ranks have entered.
    pub fn barrier(&self) -> Result<(), MpError> {
        if self.size() == 1 {
            return Ok(());
        }
        if self.rank == 0 {
            for src in 1..self.size() {
                self.take(src, Channel::Barrier)?;
            }
            for dest in 1..self.size() {
                self.post(dest, Channel::Barrier, Vec::new())?;
            }
        } else {
            self.post(0, Channel::Barrier, Vec::new())?;
            self.take(0, Channel::Barrier)?;
        }
        Ok(())
    }
}
