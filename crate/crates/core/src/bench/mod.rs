//! Experiment driver behind the `forkbench` binary.
//!
//! An [`ExperimentSpec`] names one kernel configuration and the worker
//! counts to time it at. [`run_experiment`] times every (workers, trial)
//! pair, checks each result against a serial oracle and returns a
//! [`ResultTable`], which [`emit_csv`] writes out with a metrics summary.

mod cli;
mod run;
mod table;

pub use cli::{parse_args, Invocation};
pub use run::{checksum, run_experiment, run_experiments, KernelOutput};
pub use table::{emit_csv, parse_csv, summarize, ResultRow, ResultTable};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::kernels::{Boundary, Decomposition, ExecModel, GridParseError, KernelError};
use crate::metrics::MetricsError;
use crate::placement::PlacementError;
use crate::team::TeamError;
use crate::work_sharing::SchedulePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelId {
    Sum,
    PiRect,
    PiSimpson,
    RunAvg,
    Life,
    PrefixSum,
    Primes,
    Placement,
}

impl KernelId {
    pub const ALL: [KernelId; 8] = [
        KernelId::Sum,
        KernelId::PiRect,
        KernelId::PiSimpson,
        KernelId::RunAvg,
        KernelId::Life,
        KernelId::PrefixSum,
        KernelId::Primes,
        KernelId::Placement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelId::Sum => "sum",
            KernelId::PiRect => "pi-rect",
            KernelId::PiSimpson => "pi-simpson",
            KernelId::RunAvg => "run-avg",
            KernelId::Life => "life",
            KernelId::PrefixSum => "prefix-sum",
            KernelId::Primes => "primes",
            KernelId::Placement => "placement",
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelId::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown kernel {s:?}"))
    }
}

/// Execution model without its schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Serial,
    WorkShare,
    MessagePass,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Serial => "serial",
            ModelKind::WorkShare => "work-share",
            ModelKind::MessagePass => "message-pass",
        }
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ModelKind::Serial,
            ModelKind::WorkShare,
            ModelKind::MessagePass,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifeOptions {
    pub steps: usize,
    pub decomposition: Decomposition,
    pub boundary: Boundary,
    /// Fixture file; a random `n x n` grid is used when absent.
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistributionKind {
    #[default]
    Block,
    Cyclic,
    FirstTouch,
}

impl FromStr for DistributionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "block" => Ok(DistributionKind::Block),
            "cyclic" => Ok(DistributionKind::Cyclic),
            "first-touch" => Ok(DistributionKind::FirstTouch),
            _ => Err(format!("unknown distribution {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementOptions {
    pub distribution: DistributionKind,
    pub elements_per_page: usize,
    /// Access trace file; the loop's own schedule trace is used when absent.
    pub trace: Option<PathBuf>,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            distribution: DistributionKind::Block,
            elements_per_page: 1,
            trace: None,
        }
    }
}

/// One kernel configuration timed at each worker count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub kernel: KernelId,
    pub model: ModelKind,
    pub policy: SchedulePolicy,
    /// Chunk as requested. Runtime schedules take their chunk from the
    /// environment, so for them this only labels the group.
    pub chunk: Option<usize>,
    /// Sorted ascending, no duplicates, each at least 1.
    pub workers: Vec<usize>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub life: Option<LifeOptions>,
    pub placement: PlacementOptions,
}

impl ExperimentSpec {
    pub fn new(
        kernel: KernelId,
        model: ModelKind,
        policy: SchedulePolicy,
        workers: Vec<usize>,
        n: usize,
    ) -> Result<Self, BenchError> {
        let mut spec = Self {
            kernel,
            model,
            policy,
            chunk: policy.chunk(),
            workers,
            n,
            trials: 5,
            seed: 1,
            life: None,
            placement: PlacementOptions::default(),
        };
        spec.normalize()?;
        Ok(spec)
    }

    /// Sorts worker counts and checks the kernel's required options.
    pub fn normalize(&mut self) -> Result<(), BenchError> {
        self.workers.sort_unstable();
        self.workers.dedup();
        if self.workers.is_empty() || self.workers[0] == 0 {
            return Err(BenchError::Usage(
                "--workers needs one or more counts, each at least 1".into(),
            ));
        }
        if self.trials == 0 {
            return Err(BenchError::Usage("--trials must be at least 1".into()));
        }
        if self.kernel == KernelId::Life && self.life.is_none() {
            return Err(BenchError::Usage("kernel life requires --steps".into()));
        }
        if self.placement.elements_per_page == 0 {
            return Err(BenchError::Usage("--page-size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn exec_model(&self) -> ExecModel {
        match self.model {
            ModelKind::Serial => ExecModel::Serial,
            ModelKind::WorkShare => ExecModel::WorkShare {
                policy: self.policy,
            },
            ModelKind::MessagePass => ExecModel::MessagePass,
        }
    }

    /// Policy and chunk as reported in the CSV; only work-sharing runs
    /// carry a schedule.
    pub fn policy_columns(&self) -> (String, Option<usize>) {
        match self.model {
            ModelKind::WorkShare => {
                let chunk = match self.policy {
                    SchedulePolicy::Runtime => self.chunk,
                    p => p.chunk(),
                };
                (self.policy.name().to_string(), chunk)
            }
            _ => ("-".to_string(), None),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Cli(Box<clap::Error>),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{kernel}: {source}")]
    Kernel {
        kernel: KernelId,
        #[source]
        source: KernelError,
    },
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("grid fixture: {0}")]
    Grid(#[from] GridParseError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
