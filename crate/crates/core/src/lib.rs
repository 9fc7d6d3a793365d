//! Fork-join work-sharing, in-process message passing, a data-placement
//! locality simulator, and benchmark kernels with speedup analysis.

pub mod bench;
pub mod kernels;
pub mod message_passing;
pub mod metrics;
pub mod placement;
pub mod team;
pub mod work_sharing;

pub use team::{Team, TeamConfig, TeamError, Worker};
pub use work_sharing::{BarrierMode, ReductionOp, SchedulePolicy};
