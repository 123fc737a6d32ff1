//! Memristor-modeled bandwidth allocation for a bandwidth-limited robot
//! control system.
//!
//! Sensor data chunks compete for a fixed processor bandwidth. Each chunk is
//! modelled as a linear-drift memristor ([`model`]), bandwidth is divided by
//! one of the allocation policies ([`policy`]), and the [`engine`] steps the
//! system forward while recording a trace. The [`hybrid`] module builds a
//! reactive/deliberative control layer on top of traces, and
//! [`experiments`] holds the reproduction harnesses.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod hybrid;
pub mod model;
pub mod pgm;
pub mod policy;
pub mod rng;
pub mod svd;

pub use engine::{
    completion_curve, makespan_oracle, run, EngineConfig, Recording, ResetMode, Schedule,
    Schedules, Trace, TraceSummary,
};
pub use error::{Error, Result};
pub use model::{
    analytic_completion_time, apply_freshness_reset, memristance, step, transfer_rate, ChunkId,
    ChunkSpec, ChunkState,
};
pub use policy::{Allocation, Policy, PolicyKind, Weighting};
