//! Deterministic discrete-event simulation of the detection pipeline.
//!
//! Vehicles broadcast to their RSU, RSUs forward to the local CA of their
//! region, and the local CA fetches keys from the home CA. Every RSU, local
//! CA and the home CA is a single FIFO server (or an unlimited one, see
//! [`QueuePolicy`]). Time is kept in whole microseconds so that runs are
//! reproducible bit for bit.

mod config;
mod delay;
mod engine;
mod metrics;
mod sweep;
mod world;

use thiserror::Error;

use crate::pki::PkiError;

pub use config::{
    AttackerSpec, CrossRegionMove, DelayModel, Micros, Placement, QueuePolicy, RegionSpec, ScenarioConfig,
    DEFAULT_ACCIDENT_MESSAGES,
};
pub use delay::{charge_delays, MessageTrace, PhaseDelays, Stage};
pub use engine::{run, run_logged, Actor, Event, EventKind};
pub use metrics::{Aggregates, MessageRecord, PipelineFailure, RejectedSend, ScenarioMetrics, METRICS_HEADER};
pub use sweep::{
    point_config, run_batch, run_scenario, sweep, sweep_csv, sweep_with, Execution, SweepAxis, SweepRow, SWEEP_HEADER,
};
pub use world::{build_world, derive_seed, Attachment, Rsu, SendPlan, Vehicle, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid region map: {0}")]
    InvalidRegionMap(PkiError),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid delay model: {0}")]
    InvalidDelayModel(String),
    #[error("trace of message {message_id} is incomplete: missing {missing}")]
    TraceIncomplete { message_id: u64, missing: &'static str },
    #[error("sweep needs at least one value")]
    EmptySweep,
    #[error("sweep values must be strictly ascending")]
    UnsortedSweep,
    #[error("{axis}={value}: {source}")]
    SweepPoint {
        axis: SweepAxis,
        value: u64,
        source: Box<SimError>,
    },
}
