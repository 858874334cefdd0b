//! Trace generation, scenario scripting, the end-to-end pipeline, and the
//! benchmark suites.

mod bench;
mod pipeline;
mod scenario;
mod workload;

pub use bench::{run_bench, BenchConfig, BenchReport, BenchRow, RatioRow, Suite};
pub use pipeline::{run_end_to_end, RunConfig, RunOutput, RunStats};
pub use scenario::{
    AttachmentDecl, CaptureDecl, CgroupDecl, HooksSpec, ObjectDecl, PolicyAttach, ProgramSpec,
    Scenario, TaskDecl,
};
pub use workload::{generate_trace, Workload};

use thiserror::Error;

use crate::dispatch::DispatchError;
use crate::event_model::{EventError, TraceError};
use crate::motif::MotifError;
use crate::object_store::StoreError;
use crate::policy::PolicyError;
use crate::provenance::{CaptureError, SerializeError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown workload {0:?} (known: fileserver, webserver, fork-tree, mixed, fig4-scenario)")]
    UnknownWorkload(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
