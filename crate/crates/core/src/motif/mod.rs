//! Static correctness oracle for capture: per-hook graph motifs compose into
//! per-syscall and per-program motifs, which are then matched against
//! dynamically captured provenance documents.
//!
//! The per-hook template table lives in [`template`] and is shared with the
//! capture engine; the composition logic here (version stitching, reduction
//! normalization) is an independent implementation, so the two routes check
//! each other.

pub mod template;

mod build;
mod matching;

pub use build::{
    hook_motif, program_motif, syscall_motif, Motif, MotifBuilder, MotifEdge, MotifNode,
    ReductionOptions, SyscallMotifParams,
};
pub use matching::{match_motif, MatchMode, MatchReport};
pub use template::FileAccess;

use thiserror::Error;

use crate::event_model::{EventError, HookId};

#[derive(Debug, Error)]
pub enum MotifError {
    #[error("hook {0} has no capture model")]
    UnmodeledHook(HookId),
    #[error("invalid provenance document: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Event(#[from] EventError),
}
