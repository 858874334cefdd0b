//! The sandbox policy compiler: parses the JSON policy language, compiles it
//! into the minimal set of enforcement programs, evaluates access decisions
//! at dispatch time with fork inheritance, and statically verifies
//! acquire/release pairing over program graphs.

mod compile;
mod eval;
mod glob;
mod interp;
mod model;
mod pairing;

pub use compile::{compile, explain, CompileProvenance, CompiledProgramSet, ConstraintTable};
pub use eval::{
    bind_context, evaluate, inherit_on_fork, request_of, AccessRequest, NetOp, ViolationRecord,
    ViolationSink, DENY_CODE, PATH_SLOT,
};
pub use glob::GlobPattern;
pub use interp::{monolithic_program_set, RuleInterpreter};
pub use model::{
    parse_policy, resolve_service, Decision, FsRule, FsSection, NetRule, NetSection, Perm, Policy,
};
pub use pairing::{
    check_pairing, parse_program_graph, OpKind, PairingCheckReport, PairingProgram,
    PairingViolation,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("unknown service name {0:?} (known: http, https)")]
    UnknownService(String),
    #[error("malformed program graph at line {line}: {msg}")]
    MalformedProgramGraph { line: usize, msg: String },
}

#[cfg(test)]
mod tests;
