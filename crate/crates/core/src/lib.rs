//! Userspace simulator of cgroup-scoped kernel audit.
//!
//! The crate models the full path an audited system call takes: a trace of
//! syscalls is expanded into security-hook events ([`event_model`]), each
//! event is dispatched to audit programs attached at (cgroup, hook) pairs
//! ([`dispatch`]), and the capture engine turns the dispatched events into a
//! versioned provenance DAG streamed through a bounded ring buffer
//! ([`provenance`]). Per-object state lives in lifecycle-bound local storage
//! ([`object_store`]). A JSON sandbox policy compiles into the minimal set of
//! enforcement programs ([`policy`]), and statically composed graph motifs
//! act as the correctness oracle for captured graphs ([`motif`]). The
//! [`harness`] module adds trace generation, scenario scripting, the
//! end-to-end pipeline, and the benchmark suites.

pub mod dispatch;
pub mod event_model;
pub mod harness;
pub mod motif;
pub mod object_store;
pub mod policy;
pub mod provenance;

pub use event_model::{HookEvent, HookId, KernelObjectId, ObjectKind, SyscallRecord};
