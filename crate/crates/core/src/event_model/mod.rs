//! Kernel objects, security hooks, and the expansion of syscalls into
//! ordered hook-event sequences with an associated cost model.

mod cost;
mod hook;
mod object;
mod syscall;
mod trace;

pub use cost::{estimate_cost, Cost, CostModel};
pub use hook::HookId;
pub use object::{fnv1a64, KernelObjectId, ObjectKind};
pub use syscall::{
    expand_syscall, path_directory, HookEvent, NetDirection, NetInfo, OriginInfo, Outcome,
    Syscall, SyscallFlags, SyscallRecord,
};
pub use trace::{parse_trace, write_trace, TraceError};

use thiserror::Error;

/// Errors raised while validating or expanding syscall records.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("{0:?} requires a path_depth")]
    MissingPathDepth(Syscall),
    #[error("path_depth is not applicable to {0:?}")]
    UnexpectedPathDepth(Syscall),
    #[error("{0:?} requires an object")]
    MissingObject(Syscall),
    #[error("{0:?} requires net info (direction, port)")]
    MissingNet(Syscall),
    #[error("subject must be a task, got {0:?}")]
    SubjectNotTask(ObjectKind),
    #[error("{syscall:?} object must be one of {expected:?}, got {got:?}")]
    ObjectKindMismatch {
        syscall: Syscall,
        expected: &'static [ObjectKind],
        got: ObjectKind,
    },
    #[error("inode identity requires fs_uuid (inode numbers are unique per file system only)")]
    InodeWithoutFsUuid,
    #[error("fail_at_ordinal {got} out of range for a {len}-hook sequence")]
    FailOrdinalOutOfRange { got: u32, len: u32 },
    #[error("fail_at_ordinal is only valid with outcome=failure")]
    FailOrdinalWithoutFailure,
    #[error("outcome=failure requires fail_at_ordinal")]
    FailureWithoutOrdinal,
    #[error("task {0} cannot fork itself")]
    SelfFork(KernelObjectId),
    #[error("creates_new_file is only valid for open, not {0:?}")]
    CreatesOutsideOpen(Syscall),
    #[error("no cost entry for hook {0}")]
    MissingCost(HookId),
}
