use serde::{Deserialize, Serialize};

use super::{fnv1a64, EventError, HookId, KernelObjectId, ObjectKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Syscall {
    Open,
    Read,
    Write,
    Execve,
    Fork,
    Socket,
    Bind,
    Listen,
    Accept,
    Connect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Outcome {
    #[default]
    Success,
    Failure,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyscallFlags {
    #[serde(default)]
    pub creates_new_file: bool,
    #[serde(default)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetDirection {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetInfo {
    pub direction: NetDirection,
    pub port: u16,
}

/// One syscall observed in a trace.
///
/// `fail_at_ordinal` carries the truncation point for failed calls: the hook
/// sequence of a failing syscall stops at (and includes) that ordinal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyscallRecord {
    pub syscall: Syscall,
    pub subject: KernelObjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<KernelObjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_depth: Option<u32>,
    #[serde(default)]
    pub flags: SyscallFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetInfo>,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_at_ordinal: Option<u32>,
}

/// Origin facts a hook event carries from its syscall record. The timestamp
/// identifies the record (timestamps strictly increase within a trace).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginInfo {
    pub syscall: Syscall,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetInfo>,
    #[serde(default)]
    pub creates_new_file: bool,
}

/// One security-hook invocation produced by expanding a syscall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookEvent {
    pub hook: HookId,
    pub subject: KernelObjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<KernelObjectId>,
    pub origin: OriginInfo,
    pub ordinal: u32,
}

const FILE_LIKE: &[ObjectKind] = &[
    ObjectKind::File,
    ObjectKind::Inode,
    ObjectKind::Pipe,
    ObjectKind::Socket,
    ObjectKind::Msg,
];
const SOCKET_ONLY: &[ObjectKind] = &[ObjectKind::Socket];
const TASK_ONLY: &[ObjectKind] = &[ObjectKind::Task];

impl SyscallRecord {
    /// Checks the per-record invariants: path_depth present iff open/execve,
    /// object kinds sane for the syscall, net info where ports matter, and
    /// failure truncation consistency.
    pub fn validate(&self) -> Result<(), EventError> {
        if self.subject.kind != ObjectKind::Task {
            return Err(EventError::SubjectNotTask(self.subject.kind));
        }
        self.subject.validate()?;
        if let Some(obj) = &self.object {
            obj.validate()?;
        }
        match self.syscall {
            Syscall::Open | Syscall::Execve => {
                if self.path_depth.is_none() {
                    return Err(EventError::MissingPathDepth(self.syscall));
                }
            }
            _ => {
                if self.path_depth.is_some() {
                    return Err(EventError::UnexpectedPathDepth(self.syscall));
                }
            }
        }
        let expected: Option<&'static [ObjectKind]> = match self.syscall {
            Syscall::Open | Syscall::Read | Syscall::Write => Some(FILE_LIKE),
            Syscall::Execve => Some(FILE_LIKE),
            Syscall::Fork => Some(TASK_ONLY),
            Syscall::Socket | Syscall::Bind | Syscall::Listen | Syscall::Accept
            | Syscall::Connect => Some(SOCKET_ONLY),
        };
        if let Some(expected) = expected {
            match &self.object {
                None => return Err(EventError::MissingObject(self.syscall)),
                Some(obj) if !expected.contains(&obj.kind) => {
                    return Err(EventError::ObjectKindMismatch {
                        syscall: self.syscall,
                        expected,
                        got: obj.kind,
                    })
                }
                _ => {}
            }
        }
        if self.syscall == Syscall::Fork && self.object == Some(self.subject) {
            return Err(EventError::SelfFork(self.subject));
        }
        if self.flags.creates_new_file && self.syscall != Syscall::Open {
            return Err(EventError::CreatesOutsideOpen(self.syscall));
        }
        if matches!(
            self.syscall,
            Syscall::Bind | Syscall::Listen | Syscall::Accept | Syscall::Connect
        ) && self.net.is_none()
        {
            return Err(EventError::MissingNet(self.syscall));
        }
        match (self.flags.outcome, self.fail_at_ordinal) {
            (Outcome::Success, Some(_)) => return Err(EventError::FailOrdinalWithoutFailure),
            (Outcome::Failure, None) => return Err(EventError::FailureWithoutOrdinal),
            _ => {}
        }
        Ok(())
    }

    fn origin(&self) -> OriginInfo {
        OriginInfo {
            syscall: self.syscall,
            timestamp: self.timestamp,
            net: self.net,
            creates_new_file: self.flags.creates_new_file,
        }
    }
}

/// The synthesized identity of the `index`-th directory on the path to
/// `object`. Deterministic: the same object yields the same directory chain
/// on every expansion, so repeated opens merge in provenance.
pub fn path_directory(object: &KernelObjectId, index: u32) -> KernelObjectId {
    let fs = object.fs_uuid.unwrap_or(0);
    let local = fnv1a64(&[
        0x7061_7468_6469_7221, // tag for path-directory synthesis
        fs,
        object.local_id,
        object.generation as u64,
        index as u64,
    ]);
    KernelObjectId::new(ObjectKind::Inode, Some(fs), local, 0)
}

/// Expands a syscall record into its ordered hook-event sequence.
///
/// Minimal sequences for successful calls:
/// open -> inode_permission x depth, then file_open, with inode_create +
/// inode_setattr inserted before file_open when a new file is created;
/// read/write -> file_permission; execve -> inode_permission x depth,
/// file_open, bprm_check, bprm_set_creds, file_permission; fork -> task_fork;
/// socket/bind/listen/accept/connect -> the matching socket hook.
///
/// Permission checks cover the directories on the path (`path_depth` of
/// them), not the terminal file itself, so open costs 1 + path_depth hooks.
/// Failed calls truncate after `fail_at_ordinal`: the failing hook still
/// fires, later hooks do not.
pub fn expand_syscall(rec: &SyscallRecord) -> Result<Vec<HookEvent>, EventError> {
    rec.validate()?;
    let origin = rec.origin();
    let subject = rec.subject;
    let object = rec.object;
    let mut hooks: Vec<(HookId, Option<KernelObjectId>)> = Vec::new();
    match rec.syscall {
        Syscall::Open => {
            let obj = object.expect("validated");
            let depth = rec.path_depth.expect("validated");
            for i in 0..depth {
                hooks.push((HookId::InodePermission, Some(path_directory(&obj, i))));
            }
            if rec.flags.creates_new_file {
                hooks.push((HookId::InodeCreate, Some(obj)));
                hooks.push((HookId::InodeSetattr, Some(obj)));
            }
            hooks.push((HookId::FileOpen, Some(obj)));
        }
        Syscall::Read | Syscall::Write => {
            hooks.push((HookId::FilePermission, object));
        }
        Syscall::Execve => {
            let obj = object.expect("validated");
            let depth = rec.path_depth.expect("validated");
            for i in 0..depth {
                hooks.push((HookId::InodePermission, Some(path_directory(&obj, i))));
            }
            hooks.push((HookId::FileOpen, Some(obj)));
            hooks.push((HookId::BprmCheck, Some(obj)));
            hooks.push((HookId::BprmSetCreds, None));
            hooks.push((HookId::FilePermission, Some(obj)));
        }
        Syscall::Fork => hooks.push((HookId::TaskFork, object)),
        Syscall::Socket => hooks.push((HookId::SocketCreate, object)),
        Syscall::Bind => hooks.push((HookId::SocketBind, object)),
        Syscall::Listen => hooks.push((HookId::SocketListen, object)),
        Syscall::Accept => hooks.push((HookId::SocketAccept, object)),
        Syscall::Connect => hooks.push((HookId::SocketConnect, object)),
    }
    if let Some(fail_at) = rec.fail_at_ordinal {
        let len = hooks.len() as u32;
        if fail_at >= len {
            return Err(EventError::FailOrdinalOutOfRange { got: fail_at, len });
        }
        hooks.truncate(fail_at as usize + 1);
    }
    Ok(hooks
        .into_iter()
        .enumerate()
        .map(|(i, (hook, object))| HookEvent {
            hook,
            subject,
            object,
            origin,
            ordinal: i as u32,
        })
        .collect())
}
