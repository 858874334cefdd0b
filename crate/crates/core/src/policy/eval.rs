use serde::Serialize;

use crate::dispatch::ReturnCode;
use crate::event_model::{HookEvent, HookId, KernelObjectId, NetDirection, Syscall};
use crate::object_store::{ObjectStore, StoreError};
use crate::provenance::{OverflowPolicy, RingBuffer, CONTEXT_SLOT};

use super::compile::{CompiledProgramSet, ConstraintTable};
use super::model::Perm;

/// Storage slot holding an object's filesystem path (assigned by the
/// scenario or at creation).
pub const PATH_SLOT: &str = "path";

/// Deny code used by policy programs (permission denied).
pub const DENY_CODE: i32 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NetOp {
    Create,
    Bind,
    Listen,
    Accept,
    Connect,
}

/// The access a hook event asks for, extracted once and decided by either
/// route (compiled table or raw-rule interpreter).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessRequest {
    Net {
        op: NetOp,
        direction: Option<NetDirection>,
        port: Option<u16>,
    },
    Fs {
        path: Option<String>,
        perm: Perm,
    },
    Exec {
        path: Option<String>,
    },
}

/// A denied access pushed to the violation ring buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ViolationRecord {
    pub timestamp: u64,
    pub hook: HookId,
    pub subject: KernelObjectId,
    pub object: Option<KernelObjectId>,
    pub request: AccessRequest,
    pub rule: String,
    pub code: i32,
}

pub type ViolationSink = RingBuffer<ViolationRecord>;

pub(crate) fn read_path(
    store: &ObjectStore,
    obj: &KernelObjectId,
) -> Result<Option<String>, StoreError> {
    match store.storage_get(obj, false)? {
        Some(h) => Ok(h
            .get(PATH_SLOT)?
            .map(|b| String::from_utf8_lossy(&b).into_owned())),
        None => Ok(None),
    }
}

pub(crate) fn read_context(
    store: &ObjectStore,
    obj: &KernelObjectId,
) -> Result<Option<String>, StoreError> {
    match store.storage_get(obj, false)? {
        Some(h) => Ok(h
            .get(CONTEXT_SLOT)?
            .map(|b| String::from_utf8_lossy(&b).into_owned())),
        None => Ok(None),
    }
}

/// Binds a policy security context to a task (stored in its local storage,
/// where fork inheritance and evaluation find it).
pub fn bind_context(
    store: &ObjectStore,
    task: &KernelObjectId,
    context: &str,
) -> Result<(), StoreError> {
    let h = store.storage_get(task, true)?.expect("storage created");
    h.put(CONTEXT_SLOT, context.as_bytes().to_vec())
}

/// Copies the parent's security context to the forked child, so the child
/// evaluates under the same policy.
pub fn inherit_on_fork(
    store: &ObjectStore,
    parent: &KernelObjectId,
    child: &KernelObjectId,
) -> Result<(), StoreError> {
    if let Some(ctx) = read_context(store, parent)? {
        bind_context(store, child, &ctx)?;
    }
    Ok(())
}

/// Extracts the access request a hook event implies, or `None` when the
/// hook carries no policy decision (fork, attribute hooks).
pub fn request_of(ev: &HookEvent, store: &ObjectStore) -> Option<AccessRequest> {
    let path = || {
        ev.object
            .and_then(|obj| read_path(store, &obj).ok().flatten())
    };
    match ev.hook {
        HookId::FileOpen => Some(AccessRequest::Fs {
            path: path(),
            perm: if ev.origin.creates_new_file {
                Perm::Write
            } else {
                Perm::Read
            },
        }),
        HookId::FilePermission => Some(AccessRequest::Fs {
            path: path(),
            perm: if ev.origin.syscall == Syscall::Write {
                Perm::Write
            } else {
                Perm::Read
            },
        }),
        HookId::InodePermission => Some(AccessRequest::Fs {
            path: path(),
            perm: Perm::Read,
        }),
        HookId::BprmCheck => Some(AccessRequest::Exec { path: path() }),
        HookId::SocketCreate => Some(AccessRequest::Net {
            op: NetOp::Create,
            direction: ev.origin.net.map(|n| n.direction),
            port: ev.origin.net.map(|n| n.port),
        }),
        HookId::SocketBind | HookId::SocketListen | HookId::SocketAccept
        | HookId::SocketConnect => {
            let op = match ev.hook {
                HookId::SocketBind => NetOp::Bind,
                HookId::SocketListen => NetOp::Listen,
                HookId::SocketAccept => NetOp::Accept,
                _ => NetOp::Connect,
            };
            Some(AccessRequest::Net {
                op,
                direction: ev.origin.net.map(|n| n.direction),
                port: ev.origin.net.map(|n| n.port),
            })
        }
        HookId::TaskFork
        | HookId::InodeCreate
        | HookId::InodeSetattr
        | HookId::InodePostSetxattr
        | HookId::BprmSetCreds => None,
    }
}

/// Decides one event against a compiled set: allow/deny, with a violation
/// record on deny. Tasks without the policy's security context are not
/// evaluated (cgroup scoping plus context binding decide applicability).
pub fn evaluate(
    ev: &HookEvent,
    set: &CompiledProgramSet,
    store: &ObjectStore,
) -> (ReturnCode, Option<ViolationRecord>) {
    evaluate_with_table(ev, &set.table, store)
}

pub(crate) fn evaluate_with_table(
    ev: &HookEvent,
    table: &ConstraintTable,
    store: &ObjectStore,
) -> (ReturnCode, Option<ViolationRecord>) {
    let subject_ctx = read_context(store, &ev.subject).unwrap_or(None);
    if subject_ctx.as_deref() != Some(table.subject_path.as_str()) {
        return (ReturnCode::Allow, None);
    }
    let Some(request) = request_of(ev, store) else {
        return (ReturnCode::Allow, None);
    };
    let (decision_allow, rule) = table.decide(&request);
    if decision_allow {
        (ReturnCode::Allow, None)
    } else {
        let violation = ViolationRecord {
            timestamp: ev.origin.timestamp,
            hook: ev.hook,
            subject: ev.subject,
            object: ev.object,
            request,
            rule,
            code: DENY_CODE,
        };
        (ReturnCode::deny(DENY_CODE), Some(violation))
    }
}

/// Pushes a violation without blocking replay; the sink is drained at the
/// end of a run, so overflow drops (and counts) rather than deadlocks.
pub fn push_violation(sink: &ViolationSink, v: ViolationRecord) {
    let _ = sink.push(v, OverflowPolicy::Drop);
}
