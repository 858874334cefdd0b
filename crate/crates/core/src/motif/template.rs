//! The per-hook element templates. This table is the single source of truth
//! for what each hook contributes to the provenance graph: the capture
//! engine interprets it against live object state, the motif builder against
//! abstract state. Keeping the table in one place is deliberate; the two
//! interpreters stay independent so they can check each other.

use crate::event_model::{HookEvent, HookId, KernelObjectId, Syscall};
use crate::provenance::Relation;

/// Endpoint roles a template op refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// The event's subject task.
    Subject,
    /// The event's object.
    Object,
    /// The address-space object of the event's object (fork only; the
    /// object of a fork event is the child task).
    ChildMemory,
}

/// One element-producing step of a hook template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateOp {
    /// A fresh object comes into existence at version 1, linked from
    /// `from`'s current version by `relation`. Does not version `from`.
    Birth {
        target: Role,
        from: Role,
        relation: Relation,
    },
    /// Information flows from `src`'s current version into `dst`, creating a
    /// new `dst` version (subject to version avoidance) and a flow edge.
    Inflow {
        src: Role,
        dst: Role,
        relation: Relation,
    },
    /// `dst`'s state changes with no recorded peer (credential updates):
    /// a new version and its version edge, nothing else.
    BareVersion { dst: Role },
}

/// File access direction, where a hook's meaning depends on the origin
/// syscall (file_permission covers both reads and writes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileAccess {
    Read,
    Write,
}

/// Derives the access direction a hook event implies from its origin.
pub fn access_of(ev: &HookEvent) -> FileAccess {
    match ev.origin.syscall {
        Syscall::Write => FileAccess::Write,
        _ => FileAccess::Read,
    }
}

/// The template for a hook, or `None` for hooks the capture model does not
/// cover (`inode_post_setxattr` parses but is never part of an expansion).
///
/// `file_open` has an intentionally empty template: the open itself is a
/// mediation point, the content flow is recorded by the read/write
/// permission hooks. The directory permission checks of a path walk do get
/// recorded (read flows from each directory), since failed walks reveal
/// access patterns worth auditing.
pub fn hook_template(hook: HookId, access: FileAccess) -> Option<&'static [TemplateOp]> {
    use Relation::*;
    use Role::*;
    use TemplateOp::*;

    const INODE_PERMISSION: &[TemplateOp] = &[Inflow {
        src: Object,
        dst: Subject,
        relation: Read,
    }];
    const FILE_OPEN: &[TemplateOp] = &[];
    const INODE_CREATE: &[TemplateOp] = &[Birth {
        target: Object,
        from: Subject,
        relation: Create,
    }];
    const INODE_SETATTR: &[TemplateOp] = &[Inflow {
        src: Subject,
        dst: Object,
        relation: Write,
    }];
    const FILE_PERM_READ: &[TemplateOp] = &[Inflow {
        src: Object,
        dst: Subject,
        relation: Read,
    }];
    const FILE_PERM_WRITE: &[TemplateOp] = &[Inflow {
        src: Subject,
        dst: Object,
        relation: Write,
    }];
    const BPRM_CHECK: &[TemplateOp] = &[Inflow {
        src: Object,
        dst: Subject,
        relation: Exec,
    }];
    const BPRM_SET_CREDS: &[TemplateOp] = &[BareVersion { dst: Subject }];
    const SOCKET_CREATE: &[TemplateOp] = &[Birth {
        target: Object,
        from: Subject,
        relation: Create,
    }];
    const SOCKET_BIND: &[TemplateOp] = &[Inflow {
        src: Subject,
        dst: Object,
        relation: Write,
    }];
    const SOCKET_LISTEN: &[TemplateOp] = &[Inflow {
        src: Subject,
        dst: Object,
        relation: Write,
    }];
    const SOCKET_ACCEPT: &[TemplateOp] = &[Inflow {
        src: Object,
        dst: Subject,
        relation: Read,
    }];
    const SOCKET_CONNECT: &[TemplateOp] = &[Inflow {
        src: Subject,
        dst: Object,
        relation: Connect,
    }];
    const TASK_FORK: &[TemplateOp] = &[
        Birth {
            target: Object,
            from: Subject,
            relation: Fork,
        },
        Birth {
            target: ChildMemory,
            from: Subject,
            relation: Create,
        },
    ];

    Some(match hook {
        HookId::InodePermission => INODE_PERMISSION,
        HookId::FileOpen => FILE_OPEN,
        HookId::InodeCreate => INODE_CREATE,
        HookId::InodeSetattr => INODE_SETATTR,
        HookId::InodePostSetxattr => return None,
        HookId::FilePermission => match access {
            FileAccess::Read => FILE_PERM_READ,
            FileAccess::Write => FILE_PERM_WRITE,
        },
        HookId::BprmCheck => BPRM_CHECK,
        HookId::BprmSetCreds => BPRM_SET_CREDS,
        HookId::SocketCreate => SOCKET_CREATE,
        HookId::SocketBind => SOCKET_BIND,
        HookId::SocketListen => SOCKET_LISTEN,
        HookId::SocketAccept => SOCKET_ACCEPT,
        HookId::SocketConnect => SOCKET_CONNECT,
        HookId::TaskFork => TASK_FORK,
    })
}

/// Resolves a template role to the concrete object of an event.
pub fn resolve_role(ev: &HookEvent, role: Role) -> Option<KernelObjectId> {
    match role {
        Role::Subject => Some(ev.subject),
        Role::Object => ev.object,
        Role::ChildMemory => ev.object.map(|child| KernelObjectId::memory_of(&child)),
    }
}
