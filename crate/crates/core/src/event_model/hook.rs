use serde::{Deserialize, Serialize};
use std::fmt;

/// The modeled security hooks. The enum is closed: unknown hook names are
/// rejected at parse time.
///
/// `SocketConnect` and `TaskFork` go beyond the minimal file-syscall set;
/// they exist so that policy semantics (outgoing connections, fork
/// inheritance) and provenance have observable events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookId {
    FileOpen,
    InodeCreate,
    InodePermission,
    InodeSetattr,
    InodePostSetxattr,
    FilePermission,
    BprmCheck,
    BprmSetCreds,
    SocketCreate,
    SocketBind,
    SocketListen,
    SocketAccept,
    SocketConnect,
    TaskFork,
}

impl HookId {
    pub const ALL: [HookId; 14] = [
        HookId::FileOpen,
        HookId::InodeCreate,
        HookId::InodePermission,
        HookId::InodeSetattr,
        HookId::InodePostSetxattr,
        HookId::FilePermission,
        HookId::BprmCheck,
        HookId::BprmSetCreds,
        HookId::SocketCreate,
        HookId::SocketBind,
        HookId::SocketListen,
        HookId::SocketAccept,
        HookId::SocketConnect,
        HookId::TaskFork,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HookId::FileOpen => "file_open",
            HookId::InodeCreate => "inode_create",
            HookId::InodePermission => "inode_permission",
            HookId::InodeSetattr => "inode_setattr",
            HookId::InodePostSetxattr => "inode_post_setxattr",
            HookId::FilePermission => "file_permission",
            HookId::BprmCheck => "bprm_check",
            HookId::BprmSetCreds => "bprm_set_creds",
            HookId::SocketCreate => "socket_create",
            HookId::SocketBind => "socket_bind",
            HookId::SocketListen => "socket_listen",
            HookId::SocketAccept => "socket_accept",
            HookId::SocketConnect => "socket_connect",
            HookId::TaskFork => "task_fork",
        }
    }

    pub fn from_name(name: &str) -> Option<HookId> {
        HookId::ALL.iter().copied().find(|h| h.name() == name)
    }
}

impl fmt::Display for HookId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
