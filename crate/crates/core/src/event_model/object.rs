use serde::{Deserialize, Serialize};
use std::fmt;

use super::EventError;

/// Kinds of simulated kernel objects.
///
/// `Memory` is the task-address-space object; it never appears in traces and
/// is synthesized by the fork motif so that provenance graphs can carry
/// per-task memory nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Task,
    Inode,
    File,
    Cred,
    Socket,
    Pipe,
    Msg,
    Superblock,
    Memory,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectKind::Task => "task",
            ObjectKind::Inode => "inode",
            ObjectKind::File => "file",
            ObjectKind::Cred => "cred",
            ObjectKind::Socket => "socket",
            ObjectKind::Pipe => "pipe",
            ObjectKind::Msg => "msg",
            ObjectKind::Superblock => "superblock",
            ObjectKind::Memory => "memory",
        };
        f.write_str(s)
    }
}

/// Collision-safe identity of a simulated kernel object.
///
/// A bare `local_id` (e.g. an inode number) is not a valid key: inode numbers
/// are unique per file system only, so inode identity also carries `fs_uuid`.
/// The `generation` counter distinguishes reuse of the same `local_id` across
/// object lifecycles.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(deny_unknown_fields)]
pub struct KernelObjectId {
    pub kind: ObjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_uuid: Option<u64>,
    pub local_id: u64,
    #[serde(default)]
    pub generation: u32,
}

impl KernelObjectId {
    pub fn new(kind: ObjectKind, fs_uuid: Option<u64>, local_id: u64, generation: u32) -> Self {
        Self {
            kind,
            fs_uuid,
            local_id,
            generation,
        }
    }

    pub fn task(local_id: u64) -> Self {
        Self::new(ObjectKind::Task, None, local_id, 0)
    }

    pub fn file(fs_uuid: u64, local_id: u64) -> Self {
        Self::new(ObjectKind::File, Some(fs_uuid), local_id, 0)
    }

    pub fn inode(fs_uuid: u64, local_id: u64) -> Self {
        Self::new(ObjectKind::Inode, Some(fs_uuid), local_id, 0)
    }

    pub fn pipe(local_id: u64) -> Self {
        Self::new(ObjectKind::Pipe, None, local_id, 0)
    }

    pub fn socket(local_id: u64) -> Self {
        Self::new(ObjectKind::Socket, None, local_id, 0)
    }

    /// The credential object associated with a task.
    pub fn cred_of(task: &KernelObjectId) -> Self {
        Self::new(ObjectKind::Cred, None, task.local_id, task.generation)
    }

    /// The address-space object associated with a task.
    pub fn memory_of(task: &KernelObjectId) -> Self {
        Self::new(ObjectKind::Memory, None, task.local_id, task.generation)
    }

    pub fn validate(&self) -> Result<(), EventError> {
        if self.kind == ObjectKind::Inode && self.fs_uuid.is_none() {
            return Err(EventError::InodeWithoutFsUuid);
        }
        Ok(())
    }
}

impl fmt::Display for KernelObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.fs_uuid {
            Some(fs) => write!(f, "{}:{}:{}g{}", self.kind, fs, self.local_id, self.generation),
            None => write!(f, "{}:{}g{}", self.kind, self.local_id, self.generation),
        }
    }
}

/// FNV-1a over 8-byte words. Used for synthesized identities that must be
/// stable across processes (std's default hasher is seed-randomized).
pub fn fnv1a64(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
