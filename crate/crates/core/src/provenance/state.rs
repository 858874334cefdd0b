//! Per-object capture state, stored in the object's local storage (never in
//! a global map keyed by raw ids) under the `prov.capture` slot. The codec
//! is a fixed-layout little-endian encoding; this sits on the per-event hot
//! path, so no serde.

use crate::event_model::{KernelObjectId, ObjectKind};
use crate::object_store::{ObjectStore, StoreError};

use super::element::{NodeRef, Relation};

pub const CAPTURE_SLOT: &str = "prov.capture";
/// Slot carrying a task's security context label (also read by policy).
pub const CONTEXT_SLOT: &str = "security_context";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LastIncoming {
    pub peer: KernelObjectId,
    pub peer_version: u64,
    pub relation: Relation,
    /// The version of the owner the inflow targeted. Version avoidance and
    /// merging only apply while the owner is still at this version.
    pub self_version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LastOutgoing {
    pub peer: KernelObjectId,
    pub relation: Relation,
}

/// The open mergeable edge into (owner, current_version), held back from the
/// ring buffer until its merge window closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingEdge {
    pub from: NodeRef,
    pub relation: Relation,
    pub count: u64,
    pub first_ts: u64,
    pub last_ts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureState {
    pub current_version: u64,
    pub opaque: bool,
    /// Whether the node for current_version has been pushed.
    pub node_emitted: bool,
    pub last_incoming: Option<LastIncoming>,
    pub last_outgoing: Option<LastOutgoing>,
    pub pending: Option<PendingEdge>,
}

impl Default for CaptureState {
    fn default() -> Self {
        Self {
            current_version: 1,
            opaque: false,
            node_emitted: false,
            last_incoming: None,
            last_outgoing: None,
            pending: None,
        }
    }
}

fn kind_tag(kind: ObjectKind) -> u8 {
    match kind {
        ObjectKind::Task => 0,
        ObjectKind::Inode => 1,
        ObjectKind::File => 2,
        ObjectKind::Cred => 3,
        ObjectKind::Socket => 4,
        ObjectKind::Pipe => 5,
        ObjectKind::Msg => 6,
        ObjectKind::Superblock => 7,
        ObjectKind::Memory => 8,
    }
}

fn kind_from_tag(tag: u8) -> ObjectKind {
    match tag {
        0 => ObjectKind::Task,
        1 => ObjectKind::Inode,
        2 => ObjectKind::File,
        3 => ObjectKind::Cred,
        4 => ObjectKind::Socket,
        5 => ObjectKind::Pipe,
        6 => ObjectKind::Msg,
        7 => ObjectKind::Superblock,
        _ => ObjectKind::Memory,
    }
}

fn relation_tag(rel: Relation) -> u8 {
    match rel {
        Relation::Read => 0,
        Relation::Write => 1,
        Relation::Create => 2,
        Relation::Fork => 3,
        Relation::Version => 4,
        Relation::Exec => 5,
        Relation::Connect => 6,
    }
}

fn relation_from_tag(tag: u8) -> Relation {
    match tag {
        0 => Relation::Read,
        1 => Relation::Write,
        2 => Relation::Create,
        3 => Relation::Fork,
        4 => Relation::Version,
        5 => Relation::Exec,
        _ => Relation::Connect,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn object(&mut self, obj: &KernelObjectId) {
        self.u8(kind_tag(obj.kind));
        match obj.fs_uuid {
            Some(fs) => {
                self.u8(1);
                self.u64(fs);
            }
            None => self.u8(0),
        }
        self.u64(obj.local_id);
        self.u32(obj.generation);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> u8 {
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }
    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }
    fn u64(&mut self) -> u64 {
        let v = u64::from_le_bytes(self.buf[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        v
    }
    fn object(&mut self) -> KernelObjectId {
        let kind = kind_from_tag(self.u8());
        let fs_uuid = match self.u8() {
            1 => Some(self.u64()),
            _ => None,
        };
        let local_id = self.u64();
        let generation = self.u32();
        KernelObjectId::new(kind, fs_uuid, local_id, generation)
    }
}

impl CaptureState {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(96));
        w.u64(self.current_version);
        w.u8(self.opaque as u8);
        w.u8(self.node_emitted as u8);
        match &self.last_incoming {
            Some(li) => {
                w.u8(1);
                w.object(&li.peer);
                w.u64(li.peer_version);
                w.u8(relation_tag(li.relation));
                w.u64(li.self_version);
            }
            None => w.u8(0),
        }
        match &self.last_outgoing {
            Some(lo) => {
                w.u8(1);
                w.object(&lo.peer);
                w.u8(relation_tag(lo.relation));
            }
            None => w.u8(0),
        }
        match &self.pending {
            Some(p) => {
                w.u8(1);
                w.object(&p.from.object);
                w.u64(p.from.version);
                w.u8(relation_tag(p.relation));
                w.u64(p.count);
                w.u64(p.first_ts);
                w.u64(p.last_ts);
            }
            None => w.u8(0),
        }
        w.0
    }

    pub fn decode(buf: &[u8]) -> Self {
        let mut r = Reader { buf, pos: 0 };
        let current_version = r.u64();
        let opaque = r.u8() != 0;
        let node_emitted = r.u8() != 0;
        let last_incoming = match r.u8() {
            1 => Some(LastIncoming {
                peer: r.object(),
                peer_version: r.u64(),
                relation: relation_from_tag(r.u8()),
                self_version: r.u64(),
            }),
            _ => None,
        };
        let last_outgoing = match r.u8() {
            1 => Some(LastOutgoing {
                peer: r.object(),
                relation: relation_from_tag(r.u8()),
            }),
            _ => None,
        };
        let pending = match r.u8() {
            1 => {
                let object = r.object();
                let version = r.u64();
                Some(PendingEdge {
                    from: NodeRef::new(object, version),
                    relation: relation_from_tag(r.u8()),
                    count: r.u64(),
                    first_ts: r.u64(),
                    last_ts: r.u64(),
                })
            }
            _ => None,
        };
        Self {
            current_version,
            opaque,
            node_emitted,
            last_incoming,
            last_outgoing,
            pending,
        }
    }

    /// Loads the state from the object's storage; `None` when the object has
    /// no storage or no capture slot yet.
    pub fn load(store: &ObjectStore, obj: &KernelObjectId) -> Result<Option<Self>, StoreError> {
        match store.storage_get(obj, false)? {
            Some(handle) => Ok(handle.get(CAPTURE_SLOT)?.map(|b| Self::decode(&b))),
            None => Ok(None),
        }
    }

    /// Stores the state into the object's storage, creating it if needed.
    pub fn save(&self, store: &ObjectStore, obj: &KernelObjectId) -> Result<(), StoreError> {
        let handle = store
            .storage_get(obj, true)?
            .expect("storage created on demand");
        handle.put(CAPTURE_SLOT, self.encode())
    }
}
