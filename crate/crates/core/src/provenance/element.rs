use serde::{Deserialize, Serialize};
use std::fmt;

use crate::event_model::{KernelObjectId, ObjectKind};

/// Provenance node kinds. Kernel object kinds map onto these; inode, file
/// and superblock objects all surface as `File` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Task,
    Memory,
    File,
    Pipe,
    Socket,
    Msg,
    Cred,
}

pub fn node_kind_of(kind: ObjectKind) -> NodeKind {
    match kind {
        ObjectKind::Task => NodeKind::Task,
        ObjectKind::Memory => NodeKind::Memory,
        ObjectKind::Inode | ObjectKind::File | ObjectKind::Superblock => NodeKind::File,
        ObjectKind::Pipe => NodeKind::Pipe,
        ObjectKind::Socket => NodeKind::Socket,
        ObjectKind::Msg => NodeKind::Msg,
        ObjectKind::Cred => NodeKind::Cred,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Read,
    Write,
    Create,
    Fork,
    Version,
    Exec,
    Connect,
}

impl Relation {
    pub const FLOW: [Relation; 6] = [
        Relation::Read,
        Relation::Write,
        Relation::Create,
        Relation::Fork,
        Relation::Exec,
        Relation::Connect,
    ];
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Read => "read",
            Relation::Write => "write",
            Relation::Create => "create",
            Relation::Fork => "fork",
            Relation::Version => "version",
            Relation::Exec => "exec",
            Relation::Connect => "connect",
        };
        f.write_str(s)
    }
}

/// A (object, version) endpoint.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeRef {
    pub object: KernelObjectId,
    pub version: u64,
}

impl NodeRef {
    pub fn new(object: KernelObjectId, version: u64) -> Self {
        Self { object, version }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@v{}", self.object, self.version)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub security_context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub namespace_ids: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perf: Option<serde_json::Value>,
}

impl Annotations {
    pub fn is_empty(&self) -> bool {
        self.security_context.is_none() && self.namespace_ids.is_none() && self.perf.is_none()
    }
}

/// A versioned provenance node. Versions start at 1 and form a contiguous
/// chain linked by version edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvNode {
    pub object: KernelObjectId,
    pub version: u64,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Annotations::is_empty")]
    pub annotations: Annotations,
}

impl ProvNode {
    pub fn node_ref(&self) -> NodeRef {
        NodeRef::new(self.object, self.version)
    }
}

/// A provenance edge. `count >= 2` only for merged consecutive same-type
/// events between the same two endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvEdge {
    pub from: NodeRef,
    pub to: NodeRef,
    pub relation: Relation,
    pub count: u64,
    pub first_ts: u64,
    pub last_ts: u64,
}

/// The unit streamed through the ring buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProvElement {
    Node(ProvNode),
    Edge(ProvEdge),
}

impl ProvElement {
    pub fn as_node(&self) -> Option<&ProvNode> {
        match self {
            ProvElement::Node(n) => Some(n),
            ProvElement::Edge(_) => None,
        }
    }

    pub fn as_edge(&self) -> Option<&ProvEdge> {
        match self {
            ProvElement::Edge(e) => Some(e),
            ProvElement::Node(_) => None,
        }
    }
}
