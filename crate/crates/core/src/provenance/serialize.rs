use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::{json, Value};
use thiserror::Error;

use crate::event_model::KernelObjectId;

use super::element::{NodeKind, NodeRef, ProvEdge, ProvElement, ProvNode, Relation};
use super::ring::RingBuffer;

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error("edge {from} -{relation}-> {to} references an unserialized node")]
    DanglingEdge {
        from: NodeRef,
        to: NodeRef,
        relation: Relation,
    },
    #[error("duplicate node {0}")]
    DuplicateNode(NodeRef),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("sink error: {0}")]
    Sink(#[from] std::io::Error),
}

/// The consolidated provenance graph: nodes keyed by (object, version),
/// edges in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProvDocument {
    nodes: BTreeMap<NodeRef, ProvNode>,
    edges: Vec<ProvEdge>,
}

impl ProvDocument {
    pub fn nodes(&self) -> impl Iterator<Item = &ProvNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[ProvEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn contains_node(&self, r: &NodeRef) -> bool {
        self.nodes.contains_key(r)
    }

    pub fn contains_object(&self, obj: &KernelObjectId) -> bool {
        self.nodes.keys().any(|r| r.object == *obj)
    }

    /// The objects in the graph with their version sets.
    pub fn objects(&self) -> BTreeMap<KernelObjectId, BTreeSet<u64>> {
        let mut map: BTreeMap<KernelObjectId, BTreeSet<u64>> = BTreeMap::new();
        for r in self.nodes.keys() {
            map.entry(r.object).or_default().insert(r.version);
        }
        map
    }

    pub fn latest_version(&self, obj: &KernelObjectId) -> Option<u64> {
        self.nodes
            .keys()
            .filter(|r| r.object == *obj)
            .map(|r| r.version)
            .max()
    }

    /// Kahn topological sort. Returns the order, or the refs stuck on a
    /// cycle.
    pub fn topo_sort(&self) -> Result<Vec<NodeRef>, Vec<NodeRef>> {
        let mut indegree: BTreeMap<NodeRef, usize> =
            self.nodes.keys().map(|r| (*r, 0)).collect();
        let mut adj: BTreeMap<NodeRef, Vec<NodeRef>> = BTreeMap::new();
        for e in &self.edges {
            *indegree.entry(e.to).or_insert(0) += 1;
            adj.entry(e.from).or_default().push(e.to);
        }
        let mut queue: VecDeque<NodeRef> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(r, _)| *r)
            .collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(r) = queue.pop_front() {
            order.push(r);
            if let Some(nexts) = adj.get(&r) {
                for n in nexts.clone() {
                    let d = indegree.get_mut(&n).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        queue.push_back(n);
                    }
                }
            }
        }
        if order.len() == indegree.len() {
            Ok(order)
        } else {
            Err(indegree
                .into_iter()
                .filter(|(_, d)| *d > 0)
                .map(|(r, _)| r)
                .collect())
        }
    }

    pub fn is_dag(&self) -> bool {
        self.topo_sort().is_ok()
    }

    /// True when every element of `self` appears in `other` with the same
    /// labels and counts.
    pub fn is_subgraph_of(&self, other: &ProvDocument) -> bool {
        for (r, n) in &self.nodes {
            match other.nodes.get(r) {
                Some(o) if o.kind == n.kind => {}
                _ => return false,
            }
        }
        let mut pool: Vec<&ProvEdge> = other.edges.iter().collect();
        for e in &self.edges {
            match pool.iter().position(|o| {
                o.from == e.from && o.to == e.to && o.relation == e.relation && o.count == e.count
            }) {
                Some(i) => {
                    pool.swap_remove(i);
                }
                None => return false,
            }
        }
        true
    }

    /// Rebuilds a document from a line-delimited element stream.
    pub fn from_jsonl(text: &str) -> Result<Self, SerializeError> {
        let mut ser = Serializer::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let el: ProvElement = serde_json::from_str(line).map_err(|e| {
                SerializeError::InvalidDocument(format!("line {}: {e}", i + 1))
            })?;
            ser.append(el)?;
        }
        Ok(ser.into_document())
    }

    /// The PROV-DM-inspired consolidated form. Tasks serialize as
    /// activities, every other kind as an entity. Edge mapping:
    /// read/exec -> used; write/connect -> wasGeneratedBy;
    /// version -> wasDerivedFrom; fork/create -> wasGeneratedBy plus
    /// wasAssociatedWith. The mapping is stable; identifiers are
    /// `<kind>_<fs>_<local>_g<gen>_v<version>`.
    pub fn to_prov_json(&self) -> Value {
        fn ident(r: &NodeRef) -> String {
            let o = &r.object;
            match o.fs_uuid {
                Some(fs) => format!("{}_{}_{}_g{}_v{}", o.kind, fs, o.local_id, o.generation, r.version),
                None => format!("{}_{}_g{}_v{}", o.kind, o.local_id, o.generation, r.version),
            }
        }
        let mut activities = serde_json::Map::new();
        let mut entities = serde_json::Map::new();
        for (r, n) in &self.nodes {
            let mut attrs = serde_json::Map::new();
            attrs.insert("prov:kind".into(), json!(n.kind));
            attrs.insert("version".into(), json!(r.version));
            if let Some(ctx) = &n.annotations.security_context {
                attrs.insert("security_context".into(), json!(ctx));
            }
            if let Some(ns) = &n.annotations.namespace_ids {
                attrs.insert("namespace_ids".into(), json!(ns));
            }
            if let Some(perf) = &n.annotations.perf {
                attrs.insert("perf".into(), perf.clone());
            }
            let bucket = if n.kind == NodeKind::Task {
                &mut activities
            } else {
                &mut entities
            };
            bucket.insert(ident(r), Value::Object(attrs));
        }
        let mut used = Vec::new();
        let mut generated = Vec::new();
        let mut derived = Vec::new();
        let mut associated = Vec::new();
        for e in &self.edges {
            let rec = json!({
                "from": ident(&e.from),
                "to": ident(&e.to),
                "relation": e.relation,
                "count": e.count,
                "first_ts": e.first_ts,
                "last_ts": e.last_ts,
            });
            match e.relation {
                Relation::Read | Relation::Exec => used.push(rec),
                Relation::Write | Relation::Connect => generated.push(rec),
                Relation::Version => derived.push(rec),
                Relation::Fork | Relation::Create => {
                    generated.push(rec.clone());
                    associated.push(rec);
                }
            }
        }
        json!({
            "format": "provsim/prov-dm",
            "activity": activities,
            "entity": entities,
            "used": used,
            "wasGeneratedBy": generated,
            "wasDerivedFrom": derived,
            "wasAssociatedWith": associated,
        })
    }
}

/// Consumes elements in dependency order and accumulates the document.
#[derive(Debug, Default)]
pub struct Serializer {
    doc: ProvDocument,
    appended: u64,
}

impl Serializer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn appended(&self) -> u64 {
        self.appended
    }

    pub fn append(&mut self, el: ProvElement) -> Result<(), SerializeError> {
        match el {
            ProvElement::Node(n) => {
                let r = n.node_ref();
                if self.doc.nodes.contains_key(&r) {
                    return Err(SerializeError::DuplicateNode(r));
                }
                self.doc.nodes.insert(r, n);
            }
            ProvElement::Edge(e) => {
                if !self.doc.nodes.contains_key(&e.from) || !self.doc.nodes.contains_key(&e.to) {
                    return Err(SerializeError::DanglingEdge {
                        from: e.from,
                        to: e.to,
                        relation: e.relation,
                    });
                }
                self.doc.edges.push(e);
            }
        }
        self.appended += 1;
        Ok(())
    }

    pub fn document(&self) -> &ProvDocument {
        &self.doc
    }

    pub fn into_document(self) -> ProvDocument {
        self.doc
    }
}

/// Builds a document from an already dependency-ordered element sequence.
pub fn serialize(
    elements: impl IntoIterator<Item = ProvElement>,
) -> Result<ProvDocument, SerializeError> {
    let mut ser = Serializer::new();
    for el in elements {
        ser.append(el)?;
    }
    Ok(ser.into_document())
}

/// Drains everything currently buffered into the serializer, preserving
/// FIFO order. Returns the number of elements serialized; idempotent on an
/// empty buffer.
pub fn drain(
    buffer: &RingBuffer<ProvElement>,
    ser: &mut Serializer,
) -> Result<u64, SerializeError> {
    let mut batch = Vec::new();
    buffer.drain_into(&mut batch);
    let n = batch.len() as u64;
    for el in batch {
        ser.append(el)?;
    }
    Ok(n)
}
