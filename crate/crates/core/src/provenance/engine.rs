use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{HookEvent, KernelObjectId};
use crate::motif::template::{access_of, hook_template, resolve_role, TemplateOp};
use crate::object_store::{ObjectStore, StorageHandle, StoreError};

use super::element::{
    node_kind_of, Annotations, NodeKind, NodeRef, ProvEdge, ProvElement, ProvNode, Relation,
};
use super::ring::{OverflowPolicy, RingBuffer, RingError};
use super::state::{CaptureState, LastIncoming, LastOutgoing, PendingEdge, CAPTURE_SLOT, CONTEXT_SLOT};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("ring buffer closed while capturing")]
    BufferClosed,
    #[error("capture state access failed: {0}")]
    Storage(#[from] StoreError),
}

/// Capture-time filtering, fixed at engine construction. `None` means
/// "record everything" for that dimension.
///
/// Relation and context filters gate flow edges; nodes and version edges are
/// structural and follow the object-kind filter only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<BTreeSet<Relation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_kinds: Option<BTreeSet<NodeKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_allowlist: Option<BTreeSet<String>>,
}

impl CaptureFilter {
    fn relation_allowed(&self, rel: Relation) -> bool {
        self.relations.as_ref().map(|s| s.contains(&rel)).unwrap_or(true)
    }

    fn kind_allowed(&self, kind: NodeKind) -> bool {
        self.object_kinds
            .as_ref()
            .map(|s| s.contains(&kind))
            .unwrap_or(true)
    }

    fn is_subset_of(&self, other: &CaptureFilter) -> bool {
        fn sub<T: Ord>(a: &Option<BTreeSet<T>>, b: &Option<BTreeSet<T>>) -> bool {
            match (a, b) {
                (_, None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a.is_subset(b),
            }
        }
        sub(&self.relations, &other.relations)
            && sub(&self.object_kinds, &other.object_kinds)
            && sub(&self.context_allowlist, &other.context_allowlist)
    }
}

/// Reduction and overflow switches. Merging and version avoidance are on by
/// default; disabling both yields the unreduced oracle capture.
#[derive(Debug, Clone)]
pub struct CaptureOptions {
    pub merge: bool,
    pub version_avoidance: bool,
    pub overflow: OverflowPolicy,
    pub filter: CaptureFilter,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self {
            merge: true,
            version_avoidance: true,
            overflow: OverflowPolicy::Block,
            filter: CaptureFilter::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureCounters {
    pub events_seen: u64,
    pub events_skipped_opaque: u64,
    pub elements_pushed: u64,
    pub merges: u64,
    pub versions_avoided: u64,
    pub failures: u64,
}

struct Entry {
    obj: KernelObjectId,
    handle: StorageHandle,
    state: CaptureState,
    existed: bool,
    touched: bool,
    dirty: bool,
}

struct Scope {
    entries: Vec<Entry>,
    out: Vec<ProvElement>,
    ts: u64,
}

impl Scope {
    fn idx_of(&self, obj: &KernelObjectId) -> Option<usize> {
        self.entries.iter().position(|e| e.obj == *obj)
    }
}

/// Turns dispatched hook events into provenance elements with versioning,
/// opacity, event merging and version avoidance, pushing them into the ring
/// buffer in dependency order.
pub struct CaptureEngine {
    options: CaptureOptions,
    ring: Arc<RingBuffer<ProvElement>>,
    last_event: Option<(u64, u32)>,
    counters: CaptureCounters,
}

impl CaptureEngine {
    pub fn new(options: CaptureOptions, ring: Arc<RingBuffer<ProvElement>>) -> Self {
        Self {
            options,
            ring,
            last_event: None,
            counters: CaptureCounters::default(),
        }
    }

    pub fn options(&self) -> &CaptureOptions {
        &self.options
    }

    pub fn counters(&self) -> CaptureCounters {
        self.counters
    }

    pub fn ring(&self) -> &Arc<RingBuffer<ProvElement>> {
        &self.ring
    }

    pub fn note_failure(&mut self) {
        self.counters.failures += 1;
    }

    /// True when `self`'s filter records at most what `other`'s does.
    pub fn filter_subsumed_by(&self, other: &CaptureEngine) -> bool {
        self.options.filter.is_subset_of(&other.options.filter)
    }

    /// Captures one hook event. Returns the elements pushed for this event;
    /// an event whose endpoints include an opaque object, or whose effect
    /// merges into an open edge, pushes nothing. Capture programs may fire
    /// at several cgroups on one traversal; repeated capture of the same
    /// (timestamp, ordinal) is recognized and skipped.
    pub fn capture_event(
        &mut self,
        ev: &HookEvent,
        store: &ObjectStore,
    ) -> Result<Vec<ProvElement>, CaptureError> {
        let key = (ev.origin.timestamp, ev.ordinal);
        if self.last_event == Some(key) {
            return Ok(Vec::new());
        }
        self.last_event = Some(key);
        self.counters.events_seen += 1;

        let template = match hook_template(ev.hook, access_of(ev)) {
            Some(t) if !t.is_empty() => t,
            _ => return Ok(Vec::new()),
        };

        // collect participants in role order
        let mut participants: Vec<KernelObjectId> = Vec::new();
        for op in template {
            let roles = match op {
                TemplateOp::Birth { target, from, .. } => [Some(*from), Some(*target)],
                TemplateOp::Inflow { src, dst, .. } => [Some(*src), Some(*dst)],
                TemplateOp::BareVersion { dst } => [Some(*dst), None],
            };
            for role in roles.into_iter().flatten() {
                if let Some(obj) = resolve_role(ev, role) {
                    if !participants.contains(&obj) {
                        participants.push(obj);
                    }
                }
            }
        }

        // prefetch states through one handle per participant; opacity
        // excludes the whole event without touching any endpoint's state
        let mut scope = Scope {
            entries: Vec::with_capacity(participants.len()),
            out: Vec::new(),
            ts: ev.origin.timestamp,
        };
        for obj in participants {
            let handle = store
                .storage_get(&obj, true)?
                .expect("storage created on demand");
            let stored = handle.get(CAPTURE_SLOT)?.map(|b| CaptureState::decode(&b));
            let existed = stored.is_some();
            scope.entries.push(Entry {
                obj,
                handle,
                state: stored.unwrap_or_default(),
                existed,
                touched: false,
                dirty: false,
            });
        }
        if scope.entries.iter().any(|e| e.state.opaque) {
            self.counters.events_skipped_opaque += 1;
            return Ok(Vec::new());
        }

        let flows_gated = match &self.options.filter.context_allowlist {
            None => false,
            Some(allow) => {
                let subject = scope
                    .entries
                    .iter()
                    .find(|e| e.obj == ev.subject)
                    .expect("subject participates in every template");
                let ctx = subject
                    .handle
                    .get(CONTEXT_SLOT)?
                    .map(|b| String::from_utf8_lossy(&b).into_owned());
                !ctx.map(|c| allow.contains(&c)).unwrap_or(false)
            }
        };

        for op in template {
            match *op {
                TemplateOp::Birth {
                    target,
                    from,
                    relation,
                } => {
                    let from_obj = resolve_role(ev, from).expect("birth source resolves");
                    let target_obj = match resolve_role(ev, target) {
                        Some(o) => o,
                        None => continue,
                    };
                    let fi = scope.idx_of(&from_obj).unwrap();
                    self.ensure_node(&mut scope, fi, store)?;
                    let ti = scope.idx_of(&target_obj).unwrap();
                    if scope.entries[ti].existed || scope.entries[ti].touched {
                        // the id already lives in the graph; treat re-creation
                        // as an ordinary inflow
                        self.inflow(&mut scope, fi, ti, relation, flows_gated, store)?;
                    } else {
                        self.birth(&mut scope, fi, ti, relation, flows_gated, store)?;
                    }
                }
                TemplateOp::Inflow { src, dst, relation } => {
                    let src_obj = match resolve_role(ev, src) {
                        Some(o) => o,
                        None => continue,
                    };
                    let dst_obj = match resolve_role(ev, dst) {
                        Some(o) => o,
                        None => continue,
                    };
                    let si = scope.idx_of(&src_obj).unwrap();
                    let di = scope.idx_of(&dst_obj).unwrap();
                    self.ensure_node(&mut scope, si, store)?;
                    self.ensure_node(&mut scope, di, store)?;
                    self.inflow(&mut scope, si, di, relation, flows_gated, store)?;
                }
                TemplateOp::BareVersion { dst } => {
                    let dst_obj = resolve_role(ev, dst).expect("subject resolves");
                    let di = scope.idx_of(&dst_obj).unwrap();
                    self.ensure_node(&mut scope, di, store)?;
                    self.bump(&mut scope, di, store)?;
                }
            }
        }

        // persist states, then stream the elements
        for entry in &scope.entries {
            if entry.dirty {
                entry.handle.put(CAPTURE_SLOT, entry.state.encode())?;
            }
        }
        for el in &scope.out {
            self.push(el.clone())?;
        }
        Ok(scope.out)
    }

    /// Marks an object opaque (or visible again). Takes effect for
    /// subsequent events.
    pub fn set_opaque(
        &mut self,
        obj: &KernelObjectId,
        flag: bool,
        store: &ObjectStore,
    ) -> Result<(), CaptureError> {
        set_opaque(store, obj, flag).map_err(CaptureError::from)
    }

    /// Forces a new version of a live object: flushes its open edge, bumps
    /// the counter, emits the node and its version edge. Returns the new
    /// version number.
    pub fn bump_version(
        &mut self,
        obj: &KernelObjectId,
        store: &ObjectStore,
        ts: u64,
    ) -> Result<u64, CaptureError> {
        let handle = store
            .storage_get(obj, true)?
            .expect("storage created on demand");
        let stored = handle.get(CAPTURE_SLOT)?.map(|b| CaptureState::decode(&b));
        let existed = stored.is_some();
        let state = stored.unwrap_or_default();
        if state.opaque {
            return Ok(state.current_version);
        }
        let mut scope = Scope {
            entries: vec![Entry {
                obj: *obj,
                handle,
                state,
                existed,
                touched: false,
                dirty: true,
            }],
            out: Vec::new(),
            ts,
        };
        self.ensure_node(&mut scope, 0, store)?;
        self.bump(&mut scope, 0, store)?;
        let version = scope.entries[0].state.current_version;
        scope.entries[0]
            .handle
            .put(CAPTURE_SLOT, scope.entries[0].state.encode())?;
        for el in &scope.out {
            self.push(el.clone())?;
        }
        Ok(version)
    }

    /// Flushes every open mergeable edge to the ring buffer. Call at end of
    /// trace, before object teardown.
    pub fn finalize(&mut self, store: &ObjectStore) -> Result<u64, CaptureError> {
        let mut flushed = 0;
        for obj in store.live_objects() {
            let Some(mut state) = CaptureState::load(store, &obj)? else {
                continue;
            };
            if let Some(pending) = state.pending.take() {
                let edge = ProvElement::Edge(ProvEdge {
                    from: pending.from,
                    to: NodeRef::new(obj, state.current_version),
                    relation: pending.relation,
                    count: pending.count,
                    first_ts: pending.first_ts,
                    last_ts: pending.last_ts,
                });
                state.save(store, &obj)?;
                self.push(edge)?;
                flushed += 1;
            }
        }
        Ok(flushed)
    }

    fn push(&mut self, el: ProvElement) -> Result<(), CaptureError> {
        match self.ring.push(el, self.options.overflow) {
            Ok(()) => {
                self.counters.elements_pushed += 1;
                Ok(())
            }
            Err(RingError::Closed) => Err(CaptureError::BufferClosed),
        }
    }

    fn node_annotations(entry: &Entry) -> Result<Annotations, CaptureError> {
        Ok(Annotations {
            security_context: entry
                .handle
                .get(CONTEXT_SLOT)?
                .map(|b| String::from_utf8_lossy(&b).into_owned()),
            namespace_ids: None,
            perf: None,
        })
    }

    /// Emits the node for the entry's current version if the filter admits
    /// its kind and it has not been emitted yet.
    fn ensure_node(
        &mut self,
        scope: &mut Scope,
        i: usize,
        _store: &ObjectStore,
    ) -> Result<(), CaptureError> {
        scope.entries[i].touched = true;
        let kind = node_kind_of(scope.entries[i].obj.kind);
        if scope.entries[i].state.node_emitted || !self.options.filter.kind_allowed(kind) {
            return Ok(());
        }
        let annotations = Self::node_annotations(&scope.entries[i])?;
        let entry = &mut scope.entries[i];
        scope.out.push(ProvElement::Node(ProvNode {
            object: entry.obj,
            version: entry.state.current_version,
            kind,
            annotations,
        }));
        entry.state.node_emitted = true;
        entry.dirty = true;
        Ok(())
    }

    fn edge_allowed(&self, rel: Relation, a: &KernelObjectId, b: &KernelObjectId, gated: bool) -> bool {
        !gated
            && self.options.filter.relation_allowed(rel)
            && self.options.filter.kind_allowed(node_kind_of(a.kind))
            && self.options.filter.kind_allowed(node_kind_of(b.kind))
    }

    fn birth(
        &mut self,
        scope: &mut Scope,
        fi: usize,
        ti: usize,
        relation: Relation,
        gated: bool,
        store: &ObjectStore,
    ) -> Result<(), CaptureError> {
        let from_ref = NodeRef::new(
            scope.entries[fi].obj,
            scope.entries[fi].state.current_version,
        );
        let target_obj = scope.entries[ti].obj;
        self.ensure_node(scope, ti, store)?;
        let ts = scope.ts;
        let allowed = self.edge_allowed(relation, &from_ref.object, &target_obj, gated);
        {
            let entry = &mut scope.entries[ti];
            entry.state.last_incoming = Some(LastIncoming {
                peer: from_ref.object,
                peer_version: from_ref.version,
                relation,
                self_version: entry.state.current_version,
            });
            if allowed {
                if self.options.merge {
                    entry.state.pending = Some(PendingEdge {
                        from: from_ref,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    });
                } else {
                    let to = NodeRef::new(entry.obj, entry.state.current_version);
                    scope.out.push(ProvElement::Edge(ProvEdge {
                        from: from_ref,
                        to,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    }));
                }
            }
            entry.dirty = true;
        }
        let from_entry = &mut scope.entries[fi];
        from_entry.state.last_outgoing = Some(LastOutgoing {
            peer: target_obj,
            relation,
        });
        from_entry.dirty = true;
        Ok(())
    }

    fn inflow(
        &mut self,
        scope: &mut Scope,
        si: usize,
        di: usize,
        relation: Relation,
        gated: bool,
        store: &ObjectStore,
    ) -> Result<(), CaptureError> {
        let src_ref = NodeRef::new(
            scope.entries[si].obj,
            scope.entries[si].state.current_version,
        );
        let dst_obj = scope.entries[di].obj;
        let ts = scope.ts;
        let allowed = self.edge_allowed(relation, &src_ref.object, &dst_obj, gated);

        let avoidance_hit = {
            let dst = &scope.entries[di].state;
            self.options.version_avoidance
                && dst.last_incoming
                    == Some(LastIncoming {
                        peer: src_ref.object,
                        peer_version: src_ref.version,
                        relation,
                        self_version: dst.current_version,
                    })
        };

        if avoidance_hit {
            self.counters.versions_avoided += 1;
            let entry = &mut scope.entries[di];
            let mergeable = self.options.merge
                && entry
                    .state
                    .pending
                    .map(|p| p.from == src_ref && p.relation == relation)
                    .unwrap_or(false);
            if mergeable {
                let p = entry.state.pending.as_mut().unwrap();
                p.count += 1;
                p.last_ts = ts;
                entry.dirty = true;
                self.counters.merges += 1;
            } else if allowed {
                // repeat inflow with merging off (or a previously gated
                // window): a parallel edge between the same version pair
                let to = NodeRef::new(entry.obj, entry.state.current_version);
                if self.options.merge && entry.state.pending.is_none() {
                    entry.state.pending = Some(PendingEdge {
                        from: src_ref,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    });
                    entry.dirty = true;
                } else {
                    scope.out.push(ProvElement::Edge(ProvEdge {
                        from: src_ref,
                        to,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    }));
                }
            }
        } else {
            self.bump(scope, di, store)?;
            let entry = &mut scope.entries[di];
            entry.state.last_incoming = Some(LastIncoming {
                peer: src_ref.object,
                peer_version: src_ref.version,
                relation,
                self_version: entry.state.current_version,
            });
            if allowed {
                let to = NodeRef::new(entry.obj, entry.state.current_version);
                if self.options.merge {
                    entry.state.pending = Some(PendingEdge {
                        from: src_ref,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    });
                } else {
                    scope.out.push(ProvElement::Edge(ProvEdge {
                        from: src_ref,
                        to,
                        relation,
                        count: 1,
                        first_ts: ts,
                        last_ts: ts,
                    }));
                }
            }
            entry.dirty = true;
        }

        let src_entry = &mut scope.entries[si];
        src_entry.state.last_outgoing = Some(LastOutgoing {
            peer: dst_obj,
            relation,
        });
        src_entry.dirty = true;
        Ok(())
    }

    /// Closes the entry's open edge, advances its version, and emits the
    /// version edge plus the new node.
    fn bump(
        &mut self,
        scope: &mut Scope,
        i: usize,
        _store: &ObjectStore,
    ) -> Result<(), CaptureError> {
        let ts = scope.ts;
        let obj = scope.entries[i].obj;
        let kind = node_kind_of(obj.kind);
        let kind_ok = self.options.filter.kind_allowed(kind);

        let (old_version, flushed) = {
            let entry = &mut scope.entries[i];
            let old = entry.state.current_version;
            let flushed = entry.state.pending.take().map(|p| ProvEdge {
                from: p.from,
                to: NodeRef::new(obj, old),
                relation: p.relation,
                count: p.count,
                first_ts: p.first_ts,
                last_ts: p.last_ts,
            });
            entry.state.current_version += 1;
            entry.state.node_emitted = false;
            entry.dirty = true;
            (old, flushed)
        };
        if let Some(edge) = flushed {
            scope.out.push(ProvElement::Edge(edge));
        }
        if kind_ok {
            let annotations = Self::node_annotations(&scope.entries[i])?;
            let entry = &mut scope.entries[i];
            let new_version = entry.state.current_version;
            scope.out.push(ProvElement::Node(ProvNode {
                object: obj,
                version: new_version,
                kind,
                annotations,
            }));
            entry.state.node_emitted = true;
            scope.out.push(ProvElement::Edge(ProvEdge {
                from: NodeRef::new(obj, old_version),
                to: NodeRef::new(obj, new_version),
                relation: Relation::Version,
                count: 1,
                first_ts: ts,
                last_ts: ts,
            }));
        }
        Ok(())
    }
}

/// Sets the opacity flag in the object's capture state. Opaque objects are
/// not audited: any event touching one produces no elements. Used to break
/// the serializer daemon's self-observation loop.
pub fn set_opaque(
    store: &ObjectStore,
    obj: &KernelObjectId,
    flag: bool,
) -> Result<(), StoreError> {
    let mut state = CaptureState::load(store, obj)?.unwrap_or_default();
    state.opaque = flag;
    state.save(store, obj)
}
