use std::collections::HashMap;

use crate::event_model::{
    expand_syscall, HookEvent, HookId, KernelObjectId, NetDirection, NetInfo, ObjectKind,
    Outcome, Syscall, SyscallFlags, SyscallRecord,
};
use crate::provenance::{node_kind_of, NodeKind, Relation};

use super::template::{access_of, hook_template, resolve_role, FileAccess, TemplateOp};
use super::MotifError;

/// A node template: the `var`-th abstract object at a concrete version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MotifNode {
    pub var: usize,
    pub version: u64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MotifEdge {
    pub from: (usize, u64),
    pub to: (usize, u64),
    pub relation: Relation,
    pub count: u64,
}

/// A graph motif: the predicted (reduced) provenance graph over abstract
/// object variables. Motifs are DAGs; version numbers within one variable
/// form the chain 1..k.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Motif {
    pub var_kinds: Vec<NodeKind>,
    /// The concrete object each variable was instantiated from, when the
    /// motif was built from a concrete trace.
    pub var_objects: Vec<Option<KernelObjectId>>,
    pub nodes: Vec<MotifNode>,
    pub edges: Vec<MotifEdge>,
}

impl Motif {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    /// Sorted element order, for route-independent comparison.
    pub fn canonicalized(mut self) -> Motif {
        self.nodes.sort();
        self.edges.sort();
        self
    }

    /// Versions present per variable.
    pub fn var_versions(&self, var: usize) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .nodes
            .iter()
            .filter(|n| n.var == var)
            .map(|n| n.version)
            .collect();
        v.sort_unstable();
        v
    }
}

/// Reduction switches mirrored from the capture engine; a motif built with
/// both on predicts the reduced graph, with both off the oracle graph.
#[derive(Debug, Clone, Copy)]
pub struct ReductionOptions {
    pub merge: bool,
    pub version_avoidance: bool,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            merge: true,
            version_avoidance: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct VarLastIncoming {
    peer: usize,
    peer_version: u64,
    relation: Relation,
    self_version: u64,
}

#[derive(Debug, Clone, Copy)]
struct VarPending {
    from: (usize, u64),
    relation: Relation,
    count: u64,
}

#[derive(Debug, Clone)]
struct VarState {
    version: u64,
    last_incoming: Option<VarLastIncoming>,
    pending: Option<VarPending>,
}

/// Composes hook templates over an event sequence into a motif, tracking
/// version chains per object and applying merge/avoidance normalization.
/// This mirrors the capture engine's semantics over abstract state, as an
/// independent implementation.
#[derive(Debug, Default)]
pub struct MotifBuilder {
    options: ReductionOptions,
    vars: HashMap<KernelObjectId, usize>,
    motif: Motif,
    states: Vec<VarState>,
}

impl MotifBuilder {
    pub fn new(options: ReductionOptions) -> Self {
        Self {
            options,
            ..Default::default()
        }
    }

    fn var_of(&mut self, obj: KernelObjectId) -> usize {
        if let Some(&v) = self.vars.get(&obj) {
            return v;
        }
        let v = self.motif.var_kinds.len();
        self.vars.insert(obj, v);
        self.motif.var_kinds.push(node_kind_of(obj.kind));
        self.motif.var_objects.push(Some(obj));
        self.motif.nodes.push(MotifNode {
            var: v,
            version: 1,
            kind: node_kind_of(obj.kind),
        });
        self.states.push(VarState {
            version: 1,
            last_incoming: None,
            pending: None,
        });
        v
    }

    fn known(&self, obj: &KernelObjectId) -> bool {
        self.vars.contains_key(obj)
    }

    fn flush_pending(&mut self, var: usize) {
        if let Some(p) = self.states[var].pending.take() {
            self.motif.edges.push(MotifEdge {
                from: p.from,
                to: (var, self.states[var].version),
                relation: p.relation,
                count: p.count,
            });
        }
    }

    fn bump(&mut self, var: usize) {
        self.flush_pending(var);
        let old = self.states[var].version;
        self.states[var].version += 1;
        let new = self.states[var].version;
        self.motif.nodes.push(MotifNode {
            var,
            version: new,
            kind: self.motif.var_kinds[var],
        });
        self.motif.edges.push(MotifEdge {
            from: (var, old),
            to: (var, new),
            relation: Relation::Version,
            count: 1,
        });
    }

    fn open_edge(&mut self, from: (usize, u64), to_var: usize, relation: Relation) {
        if self.options.merge {
            self.states[to_var].pending = Some(VarPending {
                from,
                relation,
                count: 1,
            });
        } else {
            self.motif.edges.push(MotifEdge {
                from,
                to: (to_var, self.states[to_var].version),
                relation,
                count: 1,
            });
        }
    }

    fn inflow(&mut self, src: usize, dst: usize, relation: Relation) {
        let src_ref = (src, self.states[src].version);
        let hit = self.options.version_avoidance
            && self.states[dst].last_incoming
                == Some(VarLastIncoming {
                    peer: src,
                    peer_version: src_ref.1,
                    relation,
                    self_version: self.states[dst].version,
                });
        if hit {
            let mergeable = self.options.merge
                && self.states[dst]
                    .pending
                    .map(|p| p.from == src_ref && p.relation == relation)
                    .unwrap_or(false);
            if mergeable {
                self.states[dst].pending.as_mut().unwrap().count += 1;
            } else if self.options.merge && self.states[dst].pending.is_none() {
                self.open_edge(src_ref, dst, relation);
            } else {
                self.motif.edges.push(MotifEdge {
                    from: src_ref,
                    to: (dst, self.states[dst].version),
                    relation,
                    count: 1,
                });
            }
        } else {
            self.bump(dst);
            self.states[dst].last_incoming = Some(VarLastIncoming {
                peer: src,
                peer_version: src_ref.1,
                relation,
                self_version: self.states[dst].version,
            });
            self.open_edge(src_ref, dst, relation);
        }
    }

    /// Applies one hook event's template.
    pub fn push_event(&mut self, ev: &HookEvent) -> Result<(), MotifError> {
        let template = match hook_template(ev.hook, access_of(ev)) {
            Some(t) => t,
            None => return Err(MotifError::UnmodeledHook(ev.hook)),
        };
        for op in template {
            match *op {
                TemplateOp::Birth {
                    target,
                    from,
                    relation,
                } => {
                    let from_obj = resolve_role(ev, from).expect("birth source resolves");
                    let Some(target_obj) = resolve_role(ev, target) else {
                        continue;
                    };
                    let fi = self.var_of(from_obj);
                    if self.known(&target_obj) {
                        let ti = self.var_of(target_obj);
                        self.inflow(fi, ti, relation);
                    } else {
                        let ti = self.var_of(target_obj);
                        self.states[ti].last_incoming = Some(VarLastIncoming {
                            peer: fi,
                            peer_version: self.states[fi].version,
                            relation,
                            self_version: 1,
                        });
                        let from_ref = (fi, self.states[fi].version);
                        self.open_edge(from_ref, ti, relation);
                    }
                }
                TemplateOp::Inflow { src, dst, relation } => {
                    let (Some(src_obj), Some(dst_obj)) =
                        (resolve_role(ev, src), resolve_role(ev, dst))
                    else {
                        continue;
                    };
                    let si = self.var_of(src_obj);
                    let di = self.var_of(dst_obj);
                    self.inflow(si, di, relation);
                }
                TemplateOp::BareVersion { dst } => {
                    let obj = resolve_role(ev, dst).expect("subject resolves");
                    let di = self.var_of(obj);
                    self.bump(di);
                }
            }
        }
        Ok(())
    }

    /// Flushes open edges and returns the finished motif.
    pub fn finish(mut self) -> Motif {
        for var in 0..self.states.len() {
            self.flush_pending(var);
        }
        self.motif
    }
}

/// The capture template of a single hook as a standalone motif, over a
/// synthetic subject/object pair.
pub fn hook_motif(hook: HookId, access: FileAccess) -> Result<Motif, MotifError> {
    if hook_template(hook, access).is_none() {
        return Err(MotifError::UnmodeledHook(hook));
    }
    let object_kind = match hook {
        HookId::SocketCreate
        | HookId::SocketBind
        | HookId::SocketListen
        | HookId::SocketAccept
        | HookId::SocketConnect => ObjectKind::Socket,
        HookId::TaskFork => ObjectKind::Task,
        _ => ObjectKind::File,
    };
    let subject = KernelObjectId::task(1);
    let fs_uuid = (object_kind == ObjectKind::File).then_some(0);
    let object = KernelObjectId::new(object_kind, fs_uuid, 2, 0);
    let syscall = match (hook, access) {
        (HookId::FilePermission, FileAccess::Write) => Syscall::Write,
        _ => Syscall::Read,
    };
    let ev = HookEvent {
        hook,
        subject,
        object: Some(object),
        origin: crate::event_model::OriginInfo {
            syscall,
            timestamp: 1,
            net: None,
            creates_new_file: false,
        },
        ordinal: 0,
    };
    let mut builder = MotifBuilder::new(ReductionOptions::default());
    builder.push_event(&ev)?;
    Ok(builder.finish())
}

/// Parameters for a synthetic syscall motif.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyscallMotifParams {
    pub path_depth: u32,
    pub creates_new_file: bool,
}

/// The motif of one syscall: hook motifs composed in expansion order with
/// version chains stitched across shared objects.
pub fn syscall_motif(syscall: Syscall, params: SyscallMotifParams) -> Result<Motif, MotifError> {
    let subject = KernelObjectId::task(1);
    let object = match syscall {
        Syscall::Fork => KernelObjectId::task(2),
        Syscall::Socket | Syscall::Bind | Syscall::Listen | Syscall::Accept | Syscall::Connect => {
            KernelObjectId::socket(2)
        }
        _ => KernelObjectId::file(0, 2),
    };
    let net = matches!(
        syscall,
        Syscall::Bind | Syscall::Listen | Syscall::Accept | Syscall::Connect
    )
    .then_some(NetInfo {
        direction: NetDirection::Outgoing,
        port: 80,
    });
    let rec = SyscallRecord {
        syscall,
        subject,
        object: Some(object),
        path_depth: matches!(syscall, Syscall::Open | Syscall::Execve).then_some(params.path_depth),
        flags: SyscallFlags {
            creates_new_file: params.creates_new_file,
            outcome: Outcome::Success,
        },
        net,
        timestamp: 1,
        fail_at_ordinal: None,
    };
    let mut builder = MotifBuilder::new(ReductionOptions::default());
    for ev in expand_syscall(&rec)? {
        builder.push_event(&ev)?;
    }
    Ok(builder.finish())
}

/// The motif of a whole program trace: sequential composition of syscall
/// motifs with shared-object stitching and reduction normalization, so the
/// motif predicts the reduced graph.
pub fn program_motif(
    trace: &[SyscallRecord],
    options: ReductionOptions,
) -> Result<Motif, MotifError> {
    let mut builder = MotifBuilder::new(options);
    for rec in trace {
        for ev in expand_syscall(rec)? {
            builder.push_event(&ev)?;
        }
    }
    Ok(builder.finish())
}
