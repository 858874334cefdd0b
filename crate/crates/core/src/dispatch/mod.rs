//! The cgroup-scoped reference monitor: audit programs attach at
//! (cgroup, hook) pairs and run for every hook event triggered by a task in
//! that cgroup's subtree, traversing from the task's cgroup up to the root.

mod bench;
mod tree;

pub use bench::{bench_dispatch, DispatchBenchConfig, DispatchBenchRow};
pub(crate) use bench::summarize_ns;
pub use tree::{CgroupTree, TreeError};

use std::num::NonZeroI32;
use std::sync::Arc;

use std::collections::HashMap;
use thiserror::Error;

use crate::event_model::{HookEvent, HookId, KernelObjectId, ObjectKind};
use crate::object_store::ObjectStore;
use crate::policy::ViolationSink;
use crate::provenance::CaptureEngine;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("a program is already attached to ({cgroup}, {hook}) without allow_multi")]
    MultiNotAllowed { cgroup: String, hook: HookId },
    #[error("program targets hook {program_hook}, attachment requested {requested}")]
    HookMismatch {
        program_hook: HookId,
        requested: HookId,
    },
    #[error("attachment handle is stale")]
    StaleHandle,
    #[error("unknown task {0}")]
    UnknownTask(KernelObjectId),
    #[error("unknown cgroup {0}")]
    UnknownCgroup(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Outcome of one audit program: allow, or deny with a nonzero code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnCode {
    Allow,
    Deny(NonZeroI32),
}

impl ReturnCode {
    pub fn deny(code: i32) -> Self {
        ReturnCode::Deny(NonZeroI32::new(code).expect("deny code must be nonzero"))
    }

    pub fn is_deny(&self) -> bool {
        matches!(self, ReturnCode::Deny(_))
    }

    pub fn as_i32(&self) -> i32 {
        match self {
            ReturnCode::Allow => 0,
            ReturnCode::Deny(c) => c.get(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttachmentHandle(u64);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProgramId(pub String);

impl std::fmt::Display for ProgramId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Deterministic program body: (event, world access) to return code.
pub type ProgramFn = Arc<dyn Fn(&HookEvent, &mut DispatchCtx) -> ReturnCode + Send + Sync>;

/// What runs when a program fires. `Capture` routes to the capture engine in
/// the dispatch context; `Func` is an arbitrary deterministic body.
#[derive(Clone)]
pub enum ProgramBody {
    Allow,
    Deny(i32),
    Capture,
    Func(ProgramFn),
}

impl std::fmt::Debug for ProgramBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProgramBody::Allow => f.write_str("Allow"),
            ProgramBody::Deny(c) => write!(f, "Deny({c})"),
            ProgramBody::Capture => f.write_str("Capture"),
            ProgramBody::Func(_) => f.write_str("Func(..)"),
        }
    }
}

/// An audit program attachable to (cgroup, hook) pairs.
#[derive(Debug, Clone)]
pub struct AuditProgram {
    pub id: ProgramId,
    pub hook: HookId,
    /// Marks programs that belong to the capture machinery itself, whose
    /// associated daemon objects scenarios typically declare opaque.
    pub opaque_to_capture: bool,
    pub body: ProgramBody,
}

impl AuditProgram {
    pub fn new(id: impl Into<String>, hook: HookId, body: ProgramBody) -> Self {
        Self {
            id: ProgramId(id.into()),
            hook,
            opaque_to_capture: false,
            body,
        }
    }
}

/// Mutable world a program body may touch while it runs.
pub struct DispatchCtx<'a> {
    pub store: &'a ObjectStore,
    pub capture: Option<&'a mut CaptureEngine>,
    pub violations: Option<&'a ViolationSink>,
}

impl<'a> DispatchCtx<'a> {
    pub fn new(store: &'a ObjectStore) -> Self {
        Self {
            store,
            capture: None,
            violations: None,
        }
    }

    pub fn with_capture(mut self, capture: &'a mut CaptureEngine) -> Self {
        self.capture = Some(capture);
        self
    }

    pub fn with_violations(mut self, sink: &'a ViolationSink) -> Self {
        self.violations = Some(sink);
        self
    }
}

/// Task-to-cgroup assignment. Tasks without an explicit assignment belong to
/// the root cgroup.
#[derive(Debug, Clone, Default)]
pub struct TaskCgroupMap {
    assignments: HashMap<KernelObjectId, String>,
}

impl TaskCgroupMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places a task in a cgroup (initial placement; no questions asked).
    pub fn assign(&mut self, task: KernelObjectId, cgroup: impl Into<String>) {
        self.assignments.insert(task, cgroup.into());
    }

    /// Moves an already-placed task. Subsequent dispatches traverse from the
    /// new cgroup.
    pub fn migrate_task(
        &mut self,
        task: &KernelObjectId,
        to: impl Into<String>,
    ) -> Result<(), DispatchError> {
        match self.assignments.get_mut(task) {
            Some(slot) => {
                *slot = to.into();
                Ok(())
            }
            None => Err(DispatchError::UnknownTask(*task)),
        }
    }

    pub fn cgroup_of<'a>(&'a self, task: &KernelObjectId) -> &'a str {
        self.assignments
            .get(task)
            .map(String::as_str)
            .unwrap_or(CgroupTree::ROOT)
    }
}

/// Result of dispatching one hook event: the final return code and exactly
/// the programs that ran, in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchResult {
    pub final_code: ReturnCode,
    pub executed: Vec<(String, ProgramId)>,
}

#[derive(Debug, Clone)]
struct AttachEntry {
    handle: AttachmentHandle,
    program: usize,
}

#[derive(Debug, Clone, Default)]
struct HookList {
    allow_multi: Option<bool>,
    entries: Vec<AttachEntry>,
}

#[derive(Debug, Clone, Copy)]
struct AttachLoc {
    node: usize,
    hook: HookId,
}

/// Holds the cgroup tree, the program registry, and the per-(cgroup, hook)
/// attachment lists.
#[derive(Default, Clone)]
pub struct Dispatcher {
    tree: CgroupTree,
    programs: Vec<AuditProgram>,
    lists: HashMap<(usize, HookId), HookList>,
    locations: HashMap<AttachmentHandle, AttachLoc>,
    next_handle: u64,
}

impl Dispatcher {
    pub fn new(tree: CgroupTree) -> Self {
        Self {
            tree,
            ..Default::default()
        }
    }

    pub fn tree(&self) -> &CgroupTree {
        &self.tree
    }

    /// Appends a program to the FIFO list of (cgroup, hook). With
    /// `allow_multi=false` the list holds at most one program; the flag must
    /// also agree with how the list was first attached.
    pub fn attach(
        &mut self,
        cgroup: &str,
        hook: HookId,
        prog: AuditProgram,
        allow_multi: bool,
    ) -> Result<AttachmentHandle, DispatchError> {
        if prog.hook != hook {
            return Err(DispatchError::HookMismatch {
                program_hook: prog.hook,
                requested: hook,
            });
        }
        let node = self
            .tree
            .index_of(cgroup)
            .ok_or_else(|| DispatchError::UnknownCgroup(cgroup.to_string()))?;
        let list = self.lists.entry((node, hook)).or_default();
        let multi_not_allowed = match list.allow_multi {
            Some(mode) => mode != allow_multi || (!mode && !list.entries.is_empty()),
            None => !allow_multi && !list.entries.is_empty(),
        };
        if multi_not_allowed {
            return Err(DispatchError::MultiNotAllowed {
                cgroup: cgroup.to_string(),
                hook,
            });
        }
        list.allow_multi = Some(allow_multi);
        let handle = AttachmentHandle(self.next_handle);
        self.next_handle += 1;
        self.programs.push(prog);
        list.entries.push(AttachEntry {
            handle,
            program: self.programs.len() - 1,
        });
        self.locations.insert(handle, AttachLoc { node, hook });
        Ok(handle)
    }

    /// Removes an attachment; the relative order of the remaining programs
    /// is preserved. A handle can be detached once.
    pub fn detach(&mut self, handle: AttachmentHandle) -> Result<(), DispatchError> {
        let loc = self
            .locations
            .remove(&handle)
            .ok_or(DispatchError::StaleHandle)?;
        let list = self
            .lists
            .get_mut(&(loc.node, loc.hook))
            .expect("attachment list exists");
        list.entries.retain(|e| e.handle != handle);
        Ok(())
    }

    /// Runs the programs attached along the path from the subject's cgroup
    /// to the root: current cgroup first, then each ancestor; FIFO order
    /// within a cgroup. The first deny stops the traversal and becomes the
    /// final code.
    ///
    /// The per-list snapshot taken below stands in for the RCU read-side
    /// critical section of the real mechanism: the list a dispatch iterates
    /// is immutable for the duration of that dispatch. Migration and
    /// preemption toggling are no-ops here, kept as trace markers.
    pub fn dispatch_event(
        &self,
        ev: &HookEvent,
        map: &TaskCgroupMap,
        ctx: &mut DispatchCtx<'_>,
    ) -> Result<DispatchResult, DispatchError> {
        if ev.subject.kind != ObjectKind::Task {
            return Err(DispatchError::UnknownTask(ev.subject));
        }
        let start = map.cgroup_of(&ev.subject);
        let start_idx = self
            .tree
            .index_of(start)
            .ok_or_else(|| DispatchError::UnknownCgroup(start.to_string()))?;
        log::trace!("migrate_disable (no-op)");
        log::trace!("rcu_read_lock (no-op)");
        let mut executed = Vec::new();
        let mut final_code = ReturnCode::Allow;
        'walk: for node in self.tree.path_to_root(start_idx) {
            let snapshot: Vec<usize> = match self.lists.get(&(node, ev.hook)) {
                Some(list) => list.entries.iter().map(|e| e.program).collect(),
                None => continue,
            };
            for prog_idx in snapshot {
                let prog = &self.programs[prog_idx];
                let rc = self.run_body(prog, ev, ctx);
                executed.push((self.tree.name_of(node).to_string(), prog.id.clone()));
                if rc.is_deny() {
                    final_code = rc;
                    break 'walk;
                }
            }
        }
        log::trace!("rcu_read_unlock (no-op)");
        log::trace!("migrate_enable (no-op)");
        Ok(DispatchResult {
            final_code,
            executed,
        })
    }

    fn run_body(
        &self,
        prog: &AuditProgram,
        ev: &HookEvent,
        ctx: &mut DispatchCtx<'_>,
    ) -> ReturnCode {
        match &prog.body {
            ProgramBody::Allow => ReturnCode::Allow,
            ProgramBody::Deny(code) => ReturnCode::deny(*code),
            ProgramBody::Capture => {
                if let Some(engine) = ctx.capture.as_deref_mut() {
                    if let Err(err) = engine.capture_event(ev, ctx.store) {
                        log::warn!("capture failed for {}: {err}", ev.hook);
                        engine.note_failure();
                    }
                }
                ReturnCode::Allow
            }
            ProgramBody::Func(f) => f(ev, ctx),
        }
    }
}
