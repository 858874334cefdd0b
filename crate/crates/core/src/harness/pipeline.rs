use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use serde::Serialize;

use crate::dispatch::{
    AuditProgram, CgroupTree, DispatchCtx, Dispatcher, ProgramBody, TaskCgroupMap,
};
use crate::event_model::{expand_syscall, HookId, KernelObjectId, SyscallRecord};
use crate::object_store::{ObjectStore, StorageStats};
use crate::policy::{
    bind_context, compile, parse_policy, ViolationRecord, ViolationSink,
};
use crate::provenance::{
    set_opaque, CaptureCounters, CaptureEngine, CaptureOptions, OverflowPolicy, ProvDocument,
    ProvElement, RingBuffer, RingStats, SerializeError, Serializer, CONTEXT_SLOT,
};

use super::scenario::{ProgramSpec, Scenario};
use super::HarnessError;

/// Knobs for one end-to-end run. The reduction switches exist so the oracle
/// configuration (merging and avoidance disabled) can run over the same
/// trace.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub merge: bool,
    pub version_avoidance: bool,
    /// Drop elements when the ring buffer fills instead of applying
    /// backpressure. The serializer then drains after replay, keeping drop
    /// accounting deterministic.
    pub drop_on_full: bool,
    pub ring_capacity: usize,
    pub violation_capacity: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            merge: true,
            version_avoidance: true,
            drop_on_full: false,
            ring_capacity: 4096,
            violation_capacity: 65536,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub records: u64,
    pub events: u64,
    pub hook_counts: BTreeMap<String, u64>,
    pub programs_executed: u64,
    pub denies: u64,
    pub capture: Option<CaptureCounters>,
    pub ring: Option<RingStats>,
    pub elements_serialized: u64,
    pub violations: u64,
    pub violations_dropped: u64,
    pub storage_before_teardown: StorageStats,
    pub live_objects_with_storage: u64,
    pub storage_after_teardown: StorageStats,
}

/// Everything a run produces: the consolidated document, the raw element
/// stream in serialization order, the violation log, and the stats.
pub struct RunOutput {
    pub document: ProvDocument,
    pub elements: Vec<ProvElement>,
    pub violations: Vec<ViolationRecord>,
    pub stats: RunStats,
}

/// Registers every object a record will touch (subject plus its cred, the
/// object, fork children with their memory, synthesized path directories).
fn register_record_objects(
    store: &ObjectStore,
    rec: &SyscallRecord,
) -> Result<(), HarnessError> {
    let _ = store.register(rec.subject);
    let _ = store.register(KernelObjectId::cred_of(&rec.subject));
    for ev in expand_syscall(rec)? {
        if let Some(obj) = ev.object {
            let _ = store.register(obj);
            if ev.hook == HookId::TaskFork {
                let _ = store.register(KernelObjectId::memory_of(&obj));
                let _ = store.register(KernelObjectId::cred_of(&obj));
            }
        }
    }
    Ok(())
}

struct World {
    store: ObjectStore,
    dispatcher: Dispatcher,
    map: TaskCgroupMap,
    capture: Option<CaptureEngine>,
    ring: Option<Arc<RingBuffer<ProvElement>>>,
    violations: Arc<ViolationSink>,
}

fn build_world(scenario: &Scenario, cfg: &RunConfig) -> Result<World, HarnessError> {
    scenario.validate()?;
    let mut tree = CgroupTree::new();
    for cg in &scenario.cgroups {
        if cg.id == "root" {
            continue;
        }
        tree.add(&cg.id, cg.parent.as_deref().unwrap_or("root"))
            .map_err(crate::dispatch::DispatchError::from)?;
    }
    let mut dispatcher = Dispatcher::new(tree);
    let store = ObjectStore::new();
    let mut map = TaskCgroupMap::new();

    for t in &scenario.tasks {
        store.register(t.id)?;
        store.register(KernelObjectId::cred_of(&t.id))?;
        map.assign(t.id, t.cgroup.clone());
        let h = store.storage_get(&t.id, true)?.expect("storage");
        if let Some(exe) = &t.exe {
            h.put("exe", exe.as_bytes().to_vec())?;
        }
        if let Some(ctx) = &t.security_context {
            h.put(CONTEXT_SLOT, ctx.as_bytes().to_vec())?;
        }
    }
    for o in &scenario.objects {
        store.register(o.id)?;
        let h = store.storage_get(&o.id, true)?.expect("storage");
        if let Some(p) = &o.path {
            h.put(crate::policy::PATH_SLOT, p.as_bytes().to_vec())?;
        }
        if let Some(ctx) = &o.security_context {
            h.put(CONTEXT_SLOT, ctx.as_bytes().to_vec())?;
        }
    }

    // capture programs: one per hook, at the capture cgroup
    let (capture, ring) = match &scenario.capture {
        Some(decl) => {
            let ring = Arc::new(RingBuffer::new(cfg.ring_capacity));
            let options = CaptureOptions {
                merge: cfg.merge,
                version_avoidance: cfg.version_avoidance,
                overflow: if cfg.drop_on_full {
                    OverflowPolicy::Drop
                } else {
                    OverflowPolicy::Block
                },
                filter: scenario.filter.clone().unwrap_or_default(),
            };
            let engine = CaptureEngine::new(options, Arc::clone(&ring));
            for hook in decl.hooks.resolve()? {
                let mut prog = AuditProgram::new(
                    format!("capture:{hook}"),
                    hook,
                    ProgramBody::Capture,
                );
                prog.opaque_to_capture = true;
                dispatcher.attach(&decl.cgroup, hook, prog, true)?;
            }
            (Some(engine), Some(ring))
        }
        None => (None, None),
    };

    // policy program sets
    for attach in &scenario.policies {
        let bytes = serde_json::to_vec(&attach.policy).expect("policy value serializes");
        let policy = parse_policy(&bytes)?;
        let set = compile(&policy);
        for prog in &set.programs {
            dispatcher.attach(&attach.cgroup, prog.hook, prog.clone(), true)?;
        }
        // bind the policy context to tasks running the subject executable
        for t in &scenario.tasks {
            if t.exe.as_deref() == Some(policy.subject_path.as_str()) {
                bind_context(&store, &t.id, &policy.subject_path)?;
            }
        }
    }

    // scripted plain attachments
    for a in &scenario.attachments {
        let body = match a.program {
            ProgramSpec::Noop => ProgramBody::Allow,
            ProgramSpec::Deny(code) => ProgramBody::Deny(code),
        };
        let prog = AuditProgram::new(
            format!("{}:{}@{}", match a.program {
                ProgramSpec::Noop => "noop",
                ProgramSpec::Deny(_) => "deny",
            }, a.hook, a.cgroup),
            a.hook,
            body,
        );
        dispatcher.attach(&a.cgroup, a.hook, prog, a.allow_multi)?;
    }

    // opacity marks (objects must be declared or pre-registered)
    for obj in &scenario.opaque {
        let _ = store.register(*obj);
        set_opaque(&store, obj, true)?;
    }

    let violations = Arc::new(RingBuffer::new(cfg.violation_capacity));
    Ok(World {
        store,
        dispatcher,
        map,
        capture,
        ring,
        violations,
    })
}

/// Replays a trace through dispatch, capture, the ring buffer, and the
/// serializer. The serializer runs concurrently with replay (backpressure
/// mode) or drains after it (drop mode); either way the element stream
/// order, document, violation log and stats are deterministic for identical
/// inputs and flags.
pub fn run_end_to_end(
    scenario: &Scenario,
    trace: &[SyscallRecord],
    cfg: &RunConfig,
) -> Result<RunOutput, HarnessError> {
    let mut world = build_world(scenario, cfg)?;
    let mut stats = RunStats::default();

    // consumer side
    type SerJoin = thread::JoinHandle<Result<(Serializer, Vec<ProvElement>), SerializeError>>;
    let consumer: Option<SerJoin> = match (&world.ring, cfg.drop_on_full) {
        (Some(ring), false) => {
            let ring = Arc::clone(ring);
            Some(thread::spawn(move || {
                let mut ser = Serializer::new();
                let mut stream = Vec::new();
                let mut batch = Vec::new();
                while ring.recv_batch(&mut batch) {
                    for el in batch.drain(..) {
                        ser.append(el.clone())?;
                        stream.push(el);
                    }
                }
                Ok((ser, stream))
            }))
        }
        _ => None,
    };

    for rec in trace {
        register_record_objects(&world.store, rec)?;
        stats.records += 1;
        for ev in expand_syscall(rec)? {
            stats.events += 1;
            *stats.hook_counts.entry(ev.hook.name().to_string()).or_insert(0) += 1;
            let mut ctx = DispatchCtx::new(&world.store);
            if let Some(engine) = world.capture.as_mut() {
                ctx.capture = Some(engine);
            }
            ctx.violations = Some(&world.violations);
            let res = world.dispatcher.dispatch_event(&ev, &world.map, &mut ctx)?;
            stats.programs_executed += res.executed.len() as u64;
            if res.final_code.is_deny() {
                stats.denies += 1;
            }
        }
    }

    if let Some(engine) = world.capture.as_mut() {
        engine.finalize(&world.store)?;
    }

    let (document, elements) = match (&world.ring, consumer) {
        (Some(ring), Some(handle)) => {
            ring.close();
            let (ser, stream) = handle.join().expect("serializer thread")?;
            stats.elements_serialized = ser.appended();
            (ser.into_document(), stream)
        }
        (Some(ring), None) => {
            // drop mode: post-hoc drain keeps the drop count deterministic
            ring.close();
            let mut batch = Vec::new();
            ring.drain_into(&mut batch);
            let mut ser = Serializer::new();
            let mut stream = Vec::new();
            for el in batch {
                // dropped elements can leave dangling references behind;
                // the document skips those, the stream keeps every element
                // the serializer saw
                let _ = ser.append(el.clone());
                stream.push(el);
            }
            stats.elements_serialized = stream.len() as u64;
            (ser.into_document(), stream)
        }
        _ => (ProvDocument::default(), Vec::new()),
    };

    if let Some(engine) = &world.capture {
        stats.capture = Some(engine.counters());
        stats.ring = world.ring.as_ref().map(|r| r.stats());
    }

    let mut violations = Vec::new();
    world.violations.drain_into(&mut violations);
    stats.violations = violations.len() as u64;
    stats.violations_dropped = world.violations.stats().dropped;

    stats.storage_before_teardown = world.store.stats();
    stats.live_objects_with_storage = world.store.live_objects_with_storage();
    for obj in world.store.live_objects() {
        world.store.end_lifecycle(&obj)?;
    }
    stats.storage_after_teardown = world.store.stats();

    Ok(RunOutput {
        document,
        elements,
        violations,
        stats,
    })
}
