use std::time::Instant;

use crate::event_model::{HookEvent, HookId, KernelObjectId, OriginInfo, Syscall};
use crate::object_store::ObjectStore;

use super::{AuditProgram, CgroupTree, DispatchCtx, Dispatcher, ProgramBody, TaskCgroupMap};

/// Shapes compared by the dispatch micro-benchmark.
#[derive(Debug, Clone)]
pub struct DispatchBenchConfig {
    /// Chain depths to measure (a depth-D chain is root -> c1 -> ... -> cD
    /// with the task and programs at the leaf).
    pub depths: Vec<u32>,
    /// Program counts to measure on a single (cgroup, hook) list.
    pub program_counts: Vec<u32>,
    /// Events dispatched per configuration.
    pub events: u32,
}

impl Default for DispatchBenchConfig {
    fn default() -> Self {
        Self {
            depths: vec![1, 2, 4, 8],
            program_counts: vec![1, 4, 16],
            events: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DispatchBenchRow {
    pub name: String,
    pub events: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    /// Deterministic work proxy: programs executed per event.
    pub executed_per_event: f64,
}

pub(crate) fn summarize_ns(samples: &mut [u64]) -> (f64, u64, u64) {
    if samples.is_empty() {
        return (0.0, 0, 0);
    }
    samples.sort_unstable();
    let mean = samples.iter().sum::<u64>() as f64 / samples.len() as f64;
    let p = |q: f64| samples[((samples.len() - 1) as f64 * q) as usize];
    (mean, p(0.5), p(0.99))
}

fn test_event(task: KernelObjectId) -> HookEvent {
    HookEvent {
        hook: HookId::FileOpen,
        subject: task,
        object: Some(KernelObjectId::file(1, 99)),
        origin: OriginInfo {
            syscall: Syscall::Open,
            timestamp: 1,
            net: None,
            creates_new_file: false,
        },
        ordinal: 0,
    }
}

fn measure(
    name: &str,
    dispatcher: &Dispatcher,
    map: &TaskCgroupMap,
    events: u32,
) -> DispatchBenchRow {
    let store = ObjectStore::new();
    let task = KernelObjectId::task(1);
    store.register(task).unwrap();
    let ev = test_event(task);
    let mut executed_total: u64 = 0;
    // batch the timer to keep clock overhead out of tiny per-event costs
    const BATCH: u32 = 64;
    let mut samples = Vec::with_capacity((events / BATCH + 1) as usize);
    let mut remaining = events;
    while remaining > 0 {
        let n = remaining.min(BATCH);
        let start = Instant::now();
        for _ in 0..n {
            let mut ctx = DispatchCtx::new(&store);
            let res = dispatcher.dispatch_event(&ev, map, &mut ctx).unwrap();
            executed_total += res.executed.len() as u64;
        }
        let elapsed = start.elapsed().as_nanos() as u64;
        samples.push(elapsed / n as u64);
        remaining -= n;
    }
    let (mean_ns, p50_ns, p99_ns) = summarize_ns(&mut samples);
    DispatchBenchRow {
        name: name.to_string(),
        events: events as u64,
        mean_ns,
        p50_ns,
        p99_ns,
        executed_per_event: executed_total as f64 / events as f64,
    }
}

fn noop_program(i: u32) -> AuditProgram {
    AuditProgram::new(format!("noop{i}"), HookId::FileOpen, ProgramBody::Allow)
}

/// Measures per-event dispatch cost for {no programs, N programs at the
/// leaf, N at the root, depth-D chains}. Cost grows with both hierarchy
/// depth and program count; `executed_per_event` is the deterministic proxy
/// for that growth.
pub fn bench_dispatch(cfg: &DispatchBenchConfig) -> Vec<DispatchBenchRow> {
    let mut rows = Vec::new();

    // baseline: nothing attached
    let dispatcher = Dispatcher::new(CgroupTree::new());
    let map = TaskCgroupMap::new();
    rows.push(measure("no-programs", &dispatcher, &map, cfg.events));

    for &n in &cfg.program_counts {
        let mut dispatcher = Dispatcher::new(CgroupTree::new());
        for i in 0..n {
            dispatcher
                .attach(CgroupTree::ROOT, HookId::FileOpen, noop_program(i), true)
                .unwrap();
        }
        rows.push(measure(
            &format!("{n}-at-root"),
            &dispatcher,
            &TaskCgroupMap::new(),
            cfg.events,
        ));
    }

    for &depth in &cfg.depths {
        let mut tree = CgroupTree::new();
        let mut parent = CgroupTree::ROOT.to_string();
        for d in 1..=depth {
            let name = format!("c{d}");
            tree.add(&name, &parent).unwrap();
            parent = name;
        }
        let mut dispatcher = Dispatcher::new(tree);
        dispatcher
            .attach(&parent, HookId::FileOpen, noop_program(0), true)
            .unwrap();
        let mut map = TaskCgroupMap::new();
        map.assign(KernelObjectId::task(1), parent.clone());
        rows.push(measure(
            &format!("chain-depth-{depth}"),
            &dispatcher,
            &map,
            cfg.events,
        ));
    }

    rows
}
