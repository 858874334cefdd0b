use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::dispatch::{
    AuditProgram, CgroupTree, DispatchCtx, Dispatcher, ProgramBody, TaskCgroupMap,
};
use crate::event_model::{
    HookEvent, HookId, KernelObjectId, NetDirection, NetInfo, OriginInfo, Syscall,
};
use crate::object_store::ObjectStore;
use crate::policy::{bind_context, compile, monolithic_program_set, parse_policy};

use super::{generate_trace, HarnessError, Workload};

/// The benchmark suites. Each reports relative shapes, never absolute
/// targets: invocation cost per mechanism across socket calls, local-storage
/// vs composite-key map lookups, compiled policy vs runtime interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Invocation,
    Storage,
    Policy,
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "invocation" => Ok(Suite::Invocation),
            "storage" => Ok(Suite::Storage),
            "policy" => Ok(Suite::Policy),
            other => Err(HarnessError::Scenario(format!(
                "unknown bench suite {other:?} (known: invocation, storage, policy)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub events: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            events: 30_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub events: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

/// Ratios are only computed between rows running the same event workload.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub name: String,
    pub baseline: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub suite: String,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<RatioRow>,
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "suite: {} (seed {})", self.suite, self.seed);
        let _ = writeln!(
            out,
            "{:<28} {:>10} {:>12} {:>10} {:>10}",
            "configuration", "events", "mean ns/ev", "p50", "p99"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<28} {:>10} {:>12.1} {:>10} {:>10}",
                r.name, r.events, r.mean_ns, r.p50_ns, r.p99_ns
            );
            for (k, v) in &r.extra {
                let _ = writeln!(out, "    {k}: {v:.3}");
            }
        }
        if !self.ratios.is_empty() {
            let _ = writeln!(out, "ratios (vs {}):", self.ratios[0].baseline);
            for r in &self.ratios {
                let _ = writeln!(out, "  {:<26} {:>8.2}x", r.name, r.ratio);
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

const BATCH: u32 = 256;

fn sample_batches<F: FnMut()>(events: u32, samples: &mut Vec<u64>, mut f: F) {
    let mut remaining = events;
    while remaining > 0 {
        let n = remaining.min(BATCH);
        let start = Instant::now();
        for _ in 0..n {
            f();
        }
        samples.push(start.elapsed().as_nanos() as u64 / n as u64);
        remaining -= n;
    }
}

fn timed<F: FnMut()>(events: u32, mut f: F) -> (f64, u64, u64) {
    // warmup round against cold caches and frequency ramping
    for _ in 0..BATCH {
        f();
    }
    let mut samples = Vec::with_capacity((events / BATCH + 1) as usize);
    sample_batches(events, &mut samples, f);
    crate::dispatch::summarize_ns(&mut samples)
}

fn socket_event(hook: HookId, task: KernelObjectId) -> HookEvent {
    let syscall = match hook {
        HookId::SocketCreate => Syscall::Socket,
        HookId::SocketBind => Syscall::Bind,
        HookId::SocketListen => Syscall::Listen,
        _ => Syscall::Accept,
    };
    HookEvent {
        hook,
        subject: task,
        object: Some(KernelObjectId::socket(5)),
        origin: OriginInfo {
            syscall,
            timestamp: 1,
            net: Some(NetInfo {
                direction: NetDirection::Incoming,
                port: 80,
            }),
            creates_new_file: false,
        },
        ordinal: 0,
    }
}

const SOCKET_HOOKS: [(&str, HookId); 4] = [
    ("socket", HookId::SocketCreate),
    ("bind", HookId::SocketBind),
    ("listen", HookId::SocketListen),
    ("accept", HookId::SocketAccept),
];

/// Compares hook invocation mechanisms: a direct function call, a
/// single-program dispatch, and hierarchy dispatch at depth. Overhead per
/// mechanism should be nearly constant across the four socket calls.
///
/// Cells are sampled round-robin over several rounds and summarized by the
/// median batch, so frequency ramps and cache warmup do not land on one
/// cell.
fn invocation_suite(cfg: &BenchConfig) -> BenchReport {
    const MECHANISMS: [(&str, u32); 3] =
        [("lsm-direct", 0), ("single-program", 0), ("hierarchy-depth-4", 4)];
    const ROUNDS: u32 = 4;

    let task = KernelObjectId::task(1);
    let store = ObjectStore::new();
    store.register(task).unwrap();

    struct Cell {
        mech: &'static str,
        syscall: &'static str,
        dispatch: Option<(Dispatcher, TaskCgroupMap)>,
        ev: HookEvent,
        samples: Vec<u64>,
    }

    let mut cells: Vec<Cell> = Vec::new();
    for (mech, depth) in MECHANISMS {
        let dispatch = if mech == "lsm-direct" {
            None
        } else {
            let mut tree = CgroupTree::new();
            let mut leaf = "root".to_string();
            for d in 1..=depth {
                let name = format!("c{d}");
                tree.add(&name, &leaf).unwrap();
                leaf = name;
            }
            let mut dispatcher = Dispatcher::new(tree);
            for (name, hook) in SOCKET_HOOKS {
                dispatcher
                    .attach(
                        "root",
                        hook,
                        AuditProgram::new(format!("noop:{name}"), hook, ProgramBody::Allow),
                        true,
                    )
                    .unwrap();
            }
            let mut map = TaskCgroupMap::new();
            map.assign(task, leaf);
            Some((dispatcher, map))
        };
        for (name, hook) in SOCKET_HOOKS {
            cells.push(Cell {
                mech,
                syscall: name,
                dispatch: dispatch.clone(),
                ev: socket_event(hook, task),
                samples: Vec::new(),
            });
        }
    }

    // the native mechanism: find the callback in the hook table and call it
    let hook_table: HashMap<HookId, fn(&HookEvent) -> i32> = SOCKET_HOOKS
        .iter()
        .map(|(_, h)| (*h, (|ev: &HookEvent| ev.ordinal as i32) as fn(&HookEvent) -> i32))
        .collect();

    let events_per_round = (cfg.events / ROUNDS).max(BATCH);
    for round in 0..ROUNDS {
        for cell in cells.iter_mut() {
            let mut scratch = Vec::new();
            let samples: &mut Vec<u64> = if round == 0 { &mut scratch } else { &mut cell.samples };
            match &cell.dispatch {
                None => {
                    let ev = &cell.ev;
                    sample_batches(events_per_round, samples, || {
                        let f = hook_table[&ev.hook];
                        std::hint::black_box(f(std::hint::black_box(ev)));
                    });
                }
                Some((dispatcher, map)) => {
                    let ev = &cell.ev;
                    sample_batches(events_per_round, samples, || {
                        let mut ctx = DispatchCtx::new(&store);
                        let _ = dispatcher.dispatch_event(ev, map, &mut ctx).unwrap();
                    });
                }
            }
            // round 0 is warmup; its samples go nowhere
        }
    }

    let mut rows = Vec::new();
    let mut medians: HashMap<(&str, &str), f64> = HashMap::new();
    for cell in cells.iter_mut() {
        let (mean, p50, p99) = crate::dispatch::summarize_ns(&mut cell.samples);
        medians.insert((cell.mech, cell.syscall), p50.max(1) as f64);
        rows.push(BenchRow {
            name: format!("{}/{}", cell.mech, cell.syscall),
            events: (events_per_round * (ROUNDS - 1)) as u64,
            mean_ns: mean,
            p50_ns: p50,
            p99_ns: p99,
            extra: BTreeMap::new(),
        });
    }
    let mut ratios = Vec::new();
    for (mech, _) in &MECHANISMS[1..] {
        let mut per_syscall = Vec::new();
        for (name, _) in SOCKET_HOOKS {
            let ratio = medians[&(*mech, name)] / medians[&("lsm-direct", name)];
            per_syscall.push(ratio);
            ratios.push(RatioRow {
                name: format!("{mech}/{name}"),
                baseline: format!("lsm-direct/{name}"),
                ratio,
            });
        }
        let mean_ratio = per_syscall.iter().sum::<f64>() / per_syscall.len() as f64;
        let var = per_syscall
            .iter()
            .map(|r| (r - mean_ratio).powi(2))
            .sum::<f64>()
            / per_syscall.len() as f64;
        let cv = var.sqrt() / mean_ratio;
        if let Some(row) = rows.iter_mut().rev().find(|r| r.name.starts_with(mech)) {
            row.extra.insert("ratio_cv_across_syscalls".to_string(), cv);
        }
    }

    BenchReport {
        suite: "invocation".to_string(),
        seed: cfg.seed,
        rows,
        ratios,
        notes: vec![
            "per-mechanism overhead should be nearly constant across socket calls".to_string(),
            "ratios use median batch times against the lsm-direct baseline".to_string(),
        ],
    }
}

/// Compares the lifecycle-bound local-storage path against an eBPF-map-style
/// table keyed by manually composed (kind, fs, id, generation) strings.
///
/// Local storage travels with the object, so when a hook fires the storage
/// is one handle access away; the map path must rebuild the composite key
/// from the object on every access (the error-prone part the design
/// avoids).
fn storage_suite(cfg: &BenchConfig) -> BenchReport {
    let store = ObjectStore::new();
    let objects: Vec<KernelObjectId> = (0..256u64)
        .map(|i| KernelObjectId::inode(1 + i % 3, 1000 + i))
        .collect();
    let mut handles = Vec::with_capacity(objects.len());
    for o in &objects {
        store.register(*o).unwrap();
        let h = store.storage_get(o, true).unwrap().unwrap();
        h.put("v", vec![1, 2, 3, 4]).unwrap();
        handles.push(h);
    }
    let mut idx = 0usize;
    let (local_mean, lp50, lp99) = timed(cfg.events, || {
        let h = &handles[idx % handles.len()];
        idx += 1;
        std::hint::black_box(h.get("v").unwrap());
    });

    // the composite-key map path: key uniqueness is the caller's burden
    let mut map: HashMap<String, Vec<u8>> = HashMap::new();
    for o in &objects {
        map.insert(
            format!("{}:{}:{}:{}", o.kind, o.fs_uuid.unwrap_or(0), o.local_id, o.generation),
            vec![1, 2, 3, 4],
        );
    }
    let mut idx = 0usize;
    let (map_mean, mp50, mp99) = timed(cfg.events, || {
        let o = &objects[idx % objects.len()];
        idx += 1;
        let key = format!(
            "{}:{}:{}:{}",
            o.kind,
            o.fs_uuid.unwrap_or(0),
            o.local_id,
            o.generation
        );
        std::hint::black_box(map.get(&key));
    });

    BenchReport {
        suite: "storage".to_string(),
        seed: cfg.seed,
        rows: vec![
            BenchRow {
                name: "local-storage".to_string(),
                events: cfg.events as u64,
                mean_ns: local_mean,
                p50_ns: lp50,
                p99_ns: lp99,
                extra: BTreeMap::new(),
            },
            BenchRow {
                name: "composite-key-map".to_string(),
                events: cfg.events as u64,
                mean_ns: map_mean,
                p50_ns: mp50,
                p99_ns: mp99,
                extra: BTreeMap::new(),
            },
        ],
        ratios: vec![RatioRow {
            name: "composite-key-map".to_string(),
            baseline: "local-storage".to_string(),
            ratio: map_mean / local_mean.max(0.1),
        }],
        notes: vec!["direction matters (local <= map), not the magnitude".to_string()],
    }
}

/// Compares a compiled minimal program set against the monolithic runtime
/// interpreter over the same mixed trace: programs executed per event is the
/// deterministic cost proxy, wall time the indicative one.
fn policy_suite(cfg: &BenchConfig) -> BenchReport {
    let policy_doc = br#"{
        "subject": "/usr/bin/foo",
        "fs": {"default_write": "deny",
               "allow": [{"path": "/tmp/**", "perms": ["read", "write"]}]}
    }"#;
    let policy = parse_policy(policy_doc).unwrap();
    let trace = generate_trace(Workload::Mixed, (cfg.events / 4).max(100) as u64, cfg.seed);

    let mut rows = Vec::new();
    let mut executed = Vec::new();
    for (name, programs) in [
        ("compiled-minimal", compile(&policy).programs),
        ("runtime-interpreter", monolithic_program_set(&policy)),
    ] {
        let store = ObjectStore::new();
        let mut dispatcher = Dispatcher::new(CgroupTree::new());
        for prog in programs {
            dispatcher.attach("root", prog.hook, prog, true).unwrap();
        }
        let map = TaskCgroupMap::new();
        // every task runs the sandboxed executable
        let events: Vec<HookEvent> = trace
            .iter()
            .flat_map(|r| crate::event_model::expand_syscall(r).unwrap())
            .collect();
        for rec in &trace {
            let _ = store.register(rec.subject);
            let _ = bind_context(&store, &rec.subject, "/usr/bin/foo");
            for ev in crate::event_model::expand_syscall(rec).unwrap() {
                if let Some(obj) = ev.object {
                    let _ = store.register(obj);
                    if ev.hook == HookId::TaskFork {
                        let _ = store.register(KernelObjectId::memory_of(&obj));
                    }
                }
            }
        }
        let mut total_executed = 0u64;
        let mut i = 0usize;
        let (mean, p50, p99) = timed(events.len() as u32, || {
            let ev = &events[i % events.len()];
            i += 1;
            let mut ctx = DispatchCtx::new(&store);
            let res = dispatcher.dispatch_event(ev, &map, &mut ctx).unwrap();
            total_executed += res.executed.len() as u64;
        });
        let per_event = total_executed as f64 / events.len() as f64;
        executed.push(per_event);
        let mut extra = BTreeMap::new();
        extra.insert("programs_executed_per_event".to_string(), per_event);
        rows.push(BenchRow {
            name: name.to_string(),
            events: events.len() as u64,
            mean_ns: mean,
            p50_ns: p50,
            p99_ns: p99,
            extra,
        });
    }
    let ratio = rows[1].mean_ns / rows[0].mean_ns.max(0.1);
    BenchReport {
        suite: "policy".to_string(),
        seed: cfg.seed,
        rows,
        ratios: vec![RatioRow {
            name: "runtime-interpreter".to_string(),
            baseline: "compiled-minimal".to_string(),
            ratio,
        }],
        notes: vec![format!(
            "programs/event: compiled {:.3} vs interpreter {:.3}",
            executed[0], executed[1]
        )],
    }
}

/// Runs one benchmark suite.
pub fn run_bench(suite: Suite, cfg: &BenchConfig) -> BenchReport {
    match suite {
        Suite::Invocation => invocation_suite(cfg),
        Suite::Storage => storage_suite(cfg),
        Suite::Policy => policy_suite(cfg),
    }
}
