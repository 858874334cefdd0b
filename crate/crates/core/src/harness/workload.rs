use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::event_model::{
    KernelObjectId, NetDirection, NetInfo, Outcome, Syscall, SyscallFlags,
    SyscallRecord,
};

use super::HarnessError;

/// Built-in workloads. Generation is deterministic given (workload, size,
/// seed); `size` counts syscall records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    /// open/read/write mix over a small file set on two file systems.
    Fileserver,
    /// Socket lifecycle mix (create/bind/listen/accept/connect) plus log
    /// file traffic.
    Webserver,
    /// Fork cascades with shared-file reads.
    ForkTree,
    /// Uniform mix across all modeled syscalls.
    Mixed,
    /// The fixed pipe-and-fork subgraph scenario (size and seed ignored).
    Fig4,
}

impl FromStr for Workload {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fileserver" => Ok(Workload::Fileserver),
            "webserver" => Ok(Workload::Webserver),
            "fork-tree" => Ok(Workload::ForkTree),
            "mixed" => Ok(Workload::Mixed),
            "fig4-scenario" => Ok(Workload::Fig4),
            other => Err(HarnessError::UnknownWorkload(other.to_string())),
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    ts: u64,
    records: Vec<SyscallRecord>,
    tasks: Vec<KernelObjectId>,
    next_task: u64,
    next_socket: u64,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            ts: 0,
            records: Vec::new(),
            tasks: vec![KernelObjectId::task(1)],
            next_task: 2,
            next_socket: 1000,
        }
    }

    fn ts(&mut self) -> u64 {
        self.ts += 1;
        self.ts
    }

    fn task(&mut self) -> KernelObjectId {
        *self.tasks.choose(&mut self.rng).unwrap()
    }

    fn push(&mut self, mut rec: SyscallRecord) {
        rec.timestamp = self.ts();
        self.records.push(rec);
    }

    fn simple(&mut self, syscall: Syscall, subject: KernelObjectId, object: KernelObjectId) {
        self.push(SyscallRecord {
            syscall,
            subject,
            object: Some(object),
            path_depth: None,
            flags: SyscallFlags::default(),
            net: None,
            timestamp: 0,
            fail_at_ordinal: None,
        });
    }

    fn open(&mut self, subject: KernelObjectId, object: KernelObjectId, depth: u32, creates: bool) {
        // a slice of opens fail mid-walk, truncating at a directory check
        let fail = depth > 0 && self.rng.gen_bool(0.05);
        let fail_at = fail.then(|| self.rng.gen_range(0..depth));
        self.push(SyscallRecord {
            syscall: Syscall::Open,
            subject,
            object: Some(object),
            path_depth: Some(depth),
            flags: SyscallFlags {
                creates_new_file: creates && !fail,
                outcome: if fail { Outcome::Failure } else { Outcome::Success },
            },
            net: None,
            timestamp: 0,
            fail_at_ordinal: fail_at,
        });
    }

    fn net(
        &mut self,
        syscall: Syscall,
        subject: KernelObjectId,
        socket: KernelObjectId,
        direction: NetDirection,
        port: u16,
    ) {
        self.push(SyscallRecord {
            syscall,
            subject,
            object: Some(socket),
            path_depth: None,
            flags: SyscallFlags::default(),
            net: Some(NetInfo { direction, port }),
            timestamp: 0,
            fail_at_ordinal: None,
        });
    }

    fn fork(&mut self) -> KernelObjectId {
        let parent = self.task();
        let child = KernelObjectId::task(self.next_task);
        self.next_task += 1;
        self.tasks.push(child);
        self.simple(Syscall::Fork, parent, child);
        child
    }

    fn fresh_socket(&mut self) -> KernelObjectId {
        let s = KernelObjectId::socket(self.next_socket);
        self.next_socket += 1;
        s
    }
}

fn file_pool(n: u64) -> Vec<KernelObjectId> {
    (0..n)
        .map(|i| KernelObjectId::file(1 + (i % 2), 100 + i))
        .collect()
}

fn fileserver(gen: &mut Gen, size: u64) {
    let files = file_pool(16);
    for _ in 0..size {
        let t = gen.task();
        let f = *files.choose(&mut gen.rng).unwrap();
        match gen.rng.gen_range(0..10) {
            0..=3 => {
                let depth = gen.rng.gen_range(0..5);
                let creates = gen.rng.gen_bool(0.1);
                gen.open(t, f, depth, creates);
            }
            4..=6 => gen.simple(Syscall::Read, t, f),
            _ => gen.simple(Syscall::Write, t, f),
        }
    }
}

fn webserver(gen: &mut Gen, size: u64) {
    let log = KernelObjectId::file(1, 50);
    let ports = [80u16, 443, 22, 8080];
    for _ in 0..size {
        let t = gen.task();
        match gen.rng.gen_range(0..10) {
            0..=4 => {
                let s = gen.fresh_socket();
                let port = *ports.choose(&mut gen.rng).unwrap();
                match gen.rng.gen_range(0..5) {
                    0 => gen.net(Syscall::Socket, t, s, NetDirection::Incoming, port),
                    1 => gen.net(Syscall::Bind, t, s, NetDirection::Incoming, port),
                    2 => gen.net(Syscall::Listen, t, s, NetDirection::Incoming, port),
                    3 => gen.net(Syscall::Accept, t, s, NetDirection::Incoming, port),
                    _ => gen.net(Syscall::Connect, t, s, NetDirection::Outgoing, port),
                }
            }
            5..=7 => gen.simple(Syscall::Read, t, log),
            _ => gen.simple(Syscall::Write, t, log),
        }
    }
}

fn fork_tree(gen: &mut Gen, size: u64) {
    let shared = KernelObjectId::file(1, 60);
    for _ in 0..size {
        if gen.rng.gen_bool(0.4) || gen.tasks.len() == 1 {
            gen.fork();
        } else {
            let t = gen.task();
            if gen.rng.gen_bool(0.5) {
                gen.simple(Syscall::Read, t, shared);
            } else {
                gen.simple(Syscall::Write, t, shared);
            }
        }
    }
}

fn mixed(gen: &mut Gen, size: u64) {
    let files = file_pool(12);
    let pipes: Vec<KernelObjectId> = (0..4).map(KernelObjectId::pipe).collect();
    let ports = [80u16, 443, 22, 8080];
    for _ in 0..size {
        let t = gen.task();
        match gen.rng.gen_range(0..20) {
            0..=3 => {
                let f = *files.choose(&mut gen.rng).unwrap();
                let depth = gen.rng.gen_range(0..4);
                let creates = gen.rng.gen_bool(0.15);
                gen.open(t, f, depth, creates);
            }
            4..=8 => {
                let f = *files.choose(&mut gen.rng).unwrap();
                gen.simple(Syscall::Read, t, f);
            }
            9..=12 => {
                let f = *files.choose(&mut gen.rng).unwrap();
                gen.simple(Syscall::Write, t, f);
            }
            13..=14 => {
                let p = *pipes.choose(&mut gen.rng).unwrap();
                if gen.rng.gen_bool(0.5) {
                    gen.simple(Syscall::Read, t, p);
                } else {
                    gen.simple(Syscall::Write, t, p);
                }
            }
            15 => {
                gen.fork();
            }
            16 => {
                let f = *files.choose(&mut gen.rng).unwrap();
                let depth = gen.rng.gen_range(0..3);
                gen.push(SyscallRecord {
                    syscall: Syscall::Execve,
                    subject: t,
                    object: Some(f),
                    path_depth: Some(depth),
                    flags: SyscallFlags::default(),
                    net: None,
                    timestamp: 0,
                    fail_at_ordinal: None,
                });
            }
            _ => {
                let s = gen.fresh_socket();
                let port = *ports.choose(&mut gen.rng).unwrap();
                let (syscall, dir) = match gen.rng.gen_range(0..5) {
                    0 => (Syscall::Socket, NetDirection::Outgoing),
                    1 => (Syscall::Bind, NetDirection::Incoming),
                    2 => (Syscall::Listen, NetDirection::Incoming),
                    3 => (Syscall::Accept, NetDirection::Incoming),
                    _ => (Syscall::Connect, NetDirection::Outgoing),
                };
                gen.net(syscall, t, s, dir, port);
            }
        }
    }
}

/// The fixed subgraph scenario: a task creates a child, the child reads a
/// file and writes a pipe, the parent reads the pipe back.
fn fig4() -> Vec<SyscallRecord> {
    let parent = KernelObjectId::task(1);
    let child = KernelObjectId::task(2);
    let file = KernelObjectId::file(1, 10);
    let pipe = KernelObjectId::pipe(20);
    let mut records = Vec::new();
    let mut ts = 0u64;
    let mut push = |syscall: Syscall, subject: KernelObjectId, object: KernelObjectId, depth: Option<u32>| {
        ts += 1;
        records.push(SyscallRecord {
            syscall,
            subject,
            object: Some(object),
            path_depth: depth,
            flags: SyscallFlags::default(),
            net: None,
            timestamp: ts,
            fail_at_ordinal: None,
        });
    };
    push(Syscall::Fork, parent, child, None);
    push(Syscall::Open, child, file, Some(0));
    push(Syscall::Read, child, file, None);
    push(Syscall::Write, child, pipe, None);
    push(Syscall::Read, parent, pipe, None);
    records
}

/// Generates a deterministic trace for a built-in workload.
pub fn generate_trace(workload: Workload, size: u64, seed: u64) -> Vec<SyscallRecord> {
    match workload {
        Workload::Fig4 => fig4(),
        _ => {
            let mut gen = Gen::new(seed);
            match workload {
                Workload::Fileserver => fileserver(&mut gen, size),
                Workload::Webserver => webserver(&mut gen, size),
                Workload::ForkTree => fork_tree(&mut gen, size),
                Workload::Mixed => mixed(&mut gen, size),
                Workload::Fig4 => unreachable!(),
            }
            gen.records
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::write_trace;

    #[test]
    fn unknown_workload_is_an_error() {
        assert!(matches!(
            "fileserver9000".parse::<Workload>(),
            Err(HarnessError::UnknownWorkload(_))
        ));
    }

    #[test]
    fn size_zero_yields_empty_trace() {
        assert!(generate_trace(Workload::Fileserver, 0, 7).is_empty());
    }

    #[test]
    fn same_seed_yields_byte_identical_traces() {
        for workload in [
            Workload::Fileserver,
            Workload::Webserver,
            Workload::ForkTree,
            Workload::Mixed,
        ] {
            let a = generate_trace(workload, 200, 7);
            let b = generate_trace(workload, 200, 7);
            let mut ba = Vec::new();
            let mut bb = Vec::new();
            write_trace(&mut ba, &a).unwrap();
            write_trace(&mut bb, &b).unwrap();
            assert_eq!(ba, bb);
            let c = generate_trace(workload, 200, 8);
            assert_ne!(a, c, "{workload:?} ignores the seed");
        }
    }

    #[test]
    fn generated_traces_validate() {
        for workload in [
            Workload::Fileserver,
            Workload::Webserver,
            Workload::ForkTree,
            Workload::Mixed,
            Workload::Fig4,
        ] {
            for rec in generate_trace(workload, 300, 3) {
                rec.validate().expect("generated record is valid");
            }
        }
    }

    #[test]
    fn fig4_is_the_exact_event_sequence() {
        let trace = generate_trace(Workload::Fig4, 0, 0);
        let syscalls: Vec<Syscall> = trace.iter().map(|r| r.syscall).collect();
        assert_eq!(
            syscalls,
            vec![
                Syscall::Fork,
                Syscall::Open,
                Syscall::Read,
                Syscall::Write,
                Syscall::Read
            ]
        );
        assert_eq!(trace[0].subject, KernelObjectId::task(1));
        assert_eq!(trace[2].subject, KernelObjectId::task(2));
        assert_eq!(generate_trace(Workload::Fig4, 9, 9), trace);
    }
}
