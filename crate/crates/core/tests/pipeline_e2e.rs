//! End-to-end pipeline checks: scoping, opacity, violations, and the
//! capture-vs-motif round trip over the workload corpus.

use provsim_core::event_model::{
    KernelObjectId, NetDirection, NetInfo, Syscall, SyscallFlags, SyscallRecord,
};
use provsim_core::harness::{generate_trace, run_end_to_end, RunConfig, Scenario, Workload};
use provsim_core::motif::{match_motif, program_motif, MatchMode, ReductionOptions};
use provsim_core::provenance::Relation;

fn scenario_json(json: &str) -> Scenario {
    Scenario::from_json(json.as_bytes()).unwrap()
}

fn simple(syscall: Syscall, subject: u64, object: KernelObjectId, ts: u64) -> SyscallRecord {
    SyscallRecord {
        syscall,
        subject: KernelObjectId::task(subject),
        object: Some(object),
        path_depth: matches!(syscall, Syscall::Open | Syscall::Execve).then_some(0),
        flags: SyscallFlags::default(),
        net: matches!(
            syscall,
            Syscall::Bind | Syscall::Listen | Syscall::Accept | Syscall::Connect
        )
        .then_some(NetInfo {
            direction: NetDirection::Outgoing,
            port: 22,
        }),
        timestamp: ts,
        fail_at_ordinal: None,
    }
}

#[test]
fn capture_scoped_to_one_cgroup_sees_nothing_from_another() {
    // capture attached in child1 only; all trace activity happens in child2
    let scenario = scenario_json(
        r#"{
            "cgroups": [
                {"id": "child1", "parent": "root"},
                {"id": "child2", "parent": "root"}
            ],
            "tasks": [{"id": {"kind": "task", "local_id": 1}, "cgroup": "child2"}],
            "capture": {"cgroup": "child1", "hooks": "all"}
        }"#,
    );
    let trace: Vec<SyscallRecord> = (0..50)
        .map(|i| simple(Syscall::Read, 1, KernelObjectId::file(1, 10 + i % 3), i + 1))
        .collect();
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert!(out.document.is_empty(), "no captured elements expected");
    assert_eq!(out.stats.elements_serialized, 0);
    assert_eq!(out.stats.programs_executed, 0);
}

#[test]
fn sibling_activity_does_capture_when_inside_the_subtree() {
    let scenario = scenario_json(
        r#"{
            "cgroups": [{"id": "child1", "parent": "root"}],
            "tasks": [{"id": {"kind": "task", "local_id": 1}, "cgroup": "child1"}],
            "capture": {"cgroup": "child1", "hooks": "all"}
        }"#,
    );
    let trace = vec![simple(Syscall::Read, 1, KernelObjectId::file(1, 10), 1)];
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert!(!out.document.is_empty());
}

#[test]
fn opaque_daemon_objects_break_the_feedback_loop() {
    // the serializer daemon's own task and output file are marked opaque;
    // its writes must not surface in the document
    let scenario = scenario_json(
        r#"{
            "tasks": [
                {"id": {"kind": "task", "local_id": 1}},
                {"id": {"kind": "task", "local_id": 99}}
            ],
            "objects": [{"id": {"kind": "file", "fs_uuid": 9, "local_id": 999}, "path": "/var/prov/out"}],
            "capture": {"cgroup": "root", "hooks": "all"},
            "opaque": [
                {"kind": "task", "local_id": 99},
                {"kind": "file", "fs_uuid": 9, "local_id": 999}
            ]
        }"#,
    );
    let daemon_file = KernelObjectId::file(9, 999);
    let trace = vec![
        simple(Syscall::Read, 1, KernelObjectId::file(1, 10), 1),
        // daemon writes its output file: both endpoints opaque
        simple(Syscall::Write, 99, daemon_file, 2),
        simple(Syscall::Write, 99, daemon_file, 3),
        // an audited task touching the opaque file stays invisible too
        simple(Syscall::Read, 1, daemon_file, 4),
    ];
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert!(!out.document.contains_object(&daemon_file));
    assert!(!out.document.contains_object(&KernelObjectId::task(99)));
    // the ordinary read is still there
    assert!(out.document.contains_object(&KernelObjectId::file(1, 10)));
    let skipped = out.stats.capture.unwrap().events_skipped_opaque;
    assert_eq!(skipped, 3);
}

#[test]
fn port_22_connect_under_the_sandbox_logs_exactly_one_violation() {
    let scenario = scenario_json(
        r#"{
            "cgroups": [{"id": "pod", "parent": "root"}],
            "tasks": [{"id": {"kind": "task", "local_id": 1}, "cgroup": "pod", "exe": "/usr/bin/foo"}],
            "policies": [{"cgroup": "pod", "policy": {
                "subject": "/usr/bin/foo",
                "net": {"default": "deny",
                        "allow": [{"direction": "outgoing", "ports": ["http", "https"]}]}
            }}]
        }"#,
    );
    let trace = vec![simple(Syscall::Connect, 1, KernelObjectId::socket(5), 1)];
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert_eq!(out.violations.len(), 1);
    assert_eq!(out.violations[0].rule, "net:default-deny");
    assert_eq!(out.violations[0].code, 13);
    assert_eq!(out.stats.denies, 1);
}

#[test]
fn allowed_connects_log_no_violation() {
    let scenario = scenario_json(
        r#"{
            "tasks": [{"id": {"kind": "task", "local_id": 1}, "exe": "/usr/bin/foo"}],
            "policies": [{"cgroup": "root", "policy": {
                "subject": "/usr/bin/foo",
                "net": {"default": "deny",
                        "allow": [{"direction": "outgoing", "ports": ["https"]}]}
            }}]
        }"#,
    );
    let mut rec = simple(Syscall::Connect, 1, KernelObjectId::socket(5), 1);
    rec.net = Some(NetInfo {
        direction: NetDirection::Outgoing,
        port: 443,
    });
    let out = run_end_to_end(&scenario, &[rec], &RunConfig::default()).unwrap();
    assert!(out.violations.is_empty());
    assert_eq!(out.stats.denies, 0);
}

#[test]
fn fork_inheritance_reaches_grandchildren_through_dispatch() {
    let scenario = scenario_json(
        r#"{
            "tasks": [{"id": {"kind": "task", "local_id": 1}, "exe": "/usr/bin/foo"}],
            "policies": [{"cgroup": "root", "policy": {
                "subject": "/usr/bin/foo",
                "net": {"default": "deny",
                        "allow": [{"direction": "outgoing", "ports": [80]}]}
            }}]
        }"#,
    );
    let mut port80 = simple(Syscall::Connect, 3, KernelObjectId::socket(5), 3);
    port80.net = Some(NetInfo {
        direction: NetDirection::Outgoing,
        port: 80,
    });
    let trace = vec![
        simple(Syscall::Fork, 1, KernelObjectId::task(2), 1),
        simple(Syscall::Fork, 2, KernelObjectId::task(3), 2),
        port80,
        simple(Syscall::Connect, 3, KernelObjectId::socket(6), 4), // port 22
    ];
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert_eq!(out.stats.denies, 1, "grandchild inherits the sandbox");
    assert_eq!(out.violations.len(), 1);
    assert_eq!(out.violations[0].subject, KernelObjectId::task(3));
}

#[test]
fn policy_context_follows_exactly_the_fork_closure() {
    // task 1 is bound to the sandbox; task 50 is an unrelated root. After a
    // cascade of forks, connects from every descendant of 1 are denied and
    // connects from 50's subtree sail through.
    let scenario = scenario_json(
        r#"{
            "tasks": [
                {"id": {"kind": "task", "local_id": 1}, "exe": "/usr/bin/foo"},
                {"id": {"kind": "task", "local_id": 50}, "exe": "/usr/bin/bar"}
            ],
            "policies": [{"cgroup": "root", "policy": {
                "subject": "/usr/bin/foo",
                "net": {"default": "deny"}
            }}]
        }"#,
    );
    let mut trace = vec![
        simple(Syscall::Fork, 1, KernelObjectId::task(2), 1),
        simple(Syscall::Fork, 2, KernelObjectId::task(3), 2),
        simple(Syscall::Fork, 1, KernelObjectId::task(4), 3),
        simple(Syscall::Fork, 50, KernelObjectId::task(51), 4),
        simple(Syscall::Fork, 51, KernelObjectId::task(52), 5),
    ];
    let bound = [1u64, 2, 3, 4];
    let unbound = [50u64, 51, 52];
    let mut ts = 6;
    for t in bound.iter().chain(unbound.iter()) {
        trace.push(simple(Syscall::Connect, *t, KernelObjectId::socket(100 + t), ts));
        ts += 1;
    }
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert_eq!(out.stats.denies, bound.len() as u64);
    let denied: Vec<u64> = out.violations.iter().map(|v| v.subject.local_id).collect();
    assert_eq!(denied, bound);
}

#[test]
fn unrelated_tasks_are_untouched_by_the_policy() {
    let scenario = scenario_json(
        r#"{
            "cgroups": [{"id": "pod", "parent": "root"}],
            "tasks": [
                {"id": {"kind": "task", "local_id": 1}, "cgroup": "pod", "exe": "/usr/bin/foo"},
                {"id": {"kind": "task", "local_id": 2}, "cgroup": "root", "exe": "/usr/bin/bar"}
            ],
            "policies": [{"cgroup": "pod", "policy": {
                "subject": "/usr/bin/foo",
                "net": {"default": "deny"}
            }}]
        }"#,
    );
    // task 2 sits outside the pod cgroup: the policy programs never fire
    let trace = vec![simple(Syscall::Connect, 2, KernelObjectId::socket(5), 1)];
    let out = run_end_to_end(&scenario, &trace, &RunConfig::default()).unwrap();
    assert_eq!(out.stats.programs_executed, 0);
    assert!(out.violations.is_empty());
}

#[test]
fn corpus_round_trip_capture_matches_program_motif() {
    for workload in [
        Workload::Fileserver,
        Workload::Webserver,
        Workload::ForkTree,
        Workload::Mixed,
        Workload::Fig4,
    ] {
        for seed in [1u64, 2, 3] {
            let trace = generate_trace(workload, 150, seed);
            let out =
                run_end_to_end(&Scenario::capture_all(), &trace, &RunConfig::default()).unwrap();
            let motif = program_motif(&trace, ReductionOptions::default()).unwrap();
            let report = match_motif(&out.document, &motif, MatchMode::Exact).unwrap();
            assert!(
                report.matched,
                "{workload:?} seed {seed}: {:?}",
                report.mismatches.iter().take(5).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn adversarial_reduction_corners_round_trip() {
    let t1 = KernelObjectId::task(1);
    let file = KernelObjectId::file(1, 10);
    let sock = KernelObjectId::socket(30);
    let mut ts = 0u64;
    let mut next = |syscall: Syscall, subject: KernelObjectId, object: KernelObjectId| {
        ts += 1;
        let mut rec = simple(syscall, subject.local_id, object, ts);
        rec.subject = subject;
        rec
    };
    // one socket through its whole lifecycle (bind and listen are both
    // configuration writes from the same task version and merge), the same
    // file re-created twice, read/write ping-pong on one file, repeated
    // execve of one binary, repeated deep opens sharing directory identities
    let mut trace = vec![
        next(Syscall::Socket, t1, sock),
        next(Syscall::Bind, t1, sock),
        next(Syscall::Listen, t1, sock),
        next(Syscall::Accept, t1, sock),
        next(Syscall::Connect, t1, sock),
    ];
    for _ in 0..2 {
        let mut rec = next(Syscall::Open, t1, file);
        rec.path_depth = Some(2);
        rec.flags.creates_new_file = true;
        trace.push(rec);
    }
    for _ in 0..3 {
        trace.push(next(Syscall::Read, t1, file));
        trace.push(next(Syscall::Write, t1, file));
    }
    for _ in 0..2 {
        let mut rec = next(Syscall::Execve, t1, file);
        rec.path_depth = Some(1);
        trace.push(rec);
    }
    for rec in &trace {
        rec.validate().unwrap();
    }
    for (merge, avoidance) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = RunConfig {
            merge,
            version_avoidance: avoidance,
            ..RunConfig::default()
        };
        let out = run_end_to_end(&Scenario::capture_all(), &trace, &cfg).unwrap();
        assert!(out.document.is_dag());
        let motif = program_motif(
            &trace,
            ReductionOptions {
                merge,
                version_avoidance: avoidance,
            },
        )
        .unwrap();
        let report = match_motif(&out.document, &motif, MatchMode::Exact).unwrap();
        assert!(
            report.matched,
            "merge={merge} avoidance={avoidance}: {:?}",
            report.mismatches.iter().take(5).collect::<Vec<_>>()
        );
    }
    // the bind/listen collapse: one write edge with count 2 under reduction
    let out = run_end_to_end(&Scenario::capture_all(), &trace[..3], &RunConfig::default()).unwrap();
    let writes: Vec<_> = out
        .document
        .edges()
        .iter()
        .filter(|e| e.relation == Relation::Write)
        .collect();
    assert_eq!(writes.len(), 1);
    assert_eq!(writes[0].count, 2);
}

#[test]
fn prov_dm_mapping_is_stable() {
    let trace = generate_trace(Workload::Fig4, 0, 0);
    let out = run_end_to_end(&Scenario::capture_all(), &trace, &RunConfig::default()).unwrap();
    let doc = out.document.to_prov_json();
    // tasks serialize as activities, everything else as entities
    let activities = doc["activity"].as_object().unwrap();
    let entities = doc["entity"].as_object().unwrap();
    assert!(activities.keys().all(|k| k.starts_with("task_")));
    assert!(entities.keys().any(|k| k.starts_with("pipe_")));
    assert!(entities.keys().any(|k| k.starts_with("memory_")));
    // version edges map to wasDerivedFrom; reads to used; writes and
    // fork/create to wasGeneratedBy; fork/create also to wasAssociatedWith
    let version_edges = out
        .document
        .edges()
        .iter()
        .filter(|e| e.relation == Relation::Version)
        .count();
    assert_eq!(doc["wasDerivedFrom"].as_array().unwrap().len(), version_edges);
    let reads = out
        .document
        .edges()
        .iter()
        .filter(|e| e.relation == Relation::Read)
        .count();
    assert_eq!(doc["used"].as_array().unwrap().len(), reads);
    let assoc = doc["wasAssociatedWith"].as_array().unwrap().len();
    let fork_create = out
        .document
        .edges()
        .iter()
        .filter(|e| matches!(e.relation, Relation::Fork | Relation::Create))
        .count();
    assert_eq!(assoc, fork_create);
}

#[test]
fn oracle_flags_produce_the_unreduced_document() {
    let trace = generate_trace(Workload::Fileserver, 120, 5);
    let reduced =
        run_end_to_end(&Scenario::capture_all(), &trace, &RunConfig::default()).unwrap();
    let oracle_cfg = RunConfig {
        merge: false,
        version_avoidance: false,
        ..RunConfig::default()
    };
    let oracle = run_end_to_end(&Scenario::capture_all(), &trace, &oracle_cfg).unwrap();
    assert!(oracle.document.edge_count() > reduced.document.edge_count());
    assert!(oracle.document.edges().iter().all(|e| e.count == 1));
    assert!(reduced.document.edges().iter().any(|e| e.count > 1));
}
