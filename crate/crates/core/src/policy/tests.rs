use super::*;
use crate::dispatch::ReturnCode;
use crate::event_model::{
    HookEvent, HookId, KernelObjectId, NetDirection, NetInfo, OriginInfo, Syscall,
};
use crate::object_store::ObjectStore;
use crate::policy::eval::PATH_SLOT;

pub(crate) const LISTING_POLICY: &str = r#"{
  "subject": "/usr/bin/foo",
  "net": {
    "default": "deny",
    "allow": [ { "direction": "outgoing", "ports": ["http", "https"] } ]
  },
  "fs": {
    "default_write": "deny",
    "default_exec": "deny",
    "allow": [
      { "path": "/tmp/**", "perms": ["read", "write"] },
      { "path": "/usr/lib/**", "perms": ["map"] }
    ]
  }
}"#;

fn listing_policy() -> Policy {
    parse_policy(LISTING_POLICY.as_bytes()).unwrap()
}

fn world_with_foo() -> (ObjectStore, KernelObjectId) {
    let store = ObjectStore::new();
    let foo = KernelObjectId::task(100);
    store.register(foo).unwrap();
    bind_context(&store, &foo, "/usr/bin/foo").unwrap();
    (store, foo)
}

fn net_event(subject: KernelObjectId, hook: HookId, direction: NetDirection, port: u16) -> HookEvent {
    let syscall = match hook {
        HookId::SocketCreate => Syscall::Socket,
        HookId::SocketBind => Syscall::Bind,
        HookId::SocketListen => Syscall::Listen,
        HookId::SocketAccept => Syscall::Accept,
        _ => Syscall::Connect,
    };
    HookEvent {
        hook,
        subject,
        object: Some(KernelObjectId::socket(7)),
        origin: OriginInfo {
            syscall,
            timestamp: 1,
            net: Some(NetInfo { direction, port }),
            creates_new_file: false,
        },
        ordinal: 0,
    }
}

fn write_event(store: &ObjectStore, subject: KernelObjectId, path: &str, id: u64) -> HookEvent {
    let file = KernelObjectId::file(1, id);
    store.register(file).unwrap();
    let h = store.storage_get(&file, true).unwrap().unwrap();
    h.put(PATH_SLOT, path.as_bytes().to_vec()).unwrap();
    HookEvent {
        hook: HookId::FilePermission,
        subject,
        object: Some(file),
        origin: OriginInfo {
            syscall: Syscall::Write,
            timestamp: 2,
            net: None,
            creates_new_file: false,
        },
        ordinal: 0,
    }
}

#[test]
fn listing_policy_parses_to_expected_shape() {
    let policy = listing_policy();
    assert_eq!(policy.subject_path, "/usr/bin/foo");
    let net = policy.net.as_ref().unwrap();
    assert_eq!(net.default, Decision::Deny);
    assert_eq!(net.rules.len(), 1);
    assert_eq!(net.rules[0].direction, NetDirection::Outgoing);
    assert_eq!(net.rules[0].ports, vec![80, 443]);
    let fs = policy.fs.as_ref().unwrap();
    assert_eq!(fs.default_write, Decision::Deny);
    assert_eq!(fs.default_exec, Decision::Deny);
    assert!(fs.exec_specified);
    assert_eq!(fs.rules.len(), 2);
    assert!(fs.rules[0].perms.contains(&Perm::Read));
    assert!(fs.rules[0].perms.contains(&Perm::Write));
    assert!(fs.rules[1].perms.contains(&Perm::Map));
}

#[test]
fn empty_sections_default_to_deny_but_enforce_nothing() {
    let policy = parse_policy(br#"{"subject": "/usr/bin/foo", "net": {}, "fs": {}}"#).unwrap();
    assert_eq!(policy.net.as_ref().unwrap().default, Decision::Deny);
    assert_eq!(policy.fs.as_ref().unwrap().default_write, Decision::Deny);
    assert_eq!(policy.fs.as_ref().unwrap().default_exec, Decision::Deny);
    // no default stated, no rules: no category is in play
    assert_eq!(policy.active_categories(), (false, false, false));
}

#[test]
fn unknown_service_name_is_rejected() {
    let doc = r#"{"subject": "/usr/bin/foo",
        "net": {"allow": [{"direction": "outgoing", "ports": ["htp"]}]}}"#;
    assert_eq!(
        parse_policy(doc.as_bytes()),
        Err(PolicyError::UnknownService("htp".to_string()))
    );
}

#[test]
fn unknown_keys_are_schema_errors() {
    let doc = r#"{"subject": "/usr/bin/foo", "network": {}}"#;
    assert!(matches!(
        parse_policy(doc.as_bytes()),
        Err(PolicyError::Schema { .. })
    ));
}

#[test]
fn fs_only_policy_covers_no_socket_hooks() {
    let doc = r#"{"subject": "/usr/bin/foo",
        "fs": {"default_write": "deny", "allow": [{"path": "/tmp/**", "perms": ["read", "write"]}]}}"#;
    let set = compile(&parse_policy(doc.as_bytes()).unwrap());
    for hook in [
        HookId::SocketCreate,
        HookId::SocketBind,
        HookId::SocketListen,
        HookId::SocketAccept,
        HookId::SocketConnect,
    ] {
        assert!(!set.hooks_covered.contains(&hook));
    }
    assert!(set.hooks_covered.contains(&HookId::FileOpen));
    assert!(set.hooks_covered.contains(&HookId::TaskFork));
    assert!(!set.hooks_covered.contains(&HookId::BprmCheck));
}

#[test]
fn full_policy_covers_fs_net_exec_fork_only() {
    let set = compile(&listing_policy());
    let expected: std::collections::BTreeSet<HookId> = [
        HookId::FileOpen,
        HookId::FilePermission,
        HookId::InodePermission,
        HookId::SocketCreate,
        HookId::SocketConnect,
        HookId::SocketBind,
        HookId::SocketListen,
        HookId::SocketAccept,
        HookId::BprmCheck,
        HookId::TaskFork,
    ]
    .into_iter()
    .collect();
    assert_eq!(set.hooks_covered, expected);
}

#[test]
fn empty_policy_emits_deny_all_only_where_a_default_applies() {
    // defaults spelled out: deny-all programs for write, exec and net
    let doc = br#"{"subject": "/usr/bin/foo",
        "net": {"default": "deny"},
        "fs": {"default_write": "deny", "default_exec": "deny"}}"#;
    let set = compile(&parse_policy(doc).unwrap());
    assert!(set.hooks_covered.contains(&HookId::FilePermission));
    assert!(set.hooks_covered.contains(&HookId::SocketConnect));
    assert!(set.hooks_covered.contains(&HookId::BprmCheck));
    // empty sections state nothing, so nothing but fork is emitted
    let empty =
        compile(&parse_policy(br#"{"subject": "/usr/bin/foo", "net": {}, "fs": {}}"#).unwrap());
    assert_eq!(
        empty.hooks_covered.iter().copied().collect::<Vec<_>>(),
        vec![HookId::TaskFork]
    );
    // and likewise for a policy with no sections at all
    let bare = compile(&parse_policy(br#"{"subject": "/usr/bin/foo"}"#).unwrap());
    assert_eq!(
        bare.hooks_covered.into_iter().collect::<Vec<_>>(),
        vec![HookId::TaskFork]
    );
}

#[test]
fn outgoing_https_is_allowed() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let ev = net_event(foo, HookId::SocketConnect, NetDirection::Outgoing, 443);
    let (rc, violation) = evaluate(&ev, &set, &store);
    assert_eq!(rc, ReturnCode::Allow);
    assert!(violation.is_none());
}

#[test]
fn outgoing_ssh_is_denied_with_violation() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let ev = net_event(foo, HookId::SocketConnect, NetDirection::Outgoing, 22);
    let (rc, violation) = evaluate(&ev, &set, &store);
    assert_eq!(rc, ReturnCode::deny(13));
    let v = violation.unwrap();
    assert_eq!(v.rule, "net:default-deny");
    assert_eq!(v.code, 13);
}

#[test]
fn tmp_write_allowed_etc_write_denied() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let ok = write_event(&store, foo, "/tmp/x", 11);
    assert_eq!(evaluate(&ok, &set, &store).0, ReturnCode::Allow);
    let bad = write_event(&store, foo, "/etc/passwd", 12);
    let (rc, violation) = evaluate(&bad, &set, &store);
    assert_eq!(rc, ReturnCode::deny(13));
    assert!(violation.unwrap().rule.contains("default-deny"));
}

#[test]
fn reads_default_to_allow() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let mut ev = write_event(&store, foo, "/etc/passwd", 13);
    ev.origin.syscall = Syscall::Read;
    assert_eq!(evaluate(&ev, &set, &store).0, ReturnCode::Allow);
}

#[test]
fn fork_inheritance_propagates_the_policy() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let child = KernelObjectId::task(101);
    let grandchild = KernelObjectId::task(102);
    store.register(child).unwrap();
    store.register(grandchild).unwrap();
    inherit_on_fork(&store, &foo, &child).unwrap();
    inherit_on_fork(&store, &child, &grandchild).unwrap();
    // child connects port 80: allowed by the rule
    let ev = net_event(child, HookId::SocketConnect, NetDirection::Outgoing, 80);
    assert_eq!(evaluate(&ev, &set, &store).0, ReturnCode::Allow);
    // grandchild connects port 22: denied transitively
    let ev = net_event(grandchild, HookId::SocketConnect, NetDirection::Outgoing, 22);
    assert_eq!(evaluate(&ev, &set, &store).0, ReturnCode::deny(13));
}

#[test]
fn tasks_without_context_are_not_evaluated() {
    let store = ObjectStore::new();
    let other = KernelObjectId::task(200);
    store.register(other).unwrap();
    let set = compile(&listing_policy());
    let ev = net_event(other, HookId::SocketConnect, NetDirection::Outgoing, 22);
    let (rc, violation) = evaluate(&ev, &set, &store);
    assert_eq!(rc, ReturnCode::Allow);
    assert!(violation.is_none());
}

#[test]
fn socket_create_is_implied_by_allow_rules() {
    let (store, foo) = world_with_foo();
    let set = compile(&listing_policy());
    let mut ev = net_event(foo, HookId::SocketCreate, NetDirection::Outgoing, 0);
    ev.origin.net = None;
    assert_eq!(evaluate(&ev, &set, &store).0, ReturnCode::Allow);
    // but an explicit default-deny with no rules refuses creation
    let strict = compile(
        &parse_policy(br#"{"subject": "/usr/bin/foo", "net": {"default": "deny"}}"#).unwrap(),
    );
    assert_eq!(evaluate(&ev, &strict, &store).0, ReturnCode::deny(13));
}

#[test]
fn most_specific_rule_wins_for_attribution() {
    let doc = r#"{"subject": "/usr/bin/foo",
        "fs": {"default_write": "deny", "allow": [
            {"path": "/tmp/**", "perms": ["write"]},
            {"path": "/tmp/secret.txt", "perms": ["write"]}
        ]}}"#;
    let set = compile(&parse_policy(doc.as_bytes()).unwrap());
    let (allow, label) = set.table.decide(&AccessRequest::Fs {
        path: Some("/tmp/secret.txt".to_string()),
        perm: Perm::Read,
    });
    assert!(allow);
    assert!(label.contains("default-allow"), "reads are unconstrained: {label}");
    let (allow, label) = set.table.decide(&AccessRequest::Fs {
        path: Some("/tmp/secret.txt".to_string()),
        perm: Perm::Write,
    });
    assert!(allow);
    assert_eq!(label, "fs:allow[1]");
}

#[test]
fn interpreter_agrees_on_the_pinned_decisions() {
    let policy = listing_policy();
    let interp = RuleInterpreter::new(policy.clone());
    let set = compile(&policy);
    let cases = [
        AccessRequest::Net {
            op: NetOp::Connect,
            direction: Some(NetDirection::Outgoing),
            port: Some(443),
        },
        AccessRequest::Net {
            op: NetOp::Connect,
            direction: Some(NetDirection::Outgoing),
            port: Some(22),
        },
        AccessRequest::Net {
            op: NetOp::Connect,
            direction: Some(NetDirection::Incoming),
            port: Some(443),
        },
        AccessRequest::Fs {
            path: Some("/tmp/x".to_string()),
            perm: Perm::Write,
        },
        AccessRequest::Fs {
            path: Some("/etc/passwd".to_string()),
            perm: Perm::Write,
        },
        AccessRequest::Fs {
            path: Some("/usr/lib/libc.so".to_string()),
            perm: Perm::Map,
        },
        AccessRequest::Exec {
            path: Some("/usr/bin/sh".to_string()),
        },
    ];
    for req in cases {
        assert_eq!(
            interp.decide(&req),
            set.table.decide(&req).0,
            "routes disagree on {req:?}"
        );
    }
}
