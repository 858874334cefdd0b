use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::dispatch::{AuditProgram, ProgramBody, ReturnCode};
use crate::event_model::{HookId, NetDirection};

use super::eval::{evaluate_with_table, inherit_on_fork, push_violation, AccessRequest, NetOp};
use super::model::{Decision, FsSection, NetSection, Perm, Policy};

/// The shared lookup structure enforcement programs consult at event time.
/// Built once at compile time from the policy.
#[derive(Debug, Clone)]
pub struct ConstraintTable {
    pub subject_path: String,
    pub net: Option<NetSection>,
    pub fs: Option<FsSection>,
}

impl ConstraintTable {
    /// Category activations. A category the document does not state (no
    /// default, no rules) is unconstrained: no program enforces it and
    /// evaluation allows it.
    pub fn net_active(&self) -> bool {
        self.net.as_ref().map(|n| n.active()).unwrap_or(false)
    }

    pub fn fs_active(&self) -> bool {
        self.fs.as_ref().map(|f| f.write_specified).unwrap_or(false)
    }

    pub fn exec_active(&self) -> bool {
        self.fs.as_ref().map(|f| f.exec_specified).unwrap_or(false)
    }

    /// Decides a request: (allow, matching rule label).
    pub fn decide(&self, req: &AccessRequest) -> (bool, String) {
        match req {
            AccessRequest::Net {
                op,
                direction,
                port,
            } => {
                let Some(net) = self.net.as_ref().filter(|n| n.active()) else {
                    return (true, "net:unconstrained".into());
                };
                if *op == NetOp::Create {
                    // creating a socket is permitted whenever some rule could
                    // later allow traffic; enforcement lands on the
                    // connection-shaping hooks
                    return if !net.rules.is_empty() || net.default == Decision::Allow {
                        (true, "net:create-implied".into())
                    } else {
                        (false, "net:default-deny".into())
                    };
                }
                if let (Some(dir), Some(port)) = (direction, port) {
                    for rule in &net.rules {
                        if rule.direction == *dir && rule.ports.contains(port) {
                            return (true, format!("net:allow[{}]", rule.index));
                        }
                    }
                }
                match net.default {
                    Decision::Allow => (true, "net:default-allow".into()),
                    Decision::Deny => (false, "net:default-deny".into()),
                }
            }
            AccessRequest::Fs { path, perm } => self.decide_fs(path.as_deref(), *perm),
            AccessRequest::Exec { path } => self.decide_fs(path.as_deref(), Perm::Exec),
        }
    }

    fn decide_fs(&self, path: Option<&str>, perm: Perm) -> (bool, String) {
        let Some(fs) = &self.fs else {
            return (true, "fs:unconstrained".into());
        };
        let exec_like = matches!(perm, Perm::Exec | Perm::Map);
        if exec_like && !fs.exec_specified {
            return (true, "exec:unconstrained".into());
        }
        if !exec_like && !fs.write_specified {
            return (true, "fs:unconstrained".into());
        }
        if let Some(path) = path {
            // most-specific matching allow rule wins; ties break by order
            let mut best: Option<((usize, usize), usize)> = None;
            for rule in &fs.rules {
                if rule.perms.contains(&perm) && rule.pattern.matches(path) {
                    let spec = rule.pattern.specificity();
                    let better = match best {
                        None => true,
                        Some((bspec, _)) => spec > bspec,
                    };
                    if better {
                        best = Some((spec, rule.index));
                    }
                }
            }
            if let Some((_, index)) = best {
                return (true, format!("fs:allow[{index}]"));
            }
        }
        let default = match perm {
            Perm::Read => Decision::Allow,
            Perm::Write => fs.default_write,
            Perm::Exec | Perm::Map => fs.default_exec,
        };
        match default {
            Decision::Allow => (true, format!("fs:default-allow:{perm:?}")),
            Decision::Deny => (false, format!("fs:default-deny:{perm:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileProvenance {
    /// Fingerprint of the source policy.
    pub source_hash: String,
    pub options: Vec<String>,
}

/// The minimal set of enforcement programs for a policy, plus the shared
/// constraint table they consult.
#[derive(Clone)]
pub struct CompiledProgramSet {
    pub programs: Vec<AuditProgram>,
    pub hooks_covered: BTreeSet<HookId>,
    pub provenance: CompileProvenance,
    pub table: Arc<ConstraintTable>,
}

const FS_HOOKS: [HookId; 3] = [
    HookId::FileOpen,
    HookId::FilePermission,
    HookId::InodePermission,
];
const NET_HOOKS: [HookId; 5] = [
    HookId::SocketCreate,
    HookId::SocketConnect,
    HookId::SocketBind,
    HookId::SocketListen,
    HookId::SocketAccept,
];
const EXEC_HOOKS: [HookId; 1] = [HookId::BprmCheck];

fn enforcement_program(hook: HookId, table: &Arc<ConstraintTable>) -> AuditProgram {
    let table = Arc::clone(table);
    let body = ProgramBody::Func(Arc::new(move |ev, ctx| {
        let (rc, violation) = evaluate_with_table(ev, &table, ctx.store);
        if let (Some(v), Some(sink)) = (violation, ctx.violations) {
            push_violation(sink, v);
        }
        rc
    }));
    AuditProgram::new(format!("policy:{hook}"), hook, body)
}

fn fork_program(table: &Arc<ConstraintTable>) -> AuditProgram {
    let table = Arc::clone(table);
    let body = ProgramBody::Func(Arc::new(move |ev, ctx| {
        let _ = &table;
        if let Some(child) = ev.object {
            if let Err(err) = inherit_on_fork(ctx.store, &ev.subject, &child) {
                log::warn!("fork inheritance failed: {err}");
            }
        }
        ReturnCode::Allow
    }));
    AuditProgram::new("policy:task_fork", HookId::TaskFork, body)
}

/// Compiles a policy into enforcement programs for exactly the hooks its
/// rule categories require. Constraints live in the shared table consulted
/// at event time; a policy with no network rules yields no socket-hook
/// programs. The fork-inheritance program is always emitted.
pub fn compile(policy: &Policy) -> CompiledProgramSet {
    let source_hash = {
        let mut hasher = Sha256::new();
        hasher.update(format!("{policy:?}").as_bytes());
        let digest = hasher.finalize();
        let mut s = String::with_capacity(64);
        for b in digest {
            let _ = write!(s, "{b:02x}");
        }
        s
    };
    let table = Arc::new(ConstraintTable {
        subject_path: policy.subject_path.clone(),
        net: policy.net.clone(),
        fs: policy.fs.clone(),
    });
    let mut programs = Vec::new();
    let mut hooks_covered = BTreeSet::new();
    if table.fs_active() {
        for hook in FS_HOOKS {
            programs.push(enforcement_program(hook, &table));
            hooks_covered.insert(hook);
        }
    }
    if table.net_active() {
        for hook in NET_HOOKS {
            programs.push(enforcement_program(hook, &table));
            hooks_covered.insert(hook);
        }
    }
    if table.exec_active() {
        for hook in EXEC_HOOKS {
            programs.push(enforcement_program(hook, &table));
            hooks_covered.insert(hook);
        }
    }
    programs.push(fork_program(&table));
    hooks_covered.insert(HookId::TaskFork);
    let mut options = Vec::new();
    for (flag, active) in [
        ("fs", table.fs_active()),
        ("net", table.net_active()),
        ("exec", table.exec_active()),
    ] {
        if active {
            options.push(flag.to_string());
        }
    }
    CompiledProgramSet {
        programs,
        hooks_covered,
        provenance: CompileProvenance {
            source_hash,
            options,
        },
        table,
    }
}

/// Human-readable hook-to-rule mapping for `--explain`.
pub fn explain(set: &CompiledProgramSet) -> String {
    let mut out = String::new();
    let t = &set.table;
    let _ = writeln!(out, "subject: {}", t.subject_path);
    let _ = writeln!(out, "source_hash: {}", set.provenance.source_hash);
    let _ = writeln!(out, "active categories: {}", set.provenance.options.join(", "));
    for hook in &set.hooks_covered {
        let reason = match *hook {
            h if FS_HOOKS.contains(&h) => "fs rules (read/write path constraints)",
            h if NET_HOOKS.contains(&h) => "net rules (direction/port constraints)",
            h if EXEC_HOOKS.contains(&h) => "exec rules (binary path constraints)",
            _ => "fork inheritance (security context propagation)",
        };
        let _ = writeln!(out, "{hook} <- {reason}");
    }
    if let Some(net) = &t.net {
        let _ = writeln!(out, "net default: {:?}", net.default);
        for r in &net.rules {
            let dir = match r.direction {
                NetDirection::Incoming => "incoming",
                NetDirection::Outgoing => "outgoing",
            };
            let _ = writeln!(out, "  net.allow[{}]: {} ports {:?}", r.index, dir, r.ports);
        }
    }
    if let Some(fs) = &t.fs {
        let _ = writeln!(
            out,
            "fs default_write: {:?} ({}), default_exec: {:?} ({})",
            fs.default_write,
            if fs.write_specified { "enforced" } else { "unconstrained" },
            fs.default_exec,
            if fs.exec_specified { "enforced" } else { "unconstrained" },
        );
        for r in &fs.rules {
            let _ = writeln!(
                out,
                "  fs.allow[{}]: {} perms {:?}",
                r.index,
                r.pattern.as_str(),
                r.perms
            );
        }
    }
    out
}
