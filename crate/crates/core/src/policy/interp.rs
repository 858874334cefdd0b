//! The monolithic runtime-rule interpreter: scans the raw rule list for
//! every event instead of consulting precompiled per-hook constraints. It is
//! the decision-soundness oracle for the compiled route and the baseline the
//! policy benchmark compares against.

use std::sync::Arc;

use crate::dispatch::{AuditProgram, ProgramBody, ReturnCode};
use crate::event_model::HookId;

use super::eval::{
    push_violation, read_context, request_of, AccessRequest, NetOp, ViolationRecord, DENY_CODE,
};
use super::model::{Decision, Perm, Policy};

/// Scans the raw policy rules per request. Independent of the compiled
/// table's decision code on purpose.
#[derive(Debug, Clone)]
pub struct RuleInterpreter {
    policy: Policy,
}

impl RuleInterpreter {
    pub fn new(policy: Policy) -> Self {
        Self { policy }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn decide(&self, req: &AccessRequest) -> bool {
        match req {
            AccessRequest::Net {
                op,
                direction,
                port,
            } => {
                let Some(net) = self.policy.net.as_ref().filter(|n| n.active()) else {
                    return true;
                };
                if *op == NetOp::Create {
                    return !net.rules.is_empty() || net.default == Decision::Allow;
                }
                for rule in &net.rules {
                    let dir_ok = *direction == Some(rule.direction);
                    let port_ok = port.map(|p| rule.ports.contains(&p)).unwrap_or(false);
                    if dir_ok && port_ok {
                        return true;
                    }
                }
                net.default == Decision::Allow
            }
            AccessRequest::Fs { path, perm } => self.decide_fs(path.as_deref(), *perm),
            AccessRequest::Exec { path } => self.decide_fs(path.as_deref(), Perm::Exec),
        }
    }

    fn decide_fs(&self, path: Option<&str>, perm: Perm) -> bool {
        let Some(fs) = &self.policy.fs else {
            return true;
        };
        let exec_like = matches!(perm, Perm::Exec | Perm::Map);
        if exec_like && !fs.exec_specified {
            return true;
        }
        if !exec_like && !fs.write_specified {
            return true;
        }
        if let Some(path) = path {
            for rule in &fs.rules {
                if rule.perms.contains(&perm) && rule.pattern.matches(path) {
                    return true;
                }
            }
        }
        let default = match perm {
            Perm::Read => Decision::Allow,
            Perm::Write => fs.default_write,
            Perm::Exec | Perm::Map => fs.default_exec,
        };
        default == Decision::Allow
    }
}

/// One interpreter program per modeled hook: the shape a runtime-evaluated
/// audit mechanism takes, with no compile-time minimization.
pub fn monolithic_program_set(policy: &Policy) -> Vec<AuditProgram> {
    let interp = Arc::new(RuleInterpreter::new(policy.clone()));
    HookId::ALL
        .iter()
        .map(|&hook| {
            let interp = Arc::clone(&interp);
            let body = ProgramBody::Func(Arc::new(move |ev, ctx| {
                let ctx_label = read_context(ctx.store, &ev.subject).unwrap_or(None);
                if ctx_label.as_deref() != Some(interp.policy().subject_path.as_str()) {
                    return ReturnCode::Allow;
                }
                let Some(request) = request_of(ev, ctx.store) else {
                    return ReturnCode::Allow;
                };
                if interp.decide(&request) {
                    ReturnCode::Allow
                } else {
                    if let Some(sink) = ctx.violations {
                        push_violation(
                            sink,
                            ViolationRecord {
                                timestamp: ev.origin.timestamp,
                                hook: ev.hook,
                                subject: ev.subject,
                                object: ev.object,
                                request,
                                rule: "interpreter".to_string(),
                                code: DENY_CODE,
                            },
                        );
                    }
                    ReturnCode::deny(DENY_CODE)
                }
            }));
            AuditProgram::new(format!("interp:{hook}"), hook, body)
        })
        .collect()
}
