use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::event_model::NetDirection;

use super::glob::GlobPattern;
use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perm {
    Read,
    Write,
    Exec,
    Map,
}

/// The static service-name table. Unknown names are errors, not numbers.
pub fn resolve_service(name: &str) -> Result<u16, PolicyError> {
    match name {
        "http" => Ok(80),
        "https" => Ok(443),
        other => Err(PolicyError::UnknownService(other.to_string())),
    }
}

// --- raw document shape -------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    subject: String,
    #[serde(default)]
    net: Option<NetSectionDoc>,
    #[serde(default)]
    fs: Option<FsSectionDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetSectionDoc {
    #[serde(default)]
    default: Option<Decision>,
    #[serde(default)]
    allow: Vec<NetRuleDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetRuleDoc {
    direction: NetDirection,
    ports: Vec<PortSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PortSpec {
    Number(u16),
    Service(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsSectionDoc {
    #[serde(default)]
    default_write: Option<Decision>,
    #[serde(default)]
    default_exec: Option<Decision>,
    #[serde(default)]
    allow: Vec<FsRuleDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsRuleDoc {
    path: String,
    perms: Vec<Perm>,
}

// --- resolved policy ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetRule {
    pub direction: NetDirection,
    pub ports: Vec<u16>,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSection {
    /// Deny when unspecified in the document.
    pub default: Decision,
    /// Whether the document stated the default explicitly. The network
    /// category is enforced only when the default is stated or allow rules
    /// exist; an empty `net` section constrains nothing.
    pub default_specified: bool,
    pub rules: Vec<NetRule>,
}

impl NetSection {
    pub fn active(&self) -> bool {
        self.default_specified || !self.rules.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsRule {
    pub pattern: GlobPattern,
    pub perms: BTreeSet<Perm>,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsSection {
    pub default_write: Decision,
    pub default_exec: Decision,
    /// Whether the document spelled out read/write enforcement (a
    /// default_write key, or a rule granting read/write). Only then does
    /// compilation emit file-hook programs.
    pub write_specified: bool,
    /// Whether the document spelled out exec enforcement (a default_exec
    /// key, or a rule granting exec/map). Only then does compilation emit an
    /// exec program.
    pub exec_specified: bool,
    pub rules: Vec<FsRule>,
}

/// A parsed policy. Absent sections stay absent: they compile to no
/// programs and evaluation does not constrain them. Within a present
/// section, unspecified defaults are deny.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub subject_path: String,
    pub net: Option<NetSection>,
    pub fs: Option<FsSection>,
}

impl Policy {
    /// The three rule categories the document states, in compile order.
    pub fn active_categories(&self) -> (bool, bool, bool) {
        let fs = self.fs.as_ref().map(|f| f.write_specified).unwrap_or(false);
        let net = self.net.as_ref().map(|n| n.active()).unwrap_or(false);
        let exec = self.fs.as_ref().map(|f| f.exec_specified).unwrap_or(false);
        (fs, net, exec)
    }
}

/// Parses and validates a policy document.
pub fn parse_policy(bytes: &[u8]) -> Result<Policy, PolicyError> {
    let doc: PolicyDoc = serde_json::from_slice(bytes).map_err(|e| PolicyError::Schema {
        path: "<document>".to_string(),
        msg: e.to_string(),
    })?;
    if doc.subject.is_empty() || !doc.subject.starts_with('/') {
        return Err(PolicyError::Schema {
            path: "subject".to_string(),
            msg: "subject must be an absolute executable path".to_string(),
        });
    }
    let net = match doc.net {
        None => None,
        Some(sec) => {
            let mut rules = Vec::new();
            for (i, rule) in sec.allow.into_iter().enumerate() {
                let mut ports = Vec::new();
                for (j, spec) in rule.ports.into_iter().enumerate() {
                    let port = match spec {
                        PortSpec::Number(n) => n,
                        PortSpec::Service(name) => resolve_service(&name).map_err(|e| {
                            match e {
                                PolicyError::UnknownService(_) => e,
                                other => other,
                            }
                        })?,
                    };
                    if port == 0 {
                        return Err(PolicyError::Schema {
                            path: format!("net.allow[{i}].ports[{j}]"),
                            msg: "port 0 is not a valid service port".to_string(),
                        });
                    }
                    ports.push(port);
                }
                rules.push(NetRule {
                    direction: rule.direction,
                    ports,
                    index: i,
                });
            }
            Some(NetSection {
                default: sec.default.unwrap_or(Decision::Deny),
                default_specified: sec.default.is_some(),
                rules,
            })
        }
    };
    let fs = match doc.fs {
        None => None,
        Some(sec) => {
            let mut rules = Vec::new();
            let mut exec_in_rules = false;
            let mut write_in_rules = false;
            for (i, rule) in sec.allow.into_iter().enumerate() {
                if rule.perms.is_empty() {
                    return Err(PolicyError::Schema {
                        path: format!("fs.allow[{i}].perms"),
                        msg: "a rule must grant at least one permission".to_string(),
                    });
                }
                let pattern = GlobPattern::parse(&rule.path).map_err(|e| match e {
                    PolicyError::Schema { msg, .. } => PolicyError::Schema {
                        path: format!("fs.allow[{i}].path"),
                        msg,
                    },
                    other => other,
                })?;
                let perms: BTreeSet<Perm> = rule.perms.into_iter().collect();
                exec_in_rules |= perms.contains(&Perm::Exec) || perms.contains(&Perm::Map);
                write_in_rules |= perms.contains(&Perm::Read) || perms.contains(&Perm::Write);
                rules.push(FsRule {
                    pattern,
                    perms,
                    index: i,
                });
            }
            Some(FsSection {
                default_write: sec.default_write.unwrap_or(Decision::Deny),
                default_exec: sec.default_exec.unwrap_or(Decision::Deny),
                write_specified: sec.default_write.is_some() || write_in_rules,
                exec_specified: sec.default_exec.is_some() || exec_in_rules,
                rules,
            })
        }
    };
    Ok(Policy {
        subject_path: doc.subject,
        net,
        fs,
    })
}
