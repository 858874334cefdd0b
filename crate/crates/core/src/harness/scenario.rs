use serde::Deserialize;

use crate::event_model::{HookId, KernelObjectId, ObjectKind};
use crate::provenance::CaptureFilter;

use super::HarnessError;

/// Declarative world description: the cgroup tree, task placements,
/// object metadata, attachments, and opacity marks.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub cgroups: Vec<CgroupDecl>,
    #[serde(default)]
    pub tasks: Vec<TaskDecl>,
    #[serde(default)]
    pub objects: Vec<ObjectDecl>,
    #[serde(default)]
    pub opaque: Vec<KernelObjectId>,
    #[serde(default)]
    pub capture: Option<CaptureDecl>,
    #[serde(default)]
    pub policies: Vec<PolicyAttach>,
    #[serde(default)]
    pub attachments: Vec<AttachmentDecl>,
    #[serde(default)]
    pub filter: Option<CaptureFilter>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgroupDecl {
    pub id: String,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDecl {
    pub id: KernelObjectId,
    #[serde(default = "default_cgroup")]
    pub cgroup: String,
    #[serde(default)]
    pub exe: Option<String>,
    #[serde(default)]
    pub security_context: Option<String>,
}

fn default_cgroup() -> String {
    "root".to_string()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDecl {
    pub id: KernelObjectId,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub security_context: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureDecl {
    #[serde(default = "default_cgroup")]
    pub cgroup: String,
    #[serde(default)]
    pub hooks: HooksSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum HooksSpec {
    Keyword(String),
    List(Vec<HookId>),
}

impl Default for HooksSpec {
    fn default() -> Self {
        HooksSpec::Keyword("all".to_string())
    }
}

impl HooksSpec {
    pub fn resolve(&self) -> Result<Vec<HookId>, HarnessError> {
        match self {
            HooksSpec::Keyword(k) if k == "all" => Ok(HookId::ALL.to_vec()),
            HooksSpec::Keyword(k) => Err(HarnessError::Scenario(format!(
                "unknown hooks keyword {k:?} (use \"all\" or a list of hook names)"
            ))),
            HooksSpec::List(hooks) => Ok(hooks.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyAttach {
    #[serde(default = "default_cgroup")]
    pub cgroup: String,
    /// Inline policy document (the CLI inlines `policy_file` references
    /// before handing the scenario to the pipeline).
    pub policy: serde_json::Value,
}

/// Scripted plain programs, for scenarios exercising dispatch directly.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachmentDecl {
    pub cgroup: String,
    pub hook: HookId,
    pub program: ProgramSpec,
    #[serde(default = "default_true")]
    pub allow_multi: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramSpec {
    Noop,
    Deny(i32),
}

impl Scenario {
    pub fn from_json(bytes: &[u8]) -> Result<Self, HarnessError> {
        let scenario: Scenario = serde_json::from_slice(bytes)
            .map_err(|e| HarnessError::Scenario(format!("parse: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Capture everything at the root cgroup; the default test scenario.
    pub fn capture_all() -> Self {
        Scenario {
            capture: Some(CaptureDecl {
                cgroup: default_cgroup(),
                hooks: HooksSpec::default(),
            }),
            ..Scenario::default()
        }
    }

    /// Checks that every reference resolves: parents exist, placements and
    /// attachments name declared cgroups, task ids are tasks.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut names: Vec<&str> = vec!["root"];
        for cg in &self.cgroups {
            if cg.id == "root" {
                if cg.parent.is_some() {
                    return Err(HarnessError::Scenario(
                        "the root cgroup cannot have a parent".to_string(),
                    ));
                }
                continue;
            }
            if names.contains(&cg.id.as_str()) {
                return Err(HarnessError::Scenario(format!("duplicate cgroup {}", cg.id)));
            }
            let parent = cg.parent.as_deref().unwrap_or("root");
            if !names.contains(&parent) {
                return Err(HarnessError::Scenario(format!(
                    "cgroup {} references unknown parent {parent} (declare parents first)",
                    cg.id
                )));
            }
            names.push(&cg.id);
        }
        for t in &self.tasks {
            if t.id.kind != ObjectKind::Task {
                return Err(HarnessError::Scenario(format!(
                    "task placement for non-task object {}",
                    t.id
                )));
            }
            if !names.contains(&t.cgroup.as_str()) {
                return Err(HarnessError::Scenario(format!(
                    "task {} placed in unknown cgroup {}",
                    t.id, t.cgroup
                )));
            }
        }
        if let Some(c) = &self.capture {
            if !names.contains(&c.cgroup.as_str()) {
                return Err(HarnessError::Scenario(format!(
                    "capture attached to unknown cgroup {}",
                    c.cgroup
                )));
            }
            c.hooks.resolve()?;
        }
        for p in &self.policies {
            if !names.contains(&p.cgroup.as_str()) {
                return Err(HarnessError::Scenario(format!(
                    "policy attached to unknown cgroup {}",
                    p.cgroup
                )));
            }
        }
        for a in &self.attachments {
            if !names.contains(&a.cgroup.as_str()) {
                return Err(HarnessError::Scenario(format!(
                    "attachment references unknown cgroup {}",
                    a.cgroup
                )));
            }
        }
        Ok(())
    }
}
