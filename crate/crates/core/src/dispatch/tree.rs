use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("duplicate cgroup id {0}")]
    DuplicateId(String),
    #[error("unknown parent {parent} for cgroup {child}")]
    UnknownParent { child: String, parent: String },
    #[error("the root cgroup cannot be redeclared with a parent")]
    RootWithParent,
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    parent: Option<usize>,
}

/// The single-rooted cgroup hierarchy. All tasks belong to the root unless
/// placed elsewhere; children are added under an existing parent, so the
/// parent graph is a tree by construction.
#[derive(Debug, Clone)]
pub struct CgroupTree {
    nodes: Vec<Node>,
}

impl Default for CgroupTree {
    fn default() -> Self {
        Self::new()
    }
}

impl CgroupTree {
    pub const ROOT: &'static str = "root";

    pub fn new() -> Self {
        Self {
            nodes: vec![Node {
                name: Self::ROOT.to_string(),
                parent: None,
            }],
        }
    }

    /// Adds a cgroup under `parent`; returns its index.
    pub fn add(&mut self, name: &str, parent: &str) -> Result<usize, TreeError> {
        if name == Self::ROOT {
            return Err(TreeError::RootWithParent);
        }
        if self.index_of(name).is_some() {
            return Err(TreeError::DuplicateId(name.to_string()));
        }
        let parent_idx = self.index_of(parent).ok_or_else(|| TreeError::UnknownParent {
            child: name.to_string(),
            parent: parent.to_string(),
        })?;
        self.nodes.push(Node {
            name: name.to_string(),
            parent: Some(parent_idx),
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn name_of(&self, idx: usize) -> &str {
        &self.nodes[idx].name
    }

    pub fn parent_of(&self, idx: usize) -> Option<usize> {
        self.nodes[idx].parent
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // there is always a root
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    /// The node indices from `start` up to and including the root.
    pub fn path_to_root(&self, start: usize) -> Vec<usize> {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    /// True when `node` is `ancestor` or one of its descendants.
    pub fn is_in_subtree(&self, node: usize, ancestor: usize) -> bool {
        self.path_to_root(node).contains(&ancestor)
    }
}
