//! Decision-tree shields on disk, as a flat node array.

use std::path::Path;

use gridshield::caap::{CompactionStep, DecisionTree, Node};
use gridshield::{ActionSet, Axis};
use serde::{Deserialize, Serialize};

use crate::{check_header, digest, read, write, FileError};

pub const FORMAT: &str = "gridshield-tree";
pub const VERSION: u32 = 1;

/// Where a tree came from and how compaction went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeProvenance {
    /// SHA-256 of the shield or tree file that was compacted.
    pub source_digest: String,
    pub seed: u64,
    pub max_iterations: u32,
    pub min_relative_gain: f64,
    pub iterations: Vec<CompactionStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeFile {
    pub tree: DecisionTree,
    pub provenance: Option<TreeProvenance>,
}

/// A node as stored: inner nodes go left iff `s[dim] < threshold`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawNode {
    Inner {
        dim: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u64,
    },
}

#[derive(Serialize, Deserialize)]
struct Raw {
    format: String,
    version: u32,
    domain: Vec<Axis>,
    actions: Vec<String>,
    root: u32,
    nodes: Vec<RawNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<TreeProvenance>,
}

impl TreeFile {
    pub fn new(tree: DecisionTree, provenance: Option<TreeProvenance>) -> Self {
        Self { tree, provenance }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let nodes = self
            .tree
            .nodes()
            .iter()
            .map(|n| match *n {
                Node::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                } => RawNode::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                },
                Node::Leaf(set) => RawNode::Leaf { leaf: set.0 },
            })
            .collect();
        let raw = Raw {
            format: FORMAT.into(),
            version: VERSION,
            domain: self.tree.domain().to_vec(),
            actions: self.tree.actions().to_vec(),
            root: self.tree.root(),
            nodes,
            provenance: self.provenance.clone(),
        };
        let mut bytes = serde_json::to_vec_pretty(&raw).expect("tree files serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FileError> {
        let raw: Raw = serde_json::from_slice(bytes)?;
        check_header(&raw.format, raw.version, FORMAT, VERSION)?;
        let nodes = raw
            .nodes
            .into_iter()
            .map(|n| match n {
                RawNode::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                } => Node::Inner {
                    dim,
                    threshold,
                    left,
                    right,
                },
                RawNode::Leaf { leaf } => Node::Leaf(ActionSet(leaf)),
            })
            .collect();
        let tree = DecisionTree::new(raw.domain, raw.actions, nodes, raw.root)
            .map_err(|e| FileError::Invalid(e.to_string()))?;
        Ok(Self {
            tree,
            provenance: raw.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String, FileError> {
        let bytes = self.to_json();
        write(path, &bytes)?;
        Ok(digest(&bytes))
    }

    pub fn load(path: &Path) -> Result<(Self, String), FileError> {
        let bytes = read(path)?;
        Ok((Self::from_json(&bytes)?, digest(&bytes)))
    }
}
