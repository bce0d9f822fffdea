//! Versioned JSON document holding a fitted tree.
//!
//! Splits refer to features by name so a model can score files whose
//! columns come in a different order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::FitTrace;
use crate::types::{
    Bounds, CdTree, ColumnKind, FitConfig, FittedHistogram, Schema, SplitCondition, SplitKind,
    TreeNode,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRecord {
    Split {
        feature: String,
        kind: ColumnKind,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        granularity: Option<u32>,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        h: usize,
        counts: Vec<u64>,
        n: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub leaves: usize,
    pub initial_total_bits: f64,
    pub final_total_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub schema: Schema,
    pub bounds: Bounds,
    pub config: FitConfig,
    pub tree: NodeRecord,
    pub trace: TraceSummary,
}

fn encode(node: &TreeNode, schema: &Schema) -> NodeRecord {
    match node {
        TreeNode::Leaf(h) => NodeRecord::Leaf {
            h: h.h,
            counts: h.counts.clone(),
            n: h.n,
        },
        TreeNode::Internal { split, left, right } => {
            let col = &schema.columns[split.feature];
            NodeRecord::Split {
                feature: col.name.clone(),
                kind: col.kind,
                threshold: split.threshold(),
                granularity: split.granularity(),
                left: Box::new(encode(left, schema)),
                right: Box::new(encode(right, schema)),
            }
        }
    }
}

fn decode(rec: &NodeRecord, schema: &Schema, bounds: Bounds) -> Result<TreeNode> {
    Ok(match rec {
        NodeRecord::Leaf { h, counts, n } => {
            let hist = FittedHistogram {
                bounds,
                h: *h,
                counts: counts.clone(),
                n: *n,
            };
            hist.check()?;
            TreeNode::Leaf(hist)
        }
        NodeRecord::Split {
            feature,
            kind,
            threshold,
            granularity,
            left,
            right,
        } => {
            let j = schema
                .index_of(feature)
                .ok_or_else(|| Error::Format(format!("split on unknown feature '{feature}'")))?;
            let kind = match kind {
                ColumnKind::Binary => SplitKind::Binary,
                ColumnKind::Continuous => SplitKind::Continuous {
                    threshold: *threshold,
                    granularity: granularity.ok_or_else(|| {
                        Error::Format("continuous split without granularity".into())
                    })?,
                },
            };
            let split = SplitCondition { feature: j, kind };
            split.check(schema)?;
            TreeNode::Internal {
                split,
                left: Box::new(decode(left, schema, bounds)?),
                right: Box::new(decode(right, schema, bounds)?),
            }
        }
    })
}

impl ModelFile {
    pub fn from_tree(tree: &CdTree, trace: &FitTrace) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            schema: tree.schema.clone(),
            bounds: tree.bounds,
            config: tree.config.clone(),
            tree: encode(&tree.root, &tree.schema),
            trace: TraceSummary {
                iterations: trace.records.len(),
                leaves: tree.leaf_count(),
                initial_total_bits: trace.initial_total_bits,
                final_total_bits: trace.final_total_bits(),
            },
        }
    }

    pub fn to_tree(&self) -> Result<CdTree> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let bounds = Bounds::new(self.bounds.lower, self.bounds.upper)
            .map_err(|e| Error::Format(e.to_string()))?;
        let tree = CdTree {
            schema: self.schema.clone(),
            bounds,
            root: decode(&self.tree, &self.schema, bounds)?,
            config: self.config.clone(),
        };
        tree.check()?;
        Ok(tree)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
