//! Routing feature vectors to leaves, conditional densities and leaf rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::check_conforms;
use crate::types::{
    CdTree, ColumnKind, DataFrame, FittedHistogram, LeafId, SplitCondition, TreeNode,
};

fn check_x(tree: &CdTree, x: &[f64]) -> Result<()> {
    let m = tree.schema.m();
    if x.len() != m {
        return Err(Error::Schema(format!(
            "feature vector has {} values, expected {m}",
            x.len()
        )));
    }
    for (v, col) in x.iter().zip(&tree.schema.columns) {
        if !v.is_finite() {
            return Err(Error::Schema(format!(
                "feature '{}' is not finite",
                col.name
            )));
        }
        if col.kind == ColumnKind::Binary && *v != 0.0 && *v != 1.0 {
            return Err(Error::Schema(format!(
                "binary feature '{}' holds {v}",
                col.name
            )));
        }
    }
    Ok(())
}

pub(crate) fn route_unchecked(tree: &CdTree, x: &[f64]) -> LeafId {
    fn count_leaves(node: &TreeNode) -> usize {
        match node {
            TreeNode::Leaf(_) => 1,
            TreeNode::Internal { left, right, .. } => count_leaves(left) + count_leaves(right),
        }
    }
    let mut node = &tree.root;
    let mut id = 0;
    loop {
        match node {
            TreeNode::Leaf(_) => return id,
            TreeNode::Internal { split, left, right } => {
                if split.goes_left(x) {
                    node = left;
                } else {
                    id += count_leaves(left);
                    node = right;
                }
            }
        }
    }
}

/// Depth-first index of the leaf `x` falls into. Ties go left.
pub fn route(tree: &CdTree, x: &[f64]) -> Result<LeafId> {
    check_x(tree, x)?;
    Ok(route_unchecked(tree, x))
}

fn leaf_for<'t>(tree: &'t CdTree, x: &[f64]) -> Result<&'t FittedHistogram> {
    check_x(tree, x)?;
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf(h) => return Ok(h),
            TreeNode::Internal { split, left, right } => {
                node = if split.goes_left(x) { left } else { right };
            }
        }
    }
}

/// Natural log of the predicted density of `y` given `x`.
///
/// Uses the raw maximum-likelihood bin weights, so targets outside the
/// tree's bounds or in an empty bin get `-inf`.
pub fn log_density(tree: &CdTree, x: &[f64], y: f64) -> Result<f64> {
    let hist = leaf_for(tree, x)?;
    Ok(hist.density(y).ln())
}

/// Log densities of every row of `frame`, in row order.
pub fn predict_log_densities(tree: &CdTree, frame: &DataFrame) -> Result<Vec<f64>> {
    check_conforms(tree, frame)?;
    (0..frame.n_rows())
        .map(|i| log_density(tree, frame.row(i), frame.target()[i]))
        .collect()
}

/// Samples the predicted density of the leaf `x` falls into.
///
/// With `points == h` the samples sit at bin midpoints; otherwise they are
/// evenly spaced over the bounds, endpoints included.
pub fn density_grid(tree: &CdTree, x: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 {
        return Err(Error::Domain("density grid needs at least 2 points".into()));
    }
    let hist = leaf_for(tree, x)?;
    let b = hist.bounds;
    let grid: Vec<f64> = if points == hist.h {
        let w = hist.bin_width();
        (0..points)
            .map(|j| b.lower + (j as f64 + 0.5) * w)
            .collect()
    } else {
        let step = b.width() / (points - 1) as f64;
        (0..points)
            .map(|i| {
                if i + 1 == points {
                    b.upper
                } else {
                    b.lower + i as f64 * step
                }
            })
            .collect()
    };
    Ok(grid.into_iter().map(|y| (y, hist.density(y))).collect())
}

/// Trapezoid-rule integral of a sampled curve.
pub fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Gt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleCondition {
    pub feature: usize,
    pub name: String,
    pub relation: Relation,
    pub threshold: f64,
    /// For binary columns, the level this condition selects.
    pub binary_level: Option<f64>,
}

impl RuleCondition {
    /// Whether `x` satisfies this condition.
    pub fn holds(&self, x: &[f64]) -> bool {
        match self.relation {
            Relation::Le => x[self.feature] <= self.threshold,
            Relation::Gt => x[self.feature] > self.threshold,
        }
    }
}

impl fmt::Display for RuleCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.binary_level, self.relation) {
            (Some(level), _) => write!(f, "{} = {}", self.name, level),
            (None, Relation::Le) => write!(f, "{} ≤ {}", self.name, self.threshold),
            (None, Relation::Gt) => write!(f, "{} > {}", self.name, self.threshold),
        }
    }
}

/// Root-to-leaf conditions of one leaf, with redundant ones removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafRule {
    pub leaf: LeafId,
    pub conditions: Vec<RuleCondition>,
    pub n: u64,
    pub h: usize,
}

impl LeafRule {
    pub fn holds(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }
}

impl fmt::Display for LeafRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conditions.is_empty() {
            write!(f, "(always)")?;
        } else {
            for (i, c) in self.conditions.iter().enumerate() {
                if i > 0 {
                    write!(f, " and ")?;
                }
                write!(f, "{c}")?;
            }
        }
        write!(f, " → leaf {} (n={}, h={})", self.leaf, self.n, self.h)
    }
}

fn simplify(tree: &CdTree, path: &[(SplitCondition, Relation)]) -> Vec<RuleCondition> {
    let m = tree.schema.m();
    let mut upper: Vec<Option<f64>> = vec![None; m];
    let mut lower: Vec<Option<f64>> = vec![None; m];
    for (split, rel) in path {
        let s = split.threshold();
        let j = split.feature;
        match rel {
            Relation::Le => upper[j] = Some(upper[j].map_or(s, |u| u.min(s))),
            Relation::Gt => lower[j] = Some(lower[j].map_or(s, |l| l.max(s))),
        }
    }
    let mut out = Vec::new();
    for j in 0..m {
        let col = &tree.schema.columns[j];
        let level = |bit: usize| -> Option<f64> {
            (col.kind == ColumnKind::Binary).then(|| col.levels.map_or(bit as f64, |l| l[bit]))
        };
        if let Some(s) = upper[j] {
            out.push(RuleCondition {
                feature: j,
                name: col.name.clone(),
                relation: Relation::Le,
                threshold: s,
                binary_level: level(0),
            });
        }
        if let Some(s) = lower[j] {
            out.push(RuleCondition {
                feature: j,
                name: col.name.clone(),
                relation: Relation::Gt,
                threshold: s,
                binary_level: level(1),
            });
        }
    }
    out
}

/// One simplified rule per leaf, in depth-first leaf order.
pub fn leaf_rules(tree: &CdTree) -> Vec<LeafRule> {
    fn walk(
        tree: &CdTree,
        node: &TreeNode,
        path: &mut Vec<(SplitCondition, Relation)>,
        out: &mut Vec<LeafRule>,
    ) {
        match node {
            TreeNode::Leaf(h) => out.push(LeafRule {
                leaf: out.len(),
                conditions: simplify(tree, path),
                n: h.n,
                h: h.h,
            }),
            TreeNode::Internal { split, left, right } => {
                path.push((*split, Relation::Le));
                walk(tree, left, path, out);
                path.pop();
                path.push((*split, Relation::Gt));
                walk(tree, right, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &tree.root, &mut Vec::new(), &mut out);
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz `dot` rendering of the tree. Left edges are labelled with the
/// split condition holding, right edges with it failing.
pub fn to_dot(tree: &CdTree) -> String {
    fn walk(
        tree: &CdTree,
        node: &TreeNode,
        next: &mut usize,
        leaf: &mut usize,
        out: &mut String,
    ) -> usize {
        let id = *next;
        *next += 1;
        match node {
            TreeNode::Leaf(h) => {
                out.push_str(&format!(
                    "  n{id} [shape=box, label=\"leaf {}\\nn={}, h={}\"];\n",
                    *leaf, h.n, h.h
                ));
                *leaf += 1;
            }
            TreeNode::Internal { split, left, right } => {
                let col = &tree.schema.columns[split.feature];
                let (yes, no) = match col.kind {
                    ColumnKind::Binary => {
                        let lv = col.levels.unwrap_or([0.0, 1.0]);
                        (format!("= {}", lv[0]), format!("= {}", lv[1]))
                    }
                    ColumnKind::Continuous => (
                        format!("≤ {}", split.threshold()),
                        format!("> {}", split.threshold()),
                    ),
                };
                out.push_str(&format!("  n{id} [label=\"{}\"];\n", dot_escape(&col.name)));
                let l = walk(tree, left, next, leaf, out);
                let r = walk(tree, right, next, leaf, out);
                out.push_str(&format!(
                    "  n{id} -> n{l} [label=\"{}\"];\n",
                    dot_escape(&yes)
                ));
                out.push_str(&format!(
                    "  n{id} -> n{r} [label=\"{}\"];\n",
                    dot_escape(&no)
                ));
            }
        }
        id
    }
    let mut out = String::from("digraph cdtree {\n  node [fontname=\"Helvetica\"];\n");
    walk(tree, &tree.root, &mut 0, &mut 0, &mut out);
    out.push_str("}\n");
    out
}
