//! Domain types shared across the crate: tabular data, histogram leaves,
//! split conditions, the tree itself and the score decomposition.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// A feature column.
///
/// Binary columns are stored as 0.0/1.0. When the source file used two
/// other numeric levels, `levels` keeps the raw values mapped to 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<[f64; 2]>,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
            levels: None,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Binary,
            levels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub target_name: String,
}

impl Schema {
    pub fn new(columns: Vec<Column>, target_name: impl Into<String>) -> Result<Self> {
        let schema = Schema {
            columns,
            target_name: target_name.into(),
        };
        schema.check()?;
        Ok(schema)
    }

    pub fn check(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Schema(
                "at least one feature column is required".into(),
            ));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate column name '{}'",
                    col.name
                )));
            }
        }
        if seen.contains(self.target_name.as_str()) {
            return Err(Error::Schema(format!(
                "target '{}' is also a feature column",
                self.target_name
            )));
        }
        Ok(())
    }

    /// Number of feature columns.
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Row-major feature matrix plus a continuous target.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFrame {
    schema: Schema,
    features: Vec<f64>,
    target: Vec<f64>,
}

impl DataFrame {
    /// Builds a frame from row vectors and validates it.
    pub fn new(schema: Schema, rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let m = schema.m();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} feature values, expected {m}",
                    row.len()
                )));
            }
        }
        if rows.len() != target.len() {
            return Err(Error::InvalidData(format!(
                "length mismatch: {} feature rows but {} target values",
                rows.len(),
                target.len()
            )));
        }
        let features = rows.into_iter().flatten().collect();
        Self::from_flat(schema, features, target)
    }

    /// Builds a frame from a row-major feature buffer and validates it.
    pub fn from_flat(schema: Schema, features: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        let frame = DataFrame {
            schema,
            features,
            target,
        };
        validate(&frame)?;
        Ok(frame)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.m()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.schema.m();
        &self.features[i * m..(i + 1) * m]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.schema.m() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.value(i, col)).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Copies the given rows, in order, into a new frame.
    pub fn select_rows(&self, rows: &[usize]) -> DataFrame {
        let m = self.schema.m();
        let mut features = Vec::with_capacity(rows.len() * m);
        let mut target = Vec::with_capacity(rows.len());
        for &i in rows {
            features.extend_from_slice(self.row(i));
            target.push(self.target[i]);
        }
        DataFrame {
            schema: self.schema.clone(),
            features,
            target,
        }
    }

    /// Appends feature columns. `values[c]` holds the full column `c`.
    pub fn with_columns(&self, columns: Vec<Column>, values: Vec<Vec<f64>>) -> Result<DataFrame> {
        let mut schema = self.schema.clone();
        schema.columns.extend(columns);
        schema.check()?;
        let n = self.n_rows();
        if values.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidData("appended column length mismatch".into()));
        }
        let mut features = Vec::with_capacity(n * schema.m());
        for i in 0..n {
            features.extend_from_slice(self.row(i));
            features.extend(values.iter().map(|v| v[i]));
        }
        DataFrame::from_flat(schema, features, self.target.clone())
    }

    pub(crate) fn replace_data(&mut self, features: Vec<f64>, target: Vec<f64>) {
        debug_assert_eq!(features.len(), target.len() * self.schema.m());
        self.features = features;
        self.target = target;
    }
}

/// Checks every frame invariant, reporting the first violation found.
pub fn validate(frame: &DataFrame) -> Result<()> {
    frame.schema.check()?;
    let m = frame.schema.m();
    let n = frame.target.len();
    if !frame.features.len().is_multiple_of(m) {
        return Err(Error::InvalidData(format!(
            "feature buffer of {} values is not a whole number of {m}-column rows",
            frame.features.len()
        )));
    }
    let rows = frame.features.len() / m;
    if rows != n {
        return Err(Error::InvalidData(format!(
            "length mismatch: {rows} feature rows but {n} target values"
        )));
    }
    for i in 0..n {
        if !frame.target[i].is_finite() {
            return Err(Error::InvalidData(format!(
                "row {i}: target '{}' is not finite",
                frame.schema.target_name
            )));
        }
        for (j, col) in frame.schema.columns.iter().enumerate() {
            let v = frame.features[i * m + j];
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "row {i}, column '{}': value is not finite",
                    col.name
                )));
            }
            if col.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::InvalidData(format!(
                    "row {i}, binary column '{}' holds {v}",
                    col.name
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidData(format!(
                "bounds need lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }
}

/// Equal-width histogram with maximum-likelihood bin weights `counts[j] / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedHistogram {
    pub bounds: Bounds,
    pub h: usize,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl FittedHistogram {
    pub fn bin_width(&self) -> f64 {
        self.bounds.width() / self.h as f64
    }

    /// Bin holding `y`; the last bin is closed on top. `None` outside bounds.
    pub fn bin_index(&self, y: f64) -> Option<usize> {
        bin_index(self.bounds, self.h, y)
    }

    /// Density of bin `j` under the maximum-likelihood weights.
    pub fn bin_density(&self, j: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.counts[j] as f64 / (self.n as f64 * self.bin_width())
    }

    pub fn density(&self, y: f64) -> f64 {
        match self.bin_index(y) {
            Some(j) => self.bin_density(j),
            None => 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.h == 0 || self.counts.len() != self.h {
            return Err(Error::Format(format!(
                "histogram has h = {} but {} counts",
                self.h,
                self.counts.len()
            )));
        }
        if self.counts.iter().sum::<u64>() != self.n {
            return Err(Error::Format("histogram counts do not sum to n".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn bin_index(bounds: Bounds, h: usize, y: f64) -> Option<usize> {
    if !bounds.contains(y) {
        return None;
    }
    let w = bounds.width() / h as f64;
    let j = ((y - bounds.lower) / w).floor() as usize;
    Some(j.min(h - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitKind {
    Continuous { threshold: f64, granularity: u32 },
    Binary,
}

/// Routes rows with `x[feature] <= threshold` to the left child.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCondition {
    pub feature: usize,
    pub kind: SplitKind,
}

impl SplitCondition {
    pub fn threshold(&self) -> f64 {
        match self.kind {
            SplitKind::Continuous { threshold, .. } => threshold,
            SplitKind::Binary => 0.5,
        }
    }

    pub fn granularity(&self) -> Option<u32> {
        match self.kind {
            SplitKind::Continuous { granularity, .. } => Some(granularity),
            SplitKind::Binary => None,
        }
    }

    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.feature] <= self.threshold()
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        let col = schema.columns.get(self.feature).ok_or_else(|| {
            Error::Format(format!(
                "split on feature index {} out of range",
                self.feature
            ))
        })?;
        match (self.kind, col.kind) {
            (SplitKind::Continuous { granularity, .. }, ColumnKind::Continuous) => {
                if granularity == 0 {
                    return Err(Error::Format("granularity must be at least 1".into()));
                }
                Ok(())
            }
            (SplitKind::Binary, ColumnKind::Binary) => Ok(()),
            _ => Err(Error::Format(format!(
                "split kind does not match the kind of column '{}'",
                col.name
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        split: SplitCondition,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(FittedHistogram),
}

impl TreeNode {
    fn visit_leaves<'a>(&'a self, out: &mut Vec<&'a FittedHistogram>) {
        match self {
            TreeNode::Leaf(h) => out.push(h),
            TreeNode::Internal { left, right, .. } => {
                left.visit_leaves(out);
                right.visit_leaves(out);
            }
        }
    }

    fn visit_splits<'a>(&'a self, out: &mut Vec<&'a SplitCondition>) {
        if let TreeNode::Internal { split, left, right } = self {
            out.push(split);
            left.visit_splits(out);
            right.visit_splits(out);
        }
    }
}

/// Identifies a leaf by its position in depth-first, left-to-right order.
pub type LeafId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdTree {
    pub schema: Schema,
    pub bounds: Bounds,
    pub root: TreeNode,
    pub config: FitConfig,
}

impl CdTree {
    /// Leaves in depth-first order; the index is the leaf's [`LeafId`].
    pub fn leaves(&self) -> Vec<&FittedHistogram> {
        let mut out = Vec::new();
        self.root.visit_leaves(&mut out);
        out
    }

    /// Split conditions in depth-first pre-order.
    pub fn splits(&self) -> Vec<&SplitCondition> {
        let mut out = Vec::new();
        self.root.visit_splits(&mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn internal_count(&self) -> usize {
        self.splits().len()
    }

    pub fn check(&self) -> Result<()> {
        self.schema.check()?;
        for split in self.splits() {
            split.check(&self.schema)?;
        }
        for leaf in self.leaves() {
            leaf.check()?;
            if leaf.bounds != self.bounds {
                return Err(Error::Format("leaf bounds differ from tree bounds".into()));
            }
        }
        Ok(())
    }
}

/// Settings used to grow a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Base count of split quantiles at the coarsest granularity level.
    pub c: u32,
    /// Step size of the coarse bin-count scan.
    pub g: usize,
    /// Padding added on both sides of the target range.
    pub boundary_pad: f64,
    pub min_leaf: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            c: 5,
            g: 30,
            boundary_pad: 1e-3,
            min_leaf: 1,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn check(&self) -> Result<()> {
        if self.c < 1 {
            return Err(Error::InvalidConfig("c must be ≥ 1".into()));
        }
        if self.g < 1 {
            return Err(Error::InvalidConfig("g must be ≥ 1".into()));
        }
        if !(self.boundary_pad >= 0.0 && self.boundary_pad.is_finite()) {
            return Err(Error::InvalidConfig("boundary_pad must be ≥ 0".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::InvalidConfig("min_leaf must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// The MDL score of a tree split into its parts, all in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdlScore {
    pub data_nll_bits: f64,
    pub regret_bits: f64,
    /// Leaf count code plus tree-shape code.
    pub structure_bits: f64,
    pub split_bits: f64,
    pub bin_count_bits: f64,
    pub total_bits: f64,
}

impl MdlScore {
    pub fn from_parts(
        data_nll_bits: f64,
        regret_bits: f64,
        structure_bits: f64,
        split_bits: f64,
        bin_count_bits: f64,
    ) -> Self {
        MdlScore {
            data_nll_bits,
            regret_bits,
            structure_bits,
            split_bits,
            bin_count_bits,
            total_bits: data_nll_bits + regret_bits + structure_bits + split_bits + bin_count_bits,
        }
    }

    pub fn model_bits(&self) -> f64 {
        self.structure_bits + self.split_bits + self.bin_count_bits
    }
}

impl fmt::Display for MdlScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total_bits={:.6}", self.total_bits)?;
        writeln!(f, "data_nll_bits={:.6}", self.data_nll_bits)?;
        writeln!(f, "regret_bits={:.6}", self.regret_bits)?;
        writeln!(f, "structure_bits={:.6}", self.structure_bits)?;
        writeln!(f, "split_bits={:.6}", self.split_bits)?;
        write!(f, "bin_count_bits={:.6}", self.bin_count_bits)
    }
}
