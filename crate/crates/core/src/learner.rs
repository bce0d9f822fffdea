//! Greedy growth of a conditional density tree and from-scratch scoring.
//!
//! Growth starts from a single leaf and repeatedly applies the one split,
//! over all leaves, that lowers the total MDL score the most. It stops when
//! no split lowers it.

use serde::{Deserialize, Serialize};

use crate::codes::{log2_catalan, regret_bits, rissanen_bits, RegretCache};
use crate::error::{Error, Result};
use crate::histogram::{fit_histogram, histogram_nll_bits, optimal_histogram, LeafScore};
use crate::inference::route_unchecked;
use crate::par::map_slice;
use crate::splitter::{search_node, split_code_bits, with_structure_cost, NodeView, SplitProposal};
use crate::types::{
    Bounds, CdTree, ColumnKind, DataFrame, FitConfig, LeafId, MdlScore, SplitCondition, TreeNode,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Depth-first index of the leaf that was split, before splitting.
    pub leaf: LeafId,
    pub split: SplitCondition,
    pub total_bits_before: f64,
    pub total_bits_after: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub initial_total_bits: f64,
    pub records: Vec<TraceRecord>,
}

impl FitTrace {
    pub fn final_total_bits(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_total_bits, |r| r.total_bits_after)
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        let mut prev = self.initial_total_bits;
        for r in &self.records {
            if r.total_bits_before != prev || r.total_bits_after >= r.total_bits_before {
                return false;
            }
            prev = r.total_bits_after;
        }
        true
    }
}

/// Bits to describe the tree itself: leaf count, shape, split conditions
/// and bin counts. The histogram boundary is shared by every candidate
/// model and therefore left out.
pub fn model_code_length_bits(tree: &CdTree) -> f64 {
    let (structure, splits, bins) = model_parts(tree);
    structure + splits + bins
}

fn model_parts(tree: &CdTree) -> (f64, f64, f64) {
    let k = tree.leaf_count() as u64;
    let structure = rissanen_bits(k) + log2_catalan(k - 1);
    let m = tree.schema.m();
    let splits = tree
        .splits()
        .iter()
        .map(|s| match s.granularity() {
            Some(d) => split_code_bits(m, tree.config.c, ColumnKind::Continuous, d),
            None => split_code_bits(m, tree.config.c, ColumnKind::Binary, 1),
        })
        .sum();
    let bins = tree
        .leaves()
        .iter()
        .map(|l| rissanen_bits(l.h as u64))
        .sum();
    (structure, splits, bins)
}

pub(crate) fn check_conforms(tree: &CdTree, frame: &DataFrame) -> Result<()> {
    let a = &tree.schema.columns;
    let b = &frame.schema().columns;
    if a.len() != b.len()
        || a.iter()
            .zip(b)
            .any(|(x, y)| x.name != y.name || x.kind != y.kind)
    {
        return Err(Error::Schema(
            "frame columns do not match the tree's schema".into(),
        ));
    }
    Ok(())
}

/// Scores `tree` on `frame` from scratch, re-deriving every leaf's counts.
pub fn total_mdl_score(tree: &CdTree, frame: &DataFrame) -> Result<MdlScore> {
    check_conforms(tree, frame)?;
    let leaves = tree.leaves();
    let mut per_leaf: Vec<Vec<f64>> = vec![Vec::new(); leaves.len()];
    for i in 0..frame.n_rows() {
        let y = frame.target()[i];
        if !tree.bounds.contains(y) {
            return Err(Error::OutOfBounds {
                value: y,
                lower: tree.bounds.lower,
                upper: tree.bounds.upper,
                location: format!("row {i}"),
            });
        }
        per_leaf[route_unchecked(tree, frame.row(i))].push(y);
    }
    let cache = RegretCache::new();
    let mut nll = 0.0;
    let mut regret = 0.0;
    for (leaf, ys) in leaves.iter().zip(&per_leaf) {
        let hist = fit_histogram(ys, tree.bounds, leaf.h)?;
        nll += histogram_nll_bits(&hist);
        regret += regret_bits(hist.n, hist.h, &cache);
    }
    let (structure, splits, bins) = model_parts(tree);
    Ok(MdlScore::from_parts(nll, regret, structure, splits, bins))
}

/// Global target boundary: the training range widened by `pad` on each side.
pub fn target_bounds(frame: &DataFrame, pad: f64) -> Result<Bounds> {
    let y = frame.target();
    if y.is_empty() {
        return Err(Error::InvalidData("cannot fit on an empty frame".into()));
    }
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Bounds::new(lo - pad, hi + pad).map_err(|_| {
        Error::InvalidData(format!(
            "target range [{lo}, {hi}] with padding {pad} is degenerate"
        ))
    })
}

enum Slot {
    Leaf {
        rows: Vec<usize>,
        score: LeafScore,
        // None: not searched yet; Some(None): searched, no split exists.
        search: Option<Option<SplitProposal>>,
    },
    Internal {
        split: SplitCondition,
        left: usize,
        right: usize,
    },
}

struct Grower<'a> {
    frame: &'a DataFrame,
    bounds: Bounds,
    config: &'a FitConfig,
    cache: RegretCache,
    slots: Vec<Slot>,
}

impl Grower<'_> {
    fn leaves_dfs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            match &self.slots[i] {
                Slot::Leaf { .. } => out.push(i),
                Slot::Internal { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out
    }

    fn refresh_searches(&mut self, leaves: &[usize]) {
        let pending: Vec<usize> = leaves
            .iter()
            .copied()
            .filter(|&i| matches!(self.slots[i], Slot::Leaf { search: None, .. }))
            .collect();
        let found = {
            let this = &*self;
            map_slice(self.config.execution, &pending, |&i| match &this.slots[i] {
                Slot::Leaf { rows, score, .. } => search_node(
                    NodeView::new(this.frame, rows),
                    this.bounds,
                    this.config,
                    &this.cache,
                    score,
                ),
                Slot::Internal { .. } => unreachable!(),
            })
        };
        for (i, p) in pending.into_iter().zip(found) {
            if let Slot::Leaf { search, .. } = &mut self.slots[i] {
                *search = Some(p);
            }
        }
    }

    fn apply(&mut self, slot: usize, p: &SplitProposal) {
        let rows = match &mut self.slots[slot] {
            Slot::Leaf { rows, .. } => std::mem::take(rows),
            Slot::Internal { .. } => unreachable!(),
        };
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| p.condition.goes_left(self.frame.row(i)));
        debug_assert_eq!(l_rows.len() as u64, p.left_score.n);
        debug_assert_eq!(r_rows.len() as u64, p.right_score.n);
        let left = self.slots.len();
        self.slots.push(Slot::Leaf {
            rows: l_rows,
            score: p.left_score,
            search: None,
        });
        self.slots.push(Slot::Leaf {
            rows: r_rows,
            score: p.right_score,
            search: None,
        });
        self.slots[slot] = Slot::Internal {
            split: p.condition,
            left,
            right: left + 1,
        };
    }

    fn build(&self, i: usize) -> Result<TreeNode> {
        Ok(match &self.slots[i] {
            Slot::Leaf { rows, score, .. } => {
                let ys: Vec<f64> = rows.iter().map(|&r| self.frame.target()[r]).collect();
                TreeNode::Leaf(fit_histogram(&ys, self.bounds, score.h)?)
            }
            Slot::Internal { split, left, right } => TreeNode::Internal {
                split: *split,
                left: Box::new(self.build(*left)?),
                right: Box::new(self.build(*right)?),
            },
        })
    }
}

fn grow(
    frame: &DataFrame,
    config: &FitConfig,
    bounds: Bounds,
    reuse: bool,
) -> Result<(CdTree, FitTrace)> {
    config.check()?;
    if frame.n_rows() == 0 {
        return Err(Error::InvalidData("cannot fit on an empty frame".into()));
    }
    let cache = RegretCache::new();
    let root_score = optimal_histogram(frame.target(), bounds, config.g, &cache)?;
    let mut g = Grower {
        frame,
        bounds,
        config,
        cache,
        slots: vec![Slot::Leaf {
            rows: (0..frame.n_rows()).collect(),
            score: root_score,
            search: None,
        }],
    };

    let mut total = root_score.total_bits + rissanen_bits(1) + log2_catalan(0);
    let mut trace = FitTrace {
        initial_total_bits: total,
        records: Vec::new(),
    };

    loop {
        let leaves = g.leaves_dfs();
        if !reuse {
            for &i in &leaves {
                if let Slot::Leaf { search, .. } = &mut g.slots[i] {
                    *search = None;
                }
            }
        }
        g.refresh_searches(&leaves);

        let k = leaves.len();
        let mut best: Option<(LeafId, usize, SplitProposal)> = None;
        for (leaf_id, &slot) in leaves.iter().enumerate() {
            let Slot::Leaf {
                search: Some(Some(p)),
                ..
            } = &g.slots[slot]
            else {
                continue;
            };
            if let Some(p) = with_structure_cost(*p, k) {
                if best
                    .as_ref()
                    .is_none_or(|(_, _, b)| p.delta_bits < b.delta_bits)
                {
                    best = Some((leaf_id, slot, p));
                }
            }
        }
        let Some((leaf_id, slot, p)) = best else {
            break;
        };
        if k >= frame.n_rows() {
            return Err(Error::Fit("split would exceed one leaf per row".into()));
        }
        g.apply(slot, &p);
        let after = total + p.delta_bits;
        trace.records.push(TraceRecord {
            iteration: trace.records.len(),
            leaf: leaf_id,
            split: p.condition,
            total_bits_before: total,
            total_bits_after: after,
        });
        total = after;
    }

    let tree = CdTree {
        schema: frame.schema().clone(),
        bounds,
        root: g.build(0)?,
        config: config.clone(),
    };
    Ok((tree, trace))
}

/// Learns a tree with the target boundary taken from `frame`.
pub fn fit(frame: &DataFrame, config: &FitConfig) -> Result<(CdTree, FitTrace)> {
    config.check()?;
    let bounds = target_bounds(frame, config.boundary_pad)?;
    grow(frame, config, bounds, true)
}

/// Learns a tree with a caller-chosen target boundary, for instance the
/// range of a full data set shared by every cross-validation fold.
pub fn fit_with_bounds(
    frame: &DataFrame,
    config: &FitConfig,
    bounds: Bounds,
) -> Result<(CdTree, FitTrace)> {
    if let Some((i, &y)) = frame
        .target()
        .iter()
        .enumerate()
        .find(|(_, y)| !bounds.contains(**y))
    {
        return Err(Error::OutOfBounds {
            value: y,
            lower: bounds.lower,
            upper: bounds.upper,
            location: format!("row {i}"),
        });
    }
    grow(frame, config, bounds, true)
}

/// Same as [`fit`], but searches every leaf again on every iteration
/// instead of reusing the searches of untouched leaves. Slower; kept as a
/// reference for checking the cached path.
pub fn fit_recompute_all(frame: &DataFrame, config: &FitConfig) -> Result<(CdTree, FitTrace)> {
    config.check()?;
    let bounds = target_bounds(frame, config.boundary_pad)?;
    grow(frame, config, bounds, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_noise_dataset, make_step_dataset};
    use crate::histogram::leaf_score;
    use crate::types::{Column, FittedHistogram, Schema, SplitKind};

    const LN1: f64 = 1.518_567_366_364_848;

    fn leaf(bounds: Bounds, counts: Vec<u64>) -> TreeNode {
        let n = counts.iter().sum();
        TreeNode::Leaf(FittedHistogram {
            bounds,
            h: counts.len(),
            counts,
            n,
        })
    }

    fn schema(m: usize) -> Schema {
        let mut cols: Vec<Column> = (0..m - 1)
            .map(|i| Column::continuous(format!("x{i}")))
            .collect();
        cols.push(Column::binary("b"));
        Schema::new(cols, "y").unwrap()
    }

    #[test]
    fn model_code_length_examples() {
        let b = Bounds::new(0.0, 1.0).unwrap();
        let root = CdTree {
            schema: schema(4),
            bounds: b,
            root: leaf(b, vec![3]),
            config: FitConfig::default(),
        };
        assert!((model_code_length_bits(&root) - 3.0372).abs() < 1e-3);
        assert!((model_code_length_bits(&root) - 2.0 * LN1).abs() < 1e-6);

        let two = CdTree {
            root: TreeNode::Internal {
                split: SplitCondition {
                    feature: 3,
                    kind: SplitKind::Binary,
                },
                left: Box::new(leaf(b, vec![1])),
                right: Box::new(leaf(b, vec![2])),
            },
            ..root.clone()
        };
        assert!((model_code_length_bits(&two) - 8.5558).abs() < 1e-3);

        let three = CdTree {
            root: TreeNode::Internal {
                split: SplitCondition {
                    feature: 3,
                    kind: SplitKind::Binary,
                },
                left: Box::new(leaf(b, vec![1])),
                right: Box::new(TreeNode::Internal {
                    split: SplitCondition {
                        feature: 3,
                        kind: SplitKind::Binary,
                    },
                    left: Box::new(leaf(b, vec![1])),
                    right: Box::new(leaf(b, vec![1])),
                }),
            },
            ..root.clone()
        };
        let want = rissanen_bits(3) + 1.0 + 2.0 * 3.0 + 3.0 * LN1;
        assert!((model_code_length_bits(&three) - want).abs() < 1e-9);
    }

    #[test]
    fn root_only_score_matches_leaf_score() {
        let f = make_noise_dataset(40, 2, 5);
        let cfg = FitConfig::default();
        let bounds = target_bounds(&f, cfg.boundary_pad).unwrap();
        let cache = RegretCache::new();
        let best = optimal_histogram(f.target(), bounds, cfg.g, &cache).unwrap();
        let tree = CdTree {
            schema: f.schema().clone(),
            bounds,
            root: TreeNode::Leaf(fit_histogram(f.target(), bounds, best.h).unwrap()),
            config: cfg,
        };
        let s = total_mdl_score(&tree, &f).unwrap();
        let ls = leaf_score(f.target(), bounds, best.h, &cache).unwrap();
        assert!((s.total_bits - (ls.total_bits + LN1)).abs() < 1e-6);
    }

    #[test]
    fn score_is_row_order_invariant() {
        let f = make_step_dataset(300, 2, 4);
        let (tree, _) = fit(&f, &FitConfig::default()).unwrap();
        let rev: Vec<usize> = (0..f.n_rows()).rev().collect();
        let g = f.select_rows(&rev);
        let a = total_mdl_score(&tree, &f).unwrap();
        let b = total_mdl_score(&tree, &g).unwrap();
        assert!((a.total_bits - b.total_bits).abs() < 1e-9);
        assert!((a.data_nll_bits - b.data_nll_bits).abs() < 1e-9);
        assert_eq!(a.regret_bits, b.regret_bits);
    }

    #[test]
    fn tracked_total_matches_recomputation() {
        for seed in 0..3 {
            let f = make_step_dataset(500, 3, seed);
            let (tree, trace) = fit(&f, &FitConfig::default()).unwrap();
            let s = total_mdl_score(&tree, &f).unwrap();
            assert!((s.total_bits - trace.final_total_bits()).abs() < 1e-6);
            assert!(trace.is_strictly_decreasing());
            assert_eq!(tree.leaf_count(), trace.records.len() + 1);
            assert_eq!(tree.internal_count() + 1, tree.leaf_count());
        }
    }

    #[test]
    fn single_row_stays_a_leaf() {
        let f = make_step_dataset(1, 0, 0);
        let (tree, trace) = fit(&f, &FitConfig::default()).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.leaves()[0].h, 1);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn cached_and_recomputed_growth_agree() {
        for seed in [1, 2] {
            let f = make_step_dataset(400, 3, seed);
            let cfg = FitConfig::default();
            let (a, ta) = fit(&f, &cfg).unwrap();
            let (b, tb) = fit_recompute_all(&f, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn empty_frame_and_bad_config_fail() {
        let f = make_step_dataset(10, 0, 0);
        let empty = f.select_rows(&[]);
        assert!(fit(&empty, &FitConfig::default()).is_err());
        let bad = FitConfig {
            g: 0,
            ..FitConfig::default()
        };
        assert!(fit(&f, &bad).is_err());
    }
}
