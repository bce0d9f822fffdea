//! Best-split search for a single node.
//!
//! Continuous columns are searched over a hierarchy of equal-frequency
//! quantile grids: level `d` offers `c · 2^(d−1)` candidates and costs
//! `L_N(d) + log₂ c + d − 1` bits to name one of them. Levels are tried in
//! order until a level fails to beat the previous one. Binary columns have
//! a single candidate at 0.5.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::codes::{log2_catalan, rissanen_bits, RegretCache};
use crate::error::{Error, Result};
use crate::histogram::{optimal_histogram, optimal_prechecked, LeafScore};
use crate::par::{map_range, map_slice};
use crate::types::{Bounds, ColumnKind, DataFrame, FitConfig, SplitCondition, SplitKind};

// Q = c · 2^(d−1) saturates the distinct values of any realistic node far
// earlier than this.
const MAX_GRANULARITY: u32 = 60;

/// A set of rows of a frame, as seen by one tree node.
#[derive(Clone, Copy, Debug)]
pub struct NodeView<'a> {
    pub frame: &'a DataFrame,
    pub rows: &'a [usize],
}

impl<'a> NodeView<'a> {
    pub fn new(frame: &'a DataFrame, rows: &'a [usize]) -> Self {
        NodeView { frame, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        let y = self.frame.target();
        self.rows.iter().map(|&i| y[i]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitProposal {
    pub condition: SplitCondition,
    pub left_score: LeafScore,
    pub right_score: LeafScore,
    pub split_code_bits: f64,
    /// Score change of the node alone: children plus split code minus the
    /// current leaf.
    pub local_delta_bits: f64,
    /// Change in the whole tree's score, including the leaf-count and
    /// tree-shape codes.
    pub delta_bits: f64,
}

/// Bits to name a split: the feature, then the granularity level and the
/// quantile for continuous columns, or the single value for binary ones.
pub fn split_code_bits(m: usize, c: u32, kind: ColumnKind, d: u32) -> f64 {
    let feature_bits = (m as f64).log2();
    match kind {
        ColumnKind::Binary => feature_bits + 1.0,
        ColumnKind::Continuous => {
            feature_bits + rissanen_bits(d as u64) + (c as f64).log2() + (d - 1) as f64
        }
    }
}

/// Change of `L_N(K) + log₂ Catalan(K−1)` when a tree with `k` leaves
/// grows one more.
pub fn structure_delta_bits(k: usize) -> f64 {
    let k = k as u64;
    rissanen_bits(k + 1) - rissanen_bits(k) + log2_catalan(k) - log2_catalan(k - 1)
}

/// Equal-frequency split thresholds of granularity level `d`.
///
/// With `Q = c · 2^(d−1)`, returns the order statistics at ranks
/// `⌈i · n / (Q + 1)⌉` for `i = 1..=Q`, deduplicated and without the
/// maximum so the right side of every split is non-empty.
pub fn candidate_thresholds(values: &[f64], d: u32, c: u32) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidData(
            "no values to place thresholds on".into(),
        ));
    }
    if d < 1 || c < 1 {
        return Err(Error::InvalidConfig("granularity and c must be ≥ 1".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(thresholds_sorted(&sorted, d, c))
}

fn thresholds_sorted(sorted: &[f64], d: u32, c: u32) -> Vec<f64> {
    let n = sorted.len() as u128;
    let max = sorted[sorted.len() - 1];
    let q = (c as u128) << (d - 1).min(MAX_GRANULARITY);
    let mut out: Vec<f64> = Vec::new();
    let mut last_rank = 0u128;
    // Ranks only grow with i; once ranks stop changing we can skip ahead,
    // which keeps huge Q cheap.
    let mut i = 1u128;
    while i <= q {
        let rank = (i * n).div_ceil(q + 1);
        if rank != last_rank {
            last_rank = rank;
            let v = sorted[(rank - 1) as usize];
            if v < max && out.last().is_none_or(|&l| v > l) {
                out.push(v);
            }
            i += 1;
        } else {
            // smallest i with ⌈i·n/(q+1)⌉ > rank
            i = (rank * (q + 1)) / n + 1;
        }
    }
    out
}

/// Splits `node` on `x_j ≤ s` and fits the best histogram on each side.
///
/// Returns `Ok(None)` when either side would hold fewer than `min_leaf` rows.
pub fn evaluate_candidate(
    node: NodeView<'_>,
    j: usize,
    s: f64,
    bounds: Bounds,
    config: &FitConfig,
    cache: &RegretCache,
) -> Result<Option<(LeafScore, LeafScore)>> {
    if j >= node.frame.n_features() {
        return Err(Error::Domain(format!("feature index {j} out of range")));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in node.rows {
        let y = node.frame.target()[i];
        if node.frame.value(i, j) <= s {
            left.push(y);
        } else {
            right.push(y);
        }
    }
    if left.len() < config.min_leaf || right.len() < config.min_leaf {
        return Ok(None);
    }
    let l = optimal_histogram(&left, bounds, config.g, cache)?;
    let r = optimal_histogram(&right, bounds, config.g, cache)?;
    Ok(Some((l, r)))
}

#[derive(Clone, Copy, Debug)]
struct ColumnBest {
    score: f64,
    threshold: f64,
    d: u32,
    left: LeafScore,
    right: LeafScore,
}

struct SortedColumn {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SortedColumn {
    fn new(node: NodeView<'_>, j: usize) -> Self {
        let y = node.frame.target();
        let mut pairs: Vec<(f64, f64)> = node
            .rows
            .iter()
            .map(|&i| (node.frame.value(i, j), y[i]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys) = pairs.into_iter().unzip();
        SortedColumn { xs, ys }
    }

    fn evaluate(
        &self,
        s: f64,
        bounds: Bounds,
        config: &FitConfig,
        cache: &RegretCache,
    ) -> Option<(LeafScore, LeafScore)> {
        let p = self.xs.partition_point(|&x| x <= s);
        if p < config.min_leaf || self.xs.len() - p < config.min_leaf {
            return None;
        }
        let l = optimal_prechecked(&self.ys[..p], bounds, config.g, cache);
        let r = optimal_prechecked(&self.ys[p..], bounds, config.g, cache);
        Some((l, r))
    }
}

fn search_binary(
    node: NodeView<'_>,
    j: usize,
    bounds: Bounds,
    config: &FitConfig,
    cache: &RegretCache,
) -> Option<ColumnBest> {
    let col = SortedColumn::new(node, j);
    let (left, right) = col.evaluate(0.5, bounds, config, cache)?;
    let bits = split_code_bits(node.frame.n_features(), config.c, ColumnKind::Binary, 1);
    Some(ColumnBest {
        score: left.total_bits + right.total_bits + bits,
        threshold: 0.5,
        d: 1,
        left,
        right,
    })
}

fn search_continuous(
    node: NodeView<'_>,
    j: usize,
    bounds: Bounds,
    config: &FitConfig,
    cache: &RegretCache,
) -> Option<ColumnBest> {
    let col = SortedColumn::new(node, j);
    let m = node.frame.n_features();
    let mut seen: HashMap<u64, Option<(LeafScore, LeafScore)>> = HashMap::new();
    let mut prev: Option<ColumnBest> = None;

    for d in 1..=MAX_GRANULARITY {
        let thresholds = thresholds_sorted(&col.xs, d, config.c);
        let fresh: Vec<f64> = thresholds
            .iter()
            .copied()
            .filter(|s| !seen.contains_key(&s.to_bits()))
            .collect();
        let results = map_slice(config.execution, &fresh, |&s| {
            col.evaluate(s, bounds, config, cache)
        });
        for (s, r) in fresh.iter().zip(results) {
            seen.insert(s.to_bits(), r);
        }

        let bits = split_code_bits(m, config.c, ColumnKind::Continuous, d);
        let mut level: Option<ColumnBest> = None;
        for &s in &thresholds {
            if let Some((left, right)) = seen[&s.to_bits()] {
                let score = left.total_bits + right.total_bits + bits;
                if level.is_none_or(|b| score < b.score) {
                    level = Some(ColumnBest {
                        score,
                        threshold: s,
                        d,
                        left,
                        right,
                    });
                }
            }
        }

        let level_score = level.map_or(f64::INFINITY, |b| b.score);
        let prev_score = prev.map_or(f64::INFINITY, |b| b.score);
        if d > 1 && level_score >= prev_score {
            break;
        }
        prev = level;
    }
    prev
}

/// The best split of a node judged on the node's own terms.
///
/// Unlike [`best_split_for_node`] this always returns the best candidate
/// found, even one that does not pay for itself, and leaves the tree-level
/// structure cost out of `delta_bits`.
pub fn search_node(
    node: NodeView<'_>,
    bounds: Bounds,
    config: &FitConfig,
    cache: &RegretCache,
    current_leaf: &LeafScore,
) -> Option<SplitProposal> {
    let schema = node.frame.schema();
    let m = schema.m();
    let per_column = map_range(config.execution, m, |j| match schema.columns[j].kind {
        ColumnKind::Binary => search_binary(node, j, bounds, config, cache),
        ColumnKind::Continuous => search_continuous(node, j, bounds, config, cache),
    });

    let mut best: Option<(usize, ColumnBest)> = None;
    for (j, cand) in per_column.into_iter().enumerate() {
        if let Some(c) = cand {
            if best.is_none_or(|(_, b)| c.score < b.score) {
                best = Some((j, c));
            }
        }
    }
    let (j, b) = best?;
    let kind = schema.columns[j].kind;
    let condition = SplitCondition {
        feature: j,
        kind: match kind {
            ColumnKind::Binary => SplitKind::Binary,
            ColumnKind::Continuous => SplitKind::Continuous {
                threshold: b.threshold,
                granularity: b.d,
            },
        },
    };
    let split_code_bits = split_code_bits(m, config.c, kind, b.d);
    let local = b.score - current_leaf.total_bits;
    Some(SplitProposal {
        condition,
        left_score: b.left,
        right_score: b.right,
        split_code_bits,
        local_delta_bits: local,
        delta_bits: local,
    })
}

/// Best split of a node in a tree that currently has `leaves` leaves, or
/// `None` when no split lowers the total score.
pub fn best_split_for_node(
    node: NodeView<'_>,
    bounds: Bounds,
    config: &FitConfig,
    cache: &RegretCache,
    current_leaf: &LeafScore,
    leaves: usize,
) -> Option<SplitProposal> {
    let p = search_node(node, bounds, config, cache, current_leaf)?;
    with_structure_cost(p, leaves)
}

pub(crate) fn with_structure_cost(mut p: SplitProposal, leaves: usize) -> Option<SplitProposal> {
    p.delta_bits = p.local_delta_bits + structure_delta_bits(leaves);
    (p.delta_bits < 0.0).then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_step_dataset;
    use crate::histogram::optimal_histogram;
    use crate::types::{Column, Schema};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_to(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64).collect()
    }

    #[test]
    fn level_one_thresholds() {
        let t = candidate_thresholds(&one_to(12), 1, 5).unwrap();
        assert_eq!(t, vec![2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn level_two_thresholds() {
        let t = candidate_thresholds(&one_to(12), 2, 5).unwrap();
        assert_eq!(t, (2..=11).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn constant_column_has_no_thresholds() {
        for d in 1..5 {
            assert!(candidate_thresholds(&[7.0; 9], d, 5).unwrap().is_empty());
        }
        assert!(candidate_thresholds(&[], 1, 5).is_err());
    }

    #[test]
    fn huge_levels_saturate_to_all_but_max() {
        let t = candidate_thresholds(&one_to(50), 40, 5).unwrap();
        assert_eq!(t, (1..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn thresholds_sorted_and_below_max(v in prop::collection::vec(-5.0f64..5.0, 1..80), d in 1u32..8, c in 1u32..7) {
            let t = candidate_thresholds(&v, d, c).unwrap();
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(t.iter().all(|&s| s < max));
            // naive rank computation
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let q = (c as usize) << (d - 1);
            let mut want: Vec<f64> = (1..=q)
                .map(|i| sorted[(i * v.len()).div_ceil(q + 1) - 1])
                .filter(|&s| s < max)
                .collect();
            want.dedup();
            prop_assert_eq!(t, want);
        }
    }

    fn frame_xy(xs: &[f64], ys: &[f64], kind: ColumnKind) -> DataFrame {
        let col = Column {
            name: "x".into(),
            kind,
            levels: None,
        };
        let schema = Schema::new(vec![col], "y").unwrap();
        DataFrame::new(schema, xs.iter().map(|&x| vec![x]).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn all_left_is_rejected() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let f = frame_xy(&xs, &xs, ColumnKind::Continuous);
        let rows: Vec<usize> = (0..10).collect();
        let b = Bounds::new(-0.1, 1.0).unwrap();
        let cache = RegretCache::new();
        let r = evaluate_candidate(
            NodeView::new(&f, &rows),
            0,
            5.0,
            b,
            &FitConfig::default(),
            &cache,
        )
        .unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn binary_split_conserves_rows() {
        let xs = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let ys: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let f = frame_xy(&xs, &ys, ColumnKind::Binary);
        let rows: Vec<usize> = (0..10).collect();
        let b = Bounds::new(-0.1, 1.0).unwrap();
        let cache = RegretCache::new();
        let (l, r) = evaluate_candidate(
            NodeView::new(&f, &rows),
            0,
            0.5,
            b,
            &FitConfig::default(),
            &cache,
        )
        .unwrap()
        .unwrap();
        assert_eq!((l.n, r.n), (6, 4));
    }

    #[test]
    fn step_split_lowers_nll() {
        let f = make_step_dataset(400, 0, 3);
        let rows: Vec<usize> = (0..f.n_rows()).collect();
        let b = Bounds::new(-0.001, 1.001).unwrap();
        let cache = RegretCache::new();
        let cfg = FitConfig::default();
        let parent = optimal_histogram(f.target(), b, cfg.g, &cache).unwrap();
        let (l, r) = evaluate_candidate(NodeView::new(&f, &rows), 0, 0.5, b, &cfg, &cache)
            .unwrap()
            .unwrap();
        assert!(l.nll_bits + r.nll_bits < parent.nll_bits);
    }

    #[test]
    fn constant_feature_gives_no_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ys: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let f = frame_xy(&[3.0; 50], &ys, ColumnKind::Continuous);
        let rows: Vec<usize> = (0..50).collect();
        let b = Bounds::new(-0.001, 1.001).unwrap();
        let cache = RegretCache::new();
        let cfg = FitConfig::default();
        let leaf = optimal_histogram(&ys, b, cfg.g, &cache).unwrap();
        assert!(search_node(NodeView::new(&f, &rows), b, &cfg, &cache, &leaf).is_none());
    }

    #[test]
    fn tiny_uniform_node_is_not_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let f = frame_xy(&xs, &ys, ColumnKind::Continuous);
        let rows: Vec<usize> = (0..5).collect();
        let b = Bounds::new(-0.001, 1.001).unwrap();
        let cache = RegretCache::new();
        let cfg = FitConfig::default();
        let leaf = optimal_histogram(&ys, b, cfg.g, &cache).unwrap();
        let node = NodeView::new(&f, &rows);
        assert!(best_split_for_node(node, b, &cfg, &cache, &leaf, 1).is_none());
        // exhaustive check over every realizable threshold at every level up to 4
        let bits_min =
            split_code_bits(1, cfg.c, ColumnKind::Continuous, 1) + structure_delta_bits(1);
        for &s in &xs {
            if let Some((l, r)) = evaluate_candidate(node, 0, s, b, &cfg, &cache).unwrap() {
                assert!(l.total_bits + r.total_bits + bits_min >= leaf.total_bits);
            }
        }
    }

    #[test]
    fn relevant_feature_beats_noise() {
        let f = make_step_dataset(2000, 20, 42);
        let rows: Vec<usize> = (0..f.n_rows()).collect();
        let y = f.target();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-3;
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-3;
        let b = Bounds::new(lo, hi).unwrap();
        let cache = RegretCache::new();
        let cfg = FitConfig::default();
        let leaf = optimal_histogram(y, b, cfg.g, &cache).unwrap();
        let p = best_split_for_node(NodeView::new(&f, &rows), b, &cfg, &cache, &leaf, 1).unwrap();
        assert_eq!(p.condition.feature, 0);
        let s = p.condition.threshold();
        assert!((0.45..=0.55).contains(&s), "threshold {s}");
        assert_eq!(p.left_score.n + p.right_score.n, 2000);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let f = make_step_dataset(600, 5, 9);
        let rows: Vec<usize> = (0..f.n_rows()).collect();
        let b = Bounds::new(-0.001, 1.001).unwrap();
        let cache = RegretCache::new();
        let mut cfg = FitConfig::default();
        let leaf = optimal_histogram(f.target(), b, cfg.g, &cache).unwrap();
        let par = search_node(NodeView::new(&f, &rows), b, &cfg, &cache, &leaf);
        cfg.execution = crate::par::Execution::Sequential;
        let seq = search_node(NodeView::new(&f, &rows), b, &cfg, &cache, &leaf);
        assert_eq!(par, seq);
    }

    #[test]
    fn structure_delta_values() {
        // K = 1 -> 2: L_N(2) − L_N(1) + log2 C_1 − log2 C_0 = 1
        assert!((structure_delta_bits(1) - 1.0).abs() < 1e-12);
        // K = 2 -> 3 adds log2 C_2 = 1 bit of shape cost
        let want = rissanen_bits(3) - rissanen_bits(2) + 1.0;
        assert!((structure_delta_bits(2) - want).abs() < 1e-12);
    }
}
