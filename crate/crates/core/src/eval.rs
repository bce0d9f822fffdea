//! Held-out log-loss, cross-validation and robustness experiments.
//!
//! Log-losses are reported in nats; MDL scores elsewhere stay in bits.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{inject_noise_features, kfold, kfold_indices, NoiseMode, NoiseSpec};
use crate::error::{Error, Result};
use crate::inference::log_density;
use crate::learner::{check_conforms, fit, fit_with_bounds, target_bounds};
use crate::par::{map_range, map_slice, Execution};
use crate::types::{CdTree, DataFrame, FitConfig};

/// Default log-density floor for zero-density test points: ln 1e-10.
pub const DEFAULT_FLOOR_NATS: f64 = -23.025_850_929_940_457;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub mean_nll_nats: f64,
    /// Test points whose predicted density was zero.
    pub zero_density_events: usize,
    pub clamp_floor_nats: f64,
}

/// Mean negative log density of `test` under `tree`. Zero-density points
/// are counted and scored at `clamp_floor_nats` instead of `-inf`.
pub fn evaluate_nll(tree: &CdTree, test: &DataFrame, clamp_floor_nats: f64) -> Result<EvalReport> {
    check_conforms(tree, test)?;
    let mut sum = 0.0;
    let mut zeros = 0;
    for i in 0..test.n_rows() {
        let ld = log_density(tree, test.row(i), test.target()[i])?;
        if ld == f64::NEG_INFINITY {
            zeros += 1;
            sum += clamp_floor_nats;
        } else {
            sum += ld;
        }
    }
    let n = test.n_rows();
    Ok(EvalReport {
        n_test: n,
        mean_nll_nats: if n == 0 { 0.0 } else { -sum / n as f64 },
        zero_density_events: zeros,
        clamp_floor_nats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub eval: EvalReport,
    pub leaves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean_nll_nats: f64,
    /// Sample standard deviation (n − 1 denominator) of the fold means.
    pub sd_nll_nats: f64,
    pub mean_leaves: f64,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldReport>) -> Self {
        let k = folds.len() as f64;
        let mean = folds.iter().map(|f| f.eval.mean_nll_nats).sum::<f64>() / k;
        let sd = if folds.len() > 1 {
            (folds
                .iter()
                .map(|f| (f.eval.mean_nll_nats - mean).powi(2))
                .sum::<f64>()
                / (k - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let mean_leaves = folds.iter().map(|f| f.leaves as f64).sum::<f64>() / k;
        CvReport {
            folds,
            mean_nll_nats: mean,
            sd_nll_nats: sd,
            mean_leaves,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub clamp_floor_nats: f64,
    /// Take the target boundary from the whole frame rather than from each
    /// fold's training part.
    pub shared_bounds: bool,
}

impl CvOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        CvOptions {
            folds,
            seed,
            clamp_floor_nats: DEFAULT_FLOOR_NATS,
            shared_bounds: false,
        }
    }
}

/// K-fold cross-validation with the default options.
pub fn cross_validate(
    frame: &DataFrame,
    folds: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<CvReport> {
    cross_validate_with(frame, config, &CvOptions::new(folds, seed))
}

pub fn cross_validate_with(
    frame: &DataFrame,
    config: &FitConfig,
    opts: &CvOptions,
) -> Result<CvReport> {
    config.check()?;
    let splits = kfold(frame, opts.folds, opts.seed)?;
    let shared = if opts.shared_bounds {
        Some(target_bounds(frame, config.boundary_pad)?)
    } else {
        None
    };
    let results = map_range(config.execution, splits.len(), |k| -> Result<FoldReport> {
        let (train, test) = &splits[k];
        let (tree, _) = match shared {
            Some(b) => fit_with_bounds(train, config, b)?,
            None => fit(train, config)?,
        };
        Ok(FoldReport {
            fold: k,
            eval: evaluate_nll(&tree, test, opts.clamp_floor_nats)?,
            leaves: tree.leaf_count(),
        })
    });
    Ok(CvReport::from_folds(
        results.into_iter().collect::<Result<_>>()?,
    ))
}

/// Internal nodes splitting on one of the named columns.
pub fn count_irrelevant_splits(tree: &CdTree, irrelevant: &[String]) -> Result<usize> {
    let mut idx = HashSet::new();
    for name in irrelevant {
        let j = tree
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))?;
        idx.insert(j);
    }
    Ok(tree
        .splits()
        .iter()
        .filter(|s| idx.contains(&s.feature))
        .count())
}

pub fn leaf_count(tree: &CdTree) -> usize {
    tree.leaf_count()
}

/// One cell of a robustness experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub mode: NoiseMode,
    pub w: usize,
    pub seed: u64,
    pub irrelevant_splits: usize,
    pub leaves: usize,
    pub baseline_nll_nats: f64,
    pub noisy_nll_nats: f64,
}

impl RobustnessRow {
    pub fn nll_delta(&self) -> f64 {
        self.noisy_nll_nats - self.baseline_nll_nats
    }
}

/// For each `(w, seed)`: hold out one fifth of the rows, fit with and
/// without `w` injected noise columns, and record irrelevant splits and
/// held-out log-loss of both fits.
pub fn robustness(
    frame: &DataFrame,
    mode: NoiseMode,
    ws: &[usize],
    seeds: &[u64],
    config: &FitConfig,
) -> Result<Vec<RobustnessRow>> {
    let jobs: Vec<(usize, u64)> = ws
        .iter()
        .flat_map(|&w| seeds.iter().map(move |&s| (w, s)))
        .collect();
    let inner = FitConfig {
        execution: Execution::Sequential,
        ..config.clone()
    };
    let outer = config.execution;
    let baseline = map_slice(outer, seeds, |&seed| -> Result<f64> {
        let (train, test) = holdout(frame, seed)?;
        let (tree, _) = fit(&train, &inner)?;
        Ok(evaluate_nll(&tree, &test, DEFAULT_FLOOR_NATS)?.mean_nll_nats)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    map_slice(outer, &jobs, |&(w, seed)| -> Result<RobustnessRow> {
        let spec = NoiseSpec { mode, w, seed };
        let (noisy, names) = inject_noise_features(frame, &spec)?;
        let (train, test) = holdout(&noisy, seed)?;
        let (tree, _) = fit(&train, &inner)?;
        let base = baseline[seeds.iter().position(|&s| s == seed).expect("seed listed")];
        Ok(RobustnessRow {
            mode,
            w,
            seed,
            irrelevant_splits: count_irrelevant_splits(&tree, &names)?,
            leaves: tree.leaf_count(),
            baseline_nll_nats: base,
            noisy_nll_nats: evaluate_nll(&tree, &test, DEFAULT_FLOOR_NATS)?.mean_nll_nats,
        })
    })
    .into_iter()
    .collect()
}

/// Seeded 80/20 split: the first of five shuffled folds is held out.
pub fn holdout(frame: &DataFrame, seed: u64) -> Result<(DataFrame, DataFrame)> {
    let folds = kfold_indices(frame.n_rows(), 5, seed)?;
    let mut in_test = vec![false; frame.n_rows()];
    for &i in &folds[0] {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..frame.n_rows()).filter(|&i| !in_test[i]).collect();
    Ok((frame.select_rows(&train), frame.select_rows(&folds[0])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_step_dataset;
    use crate::learner::total_mdl_score;
    use crate::types::{
        Bounds, Column, FittedHistogram, Schema, SplitCondition, SplitKind, TreeNode,
    };

    fn uniform_tree() -> CdTree {
        let b = Bounds::new(0.0, 1.0).unwrap();
        CdTree {
            schema: Schema::new(vec![Column::continuous("noise_1")], "y").unwrap(),
            bounds: b,
            root: TreeNode::Leaf(FittedHistogram {
                bounds: b,
                h: 1,
                counts: vec![4],
                n: 4,
            }),
            config: FitConfig::default(),
        }
    }

    fn frame(ys: &[f64]) -> DataFrame {
        let schema = Schema::new(vec![Column::continuous("noise_1")], "y").unwrap();
        DataFrame::from_flat(schema, vec![0.0; ys.len()], ys.to_vec()).unwrap()
    }

    #[test]
    fn uniform_leaf_has_zero_nll() {
        let r = evaluate_nll(
            &uniform_tree(),
            &frame(&[0.1, 0.5, 0.9]),
            DEFAULT_FLOOR_NATS,
        )
        .unwrap();
        assert_eq!(r.mean_nll_nats, 0.0);
        assert_eq!(r.zero_density_events, 0);
        let unclamped =
            evaluate_nll(&uniform_tree(), &frame(&[0.1, 0.5, 0.9]), f64::NEG_INFINITY).unwrap();
        assert_eq!(unclamped.mean_nll_nats, r.mean_nll_nats);
    }

    #[test]
    fn out_of_range_point_is_clamped() {
        let r = evaluate_nll(&uniform_tree(), &frame(&[0.5, 1.5]), DEFAULT_FLOOR_NATS).unwrap();
        assert_eq!(r.zero_density_events, 1);
        assert!((r.mean_nll_nats * 2.0 - 23.026).abs() < 1e-3);
    }

    #[test]
    fn split_counting() {
        let t = uniform_tree();
        assert_eq!(count_irrelevant_splits(&t, &["noise_1".into()]).unwrap(), 0);
        assert_eq!(leaf_count(&t), 1);
        let b = t.bounds;
        let leaf = || {
            Box::new(TreeNode::Leaf(FittedHistogram {
                bounds: b,
                h: 1,
                counts: vec![1],
                n: 1,
            }))
        };
        let two = CdTree {
            root: TreeNode::Internal {
                split: SplitCondition {
                    feature: 0,
                    kind: SplitKind::Continuous {
                        threshold: 0.0,
                        granularity: 1,
                    },
                },
                left: leaf(),
                right: leaf(),
            },
            ..t
        };
        assert_eq!(
            count_irrelevant_splits(&two, &["noise_1".into()]).unwrap(),
            1
        );
        assert_eq!(leaf_count(&two), 2);
        assert!(count_irrelevant_splits(&two, &["nope".into()]).is_err());
    }

    #[test]
    fn cv_partition_and_aggregates() {
        let f = make_step_dataset(100, 1, 3);
        let a = cross_validate(&f, 5, &FitConfig::default(), 7).unwrap();
        assert_eq!(a.folds.len(), 5);
        assert!(a.folds.iter().all(|r| r.eval.n_test == 20));
        let mean = a.folds.iter().map(|r| r.eval.mean_nll_nats).sum::<f64>() / 5.0;
        assert!((a.mean_nll_nats - mean).abs() < 1e-12);
        let b = cross_validate(&f, 5, &FitConfig::default(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nats_match_bits_on_training_data() {
        // Mean in-sample NLL in nats equals the data term of the score in
        // bits times ln 2 divided by n.
        let f = make_step_dataset(400, 0, 12);
        let (tree, _) = fit(&f, &FitConfig::default()).unwrap();
        let r = evaluate_nll(&tree, &f, DEFAULT_FLOOR_NATS).unwrap();
        assert_eq!(r.zero_density_events, 0);
        let s = total_mdl_score(&tree, &f).unwrap();
        let nats = s.data_nll_bits * std::f64::consts::LN_2 / f.n_rows() as f64;
        assert!((r.mean_nll_nats - nats).abs() < 1e-9);
    }
}
