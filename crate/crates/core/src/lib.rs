//! Conditional density trees.
//!
//! A conditional density tree is a binary decision tree over the features
//! whose leaves each hold an equal-width histogram of the target. Trees are
//! grown greedily to minimize a two-part MDL score: the normalized maximum
//! likelihood code length of the target given the tree, plus the bits
//! needed to describe the tree. No regularization parameter is tuned.
//!
//! ```no_run
//! use cdtree::{data::make_step_dataset, fit, log_density, FitConfig};
//!
//! let frame = make_step_dataset(2000, 0, 1);
//! let (tree, trace) = fit(&frame, &FitConfig::default()).unwrap();
//! println!("{} leaves, {:.1} bits", tree.leaf_count(), trace.final_total_bits());
//! println!("{}", log_density(&tree, &[0.2], 0.3).unwrap());
//! ```

pub mod codes;
pub mod data;
pub mod error;
pub mod eval;
pub mod histogram;
pub mod inference;
pub mod learner;
pub mod model_file;
pub mod par;
pub mod splitter;
pub mod types;

pub use error::{Error, Result};
pub use histogram::LeafScore;
pub use inference::{
    density_grid, leaf_rules, log_density, predict_log_densities, route, to_dot, LeafRule,
};
pub use learner::{fit, model_code_length_bits, total_mdl_score, FitTrace};
pub use model_file::ModelFile;
pub use par::Execution;
pub use types::{
    validate, Bounds, CdTree, Column, ColumnKind, DataFrame, FitConfig, FittedHistogram, LeafId,
    MdlScore, Schema, SplitCondition, SplitKind, TreeNode,
};
