//! Core of a weakly supervised multiple instance learning trainer.
//!
//! Slides are bags of patch feature vectors carrying a single binary label.
//! Each training step ranks the model's own predictions inside a batch and
//! turns the bag label into per-instance proxy labels: the top `⌊B·α⌋`
//! instances of a positive bag are labelled tumor, the bottom `⌊B·β⌋`
//! normal, and everything in between is masked out of the loss. Negative
//! bags are fully labelled normal.
//!
//! The crate is `no_std` (with `alloc`) and carries no IO. File formats and
//! the command line live in the `wsmil` crate.
#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(missing_debug_implementations)]

extern crate alloc;

mod error;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod proxy;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{batch_loss, masked_bce, LossResult};
pub use matrix::Matrix;
pub use metrics::{
    evaluate, precision_recall_at, roc_auc, select_threshold, EvalReport, ScoredSlide, SlideAuc,
};
pub use model::{AdamState, Gradients, Mlp};
pub use proxy::{
    assign_proxy_labels, feasible_grid, percentile_subset, BagLabel, FrameworkConfig, ProxyLabels,
};
pub use simulator::{oracle_separability, Cohort, PatchCount, SyntheticSlide, SyntheticSpec};
pub use trainer::{predict, split_for, Bag, EpochStats, Split, TrainLog, TrainSettings, Trainer};
