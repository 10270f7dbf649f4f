//! Random forest distance (RFD).
//!
//! A learned distance function built from a random forest that classifies
//! point pairs as similar (0) or dissimilar (1). Each pair is mapped to the
//! element-wise absolute difference of its endpoints, optionally followed by
//! their midpoint, so the learned distance can vary across the feature space.
//! The distance between two points is the fraction of trees voting
//! "dissimilar" for the mapped pair.
//!
//! The crate also carries the evaluation harness used to benchmark the
//! distance: k-NN classification sweeps, fixed-k error, mean-rank tables and
//! retrieval precision, together with the Euclidean and covariance-based
//! Mahalanobis baselines.
//!
//! ```
//! use rfd_core::{constraints, dataset, forest::ForestParams, metric::DistanceModel};
//!
//! let data = dataset::swiss_roll(90, 0.0, 7).unwrap();
//! let pairs = constraints::sample_per_class(&data, 50, 50, 7).unwrap();
//! let params = ForestParams { tree_count: 20, seed: 7, ..Default::default() };
//! let model = DistanceModel::train_rfd(&pairs, &data, true, &params).unwrap();
//! let d = model.distance(data.row(0), data.row(1)).unwrap();
//! assert!((0.0..=1.0).contains(&d));
//! ```

pub mod constraints;
pub mod dataset;
mod error;
pub mod eval;
pub mod forest;
pub mod metric;
pub mod pairmap;
pub mod seed;

pub use constraints::ConstraintSet;
pub use dataset::{Dataset, FoldAssignment, LabelColumn};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, ModelFactory};
pub use forest::{Forest, ForestParams};
pub use metric::{DistanceMatrix, DistanceModel, Points};
pub use pairmap::PairFeature;

/// Version string embedded in every artifact the crate writes.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
