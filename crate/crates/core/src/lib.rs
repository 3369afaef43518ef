//! Model advisor for cardinality estimation.
//!
//! Given a tabular dataset and a pair of metric weights (accuracy vs.
//! inference efficiency), the advisor picks the most suitable estimator from
//! a candidate pool without training anything online. The pipeline:
//!
//! 1. [`datagen`] — synthesize datasets with controlled skew, column
//!    correlation, and join correlation.
//! 2. [`workload`] — generate select-project-join queries and compute exact
//!    cardinalities with a ground-truth oracle.
//! 3. [`estimators`] — train the candidate pool on each dataset and label it
//!    with per-estimator Q-error and latency means.
//! 4. [`featurizer`] — extract per-table statistics into a feature graph
//!    (tables as vertices, PK-FK joins as weighted edges).
//! 5. [`encoder`] — embed feature graphs with a GIN network.
//! 6. [`dml`] — train the encoder with a weighted contrastive loss so that
//!    datasets with similar estimator-performance profiles embed close.
//! 7. [`advisor`] — KNN recommendation over the embedded corpus, plus drift
//!    detection and online adaptation for out-of-distribution datasets.
//! 8. [`incremental`] — cross-validation feedback collection and Mixup-based
//!    augmentation to retrain the encoder without labeling new datasets.
//! 9. [`baselines`] — alternative selection strategies and the evaluation
//!    harness comparing them.

pub mod advisor;
pub mod baselines;
pub mod corpus;
pub mod datagen;
pub mod dml;
pub mod encoder;
pub mod error;
pub mod estimators;
pub mod featurizer;
pub mod incremental;
pub mod linalg;
#[cfg(test)]
pub(crate) mod testkit;
pub mod workload;

pub use error::{Error, Result};
