//! Multivariate time-series shapelets learned jointly with per-channel masks
//! and a linear softmax classifier.
//!
//! The pipeline is:
//!
//! * [`dataset`]: JSON-lines ingestion, label encoding, normalization, folds.
//! * [`synthgen`]: a planted-pattern benchmark where only two channels carry
//!   class information.
//! * [`distance`]: masked sliding-window minimum distance between a shapelet
//!   and a series.
//! * [`model`]: distances to scores to softmax probabilities, plus the loss.
//! * [`gradients`]: analytic gradients and a finite-difference oracle.
//! * [`trainer`]: per-instance AdaGrad training.
//! * [`baselines`]: the unmasked learner and 1-NN dependent DTW.
//! * [`eval`]: error rates, grid search, mask exports.
//!
//! Data-parallel loops (per-shapelet distances, per-instance evaluation,
//! DTW scans, grid cells) go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod baselines;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gradients;
pub mod model;
pub mod rng;
pub mod synthgen;
pub mod trainer;

pub use dataset::{Instance, Label, OneHotTargets, TimeSeriesDataset};
pub use distance::{Activation, DistanceResult};
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{ForwardResult, Params, ShapeletModel};
pub use trainer::{MaskInit, MetricsLog, TrainConfig};
