//! Personalized regression: one linear or logistic model per training
//! sample, estimated jointly.
//!
//! The `p x n` parameter matrix is factorized as `Qᵀ Z` with a shared
//! dictionary `Q` and per-sample loadings `Z`. A distance-matching penalty
//! ties squared distances between loadings to a learned, nonnegatively
//! weighted distance over auxiliary covariates. New samples get the average
//! of the parameters of their nearest training samples under that distance.

pub mod error;
pub mod metric;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod population;
pub mod predictor;
pub mod simulator;

pub use error::{Error, Result};
pub use metric::{FeatureMetric, MetricWeights};
pub use model::{
    assemble_omega, center_of_mass, normalize_dictionary, CovariateColumn, CovariateValue,
    Covariates, Dataset, Factorization, HyperParams, Radius, Task, TrainedModel,
};
pub use optimizer::{fit, fit_traced, TraceRecord};
pub use predictor::{predict_point, rank_neighbors, Prediction};
