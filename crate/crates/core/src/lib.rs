//! Training and distribution-aware pruning of Gaussian radial basis function
//! networks.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! `*64` aliases below fix the scalar to `f64`, which is what the oracle
//! tolerances, file formats and the CLI use.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformance;
pub mod error;
pub mod gradients;
pub mod io;
pub mod matrix;
pub mod model;
pub mod optimizer;
pub mod oracles;
pub mod pruning;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use gradients::{loss_gradients, ParamGradients};
pub use matrix::Matrix;
pub use model::{Dataset, EvalMode, RbfNetwork};
pub use optimizer::{adam_step, AdamHyper, AdamState, Decision, ScheduleConfig, ScheduleState};
pub use pruning::{
    prune, pruning_objective, pruning_objective_gradients, Bernoulli, GaussianMixture, InputDistribution, PruneConfig,
    PruneResult, PruningProblem, UniformBox,
};
pub use scalar::Scalar;
pub use training::{init_network, make_toy_dataset, split_dataset, train, FitReport, SplitSpec, TrainConfig};

pub type RbfNetwork64 = RbfNetwork<f64>;
pub type RbfNetwork32 = RbfNetwork<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Matrix64 = Matrix<f64>;
pub type InputDistribution64 = InputDistribution<f64>;
pub type ParamGradients64 = ParamGradients<f64>;
pub type PruningProblem64 = PruningProblem<f64>;
