//! Distribution-aware pruning of a trained network to fewer centroids.

pub mod distribution;
pub mod expectation;
pub mod objective;
pub mod prune;

pub use distribution::{Bernoulli, GaussianMixture, InputDistribution, MixtureComponent, UniformBox};
pub use expectation::{expectation_bernoulli, expectation_gaussian_mixture, expectation_uniform, ExpectationGradient};
pub use objective::{pruning_objective, pruning_objective_gradients, PruningProblem, NEGATIVE_TOLERANCE};
pub use prune::{prune, prune_problem, restart_init, IterationRecord, PruneConfig, PruneResult, PruneStop, RestartReport};
