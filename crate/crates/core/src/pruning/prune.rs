//! Restart-based minimization of the pruning objective.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::RbfNetwork;
use crate::optimizer::{adam_step, AdamHyper, AdamState, Decision, ScheduleConfig, ScheduleState};
use crate::scalar::Scalar;

use super::distribution::InputDistribution;
use super::objective::PruningProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    pub target_centroids: usize,
    pub restarts: usize,
    pub lr_start: f64,
    pub lr_floor: f64,
    pub patience: u32,
    pub grace: u32,
    pub seed: u64,
    /// Iteration cap per restart.
    pub max_iterations: usize,
    /// Run restarts on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for PruneConfig {
    fn default() -> Self {
        let s = ScheduleConfig::pruning();
        Self {
            target_centroids: 16,
            restarts: 10,
            lr_start: s.lr_start,
            lr_floor: s.lr_floor,
            patience: s.patience,
            grace: s.grace,
            seed: 0,
            max_iterations: 20_000,
            parallel: false,
        }
    }
}

impl PruneConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            lr_start: self.lr_start,
            lr_floor: self.lr_floor,
            patience: self.patience,
            grace: self.grace,
            decay_factor: 0.1,
        }
    }

    fn validate(&self, large_centroids: usize) -> Result<()> {
        if self.target_centroids == 0 || self.target_centroids > large_centroids {
            return Err(Error::InvalidArgument(format!(
                "target_centroids must lie in 1..={large_centroids}, got {}",
                self.target_centroids
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        self.schedule().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStop {
    LrFloor,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub restart: usize,
    pub initial_objective: f64,
    /// Best objective reached; NaN for failed restarts.
    pub final_objective: f64,
    pub iterations: usize,
    pub stop_reason: PruneStop,
    pub failed: bool,
    #[serde(skip)]
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct PruneResult<T> {
    pub small: RbfNetwork<T>,
    pub objective: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

impl<T> PruneResult<T> {
    /// Root of the best objective, i.e. an RMS prediction discrepancy.
    pub fn sqrt_objective(&self) -> f64 {
        self.objective.sqrt()
    }
}

/// Initial small network for one restart: `M` large centroids drawn without
/// replacement with their weights, plus the large offset and sharpness.
pub fn restart_init<T: Scalar>(large: &RbfNetwork<T>, target: usize, seed: u64, restart: usize) -> Result<RbfNetwork<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let picks = index::sample(&mut rng, large.num_centroids(), target).into_vec();
    let beta = picks.iter().map(|&i| large.beta()[i]).collect();
    let theta = large.theta().select_rows(&picks);
    RbfNetwork::new(large.log_gamma(), large.alpha(), beta, Matrix::from_vec(target, large.dim(), theta.as_slice().to_vec())?)
}

fn run_restart<T: Scalar>(problem: &PruningProblem<T>, config: &PruneConfig, restart: usize) -> (Option<RbfNetwork<T>>, RestartReport) {
    let mut report = RestartReport {
        restart,
        initial_objective: f64::NAN,
        final_objective: f64::NAN,
        iterations: 0,
        stop_reason: PruneStop::MaxIterations,
        failed: false,
        history: Vec::new(),
    };
    let fail = |mut r: RestartReport| {
        r.failed = true;
        r.stop_reason = PruneStop::NonFinite;
        r.final_objective = f64::NAN;
        (None, r)
    };
    let mut small = match restart_init(problem.large(), config.target_centroids, config.seed, restart) {
        Ok(s) => s,
        Err(_) => return fail(report),
    };
    let mut schedule = ScheduleState::new(config.schedule()).expect("validated schedule");
    let mut adam = AdamState::for_network(&small, AdamHyper::with_lr(T::lit(config.lr_start))).expect("valid Adam");

    for iteration in 0..config.max_iterations {
        let (value, grads) = match problem.objective_gradients(&small) {
            Ok(v) => v,
            Err(_) => return fail(report),
        };
        let value = value.to_f64_lossy();
        if !value.is_finite() || !grads.all_finite() {
            return fail(report);
        }
        if iteration == 0 {
            report.initial_objective = value.max(0.0);
        }
        let lr = schedule.current_lr();
        let decision = schedule.update(value, &small);
        report.iterations = iteration + 1;
        report.history.push(IterationRecord {
            iteration,
            objective: value,
            best_objective: schedule.best_metric(),
            lr,
        });
        if decision == Decision::Stop {
            report.stop_reason = PruneStop::LrFloor;
            break;
        }
        adam.set_lr(T::lit(schedule.current_lr()));
        if adam_step(&mut small, &grads, &mut adam).is_err() {
            return fail(report);
        }
    }
    report.final_objective = schedule.best_metric().max(0.0);
    (schedule.into_best_params(), report)
}

/// Fit `config.restarts` small networks and keep the one with the lowest
/// objective. Ties go to the lowest restart index.
pub fn prune<T: Scalar>(large: &RbfNetwork<T>, dist: &InputDistribution<T>, config: &PruneConfig) -> Result<PruneResult<T>> {
    config.validate(large.num_centroids())?;
    let problem = PruningProblem::new(large.clone(), dist.clone())?;
    prune_problem(&problem, config)
}

/// [`prune`] against an already cached problem.
pub fn prune_problem<T: Scalar>(problem: &PruningProblem<T>, config: &PruneConfig) -> Result<PruneResult<T>> {
    config.validate(problem.large().num_centroids())?;
    let outcomes: Vec<_> = if config.parallel {
        (0..config.restarts).into_par_iter().map(|r| run_restart(problem, config, r)).collect()
    } else {
        (0..config.restarts).map(|r| run_restart(problem, config, r)).collect()
    };
    let mut best: Option<(usize, RbfNetwork<T>, f64)> = None;
    let mut reports = Vec::with_capacity(outcomes.len());
    for (net, report) in outcomes {
        if let (Some(net), false) = (net, report.failed) {
            if best.as_ref().is_none_or(|b| report.final_objective < b.2) {
                best = Some((report.restart, net, report.final_objective));
            }
        }
        reports.push(report);
    }
    let (best_restart, small, objective) =
        best.ok_or_else(|| Error::NonFinite("every pruning restart produced a non-finite objective".into()))?;
    Ok(PruneResult {
        small,
        objective,
        best_restart,
        restarts: reports,
    })
}
