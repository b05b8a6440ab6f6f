//! Minibatch training loop, initialization and data utilities.

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::loss_gradients_rows;
use crate::matrix::Matrix;
use crate::model::{Dataset, EvalMode, RbfNetwork};
use crate::optimizer::{adam_step, AdamHyper, AdamState, Decision, ScheduleConfig, ScheduleState};
use crate::scalar::Scalar;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub num_centroids: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_start: f64,
    pub lr_floor: f64,
    pub patience: u32,
    pub grace: u32,
    pub seed: u64,
    pub deterministic: bool,
    /// Hard cap on epochs in case the schedule keeps finding improvements.
    pub max_epochs: usize,
    /// Starting `log_gamma`. The default `0` suits inputs on a unit scale;
    /// high-dimensional `±1` inputs need a smaller bandwidth to start with.
    pub init_log_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let s = ScheduleConfig::training();
        Self {
            num_centroids: 100,
            batch_size: 64,
            weight_decay: 1e-5,
            lr_start: s.lr_start,
            lr_floor: s.lr_floor,
            patience: s.patience,
            grace: s.grace,
            seed: 0,
            deterministic: true,
            max_epochs: 5000,
            init_log_gamma: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            lr_start: self.lr_start,
            lr_floor: self.lr_floor,
            patience: self.patience,
            grace: self.grace,
            decay_factor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_centroids == 0 {
            return Err(Error::InvalidArgument("num_centroids must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
        }
        if !self.init_log_gamma.is_finite() {
            return Err(Error::InvalidArgument("init_log_gamma must be finite".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be >= 1".into()));
        }
        self.schedule().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The learning rate would have dropped below its floor.
    LrFloor,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    pub final_validation_mse: f64,
}

impl FitReport {
    /// Report equality ignoring wall-clock time.
    pub fn same_run(&self, other: &FitReport) -> bool {
        self.epochs == other.epochs
            && self.stop_reason == other.stop_reason
            && self.final_validation_mse == other.final_validation_mse
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random start: `K` training inputs as centroids (without replacement when
/// possible), `beta ~ N(0, 0.01^2)`, `alpha` = mean response, `log_gamma = 0`.
pub fn init_network<T: Scalar>(train: &Dataset<T>, num_centroids: usize, seed: u64) -> Result<RbfNetwork<T>> {
    if num_centroids == 0 {
        return Err(Error::InvalidArgument("num_centroids must be >= 1".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyData("initialization data"));
    }
    let mut rng = rng_for(seed, INIT_STREAM);
    let n = train.len();
    let d = train.dim();
    let small = Normal::new(0.0, 0.01).unwrap();

    let mut theta = Vec::with_capacity(num_centroids * d);
    if n >= num_centroids {
        for i in index::sample(&mut rng, n, num_centroids) {
            theta.extend_from_slice(train.inputs().row(i));
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for &i in &all {
            theta.extend_from_slice(train.inputs().row(i));
        }
        for _ in n..num_centroids {
            let i = rng.random_range(0..n);
            for &v in train.inputs().row(i) {
                theta.push(v + T::lit(small.sample(&mut rng)));
            }
        }
    }
    let beta = (0..num_centroids).map(|_| T::lit(small.sample(&mut rng))).collect();
    let mean = train.responses().iter().copied().sum::<T>() / T::from_usize(n).unwrap();
    RbfNetwork::new(T::zero(), mean, beta, Matrix::from_vec(num_centroids, d, theta)?)
}

/// Train with shuffled minibatch Adam and validation-driven decay. Returns
/// the parameters with the lowest validation MSE.
pub fn train<T: Scalar>(
    train_data: &Dataset<T>,
    val_data: &Dataset<T>,
    config: &TrainConfig,
) -> Result<(RbfNetwork<T>, FitReport)> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::EmptyData("training set"));
    }
    if val_data.is_empty() {
        return Err(Error::EmptyData("validation set"));
    }
    if train_data.dim() != val_data.dim() {
        return Err(Error::dim("validation columns", train_data.dim(), val_data.dim()));
    }
    let started = Instant::now();
    let mode = if config.deterministic {
        EvalMode::Sequential
    } else {
        EvalMode::Parallel
    };
    let mut net = init_network(train_data, config.num_centroids, config.seed)?;
    if config.init_log_gamma != 0.0 {
        let mut p = net.to_param_vec();
        p[0] = T::lit(config.init_log_gamma);
        net.set_param_vec(&p)?;
    }
    let mut shuffle_rng = rng_for(config.seed, SHUFFLE_STREAM);
    let mut schedule = ScheduleState::new(config.schedule())?;
    let mut adam = AdamState::for_network(&net, AdamHyper::with_lr(T::lit(config.lr_start)))?;
    let weight_decay = T::lit(config.weight_decay);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        adam.set_lr(T::lit(schedule.current_lr()));
        let lr = schedule.current_lr();
        let mut weighted_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = loss_gradients_rows(&net, train_data, batch, weight_decay)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(non_finite(epoch, &records));
            }
            weighted_loss += loss.to_f64_lossy() * batch.len() as f64;
            adam_step(&mut net, &grads, &mut adam).map_err(|_| non_finite(epoch, &records))?;
        }
        let val_mse = validation_mse(&net, val_data, mode)?;
        if !val_mse.is_finite() {
            return Err(non_finite(epoch, &records));
        }
        records.push(EpochRecord {
            epoch,
            train_loss: weighted_loss / train_data.len() as f64,
            val_mse,
            lr,
        });
        if schedule.update(val_mse, &net) == Decision::Stop {
            stop_reason = StopReason::LrFloor;
            break;
        }
    }

    let final_validation_mse = schedule.best_metric();
    let best = schedule.into_best_params().unwrap_or(net);
    Ok((
        best,
        FitReport {
            epochs: records,
            stop_reason,
            wall_time_s: started.elapsed().as_secs_f64(),
            final_validation_mse,
        },
    ))
}

fn validation_mse<T: Scalar>(net: &RbfNetwork<T>, val: &Dataset<T>, mode: EvalMode) -> Result<f64> {
    let pred = net.forward_batch(val.inputs(), mode)?;
    let sum: f64 = pred
        .iter()
        .zip(val.responses())
        .map(|(&p, &y)| {
            let r = (p - y).to_f64_lossy();
            r * r
        })
        .sum();
    Ok(sum / val.len() as f64)
}

fn non_finite(epoch: usize, records: &[EpochRecord]) -> Error {
    match records.last() {
        Some(r) => Error::NonFinite(format!(
            "training loss diverged in epoch {epoch}; last good epoch {} (validation mse {})",
            r.epoch, r.val_mse
        )),
        None => Error::NonFinite(format!("training loss diverged in epoch {epoch}; no completed epoch")),
    }
}

/// Target of the one-dimensional toy problem.
pub fn toy_target(x: f64) -> f64 {
    (-x * x).exp() + 0.2 * (4.0 * x).cos()
}

/// `n` points with `x ~ U(-4, 4)` and noise-free `y = exp(-x^2) + 0.2 cos(4x)`.
pub fn make_toy_dataset(n: usize, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("toy data set needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let y = x.iter().map(|&v| toy_target(v)).collect();
    Dataset::new(Matrix::from_vec(n, 1, x)?, y)
}

/// Part sizes for [`split_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    Fractions { train: f64, val: f64, test: f64 },
    /// `test: None` takes every remaining row.
    Counts { train: usize, val: usize, test: Option<usize> },
}

impl SplitSpec {
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let (tr, va, te) = match *self {
            SplitSpec::Fractions { train, val, test } => {
                if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) || train + val + test > 1.0 + 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "split fractions ({train}, {val}, {test}) must be non-negative and sum to <= 1"
                    )));
                }
                let r = |f: f64| (f * n as f64).round() as usize;
                (r(train), r(val), r(test))
            }
            SplitSpec::Counts { train, val, test } => {
                let rest = n.checked_sub(train + val).ok_or_else(|| {
                    Error::InvalidArgument(format!("split counts {train} + {val} exceed {n} rows"))
                })?;
                (train, val, test.unwrap_or(rest))
            }
        };
        if tr + va + te > n {
            return Err(Error::InvalidArgument(format!(
                "split sizes {tr}/{va}/{te} exceed {n} rows"
            )));
        }
        Ok((tr, va, te))
    }
}

/// Disjoint seeded shuffle split into train / validation / test.
pub fn split_dataset<T: Scalar>(data: &Dataset<T>, spec: SplitSpec, seed: u64) -> Result<(Dataset<T>, Dataset<T>, Dataset<T>)> {
    let (tr, va, te) = spec.sizes(data.len())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        data.select(&order[..tr]),
        data.select(&order[tr..tr + va]),
        data.select(&order[tr + va..tr + va + te]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_with_k_equal_n_permutes_inputs() {
        let data = make_toy_dataset(20, 4).unwrap();
        let net = init_network(&data, 20, 9).unwrap();
        let mut a: Vec<f64> = net.theta().as_slice().to_vec();
        let mut b: Vec<f64> = data.inputs().as_slice().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(net.log_gamma(), 0.0);
        let mean = data.responses().iter().sum::<f64>() / 20.0;
        assert_eq!(net.alpha(), mean);
        assert_eq!(net, init_network(&data, 20, 9).unwrap());
        assert_ne!(net, init_network(&data, 20, 10).unwrap());
    }

    #[test]
    fn init_with_more_centroids_than_points() {
        let data = make_toy_dataset(3, 1).unwrap();
        let net = init_network(&data, 7, 2).unwrap();
        assert_eq!(net.num_centroids(), 7);
        assert!(init_network(&data, 0, 2).is_err());
    }

    #[test]
    fn toy_rows_follow_target() {
        let data = make_toy_dataset(1000, 7).unwrap();
        for (x, y) in data.iter() {
            assert!((-4.0..4.0).contains(&x[0]));
            assert_eq!(y, toy_target(x[0]));
        }
        assert_eq!(toy_target(0.0), 1.2);
        assert_eq!(data, make_toy_dataset(1000, 7).unwrap());
        assert!(make_toy_dataset(0, 7).is_err());
    }

    #[test]
    fn split_sizes() {
        let f = SplitSpec::Fractions { train: 0.8, val: 0.2, test: 0.0 };
        assert_eq!(f.sizes(1000).unwrap(), (800, 200, 0));
        let c = SplitSpec::Counts { train: 100_000, val: 10_000, test: None };
        assert_eq!(c.sizes(1_139_281).unwrap(), (100_000, 10_000, 1_029_281));
        assert!(SplitSpec::Counts { train: 5, val: 6, test: None }.sizes(10).is_err());
        assert!(SplitSpec::Fractions { train: 0.8, val: 0.3, test: 0.0 }.sizes(10).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let data = make_toy_dataset(50, 3).unwrap();
        let spec = SplitSpec::Fractions { train: 0.6, val: 0.2, test: 0.2 };
        let (a, b, c) = split_dataset(&data, spec, 5).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (30, 10, 10));
        let mut xs: Vec<f64> = [&a, &b, &c].iter().flat_map(|d| d.inputs().as_slice().to_vec()).collect();
        xs.sort_by(f64::total_cmp);
        let mut all = data.inputs().as_slice().to_vec();
        all.sort_by(f64::total_cmp);
        assert_eq!(xs, all);
        let again = split_dataset(&data, spec, 5).unwrap();
        assert_eq!(again.0, a);
    }

    #[test]
    fn constant_target_is_learned() {
        let x = make_toy_dataset(200, 1).unwrap();
        let data = Dataset::new(x.inputs().clone(), vec![0.7; 200]).unwrap();
        let (tr, va, _) = split_dataset(&data, SplitSpec::Fractions { train: 0.8, val: 0.2, test: 0.0 }, 0).unwrap();
        let cfg = TrainConfig { num_centroids: 5, ..TrainConfig::default() };
        let (net, report) = train(&tr, &va, &cfg).unwrap();
        assert!(report.final_validation_mse <= 1e-6, "{}", report.final_validation_mse);
        assert_eq!(net.mse_loss(&va).unwrap(), report.final_validation_mse);
    }

    #[test]
    fn report_invariants_and_determinism() {
        let data = make_toy_dataset(300, 2).unwrap();
        let (tr, va, _) = split_dataset(&data, SplitSpec::Fractions { train: 0.8, val: 0.2, test: 0.0 }, 1).unwrap();
        let cfg = TrainConfig { num_centroids: 10, max_epochs: 120, seed: 3, ..TrainConfig::default() };
        let (net1, r1) = train(&tr, &va, &cfg).unwrap();
        let (net2, r2) = train(&tr, &va, &cfg).unwrap();
        assert_eq!(net1, net2);
        assert!(r1.same_run(&r2));
        let min = r1.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(r1.final_validation_mse, min);
        assert!(r1.epochs.windows(2).all(|w| w[1].lr <= w[0].lr));
        assert!(r1.epochs.iter().enumerate().all(|(i, e)| e.epoch == i));
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = make_toy_dataset(10, 2).unwrap();
        let empty = Dataset::new(Matrix::empty(1), vec![]).unwrap();
        assert!(train(&data, &empty, &TrainConfig::default()).is_err());
        let wide = Dataset::new(Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap(), vec![0.0]).unwrap();
        assert!(matches!(train(&data, &wide, &TrainConfig::default()), Err(Error::DimensionMismatch { .. })));
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(train(&data, &data, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = make_toy_dataset(64, 2).unwrap();
        let huge = Dataset::new(data.inputs().clone(), (0..64).map(|i| if i % 2 == 0 { 1e300 } else { -1e300 }).collect()).unwrap();
        let cfg = TrainConfig { num_centroids: 4, max_epochs: 5, ..TrainConfig::default() };
        assert!(matches!(train(&huge, &huge, &cfg), Err(Error::NonFinite(_))));
    }
}
