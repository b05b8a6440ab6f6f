//! Adam with bias correction and the validation-driven learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::ParamGradients;
use crate::model::RbfNetwork;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamHyper<T> {
    pub fn with_lr(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |b: T| b >= T::zero() && b < T::one();
        if !(self.lr > T::zero()) || !unit(self.beta1) || !unit(self.beta2) || !(self.epsilon > T::zero()) {
            return Err(Error::InvalidArgument(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step_count: u64,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub hyper: AdamHyper<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(num_params: usize, hyper: AdamHyper<T>) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            step_count: 0,
            first_moment: vec![T::zero(); num_params],
            second_moment: vec![T::zero(); num_params],
            hyper,
        })
    }

    pub fn for_network(net: &RbfNetwork<T>, hyper: AdamHyper<T>) -> Result<Self> {
        Self::new(net.param_count(), hyper)
    }

    pub fn set_lr(&mut self, lr: T) {
        self.hyper.lr = lr;
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step_slice(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n {
            return Err(Error::dim("Adam parameters", n, params.len()));
        }
        if grads.len() != n {
            return Err(Error::dim("Adam gradients", n, grads.len()));
        }
        self.hyper.validate()?;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step_count += 1;
        let t = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let bc1 = T::one() - beta1.powi(t);
        let bc2 = T::one() - beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = beta1 * *m + (T::one() - beta1) * g;
            *v = beta2 * *v + (T::one() - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Apply one Adam step to every parameter of `net`.
pub fn adam_step<T: Scalar>(net: &mut RbfNetwork<T>, grads: &ParamGradients<T>, state: &mut AdamState<T>) -> Result<()> {
    if grads.d_beta.len() != net.num_centroids() || grads.d_theta.cols() != net.dim() {
        return Err(Error::dim("gradient shape", net.param_count(), grads.len()));
    }
    let mut params = net.to_param_vec();
    state.step_slice(&mut params, &grads.to_flat())?;
    net.set_param_vec(&params)
}

/// Learning-rate schedule hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lr_start: f64,
    pub lr_floor: f64,
    pub patience: u32,
    pub grace: u32,
    pub decay_factor: f64,
}

impl ScheduleConfig {
    /// Network training: start 1e-2, stop once a decay would go below 1e-4.
    pub fn training() -> Self {
        Self {
            lr_start: 1e-2,
            lr_floor: 1e-4,
            patience: 10,
            grace: 10,
            decay_factor: 0.1,
        }
    }

    /// Pruning: start 1e-3, stop after a full patience window at 1e-5.
    pub fn pruning() -> Self {
        Self {
            lr_start: 1e-3,
            lr_floor: 1e-5,
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_floor > 0.0) || !(self.lr_start >= self.lr_floor) || !self.lr_start.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "schedule needs lr_start >= lr_floor > 0 (got {} / {})",
                self.lr_start, self.lr_floor
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::InvalidArgument("decay_factor must lie in (0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Continue,
    Reduce,
    Stop,
}

/// Patience counter with global-best tracking and a grace window after
/// every decay.
#[derive(Debug, Clone)]
pub struct ScheduleState<T> {
    config: ScheduleConfig,
    reductions: i32,
    current_lr: f64,
    best_metric: f64,
    epochs_since_improvement: u32,
    grace_remaining: u32,
    non_finite_metrics: u32,
    best_params_snapshot: Option<RbfNetwork<T>>,
}

impl<T: Scalar> ScheduleState<T> {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            reductions: 0,
            current_lr: config.lr_start,
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
            grace_remaining: 0,
            non_finite_metrics: 0,
            best_params_snapshot: None,
        })
    }

    pub fn current_lr(&self) -> f64 {
        self.current_lr
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    pub fn epochs_since_improvement(&self) -> u32 {
        self.epochs_since_improvement
    }

    pub fn grace_remaining(&self) -> u32 {
        self.grace_remaining
    }

    /// Number of metrics that were NaN or infinite.
    pub fn non_finite_metrics(&self) -> u32 {
        self.non_finite_metrics
    }

    pub fn best_params(&self) -> Option<&RbfNetwork<T>> {
        self.best_params_snapshot.as_ref()
    }

    pub fn into_best_params(self) -> Option<RbfNetwork<T>> {
        self.best_params_snapshot
    }

    /// Feed the metric of `params`. Improvement is strict `<` against the
    /// best value seen so far; non-finite metrics never improve.
    pub fn update(&mut self, metric: f64, params: &RbfNetwork<T>) -> Decision {
        if !metric.is_finite() {
            self.non_finite_metrics += 1;
        }
        if metric.is_finite() && metric < self.best_metric {
            self.best_metric = metric;
            self.best_params_snapshot = Some(params.clone());
            self.epochs_since_improvement = 0;
            return Decision::Continue;
        }
        if self.grace_remaining > 0 {
            self.grace_remaining -= 1;
            return Decision::Continue;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement < self.config.patience {
            return Decision::Continue;
        }
        self.epochs_since_improvement = 0;
        let next = self.config.lr_start * self.config.decay_factor.powi(self.reductions + 1);
        // relative slack so that 1e-2 * 0.1^2 still counts as 1e-4
        if next < self.config.lr_floor * (1.0 - 1e-9) {
            return Decision::Stop;
        }
        self.reductions += 1;
        self.current_lr = next;
        self.grace_remaining = self.config.grace;
        Decision::Reduce
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn dummy(v: f64) -> RbfNetwork<f64> {
        RbfNetwork::new(0.0, v, vec![0.0], Matrix::from_vec(1, 1, vec![0.0]).unwrap()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3, AdamHyper::with_lr(0.1)).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        st.step_slice(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut st = AdamState::new(1, AdamHyper::with_lr(0.1)).unwrap();
        let mut p = vec![0.0f64];
        st.step_slice(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn matches_reference_loop() {
        // independent transcription of the textbook recursion
        let (lr, b1, b2, eps) = (0.01f64, 0.9f64, 0.999f64, 1e-8f64);
        let g = [0.3f64, -1.7];
        let mut reference = [1.0f64, 2.0];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        let mut st = AdamState::new(2, AdamHyper::with_lr(lr)).unwrap();
        let mut p = vec![1.0, 2.0];
        for t in 1..=1000 {
            for j in 0..2 {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / (1.0 - b1.powi(t));
                let vh = v[j] / (1.0 - b2.powi(t));
                reference[j] -= lr * mh / (vh.sqrt() + eps);
            }
            st.step_slice(&mut p, &g).unwrap();
            for j in 0..2 {
                assert!((p[j] - reference[j]).abs() <= 1e-12 * reference[j].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn shape_and_hyper_errors() {
        assert!(AdamState::<f64>::new(1, AdamHyper::with_lr(0.0)).is_err());
        let mut st = AdamState::new(2, AdamHyper::with_lr(0.1)).unwrap();
        assert!(st.step_slice(&mut [0.0], &[0.0]).is_err());
        assert!(st.step_slice(&mut [0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn adam_on_network() {
        let mut net = dummy(0.0);
        let mut g = ParamGradients::zeros_like(&net);
        g.d_alpha = 1.0;
        let mut st = AdamState::for_network(&net, AdamHyper::with_lr(0.1)).unwrap();
        adam_step(&mut net, &g, &mut st).unwrap();
        assert!((net.alpha() + 0.1).abs() < 1e-8);
        assert_eq!(net.log_gamma(), 0.0);
    }

    #[test]
    fn decreasing_metrics_never_reduce() {
        let mut s = ScheduleState::new(ScheduleConfig::training()).unwrap();
        for e in 0..50 {
            assert_eq!(s.update(100.0 - e as f64, &dummy(e as f64)), Decision::Continue);
        }
        assert_eq!(s.current_lr(), 1e-2);
        assert_eq!(s.best_params().unwrap().alpha(), 49.0);
    }

    #[test]
    fn constant_metric_two_reductions_then_stop() {
        let mut s = ScheduleState::new(ScheduleConfig::training()).unwrap();
        let net = dummy(0.0);
        let mut events = vec![];
        for epoch in 1..=200 {
            match s.update(1.0, &net) {
                Decision::Continue => {}
                d => events.push((epoch, d, s.current_lr())),
            }
            if events.last().is_some_and(|e| e.1 == Decision::Stop) {
                break;
            }
        }
        // epoch 1 improves on +inf; 10 stale epochs; 10 grace + 10 stale; ...
        assert_eq!(events.len(), 3);
        assert_eq!((events[0].0, events[0].1), (11, Decision::Reduce));
        assert!((events[0].2 - 1e-3).abs() < 1e-18);
        assert_eq!((events[1].0, events[1].1), (31, Decision::Reduce));
        assert!((events[1].2 - 1e-4).abs() < 1e-18);
        assert_eq!((events[2].0, events[2].1), (51, Decision::Stop));
        assert!((s.current_lr() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn improvement_every_ninth_epoch_never_reduces() {
        let mut s = ScheduleState::new(ScheduleConfig::training()).unwrap();
        let net = dummy(0.0);
        let mut best = 10.0;
        for epoch in 0..500 {
            let metric = if epoch % 9 == 0 {
                best -= 0.01;
                best
            } else {
                50.0
            };
            assert_eq!(s.update(metric, &net), Decision::Continue);
        }
        assert_eq!(s.current_lr(), 1e-2);
    }

    #[test]
    fn nan_is_no_improvement() {
        let mut s = ScheduleState::new(ScheduleConfig::training()).unwrap();
        s.update(1.0, &dummy(1.0));
        s.update(f64::NAN, &dummy(2.0));
        assert_eq!(s.best_metric(), 1.0);
        assert_eq!(s.epochs_since_improvement(), 1);
        assert_eq!(s.non_finite_metrics(), 1);
    }

    // Plain re-implementation used as the state-machine oracle.
    fn reference_run(cfg: ScheduleConfig, metrics: &[f64]) -> Vec<(Decision, f64)> {
        let (mut best, mut stale, mut grace, mut lr, mut j) = (f64::INFINITY, 0u32, 0u32, cfg.lr_start, 0);
        let mut out = vec![];
        for &m in metrics {
            let d = if m < best {
                best = m;
                stale = 0;
                Decision::Continue
            } else if grace > 0 {
                grace -= 1;
                Decision::Continue
            } else {
                stale += 1;
                if stale == cfg.patience {
                    stale = 0;
                    let next = cfg.lr_start * cfg.decay_factor.powi(j + 1);
                    if next < cfg.lr_floor * (1.0 - 1e-9) {
                        Decision::Stop
                    } else {
                        j += 1;
                        lr = next;
                        grace = cfg.grace;
                        Decision::Reduce
                    }
                } else {
                    Decision::Continue
                }
            };
            out.push((d, lr));
            if d == Decision::Stop {
                break;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn schedule_matches_reference(metrics in prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5)], 1..400),
                                      patience in 1u32..12, grace in 0u32..12) {
            let cfg = ScheduleConfig { patience, grace, ..ScheduleConfig::training() };
            let expected = reference_run(cfg, &metrics);
            let mut s = ScheduleState::new(cfg).unwrap();
            let mut best_seen = f64::INFINITY;
            let mut last_lr = cfg.lr_start;
            for (i, &m) in metrics.iter().enumerate() {
                let d = s.update(m, &dummy(m));
                prop_assert_eq!((d, s.current_lr()), expected[i]);
                prop_assert!(s.current_lr() <= last_lr);
                last_lr = s.current_lr();
                best_seen = best_seen.min(m);
                prop_assert_eq!(s.best_metric(), best_seen);
                prop_assert_eq!(s.best_params().unwrap().alpha(), best_seen);
                if d == Decision::Stop {
                    break;
                }
            }
        }
    }
}
