//! Seeded conformance suites comparing closed forms against the oracles.
//! Used by the `verify` command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::gradients::{loss_gradients, weight_penalty};
use crate::matrix::Matrix;
use crate::model::{Dataset, RbfNetwork};
use crate::oracles;
use crate::pruning::{Bernoulli, GaussianMixture, InputDistribution, MixtureComponent, PruningProblem, UniformBox};

pub const BERNOULLI_TOL: f64 = 1e-10;
pub const QUADRATURE_TOL: f64 = 1e-8;
pub const QUADRATURE_REL_TOL: f64 = 1e-10;
pub const OBJECTIVE_TOL: f64 = 1e-9;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const GRADIENT_ABS_TOL: f64 = 1e-8;
/// Components smaller than this are compared in absolute terms.
pub const GRADIENT_SMALL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    /// Largest observed relative error; for gradient suites, the largest
    /// error divided by its allowed tolerance, rescaled to the relative bound.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    fn new(suite: &str, cases: usize, max_rel_error: f64, tolerance: f64) -> Self {
        Self {
            suite: suite.into(),
            cases,
            max_rel_error,
            tolerance,
            passed: max_rel_error <= tolerance,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn vec_in(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Closed-form Bernoulli expectation against the `2^D` enumeration;
/// `D in 1..=12`, `k, r in [0, 5]`, per-dimension `q in [0, 1]`.
pub fn bernoulli_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=12);
        let dist = Bernoulli::new(vec_in(&mut rng, d, 0.0, 1.0))?;
        let (u, v) = (vec_in(&mut rng, d, -1.5, 1.5), vec_in(&mut rng, d, -1.5, 1.5));
        let (k, r) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let closed = crate::pruning::expectation_bernoulli(k, r, &u, &v, &dist)?;
        let exact = oracles::bernoulli_expectation_exhaustive(k, r, &u, &v, &dist)?;
        worst = worst.max(rel_err(closed, exact));
    }
    Ok(SuiteReport::new("bernoulli", cases, worst, BERNOULLI_TOL))
}

pub fn random_mixture(rng: &mut ChaCha8Rng, d: usize) -> Result<GaussianMixture<f64>> {
    let dims = (0..d)
        .map(|_| {
            let l = rng.random_range(1..=3);
            let raw = vec_in(rng, l, 0.05, 1.0);
            let total: f64 = raw.iter().sum();
            raw.iter()
                .map(|w| MixtureComponent {
                    weight: w / total,
                    mean: rng.random_range(-2.0..2.0),
                    variance: rng.random_range(0.1..3.0),
                })
                .collect()
        })
        .collect();
    GaussianMixture::new(dims)
}

pub fn random_box(rng: &mut ChaCha8Rng, d: usize) -> Result<UniformBox<f64>> {
    let lower = vec_in(rng, d, -3.0, 0.0);
    let upper = lower.iter().map(|a| a + rng.random_range(0.5..4.0)).collect();
    UniformBox::new(lower, upper)
}

fn quadrature_suite(name: &str, cases: usize, seed: u64, uniform: bool) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=6);
        let dist: InputDistribution<f64> = if uniform {
            random_box(&mut rng, d)?.into()
        } else {
            random_mixture(&mut rng, d)?.into()
        };
        let (u, v) = (vec_in(&mut rng, d, -3.0, 3.0), vec_in(&mut rng, d, -3.0, 3.0));
        let (k, r) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
        let closed = dist.expectation(k, r, &u, &v)?;
        let reference = oracles::expectation_quadrature(k, r, &u, &v, &dist, 0.0, QUADRATURE_REL_TOL)?;
        worst = worst.max(rel_err(closed, reference));
    }
    Ok(SuiteReport::new(name, cases, worst, QUADRATURE_TOL))
}

/// Uniform-box closed form against factored adaptive quadrature, `D in 1..=6`.
pub fn uniform_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    quadrature_suite("uniform", cases, seed, true)
}

/// Gaussian-mixture closed form against factored adaptive quadrature.
pub fn gaussian_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    quadrature_suite("gaussian", cases, seed, false)
}

pub fn random_network(rng: &mut ChaCha8Rng, k: usize, d: usize) -> RbfNetwork<f64> {
    RbfNetwork::new(
        rng.random_range(-2.0..0.5),
        rng.random_range(-1.0..1.0),
        vec_in(rng, k, -2.0, 2.0),
        Matrix::from_vec(k, d, vec_in(rng, k * d, -1.5, 1.5)).expect("shape"),
    )
    .expect("finite parameters")
}

/// Closed-form objective against the exhaustive outcome average under
/// Bernoulli(0.5); `K <= 8`, `M <= 4`, `D <= 10`.
pub fn objective_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = rng.random_range(1..=10);
        let (k, m) = (rng.random_range(1..=8), rng.random_range(1..=4));
        let large = random_network(&mut rng, k, d);
        let small = random_network(&mut rng, m, d);
        let dist = Bernoulli::uniform(d, 0.5)?;
        let closed = PruningProblem::new(large.clone(), dist.clone().into())?.objective(&small)?;
        let exact = oracles::pruning_objective_exhaustive(&large, &small, &dist)?;
        worst = worst.max(rel_err(closed, exact));
    }
    Ok(SuiteReport::new("objective", cases, worst, OBJECTIVE_TOL))
}

/// Error of one gradient component scaled so that 1.0 means "at tolerance".
fn gradient_violation(analytic: f64, fd: f64) -> f64 {
    let err = (analytic - fd).abs();
    if analytic.abs() < GRADIENT_SMALL {
        err / GRADIENT_ABS_TOL
    } else {
        err / (GRADIENT_REL_TOL * analytic.abs())
    }
}

fn central_difference(params: &[f64], j: usize, f: &impl Fn(&[f64]) -> f64) -> f64 {
    let (mut hi, mut lo) = (params.to_vec(), params.to_vec());
    hi[j] += FD_STEP;
    lo[j] -= FD_STEP;
    (f(&hi) - f(&lo)) / (2.0 * FD_STEP)
}

fn with_params(template: &RbfNetwork<f64>, p: &[f64]) -> RbfNetwork<f64> {
    let mut net = template.clone();
    net.set_param_vec(p).expect("finite perturbation");
    net
}

/// Training-loss gradients against central differences; returns the worst
/// violation ratio (pass iff <= 1).
pub fn training_gradient_violation(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (k, d, n) = (rng.random_range(1..=8), rng.random_range(1..=5), rng.random_range(1..=16));
        let net = random_network(&mut rng, k, d);
        let data = Dataset::new(Matrix::from_vec(n, d, vec_in(&mut rng, n * d, -1.5, 1.5))?, vec_in(&mut rng, n, -1.0, 1.0))?;
        let wd = 1e-5;
        let (_, grads) = loss_gradients(&net, &data, wd)?;
        let loss = |p: &[f64]| {
            let s = with_params(&net, p);
            s.mse_loss(&data).unwrap() + weight_penalty(&s, wd)
        };
        let p = net.to_param_vec();
        for (j, a) in grads.to_flat().into_iter().enumerate() {
            worst = worst.max(gradient_violation(a, central_difference(&p, j, &loss)));
        }
    }
    Ok(worst)
}

/// Pruning-objective gradients against central differences, cycling through
/// the three distribution families.
pub fn pruning_gradient_violation(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = rng.random_range(1..=5);
        let (k, m) = (rng.random_range(1..=8), rng.random_range(1..=4));
        let large = random_network(&mut rng, k, d);
        let small = random_network(&mut rng, m, d);
        let dist: InputDistribution<f64> = match case % 3 {
            0 => random_mixture(&mut rng, d)?.into(),
            1 => random_box(&mut rng, d)?.into(),
            _ => Bernoulli::new(vec_in(&mut rng, d, 0.0, 1.0))?.into(),
        };
        let problem = PruningProblem::new(large, dist)?;
        let (_, grads) = problem.objective_gradients(&small)?;
        let obj = |p: &[f64]| problem.objective_raw(&with_params(&small, p)).unwrap();
        let p = small.to_param_vec();
        for (j, a) in grads.to_flat().into_iter().enumerate() {
            worst = worst.max(gradient_violation(a, central_difference(&p, j, &obj)));
        }
    }
    Ok(worst)
}

pub fn gradient_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let worst = training_gradient_violation(cases, seed)?.max(pruning_gradient_violation(cases, seed.wrapping_add(1))?);
    Ok(SuiteReport::new("gradients", cases, worst * GRADIENT_REL_TOL, GRADIENT_REL_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bernoulli,
    Uniform,
    Gaussian,
    Objective,
    Gradients,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Bernoulli, Suite::Uniform, Suite::Gaussian, Suite::Objective, Suite::Gradients];

    pub fn run(self, seed: u64) -> Result<SuiteReport> {
        match self {
            Suite::Bernoulli => bernoulli_suite(1000, seed),
            Suite::Uniform => uniform_suite(500, seed),
            Suite::Gaussian => gaussian_suite(500, seed),
            Suite::Objective => objective_suite(200, seed),
            Suite::Gradients => gradient_suite(100, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for report in [
            bernoulli_suite(50, 1).unwrap(),
            uniform_suite(30, 1).unwrap(),
            gaussian_suite(30, 1).unwrap(),
            objective_suite(20, 1).unwrap(),
            gradient_suite(10, 1).unwrap(),
        ] {
            assert!(report.passed, "{report:?}");
        }
    }
}
