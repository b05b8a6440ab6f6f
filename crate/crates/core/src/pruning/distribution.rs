use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
}

/// Independent per-dimension Gaussian mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T> {
    dims: Vec<Vec<MixtureComponent<T>>>,
}

impl<T: Scalar> GaussianMixture<T> {
    pub fn new(dims: Vec<Vec<MixtureComponent<T>>>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDistribution("gaussian mixture needs >= 1 dimension".into()));
        }
        for (i, comps) in dims.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::InvalidDistribution(format!("dimension {i} has no mixture components")));
            }
            let mut total = T::zero();
            for c in comps {
                if !(c.weight >= T::zero()) || !c.mean.is_finite() || !(c.variance > T::zero()) || !c.variance.is_finite() {
                    return Err(Error::InvalidDistribution(format!("dimension {i}: invalid component {c:?}")));
                }
                total = total + c.weight;
            }
            if (total - T::one()).abs() > T::lit(1e-12) {
                return Err(Error::InvalidDistribution(format!("dimension {i}: weights sum to {total}, not 1")));
            }
        }
        Ok(Self { dims })
    }

    /// `N(0, 1)` in every dimension.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::normal(dim, T::zero(), T::one())
    }

    pub fn normal(dim: usize, mean: T, variance: T) -> Result<Self> {
        let c = MixtureComponent {
            weight: T::one(),
            mean,
            variance,
        };
        Self::new(vec![vec![c]; dim])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn components(&self, i: usize) -> &[MixtureComponent<T>] {
        &self.dims[i]
    }
}

/// Product of independent uniforms on `(lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> UniformBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDistribution("uniform box needs >= 1 dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::dim("uniform box bounds", lower.len(), upper.len()));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidDistribution(format!("dimension {i}: need a < b, got ({a}, {b})")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `(a, b)` in every dimension.
    pub fn cube(dim: usize, a: T, b: T) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }
}

/// Independent `±1` coordinates with `P(x_i = +1) = q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bernoulli<T> {
    q: Vec<T>,
    log_q: Vec<T>,
    log_1mq: Vec<T>,
}

impl<T: Scalar> Bernoulli<T> {
    pub fn new(q: Vec<T>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidDistribution("bernoulli needs >= 1 dimension".into()));
        }
        if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::InvalidDistribution(format!("dimension {i}: q = {v} outside [0, 1]")));
        }
        let log_q = q.iter().map(|v| v.ln()).collect();
        let log_1mq = q.iter().map(|v| (T::one() - *v).ln()).collect();
        Ok(Self { q, log_q, log_1mq })
    }

    pub fn uniform(dim: usize, q: T) -> Result<Self> {
        Self::new(vec![q; dim])
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub(crate) fn log_q(&self) -> &[T] {
        &self.log_q
    }

    pub(crate) fn log_1mq(&self) -> &[T] {
        &self.log_1mq
    }
}

/// Input law under which the pruning discrepancy is averaged.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution<T> {
    GaussianMixture(GaussianMixture<T>),
    UniformBox(UniformBox<T>),
    Bernoulli(Bernoulli<T>),
}

impl<T: Scalar> InputDistribution<T> {
    pub fn dim(&self) -> usize {
        match self {
            InputDistribution::GaussianMixture(d) => d.dim(),
            InputDistribution::UniformBox(d) => d.dim(),
            InputDistribution::Bernoulli(d) => d.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InputDistribution::GaussianMixture(_) => "gaussian_mixture",
            InputDistribution::UniformBox(_) => "uniform",
            InputDistribution::Bernoulli(_) => "bernoulli",
        }
    }
}

impl<T> From<GaussianMixture<T>> for InputDistribution<T> {
    fn from(d: GaussianMixture<T>) -> Self {
        InputDistribution::GaussianMixture(d)
    }
}

impl<T> From<UniformBox<T>> for InputDistribution<T> {
    fn from(d: UniformBox<T>) -> Self {
        InputDistribution::UniformBox(d)
    }
}

impl<T> From<Bernoulli<T>> for InputDistribution<T> {
    fn from(d: Bernoulli<T>) -> Self {
        InputDistribution::Bernoulli(d)
    }
}
