//! Gaussian RBF network parameterization, prediction and MSE loss.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Row-evaluation strategy for batched predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Single-threaded, in row order. Bit-reproducible.
    #[default]
    Sequential,
    /// Rows spread over the rayon pool.
    Parallel,
}

/// `f(x) = alpha + sum_i beta_i * exp(-gamma * |x - theta_i|^2)` with
/// `gamma = exp(log_gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork<T> {
    log_gamma: T,
    alpha: T,
    beta: Vec<T>,
    theta: Matrix<T>,
}

impl<T: Scalar> RbfNetwork<T> {
    pub fn new(log_gamma: T, alpha: T, beta: Vec<T>, theta: Matrix<T>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one centroid".into()));
        }
        if theta.cols() == 0 {
            return Err(Error::InvalidArgument("network input dimension must be >= 1".into()));
        }
        if theta.rows() != beta.len() {
            return Err(Error::dim("centroid rows vs weights", beta.len(), theta.rows()));
        }
        let net = Self {
            log_gamma,
            alpha,
            beta,
            theta,
        };
        net.check_finite()?;
        Ok(net)
    }

    /// Network with all centroid weights zero, so `f(x) = alpha` everywhere.
    pub fn constant(alpha: T, num_centroids: usize, dim: usize) -> Result<Self> {
        Self::new(
            T::zero(),
            alpha,
            vec![T::zero(); num_centroids],
            Matrix::from_vec(num_centroids, dim, vec![T::zero(); num_centroids * dim])?,
        )
    }

    #[inline]
    pub fn log_gamma(&self) -> T {
        self.log_gamma
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.log_gamma.exp()
    }

    #[inline]
    pub fn alpha(&self) -> T {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    #[inline]
    pub fn theta(&self) -> &Matrix<T> {
        &self.theta
    }

    #[inline]
    pub fn centroid(&self, i: usize) -> &[T] {
        self.theta.row(i)
    }

    #[inline]
    pub fn num_centroids(&self) -> usize {
        self.beta.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.theta.cols()
    }

    /// Number of scalar parameters: `2 + K + K*D`.
    pub fn param_count(&self) -> usize {
        2 + self.beta.len() * (1 + self.dim())
    }

    /// Flatten as `[log_gamma, alpha, beta.., theta (row-major)..]`.
    pub fn to_param_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        out.push(self.log_gamma);
        out.push(self.alpha);
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(self.theta.as_slice());
        out
    }

    /// Inverse of [`RbfNetwork::to_param_vec`]; rejects non-finite values.
    pub fn set_param_vec(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("parameter vector", self.param_count(), params.len()));
        }
        let k = self.beta.len();
        self.log_gamma = params[0];
        self.alpha = params[1];
        self.beta.copy_from_slice(&params[2..2 + k]);
        self.theta.as_mut_slice().copy_from_slice(&params[2 + k..]);
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self.log_gamma.is_finite()
            && self.alpha.is_finite()
            && self.beta.iter().all(|b| b.is_finite())
            && self.theta.as_slice().iter().all(|t| t.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("network parameters".into()))
        }
    }

    /// Evaluate the network at one input point.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::dim("input point", self.dim(), x.len()));
        }
        Ok(self.forward_unchecked(x))
    }

    #[inline]
    pub(crate) fn forward_unchecked(&self, x: &[T]) -> T {
        let gamma = self.gamma();
        let mut acc = self.alpha;
        for (b, c) in self.beta.iter().zip(self.theta.iter_rows()) {
            acc = acc + *b * (-gamma * squared_distance(x, c)).exp();
        }
        acc
    }

    /// Predictions for every row of `inputs`.
    pub fn forward_batch(&self, inputs: &Matrix<T>, mode: EvalMode) -> Result<Vec<T>> {
        if inputs.cols() != self.dim() {
            return Err(Error::dim("input columns", self.dim(), inputs.cols()));
        }
        let out = match mode {
            EvalMode::Sequential => inputs.iter_rows().map(|x| self.forward_unchecked(x)).collect(),
            EvalMode::Parallel => (0..inputs.rows())
                .into_par_iter()
                .map(|i| self.forward_unchecked(inputs.row(i)))
                .collect(),
        };
        Ok(out)
    }

    /// Mean squared error over a data set.
    pub fn mse_loss(&self, data: &Dataset<T>) -> Result<T> {
        if data.dim() != self.dim() {
            return Err(Error::dim("data columns", self.dim(), data.dim()));
        }
        if data.is_empty() {
            return Err(Error::EmptyData("mse over zero rows"));
        }
        let sum = data
            .iter()
            .map(|(x, y)| {
                let r = self.forward_unchecked(x) - y;
                r * r
            })
            .fold(T::zero(), |a, b| a + b);
        Ok(sum / T::from_usize(data.len()).unwrap())
    }
}

/// `sum_d (a_d - b_d)^2`, computed term by term.
#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Input rows paired with real responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    responses: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Build a data set. Zero rows are allowed here (an empty test split is
    /// legal) but every loss routine rejects them.
    pub fn new(inputs: Matrix<T>, responses: Vec<T>) -> Result<Self> {
        if inputs.rows() != responses.len() {
            return Err(Error::dim("responses vs input rows", inputs.rows(), responses.len()));
        }
        if inputs.cols() == 0 {
            return Err(Error::InvalidArgument("data set needs at least one feature".into()));
        }
        if !inputs.as_slice().iter().chain(&responses).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("data set entries".into()));
        }
        Ok(Self { inputs, responses })
    }

    #[inline]
    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    #[inline]
    pub fn responses(&self) -> &[T] {
        &self.responses
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> {
        self.inputs.iter_rows().zip(self.responses.iter().copied())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            responses: indices.iter().map(|&i| self.responses[i]).collect(),
        }
    }
}
