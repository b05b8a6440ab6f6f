//! Closed-form gradients of the regularized minibatch MSE.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{squared_distance, Dataset, RbfNetwork};
use crate::scalar::Scalar;

/// Gradient of a scalar objective with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradients<T> {
    pub d_log_gamma: T,
    pub d_alpha: T,
    pub d_beta: Vec<T>,
    pub d_theta: Matrix<T>,
}

impl<T: Scalar> ParamGradients<T> {
    pub fn zeros_like(net: &RbfNetwork<T>) -> Self {
        let (k, d) = (net.num_centroids(), net.dim());
        Self {
            d_log_gamma: T::zero(),
            d_alpha: T::zero(),
            d_beta: vec![T::zero(); k],
            d_theta: Matrix::from_vec(k, d, vec![T::zero(); k * d]).unwrap(),
        }
    }

    /// Same layout as [`RbfNetwork::to_param_vec`].
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(2 + self.d_beta.len() + self.d_theta.as_slice().len());
        out.push(self.d_log_gamma);
        out.push(self.d_alpha);
        out.extend_from_slice(&self.d_beta);
        out.extend_from_slice(self.d_theta.as_slice());
        out
    }

    pub fn len(&self) -> usize {
        2 + self.d_beta.len() + self.d_theta.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn all_finite(&self) -> bool {
        self.d_log_gamma.is_finite()
            && self.d_alpha.is_finite()
            && self.d_beta.iter().all(|v| v.is_finite())
            && self.d_theta.as_slice().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.to_flat().into_iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// `weight_decay * (log_gamma^2 + alpha^2 + |beta|^2 + |theta|_F^2)`.
pub fn weight_penalty<T: Scalar>(net: &RbfNetwork<T>, weight_decay: T) -> T {
    let sq: T = net.to_param_vec().iter().map(|&p| p * p).sum();
    weight_decay * sq
}

/// Regularized batch MSE and its exact gradient.
pub fn loss_gradients<T: Scalar>(
    net: &RbfNetwork<T>,
    batch: &Dataset<T>,
    weight_decay: T,
) -> Result<(T, ParamGradients<T>)> {
    if batch.dim() != net.dim() {
        return Err(Error::dim("batch columns", net.dim(), batch.dim()));
    }
    let all: Vec<usize> = (0..batch.len()).collect();
    loss_gradients_rows(net, batch, &all, weight_decay)
}

/// [`loss_gradients`] restricted to `rows` of `data`, avoiding a copy per
/// minibatch. Accumulation is sequential in the given row order.
pub(crate) fn loss_gradients_rows<T: Scalar>(
    net: &RbfNetwork<T>,
    data: &Dataset<T>,
    rows: &[usize],
    weight_decay: T,
) -> Result<(T, ParamGradients<T>)> {
    if rows.is_empty() {
        return Err(Error::EmptyData("gradient batch"));
    }
    if weight_decay < T::zero() {
        return Err(Error::InvalidArgument("weight_decay must be >= 0".into()));
    }
    let k = net.num_centroids();
    let gamma = net.gamma();
    let mut grads = ParamGradients::zeros_like(net);
    let mut kernels = vec![T::zero(); k];
    let mut dist2 = vec![T::zero(); k];
    let mut sq_sum = T::zero();
    let two = T::lit(2.0);
    let scale = two / T::from_usize(rows.len()).unwrap();

    for &row in rows {
        let x = data.inputs().row(row);
        let mut f = net.alpha();
        for i in 0..k {
            dist2[i] = squared_distance(x, net.centroid(i));
            kernels[i] = (-gamma * dist2[i]).exp();
            f = f + net.beta()[i] * kernels[i];
        }
        let res = f - data.responses()[row];
        sq_sum = sq_sum + res * res;
        // d(loss)/d(f) for this point
        let g = scale * res;
        grads.d_alpha = grads.d_alpha + g;
        let mut dlg = T::zero();
        for i in 0..k {
            let bk = net.beta()[i] * kernels[i];
            grads.d_beta[i] = grads.d_beta[i] + g * kernels[i];
            dlg = dlg + bk * dist2[i];
            let coeff = g * two * gamma * bk;
            let c = net.centroid(i);
            for (dt, (&xd, &cd)) in grads.d_theta.row_mut(i).iter_mut().zip(x.iter().zip(c)) {
                *dt = *dt + coeff * (xd - cd);
            }
        }
        grads.d_log_gamma = grads.d_log_gamma - g * gamma * dlg;
    }

    let mut loss = sq_sum / T::from_usize(rows.len()).unwrap();
    if weight_decay > T::zero() {
        loss = loss + weight_penalty(net, weight_decay);
        let wd2 = two * weight_decay;
        grads.d_log_gamma = grads.d_log_gamma + wd2 * net.log_gamma();
        grads.d_alpha = grads.d_alpha + wd2 * net.alpha();
        for (d, &b) in grads.d_beta.iter_mut().zip(net.beta()) {
            *d = *d + wd2 * b;
        }
        for (d, &t) in grads.d_theta.as_mut_slice().iter_mut().zip(net.theta().as_slice()) {
            *d = *d + wd2 * t;
        }
    }
    Ok((loss, grads))
}
