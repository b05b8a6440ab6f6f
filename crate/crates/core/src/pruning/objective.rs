//! Expected squared discrepancy between a frozen large network and a
//! candidate small one, expanded into pairwise kernel expectations.

use crate::error::{Error, Result};
use crate::gradients::ParamGradients;
use crate::model::RbfNetwork;
use crate::scalar::Scalar;

use super::distribution::{Bernoulli, InputDistribution};
use super::expectation::{BernoulliTable, Factorized};

/// Negative values down to this magnitude are cancellation noise.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// A large network and input law, with the terms that do not depend on the
/// small network computed once.
#[derive(Debug, Clone)]
pub struct PruningProblem<T> {
    large: RbfNetwork<T>,
    dist: InputDistribution<T>,
    /// Scaled kernel tables of the large centroids (Bernoulli only).
    large_table: Option<BernoulliTable<T>>,
    /// `sum_ij b_i b_j E[k, k, Z_i, Z_j]`
    large_pair_term: T,
    /// `E[k, 0, Z_i]` per large centroid.
    large_single: Vec<T>,
    /// `sum_i b_i E[k, 0, Z_i]`
    large_single_term: T,
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Large,
    Small,
    /// No second kernel (`r = 0`).
    Unit,
}

/// Pair expectations between centroids of the large and one small network.
struct Pairs<'a, T> {
    large: &'a RbfNetwork<T>,
    small: &'a RbfNetwork<T>,
    fast: Option<FastPairs<'a, T>>,
    generic: &'a dyn Factorized<T>,
}

struct FastPairs<'a, T> {
    dist: &'a Bernoulli<T>,
    large: &'a BernoulliTable<T>,
    small: BernoulliTable<T>,
    unit: BernoulliTable<T>,
}

impl<'a, T: Scalar> Pairs<'a, T> {
    fn new(dist: &'a InputDistribution<T>, large: &'a RbfNetwork<T>, large_table: Option<&'a BernoulliTable<T>>, small: &'a RbfNetwork<T>) -> Self {
        let fast = match (dist, large_table) {
            (InputDistribution::Bernoulli(b), Some(lt)) => Some(FastPairs {
                dist: b,
                large: lt,
                small: BernoulliTable::new(small.theta(), small.gamma()),
                unit: BernoulliTable::unit(small.dim()),
            }),
            _ => None,
        };
        Self {
            large,
            small,
            fast,
            generic: dist.factorized(),
        }
    }

    fn net(&self, s: Side) -> &'a RbfNetwork<T> {
        match s {
            Side::Large => self.large,
            _ => self.small,
        }
    }

    fn generic_args(&self, a: Side, i: usize, b: Side, j: usize) -> (T, T, &'a [T], &'a [T]) {
        let (k, u) = (self.net(a).gamma(), self.net(a).centroid(i));
        match b {
            Side::Unit => (k, T::zero(), u, u),
            _ => (k, self.net(b).gamma(), u, self.net(b).centroid(j)),
        }
    }

    fn tables<'s>(fast: &'s FastPairs<'a, T>, s: Side) -> &'s BernoulliTable<T> {
        match s {
            Side::Large => fast.large,
            Side::Small => &fast.small,
            Side::Unit => &fast.unit,
        }
    }

    fn value(&self, a: Side, i: usize, b: Side, j: usize) -> T {
        match &self.fast {
            Some(fast) => {
                let j = if matches!(b, Side::Unit) { 0 } else { j };
                fast.dist.table_value(Self::tables(fast, a), i, Self::tables(fast, b), j)
            }
            None => {
                let (k, r, u, v) = self.generic_args(a, i, b, j);
                self.generic.log_expectation_pair(k, r, u, v).exp()
            }
        }
    }

    /// Partials for the large side are not needed and may be skipped.
    #[allow(clippy::too_many_arguments)]
    fn grad(&self, a: Side, i: usize, b: Side, j: usize, w: &mut [T], du: &mut [T], dv: &mut [T]) -> (T, T, T) {
        match &self.fast {
            Some(fast) => {
                let want = (matches!(a, Side::Small), matches!(b, Side::Small));
                let j = if matches!(b, Side::Unit) { 0 } else { j };
                fast.dist.table_grad(Self::tables(fast, a), i, Self::tables(fast, b), j, want, w, du, dv)
            }
            None => {
                let (k, r, u, v) = self.generic_args(a, i, b, j);
                self.generic.expectation_grad_pair(k, r, u, v, du, dv)
            }
        }
    }
}

impl<T: Scalar> PruningProblem<T> {
    pub fn new(large: RbfNetwork<T>, dist: InputDistribution<T>) -> Result<Self> {
        if dist.dim() != large.dim() {
            return Err(Error::dim("distribution vs network dimension", large.dim(), dist.dim()));
        }
        let large_table = match &dist {
            InputDistribution::Bernoulli(_) => Some(BernoulliTable::new(large.theta(), large.gamma())),
            _ => None,
        };
        let pairs = Pairs::new(&dist, &large, large_table.as_ref(), &large);
        let n = large.num_centroids();
        let two = T::lit(2.0);
        let mut pair = T::zero();
        for i in 0..n {
            let bi = large.beta()[i];
            pair = pair + bi * bi * pairs.value(Side::Large, i, Side::Large, i);
            for j in (i + 1)..n {
                pair = pair + two * bi * large.beta()[j] * pairs.value(Side::Large, i, Side::Large, j);
            }
        }
        let large_single: Vec<T> = (0..n).map(|i| pairs.value(Side::Large, i, Side::Unit, i)).collect();
        let large_single_term = large.beta().iter().zip(&large_single).map(|(&b, &e)| b * e).sum();
        drop(pairs);
        Ok(Self {
            large,
            dist,
            large_table,
            large_pair_term: pair,
            large_single,
            large_single_term,
        })
    }

    pub fn large(&self) -> &RbfNetwork<T> {
        &self.large
    }

    pub fn dist(&self) -> &InputDistribution<T> {
        &self.dist
    }

    /// `E[exp(-k |x - Z_i|^2)]` for every large centroid.
    pub fn large_single_expectations(&self) -> &[T] {
        &self.large_single
    }

    fn check(&self, small: &RbfNetwork<T>) -> Result<()> {
        if small.dim() != self.large.dim() {
            return Err(Error::dim("small vs large network dimension", self.large.dim(), small.dim()));
        }
        Ok(())
    }

    /// Pair term of the large network through the log-domain path.
    #[cfg(test)]
    fn new_generic(large: RbfNetwork<T>, dist: InputDistribution<T>) -> T {
        let pairs = Pairs::new(&dist, &large, None, &large);
        let n = large.num_centroids();
        let mut pair = T::zero();
        for i in 0..n {
            for j in 0..n {
                pair = pair + large.beta()[i] * large.beta()[j] * pairs.value(Side::Large, i, Side::Large, j);
            }
        }
        pair
    }

    fn pairs<'a>(&'a self, small: &'a RbfNetwork<T>) -> Pairs<'a, T> {
        Pairs::new(&self.dist, &self.large, self.large_table.as_ref(), small)
    }

    /// Objective before clamping; may be slightly negative from cancellation.
    pub fn objective_raw(&self, small: &RbfNetwork<T>) -> Result<T> {
        self.check(small)?;
        let pairs = self.pairs(small);
        let two = T::lit(2.0);
        let m = small.num_centroids();
        let offset = self.large.alpha() - small.alpha();

        let mut small_pair = T::zero();
        let mut small_single = T::zero();
        for i in 0..m {
            let bi = small.beta()[i];
            small_pair = small_pair + bi * bi * pairs.value(Side::Small, i, Side::Small, i);
            for j in (i + 1)..m {
                small_pair = small_pair + two * bi * small.beta()[j] * pairs.value(Side::Small, i, Side::Small, j);
            }
            small_single = small_single + bi * pairs.value(Side::Small, i, Side::Unit, i);
        }
        let mut cross = T::zero();
        for (i, &bi) in self.large.beta().iter().enumerate() {
            for (j, &bj) in small.beta().iter().enumerate() {
                cross = cross + bi * bj * pairs.value(Side::Large, i, Side::Small, j);
            }
        }
        Ok(offset * offset + self.large_pair_term + small_pair + two * offset * (self.large_single_term - small_single)
            - two * cross)
    }

    /// `E[(f_large(x) - f_small(x))^2]`, clamped at zero.
    pub fn objective(&self, small: &RbfNetwork<T>) -> Result<T> {
        Ok(self.objective_raw(small)?.max(T::zero()))
    }

    /// Raw objective and its gradient with respect to the small network.
    pub fn objective_gradients(&self, small: &RbfNetwork<T>) -> Result<(T, ParamGradients<T>)> {
        self.check(small)?;
        let pairs = self.pairs(small);
        let two = T::lit(2.0);
        let g = small.gamma();
        let m = small.num_centroids();
        let dim = small.dim();
        let offset = self.large.alpha() - small.alpha();
        let mut grads = ParamGradients::zeros_like(small);
        let mut d_gamma = T::zero();
        let mut du = vec![T::zero(); dim];
        let mut dv = vec![T::zero(); dim];
        let mut w = vec![T::zero(); dim];

        // small-small: every ordered pair, u-partials to i and v-partials to j
        let mut small_pair = T::zero();
        for i in 0..m {
            for j in 0..m {
                let (bi, bj) = (small.beta()[i], small.beta()[j]);
                let (e, ek, er) = pairs.grad(Side::Small, i, Side::Small, j, &mut w, &mut du, &mut dv);
                let wt = bi * bj;
                small_pair = small_pair + wt * e;
                grads.d_beta[i] = grads.d_beta[i] + bj * e;
                grads.d_beta[j] = grads.d_beta[j] + bi * e;
                d_gamma = d_gamma + wt * (ek + er);
                axpy(grads.d_theta.row_mut(i), wt, &du);
                axpy(grads.d_theta.row_mut(j), wt, &dv);
            }
        }

        // single small kernels, weighted by -2 (a - alpha)
        let mut small_single = T::zero();
        let c = -two * offset;
        for i in 0..m {
            let bi = small.beta()[i];
            let (e, ek, _) = pairs.grad(Side::Small, i, Side::Unit, i, &mut w, &mut du, &mut dv);
            small_single = small_single + bi * e;
            grads.d_beta[i] = grads.d_beta[i] + c * e;
            d_gamma = d_gamma + c * bi * ek;
            // r = 0, so dv vanishes
            axpy(grads.d_theta.row_mut(i), c * bi, &du);
        }

        // large-small cross terms, weighted by -2
        let mut cross = T::zero();
        for (i, &bi) in self.large.beta().iter().enumerate() {
            for j in 0..m {
                let bj = small.beta()[j];
                let (e, _, er) = pairs.grad(Side::Large, i, Side::Small, j, &mut w, &mut du, &mut dv);
                cross = cross + bi * bj * e;
                grads.d_beta[j] = grads.d_beta[j] - two * bi * e;
                d_gamma = d_gamma - two * bi * bj * er;
                axpy(grads.d_theta.row_mut(j), -two * bi * bj, &dv);
            }
        }

        let value = offset * offset + self.large_pair_term + small_pair + two * offset * (self.large_single_term - small_single)
            - two * cross;
        grads.d_alpha = -two * offset - two * (self.large_single_term - small_single);
        grads.d_log_gamma = d_gamma * g;
        Ok((value, grads))
    }
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// One-shot objective without reusing the large-network cache.
pub fn pruning_objective<T: Scalar>(large: &RbfNetwork<T>, small: &RbfNetwork<T>, dist: &InputDistribution<T>) -> Result<T> {
    PruningProblem::new(large.clone(), dist.clone())?.objective(small)
}

pub fn pruning_objective_gradients<T: Scalar>(
    large: &RbfNetwork<T>,
    small: &RbfNetwork<T>,
    dist: &InputDistribution<T>,
) -> Result<(T, ParamGradients<T>)> {
    let (v, g) = PruningProblem::new(large.clone(), dist.clone())?.objective_gradients(small)?;
    Ok((v.max(T::zero()), g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::pruning::distribution::{Bernoulli, GaussianMixture, UniformBox};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, k: usize, d: usize) -> RbfNetwork<f64> {
        RbfNetwork::new(
            rng.random_range(-1.0..0.5),
            rng.random_range(-1.0..1.0),
            (0..k).map(|_| rng.random_range(-1.5..1.5)).collect(),
            Matrix::from_vec(k, d, (0..k * d).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap(),
        )
        .unwrap()
    }

    fn dists(d: usize) -> Vec<InputDistribution<f64>> {
        vec![
            GaussianMixture::standard_normal(d).unwrap().into(),
            UniformBox::cube(d, -2.0, 1.5).unwrap().into(),
            Bernoulli::uniform(d, 0.5).unwrap().into(),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn bernoulli_tables_match_log_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..60 {
            let d = rng.random_range(1..=30);
            let q: Vec<f64> = (0..d)
                .map(|t| match (case + t) % 7 {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random_range(0.0..1.0),
                })
                .collect();
            let dist: InputDistribution<f64> = Bernoulli::new(q).unwrap().into();
            let mut large = random_net(&mut rng, 6, d);
            let mut small = random_net(&mut rng, 3, d);
            // sharp kernels push factors through the log-domain fallback
            if case % 3 == 0 {
                let mut p = large.to_param_vec();
                p[0] = rng.random_range(2.0..6.0);
                large.set_param_vec(&p).unwrap();
                let mut p = small.to_param_vec();
                p[0] = rng.random_range(2.0..6.0);
                small.set_param_vec(&p).unwrap();
            }
            let fast = PruningProblem::new(large.clone(), dist.clone()).unwrap();
            let mut slow = fast.clone();
            slow.large_table = None;
            slow.large_pair_term = PruningProblem::new_generic(large, dist);
            assert!(rel(fast.large_pair_term, slow.large_pair_term) < 1e-12, "case {case}");
            let (fv, fg) = fast.objective_gradients(&small).unwrap();
            let (sv, sg) = slow.objective_gradients(&small).unwrap();
            assert!((fv - sv).abs() <= 1e-12 * sv.abs().max(1e-3), "case {case}: {fv} vs {sv}");
            assert!((fast.objective_raw(&small).unwrap() - fv).abs() <= 1e-12 * fv.abs().max(1e-3));
            for (a, b) in fg.to_flat().iter().zip(sg.to_flat()) {
                assert!((a - b).abs() <= 1e-11 * b.abs().max(1e-3), "case {case}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn copy_is_zero_with_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let large = random_net(&mut rng, 5, 3);
        for dist in dists(3) {
            let p = PruningProblem::new(large.clone(), dist.clone()).unwrap();
            let raw = p.objective_raw(&large).unwrap();
            assert!(raw.abs() <= 1e-9, "{} {raw}", dist.kind());
            let (_, g) = p.objective_gradients(&large).unwrap();
            assert!(g.max_abs() <= 1e-8, "{} {}", dist.kind(), g.max_abs());
        }
    }

    #[test]
    fn offsets_only() {
        let large = RbfNetwork::constant(2.0, 3, 2).unwrap();
        let small = RbfNetwork::constant(0.5, 1, 2).unwrap();
        for dist in dists(2) {
            assert_eq!(pruning_objective(&large, &small, &dist).unwrap(), 2.25);
        }
    }

    #[test]
    fn zero_weight_small_has_structural_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let large = random_net(&mut rng, 4, 2);
        let base = random_net(&mut rng, 2, 2);
        let small = RbfNetwork::new(base.log_gamma(), base.alpha(), vec![0.0; 2], base.theta().clone()).unwrap();
        for dist in dists(2) {
            let (_, g) = pruning_objective_gradients(&large, &small, &dist).unwrap();
            assert_eq!(g.d_log_gamma, 0.0);
            assert!(g.d_theta.as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let d = rng.random_range(1..=4);
            let (kl, ks) = (rng.random_range(1..=6), rng.random_range(1..=3));
            let large = random_net(&mut rng, kl, d);
            let small = random_net(&mut rng, ks, d);
            for dist in dists(d) {
                let p = PruningProblem::new(large.clone(), dist).unwrap();
                let (v, g) = p.objective_gradients(&small).unwrap();
                assert!((v - p.objective_raw(&small).unwrap()).abs() < 1e-12);
                let params = small.to_param_vec();
                let analytic = g.to_flat();
                let eval = |q: &[f64]| {
                    let mut s = small.clone();
                    s.set_param_vec(q).unwrap();
                    p.objective_raw(&s).unwrap()
                };
                for j in 0..params.len() {
                    let (mut hi, mut lo) = (params.clone(), params.clone());
                    hi[j] += 1e-6;
                    lo[j] -= 1e-6;
                    let fd = (eval(&hi) - eval(&lo)) / 2e-6;
                    let a = analytic[j];
                    let ok = if a.abs() < 1e-3 { (a - fd).abs() <= 1e-8 } else { (a - fd).abs() <= 1e-5 * a.abs() };
                    assert!(ok, "{} param {j}: {a} vs {fd}", p.dist().kind());
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let large = random_net(&mut rng, 2, 2);
        let small = random_net(&mut rng, 1, 3);
        assert!(pruning_objective(&large, &small, &dists(2)[0]).is_err());
        assert!(PruningProblem::new(large, dists(3).remove(0)).is_err());
    }
}
