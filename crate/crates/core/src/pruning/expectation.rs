//! Closed forms for `E[exp(-k |x - u|^2 - r |x - v|^2)]` under each input law.
//!
//! Every family factorizes over dimensions, so each is implemented as a sum
//! of per-dimension log factors. Working in the log domain keeps the Bernoulli
//! case finite at high dimension, where the leading exponential underflows
//! while the product of bracket terms overflows.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{erf_diff, log_add_exp, Scalar};

use super::distribution::{Bernoulli, GaussianMixture, InputDistribution, UniformBox};

/// Below this `k + r` the uniform factor is replaced by its limit.
const UNIFORM_LIMIT: f64 = 1e-12;

/// Log factor of one dimension and its partials `(k, r, u_i, v_i)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FactorGrad<T> {
    pub log: T,
    pub dk: T,
    pub dr: T,
    pub du: T,
    pub dv: T,
}

/// A product-form input law.
pub(crate) trait Factorized<T: Scalar> {
    fn dims(&self) -> usize;
    fn log_factor(&self, i: usize, k: T, r: T, u: T, v: T) -> T;
    fn log_factor_grad(&self, i: usize, k: T, r: T, u: T, v: T) -> FactorGrad<T>;

    /// Summed log factors; one dynamic call per pair rather than per dimension.
    fn log_expectation_pair(&self, k: T, r: T, u: &[T], v: &[T]) -> T {
        log_expectation_unchecked(self, k, r, u, v)
    }

    fn expectation_grad_pair(&self, k: T, r: T, u: &[T], v: &[T], du: &mut [T], dv: &mut [T]) -> (T, T, T) {
        expectation_grad_unchecked(self, k, r, u, v, du, dv)
    }
}

impl<T: Scalar> Factorized<T> for GaussianMixture<T> {
    fn dims(&self) -> usize {
        self.dim()
    }

    fn log_factor(&self, i: usize, k: T, r: T, u: T, v: T) -> T {
        let two = T::lit(2.0);
        let w = u - v;
        self.components(i)
            .iter()
            .filter(|c| c.weight > T::zero())
            .map(|c| {
                let den = T::one() + two * c.variance * (k + r);
                let du = u - c.mean;
                let dv = v - c.mean;
                let q = k * du * du + r * dv * dv + two * c.variance * k * r * w * w;
                c.weight.ln() - T::lit(0.5) * den.ln() - q / den
            })
            .fold(T::neg_infinity(), log_add_exp)
    }

    fn log_factor_grad(&self, i: usize, k: T, r: T, u: T, v: T) -> FactorGrad<T> {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let w = u - v;
        let comps = self.components(i);
        // (t_j, dt/dk, dt/dr, dt/du, dt/dv) per component
        let terms: Vec<[T; 5]> = comps
            .iter()
            .filter(|c| c.weight > T::zero())
            .map(|c| {
                let s2 = c.variance;
                let den = T::one() + two * s2 * (k + r);
                let du = u - c.mean;
                let dv = v - c.mean;
                let q = k * du * du + r * dv * dv + two * s2 * k * r * w * w;
                let t = c.weight.ln() - T::lit(0.5) * den.ln() - q / den;
                let q_k = du * du + two * s2 * r * w * w;
                let q_r = dv * dv + two * s2 * k * w * w;
                let common = two * s2 * q / (den * den) - s2 / den;
                [
                    t,
                    common - q_k / den,
                    common - q_r / den,
                    -(two * k * du + four * s2 * k * r * w) / den,
                    -(two * r * dv - four * s2 * k * r * w) / den,
                ]
            })
            .collect();
        let log = terms.iter().fold(T::neg_infinity(), |acc, t| log_add_exp(acc, t[0]));
        let mut g = FactorGrad {
            log,
            dk: T::zero(),
            dr: T::zero(),
            du: T::zero(),
            dv: T::zero(),
        };
        for t in &terms {
            let p = (t[0] - log).exp();
            g.dk = g.dk + p * t[1];
            g.dr = g.dr + p * t[2];
            g.du = g.du + p * t[3];
            g.dv = g.dv + p * t[4];
        }
        g
    }
}

impl<T: Scalar> UniformBox<T> {
    fn limit_grad(&self, i: usize, u: T, v: T) -> FactorGrad<T> {
        // first-order expansion: E ~ 1 - k E[(x-u)^2] - r E[(x-v)^2]
        let (a, b) = (self.lower()[i], self.upper()[i]);
        let mid = (a + b) / T::lit(2.0);
        let var = (b - a) * (b - a) / T::lit(12.0);
        FactorGrad {
            log: T::zero(),
            dk: -(var + (mid - u) * (mid - u)),
            dr: -(var + (mid - v) * (mid - v)),
            du: T::zero(),
            dv: T::zero(),
        }
    }
}

impl<T: Scalar> Factorized<T> for UniformBox<T> {
    fn dims(&self) -> usize {
        self.dim()
    }

    fn log_factor(&self, i: usize, k: T, r: T, u: T, v: T) -> T {
        let s = k + r;
        if s < T::lit(UNIFORM_LIMIT) {
            return T::zero();
        }
        let (a, b) = (self.lower()[i], self.upper()[i]);
        let root = s.sqrt();
        let hi = (k * (b - u) + r * (b - v)) / root;
        let lo = (k * (a - u) + r * (a - v)) / root;
        let w = u - v;
        let prefactor = (T::PI() / (T::lit(4.0) * s)).sqrt() / (b - a);
        prefactor.ln() - k * r * w * w / s + erf_diff(hi, lo).ln()
    }

    fn log_factor_grad(&self, i: usize, k: T, r: T, u: T, v: T) -> FactorGrad<T> {
        let s = k + r;
        if s < T::lit(UNIFORM_LIMIT) {
            return self.limit_grad(i, u, v);
        }
        let two = T::lit(2.0);
        let (a, b) = (self.lower()[i], self.upper()[i]);
        let root = s.sqrt();
        let hi = (k * (b - u) + r * (b - v)) / root;
        let lo = (k * (a - u) + r * (a - v)) / root;
        let w = u - v;
        let diff = erf_diff(hi, lo);
        let prefactor = (T::PI() / (T::lit(4.0) * s)).sqrt() / (b - a);
        let log = prefactor.ln() - k * r * w * w / s + diff.ln();

        // d ln(erf(hi) - erf(lo)) = 2/sqrt(pi) (e^{-hi^2} dhi - e^{-lo^2} dlo) / diff
        let (ghi, glo) = if diff > T::zero() && diff.is_finite() {
            let c = two / T::PI().sqrt() / diff;
            (c * (-hi * hi).exp(), c * (-lo * lo).exp())
        } else {
            (T::zero(), T::zero())
        };
        let half_s = two * s;
        let dhi_dk = (b - u) / root - hi / half_s;
        let dhi_dr = (b - v) / root - hi / half_s;
        let dlo_dk = (a - u) / root - lo / half_s;
        let dlo_dr = (a - v) / root - lo / half_s;
        let s2 = s * s;
        FactorGrad {
            log,
            dk: -T::lit(0.5) / s - r * r * w * w / s2 + ghi * dhi_dk - glo * dlo_dk,
            dr: -T::lit(0.5) / s - k * k * w * w / s2 + ghi * dhi_dr - glo * dlo_dr,
            du: -two * k * r * w / s + (glo - ghi) * k / root,
            dv: two * k * r * w / s + (glo - ghi) * r / root,
        }
    }
}

impl<T: Scalar> Bernoulli<T> {
    /// `ln((1 - q) + q e^t)` and its derivative in `t`.
    #[inline]
    fn log_bracket(&self, i: usize, t: T) -> (T, T) {
        let q = self.q()[i];
        if q == T::zero() {
            (T::zero(), T::zero())
        } else if q == T::one() {
            (t, T::one())
        } else {
            let lq = self.log_q()[i] + t;
            let l = log_add_exp(self.log_1mq()[i], lq);
            (l, (lq - l).exp())
        }
    }
}

impl<T: Scalar> Factorized<T> for Bernoulli<T> {
    fn dims(&self) -> usize {
        self.dim()
    }

    fn log_factor(&self, i: usize, k: T, r: T, u: T, v: T) -> T {
        let t = T::lit(4.0) * (k * u + r * v);
        let (l, _) = self.log_bracket(i, t);
        let (up, vp) = (u + T::one(), v + T::one());
        -k * up * up - r * vp * vp + l
    }

    fn log_factor_grad(&self, i: usize, k: T, r: T, u: T, v: T) -> FactorGrad<T> {
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let t = four * (k * u + r * v);
        let (l, p) = self.log_bracket(i, t);
        let (up, vp) = (u + T::one(), v + T::one());
        FactorGrad {
            log: -k * up * up - r * vp * vp + l,
            dk: -up * up + four * u * p,
            dr: -vp * vp + four * v * p,
            du: -two * k * up + four * k * p,
            dv: -two * r * vp + four * r * p,
        }
    }
}

/// Per-dimension factors below this send a Bernoulli pair to the log domain.
const TABLE_TINY: f64 = 1e-12;
/// Running products below this are folded into the log accumulator; with
/// chunks of `TABLE_CHUNK` factors above `TABLE_TINY` nothing underflows.
const TABLE_RENORM: f64 = 1e-200;
const TABLE_CHUNK: usize = 8;

/// Kernel values `exp(-k (s - u_d)^2)` at `s = +1` and `s = -1` for a set of
/// points, each dimension scaled so the larger of the pair is one. Under a
/// Bernoulli law a pair expectation is then a product of
/// `q a+ b+ + (1 - q) a- b-` terms with no transcendental calls.
#[derive(Debug, Clone)]
pub(crate) struct BernoulliTable<T> {
    k: T,
    dim: usize,
    points: Vec<T>,
    plus: Vec<T>,
    minus: Vec<T>,
    /// Summed log scale per point.
    shift: Vec<T>,
}

impl<T: Scalar> BernoulliTable<T> {
    pub(crate) fn new(points: &Matrix<T>, k: T) -> Self {
        let dim = points.cols();
        let n = points.rows();
        let mut plus = Vec::with_capacity(n * dim);
        let mut minus = Vec::with_capacity(n * dim);
        let mut shift = Vec::with_capacity(n);
        for row in points.iter_rows() {
            let mut total = T::zero();
            for &u in row {
                let lp = -k * (T::one() - u) * (T::one() - u);
                let lm = -k * (T::one() + u) * (T::one() + u);
                let m = lp.max(lm);
                plus.push((lp - m).exp());
                minus.push((lm - m).exp());
                total = total + m;
            }
            shift.push(total);
        }
        Self {
            k,
            dim,
            points: points.as_slice().to_vec(),
            plus,
            minus,
            shift,
        }
    }

    /// One point of zero sharpness: every entry is one.
    pub(crate) fn unit(dim: usize) -> Self {
        Self {
            k: T::zero(),
            dim,
            points: vec![T::zero(); dim],
            plus: vec![T::one(); dim],
            minus: vec![T::one(); dim],
            shift: vec![T::zero()],
        }
    }

    fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

impl<T: Scalar> Bernoulli<T> {
    /// Products over dimensions, or `None` when some factor is too small for
    /// the scaled representation. `weights` receives `P(x_d = +1 | kernels)`.
    fn table_product(
        &self,
        a: &BernoulliTable<T>,
        i: usize,
        b: &BernoulliTable<T>,
        j: usize,
        mut weights: Option<&mut [T]>,
    ) -> Option<T> {
        let d = self.dim();
        let (ap, am) = (&a.plus[i * d..(i + 1) * d], &a.minus[i * d..(i + 1) * d]);
        let (bp, bm) = (&b.plus[j * d..(j + 1) * d], &b.minus[j * d..(j + 1) * d]);
        let q = self.q();
        let (tiny, renorm) = (T::lit(TABLE_TINY), T::lit(TABLE_RENORM));
        let mut log = a.shift[i] + b.shift[j];
        let mut prod = T::one();
        let mut lo = 0;
        while lo < d {
            let hi = (lo + TABLE_CHUNK).min(d);
            let mut chunk = T::one();
            let mut smallest = T::one();
            for t in lo..hi {
                let sp = q[t] * ap[t] * bp[t];
                let f = sp + (T::one() - q[t]) * am[t] * bm[t];
                if let Some(w) = weights.as_deref_mut() {
                    w[t] = sp / f;
                }
                smallest = smallest.min(f);
                chunk = chunk * f;
            }
            if !(smallest > tiny) {
                return None;
            }
            prod = prod * chunk;
            if prod < renorm {
                log = log + prod.ln();
                prod = T::one();
            }
            lo = hi;
        }
        Some(prod * log.exp())
    }

    /// `E` for the point pair `(a_i, b_j)`.
    pub(crate) fn table_value(&self, a: &BernoulliTable<T>, i: usize, b: &BernoulliTable<T>, j: usize) -> T {
        self.table_product(a, i, b, j, None)
            .unwrap_or_else(|| log_expectation_unchecked(self, a.k, b.k, a.point(i), b.point(j)).exp())
    }

    /// `(E, dE/dk, dE/dr)` for the pair, with `dE/du`, `dE/dv` written to the
    /// buffers; `w` is scratch of length `D`. Partials for a side whose flag
    /// in `want` is false are left unset.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn table_grad(
        &self,
        a: &BernoulliTable<T>,
        i: usize,
        b: &BernoulliTable<T>,
        j: usize,
        want: (bool, bool),
        w: &mut [T],
        du: &mut [T],
        dv: &mut [T],
    ) -> (T, T, T) {
        let (u, v) = (a.point(i), b.point(j));
        let Some(e) = self.table_product(a, i, b, j, Some(w)) else {
            return expectation_grad_unchecked(self, a.k, b.k, u, v, du, dv);
        };
        let (dk, dr) = (
            if want.0 { side_partials(w, u, e * T::lit(2.0) * a.k, du) } else { T::zero() },
            if want.1 { side_partials(w, v, e * T::lit(2.0) * b.k, dv) } else { T::zero() },
        );
        (e, e * dk, e * dr)
    }
}

/// Writes `dE/du` given posterior weights `w` and `scale = 2 k E`; returns
/// `d ln E / dk`.
#[inline]
fn side_partials<T: Scalar>(w: &[T], u: &[T], scale: T, du: &mut [T]) -> T {
    let two = T::lit(2.0);
    let mut dk = T::zero();
    for ((&p, &x), g) in w.iter().zip(u).zip(du.iter_mut()) {
        let (xp, xm) = (T::one() - x, T::one() + x);
        dk = dk - (p * xp * xp + (T::one() - p) * xm * xm);
        *g = scale * (two * p - T::one() - x);
    }
    dk
}

fn check_args<T: Scalar>(dims: usize, k: T, r: T, u: &[T], v: &[T]) -> Result<()> {
    if u.len() != dims {
        return Err(Error::dim("expectation u", dims, u.len()));
    }
    if v.len() != dims {
        return Err(Error::dim("expectation v", dims, v.len()));
    }
    if !(k >= T::zero()) || !(r >= T::zero()) {
        return Err(Error::InvalidArgument(format!("kernel sharpness must be >= 0, got k={k} r={r}")));
    }
    Ok(())
}

pub(crate) fn log_expectation_unchecked<T: Scalar, F: Factorized<T> + ?Sized>(f: &F, k: T, r: T, u: &[T], v: &[T]) -> T {
    if k == T::zero() && r == T::zero() {
        return T::zero();
    }
    (0..f.dims()).fold(T::zero(), |acc, i| acc + f.log_factor(i, k, r, u[i], v[i]))
}

/// Returns `(E, dE/dk, dE/dr)`, writing `dE/du` and `dE/dv` into the buffers.
pub(crate) fn expectation_grad_unchecked<T: Scalar, F: Factorized<T> + ?Sized>(
    f: &F,
    k: T,
    r: T,
    u: &[T],
    v: &[T],
    du: &mut [T],
    dv: &mut [T],
) -> (T, T, T) {
    let (mut log, mut dk, mut dr) = (T::zero(), T::zero(), T::zero());
    for i in 0..f.dims() {
        let g = f.log_factor_grad(i, k, r, u[i], v[i]);
        log = log + g.log;
        dk = dk + g.dk;
        dr = dr + g.dr;
        du[i] = g.du;
        dv[i] = g.dv;
    }
    let e = log.exp();
    for x in du.iter_mut().chain(dv.iter_mut()) {
        *x = *x * e;
    }
    (e, e * dk, e * dr)
}

pub fn expectation_gaussian_mixture<T: Scalar>(k: T, r: T, u: &[T], v: &[T], dist: &GaussianMixture<T>) -> Result<T> {
    check_args(dist.dim(), k, r, u, v)?;
    Ok(log_expectation_unchecked(dist, k, r, u, v).exp())
}

/// Exactly `1` when `k + r` is (numerically) zero.
pub fn expectation_uniform<T: Scalar>(k: T, r: T, u: &[T], v: &[T], dist: &UniformBox<T>) -> Result<T> {
    check_args(dist.dim(), k, r, u, v)?;
    Ok(log_expectation_unchecked(dist, k, r, u, v).exp())
}

/// `O(D)` replacement for the `2^D`-term outcome sum.
pub fn expectation_bernoulli<T: Scalar>(k: T, r: T, u: &[T], v: &[T], dist: &Bernoulli<T>) -> Result<T> {
    check_args(dist.dim(), k, r, u, v)?;
    Ok(log_expectation_unchecked(dist, k, r, u, v).exp())
}

impl<T: Scalar> InputDistribution<T> {
    pub(crate) fn factorized(&self) -> &dyn Factorized<T> {
        match self {
            InputDistribution::GaussianMixture(d) => d,
            InputDistribution::UniformBox(d) => d,
            InputDistribution::Bernoulli(d) => d,
        }
    }

    /// `E[exp(-k |x - u|^2 - r |x - v|^2)]` under this law.
    pub fn expectation(&self, k: T, r: T, u: &[T], v: &[T]) -> Result<T> {
        check_args(self.dim(), k, r, u, v)?;
        Ok(log_expectation_unchecked(self.factorized(), k, r, u, v).exp())
    }

    pub fn log_expectation(&self, k: T, r: T, u: &[T], v: &[T]) -> Result<T> {
        check_args(self.dim(), k, r, u, v)?;
        Ok(log_expectation_unchecked(self.factorized(), k, r, u, v))
    }

    /// The expectation together with its partials in `k`, `r`, `u`, `v`.
    pub fn expectation_with_gradient(&self, k: T, r: T, u: &[T], v: &[T]) -> Result<ExpectationGradient<T>> {
        check_args(self.dim(), k, r, u, v)?;
        let d = self.dim();
        let mut du = vec![T::zero(); d];
        let mut dv = vec![T::zero(); d];
        let (value, d_k, d_r) = expectation_grad_unchecked(self.factorized(), k, r, u, v, &mut du, &mut dv);
        Ok(ExpectationGradient {
            value,
            d_k,
            d_r,
            d_u: du,
            d_v: dv,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationGradient<T> {
    pub value: T,
    pub d_k: T,
    pub d_r: T,
    pub d_u: Vec<T>,
    pub d_v: Vec<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruning::distribution::MixtureComponent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dists(rng: &mut ChaCha8Rng, d: usize) -> Vec<InputDistribution<f64>> {
        let mix = (0..d)
            .map(|_| {
                let w = rng.random_range(0.1..0.9);
                vec![
                    MixtureComponent { weight: w, mean: rng.random_range(-1.0..1.0), variance: rng.random_range(0.2..2.0) },
                    MixtureComponent { weight: 1.0 - w, mean: rng.random_range(-1.0..1.0), variance: rng.random_range(0.2..2.0) },
                ]
            })
            .collect();
        let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..0.0)).collect();
        let upper = lower.iter().map(|a| a + rng.random_range(0.5..3.0)).collect();
        vec![
            GaussianMixture::new(mix).unwrap().into(),
            UniformBox::new(lower, upper).unwrap().into(),
            Bernoulli::new((0..d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap().into(),
        ]
    }

    #[test]
    fn zero_sharpness_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dist in random_dists(&mut rng, 4) {
            let u = [0.3, -1.0, 2.0, 0.0];
            assert_eq!(dist.expectation(0.0, 0.0, &u, &u).unwrap(), 1.0, "{}", dist.kind());
        }
    }

    #[test]
    fn standard_normal_single_kernel() {
        let n = GaussianMixture::standard_normal(1).unwrap();
        let e = expectation_gaussian_mixture(1.0, 0.0, &[0.0], &[0.0], &n).unwrap();
        assert!((e - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_unit_box_reduces_to_erf() {
        let b = UniformBox::cube(1, -1.0, 1.0).unwrap();
        let e = expectation_uniform(1.0, 0.0, &[0.0], &[5.0], &b).unwrap();
        let expected = std::f64::consts::PI.sqrt() / 2.0 * libm::erf(1.0);
        assert!((e - expected).abs() < 1e-15);
        assert!((e - 0.746_824).abs() < 1e-6);
    }

    #[test]
    fn bernoulli_point_mass_collapses() {
        let b = Bernoulli::uniform(3, 1.0).unwrap();
        let (u, v) = ([0.2, -0.5, 1.5], [1.0, 0.0, -2.0]);
        let (k, r) = (0.7, 1.3);
        let e = expectation_bernoulli(k, r, &u, &v, &b).unwrap();
        let du: f64 = u.iter().map(|x| (x - 1.0) * (x - 1.0)).sum();
        let dv: f64 = v.iter().map(|x| (x - 1.0) * (x - 1.0)).sum();
        assert!((e - (-k * du - r * dv).exp()).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_high_dimension_stays_finite() {
        let b = Bernoulli::uniform(26, 0.5).unwrap();
        let u = vec![3.0; 26];
        let e: f64 = expectation_bernoulli(20.0, 20.0, &u, &u, &b).unwrap();
        // dominated by the all-(+1) outcome: 2^-26 exp(-40 * 26 * 4)
        assert!(e.is_finite() && e >= 0.0);
        let l = InputDistribution::from(b).log_expectation(20.0, 20.0, &u, &u).unwrap();
        let expected = -26.0 * 2f64.ln() - 40.0 * 26.0 * 4.0;
        assert!((l - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn swap_symmetry_and_r_zero_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let d = rng.random_range(1..=6);
            for dist in random_dists(&mut rng, d) {
                let u: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (k, r) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
                let a = dist.expectation(k, r, &u, &v).unwrap();
                let b = dist.expectation(r, k, &v, &u).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs(), "{} {a} {b}", dist.kind());
                assert!(a > 0.0 && a <= 1.0 + 1e-12);
                let c = dist.expectation(k, 0.0, &u, &v).unwrap();
                let e = dist.expectation(k, 0.0, &u, &w).unwrap();
                assert!((c - e).abs() <= 1e-14 * c.abs());
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..60 {
            let d = rng.random_range(1..=4);
            for dist in random_dists(&mut rng, d) {
                let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                let (k, r) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
                let g = dist.expectation_with_gradient(k, r, &u, &v).unwrap();
                let e = |k: f64, r: f64, u: &[f64], v: &[f64]| dist.expectation(k, r, u, v).unwrap();
                let check = |a: f64, fd: f64, what: &str| {
                    let tol = 1e-6 * g.value.max(a.abs()) + 1e-9;
                    assert!((a - fd).abs() <= tol, "{} {what}: {a} vs {fd}", dist.kind());
                };
                check(g.d_k, (e(k + h, r, &u, &v) - e(k - h, r, &u, &v)) / (2.0 * h), "k");
                check(g.d_r, (e(k, r + h, &u, &v) - e(k, r - h, &u, &v)) / (2.0 * h), "r");
                for i in 0..d {
                    let (mut up, mut dn) = (u.clone(), u.clone());
                    up[i] += h;
                    dn[i] -= h;
                    check(g.d_u[i], (e(k, r, &up, &v) - e(k, r, &dn, &v)) / (2.0 * h), "u");
                    let (mut up, mut dn) = (v.clone(), v.clone());
                    up[i] += h;
                    dn[i] -= h;
                    check(g.d_v[i], (e(k, r, &u, &up) - e(k, r, &u, &dn)) / (2.0 * h), "v");
                }
            }
        }
    }

    #[test]
    fn argument_errors() {
        let b = Bernoulli::uniform(2, 0.5).unwrap();
        assert!(expectation_bernoulli(1.0, 0.0, &[0.0], &[0.0, 0.0], &b).is_err());
        assert!(expectation_bernoulli(-1.0, 0.0, &[0.0, 0.0], &[0.0, 0.0], &b).is_err());
    }

    #[test]
    fn works_in_f32() {
        let n = GaussianMixture::<f32>::standard_normal(1).unwrap();
        let e = expectation_gaussian_mixture(1.0f32, 0.0, &[0.0], &[0.0], &n).unwrap();
        assert!((e - 0.577_350_3).abs() < 1e-6);
    }
}
