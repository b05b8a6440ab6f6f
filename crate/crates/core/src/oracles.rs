//! Independent reference values for every closed-form quantity.
//!
//! Nothing here calls into the closed-form expectation or objective code;
//! the only shared path is network evaluation. Oracles work in `f64`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{squared_distance, RbfNetwork};
use crate::pruning::{Bernoulli, GaussianMixture, InputDistribution, UniformBox};

/// Largest dimension the exhaustive sums will enumerate.
pub const MAX_EXHAUSTIVE_DIM: usize = 20;
/// Gaussian components are integrated over `mean +- TAIL_SIGMAS * sd`.
pub const TAIL_SIGMAS: f64 = 12.0;
const MAX_PANELS: usize = 20_000;
const MC_CHUNK: usize = 16_384;

fn check_exhaustive(d: usize) -> Result<()> {
    if d > MAX_EXHAUSTIVE_DIM {
        return Err(Error::InvalidArgument(format!(
            "exhaustive enumeration limited to D <= {MAX_EXHAUSTIVE_DIM}, got {d}"
        )));
    }
    Ok(())
}

/// Visit every `x` in `{-1, +1}^D` (plain binary order) with its probability.
fn for_each_outcome(dist: &Bernoulli<f64>, mut visit: impl FnMut(&[f64], f64)) {
    let d = dist.dim();
    let mut x = vec![0.0; d];
    for mask in 0u64..(1u64 << d) {
        let mut p = 1.0;
        for (i, xi) in x.iter_mut().enumerate() {
            let q = dist.q()[i];
            if mask >> i & 1 == 1 {
                *xi = 1.0;
                p *= q;
            } else {
                *xi = -1.0;
                p *= 1.0 - q;
            }
        }
        if p > 0.0 {
            visit(&x, p);
        }
    }
}

/// Literal `2^D`-term sum of `P(x) exp(-k |x - u|^2 - r |x - v|^2)`.
pub fn bernoulli_expectation_exhaustive(k: f64, r: f64, u: &[f64], v: &[f64], dist: &Bernoulli<f64>) -> Result<f64> {
    let d = dist.dim();
    check_exhaustive(d)?;
    if u.len() != d || v.len() != d {
        return Err(Error::dim("oracle u/v", d, u.len().max(v.len())));
    }
    let mut sum = 0.0;
    for_each_outcome(dist, |x, p| {
        sum += p * (-k * squared_distance(x, u) - r * squared_distance(x, v)).exp();
    });
    Ok(sum)
}

/// Literal outcome average of `(f_large(x) - f_small(x))^2`.
pub fn pruning_objective_exhaustive(large: &RbfNetwork<f64>, small: &RbfNetwork<f64>, dist: &Bernoulli<f64>) -> Result<f64> {
    let d = dist.dim();
    check_exhaustive(d)?;
    if large.dim() != d || small.dim() != d {
        return Err(Error::dim("oracle network dimension", d, large.dim().max(small.dim())));
    }
    let mut sum = 0.0;
    let mut err = None;
    for_each_outcome(dist, |x, p| match (large.forward(x), small.forward(x)) {
        (Ok(a), Ok(b)) => sum += p * (a - b) * (a - b),
        (Err(e), _) | (_, Err(e)) => err = Some(e),
    });
    match err {
        Some(e) => Err(e),
        None => Ok(sum),
    }
}

#[allow(clippy::excessive_precision)]
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// 15-point Kronrod estimate and `|K15 - G7|` on one panel.
fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = h * GK_NODES[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += G_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration over the sorted `breaks`.
/// Returns `(value, error_estimate)`.
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Result<(f64, f64)> {
    let mut heap = BinaryHeap::new();
    let (mut total, mut total_err) = (0.0, 0.0);
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gauss_kronrod(&f, w[0], w[1]);
            total += value;
            total_err += error;
            heap.push(Panel { a: w[0], b: w[1], value, error });
        }
    }
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Quadrature {
                achieved: total_err,
                requested: abs_tol.max(rel_tol * total.abs()),
            });
        }
        let p = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (p.a + p.b);
        let (lv, le) = gauss_kronrod(&f, p.a, mid);
        let (rv, re) = gauss_kronrod(&f, mid, p.b);
        total += lv + rv - p.value;
        total_err += le + re - p.error;
        heap.push(Panel { a: p.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: p.b, value: rv, error: re });
    }
    // re-sum to shed drift from the incremental updates
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok((value, error))
}

fn panel_breaks(lo: f64, hi: f64, interior: &[f64], panels: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..=panels).map(|i| lo + (hi - lo) * i as f64 / panels as f64).collect();
    b.extend(interior.iter().copied().filter(|p| *p > lo && *p < hi));
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn kernel_1d(k: f64, r: f64, u: f64, v: f64) -> impl Fn(f64) -> f64 {
    move |x| (-k * (x - u) * (x - u) - r * (x - v) * (x - v)).exp()
}

#[allow(clippy::too_many_arguments)]
fn uniform_dim(k: f64, r: f64, u: f64, v: f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let kern = kernel_1d(k, r, u, v);
    let peak = if k + r > 0.0 { (k * u + r * v) / (k + r) } else { u };
    let breaks = panel_breaks(a, b, &[u, v, peak], 8);
    let (val, _) = integrate_adaptive(|x| kern(x) / (b - a), &breaks, abs_tol, rel_tol)?;
    Ok(val)
}

fn mixture_dim(
    k: f64,
    r: f64,
    u: f64,
    v: f64,
    comps: &[crate::pruning::MixtureComponent<f64>],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let kern = kernel_1d(k, r, u, v);
    let mut total = 0.0;
    for c in comps.iter().filter(|c| c.weight > 0.0) {
        let sd = c.variance.sqrt();
        let norm = 1.0 / (2.0 * std::f64::consts::PI * c.variance).sqrt();
        let density = |x: f64| norm * (-(x - c.mean) * (x - c.mean) / (2.0 * c.variance)).exp();
        let (lo, hi) = (c.mean - TAIL_SIGMAS * sd, c.mean + TAIL_SIGMAS * sd);
        let breaks = panel_breaks(lo, hi, &[u, v, c.mean], 16);
        let (val, _) = integrate_adaptive(|x| density(x) * kern(x), &breaks, abs_tol, rel_tol)?;
        total += c.weight * val;
    }
    Ok(total)
}

/// Product over dimensions of one-dimensional adaptive quadratures.
pub fn expectation_quadrature(
    k: f64,
    r: f64,
    u: &[f64],
    v: &[f64],
    dist: &InputDistribution<f64>,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let d = dist.dim();
    if u.len() != d || v.len() != d {
        return Err(Error::dim("oracle u/v", d, u.len().max(v.len())));
    }
    match dist {
        InputDistribution::UniformBox(bx) => quadrature_uniform(k, r, u, v, bx, abs_tol, rel_tol),
        InputDistribution::GaussianMixture(m) => quadrature_mixture(k, r, u, v, m, abs_tol, rel_tol),
        InputDistribution::Bernoulli(_) => Err(Error::InvalidArgument(
            "quadrature applies to continuous distributions only".into(),
        )),
    }
}

fn quadrature_uniform(k: f64, r: f64, u: &[f64], v: &[f64], bx: &UniformBox<f64>, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    (0..bx.dim()).try_fold(1.0, |acc, i| {
        Ok(acc * uniform_dim(k, r, u[i], v[i], bx.lower()[i], bx.upper()[i], abs_tol, rel_tol)?)
    })
}

fn quadrature_mixture(k: f64, r: f64, u: &[f64], v: &[f64], m: &GaussianMixture<f64>, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    (0..m.dim()).try_fold(1.0, |acc, i| Ok(acc * mixture_dim(k, r, u[i], v[i], m.components(i), abs_tol, rel_tol)?))
}

fn sample_point(dist: &InputDistribution<f64>, rng: &mut ChaCha8Rng, x: &mut [f64]) {
    match dist {
        InputDistribution::Bernoulli(b) => {
            for (xi, &q) in x.iter_mut().zip(b.q()) {
                *xi = if rng.random::<f64>() < q { 1.0 } else { -1.0 };
            }
        }
        InputDistribution::UniformBox(bx) => {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = rng.random_range(bx.lower()[i]..bx.upper()[i]);
            }
        }
        InputDistribution::GaussianMixture(m) => {
            for (i, xi) in x.iter_mut().enumerate() {
                let comps = m.components(i);
                let mut pick: f64 = rng.random();
                let mut chosen = comps[comps.len() - 1];
                for c in comps {
                    if pick < c.weight {
                        chosen = *c;
                        break;
                    }
                    pick -= c.weight;
                }
                *xi = Normal::new(chosen.mean, chosen.variance.sqrt()).unwrap().sample(rng);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * o.n / n,
            m2: self.m2 + o.m2 + delta * delta * self.n * o.n / n,
        }
    }
}

/// Seeded Monte Carlo mean of `g(x)` with its standard error. Samples are
/// drawn in fixed-size chunks, each from its own stream, so the result does
/// not depend on the thread count.
fn monte_carlo(dist: &InputDistribution<f64>, samples: usize, seed: u64, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs >= 100 samples, got {samples}")));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let d = dist.dim();
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = vec![0.0; d];
            let mut m = Moments { n: 0.0, mean: 0.0, m2: 0.0 };
            for _ in 0..count {
                sample_point(dist, &mut rng, &mut x);
                m.push(g(&x));
            }
            m
        })
        .collect();
    let m = parts.into_iter().fold(Moments { n: 0.0, mean: 0.0, m2: 0.0 }, Moments::merge);
    let var = m.m2 / (m.n - 1.0);
    Ok((m.mean, (var / m.n).sqrt()))
}

/// Monte Carlo estimate of the kernel expectation, `(estimate, std_error)`.
pub fn mc_expectation(k: f64, r: f64, u: &[f64], v: &[f64], dist: &InputDistribution<f64>, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let d = dist.dim();
    if u.len() != d || v.len() != d {
        return Err(Error::dim("oracle u/v", d, u.len().max(v.len())));
    }
    monte_carlo(dist, samples, seed, |x| (-k * squared_distance(x, u) - r * squared_distance(x, v)).exp())
}

/// Monte Carlo estimate of the pruning objective, `(estimate, std_error)`.
pub fn mc_pruning_objective(
    large: &RbfNetwork<f64>,
    small: &RbfNetwork<f64>,
    dist: &InputDistribution<f64>,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = dist.dim();
    if large.dim() != d || small.dim() != d {
        return Err(Error::dim("oracle network dimension", d, large.dim().max(small.dim())));
    }
    monte_carlo(dist, samples, seed, |x| {
        let diff = large.forward(x).unwrap() - small.forward(x).unwrap();
        diff * diff
    })
}
