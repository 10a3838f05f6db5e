//! Synthetic stochastic problems with exact gradients and known constants.
//!
//! Every oracle is immutable after construction except for its gradient
//! evaluation counter. Stochastic gradients are pure functions of
//! `(w, sample)`: noise is drawn from a [`NoiseKey`] stream selected by the
//! sample id, so one sample gives the same noise realization at every point.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{invalid, Error, Result};
use crate::lmo::check_groups;
use crate::linalg::{ParamValue, Shape};
use crate::rng::{self, NoiseKey, SampleId};

/// Smoothness, noise and lower-bound constants of a problem, together with
/// the initial gap `Δ_F = F(w₀) - F*` for a chosen starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Lipschitz constant of `∇F`, also valid as the averaged (per-sample)
    /// smoothness constant.
    pub lipschitz: f64,
    /// Lipschitz constant of the Hessian (operator norm).
    pub hessian_lipschitz: f64,
    /// Uniform bound on `E‖∇f(w;ξ) - ∇F(w)‖²`, as a standard deviation.
    pub sigma: f64,
    pub f_star: f64,
    pub delta_f: f64,
}

/// Gradient-evaluation counter; safe under concurrent increments.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Problem constants that do not depend on the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    pub lipschitz: f64,
    pub hessian_lipschitz: f64,
    pub sigma: f64,
    pub f_star: f64,
}

/// Stochastic first-order oracle for `F(w) = E_ξ[f(w; ξ)]`.
///
/// Points are lists of parameter groups; most problems have exactly one.
pub trait StochasticOracle: Send + Sync {
    fn name(&self) -> &str;

    fn shapes(&self) -> Vec<Shape>;

    fn regularity(&self) -> Regularity;

    fn initial_point(&self) -> Vec<ParamValue>;

    fn loss(&self, w: &[ParamValue]) -> Result<f64>;

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>>;

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64>;

    /// `∇f(w; ξ)` without touching the evaluation counter.
    fn sample_grad_uncounted(&self, w: &[ParamValue], sample: SampleId)
        -> Result<Vec<ParamValue>>;

    fn counter(&self) -> &EvalCounter;

    /// `∇²F(w) · dir` when the Hessian has a closed form.
    fn hessian_vec(
        &self,
        _w: &[ParamValue],
        _dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        None
    }

    /// `∇f(w; ξ)`; counts one gradient evaluation.
    fn sample_grad(&self, w: &[ParamValue], sample: SampleId) -> Result<Vec<ParamValue>> {
        self.counter().bump();
        self.sample_grad_uncounted(w, sample)
    }

    fn eval_count(&self) -> u64 {
        self.counter().get()
    }

    /// Noise realization `∇f(w; ξ) - ∇F(w)`; uncounted, for diagnostics.
    fn noise(&self, w: &[ParamValue], sample: SampleId) -> Result<Vec<ParamValue>> {
        let g = self.sample_grad_uncounted(w, sample)?;
        let full = self.full_grad(w)?;
        g.iter().zip(&full).map(|(a, b)| a.sub(b)).collect()
    }

    fn constants(&self, w0: &[ParamValue]) -> Result<ProblemConstants> {
        let reg = self.regularity();
        let delta_f = self.loss(w0)? - reg.f_star;
        Ok(ProblemConstants {
            lipschitz: reg.lipschitz,
            hessian_lipschitz: reg.hessian_lipschitz,
            sigma: reg.sigma,
            f_star: reg.f_star,
            delta_f,
        })
    }
}

fn single(w: &[ParamValue], shape: Shape) -> Result<&ParamValue> {
    check_groups(1, w.len())?;
    let p = &w[0];
    if p.shape() != shape {
        return Err(Error::ShapeMismatch {
            left: shape,
            right: p.shape(),
        });
    }
    Ok(p)
}

/// Additive or position-modulated noise on a quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `∇f = ∇F + σ u(ξ)` with `u` uniform on the unit sphere, so
    /// `‖∇f - ∇F‖ = σ` exactly and the noise does not depend on `w`.
    Additive { sigma: f64 },
    /// `∇f_i = ∇F_i + (σ/√d) r_i(ξ) cos(w_i)` with Rademacher `r_i`: the
    /// per-coordinate amplitude is modulated by the position, which makes
    /// the shared-sample gradient difference genuinely stochastic.
    Coordinatewise { sigma: f64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Additive { sigma } | NoiseModel::Coordinatewise { sigma } => sigma,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(invalid!("sigma must be nonnegative, got {sigma}"))
    }
}

/// `F(w) = ½ wᵀ diag(a) w`.
#[derive(Debug)]
pub struct NoisyQuadratic {
    eigenvalues: Vec<f64>,
    noise: NoiseModel,
    key: NoiseKey,
    init: ParamValue,
    counter: EvalCounter,
}

pub fn make_noisy_quadratic(
    dim: usize,
    eigenvalues: &[f64],
    noise: NoiseModel,
    seed: u64,
) -> Result<NoisyQuadratic> {
    if dim == 0 {
        return Err(invalid!("dimension must be positive"));
    }
    let eigenvalues = match eigenvalues.len() {
        1 => vec![eigenvalues[0]; dim],
        n if n == dim => eigenvalues.to_vec(),
        n => return Err(invalid!("{n} eigenvalues for dimension {dim}")),
    };
    if let Some(bad) = eigenvalues.iter().find(|&&a| !(a.is_finite() && a > 0.0)) {
        return Err(invalid!("eigenvalues must be positive, got {bad}"));
    }
    check_sigma(noise.sigma())?;
    Ok(NoisyQuadratic {
        eigenvalues,
        noise,
        key: NoiseKey::new(seed),
        init: ParamValue::vector(vec![1.0; dim])?,
        counter: EvalCounter::default(),
    })
}

impl NoisyQuadratic {
    pub fn with_initial_point(mut self, w0: ParamValue) -> Result<Self> {
        single(core::slice::from_ref(&w0), Shape::Vector(self.eigenvalues.len()))?;
        self.init = w0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn grad_vec(&self, w: &ParamValue) -> Vec<f64> {
        w.data()
            .iter()
            .zip(&self.eigenvalues)
            .map(|(x, a)| a * x)
            .collect()
    }
}

impl StochasticOracle for NoisyQuadratic {
    fn name(&self) -> &str {
        "noisy_quadratic"
    }

    fn shapes(&self) -> Vec<Shape> {
        vec![Shape::Vector(self.dim())]
    }

    fn regularity(&self) -> Regularity {
        let amax = self.eigenvalues.iter().fold(0.0f64, |m, &a| m.max(a));
        let lipschitz = match self.noise {
            NoiseModel::Additive { .. } => amax,
            // |a_i δ + (σ/√d) r_i (cos x - cos y)| ≤ (a_i + σ/√d)|δ| per sample.
            NoiseModel::Coordinatewise { sigma } => {
                amax + sigma / libm::sqrt(self.dim() as f64)
            }
        };
        Regularity {
            lipschitz,
            hessian_lipschitz: 0.0,
            sigma: self.noise.sigma(),
            f_star: 0.0,
        }
    }

    fn initial_point(&self) -> Vec<ParamValue> {
        vec![self.init.clone()]
    }

    fn loss(&self, w: &[ParamValue]) -> Result<f64> {
        let w = single(w, Shape::Vector(self.dim()))?;
        Ok(0.5
            * w.data()
                .iter()
                .zip(&self.eigenvalues)
                .map(|(x, a)| a * x * x)
                .sum::<f64>())
    }

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim()))?;
        Ok(vec![ParamValue::vector(self.grad_vec(w))?])
    }

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64> {
        let base = self.loss(w)?;
        let x = w[0].data();
        let d = self.dim();
        let mut rng = self.key.stream(sample);
        let extra = match self.noise {
            NoiseModel::Additive { sigma } => {
                if sigma == 0.0 {
                    return Ok(base);
                }
                let u = rng::unit_sphere(&mut rng, d);
                sigma * u.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
            NoiseModel::Coordinatewise { sigma } => {
                if sigma == 0.0 {
                    return Ok(base);
                }
                let amp = sigma / libm::sqrt(d as f64);
                x.iter()
                    .map(|&xi| amp * rng::rademacher(&mut rng) * libm::sin(xi))
                    .sum()
            }
        };
        Ok(base + extra)
    }

    fn sample_grad_uncounted(
        &self,
        w: &[ParamValue],
        sample: SampleId,
    ) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim()))?;
        let mut g = self.grad_vec(w);
        let d = self.dim();
        let mut rng = self.key.stream(sample);
        match self.noise {
            NoiseModel::Additive { sigma } if sigma > 0.0 => {
                let u = rng::unit_sphere(&mut rng, d);
                g.iter_mut().zip(u).for_each(|(gi, ui)| *gi += sigma * ui);
            }
            NoiseModel::Coordinatewise { sigma } if sigma > 0.0 => {
                let amp = sigma / libm::sqrt(d as f64);
                for (gi, &xi) in g.iter_mut().zip(w.data()) {
                    *gi += amp * rng::rademacher(&mut rng) * libm::cos(xi);
                }
            }
            _ => {}
        }
        Ok(vec![ParamValue::vector(g)?])
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn hessian_vec(
        &self,
        w: &[ParamValue],
        dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        Some((|| {
            single(w, Shape::Vector(self.dim()))?;
            let d = single(dir, Shape::Vector(self.dim()))?;
            Ok(vec![ParamValue::vector(self.grad_vec(d))?])
        })())
    }
}

/// Largest `|h'''(x)|` for `h(x) = x²/(1+x²)`, attained at `x² = 1 - 2/√5`.
pub fn nonconvex_third_derivative_bound() -> f64 {
    let x2 = 1.0 - 2.0 / libm::sqrt(5.0);
    let x = libm::sqrt(x2);
    // h'''(x) = -24 x (1 - x²) / (1 + x²)⁴
    24.0 * x * (1.0 - x2) / libm::pow(1.0 + x2, 4.0)
}

/// `F(w) = Σᵢ wᵢ²/(1+wᵢ²) + (c/2)‖w‖²` with additive sphere noise.
///
/// `h(x) = x²/(1+x²)` has `h'' = 2(1-3x²)/(1+x²)³ ∈ [-1/2, 2]`, so
/// `L = c + 2`. The Hessian is diagonal, hence its operator-norm Lipschitz
/// constant is `max |h'''|` (see [`nonconvex_third_derivative_bound`]).
#[derive(Debug)]
pub struct NonconvexSmooth {
    dim: usize,
    coupling: f64,
    sigma: f64,
    key: NoiseKey,
    init: ParamValue,
    counter: EvalCounter,
}

pub fn make_nonconvex_smooth(dim: usize, coupling: f64, sigma: f64, seed: u64) -> Result<NonconvexSmooth> {
    if dim == 0 {
        return Err(invalid!("dimension must be positive"));
    }
    if !(coupling.is_finite() && coupling >= 0.0) {
        return Err(invalid!("coupling must be nonnegative, got {coupling}"));
    }
    check_sigma(sigma)?;
    Ok(NonconvexSmooth {
        dim,
        coupling,
        sigma,
        key: NoiseKey::new(seed),
        init: ParamValue::vector(vec![1.5; dim])?,
        counter: EvalCounter::default(),
    })
}

fn h(x: f64) -> f64 {
    x * x / (1.0 + x * x)
}

fn dh(x: f64) -> f64 {
    let q = 1.0 + x * x;
    2.0 * x / (q * q)
}

fn d2h(x: f64) -> f64 {
    let q = 1.0 + x * x;
    2.0 * (1.0 - 3.0 * x * x) / (q * q * q)
}

impl NonconvexSmooth {
    pub fn with_initial_point(mut self, w0: ParamValue) -> Result<Self> {
        single(core::slice::from_ref(&w0), Shape::Vector(self.dim))?;
        self.init = w0;
        Ok(self)
    }

    fn grad_vec(&self, w: &ParamValue) -> Vec<f64> {
        w.data().iter().map(|&x| dh(x) + self.coupling * x).collect()
    }
}

impl StochasticOracle for NonconvexSmooth {
    fn name(&self) -> &str {
        "nonconvex_smooth"
    }

    fn shapes(&self) -> Vec<Shape> {
        vec![Shape::Vector(self.dim)]
    }

    fn regularity(&self) -> Regularity {
        Regularity {
            lipschitz: self.coupling + 2.0,
            hessian_lipschitz: nonconvex_third_derivative_bound(),
            sigma: self.sigma,
            f_star: 0.0,
        }
    }

    fn initial_point(&self) -> Vec<ParamValue> {
        vec![self.init.clone()]
    }

    fn loss(&self, w: &[ParamValue]) -> Result<f64> {
        let w = single(w, Shape::Vector(self.dim))?;
        Ok(w.data()
            .iter()
            .map(|&x| h(x) + 0.5 * self.coupling * x * x)
            .sum())
    }

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim))?;
        Ok(vec![ParamValue::vector(self.grad_vec(w))?])
    }

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64> {
        let base = self.loss(w)?;
        if self.sigma == 0.0 {
            return Ok(base);
        }
        let u = rng::unit_sphere(&mut self.key.stream(sample), self.dim);
        Ok(base + self.sigma * u.iter().zip(w[0].data()).map(|(a, b)| a * b).sum::<f64>())
    }

    fn sample_grad_uncounted(
        &self,
        w: &[ParamValue],
        sample: SampleId,
    ) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim))?;
        let mut g = self.grad_vec(w);
        if self.sigma > 0.0 {
            let u = rng::unit_sphere(&mut self.key.stream(sample), self.dim);
            g.iter_mut().zip(u).for_each(|(gi, ui)| *gi += self.sigma * ui);
        }
        Ok(vec![ParamValue::vector(g)?])
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn hessian_vec(
        &self,
        w: &[ParamValue],
        dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        Some((|| {
            let w = single(w, Shape::Vector(self.dim))?;
            let d = single(dir, Shape::Vector(self.dim))?;
            let hv = w
                .data()
                .iter()
                .zip(d.data())
                .map(|(&x, &di)| (d2h(x) + self.coupling) * di)
                .collect();
            Ok(vec![ParamValue::vector(hv)?])
        })())
    }
}

/// `F(W) = ½‖W - M‖_F²` for a fixed target `M`, with additive noise of
/// Frobenius norm exactly `σ`.
#[derive(Debug)]
pub struct MatrixQuadratic {
    target: ParamValue,
    sigma: f64,
    key: NoiseKey,
    init: ParamValue,
    counter: EvalCounter,
}

/// Target entries are standard normal, drawn from `target_seed`.
pub fn make_matrix_quadratic(
    m: usize,
    n: usize,
    target_seed: u64,
    sigma: f64,
    seed: u64,
) -> Result<MatrixQuadratic> {
    if m == 0 || n == 0 {
        return Err(invalid!("matrix dimensions must be positive, got {m}x{n}"));
    }
    let mut rng = NoiseKey::new(target_seed).setup(0x7A46);
    let target = ParamValue::matrix(m, n, rng::standard_normals(&mut rng, m * n))?;
    MatrixQuadratic::with_target(target, sigma, seed)
}

impl MatrixQuadratic {
    pub fn with_target(target: ParamValue, sigma: f64, seed: u64) -> Result<Self> {
        if !target.shape().is_matrix() {
            return Err(Error::NotMatrix {
                op: "matrix quadratic",
                shape: target.shape(),
            });
        }
        check_sigma(sigma)?;
        Ok(Self {
            init: target.zeros_like(),
            target,
            sigma,
            key: NoiseKey::new(seed),
            counter: EvalCounter::default(),
        })
    }

    pub fn target(&self) -> &ParamValue {
        &self.target
    }

    pub fn with_initial_point(mut self, w0: ParamValue) -> Result<Self> {
        single(core::slice::from_ref(&w0), self.target.shape())?;
        self.init = w0;
        Ok(self)
    }
}

impl StochasticOracle for MatrixQuadratic {
    fn name(&self) -> &str {
        "matrix_quadratic"
    }

    fn shapes(&self) -> Vec<Shape> {
        vec![self.target.shape()]
    }

    fn regularity(&self) -> Regularity {
        Regularity {
            lipschitz: 1.0,
            hessian_lipschitz: 0.0,
            sigma: self.sigma,
            f_star: 0.0,
        }
    }

    fn initial_point(&self) -> Vec<ParamValue> {
        vec![self.init.clone()]
    }

    fn loss(&self, w: &[ParamValue]) -> Result<f64> {
        let w = single(w, self.target.shape())?;
        let d = w.distance(&self.target)?;
        Ok(0.5 * d * d)
    }

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>> {
        let w = single(w, self.target.shape())?;
        Ok(vec![w.sub(&self.target)?])
    }

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64> {
        let base = self.loss(w)?;
        if self.sigma == 0.0 {
            return Ok(base);
        }
        let u = rng::unit_sphere(&mut self.key.stream(sample), self.target.len());
        Ok(base + self.sigma * u.iter().zip(w[0].data()).map(|(a, b)| a * b).sum::<f64>())
    }

    fn sample_grad_uncounted(
        &self,
        w: &[ParamValue],
        sample: SampleId,
    ) -> Result<Vec<ParamValue>> {
        let w = single(w, self.target.shape())?;
        let g = w.sub(&self.target)?;
        if self.sigma == 0.0 {
            return Ok(vec![g]);
        }
        let u = rng::unit_sphere(&mut self.key.stream(sample), self.target.len());
        let data = g
            .data()
            .iter()
            .zip(u)
            .map(|(gi, ui)| gi + self.sigma * ui)
            .collect();
        Ok(vec![ParamValue::new(g.shape(), data)?])
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn hessian_vec(
        &self,
        w: &[ParamValue],
        dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        Some((|| {
            single(w, self.target.shape())?;
            Ok(vec![single(dir, self.target.shape())?.clone()])
        })())
    }
}

/// Average logistic loss over a fixed synthetic dataset; `ξ` selects a
/// minibatch drawn without replacement.
#[derive(Debug)]
pub struct LogisticFiniteSum {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    batch: usize,
    key: NoiseKey,
    init: ParamValue,
    regularity: Regularity,
    counter: EvalCounter,
}

/// `max_z |d/dz s(z)(1 - s(z))|` for the logistic sigmoid `s`.
const LOGISTIC_THIRD_DERIVATIVE: f64 = 0.096_225_044_864_937_63; // 1/(6√3)

pub fn make_logistic_finite_sum(
    num_samples: usize,
    dim: usize,
    batch: usize,
    seed: u64,
) -> Result<LogisticFiniteSum> {
    if num_samples == 0 || dim == 0 {
        return Err(invalid!("need at least one sample and one feature"));
    }
    if batch == 0 || batch > num_samples {
        return Err(invalid!(
            "batch must be in 1..={num_samples}, got {batch}"
        ));
    }
    let key = NoiseKey::new(seed);
    let mut rng = key.setup(0x1061);
    let teacher = rng::standard_normals(&mut rng, dim);
    let scale = 1.0 / libm::sqrt(dim as f64);
    let mut features = Vec::with_capacity(num_samples);
    let mut labels = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let x: Vec<f64> = rng::standard_normals(&mut rng, dim)
            .into_iter()
            .map(|v| v * scale * 2.0)
            .collect();
        let margin: f64 = x.iter().zip(&teacher).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * rng::standard_normals(&mut rng, 1)[0];
        labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
        features.push(x);
    }
    let sq_norms: Vec<f64> = features
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let max_sq = sq_norms.iter().fold(0.0f64, |m, &v| m.max(v));
    // Per-sample gradients have norm ≤ ‖xᵢ‖, so the minibatch-mean variance
    // (sampling without replacement) is at most (n-b)/(b n (n-1)) Σ‖xᵢ‖² at
    // every w.
    let sigma = if batch == num_samples {
        0.0
    } else {
        let n = num_samples as f64;
        let b = batch as f64;
        libm::sqrt((n - b) / (b * n * (n - 1.0)) * sq_norms.iter().sum::<f64>())
    };
    let regularity = Regularity {
        lipschitz: 0.25 * max_sq,
        hessian_lipschitz: LOGISTIC_THIRD_DERIVATIVE * max_sq * libm::sqrt(max_sq),
        sigma,
        f_star: 0.0,
    };
    Ok(LogisticFiniteSum {
        features,
        labels,
        batch,
        key,
        init: ParamValue::zeros(Shape::Vector(dim)),
        regularity,
        counter: EvalCounter::default(),
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    // log(1 + e^z) without overflow
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl LogisticFiniteSum {
    pub fn dim(&self) -> usize {
        self.init.len()
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn with_initial_point(mut self, w0: ParamValue) -> Result<Self> {
        single(core::slice::from_ref(&w0), Shape::Vector(self.dim()))?;
        self.init = w0;
        Ok(self)
    }

    /// Sorted minibatch indices for `sample`; sorting keeps the full batch
    /// bitwise identical to the full gradient.
    pub fn batch_indices(&self, sample: SampleId) -> Vec<usize> {
        let n = self.num_samples();
        if self.batch == n {
            return (0..n).collect();
        }
        let mut rng = self.key.stream(sample);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..self.batch {
            let j = i + rng::below(&mut rng, n - i);
            idx.swap(i, j);
        }
        idx.truncate(self.batch);
        idx.sort_unstable();
        idx
    }

    fn margin(&self, i: usize, w: &[f64]) -> f64 {
        self.labels[i] * self.features[i].iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
    }

    fn loss_over(&self, idx: impl Iterator<Item = usize>, w: &[f64], count: usize) -> f64 {
        idx.map(|i| log1p_exp(-self.margin(i, w))).sum::<f64>() / count as f64
    }

    fn grad_over(&self, idx: impl Iterator<Item = usize>, w: &[f64], count: usize) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for i in idx {
            let coef = -self.labels[i] * sigmoid(-self.margin(i, w));
            for (gj, xj) in g.iter_mut().zip(&self.features[i]) {
                *gj += coef * xj;
            }
        }
        g.iter_mut().for_each(|v| *v /= count as f64);
        g
    }
}

impl StochasticOracle for LogisticFiniteSum {
    fn name(&self) -> &str {
        "logistic_finite_sum"
    }

    fn shapes(&self) -> Vec<Shape> {
        vec![Shape::Vector(self.dim())]
    }

    fn regularity(&self) -> Regularity {
        self.regularity
    }

    fn initial_point(&self) -> Vec<ParamValue> {
        vec![self.init.clone()]
    }

    fn loss(&self, w: &[ParamValue]) -> Result<f64> {
        let w = single(w, Shape::Vector(self.dim()))?;
        let n = self.num_samples();
        Ok(self.loss_over(0..n, w.data(), n))
    }

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim()))?;
        let n = self.num_samples();
        Ok(vec![ParamValue::vector(self.grad_over(0..n, w.data(), n))?])
    }

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64> {
        let w = single(w, Shape::Vector(self.dim()))?;
        let idx = self.batch_indices(sample);
        Ok(self.loss_over(idx.iter().copied(), w.data(), idx.len()))
    }

    fn sample_grad_uncounted(
        &self,
        w: &[ParamValue],
        sample: SampleId,
    ) -> Result<Vec<ParamValue>> {
        let w = single(w, Shape::Vector(self.dim()))?;
        let idx = self.batch_indices(sample);
        Ok(vec![ParamValue::vector(self.grad_over(
            idx.iter().copied(),
            w.data(),
            idx.len(),
        ))?])
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn hessian_vec(
        &self,
        w: &[ParamValue],
        dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        Some((|| {
            let w = single(w, Shape::Vector(self.dim()))?;
            let d = single(dir, Shape::Vector(self.dim()))?;
            let n = self.num_samples();
            let mut hv = vec![0.0; self.dim()];
            for i in 0..n {
                let s = sigmoid(self.margin(i, w.data()));
                let xd: f64 = self.features[i].iter().zip(d.data()).map(|(a, b)| a * b).sum();
                let coef = s * (1.0 - s) * xd / n as f64;
                for (h, x) in hv.iter_mut().zip(&self.features[i]) {
                    *h += coef * x;
                }
            }
            Ok(vec![ParamValue::vector(hv)?])
        })())
    }
}

/// Block-separable problem `F(w₁, …, w_k) = Σ F_j(w_j)`; each block keeps
/// its own noise stream and all blocks see the same sample id.
pub struct GroupedOracle {
    name: String,
    blocks: Vec<Box<dyn StochasticOracle>>,
    counter: EvalCounter,
}

impl GroupedOracle {
    pub fn new(blocks: Vec<Box<dyn StochasticOracle>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(invalid!("a grouped oracle needs at least one block"));
        }
        if let Some(b) = blocks.iter().find(|b| b.shapes().len() != 1) {
            return Err(invalid!("block {} must have exactly one group", b.name()));
        }
        let mut name = String::from("grouped");
        for b in &blocks {
            name.push(':');
            name.push_str(b.name());
        }
        Ok(Self {
            name,
            blocks,
            counter: EvalCounter::default(),
        })
    }

    fn split<'a>(&self, w: &'a [ParamValue]) -> Result<impl Iterator<Item = (&dyn StochasticOracle, &'a [ParamValue])>> {
        check_groups(self.blocks.len(), w.len())?;
        Ok(self
            .blocks
            .iter()
            .zip(w.chunks(1))
            .map(|(b, wi)| (b.as_ref(), wi)))
    }
}

impl StochasticOracle for GroupedOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn shapes(&self) -> Vec<Shape> {
        self.blocks.iter().flat_map(|b| b.shapes()).collect()
    }

    fn regularity(&self) -> Regularity {
        let mut out = Regularity {
            lipschitz: 0.0,
            hessian_lipschitz: 0.0,
            sigma: 0.0,
            f_star: 0.0,
        };
        let mut var = 0.0;
        for r in self.blocks.iter().map(|b| b.regularity()) {
            out.lipschitz = out.lipschitz.max(r.lipschitz);
            out.hessian_lipschitz = out.hessian_lipschitz.max(r.hessian_lipschitz);
            var += r.sigma * r.sigma;
            out.f_star += r.f_star;
        }
        out.sigma = libm::sqrt(var);
        out
    }

    fn initial_point(&self) -> Vec<ParamValue> {
        self.blocks.iter().flat_map(|b| b.initial_point()).collect()
    }

    fn loss(&self, w: &[ParamValue]) -> Result<f64> {
        self.split(w)?.map(|(b, wi)| b.loss(wi)).sum()
    }

    fn full_grad(&self, w: &[ParamValue]) -> Result<Vec<ParamValue>> {
        let mut out = Vec::with_capacity(w.len());
        for (b, wi) in self.split(w)? {
            out.extend(b.full_grad(wi)?);
        }
        Ok(out)
    }

    fn sample_loss(&self, w: &[ParamValue], sample: SampleId) -> Result<f64> {
        self.split(w)?.map(|(b, wi)| b.sample_loss(wi, sample)).sum()
    }

    fn sample_grad_uncounted(
        &self,
        w: &[ParamValue],
        sample: SampleId,
    ) -> Result<Vec<ParamValue>> {
        let mut out = Vec::with_capacity(w.len());
        for (b, wi) in self.split(w)? {
            out.extend(b.sample_grad_uncounted(wi, sample)?);
        }
        Ok(out)
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn hessian_vec(
        &self,
        w: &[ParamValue],
        dir: &[ParamValue],
    ) -> Option<Result<Vec<ParamValue>>> {
        if let Err(e) = check_groups(self.blocks.len(), dir.len()) {
            return Some(Err(e));
        }
        let mut out = Vec::with_capacity(w.len());
        let parts = match self.split(w) {
            Ok(p) => p,
            Err(e) => return Some(Err(e)),
        };
        for ((b, wi), di) in parts.zip(dir.chunks(1)) {
            match b.hessian_vec(wi, di)? {
                Ok(h) => out.extend(h),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(out))
    }
}
