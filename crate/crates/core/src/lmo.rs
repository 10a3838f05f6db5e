//! Linear minimization oracles over centrally symmetric norm balls.
//!
//! For a ball `C` of radius `r`:
//!
//! | geometry       | `LMO_C(g)`          | support `h_C(z)` |
//! |----------------|---------------------|------------------|
//! | Euclidean      | `-r g / ‖g‖₂`       | `r ‖z‖₂`         |
//! | ℓ∞             | `-r sign(g)`        | `r ‖z‖₁`         |
//! | operator norm  | `-r U Vᵀ`           | `r ‖z‖_*`        |
//!
//! The regularized support function `Ψ_{C,λ}(w) = sup_{v∈C} ⟨-∇F(w), v - λw⟩`
//! splits into `h_C(-∇F(w)) + λ⟨∇F(w), w⟩`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{NormKind, ParamValue, Shape};
use crate::rng::{self, NoiseKey};

/// Singular values at or below this fraction of the largest one are treated
/// as zero by the operator-norm oracle.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Euclidean,
    LInf,
    OperatorNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NsVariant {
    /// `X ← 1.5 X - 0.5 X Xᵀ X`; converges to the polar factor.
    #[default]
    Cubic,
    /// Muon's quintic `(3.4445, -4.7750, 2.0315)`. Fast but only drives the
    /// singular values into a band around 1, it does not converge to `UVᵀ`.
    MuonQuintic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpMethod {
    #[default]
    ExactSvd,
    NewtonSchulz { iterations: u32, variant: NsVariant },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmoSet {
    geometry: Geometry,
    radius: f64,
    op_method: OpMethod,
}

impl LmoSet {
    pub fn new(geometry: Geometry, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid!("radius must be positive and finite, got {radius}"));
        }
        Ok(Self {
            geometry,
            radius,
            op_method: OpMethod::ExactSvd,
        })
    }

    pub fn euclidean(radius: f64) -> Result<Self> {
        Self::new(Geometry::Euclidean, radius)
    }

    pub fn linf(radius: f64) -> Result<Self> {
        Self::new(Geometry::LInf, radius)
    }

    pub fn operator_norm(radius: f64) -> Result<Self> {
        Self::new(Geometry::OperatorNorm, radius)
    }

    pub fn with_op_method(mut self, op_method: OpMethod) -> Result<Self> {
        if let OpMethod::NewtonSchulz { iterations: 0, .. } = op_method {
            return Err(invalid!("Newton-Schulz needs at least one iteration"));
        }
        self.op_method = op_method;
        Ok(self)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn op_method(&self) -> OpMethod {
        self.op_method
    }

    fn check_shape(&self, shape: Shape) -> Result<()> {
        if self.geometry == Geometry::OperatorNorm && !shape.is_matrix() {
            return Err(Error::NotMatrix {
                op: "operator-norm ball",
                shape,
            });
        }
        Ok(())
    }

    fn ball_norm(&self) -> NormKind {
        match self.geometry {
            Geometry::Euclidean => NormKind::L2,
            Geometry::LInf => NormKind::LInf,
            Geometry::OperatorNorm => NormKind::Spectral,
        }
    }

    fn dual_norm(&self) -> NormKind {
        match self.geometry {
            Geometry::Euclidean => NormKind::L2,
            Geometry::LInf => NormKind::L1,
            Geometry::OperatorNorm => NormKind::Nuclear,
        }
    }

    /// Norm whose unit ball, scaled by the radius, is this set.
    pub fn gauge(&self, x: &ParamValue) -> Result<f64> {
        self.check_shape(x.shape())?;
        x.norm(self.ball_norm())
    }

    pub fn contains(&self, x: &ParamValue, tol: f64) -> Result<bool> {
        Ok(self.gauge(x)? <= self.radius + tol)
    }

    /// Euclidean (Frobenius) diameter of the ball for parameters of `shape`.
    ///
    /// This is the `R` that enters step lengths and smoothness bounds:
    /// `2r` for the Euclidean ball, `2r√d` for the ℓ∞ ball in `d`
    /// dimensions and `2r√min(m, n)` for the operator-norm ball.
    pub fn diameter(&self, shape: Shape) -> Result<f64> {
        self.check_shape(shape)?;
        let factor = match (self.geometry, shape) {
            (Geometry::Euclidean, _) => 1.0,
            (Geometry::LInf, s) => libm::sqrt(s.numel() as f64),
            (Geometry::OperatorNorm, Shape::Matrix(m, n)) => libm::sqrt(m.min(n) as f64),
            (Geometry::OperatorNorm, Shape::Vector(_)) => unreachable!("checked above"),
        };
        Ok(2.0 * self.radius * factor)
    }

    /// A minimizer of `⟨g, v⟩` over the ball. `g = 0` maps to the origin.
    pub fn lmo(&self, g: &ParamValue) -> Result<ParamValue> {
        self.check_shape(g.shape())?;
        if g.is_zero() {
            return Ok(g.zeros_like());
        }
        let r = self.radius;
        match self.geometry {
            Geometry::Euclidean => {
                let norm = g.l2();
                g.scaled(-r / norm)
            }
            Geometry::LInf => g.map(|x| {
                if x > 0.0 {
                    -r
                } else if x < 0.0 {
                    r
                } else {
                    0.0
                }
            }),
            Geometry::OperatorNorm => {
                let polar = match self.op_method {
                    OpMethod::ExactSvd => polar_factor(g)?,
                    OpMethod::NewtonSchulz {
                        iterations,
                        variant,
                    } => newton_schulz_with(g, iterations, variant)?,
                };
                polar.scaled(-r)
            }
        }
    }

    /// `h_C(z) = sup_{v∈C} ⟨z, v⟩ = r ‖z‖_dual`.
    pub fn support_value(&self, z: &ParamValue) -> Result<f64> {
        self.check_shape(z.shape())?;
        Ok(self.radius * z.norm(self.dual_norm())?)
    }
}

/// `U Vᵀ` from the thin SVD, dropping directions with negligible singular
/// values so the result stays single-valued on rank-deficient inputs.
pub fn polar_factor(m: &ParamValue) -> Result<ParamValue> {
    let svd = m.svd()?;
    let (rows, r) = svd.u.dims().expect("U is a matrix");
    let (cols, _) = svd.v.dims().expect("V is a matrix");
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let mut out = vec![0.0; rows * cols];
    if smax > 0.0 {
        let u = svd.u.data();
        let v = svd.v.data();
        for k in (0..r).filter(|&k| svd.s[k] > RANK_TOLERANCE * smax) {
            for i in 0..rows {
                let uik = u[i * r + k];
                for j in 0..cols {
                    out[i * cols + j] += uik * v[j * r + k];
                }
            }
        }
    }
    ParamValue::matrix(rows, cols, out)
}

/// Approximate `U Vᵀ` with the cubic Newton-Schulz iteration.
pub fn newton_schulz_orthogonalize(m: &ParamValue, iterations: u32) -> Result<ParamValue> {
    newton_schulz_with(m, iterations, NsVariant::Cubic)
}

pub fn newton_schulz_with(
    m: &ParamValue,
    iterations: u32,
    variant: NsVariant,
) -> Result<ParamValue> {
    let (rows, cols) = m.dims().ok_or(Error::NotMatrix {
        op: "newton-schulz",
        shape: m.shape(),
    })?;
    if iterations == 0 {
        return Err(invalid!("Newton-Schulz needs at least one iteration"));
    }
    let fro = m.l2();
    if fro == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    // Iterate on the wide orientation so the Gram matrix is the small one.
    let tall = rows > cols;
    let mut x = m.scaled(1.0 / fro)?;
    if tall {
        x = x.transpose()?;
    }
    for _ in 0..iterations {
        let gram = x.matmul(&x.transpose()?)?;
        x = match variant {
            NsVariant::Cubic => {
                let gx = gram.matmul(&x)?;
                crate::linalg::combine(&[1.5, -0.5], &[&x, &gx])?
            }
            NsVariant::MuonQuintic => {
                let (a, b, c) = (3.4445, -4.7750, 2.0315);
                let gram2 = gram.matmul(&gram)?;
                let poly = crate::linalg::combine(&[b, c], &[&gram, &gram2])?;
                let px = poly.matmul(&x)?;
                crate::linalg::combine(&[a, 1.0], &[&x, &px])?
            }
        };
    }
    if tall {
        x = x.transpose()?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsfValue {
    pub value: f64,
    /// `h_C(-∇F(w))`
    pub support_part: f64,
    /// `λ⟨∇F(w), w⟩`
    pub decay_part: f64,
}

/// Regularized support function `Ψ_{C,λ}(w)` from the exact gradient at `w`.
pub fn rsf(set: &LmoSet, lambda: f64, w: &ParamValue, grad_f: &ParamValue) -> Result<RsfValue> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid!("lambda must be nonnegative, got {lambda}"));
    }
    let inner = grad_f.dot(w)?;
    // The balls are symmetric, so h_C(-z) = h_C(z).
    let support_part = set.support_value(grad_f)?;
    let decay_part = lambda * inner;
    if lambda > 0.0 {
        let scaled = w.scaled(lambda)?;
        if !set.contains(&scaled, 1e-9 * set.radius().max(1.0))? {
            log::warn!("rsf evaluated at a point outside the feasible region λ⁻¹C");
        }
    }
    Ok(RsfValue {
        value: support_part + decay_part,
        support_part,
        decay_part,
    })
}

/// Frank-Wolfe gap `G_P(w) = sup_{u∈P} ⟨-∇F(w), u - w⟩` over `P = λ⁻¹C`.
pub fn frank_wolfe_gap(
    set: &LmoSet,
    lambda: f64,
    w: &ParamValue,
    grad_f: &ParamValue,
) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid!("the Frank-Wolfe gap needs lambda > 0, got {lambda}"));
    }
    Ok(set.support_value(grad_f)? / lambda + grad_f.dot(w)?)
}

/// RSF summed over parameter groups (the support function of a product set
/// is the sum of the block support functions).
pub fn rsf_groups(
    sets: &[LmoSet],
    lambda: f64,
    w: &[ParamValue],
    grad_f: &[ParamValue],
) -> Result<RsfValue> {
    check_groups(sets.len(), w.len())?;
    check_groups(sets.len(), grad_f.len())?;
    let mut total = RsfValue {
        value: 0.0,
        support_part: 0.0,
        decay_part: 0.0,
    };
    for ((set, wi), gi) in sets.iter().zip(w).zip(grad_f) {
        let part = rsf(set, lambda, wi, gi)?;
        total.value += part.value;
        total.support_part += part.support_part;
        total.decay_part += part.decay_part;
    }
    Ok(total)
}

/// Euclidean diameter of the product of the group balls.
pub fn diameter_groups(sets: &[LmoSet], shapes: &[Shape]) -> Result<f64> {
    check_groups(sets.len(), shapes.len())?;
    let mut sq = 0.0;
    for (set, &shape) in sets.iter().zip(shapes) {
        let d = set.diameter(shape)?;
        sq += d * d;
    }
    Ok(libm::sqrt(sq))
}

pub(crate) fn check_groups(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::GroupMismatch { expected, got })
    }
}

/// Best of `num_samples` random feasible points by `⟨g, ·⟩`.
///
/// Sampling is boundary-biased and does not use the closed-form oracle or
/// the SVD, so it serves as an independent lower bound on LMO quality.
pub fn lmo_bruteforce(
    set: &LmoSet,
    g: &ParamValue,
    num_samples: usize,
    seed: u64,
) -> Result<ParamValue> {
    set.check_shape(g.shape())?;
    if num_samples == 0 {
        return Err(invalid!("lmo_bruteforce needs at least one sample"));
    }
    let mut rng = NoiseKey::new(seed).setup(0xB0F0);
    let shape = g.shape();
    let n = shape.numel();
    let r = set.radius();
    let mut best: Option<(f64, ParamValue)> = None;
    for _ in 0..num_samples {
        let data = match set.geometry() {
            Geometry::Euclidean => {
                let dir = rng::unit_sphere(&mut rng, n);
                let scale = if rng::uniform01(&mut rng) < 0.8 {
                    r
                } else {
                    r * libm::pow(rng::uniform01(&mut rng), 1.0 / n as f64)
                };
                dir.into_iter().map(|x| x * scale).collect()
            }
            Geometry::LInf => (0..n)
                .map(|_| {
                    if rng::uniform01(&mut rng) < 0.8 {
                        r * rng::rademacher(&mut rng)
                    } else {
                        rng::uniform(&mut rng, -r, r)
                    }
                })
                .collect(),
            Geometry::OperatorNorm => {
                let (rows, cols) = shape_dims(shape);
                if rng::uniform01(&mut rng) < 0.5 {
                    random_partial_isometry(&mut rng, rows, cols)
                        .into_iter()
                        .map(|x| x * r)
                        .collect()
                } else {
                    let z = rng::standard_normals(&mut rng, n);
                    let top = spectral_norm_power(&z, rows, cols);
                    let scale = r * rng::uniform01(&mut rng).max(0.5) / top.max(1e-300);
                    z.into_iter().map(|x| x * scale).collect::<Vec<f64>>()
                }
            }
        };
        let cand = ParamValue::new(shape, data)?;
        // Power iteration underestimates σ₁ slightly; shrink to stay feasible.
        let cand = if set.geometry() == Geometry::OperatorNorm {
            let s = set.gauge(&cand)?;
            if s > r {
                cand.scaled(r / s)?
            } else {
                cand
            }
        } else {
            cand
        };
        let val = g.dot(&cand)?;
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, cand));
        }
    }
    Ok(best.expect("num_samples >= 1").1)
}

fn shape_dims(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Matrix(m, n) => (m, n),
        Shape::Vector(n) => (n, 1),
    }
}

/// Row-major `rows x cols` matrix with orthonormal columns (or rows, when
/// wide), built by Gram-Schmidt on Gaussian vectors.
fn random_partial_isometry(rng: &mut impl rand_core::RngCore, rows: usize, cols: usize) -> Vec<f64> {
    let (len, count) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = rng::standard_normals(rng, len);
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows >= cols { basis[j][i] } else { basis[i][j] };
        }
    }
    out
}

fn spectral_norm_power(a: &[f64], rows: usize, cols: usize) -> f64 {
    let mut x = vec![1.0 / libm::sqrt(cols as f64); cols];
    let mut sigma = 0.0;
    for _ in 0..200 {
        let mut y = vec![0.0; rows];
        for i in 0..rows {
            y[i] = (0..cols).map(|j| a[i * cols + j] * x[j]).sum();
        }
        let mut z = vec![0.0; cols];
        for j in 0..cols {
            z[j] = (0..rows).map(|i| a[i * cols + j] * y[i]).sum();
        }
        let norm = libm::sqrt(z.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return 0.0;
        }
        let next = libm::sqrt(norm);
        x = z.into_iter().map(|v| v / norm).collect();
        if (next - sigma).abs() <= 1e-14 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(d: &[f64]) -> ParamValue {
        ParamValue::vector(d.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_lmo() {
        let set = LmoSet::euclidean(1.0).unwrap();
        let out = set.lmo(&v(&[3.0, 4.0])).unwrap();
        assert!((out.data()[0] + 0.6).abs() < 1e-15);
        assert!((out.data()[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn linf_lmo_uses_zero_sign_at_zero() {
        let set = LmoSet::linf(1.0).unwrap();
        assert_eq!(set.lmo(&v(&[2.0, -3.0, 0.0])).unwrap(), v(&[-1.0, 1.0, 0.0]));
    }

    #[test]
    fn operator_lmo_on_diagonal() {
        let set = LmoSet::operator_norm(1.0).unwrap();
        let g = ParamValue::diag(&[2.0, -1.0]).unwrap();
        let out = set.lmo(&g).unwrap();
        let expect = ParamValue::diag(&[-1.0, 1.0]).unwrap();
        assert!(out.distance(&expect).unwrap() < 1e-14);
        assert!((g.dot(&out).unwrap() + 3.0).abs() < 1e-14);
    }

    #[test]
    fn operator_lmo_drops_null_directions() {
        let set = LmoSet::operator_norm(1.0).unwrap();
        let g = ParamValue::diag(&[3.0, 0.0]).unwrap();
        let out = set.lmo(&g).unwrap();
        let expect = ParamValue::diag(&[-1.0, 0.0]).unwrap();
        assert!(out.distance(&expect).unwrap() < 1e-14);
    }

    #[test]
    fn zero_query_returns_origin() {
        for set in [
            LmoSet::euclidean(1.0).unwrap(),
            LmoSet::linf(2.0).unwrap(),
        ] {
            assert!(set.lmo(&v(&[0.0, 0.0])).unwrap().is_zero());
        }
        let z = ParamValue::zeros(Shape::Matrix(2, 3));
        assert!(LmoSet::operator_norm(1.0).unwrap().lmo(&z).unwrap().is_zero());
    }

    #[test]
    fn operator_geometry_rejects_vectors() {
        let set = LmoSet::operator_norm(1.0).unwrap();
        assert!(matches!(set.lmo(&v(&[1.0])), Err(Error::NotMatrix { .. })));
        assert!(set.support_value(&v(&[1.0])).is_err());
    }

    #[test]
    fn radius_must_be_positive() {
        assert!(LmoSet::euclidean(0.0).is_err());
        assert!(LmoSet::linf(-1.0).is_err());
        assert!(LmoSet::euclidean(f64::NAN).is_err());
    }

    #[test]
    fn support_values() {
        assert_eq!(LmoSet::euclidean(1.0).unwrap().support_value(&v(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(LmoSet::linf(2.0).unwrap().support_value(&v(&[1.0, -1.0, 1.0])).unwrap(), 6.0);
        let d = ParamValue::diag(&[2.0, -1.0]).unwrap();
        let h = LmoSet::operator_norm(1.0).unwrap().support_value(&d).unwrap();
        assert!((h - 3.0).abs() < 1e-14);
    }

    #[test]
    fn diameters() {
        let s = Shape::Vector(4);
        assert_eq!(LmoSet::euclidean(1.0).unwrap().diameter(s).unwrap(), 2.0);
        assert_eq!(LmoSet::euclidean(0.5).unwrap().diameter(s).unwrap(), 1.0);
        assert_eq!(LmoSet::euclidean(3.0).unwrap().diameter(s).unwrap(), 6.0);
        assert_eq!(LmoSet::linf(1.0).unwrap().diameter(s).unwrap(), 4.0);
        let op = LmoSet::operator_norm(1.0).unwrap();
        assert!((op.diameter(Shape::Matrix(3, 2)).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(op.diameter(s).is_err());
    }

    #[test]
    fn rsf_examples() {
        let euc = LmoSet::euclidean(1.0).unwrap();
        let r = rsf(&euc, 0.0, &v(&[7.0, -1.0]), &v(&[3.0, 4.0])).unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.decay_part, 0.0);

        let zero = rsf(&euc, 0.3, &v(&[0.5, 0.5]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(zero.value, 0.0);

        let linf = LmoSet::linf(1.0).unwrap();
        let r = rsf(&linf, 0.5, &v(&[1.0, 0.0]), &v(&[-2.0, 0.0])).unwrap();
        assert_eq!(r.support_part, 2.0);
        assert_eq!(r.decay_part, -1.0);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn rsf_matches_sampled_supremum() {
        // sup over v in the ℓ∞ ball of ⟨-∇F, v - λw⟩, by sampling.
        let linf = LmoSet::linf(1.0).unwrap();
        let w = v(&[1.0, 0.0]);
        let grad = v(&[-2.0, 0.0]);
        let neg = grad.scaled(-1.0).unwrap();
        let best = lmo_bruteforce(&linf, &grad, 20_000, 5).unwrap();
        let sampled = neg.dot(&best).unwrap() - 0.5 * neg.dot(&w).unwrap();
        let exact = rsf(&linf, 0.5, &w, &grad).unwrap().value;
        assert!((sampled - exact).abs() < 1e-3, "{sampled} vs {exact}");
    }

    #[test]
    fn rsf_rejects_negative_lambda() {
        let euc = LmoSet::euclidean(1.0).unwrap();
        assert!(rsf(&euc, -0.1, &v(&[1.0]), &v(&[1.0])).is_err());
        assert!(rsf(&euc, 0.0, &v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn frank_wolfe_gap_scales_to_rsf() {
        let set = LmoSet::linf(1.0).unwrap();
        let w = v(&[0.5, -0.25, 1.0]);
        let g = v(&[0.3, -1.2, 0.7]);
        let lam = 0.8;
        let gap = frank_wolfe_gap(&set, lam, &w, &g).unwrap();
        let psi = rsf(&set, lam, &w, &g).unwrap().value;
        assert!((lam * gap - psi).abs() < 1e-14);
        assert!(frank_wolfe_gap(&set, 0.0, &w, &g).is_err());
    }

    #[test]
    fn bruteforce_examples() {
        let euc = LmoSet::euclidean(1.0).unwrap();
        let g = v(&[1.0, 0.0]);
        let best = lmo_bruteforce(&euc, &g, 100_000, 1).unwrap();
        assert!((g.dot(&best).unwrap() + 1.0).abs() < 1e-2);

        let linf = LmoSet::linf(1.0).unwrap();
        let g = v(&[1.0, 1.0]);
        let best = lmo_bruteforce(&linf, &g, 10_000, 2).unwrap();
        assert!((g.dot(&best).unwrap() + 2.0).abs() < 1e-2);

        let one = lmo_bruteforce(&euc, &v(&[0.3, -0.2]), 1, 3).unwrap();
        assert!(euc.contains(&one, 1e-12).unwrap());
        assert!(lmo_bruteforce(&euc, &g, 0, 3).is_err());
    }

    #[test]
    fn bruteforce_operator_samples_are_feasible() {
        let op = LmoSet::operator_norm(1.5).unwrap();
        let g = ParamValue::matrix(2, 3, alloc::vec![1.0, -2.0, 0.5, 0.0, 1.0, 3.0]).unwrap();
        for seed in 0..20 {
            let p = lmo_bruteforce(&op, &g, 1, seed).unwrap();
            assert!(op.contains(&p, 1e-12).unwrap());
        }
        let best = lmo_bruteforce(&op, &g, 10_000, 9).unwrap();
        let exact = g.dot(&op.lmo(&g).unwrap()).unwrap();
        assert!(exact <= g.dot(&best).unwrap() + 1e-9);
    }

    #[test]
    fn newton_schulz_fixed_point_on_rotation() {
        let (c, s) = (libm::cos(0.7), libm::sin(0.7));
        let rot = ParamValue::matrix(2, 2, alloc::vec![c, -s, s, c]).unwrap();
        let out = newton_schulz_orthogonalize(&rot, 5).unwrap();
        assert!(out.distance(&rot).unwrap() < 1e-6);
    }

    #[test]
    fn newton_schulz_on_diag() {
        let d = ParamValue::diag(&[2.0, 1.0]).unwrap();
        let out = newton_schulz_orthogonalize(&d, 5).unwrap();
        let err = out.sub(&ParamValue::identity(2)).unwrap();
        assert!(err.norm(NormKind::Spectral).unwrap() < 1e-2);
    }

    #[test]
    fn newton_schulz_degrades_on_tiny_singular_values() {
        let d = ParamValue::diag(&[1.0, 1e-6]).unwrap();
        let out = newton_schulz_orthogonalize(&d, 5).unwrap();
        // The dominant direction is recovered, the tiny one is barely moved.
        assert!((out.data()[0] - 1.0).abs() < 1e-6);
        assert!(out.data()[3] < 1e-3);
        let more = newton_schulz_orthogonalize(&d, 50).unwrap();
        assert!((more.data()[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn newton_schulz_rejects_zero_and_tall_inputs_work() {
        let z = ParamValue::zeros(Shape::Matrix(2, 2));
        assert_eq!(newton_schulz_orthogonalize(&z, 5).unwrap_err(), Error::ZeroMatrix);
        let tall = ParamValue::matrix(3, 2, alloc::vec![3.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let out = newton_schulz_orthogonalize(&tall, 8).unwrap();
        let exact = polar_factor(&tall).unwrap();
        assert!(out.distance(&exact).unwrap() < 1e-6);
    }

    #[test]
    fn muon_quintic_lands_in_a_band() {
        let d = ParamValue::diag(&[2.0, 1.0]).unwrap();
        let out = newton_schulz_with(&d, 5, NsVariant::MuonQuintic).unwrap();
        for k in [0, 3] {
            assert!(out.data()[k] > 0.6 && out.data()[k] < 1.2, "{}", out.data()[k]);
        }
        let set = LmoSet::operator_norm(1.0)
            .unwrap()
            .with_op_method(OpMethod::NewtonSchulz {
                iterations: 5,
                variant: NsVariant::MuonQuintic,
            })
            .unwrap();
        assert!(set.lmo(&d).is_ok());
    }
}
