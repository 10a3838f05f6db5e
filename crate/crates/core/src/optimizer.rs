//! Unified stochastic LMO update and its specializations.
//!
//! One step with query point `x_t`, iterate `w_t` and buffer `m_{t-1}`:
//!
//! ```text
//! d   = ∇f(x_t; ξ_t) - ∇f(x_{t-1}; ξ_t)
//! g_t = β₁ m_{t-1} + (1-β₁) ∇f(x_t; ξ_t) + α₁ d
//! m_t = β₂ m_{t-1} + (1-β₂) ∇f(x_t; ξ_t) + α₂ d
//! v_t = LMO(g_t)
//! x_{t+1} = (1-λη₁) w_t + η₁ v_t
//! w_{t+1} = (1-λη₂) w_t + η₂ v_t
//! ```
//!
//! Points and buffers are lists of parameter groups with one [`LmoSet`] per
//! group; all scalars are shared across groups.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{combine, ParamValue};
use crate::lmo::{check_groups, LmoSet};
use crate::problems::StochasticOracle;
use crate::rng::{SampleId, SampleStream};

/// Slack used when checking the equality constraints of a method class.
const CLASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedParams {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodClass {
    StochasticLmo,
    VarianceReduced,
    Igt,
}

impl MethodClass {
    pub fn name(&self) -> &'static str {
        match self {
            MethodClass::StochasticLmo => "stochastic_lmo",
            MethodClass::VarianceReduced => "variance_reduced",
            MethodClass::Igt => "igt",
        }
    }

    /// Stochastic gradient evaluations per step.
    pub fn grads_per_step(&self) -> u64 {
        match self {
            MethodClass::VarianceReduced => 2,
            _ => 1,
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CLASS_TOL * a.abs().max(b.abs()).max(1.0)
}

impl UnifiedParams {
    /// Plain momentum LMO with `η₁ = η₂ = η`.
    pub fn stochastic_lmo(beta1: f64, beta2: f64, lambda: f64, eta: f64) -> Result<Self> {
        Self {
            beta1,
            beta2,
            alpha1: 0.0,
            alpha2: 0.0,
            lambda,
            eta1: eta,
            eta2: eta,
        }
        .validated()
    }

    pub fn variance_reduced(
        beta1: f64,
        beta2: f64,
        alpha1: f64,
        alpha2: f64,
        lambda: f64,
        eta: f64,
    ) -> Result<Self> {
        Self {
            beta1,
            beta2,
            alpha1,
            alpha2,
            lambda,
            eta1: eta,
            eta2: eta,
        }
        .validated()
    }

    /// Transported-gradient variant: `η₁ = η₂ / (1-β₂)`.
    pub fn igt(beta1: f64, beta2: f64, lambda: f64, eta2: f64) -> Result<Self> {
        Self {
            beta1,
            beta2,
            alpha1: 0.0,
            alpha2: 0.0,
            lambda,
            eta1: eta2 / (1.0 - beta2),
            eta2,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.beta1,
            self.beta2,
            self.alpha1,
            self.alpha2,
            self.lambda,
            self.eta1,
            self.eta2,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(invalid!("non-finite optimizer parameter in {self:?}"));
        }
        if !(0.0 <= self.beta1 && self.beta1 <= self.beta2 && self.beta2 < 1.0) {
            return Err(invalid!(
                "need 0 <= beta1 <= beta2 < 1, got beta1={} beta2={}",
                self.beta1,
                self.beta2
            ));
        }
        if self.lambda < 0.0 {
            return Err(invalid!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) {
            return Err(invalid!(
                "step sizes must be positive, got eta1={} eta2={}",
                self.eta1,
                self.eta2
            ));
        }
        for (name, eta) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if self.lambda * eta > 1.0 {
                return Err(invalid!(
                    "lambda*{name} = {} exceeds 1",
                    self.lambda * eta
                ));
            }
        }
        Ok(())
    }

    /// Checks the equality constraints that define `class`.
    pub fn check_class(&self, class: MethodClass) -> Result<()> {
        self.validate()?;
        let alphas_zero = self.alpha1 == 0.0 && self.alpha2 == 0.0;
        match class {
            MethodClass::StochasticLmo => {
                if !alphas_zero {
                    return Err(invalid!("stochastic LMO requires alpha1 = alpha2 = 0"));
                }
                if self.eta1 != self.eta2 {
                    return Err(invalid!("stochastic LMO requires eta1 = eta2"));
                }
            }
            MethodClass::VarianceReduced => {
                if self.eta1 != self.eta2 {
                    return Err(invalid!("variance reduction requires eta1 = eta2"));
                }
            }
            MethodClass::Igt => {
                if !alphas_zero {
                    return Err(invalid!("IGT requires alpha1 = alpha2 = 0"));
                }
                let want = self.eta2 / (1.0 - self.beta2);
                if !close(self.eta1, want) {
                    return Err(invalid!(
                        "IGT requires eta1 = eta2/(1-beta2) = {want}, got {}",
                        self.eta1
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn uses_correction(&self) -> bool {
        self.alpha1 != 0.0 || self.alpha2 != 0.0
    }
}

/// Parameters as a function of the step index.
pub trait ParamSchedule {
    fn params_at(&self, t: u64) -> UnifiedParams;
}

impl ParamSchedule for UnifiedParams {
    fn params_at(&self, _t: u64) -> UnifiedParams {
        *self
    }
}

impl<F: Fn(u64) -> UnifiedParams> ParamSchedule for F {
    fn params_at(&self, t: u64) -> UnifiedParams {
        self(t)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub t: u64,
    pub w: Vec<ParamValue>,
    /// Query point `x_t`.
    pub x: Vec<ParamValue>,
    /// Previous query point `x_{t-1}`, used by the correction term.
    pub x_prev: Vec<ParamValue>,
    /// Momentum buffer `m_{t-1}` entering step `t`.
    pub m: Vec<ParamValue>,
    /// The sample drawn for `m_{-1}`; consumed by step 0.
    pub pending_sample: Option<SampleId>,
    stream: SampleStream,
}

impl OptimizerState {
    fn next_sample(&mut self) -> SampleId {
        match self.pending_sample.take() {
            Some(s) => s,
            None => self.stream.next().expect("sample stream is infinite"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub sample: SampleId,
    pub g: Vec<ParamValue>,
    pub v: Vec<ParamValue>,
    /// `‖g_t - ∇F(w_t)‖` over all groups.
    pub epsilon_hat_norm: Option<f64>,
    /// `‖w_{t+1} - w_t‖` over all groups.
    pub step_norm: f64,
    /// Every group of `g_t` was exactly zero.
    pub degenerate: bool,
}

/// Draws `ξ₀` from `seed`, sets `m_{-1} = ∇f(w₀; ξ₀)` and `x_{-1} = x₀ = w₀`.
pub fn init_state(
    w0: Vec<ParamValue>,
    oracle: &dyn StochasticOracle,
    seed: u64,
) -> Result<OptimizerState> {
    let shapes = oracle.shapes();
    check_groups(shapes.len(), w0.len())?;
    for (p, s) in w0.iter().zip(&shapes) {
        if p.shape() != *s {
            return Err(Error::ShapeMismatch {
                left: *s,
                right: p.shape(),
            });
        }
    }
    let mut stream = SampleStream::new(seed);
    let xi0 = stream.next().expect("sample stream is infinite");
    let m = oracle.sample_grad(&w0, xi0)?;
    Ok(OptimizerState {
        t: 0,
        x: w0.clone(),
        x_prev: w0.clone(),
        w: w0,
        m,
        pending_sample: Some(xi0),
        stream,
    })
}

fn tag(quantity: &'static str, step: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::NonFiniteStep { quantity, step },
        other => other,
    }
}

fn grad_at(
    oracle: &dyn StochasticOracle,
    at: &[ParamValue],
    sample: SampleId,
    quantity: &'static str,
    step: u64,
) -> Result<Vec<ParamValue>> {
    let g = oracle.sample_grad(at, sample).map_err(tag(quantity, step))?;
    if g.iter().any(|p| p.data().iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFiniteStep { quantity, step });
    }
    Ok(g)
}

fn groupwise(
    coeffs: &[f64],
    values: &[&[ParamValue]],
    quantity: &'static str,
    step: u64,
) -> Result<Vec<ParamValue>> {
    let groups = values[0].len();
    (0..groups)
        .map(|i| {
            let parts: Vec<&ParamValue> = values.iter().map(|v| &v[i]).collect();
            combine(coeffs, &parts).map_err(tag(quantity, step))
        })
        .collect()
}

fn lmo_groups(
    sets: &[LmoSet],
    g: &[ParamValue],
    step: u64,
) -> Result<Vec<ParamValue>> {
    sets.iter()
        .zip(g)
        .map(|(s, gi)| s.lmo(gi).map_err(tag("v_t", step)))
        .collect()
}

/// `√Σ‖a_i - b_i‖²` over groups.
pub fn group_distance(a: &[ParamValue], b: &[ParamValue]) -> Result<f64> {
    check_groups(a.len(), b.len())?;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x.distance(y)?;
        s += d * d;
    }
    Ok(libm::sqrt(s))
}

/// `‖g - ∇F(w)‖` over groups.
pub fn epsilon_hat(g: &[ParamValue], grad_f_at_w: &[ParamValue]) -> Result<f64> {
    group_distance(g, grad_f_at_w)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    state: &mut OptimizerState,
    sample: SampleId,
    g: Vec<ParamValue>,
    v: Vec<ParamValue>,
    w_next: Vec<ParamValue>,
    x_next: Vec<ParamValue>,
    m_next: Vec<ParamValue>,
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    let degenerate = g.iter().all(|p| p.is_zero());
    if degenerate {
        log::debug!("step {}: query g_t is zero, pure weight decay", state.t);
    }
    let full = oracle.full_grad(&state.w)?;
    let epsilon_hat_norm = Some(epsilon_hat(&g, &full)?);
    let step_norm = group_distance(&w_next, &state.w)?;
    let x_old = core::mem::replace(&mut state.x, x_next);
    state.x_prev = x_old;
    state.w = w_next;
    state.m = m_next;
    state.t += 1;
    Ok(StepDiagnostics {
        sample,
        g,
        v,
        epsilon_hat_norm,
        step_norm,
        degenerate,
    })
}

fn check_sets(state: &OptimizerState, sets: &[LmoSet]) -> Result<()> {
    check_groups(state.w.len(), sets.len())
}

/// One unified step; mutates `state` and reports the step internals.
pub fn step_unified(
    state: &mut OptimizerState,
    params: &UnifiedParams,
    sets: &[LmoSet],
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    params.validate()?;
    check_sets(state, sets)?;
    let t = state.t;
    let xi = state.next_sample();
    let grad = grad_at(oracle, &state.x, xi, "grad_f(x_t)", t)?;
    let mut g_terms: Vec<f64> = alloc::vec![params.beta1, 1.0 - params.beta1];
    let mut m_terms: Vec<f64> = alloc::vec![params.beta2, 1.0 - params.beta2];
    let prev;
    let mut values: Vec<&[ParamValue]> = alloc::vec![&state.m, &grad];
    if params.uses_correction() {
        // Same ξ_t at both points; at t = 0 the points coincide.
        prev = grad_at(oracle, &state.x_prev, xi, "grad_f(x_prev)", t)?;
        g_terms[1] += params.alpha1;
        g_terms.push(-params.alpha1);
        m_terms[1] += params.alpha2;
        m_terms.push(-params.alpha2);
        values.push(&prev);
    }
    let g = groupwise(&g_terms, &values, "g_t", t)?;
    let m_next = groupwise(&m_terms, &values, "m_t", t)?;
    let v = lmo_groups(sets, &g, t)?;
    let x_next = groupwise(
        &[1.0 - params.lambda * params.eta1, params.eta1],
        &[&state.w, &v],
        "x_next",
        t,
    )?;
    let w_next = groupwise(
        &[1.0 - params.lambda * params.eta2, params.eta2],
        &[&state.w, &v],
        "w_next",
        t,
    )?;
    finish(state, xi, g, v, w_next, x_next, m_next, oracle)
}

/// Momentum LMO in its standalone form: the query point is always `w_t` and
/// no transported point is kept.
pub fn step_stochastic_lmo(
    state: &mut OptimizerState,
    params: &UnifiedParams,
    sets: &[LmoSet],
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    params.check_class(MethodClass::StochasticLmo)?;
    check_sets(state, sets)?;
    let t = state.t;
    let xi = state.next_sample();
    let grad = grad_at(oracle, &state.w, xi, "grad_f(w_t)", t)?;
    let mut g = Vec::with_capacity(grad.len());
    let mut m_next = Vec::with_capacity(grad.len());
    let mut w_next = Vec::with_capacity(grad.len());
    let mut v = Vec::with_capacity(grad.len());
    let eta = params.eta2;
    for (i, set) in sets.iter().enumerate() {
        let gi = combine(&[params.beta1, 1.0 - params.beta1], &[&state.m[i], &grad[i]])
            .map_err(tag("g_t", t))?;
        let mi = combine(&[params.beta2, 1.0 - params.beta2], &[&state.m[i], &grad[i]])
            .map_err(tag("m_t", t))?;
        let vi = set.lmo(&gi).map_err(tag("v_t", t))?;
        let mut wi = state.w[i].scaled(1.0 - params.lambda * eta).map_err(tag("w_next", t))?;
        wi.axpy(eta, &vi).map_err(tag("w_next", t))?;
        g.push(gi);
        m_next.push(mi);
        v.push(vi);
        w_next.push(wi);
    }
    let x_next = w_next.clone();
    finish(state, xi, g, v, w_next, x_next, m_next, oracle)
}

/// Transported-gradient step written through the extrapolation
/// `x_{t+1} = w_{t+1} + β₂/(1-β₂) (w_{t+1} - w_t)`.
pub fn step_igt(
    state: &mut OptimizerState,
    params: &UnifiedParams,
    sets: &[LmoSet],
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    params.check_class(MethodClass::Igt)?;
    check_sets(state, sets)?;
    let t = state.t;
    let xi = state.next_sample();
    let grad = grad_at(oracle, &state.x, xi, "grad_f(x_t)", t)?;
    let values: [&[ParamValue]; 2] = [&state.m, &grad];
    let g = groupwise(&[params.beta1, 1.0 - params.beta1], &values, "g_t", t)?;
    let m_next = groupwise(&[params.beta2, 1.0 - params.beta2], &values, "m_t", t)?;
    let v = lmo_groups(sets, &g, t)?;
    let w_next = groupwise(
        &[1.0 - params.lambda * params.eta2, params.eta2],
        &[&state.w, &v],
        "w_next",
        t,
    )?;
    let c = params.beta2 / (1.0 - params.beta2);
    let x_next = groupwise(&[1.0 + c, -c], &[&w_next, &state.w], "x_next", t)?;
    finish(state, xi, g, v, w_next, x_next, m_next, oracle)
}

/// Parameters of the approximate-Nesterov form, where the buffer is updated
/// first and the query mixes the fresh buffer with the fresh gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NesterovParams {
    pub beta1_bar: f64,
    pub beta2: f64,
    pub lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl NesterovParams {
    /// Equivalent two-momentum parameters.
    pub fn to_unified(&self) -> Result<UnifiedParams> {
        UnifiedParams {
            beta1: nesterov_reparam(self.beta1_bar, self.beta2)?,
            beta2: self.beta2,
            alpha1: 0.0,
            alpha2: 0.0,
            lambda: self.lambda,
            eta1: self.eta1,
            eta2: self.eta2,
        }
        .validated()
    }
}

/// `m_t = β₂ m_{t-1} + (1-β₂)∇f(x_t)`, then `g_t = β̄₁ m_t + (1-β̄₁)∇f(x_t)`.
pub fn step_nesterov(
    state: &mut OptimizerState,
    params: &NesterovParams,
    sets: &[LmoSet],
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    params.to_unified()?;
    check_sets(state, sets)?;
    let t = state.t;
    let xi = state.next_sample();
    let grad = grad_at(oracle, &state.x, xi, "grad_f(x_t)", t)?;
    let m_next = groupwise(
        &[params.beta2, 1.0 - params.beta2],
        &[&state.m, &grad],
        "m_t",
        t,
    )?;
    let g = groupwise(
        &[params.beta1_bar, 1.0 - params.beta1_bar],
        &[&m_next, &grad],
        "g_t",
        t,
    )?;
    let v = lmo_groups(sets, &g, t)?;
    let x_next = groupwise(
        &[1.0 - params.lambda * params.eta1, params.eta1],
        &[&state.w, &v],
        "x_next",
        t,
    )?;
    let w_next = groupwise(
        &[1.0 - params.lambda * params.eta2, params.eta2],
        &[&state.w, &v],
        "w_next",
        t,
    )?;
    finish(state, xi, g, v, w_next, x_next, m_next, oracle)
}

/// `β₁ = β̄₁ β₂`.
pub fn nesterov_reparam(beta1_bar: f64, beta2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta1_bar) {
        return Err(invalid!("beta1_bar must lie in [0, 1], got {beta1_bar}"));
    }
    if !(0.0..1.0).contains(&beta2) {
        return Err(invalid!("beta2 must lie in [0, 1), got {beta2}"));
    }
    Ok(beta1_bar * beta2)
}

/// Factor `1/(1-β₂)` relating the normalized momentum used here to an
/// unnormalized accumulation `m ← β₂ m + ∇f`.
pub fn muon_scaling_note(beta2: f64) -> Result<f64> {
    if beta2.partial_cmp(&1.0) != Some(core::cmp::Ordering::Less) || !beta2.is_finite() {
        return Err(invalid!("beta2 must be below 1, got {beta2}"));
    }
    Ok(1.0 / (1.0 - beta2))
}

/// Constant-parameter choices that balance the terms of each rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremSchedule {
    /// Momentum LMO with noise: `η = 1/(R T^{3/4})`, `β₂ = 1 - T^{-1/2}`.
    Thm1,
    /// Variance reduction: `η = 1/(R T^{2/3})`, `β₂ = 1 - T^{-2/3}`,
    /// `α₁ = β₁`, `α₂ = β₂`.
    Cor1,
    /// IGT with noise: `η = 1/(R T^{5/7})`, `β₂ = 1 - T^{-4/7}`.
    Cor2,
    /// IGT without noise: `η = 1/(R √T)`, `β₁ = β₂ = 1 - T^{-1/4}`.
    Cor3,
    /// Momentum LMO without noise: `η = 1/(R √T)`, `β₁ = β₂ = β` fixed.
    Cor4,
}

impl TheoremSchedule {
    pub fn for_class(class: MethodClass, sigma_positive: bool) -> Self {
        match (class, sigma_positive) {
            (MethodClass::StochasticLmo, true) => TheoremSchedule::Thm1,
            (MethodClass::StochasticLmo, false) => TheoremSchedule::Cor4,
            (MethodClass::VarianceReduced, _) => TheoremSchedule::Cor1,
            (MethodClass::Igt, true) => TheoremSchedule::Cor2,
            (MethodClass::Igt, false) => TheoremSchedule::Cor3,
        }
    }

    pub fn class(&self) -> MethodClass {
        match self {
            TheoremSchedule::Thm1 | TheoremSchedule::Cor4 => MethodClass::StochasticLmo,
            TheoremSchedule::Cor1 => MethodClass::VarianceReduced,
            TheoremSchedule::Cor2 | TheoremSchedule::Cor3 => MethodClass::Igt,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TheoremSchedule::Thm1 => "thm1",
            TheoremSchedule::Cor1 => "cor1",
            TheoremSchedule::Cor2 => "cor2",
            TheoremSchedule::Cor3 => "cor3",
            TheoremSchedule::Cor4 => "cor4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "thm1" => TheoremSchedule::Thm1,
            "cor1" => TheoremSchedule::Cor1,
            "cor2" => TheoremSchedule::Cor2,
            "cor3" => TheoremSchedule::Cor3,
            "cor4" => TheoremSchedule::Cor4,
            _ => return None,
        })
    }
}

/// Schedule inputs besides horizon and diameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScheduleOptions {
    pub lambda: f64,
    /// Replaces the default `β₁`; for `Cor3`/`Cor4` it sets the common `β`.
    pub beta1: Option<f64>,
}

/// Parameters for `schedule` at horizon `horizon` and diameter `diameter`.
///
/// Where the bound allows an interval for `1-β₁`, the midpoint exponent is
/// used: `T^{-3/8}`, `T^{-1/2}`, `T^{-3/7}` for `Thm1`, `Cor1`, `Cor2`.
pub fn theorem_schedule(
    schedule: TheoremSchedule,
    horizon: u64,
    diameter: f64,
    opts: ScheduleOptions,
) -> Result<UnifiedParams> {
    if horizon < 2 {
        return Err(invalid!("horizon must be at least 2, got {horizon}"));
    }
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(invalid!("diameter must be positive, got {diameter}"));
    }
    let t = horizon as f64;
    let pw = |e: f64| libm::pow(t, e);
    let lambda = opts.lambda;
    match schedule {
        TheoremSchedule::Thm1 => {
            let beta2 = 1.0 - pw(-0.5);
            let beta1 = opts.beta1.unwrap_or(1.0 - pw(-3.0 / 8.0));
            UnifiedParams::stochastic_lmo(beta1, beta2, lambda, 1.0 / (diameter * pw(0.75)))
        }
        TheoremSchedule::Cor1 => {
            let beta2 = 1.0 - pw(-2.0 / 3.0);
            let beta1 = opts.beta1.unwrap_or(1.0 - pw(-0.5));
            UnifiedParams::variance_reduced(
                beta1,
                beta2,
                beta1,
                beta2,
                lambda,
                1.0 / (diameter * pw(2.0 / 3.0)),
            )
        }
        TheoremSchedule::Cor2 => {
            let beta2 = 1.0 - pw(-4.0 / 7.0);
            let beta1 = opts.beta1.unwrap_or(1.0 - pw(-3.0 / 7.0));
            UnifiedParams::igt(beta1, beta2, lambda, 1.0 / (diameter * pw(5.0 / 7.0)))
        }
        TheoremSchedule::Cor3 => {
            let beta = opts.beta1.unwrap_or(1.0 - pw(-0.25));
            UnifiedParams::igt(beta, beta, lambda, 1.0 / (diameter * pw(0.5)))
        }
        TheoremSchedule::Cor4 => {
            let beta = opts.beta1.unwrap_or(0.0);
            UnifiedParams::stochastic_lmo(beta, beta, lambda, 1.0 / (diameter * pw(0.5)))
        }
    }
}

/// Dispatches to the step routine matching `class`.
pub fn step_for_class(
    class: MethodClass,
    state: &mut OptimizerState,
    params: &UnifiedParams,
    sets: &[LmoSet],
    oracle: &dyn StochasticOracle,
) -> Result<StepDiagnostics> {
    match class {
        MethodClass::StochasticLmo => step_stochastic_lmo(state, params, sets, oracle),
        MethodClass::VarianceReduced => {
            params.check_class(class)?;
            step_unified(state, params, sets, oracle)
        }
        MethodClass::Igt => step_igt(state, params, sets, oracle),
    }
}
