//! Numerical checks of the per-step lemmas behind the rate bounds.
//!
//! Every check reports its worst margin: `bound - measured`, so a negative
//! margin is a violation.

use lmoopt_core::linalg::{combine, ParamValue};
use lmoopt_core::lmo::{diameter_groups, rsf_groups, LmoSet};
use lmoopt_core::optimizer::{
    epsilon_hat, group_distance, init_state, step_for_class, MethodClass, UnifiedParams,
};
use lmoopt_core::problems::{
    make_logistic_finite_sum, make_matrix_quadratic, make_noisy_quadratic, make_nonconvex_smooth,
    NoiseModel, StochasticOracle,
};
use lmoopt_core::rng::{self, NoiseKey, NoiseRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const GEOMETRY_TOL: f64 = 1e-12;
pub const EXTRAPOLATION_TOL: f64 = 1e-10;
pub const DESCENT_TOL: f64 = 1e-9;
pub const REMAINDER_TOL: f64 = 1e-12;
pub const TRACKING_TOL: f64 = 1e-9;
pub const MARTINGALE_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Multiplies every iterate step by this factor after the optimizer has
    /// produced it. Only for exercising the failure path.
    pub tamper_step: Option<f64>,
    /// Monte-Carlo seeds for the martingale check.
    pub martingale_seeds: u64,
    pub steps: u64,
}

impl VerifyOptions {
    pub fn standard() -> Self {
        Self {
            tamper_step: None,
            martingale_seeds: 200,
            steps: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyEntry {
    pub lemma: String,
    pub problem: String,
    pub method: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub checks: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub all_pass: bool,
    pub entries: Vec<VerifyEntry>,
}

struct Case {
    problem: &'static str,
    method: &'static str,
    oracle: Box<dyn StochasticOracle>,
    sets: Vec<LmoSet>,
    class: MethodClass,
    params: UnifiedParams,
    start: Option<Vec<ParamValue>>,
}

fn quad(sigma: f64) -> Box<dyn StochasticOracle> {
    Box::new(
        make_noisy_quadratic(6, &[0.5, 1.0, 2.0, 3.0, 5.0, 8.0], NoiseModel::Additive { sigma }, 17)
            .expect("fixed quadratic"),
    )
}

fn cases(include_noisy: bool) -> Vec<Case> {
    let e = |r| LmoSet::euclidean(r).unwrap();
    let li = |r| LmoSet::linf(r).unwrap();
    let op = |r| LmoSet::operator_norm(r).unwrap();
    let slmo = |b1, b2, l, eta| UnifiedParams::stochastic_lmo(b1, b2, l, eta).unwrap();
    let vr = |b1, b2, l, eta| UnifiedParams::variance_reduced(b1, b2, b1, b2, l, eta).unwrap();
    let igt = |b1, b2, l, eta| UnifiedParams::igt(b1, b2, l, eta).unwrap();
    let mut out = vec![
        Case { problem: "quadratic", method: "stochastic_lmo/l2", oracle: quad(0.0), sets: vec![e(1.0)], class: MethodClass::StochasticLmo, params: slmo(0.9, 0.99, 0.0, 0.02), start: None },
        Case { problem: "quadratic", method: "stochastic_lmo/linf+decay", oracle: quad(0.0), sets: vec![li(1.0)], class: MethodClass::StochasticLmo, params: slmo(0.5, 0.9, 0.5, 0.05), start: Some(vec![ParamValue::vector(vec![1.0; 6]).unwrap()]) },
        Case { problem: "quadratic", method: "variance_reduced/l2", oracle: quad(0.0), sets: vec![e(1.0)], class: MethodClass::VarianceReduced, params: vr(0.8, 0.95, 0.0, 0.02), start: None },
        Case { problem: "quadratic", method: "igt/linf", oracle: quad(0.0), sets: vec![li(0.5)], class: MethodClass::Igt, params: igt(0.5, 0.9, 0.0, 0.01), start: None },
        Case { problem: "nonconvex", method: "igt/l2+decay", oracle: Box::new(make_nonconvex_smooth(5, 0.2, 0.0, 3).unwrap()), sets: vec![e(2.0)], class: MethodClass::Igt, params: igt(0.3, 0.8, 0.2, 0.02), start: Some(vec![ParamValue::vector(vec![1.5, -1.0, 0.5, 2.0, -2.5]).unwrap()]) },
        Case { problem: "nonconvex", method: "stochastic_lmo/linf", oracle: Box::new(make_nonconvex_smooth(5, 0.2, 0.0, 3).unwrap()), sets: vec![li(1.0)], class: MethodClass::StochasticLmo, params: slmo(0.0, 0.0, 0.0, 0.02), start: None },
        Case { problem: "matrix_quadratic", method: "igt/operator", oracle: Box::new(make_matrix_quadratic(4, 3, 5, 0.0, 6).unwrap()), sets: vec![op(1.0)], class: MethodClass::Igt, params: igt(0.5, 0.9, 0.0, 0.01), start: None },
        Case { problem: "matrix_quadratic", method: "stochastic_lmo/operator", oracle: Box::new(make_matrix_quadratic(4, 3, 5, 0.0, 6).unwrap()), sets: vec![op(1.0)], class: MethodClass::StochasticLmo, params: slmo(0.9, 0.99, 0.0, 0.02), start: None },
    ];
    if include_noisy {
        out.extend([
            Case { problem: "quadratic_noisy", method: "variance_reduced/linf", oracle: quad(0.5), sets: vec![li(1.0)], class: MethodClass::VarianceReduced, params: vr(0.8, 0.95, 0.1, 0.02), start: Some(vec![ParamValue::vector(vec![0.5; 6]).unwrap()]) },
            Case { problem: "logistic", method: "igt/l2", oracle: Box::new(make_logistic_finite_sum(60, 5, 8, 4).unwrap()), sets: vec![e(1.0)], class: MethodClass::Igt, params: igt(0.5, 0.9, 0.0, 0.05), start: None },
            Case { problem: "logistic", method: "variance_reduced/l2", oracle: Box::new(make_logistic_finite_sum(60, 5, 8, 4).unwrap()), sets: vec![e(1.0)], class: MethodClass::VarianceReduced, params: vr(0.5, 0.9, 0.0, 0.05), start: None },
            Case { problem: "coordinatewise_quadratic", method: "stochastic_lmo/linf", oracle: Box::new(make_noisy_quadratic(4, &[1.0, 2.0, 3.0, 4.0], NoiseModel::Coordinatewise { sigma: 0.5 }, 2).unwrap()), sets: vec![li(1.0)], class: MethodClass::StochasticLmo, params: slmo(0.5, 0.9, 0.0, 0.02), start: None },
        ]);
    }
    out
}

#[derive(Default)]
struct Worst {
    margin: f64,
    checks: u64,
    init: bool,
}

impl Worst {
    fn see(&mut self, margin: f64) {
        if !self.init || margin < self.margin {
            self.margin = margin;
            self.init = true;
        }
        self.checks += 1;
    }

    fn entry(&self, lemma: &str, problem: &str, method: &str, pass: bool, detail: String) -> VerifyEntry {
        VerifyEntry {
            lemma: lemma.into(),
            problem: problem.into(),
            method: method.into(),
            pass,
            worst_margin: self.margin,
            checks: self.checks,
            detail,
        }
    }
}

/// Step geometry, descent rule (noiseless cases), IGT extrapolation and
/// tracking error along one trajectory.
fn trajectory_checks(case: &Case, opts: &VerifyOptions) -> Result<Vec<VerifyEntry>> {
    let oracle = case.oracle.as_ref();
    let w0 = case.start.clone().unwrap_or_else(|| oracle.initial_point());
    let r = diameter_groups(&case.sets, &oracle.shapes())?;
    let p = case.params;
    let reg = oracle.regularity();
    let noiseless = reg.sigma == 0.0;
    let mut state = init_state(w0, oracle, 7)?;
    let mut geometry = Worst::default();
    let mut descent = Worst::default();
    let mut extrap = Worst::default();
    let mut ext_dist = Worst::default();
    let mut tracking = Worst::default();
    let c = p.beta2 / (1.0 - p.beta2);
    for _ in 0..opts.steps {
        let w = state.w.clone();
        let full = oracle.full_grad(&w)?;
        let psi = rsf_groups(&case.sets, p.lambda, &w, &full)?.value;
        let f_w = oracle.loss(&w)?;
        let diag = step_for_class(case.class, &mut state, &p, &case.sets, oracle)?;
        if let Some(k) = opts.tamper_step {
            state.w = state
                .w
                .iter()
                .zip(&w)
                .map(|(a, b)| combine(&[k, 1.0 - k], &[a, b]))
                .collect::<lmoopt_core::Result<_>>()?;
        }
        let step = group_distance(&state.w, &w)?;
        geometry.see(p.eta2 * r - step);
        let eps = epsilon_hat(&diag.g, &full)?;
        if noiseless {
            let f_next = oracle.loss(&state.w)?;
            let rhs = f_w - p.eta2 * psi + p.eta2 * r * eps + 0.5 * reg.lipschitz * p.eta2 * p.eta2 * r * r;
            descent.see(rhs - f_next);
            if case.class == MethodClass::StochasticLmo {
                let bound = p.beta1 / (1.0 - p.beta2) * reg.lipschitz * p.eta2 * r;
                tracking.see(bound - eps);
            }
        }
        if case.class == MethodClass::Igt {
            let pred: Vec<ParamValue> = state
                .w
                .iter()
                .zip(&w)
                .map(|(a, b)| combine(&[1.0 + c, -c], &[a, b]))
                .collect::<lmoopt_core::Result<_>>()?;
            extrap.see(-group_distance(&state.x, &pred)?);
            ext_dist.see((p.eta1 - p.eta2) * r - group_distance(&state.x, &state.w)?);
        }
    }
    let mut out = vec![geometry.entry(
        "step_geometry",
        case.problem,
        case.method,
        geometry.margin >= -GEOMETRY_TOL,
        format!("||w_(t+1) - w_t|| <= eta R with R = {r}; tolerance {GEOMETRY_TOL:e}"),
    )];
    if noiseless {
        out.push(descent.entry(
            "descent_rule",
            case.problem,
            case.method,
            descent.margin >= -DESCENT_TOL,
            format!("F(w+) <= F(w) - eta Psi + eta R eps + L eta^2 R^2 / 2; tolerance {DESCENT_TOL:e}"),
        ));
        if case.class == MethodClass::StochasticLmo {
            out.push(tracking.entry(
                "tracking_error",
                case.problem,
                case.method,
                tracking.margin >= -TRACKING_TOL,
                format!("||eps_hat|| <= beta1/(1-beta2) L eta R; tolerance {TRACKING_TOL:e}"),
            ));
        }
    }
    if case.class == MethodClass::Igt {
        out.push(extrap.entry(
            "igt_extrapolation",
            case.problem,
            case.method,
            extrap.margin >= -EXTRAPOLATION_TOL,
            format!("x_(t+1) = w_(t+1) + beta2/(1-beta2)(w_(t+1) - w_t); tolerance {EXTRAPOLATION_TOL:e}"),
        ));
        out.push(ext_dist.entry(
            "igt_transport_distance",
            case.problem,
            case.method,
            ext_dist.margin >= -GEOMETRY_TOL,
            format!("||x_t - w_t|| <= (eta1 - eta2) R; tolerance {GEOMETRY_TOL:e}"),
        ));
    }
    Ok(out)
}

/// `‖∇F(x) - ∇F(y) - ∇²F(y)(x-y)‖ ≤ ρ‖x-y‖²` on random pairs.
fn remainder_check(name: &str, oracle: &dyn StochasticOracle, pairs: usize, scale: f64) -> Result<VerifyEntry> {
    let rho = oracle.regularity().hessian_lipschitz;
    let mut rng_pts = NoiseKey::new(31).setup(2);
    let mut worst = Worst::default();
    let shapes = oracle.shapes();
    let draw = |rng: &mut NoiseRng, s: f64| -> Result<Vec<ParamValue>> {
        shapes
            .iter()
            .map(|&sh| {
                let d = rng::standard_normals(rng, sh.numel()).into_iter().map(|v| v * s).collect();
                Ok(ParamValue::new(sh, d)?)
            })
            .collect()
    };
    for k in 0..pairs {
        let y = draw(&mut rng_pts, scale)?;
        // Mix short and long separations.
        let sep = [1e-3, 1e-1, 1.0][k % 3];
        let d = draw(&mut rng_pts, sep)?;
        let x: Vec<ParamValue> = y.iter().zip(&d).map(|(a, b)| a.add(b)).collect::<lmoopt_core::Result<_>>()?;
        let hv = match oracle.hessian_vec(&y, &d) {
            Some(h) => h?,
            None => break,
        };
        let gx = oracle.full_grad(&x)?;
        let gy = oracle.full_grad(&y)?;
        let z: Vec<ParamValue> = gx
            .iter()
            .zip(&gy)
            .zip(&hv)
            .map(|((a, b), c)| combine(&[1.0, -1.0, -1.0], &[a, b, c]))
            .collect::<lmoopt_core::Result<_>>()?;
        let zn = z.iter().map(|p| p.l2() * p.l2()).sum::<f64>().sqrt();
        let dn2: f64 = d.iter().map(|p| p.l2() * p.l2()).sum();
        worst.see(rho * dn2 - zn);
    }
    Ok(worst.entry(
        "second_order_remainder",
        name,
        "-",
        worst.checks > 0 && worst.margin >= -REMAINDER_TOL,
        format!("||Z(x,y)|| <= rho ||x-y||^2 with rho = {rho}; tolerance {REMAINDER_TOL:e}"),
    ))
}

/// Monte-Carlo estimate of `E‖N_t‖²` for the momentum-weighted noise sum
///
/// `N_t = β₁β₂^{t-1}ε₀ + β₁(1-β₂) Σ_{s=1}^{t-1} β₂^{t-1-s} ε_s + (1-β₁)ε_t`
///
/// with `ε_s = ∇f(x_s; ξ_s) - ∇F(x_s)` recorded along optimizer runs.
pub fn martingale_check(seeds: u64, t: u64, beta1: f64, beta2: f64) -> Result<VerifyEntry> {
    let sigma = 0.5;
    let p = UnifiedParams::stochastic_lmo(beta1, beta2, 0.0, 0.01)?;
    let sets = [LmoSet::euclidean(1.0)?];
    let sq: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|seed| -> Result<f64> {
            let oracle = quad(sigma);
            let mut state = init_state(oracle.initial_point(), oracle.as_ref(), 1000 + seed)?;
            let mut eps: Vec<Vec<ParamValue>> = Vec::with_capacity(t as usize + 1);
            for _ in 0..=t {
                let x = state.x.clone();
                let d = step_for_class(MethodClass::StochasticLmo, &mut state, &p, &sets, oracle.as_ref())?;
                eps.push(oracle.noise(&x, d.sample)?);
            }
            let mut coeffs = Vec::with_capacity(t as usize + 1);
            coeffs.push(beta1 * beta2.powi(t as i32 - 1));
            for s in 1..t {
                coeffs.push(beta1 * (1.0 - beta2) * beta2.powi((t - 1 - s) as i32));
            }
            coeffs.push(1.0 - beta1);
            let parts: Vec<&ParamValue> = eps.iter().map(|e| &e[0]).collect();
            let n = combine(&coeffs, &parts)?;
            Ok(n.l2() * n.l2())
        })
        .collect::<Result<_>>()?;
    let mean = sq.iter().sum::<f64>() / seeds as f64;
    let s2 = sigma * sigma;
    let bound = s2
        * (beta1 * beta1 * beta2.powi(2 * t as i32 - 2)
            + beta1 * beta1 * (1.0 - beta2)
            + (1.0 - beta1) * (1.0 - beta1));
    let mut w = Worst::default();
    w.see(bound * MARTINGALE_FACTOR - mean);
    w.checks = seeds;
    Ok(w.entry(
        "martingale_second_moment",
        "quadratic_noisy",
        "stochastic_lmo/l2",
        mean <= bound * MARTINGALE_FACTOR,
        format!(
            "mean ||N_t||^2 = {mean:.6e} vs bound {bound:.6e} (x{MARTINGALE_FACTOR}) at t = {t}, beta1 = {beta1}, beta2 = {beta2}, {seeds} seeds"
        ),
    ))
}

pub fn verify_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    let cases = cases(true);
    let mut entries = Vec::new();
    let per_case: Vec<Vec<VerifyEntry>> = cases
        .par_iter()
        .map(|c| trajectory_checks(c, opts))
        .collect::<Result<_>>()?;
    entries.extend(per_case.into_iter().flatten());
    let remainder_problems: Vec<(&str, Box<dyn StochasticOracle>, f64)> = vec![
        ("quadratic", quad(0.0), 1.0),
        ("nonconvex", Box::new(make_nonconvex_smooth(4, 0.3, 0.0, 0)?), 1.0),
        ("matrix_quadratic", Box::new(make_matrix_quadratic(3, 3, 2, 0.0, 0)?), 1.0),
        ("logistic", Box::new(make_logistic_finite_sum(40, 4, 40, 9)?), 1.0),
    ];
    for (name, o, scale) in &remainder_problems {
        entries.push(remainder_check(name, o.as_ref(), 300, *scale)?);
    }
    entries.push(martingale_check(opts.martingale_seeds.max(1), 50, 0.9, 0.99)?);
    Ok(VerifyReport {
        schema_version: crate::output::SCHEMA_VERSION,
        all_pass: entries.iter().all(|e| e.pass),
        entries,
    })
}
