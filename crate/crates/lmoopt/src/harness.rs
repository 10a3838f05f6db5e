//! Runs, traces, theorem bounds, certificates and rate fits.

use std::sync::Arc;
use std::time::Instant;

use lmoopt_core::lmo::{diameter_groups, rsf_groups};
use lmoopt_core::optimizer::{
    init_state, step_for_class, MethodClass, OptimizerState, StepDiagnostics, UnifiedParams,
};
use lmoopt_core::problems::{ProblemConstants, StochasticOracle};
use lmoopt_core::ParamValue;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ProblemSpec, ResolvedMethod};
use crate::error::{CliError, Result};

pub type OracleFactory = Arc<dyn Fn() -> Result<Box<dyn StochasticOracle>> + Send + Sync>;

/// Factory that rebuilds `spec` for every run so each run owns its counter.
pub fn factory_from_spec(spec: &ProblemSpec) -> OracleFactory {
    let spec = spec.clone();
    Arc::new(move || spec.build())
}

/// Factory for an oracle constructor.
pub fn factory<O, F>(make: F) -> OracleFactory
where
    O: StochasticOracle + 'static,
    F: Fn() -> lmoopt_core::Result<O> + Send + Sync + 'static,
{
    Arc::new(move || Ok(Box::new(make()?) as Box<dyn StochasticOracle>))
}

#[derive(Clone)]
pub struct RunConfig {
    pub problem: OracleFactory,
    pub method: ResolvedMethod,
    pub horizon: u64,
    pub seed: u64,
    pub stride: u64,
    pub timing: bool,
}

impl std::fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunConfig")
            .field("method", &self.method)
            .field("horizon", &self.horizon)
            .field("seed", &self.seed)
            .field("stride", &self.stride)
            .finish_non_exhaustive()
    }
}

/// Everything a run needs besides the sample stream.
pub struct Prepared {
    pub oracle: Box<dyn StochasticOracle>,
    pub params: UnifiedParams,
    pub diameter: f64,
    pub constants: ProblemConstants,
    pub w0: Vec<ParamValue>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(CliError::Config {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.horizon < 1 {
            return bad("run.T", "T must be at least 1");
        }
        if self.stride < 1 {
            return bad("run.stride", "stride must be at least 1");
        }
        Ok(())
    }

    /// Builds the oracle and resolves parameters; all failures here are
    /// configuration errors.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let oracle = (self.problem)()?;
        let shapes = oracle.shapes();
        let diameter = diameter_groups(&self.method.sets, &shapes)
            .map_err(CliError::config("method.set"))?;
        let params = self.method.params(self.horizon, diameter)?;
        let w0 = oracle.initial_point();
        let constants = oracle.constants(&w0).map_err(CliError::config("problem"))?;
        Ok(Prepared {
            oracle,
            params,
            diameter,
            constants,
            w0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub rsf: f64,
    /// `‖w_t - w_{t-1}‖`, zero at the first row.
    pub step_norm: f64,
    /// `‖g_t - ∇F(w_t)‖`; absent at `t = T`, where no query is formed.
    pub eps_hat: Option<f64>,
    pub grad_evals: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// `(1/T) Σ_{t<T} Ψ(w_t)` over every step, not only recorded rows.
    pub avg_rsf: f64,
    pub final_loss: f64,
    pub grad_evals: u64,
    pub params: UnifiedParams,
    pub diameter: f64,
    pub constants: ProblemConstants,
    pub final_w: Vec<ParamValue>,
    pub wall_ns: u64,
}

/// State exposed to a run observer after each step.
pub struct StepEvent<'a> {
    pub t: u64,
    pub w_before: &'a [ParamValue],
    pub state: &'a OptimizerState,
    pub diag: &'a StepDiagnostics,
    pub params: &'a UnifiedParams,
    pub oracle: &'a dyn StochasticOracle,
}

fn grad_norm(g: &[ParamValue]) -> f64 {
    g.iter().map(|p| p.l2() * p.l2()).sum::<f64>().sqrt()
}

pub fn run(config: &RunConfig) -> Result<RunTrace> {
    run_observed(config, &mut |_| Ok(()))
}

/// Runs `config`, calling `observer` after every step.
pub fn run_observed(
    config: &RunConfig,
    observer: &mut dyn FnMut(&StepEvent<'_>) -> Result<()>,
) -> Result<RunTrace> {
    let prep = config.prepare()?;
    let oracle = prep.oracle.as_ref();
    let sets = &config.method.sets;
    let lambda = prep.params.lambda;
    let start = Instant::now();
    let clock = |timing: bool| if timing { start.elapsed().as_nanos() as u64 } else { 0 };

    let mut state = init_state(prep.w0.clone(), oracle, config.seed)?;
    let mut rows = Vec::new();
    let mut rsf_sum = 0.0;
    let mut prev_step = 0.0;
    let t_max = config.horizon;
    for t in 0..t_max {
        let full = oracle.full_grad(&state.w)?;
        let psi = rsf_groups(sets, lambda, &state.w, &full)?.value;
        rsf_sum += psi;
        let record = t % config.stride == 0;
        let loss = if record { oracle.loss(&state.w)? } else { 0.0 };
        let w_before = state.w.clone();
        let evals_before = oracle.eval_count();
        let diag = step_for_class(config.method.class, &mut state, &prep.params, sets, oracle)
            .map_err(|e| match e {
                lmoopt_core::Error::InvalidParameter(m) => CliError::Config {
                    field: "method.params".into(),
                    message: m,
                },
                other => other.into(),
            })?;
        if record {
            rows.push(TraceRow {
                step: t,
                loss,
                grad_norm: grad_norm(&full),
                rsf: psi,
                step_norm: prev_step,
                eps_hat: diag.epsilon_hat_norm,
                grad_evals: evals_before,
                wall_ns: clock(config.timing),
            });
        }
        prev_step = diag.step_norm;
        observer(&StepEvent {
            t,
            w_before: &w_before,
            state: &state,
            diag: &diag,
            params: &prep.params,
            oracle,
        })?;
    }
    let full = oracle.full_grad(&state.w)?;
    let final_loss = oracle.loss(&state.w)?;
    rows.push(TraceRow {
        step: t_max,
        loss: final_loss,
        grad_norm: grad_norm(&full),
        rsf: rsf_groups(sets, lambda, &state.w, &full)?.value,
        step_norm: prev_step,
        eps_hat: None,
        grad_evals: oracle.eval_count(),
        wall_ns: clock(config.timing),
    });
    let grad_evals = oracle.eval_count();
    Ok(RunTrace {
        rows,
        avg_rsf: rsf_sum / t_max as f64,
        final_loss,
        grad_evals,
        params: prep.params,
        diameter: prep.diameter,
        constants: prep.constants,
        final_w: state.w,
        wall_ns: clock(config.timing),
    })
}

/// Runs seeds `seed, seed+1, …` in parallel; results are in seed order.
pub fn run_seeds(config: &RunConfig, seeds: u64) -> Result<Vec<RunTrace>> {
    (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = config.seed.wrapping_add(i);
            run(&c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// `Δ_F / (T η)`
    pub initial_gap: f64,
    /// `Rσ((1-β₁) + β₁√(1-β₂) + β₁/(T(1-β₂)) + 1/T)`
    pub noise: f64,
    /// `L R² η (…)`
    pub smoothness: f64,
    /// `ρ R³ η² (…)`, IGT only.
    pub curvature: f64,
    pub total: f64,
}

/// Right-hand side of the rate bound for `class`, including finite-`T`
/// terms. `η` is the iterate step `η₂`.
pub fn theorem_bound(
    class: MethodClass,
    c: &ProblemConstants,
    diameter: f64,
    horizon: u64,
    p: &UnifiedParams,
) -> lmoopt_core::Result<BoundTerms> {
    p.check_class(class)?;
    if horizon < 1 {
        return Err(lmoopt_core::Error::InvalidParameter("horizon must be positive".into()));
    }
    let t = horizon as f64;
    let r = diameter;
    let eta = p.eta2;
    let (b1, b2, a1, a2) = (p.beta1, p.beta2, p.alpha1, p.alpha2);
    let initial_gap = c.delta_f / (t * eta);
    let noise = r
        * c.sigma
        * ((1.0 - b1) + b1 * (1.0 - b2).sqrt() + b1 / (t * (1.0 - b2)) + 1.0 / t);
    let lr2 = c.lipschitz * r * r * eta;
    let (smoothness, curvature) = match class {
        MethodClass::StochasticLmo => (lr2 * (b1 / (1.0 - b2) + 0.5), 0.0),
        MethodClass::VarianceReduced => (
            lr2 * ((b1 - a1).abs()
                + b1 * (b2 - a2).abs() / (1.0 - b2)
                + a1.abs()
                + b1 * a2.abs() / (1.0 - b2).sqrt()
                + 0.5),
            0.0,
        ),
        MethodClass::Igt => (
            lr2 * ((b2 - b1) / (1.0 - b2) + 0.5),
            c.hessian_lipschitz
                * r.powi(3)
                * eta
                * eta
                * (b1 / (1.0 - b2) + b2 * b2 / ((1.0 - b2) * (1.0 - b2))),
        ),
    };
    Ok(BoundTerms {
        initial_gap,
        noise,
        smoothness,
        curvature,
        total: initial_gap + noise + smoothness + curvature,
    })
}

pub const DEFAULT_SLACK: f64 = 0.05;
/// Absolute tolerance of noiseless certificates, which use zero slack.
pub const DETERMINISTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCertificate {
    pub class: String,
    pub schedule: Option<String>,
    pub horizon: u64,
    pub seeds: u64,
    pub diameter: f64,
    pub constants: ConstantsRecord,
    pub params: ParamsRecord,
    pub bound: BoundTerms,
    pub bound_value: f64,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    /// One-sided 95% normal upper limit of the seed mean.
    pub upper_95: f64,
    pub slack: f64,
    pub absolute_tolerance: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub lipschitz: f64,
    pub hessian_lipschitz: f64,
    pub sigma: f64,
    pub f_star: f64,
    pub delta_f: f64,
}

impl From<ProblemConstants> for ConstantsRecord {
    fn from(c: ProblemConstants) -> Self {
        Self {
            lipschitz: c.lipschitz,
            hessian_lipschitz: c.hessian_lipschitz,
            sigma: c.sigma,
            f_star: c.f_star,
            delta_f: c.delta_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl From<UnifiedParams> for ParamsRecord {
    fn from(p: UnifiedParams) -> Self {
        Self {
            beta1: p.beta1,
            beta2: p.beta2,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            lambda: p.lambda,
            eta1: p.eta1,
            eta2: p.eta2,
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Certifies the rate bound over `seeds` runs. Noiseless problems use zero
/// slack; noisy ones need at least 10 seeds.
pub fn certify(config: &RunConfig, seeds: u64, slack: f64) -> Result<TheoremCertificate> {
    let prep = config.prepare()?;
    let sigma = prep.constants.sigma;
    if sigma > 0.0 && seeds < 10 {
        return Err(CliError::Config {
            field: "run.seeds".into(),
            message: format!("noisy certificates need at least 10 seeds, got {seeds}"),
        });
    }
    let bound = theorem_bound(
        config.method.class,
        &prep.constants,
        prep.diameter,
        config.horizon,
        &prep.params,
    )
    .map_err(CliError::config("method.params"))?;
    let traces = run_seeds(config, seeds)?;
    let avgs: Vec<f64> = traces.iter().map(|t| t.avg_rsf).collect();
    let (mean, std) = mean_std(&avgs);
    let (slack, absolute_tolerance) = if sigma == 0.0 {
        (0.0, DETERMINISTIC_TOL)
    } else {
        (slack, 0.0)
    };
    let threshold = bound.total * (1.0 + slack) + absolute_tolerance;
    Ok(TheoremCertificate {
        class: config.method.class.name().into(),
        schedule: config.method.schedule_name().map(String::from),
        horizon: config.horizon,
        seeds,
        diameter: prep.diameter,
        constants: prep.constants.into(),
        params: prep.params.into(),
        bound,
        bound_value: bound.total,
        empirical_mean: mean,
        empirical_std: std,
        upper_95: mean + 1.6448536269514722 * std / (seeds as f64).sqrt(),
        slack,
        absolute_tolerance,
        threshold,
        pass: mean <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least squares on `(ln T, ln avg_rsf)`.
pub fn rate_fit(points: &[(f64, f64)]) -> lmoopt_core::Result<RateFit> {
    let bad = |m: &str| lmoopt_core::Error::InvalidParameter(m.into());
    if points.len() < 2 {
        return Err(bad("a rate fit needs at least two points"));
    }
    if points.iter().any(|&(t, y)| !(t > 0.0 && y > 0.0 && t.is_finite() && y.is_finite())) {
        return Err(bad("rate fit points must be positive and finite"));
    }
    // Sorting makes the floating-point sums independent of input order.
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(bad("rate fit needs at least two distinct horizons"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        points: pts,
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub class: String,
    pub seeds: u64,
    pub avg_rsf_mean: f64,
    pub avg_rsf_std: f64,
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    /// Gradient evaluations of one run (identical across seeds).
    pub grad_evals: u64,
    pub wall_ns_mean: f64,
}

type Fingerprint = (String, Vec<lmoopt_core::Shape>, Vec<ParamValue>, [u64; 6]);

fn problem_fingerprint(o: &dyn StochasticOracle) -> Result<Fingerprint> {
    let w0 = o.initial_point();
    let c = o.constants(&w0)?;
    let bits = [c.lipschitz, c.hessian_lipschitz, c.sigma, c.f_star, c.delta_f, o.loss(&w0)?].map(f64::to_bits);
    Ok((o.name().to_string(), o.shapes(), w0, bits))
}

/// Mean and spread of average RSF and final loss per method.
pub fn compare(configs: &[RunConfig], seeds: u64) -> Result<Vec<CompareRow>> {
    let first = configs.first().ok_or_else(|| CliError::Config {
        field: "method".into(),
        message: "nothing to compare".into(),
    })?;
    let reference = problem_fingerprint((first.problem)()?.as_ref())?;
    for c in &configs[1..] {
        if c.horizon != first.horizon {
            return Err(CliError::Config {
                field: "run.T".into(),
                message: "compared runs must share the horizon".into(),
            });
        }
        if problem_fingerprint((c.problem)()?.as_ref())? != reference {
            return Err(CliError::Config {
                field: "problem".into(),
                message: "compared runs must share the problem".into(),
            });
        }
    }
    configs
        .iter()
        .map(|c| {
            let traces = run_seeds(c, seeds)?;
            let avgs: Vec<f64> = traces.iter().map(|t| t.avg_rsf).collect();
            let losses: Vec<f64> = traces.iter().map(|t| t.final_loss).collect();
            let (am, asd) = mean_std(&avgs);
            let (lm, lsd) = mean_std(&losses);
            let walls: Vec<f64> = traces.iter().map(|t| t.wall_ns as f64).collect();
            Ok(CompareRow {
                label: c.method.label.clone(),
                class: c.method.class.name().into(),
                seeds,
                avg_rsf_mean: am,
                avg_rsf_std: asd,
                final_loss_mean: lm,
                final_loss_std: lsd,
                grad_evals: traces[0].grad_evals,
                wall_ns_mean: mean_std(&walls).0,
            })
        })
        .collect()
}
