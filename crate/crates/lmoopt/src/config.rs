//! JSON experiment documents.
//!
//! ```json
//! {
//!   "problem": {"name": "noisy_quadratic", "params": {"dim": 4, "eigenvalues": [1, 2, 3, 4], "sigma": 0.5}},
//!   "method": {"class": "igt", "set": {"geometry": "euclidean", "radius": 1.0}, "schedule": "cor2"},
//!   "run": {"T": 1000, "seed": 0, "seeds": 10, "stride": 10}
//! }
//! ```
//!
//! Unknown keys are rejected everywhere. See [`reference_document`] for the
//! defaults.

use lmoopt_core::linalg::ParamValue;
use lmoopt_core::lmo::{Geometry, LmoSet, NsVariant, OpMethod};
use lmoopt_core::optimizer::{
    theorem_schedule, MethodClass, ScheduleOptions, TheoremSchedule, UnifiedParams,
};
use lmoopt_core::problems::{
    make_logistic_finite_sum, make_matrix_quadratic, make_noisy_quadratic, make_nonconvex_smooth,
    GroupedOracle, NoiseModel, StochasticOracle,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub problem: ProblemSpec,
    pub method: OneOrMany<MethodSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn as_slice(&self) -> &[T] {
        match self {
            OneOrMany::One(x) => core::slice::from_ref(x),
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    NoisyQuadratic(QuadraticSpec),
    NonconvexSmooth(NonconvexSpec),
    MatrixQuadratic(MatrixSpec),
    LogisticFiniteSum(LogisticSpec),
    Grouped(GroupedSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Additive,
    Coordinatewise,
}

fn one() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub dim: usize,
    /// One value (repeated) or one per coordinate.
    #[serde(default = "one")]
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; all ones when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonconvexSpec {
    pub dim: usize,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; all 1.5 when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub target_seed: u64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub num_samples: usize,
    pub dim: usize,
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupedSpec {
    pub blocks: Vec<ProblemSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    StochasticLmo,
    VarianceReduced,
    Igt,
}

impl From<ClassName> for MethodClass {
    fn from(c: ClassName) -> Self {
        match c {
            ClassName::StochasticLmo => MethodClass::StochasticLmo,
            ClassName::VarianceReduced => MethodClass::VarianceReduced,
            ClassName::Igt => MethodClass::Igt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryName {
    Euclidean,
    Linf,
    OperatorNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OpMethodName {
    #[default]
    Svd,
    NewtonSchulz,
    NewtonSchulzQuintic,
}

fn default_ns_iterations() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub geometry: GeometryName,
    pub radius: f64,
    #[serde(default)]
    pub op_method: OpMethodName,
    #[serde(default = "default_ns_iterations")]
    pub ns_iterations: u32,
}

impl SetSpec {
    pub fn build(&self) -> Result<LmoSet> {
        let geometry = match self.geometry {
            GeometryName::Euclidean => Geometry::Euclidean,
            GeometryName::Linf => Geometry::LInf,
            GeometryName::OperatorNorm => Geometry::OperatorNorm,
        };
        let op = match self.op_method {
            OpMethodName::Svd => OpMethod::ExactSvd,
            OpMethodName::NewtonSchulz => OpMethod::NewtonSchulz {
                iterations: self.ns_iterations,
                variant: NsVariant::Cubic,
            },
            OpMethodName::NewtonSchulzQuintic => OpMethod::NewtonSchulz {
                iterations: self.ns_iterations,
                variant: NsVariant::MuonQuintic,
            },
        };
        let set = LmoSet::new(geometry, self.radius).map_err(CliError::config("method.set"))?;
        set.with_op_method(op).map_err(CliError::config("method.set.op_method"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub alpha2: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Defaults to the class rule (`eta2`, or `eta2/(1-beta2)` for IGT).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    pub eta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub class: ClassName,
    /// One set for every parameter group, or one per group.
    pub set: OneOrMany<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSpec>,
    /// Theorem schedule name: thm1, cor1, cor2, cor3, cor4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    /// Weight decay used with a schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Override for the schedule's default beta1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_horizon() -> u64 {
    1000
}

fn default_count() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: u64,
    /// Horizons for `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<u64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub seeds: u64,
    #[serde(default = "default_count")]
    pub stride: u64,
    /// Record wall-clock time per row; off keeps traces byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            horizons: None,
            seed: 0,
            seeds: 1,
            stride: 1,
            timing: false,
            slack: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

/// How the optimizer parameters are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamSource {
    Explicit(UnifiedParams),
    Schedule {
        schedule: TheoremSchedule,
        options: ScheduleOptions,
    },
}

/// A method with its sets built and its parameter source resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub label: String,
    pub class: MethodClass,
    pub sets: Vec<LmoSet>,
    pub source: ParamSource,
}

impl ResolvedMethod {
    /// Concrete parameters at `horizon` with diameter `diameter`.
    pub fn params(&self, horizon: u64, diameter: f64) -> Result<UnifiedParams> {
        let p = match self.source {
            ParamSource::Explicit(p) => p,
            ParamSource::Schedule { schedule, options } => {
                theorem_schedule(schedule, horizon, diameter, options)
                    .map_err(CliError::config("method.schedule"))?
            }
        };
        p.check_class(self.class).map_err(CliError::config("method.params"))?;
        Ok(p)
    }

    pub fn schedule_name(&self) -> Option<&'static str> {
        match self.source {
            ParamSource::Schedule { schedule, .. } => Some(schedule.name()),
            ParamSource::Explicit(_) => None,
        }
    }
}

impl MethodSpec {
    pub fn resolve(&self, groups: usize) -> Result<ResolvedMethod> {
        let class: MethodClass = self.class.into();
        let sets: Vec<LmoSet> = match &self.set {
            OneOrMany::One(s) => vec![s.build()?; groups],
            OneOrMany::Many(v) => {
                if v.len() != groups {
                    return Err(CliError::Config {
                        field: "method.set".into(),
                        message: format!("{} sets for {groups} parameter groups", v.len()),
                    });
                }
                v.iter().map(SetSpec::build).collect::<Result<_>>()?
            }
        };
        let source = match (&self.params, &self.schedule) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config {
                    field: "method".into(),
                    message: "give either params or schedule, not both".into(),
                })
            }
            (None, None) => {
                return Err(CliError::Config {
                    field: "method".into(),
                    message: "missing params or schedule".into(),
                })
            }
            (Some(p), None) => {
                if self.lambda.is_some() || self.beta1.is_some() {
                    return Err(CliError::Config {
                        field: "method".into(),
                        message: "lambda/beta1 overrides only apply to schedules".into(),
                    });
                }
                let eta1 = p.eta1.unwrap_or(match class {
                    MethodClass::Igt => p.eta2 / (1.0 - p.beta2),
                    _ => p.eta2,
                });
                let up = UnifiedParams {
                    beta1: p.beta1,
                    beta2: p.beta2,
                    alpha1: p.alpha1,
                    alpha2: p.alpha2,
                    lambda: p.lambda,
                    eta1,
                    eta2: p.eta2,
                };
                up.check_class(class).map_err(CliError::config("method.params"))?;
                ParamSource::Explicit(up)
            }
            (None, Some(name)) => {
                let schedule = TheoremSchedule::from_name(name).ok_or_else(|| CliError::Config {
                    field: "method.schedule".into(),
                    message: format!("unknown schedule {name:?}; expected thm1, cor1, cor2, cor3 or cor4"),
                })?;
                if schedule.class() != class {
                    return Err(CliError::Config {
                        field: "method.schedule".into(),
                        message: format!(
                            "schedule {name} belongs to {}, not {}",
                            schedule.class().name(),
                            class.name()
                        ),
                    });
                }
                ParamSource::Schedule {
                    schedule,
                    options: ScheduleOptions {
                        lambda: self.lambda.unwrap_or(0.0),
                        beta1: self.beta1,
                    },
                }
            }
        };
        Ok(ResolvedMethod {
            label: self.label.clone().unwrap_or_else(|| match self.schedule_label() {
                Some(s) => format!("{}:{s}", class.name()),
                None => class.name().to_string(),
            }),
            class,
            sets,
            source,
        })
    }

    fn schedule_label(&self) -> Option<&str> {
        self.schedule.as_deref()
    }
}

fn vector_w0(w0: &Option<Vec<f64>>, dim: usize, field: &str) -> Result<Option<ParamValue>> {
    match w0 {
        None => Ok(None),
        Some(v) if v.len() == dim => Ok(Some(
            ParamValue::vector(v.clone()).map_err(CliError::config(field))?,
        )),
        Some(v) => Err(CliError::Config {
            field: field.into(),
            message: format!("w0 has {} entries, expected {dim}", v.len()),
        }),
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn StochasticOracle>> {
        let field = "problem.params";
        Ok(match self {
            ProblemSpec::NoisyQuadratic(q) => {
                let noise = match q.noise {
                    NoiseKind::Additive => NoiseModel::Additive { sigma: q.sigma },
                    NoiseKind::Coordinatewise => NoiseModel::Coordinatewise { sigma: q.sigma },
                };
                let mut p = make_noisy_quadratic(q.dim, &q.eigenvalues, noise, q.seed)
                    .map_err(CliError::config(field))?;
                if let Some(w0) = vector_w0(&q.w0, q.dim, "problem.params.w0")? {
                    p = p.with_initial_point(w0).map_err(CliError::config(field))?;
                }
                Box::new(p)
            }
            ProblemSpec::NonconvexSmooth(q) => {
                let mut p = make_nonconvex_smooth(q.dim, q.coupling, q.sigma, q.seed)
                    .map_err(CliError::config(field))?;
                if let Some(w0) = vector_w0(&q.w0, q.dim, "problem.params.w0")? {
                    p = p.with_initial_point(w0).map_err(CliError::config(field))?;
                }
                Box::new(p)
            }
            ProblemSpec::MatrixQuadratic(q) => Box::new(
                make_matrix_quadratic(q.m, q.n, q.target_seed, q.sigma, q.seed)
                    .map_err(CliError::config(field))?,
            ),
            ProblemSpec::LogisticFiniteSum(q) => Box::new(
                make_logistic_finite_sum(q.num_samples, q.dim, q.batch, q.seed)
                    .map_err(CliError::config(field))?,
            ),
            ProblemSpec::Grouped(g) => {
                if g.blocks.iter().any(|b| matches!(b, ProblemSpec::Grouped(_))) {
                    return Err(CliError::Config {
                        field: "problem.params.blocks".into(),
                        message: "grouped problems cannot be nested".into(),
                    });
                }
                let blocks = g
                    .blocks
                    .iter()
                    .map(ProblemSpec::build)
                    .collect::<Result<Vec<_>>>()?;
                Box::new(GroupedOracle::new(blocks).map_err(CliError::config(field))?)
            }
        })
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(CliError::Config {
                field: format!("run.{field}"),
                message: message.into(),
            })
        };
        if self.horizon < 1 {
            return bad("T", "T must be at least 1");
        }
        if self.stride < 1 {
            return bad("stride", "stride must be at least 1");
        }
        if self.seeds < 1 {
            return bad("seeds", "seeds must be at least 1");
        }
        if let Some(s) = self.slack {
            if !(s.is_finite() && s >= 0.0) {
                return bad("slack", "slack must be nonnegative");
            }
        }
        Ok(())
    }
}

/// Parses a config document, reporting the line and column of syntax or
/// schema errors.
pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    let doc: ConfigDocument = serde_json::from_str(text).map_err(|e| CliError::Config {
        field: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    doc.run.validate()?;
    Ok(doc)
}

/// Annotated default document printed by `lmoopt reference`.
pub fn reference_document() -> &'static str {
    r#"{
  "problem": {
    "name": "noisy_quadratic | nonconvex_smooth | matrix_quadratic | logistic_finite_sum | grouped",
    "params": {
      "noisy_quadratic":     {"dim": "required", "eigenvalues": [1.0], "noise": "additive | coordinatewise", "sigma": 0.0, "seed": 0, "w0": "all ones"},
      "nonconvex_smooth":    {"dim": "required", "coupling": 0.0, "sigma": 0.0, "seed": 0, "w0": "all 1.5"},
      "matrix_quadratic":    {"m": "required", "n": "required", "target_seed": 0, "sigma": 0.0, "seed": 0},
      "logistic_finite_sum": {"num_samples": "required", "dim": "required", "batch": "required", "seed": 0},
      "grouped":             {"blocks": ["problem", "..."]}
    }
  },
  "method": {
    "class": "stochastic_lmo | variance_reduced | igt",
    "set": {"geometry": "euclidean | linf | operator_norm", "radius": "required", "op_method": "svd | newton_schulz | newton_schulz_quintic", "ns_iterations": 5},
    "params": {"beta1": 0.0, "beta2": 0.0, "alpha1": 0.0, "alpha2": 0.0, "lambda": 0.0, "eta1": "class rule", "eta2": "required"},
    "schedule": "thm1 | cor1 | cor2 | cor3 | cor4 (instead of params)",
    "lambda": "0.0 (schedules only)",
    "beta1": "schedule default (schedules only)",
    "label": "class[:schedule]"
  },
  "run": {"T": 1000, "horizons": "sweep only", "seed": 0, "seeds": 1, "stride": 1, "timing": false, "slack": 0.05},
  "output": {"dir": "used when --out is absent; otherwise $LMOOPT_OUT, then ./lmoopt-out"}
}
"#
}
