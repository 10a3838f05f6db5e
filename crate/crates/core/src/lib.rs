//! Stochastic optimization with linear minimization oracles.
//!
//! Dense parameter values, norm-ball LMOs, the unified momentum/LMO update
//! with its stochastic, variance-reduced and transported-gradient
//! specializations, and a set of synthetic problems with exact constants.
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod lmo;
pub mod optimizer;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{NormKind, ParamValue, Shape};
pub use lmo::{Geometry, LmoSet, NsVariant, OpMethod};
pub use optimizer::{
    init_state, step_igt, step_stochastic_lmo, step_unified, theorem_schedule, MethodClass,
    OptimizerState, StepDiagnostics, TheoremSchedule, UnifiedParams,
};
pub use problems::{ProblemConstants, StochasticOracle};
pub use rng::SampleId;
