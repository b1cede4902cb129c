//! Large-deviation based Esscher importance sampling for put options under
//! the Heston model, with or without negative exponential jumps.
//!
//! The crate is layered bottom-up:
//!
//! - [`model`]: Riccati closed forms, the limiting cumulant `h` and its domain.
//! - [`ldp`]: partitions, signed discrete measures, Legendre transforms and
//!   the discrete rate function.
//! - [`optimize`]: the asymptotic variance proxy and its minimizers.
//! - [`simulate`]: Euler paths under the original and tilted measures.
//! - [`pricing`]: plain and importance-sampled estimators.
//! - [`experiments`]: parameter grids of the reference experiments and a
//!   self-check suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod experiments;
pub mod ldp;
pub mod model;
pub mod optimize;
pub mod pricing;
pub mod simulate;

pub use ldp::{LimitingCumulant, Partition, SignedDiscreteMeasure};
pub use model::{HestonParams, JumpParams, ModelError, ModelSpec};
pub use optimize::{solve, OptimError, OptimalMeasure, PayoffKind, PayoffSpec};
pub use pricing::{
    compare, mc_price_is, mc_price_plain, ComparisonRow, EstimatorKind, EstimatorResult,
    PricingError,
};
pub use simulate::{
    simulate_p, simulate_p_theta, EsscherPlan, Path, PathGrid, PathStream, SimError,
};
