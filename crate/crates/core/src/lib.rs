//! Best-arm identification for cascading bandits.
//!
//! The crate is organised around five pieces:
//!
//! - [`instance`]: problem instances (click probabilities, list size, tolerance, risk)
//!   and the gap / threshold quantities derived from them.
//! - [`env`]: the cascade click simulator plus exact moments of the number of
//!   observed items per step.
//! - [`bounds`]: analytic sample-complexity quantities (upper-bound terms,
//!   KL lower bound, left-sided sub-Gaussian checks).
//! - [`algo`]: the `CascadeBAI` racing state machine and the semi-bandit
//!   `BatRac(b)` baselines.
//! - [`harness`]: seeded parallel trial batches, K-scaling fits and the
//!   experiment drivers used by the CLI.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (`f32`/`f64`); the exact observation moments additionally accept any
//! numeric field such as `BigRational`. Concrete `f64` aliases are exported
//! below for everyday use.

// negated float comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algo;
pub mod bounds;
pub mod env;
pub mod harness;
pub mod instance;
mod scalar;

pub use scalar::Real;

pub use algo::{OrderingPolicy, RadiusForm, RunConfig, RunResult, StopReason};
pub use env::{CascadeFeedback, ClickModel, RngSpec};

pub use harness::{AlgoSpec, Algorithm, Family, FitModel, FitResult, TrialRecord};
pub use instance::{InstanceError, InstanceSpec};

/// Problem instance over `f64`.
pub type Instance = instance::Instance<f64>;
/// Problem instance over `f32`.
pub type Instance32 = instance::Instance<f32>;
/// Gap profile over `f64`.
pub type GapProfile = instance::GapProfile<f64>;
/// Gap profile over `f32`.
pub type GapProfile32 = instance::GapProfile<f32>;
/// Upper/lower bound report over `f64`.
pub type BoundReport = bounds::BoundReport<f64>;
/// Upper/lower bound report over `f32`.
pub type BoundReport32 = bounds::BoundReport<f32>;
/// `CascadeBAI` state over `f64`.
pub type AlgState = algo::AlgState<f64>;
