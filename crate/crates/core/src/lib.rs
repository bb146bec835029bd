//! Local risk-minimizing hedging of European options under the
//! Barndorff-Nielsen–Shephard stochastic volatility model (no leverage).
//!
//! The numerical core is generic over the floating-point type (`f32` or
//! `f64`). The aliases below fix it to `f64`.

// `!(x > 0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod hedging;
pub mod measure_change;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod subordinator;

pub use error::{EngineError, Result};
pub use hedging::{
    backtest, lrm_call_t0, lrm_put_nested, lrm_put_regression, lrm_put_t0, BacktestOptions, EstimateMethod,
    HedgeMethod, OptionKind, Sampling,
};
pub use measure_change::{density_path, exp_martingale_y, mpr, DensityOptions};
pub use model::{simulate_path, validate_assumptions, Constraint, MeasureKind};
pub use rng::{Purpose, Streams};
pub use scalar::Scalar;

pub type Params = model::BnsParams<f64>;
pub type Grid = model::TimeGrid<f64>;
pub type Subordinator = subordinator::SubordinatorSpec<f64>;
pub type Jumps = subordinator::JumpPath<f64>;
pub type Path = model::SimulatedPath<f64>;
pub type Certificate = model::KappaCertificate<f64>;
pub type VanillaOption = hedging::OptionSpec<f64>;
pub type Estimate = hedging::HedgeEstimate<f64>;
pub type Backtest = hedging::BacktestReport<f64>;
