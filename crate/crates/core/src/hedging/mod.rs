//! Local risk-minimizing hedges of European puts and calls.

mod backtest;
mod estimate;
mod regression;

pub use backtest::{
    backtest, BacktestOptions, BacktestPath, BacktestReport, BacktestSummary, HedgeMethod, Interval, Z_99,
};
pub use estimate::{
    bs_put_delta_oracle, bs_put_value, lrm_call_t0, lrm_put_nested, lrm_put_t0, parity_call, EstimateMethod,
    HedgeEstimate, OptionKind, OptionSpec, Sampling, MIN_TERMINAL_DRAWS,
};
pub use regression::{
    lrm_put_regression, BasisFit, RegressionEstimates, RegressionHedger, MAX_BASIS_DEGREE, MIN_TRAINING_PATHS,
};
