//! BNS price/variance model: parameters, standing-assumption check, exact
//! OU kernels and path simulation under the physical measure and the minimal
//! martingale measure.

mod assumptions;
mod dynamics;
mod params;
mod simulate;

pub use assumptions::{validate_assumptions, Constraint, KappaCertificate, KappaInterval, BOUNDARY_TOL};
pub(crate) use dynamics::check_step_jumps;
pub use dynamics::{cal_b, integrated_variance_step, ou_step};
pub use params::{BnsParams, MeasureKind, TimeGrid, MIN_SIGMA0_SQ};
pub use simulate::{
    sample_model_jumps, sc_condition_report, simulate_path, terminal_sample, total_integrated_variance, ScReport,
    SimulatedPath,
};
