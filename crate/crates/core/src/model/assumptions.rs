//! Feasibility of the exponential-moment standing assumption.
//!
//! A `kappa > 0` is admissible when
//!
//! * `kappa > [2 (beta + 1/2)^+ + 1] B(T)` (drift bound, strict),
//! * `kappa >= (beta + 1/2)^2 B(T)` (square bound, weak),
//! * `int_1^inf e^{2 kappa x} nu(dx) < inf` (moment bound, strict).
//!
//! All three are explicit in `kappa`, so the admissible set is an interval
//! computed in closed form.

use serde::Serialize;

use super::dynamics::cal_b;
use super::params::BnsParams;
use crate::scalar::Scalar;

/// Distance below which `kappa_min` and `kappa_max` are reported as touching.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    DriftBound,
    SquareBound,
    ExpMoment,
}

/// Admissible `kappa`: `(lower, upper)` or `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaInterval<S> {
    pub lower: S,
    pub lower_closed: bool,
    pub upper: S,
}

impl<S: Scalar> KappaInterval<S> {
    pub fn contains(&self, kappa: S) -> bool {
        let above = if self.lower_closed {
            kappa >= self.lower
        } else {
            kappa > self.lower
        };
        above && kappa < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaCertificate<S> {
    pub feasible: bool,
    pub kappa_interval: Option<KappaInterval<S>>,
    /// When feasible, the lower constraint that is active. When infeasible,
    /// always `ExpMoment`: the moment bound lies below the lower constraints.
    pub binding_constraint: Constraint,
    /// `kappa_min` and `kappa_max` agree to within [`BOUNDARY_TOL`].
    pub boundary: bool,
    pub drift_bound: S,
    pub square_bound: S,
    pub moment_bound: S,
}

/// Admissible-`kappa` certificate for `params`.
pub fn validate_assumptions<S: Scalar>(params: &BnsParams<S>) -> KappaCertificate<S> {
    let b_t = cal_b(params.lambda, params.maturity);
    let p = params.premium();
    let drift_bound = (S::lit(2.0) * p.max(S::zero()) + S::one()) * b_t;
    let square_bound = p * p * b_t;
    // 2 kappa must stay below the family's exponential-moment bound
    let moment_bound = params.subordinator.exp_moment_bound() / S::lit(2.0);

    let (kappa_min, lower_closed, lower_constraint) = if square_bound > drift_bound {
        (square_bound, true, Constraint::SquareBound)
    } else {
        (drift_bound, false, Constraint::DriftBound)
    };
    let feasible = kappa_min < moment_bound;
    let boundary = moment_bound.is_finite()
        && (moment_bound - kappa_min).abs() <= S::lit(BOUNDARY_TOL) * S::one().max(moment_bound.abs());

    KappaCertificate {
        feasible,
        kappa_interval: feasible.then_some(KappaInterval {
            lower: kappa_min,
            lower_closed,
            upper: moment_bound,
        }),
        binding_constraint: if feasible {
            lower_constraint
        } else {
            Constraint::ExpMoment
        },
        boundary,
        drift_bound,
        square_bound,
        moment_bound,
    }
}
