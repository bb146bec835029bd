//! Exact conditionally-Gaussian simulation.
//!
//! Given the jump path of `J_t = H_{lambda t}`, the variance and its integral
//! are deterministic, and `int sigma dW` over a step is `N(0, int sigma^2)`.
//! Drawing that Gaussian directly removes all time-discretization error.

use rand::Rng;
use serde::Serialize;

use super::assumptions::validate_assumptions;
use super::dynamics::{cal_b, integrated_variance_unchecked, ou_step_unchecked};
use super::params::{BnsParams, MeasureKind, TimeGrid};
use crate::error::{EngineError, Result};
use crate::measure_change::step_integrals_for;
use crate::rng::{Purpose, Streams};
use crate::scalar::Scalar;
use crate::stats::{par_collect, Moments};
use crate::subordinator::JumpPath;

/// One simulated trajectory on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPath<S> {
    pub measure: MeasureKind,
    pub grid: Vec<S>,
    /// `sigma^2_{t_k-}`; the pre-jump value if a jump lands on `t_k`.
    pub sigma_sq_left: Vec<S>,
    /// `sigma^2_{t_k}`.
    pub sigma_sq_right: Vec<S>,
    /// `int_{t_k}^{t_{k+1}} sigma^2 ds`, one per step.
    pub int_var_step: Vec<S>,
    /// Realized `int_{t_k}^{t_{k+1}} sigma dW` (under the simulation measure).
    pub gauss_step: Vec<S>,
    /// `log S_{t_k}`.
    pub log_s: Vec<S>,
    /// Jumps of `J` in model time.
    pub jumps: JumpPath<S>,
}

impl<S: Scalar> SimulatedPath<S> {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn price(&self, k: usize) -> S {
        self.log_s[k].exp()
    }

    pub fn terminal_price(&self) -> S {
        self.price(self.steps())
    }

    /// Jumps inside step `k`, i.e. in `(t_k, t_{k+1}]`, as `(offset, size)`.
    pub fn step_jumps(&self, k: usize) -> Vec<(S, S)> {
        self.jumps.step_jumps(self.grid[k], self.grid[k + 1])
    }

    /// `int_{t_k}^T sigma^2 ds`.
    pub fn remaining_variance(&self, k: usize) -> S {
        self.int_var_step[k..].iter().copied().sum()
    }

    pub fn total_variance(&self) -> S {
        self.remaining_variance(0)
    }
}

/// Jumps of `J` over `[0, maturity]` in model time.
pub fn sample_model_jumps<S: Scalar, R: Rng + ?Sized>(params: &BnsParams<S>, rng: &mut R) -> JumpPath<S> {
    let lambda = params.lambda;
    params
        .subordinator
        .sample_path(lambda * params.maturity, rng)
        .slowed_by(lambda)
}

#[inline]
fn log_increment<S: Scalar>(params: &BnsParams<S>, measure: MeasureKind, delta: S, int_var: S, gauss: S) -> S {
    match measure {
        MeasureKind::Physical => params.mu * delta + params.beta * int_var + gauss,
        MeasureKind::Mmm => -int_var * S::lit(0.5) + gauss,
    }
}

/// Simulate `(sigma^2, int sigma^2, log S)` on `grid` under `measure`.
pub fn simulate_path<S: Scalar, R: Rng + ?Sized>(
    params: &BnsParams<S>,
    measure: MeasureKind,
    grid: &TimeGrid<S>,
    rng: &mut R,
) -> Result<SimulatedPath<S>> {
    let pts = grid.points();
    let end = grid.end();
    if (end - params.maturity).abs() > S::lit(1e-12) * params.maturity {
        return Err(EngineError::invalid(
            "grid",
            format!("must end at maturity {}, ends at {end}", params.maturity),
        ));
    }
    let jumps = sample_model_jumps(params, rng);
    let m = grid.steps();
    let lambda = params.lambda;

    let mut sigma_sq_left = Vec::with_capacity(m + 1);
    let mut sigma_sq_right = Vec::with_capacity(m + 1);
    let mut int_var_step = Vec::with_capacity(m);
    let mut gauss_step = Vec::with_capacity(m);
    let mut log_s = Vec::with_capacity(m + 1);
    sigma_sq_left.push(params.sigma0_sq);
    sigma_sq_right.push(params.sigma0_sq);
    log_s.push(params.s0.ln());

    for k in 0..m {
        let (lo, hi) = (pts[k], pts[k + 1]);
        let delta = hi - lo;
        let range = jumps.range_in(lo, hi);
        let step: Vec<(S, S)> = range
            .clone()
            .map(|i| (jumps.times()[i] - lo, jumps.sizes()[i]))
            .collect();
        let start = sigma_sq_right[k];
        let right = ou_step_unchecked(start, lambda, delta, &step);
        let on_grid = range.end > range.start && jumps.times()[range.end - 1] == hi;
        let left = if on_grid {
            ou_step_unchecked(start, lambda, delta, &step[..step.len() - 1])
        } else {
            right
        };
        let iv = integrated_variance_unchecked(start, lambda, delta, &step);
        let g = iv.sqrt() * S::standard_normal(rng);
        let next = log_s[k] + log_increment(params, measure, delta, iv, g);
        sigma_sq_left.push(left);
        sigma_sq_right.push(right);
        int_var_step.push(iv);
        gauss_step.push(g);
        log_s.push(next);
    }

    Ok(SimulatedPath {
        measure,
        grid: pts.to_vec(),
        sigma_sq_left,
        sigma_sq_right,
        int_var_step,
        gauss_step,
        log_s,
        jumps,
    })
}

/// `int_0^T sigma^2 ds` for a jump path in model time.
pub fn total_integrated_variance<S: Scalar>(params: &BnsParams<S>, jumps: &JumpPath<S>) -> S {
    let t = params.maturity;
    let lambda = params.lambda;
    let mut v = params.sigma0_sq * cal_b(lambda, t);
    for (&u, &x) in jumps.times().iter().zip(jumps.sizes()) {
        v = v + x * cal_b(lambda, t - u);
    }
    v
}

/// Gridless exact draw of `(S_T, int_0^T sigma^2 ds)`.
pub fn terminal_sample<S: Scalar, R: Rng + ?Sized>(params: &BnsParams<S>, measure: MeasureKind, rng: &mut R) -> (S, S) {
    let jumps = sample_model_jumps(params, rng);
    let iv = total_integrated_variance(params, &jumps);
    let g = iv.sqrt() * S::standard_normal(rng);
    let log_st = params.s0.ln() + log_increment(params, measure, params.maturity, iv, g);
    (log_st.exp(), iv)
}

/// Structure-condition diagnostics for the mean-variance trade-off `K_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScReport<S> {
    pub n_paths: usize,
    pub k_t_mean: S,
    pub k_t_stderr: S,
    pub k_t_max: S,
    /// Variance stayed strictly positive and finite on every path, so
    /// `Lambda` is finite.
    pub lambda_finite: bool,
    pub k_t_finite: bool,
}

/// `K_T = int_0^T u_t^2 dt` on `n_paths` simulated variance paths.
pub fn sc_condition_report<S: Scalar>(params: &BnsParams<S>, n_paths: usize, streams: &Streams) -> Result<ScReport<S>> {
    if !validate_assumptions(params).feasible {
        return Err(EngineError::Infeasible(
            "standing assumption has no admissible kappa".into(),
        ));
    }
    let per_path: Vec<(S, bool)> = par_collect(n_paths, |i| {
        let mut rng = streams.stream(Purpose::Path, i as u64);
        let jumps = sample_model_jumps(params, &mut rng);
        let all = jumps.step_jumps(S::zero(), params.maturity);
        let k_t = step_integrals_for(params, params.sigma0_sq, params.maturity, &all)
            .map(|s| s.int_u_sq)
            .unwrap_or(S::nan());
        // the variance decays between jumps, so its minimum sits at a left
        // limit before a jump or at maturity
        let mut sigma_ok = true;
        let mut c = params.sigma0_sq;
        let mut prev = S::zero();
        for (&u, &x) in jumps.times().iter().zip(jumps.sizes()) {
            c = c * (-params.lambda * (u - prev)).exp();
            sigma_ok &= c > S::zero() && c.is_finite();
            c = c + x;
            prev = u;
        }
        c = c * (-params.lambda * (params.maturity - prev)).exp();
        sigma_ok &= c > S::zero() && c.is_finite();
        (k_t, sigma_ok)
    });
    let moments: Moments<S> = per_path.iter().map(|p| p.0).collect();
    Ok(ScReport {
        n_paths,
        k_t_mean: moments.mean(),
        k_t_stderr: moments.stderr(),
        k_t_max: moments.max(),
        lambda_finite: per_path.iter().all(|p| p.1),
        k_t_finite: per_path.iter().all(|p| p.0.is_finite()),
    })
}
