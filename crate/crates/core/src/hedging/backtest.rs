//! Discrete hedging backtest under the physical measure.
//!
//! Along each path the strategy holds `xi_k` over `(t_k, t_{k+1}]` and has
//! value `V_k = E~[F | F_{t_k}]`. The cost increments are
//!
//! ```text
//! dC_k = V_{k+1} - V_k - xi_k dS_k        (V_m = F before liquidation)
//! ```
//!
//! and `dM_k = dS_k - S_k (exp(mu d + (beta + 1/2) int sigma^2) - 1)` is the
//! martingale part of `S` over the step, compensated exactly given the jumps.
//! Under LRM the cost process is a martingale orthogonal to `M`, so the
//! pooled correlation of `(dC, dM)` and the mean of `C_T - C_0` should both
//! be zero up to Monte Carlo and discretization error.

use serde::{Deserialize, Serialize};

use super::estimate::{put_moments, require_feasible, restart, EstimateMethod, OptionKind, OptionSpec, Sampling};
use super::regression::RegressionHedger;
use crate::error::{EngineError, Result};
use crate::model::{simulate_path, BnsParams, MeasureKind, SimulatedPath, TimeGrid};
use crate::rng::{Purpose, Streams};
use crate::scalar::Scalar;
use crate::stats::{par_collect, Moments};

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

/// Jackknife blocks for the pooled correlation.
const JACKKNIFE_BLOCKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HedgeMethod {
    Nested,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestOptions {
    pub method: HedgeMethod,
    pub n_inner: usize,
    pub n_train: usize,
    pub basis_degree: usize,
    pub sampling: Sampling,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        BacktestOptions {
            method: HedgeMethod::Regression,
            n_inner: 1_000,
            n_train: 10_000,
            basis_degree: 2,
            sampling: Sampling::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestPath<S> {
    /// Hedge ratios at `t_0, ..., t_{m-1}`.
    pub xi: Vec<S>,
    /// `V_0, ..., V_m` with `V_m = 0` after the payoff is delivered.
    pub value: Vec<S>,
    /// `sum_k xi_k dS_k`.
    pub gain: S,
    pub cost_inc: Vec<S>,
    pub m_inc: Vec<S>,
}

impl<S: Scalar> BacktestPath<S> {
    /// `C_T - C_0`.
    pub fn cost_change(&self) -> S {
        self.cost_inc.iter().copied().sum()
    }
}

/// Estimate with a symmetric 99% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub stderr: f64,
    pub low: f64,
    pub high: f64,
    pub contains_zero: bool,
}

impl Interval {
    fn new(estimate: f64, stderr: f64) -> Self {
        let (low, high) = (estimate - Z_99 * stderr, estimate + Z_99 * stderr);
        Interval {
            estimate,
            stderr,
            low,
            high,
            contains_zero: low <= 0.0 && 0.0 <= high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub n_paths: usize,
    pub steps: usize,
    pub method: EstimateMethod,
    pub option: OptionSpec<f64>,
    /// Mean of `V_0` over paths.
    pub initial_value: f64,
    /// Pooled `corr(dC, dM)` with a path-block jackknife interval.
    pub orthogonality: Interval,
    /// `E[C_T - C_0]`.
    pub cost_drift: Interval,
    /// Mean and standard deviation of `V_0 + sum xi dS - F`.
    pub terminal_error_mean: f64,
    pub terminal_error_std: f64,
    pub terminal_cost_variance: f64,
    /// Nested estimates outside the 3-stderr hedge range.
    pub hedge_out_of_range: usize,
    pub regression_reduced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport<S> {
    pub summary: BacktestSummary,
    pub paths: Vec<BacktestPath<S>>,
}

enum Estimator {
    Nested { n_inner: usize, sampling: Sampling },
    Regression(RegressionHedger),
}

/// `(xi_put, stderr, V_put)` at grid time `k` of `path`.
fn put_state<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    estimator: &Estimator,
    path: &SimulatedPath<S>,
    k: usize,
    inner: &Streams,
) -> Result<(S, S, S)> {
    let s = path.price(k);
    let (left, right) = (path.sigma_sq_left[k], path.sigma_sq_right[k]);
    match estimator {
        Estimator::Nested { n_inner, sampling } => {
            let t = path.grid[k];
            let at_left = restart(params, t, (s, left))?;
            let (ratio, value) = put_moments(&at_left, strike, *n_inner, inner, *sampling);
            let value = if right == left {
                value
            } else {
                put_moments(&restart(params, t, (s, right))?, strike, *n_inner, inner, *sampling).1
            };
            Ok((-ratio.mean(), ratio.stderr(), value.mean()))
        }
        Estimator::Regression(h) => {
            let (xi, se) = h.xi(k, s, left);
            Ok((xi, se, h.put_value(k, s, right)))
        }
    }
}

fn run_path<S: Scalar>(
    params: &BnsParams<S>,
    option: &OptionSpec<S>,
    grid: &TimeGrid<S>,
    estimator: &Estimator,
    streams: &Streams,
    i: usize,
) -> Result<(BacktestPath<S>, usize)> {
    let path = simulate_path(
        params,
        MeasureKind::Physical,
        grid,
        &mut streams.stream(Purpose::Path, i as u64),
    )?;
    let m = path.steps();
    let strike = option.strike;
    let premium = params.premium();
    let mut xi = Vec::with_capacity(m);
    let mut value = Vec::with_capacity(m + 1);
    let mut out_of_range = 0;
    for k in 0..m {
        let inner = streams.child(Purpose::Inner, i as u64, k as u64);
        let (x_put, se, v_put) = put_state(params, strike, estimator, &path, k, &inner)?;
        let ok = x_put >= -S::one() - S::lit(3.0) * se && x_put <= S::lit(3.0) * se;
        out_of_range += usize::from(!ok);
        let s = path.price(k);
        match option.kind {
            OptionKind::Put => {
                xi.push(x_put);
                value.push(v_put);
            }
            OptionKind::Call => {
                xi.push(S::one() + x_put);
                value.push(v_put + s - strike);
            }
        }
    }
    let payoff = option.payoff(path.terminal_price());
    value.push(S::zero());
    let mut gain = S::zero();
    let mut cost_inc = Vec::with_capacity(m);
    let mut m_inc = Vec::with_capacity(m);
    for k in 0..m {
        let (s0, s1) = (path.price(k), path.price(k + 1));
        let ds = s1 - s0;
        let delta = path.grid[k + 1] - path.grid[k];
        let next = if k + 1 == m { payoff } else { value[k + 1] };
        gain = gain + xi[k] * ds;
        cost_inc.push(next - value[k] - xi[k] * ds);
        m_inc.push(ds - s0 * (params.mu * delta + premium * path.int_var_step[k]).exp_m1());
    }
    Ok((
        BacktestPath {
            xi,
            value,
            gain,
            cost_inc,
            m_inc,
        },
        out_of_range,
    ))
}

/// Sums `(n, x, y, xy, xx, yy)` for a pooled correlation.
#[derive(Debug, Clone, Copy, Default)]
struct CorrSums([f64; 6]);

impl CorrSums {
    fn add_pair(&mut self, x: f64, y: f64) {
        let s = &mut self.0;
        s[0] += 1.0;
        s[1] += x;
        s[2] += y;
        s[3] += x * y;
        s[4] += x * x;
        s[5] += y * y;
    }

    fn add(&mut self, o: &CorrSums) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }

    fn sub(&self, o: &CorrSums) -> CorrSums {
        let mut r = *self;
        for (a, b) in r.0.iter_mut().zip(o.0) {
            *a -= b;
        }
        r
    }

    fn corr(&self) -> f64 {
        let [n, x, y, xy, xx, yy] = self.0;
        let cov = xy / n - x * y / (n * n);
        let vx = xx / n - x * x / (n * n);
        let vy = yy / n - y * y / (n * n);
        cov / (vx * vy).sqrt()
    }
}

/// Pooled correlation of `(a, b)` over all steps of all paths, with a
/// delete-one-block jackknife standard error over contiguous path blocks.
fn pooled_correlation(a: &[&[f64]], b: &[&[f64]]) -> Interval {
    let n = a.len();
    let g = JACKKNIFE_BLOCKS.min(n).max(2);
    let mut blocks = vec![CorrSums::default(); g];
    for i in 0..n {
        let blk = &mut blocks[i * g / n];
        for (&x, &y) in a[i].iter().zip(b[i]) {
            blk.add_pair(x, y);
        }
    }
    let mut total = CorrSums::default();
    for blk in &blocks {
        total.add(blk);
    }
    let r = total.corr();
    let loo: Vec<f64> = blocks.iter().map(|blk| total.sub(blk).corr()).collect();
    let mean = loo.iter().sum::<f64>() / g as f64;
    let var = (g as f64 - 1.0) / g as f64 * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Interval::new(r, var.sqrt())
}

/// Hedge `option` along `n_paths` physical paths on `grid`.
pub fn backtest<S: Scalar>(
    params: &BnsParams<S>,
    option: &OptionSpec<S>,
    grid: &TimeGrid<S>,
    n_paths: usize,
    options: &BacktestOptions,
    streams: &Streams,
) -> Result<BacktestReport<S>> {
    params.validate()?;
    option.validate()?;
    require_feasible(params)?;
    if n_paths < 2 {
        return Err(EngineError::invalid("n_paths", "backtest needs at least 2 paths"));
    }
    let estimator = match options.method {
        HedgeMethod::Nested => {
            if options.n_inner < 2 {
                return Err(EngineError::invalid("n_inner", "must be at least 2"));
            }
            Estimator::Nested {
                n_inner: options.n_inner,
                sampling: options.sampling,
            }
        }
        HedgeMethod::Regression => Estimator::Regression(RegressionHedger::fit(
            params,
            option.strike,
            grid,
            options.n_train,
            options.basis_degree,
            streams,
            options.sampling,
        )?),
    };

    let results: Vec<Result<(BacktestPath<S>, usize)>> =
        par_collect(n_paths, |i| run_path(params, option, grid, &estimator, streams, i));
    let mut paths = Vec::with_capacity(n_paths);
    let mut out_of_range = 0;
    for (i, r) in results.into_iter().enumerate() {
        let (p, bad) = r.map_err(|e| e.at_path(i))?;
        out_of_range += bad;
        paths.push(p);
    }

    let to_f64 = |v: &[S]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
    let dc: Vec<Vec<f64>> = paths.iter().map(|p| to_f64(&p.cost_inc)).collect();
    let dm: Vec<Vec<f64>> = paths.iter().map(|p| to_f64(&p.m_inc)).collect();
    let dc_refs: Vec<&[f64]> = dc.iter().map(Vec::as_slice).collect();
    let dm_refs: Vec<&[f64]> = dm.iter().map(Vec::as_slice).collect();
    let orthogonality = pooled_correlation(&dc_refs, &dm_refs);

    let drift: Moments<f64> = paths.iter().map(|p| p.cost_change().to_f64_lossy()).collect();
    let v0: Moments<f64> = paths.iter().map(|p| p.value[0].to_f64_lossy()).collect();

    Ok(BacktestReport {
        summary: BacktestSummary {
            n_paths,
            steps: grid.steps(),
            method: match options.method {
                HedgeMethod::Nested => EstimateMethod::Nested,
                HedgeMethod::Regression => EstimateMethod::Regression,
            },
            option: OptionSpec {
                kind: option.kind,
                strike: option.strike.to_f64_lossy(),
            },
            initial_value: v0.mean(),
            orthogonality,
            cost_drift: Interval::new(drift.mean(), drift.stderr()),
            terminal_error_mean: -drift.mean(),
            terminal_error_std: drift.std_dev(),
            terminal_cost_variance: drift.variance(),
            hedge_out_of_range: out_of_range,
            regression_reduced: matches!(&estimator, Estimator::Regression(h) if h.reduced),
        },
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_correlation_of_independent_and_identical_series() {
        let a: Vec<Vec<f64>> = (0..200)
            .map(|i| (0..10).map(|k| ((i * 31 + k * 17) % 23) as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let same = pooled_correlation(&refs, &refs);
        assert!((same.estimate - 1.0).abs() < 1e-12);
        let neg: Vec<Vec<f64>> = a.iter().map(|v| v.iter().map(|x| -2.0 * x).collect()).collect();
        let nrefs: Vec<&[f64]> = neg.iter().map(Vec::as_slice).collect();
        assert!((pooled_correlation(&refs, &nrefs).estimate + 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_flags_zero() {
        assert!(Interval::new(0.001, 0.001).contains_zero);
        assert!(!Interval::new(0.01, 0.001).contains_zero);
    }
}
