//! Least-squares Monte Carlo estimate of the hedge along simulated paths.
//!
//! One regression per grid time, on MMM training paths, of the put ratio
//! `1{S_T<K} S_T / S_t` onto total-degree polynomials in standardized
//! `(log S_t, sigma^2_{t-})`. A second regression of the put value `V_t / K`
//! on `(log S_t, sigma^2_t)` provides the value process for backtests.
//!
//! Close to maturity the ratio is nearly a step in `log S`, which no
//! low-degree polynomial follows. Both regressions therefore fit the residual
//! against a Black-Scholes mixture control (see [`Control`]), and the
//! polynomial only carries a smooth correction. Without jumps the control is
//! exact. Fitting and prediction run in `f64` whatever the engine scalar.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::estimate::{bs_put_value, put_ratio_given_variance, require_feasible, Sampling};
use crate::error::{EngineError, Result};
use crate::model::{cal_b, sample_model_jumps, simulate_path, BnsParams, MeasureKind, TimeGrid};
use crate::rng::{Purpose, Streams};
use crate::scalar::Scalar;
use crate::stats::par_collect;

pub const MIN_TRAINING_PATHS: usize = 10_000;
pub const MAX_BASIS_DEGREE: usize = 6;
const RANK_TOL: f64 = 1e-10;

/// A fitted polynomial regression in two state variables.
#[derive(Debug, Clone)]
pub struct BasisFit {
    mean: [f64; 2],
    scale: [f64; 2],
    kept: [bool; 2],
    degree: usize,
    coef: DVector<f64>,
    r: DMatrix<f64>,
    /// `n/(n-p) sum_i e_i^2 q_i q_i'` over the rows `q_i` of the thin `Q`.
    meat: DMatrix<f64>,
}

fn monomials(z: [f64; 2], kept: [bool; 2], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    match kept {
        [true, true] => {
            for d in 0..=degree {
                for j in 0..=d {
                    out.push(z[0].powi((d - j) as i32) * z[1].powi(j as i32));
                }
            }
        }
        [true, false] | [false, true] => {
            let x = if kept[0] { z[0] } else { z[1] };
            out.extend((0..=degree).map(|d| x.powi(d as i32)));
        }
        [false, false] => out.push(1.0),
    }
}

impl BasisFit {
    /// Fit `ys` on `xs`, lowering the degree until the design has full rank.
    /// Returns the fit and whether the degree had to be reduced.
    pub fn fit(xs: &[[f64; 2]], ys: &[f64], degree: usize) -> Result<(Self, bool)> {
        let n = xs.len();
        let mut mean = [0.0; 2];
        let mut scale = [1.0; 2];
        let mut kept = [false; 2];
        for c in 0..2 {
            let m = xs.iter().map(|x| x[c]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[c] - m).powi(2)).sum::<f64>() / n as f64;
            mean[c] = m;
            // features constant across the sample (e.g. sigma^2 without jumps) carry no information
            if var.sqrt() > 1e-12 * (1.0 + m.abs()) {
                scale[c] = var.sqrt();
                kept[c] = true;
            }
        }
        let mut row = Vec::new();
        for d in (0..=degree).rev() {
            let Some(fit) = Self::fit_degree(xs, ys, mean, scale, kept, d, &mut row) else {
                continue;
            };
            return Ok((fit, d < degree));
        }
        Err(EngineError::Precondition(
            "regression design is rank deficient at every degree".into(),
        ))
    }

    fn fit_degree(
        xs: &[[f64; 2]],
        ys: &[f64],
        mean: [f64; 2],
        scale: [f64; 2],
        kept: [bool; 2],
        degree: usize,
        row: &mut Vec<f64>,
    ) -> Option<Self> {
        let n = xs.len();
        monomials([0.0; 2], kept, degree, row);
        let p = row.len();
        if n <= p {
            return None;
        }
        let mut design = DMatrix::<f64>::zeros(n, p);
        for (i, x) in xs.iter().enumerate() {
            monomials(
                [(x[0] - mean[0]) / scale[0], (x[1] - mean[1]) / scale[1]],
                kept,
                degree,
                row,
            );
            for (j, v) in row.iter().enumerate() {
                design[(i, j)] = *v;
            }
        }
        let qr = design.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
        let top = diag.iter().cloned().fold(0.0, f64::max);
        if !(top > 0.0) || diag.iter().any(|&d| d <= RANK_TOL * top) {
            return None;
        }
        let mut qty = DVector::from_column_slice(ys);
        qr.q_tr_mul(&mut qty);
        let coef = r.solve_upper_triangular(&qty.rows(0, p).into_owned())?;
        let resid = DVector::from_column_slice(ys) - &design * &coef;
        let mut q = qr.q();
        for (i, e) in resid.iter().enumerate() {
            q.row_mut(i).scale_mut(*e);
        }
        let meat = (q.transpose() * &q) * (n as f64 / (n - p) as f64);
        Some(BasisFit {
            mean,
            scale,
            kept,
            degree,
            coef,
            r,
            meat,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Fitted value and its heteroskedasticity-robust (HC1) standard error at `x`.
    pub fn predict(&self, x: [f64; 2]) -> (f64, f64) {
        let mut row = Vec::with_capacity(self.coef.len());
        let z = [
            (x[0] - self.mean[0]) / self.scale[0],
            (x[1] - self.mean[1]) / self.scale[1],
        ];
        monomials(z, self.kept, self.degree, &mut row);
        let phi = DVector::from_vec(row);
        let value = phi.dot(&self.coef);
        // Var(phi' beta_hat) = w' meat w with w = R^{-T} phi
        let se = match self.r.tr_solve_upper_triangular(&phi) {
            Some(w) => w.dot(&(&self.meat * &w)).max(0.0).sqrt(),
            None => f64::INFINITY,
        };
        (value, se)
    }
}

/// Per-time regressions for the put hedge and value.
#[derive(Debug, Clone)]
pub struct RegressionHedger {
    strike: f64,
    grid: Vec<f64>,
    control: Control,
    xi_fits: Vec<BasisFit>,
    value_fits: Vec<BasisFit>,
    /// Some fit used a lower degree than requested.
    pub reduced: bool,
    pub n_train: usize,
}

/// Draws of the jump part of the remaining variance behind the control.
const CONTROL_PATHS: usize = 8192;
/// Equal-count buckets the positive draws are averaged into.
const CONTROL_BUCKETS: usize = 64;

/// Black-Scholes mixture control.
///
/// With no leverage, `int_t^T sigma^2 = sigma^2_t B(tau) + V`, where the
/// jump part `V = sum_{u > t} x B(T - u)` is independent of `(S_t, sigma^2_t)`.
/// The control averages the Black-Scholes ratio and value over the law of
/// `V`, represented by bucket means of sorted draws.
#[derive(Debug, Clone)]
struct Control {
    strike: f64,
    /// `B(tau_k)` per grid time.
    decay: Vec<f64>,
    /// Per grid time: `(V, weight)` atoms, weights summing to one.
    jump_var: Vec<Vec<(f64, f64)>>,
}

fn bucket_atoms(mut draws: Vec<f64>, total: usize) -> Vec<(f64, f64)> {
    let zeros = total - draws.len();
    let mut atoms = Vec::with_capacity(CONTROL_BUCKETS + 1);
    if zeros > 0 {
        atoms.push((0.0, zeros as f64 / total as f64));
    }
    draws.sort_by(f64::total_cmp);
    let per = draws.len().div_ceil(CONTROL_BUCKETS).max(1);
    for chunk in draws.chunks(per) {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        atoms.push((mean, chunk.len() as f64 / total as f64));
    }
    atoms
}

impl Control {
    fn new<S: Scalar>(params: &BnsParams<S>, strike: f64, grid: &TimeGrid<S>, streams: &Streams) -> Self {
        let t_end = params.maturity.to_f64_lossy();
        let lambda = params.lambda.to_f64_lossy();
        let fam = streams.child(Purpose::Training, 1, 0);
        let paths: Vec<Vec<(f64, f64)>> = par_collect(CONTROL_PATHS, |i| {
            let jumps = sample_model_jumps(params, &mut fam.rng(i as u64));
            jumps
                .times()
                .iter()
                .zip(jumps.sizes())
                .map(|(u, x)| (u.to_f64_lossy(), x.to_f64_lossy()))
                .collect()
        });
        let mut decay = Vec::with_capacity(grid.points().len());
        let mut jump_var = Vec::with_capacity(grid.points().len());
        for t in grid.points() {
            let t = t.to_f64_lossy();
            decay.push(cal_b(lambda, t_end - t));
            let positive: Vec<f64> = paths
                .iter()
                .map(|jumps| {
                    jumps
                        .iter()
                        .filter(|j| j.0 > t)
                        .map(|&(u, x)| x * cal_b(lambda, t_end - u))
                        .sum::<f64>()
                })
                .filter(|&v| v > 0.0)
                .collect();
            jump_var.push(bucket_atoms(positive, CONTROL_PATHS));
        }
        Control {
            strike,
            decay,
            jump_var,
        }
    }

    fn mix(&self, k: usize, sigma_sq: f64, f: impl Fn(f64) -> f64) -> f64 {
        let base = sigma_sq * self.decay[k];
        self.jump_var[k].iter().map(|&(v, w)| w * f(base + v)).sum()
    }

    fn ratio(&self, k: usize, log_s: f64, sigma_sq: f64) -> f64 {
        let s = log_s.exp();
        self.mix(k, sigma_sq, |v| put_ratio_given_variance(s, self.strike, v))
    }

    fn value(&self, k: usize, log_s: f64, sigma_sq: f64) -> f64 {
        let s = log_s.exp();
        self.mix(k, sigma_sq, |v| bs_put_value(s, self.strike, v)) / self.strike
    }
}

/// Per-path training rows: `(log S, sigma^2_-, sigma^2, ratio, value / K)` per grid time.
type TrainingRow = Vec<[f64; 5]>;

fn check_request<S: Scalar>(params: &BnsParams<S>, strike: S, n: usize, degree: usize) -> Result<()> {
    params.validate()?;
    require_feasible(params)?;
    if !(strike > S::zero()) {
        return Err(EngineError::invalid("strike", "must be positive"));
    }
    if n < MIN_TRAINING_PATHS {
        return Err(EngineError::invalid(
            "n_paths",
            format!("regression needs at least {MIN_TRAINING_PATHS} training paths, got {n}"),
        ));
    }
    if !(1..=MAX_BASIS_DEGREE).contains(&degree) {
        return Err(EngineError::invalid(
            "basis_degree",
            format!("must be in [1, {MAX_BASIS_DEGREE}], got {degree}"),
        ));
    }
    Ok(())
}

fn training_rows<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    grid: &TimeGrid<S>,
    n: usize,
    streams: &Streams,
    sampling: Sampling,
) -> Result<Vec<TrainingRow>> {
    let k_f = strike.to_f64_lossy();
    let rows: Vec<Result<TrainingRow>> = par_collect(n, |i| {
        let path = simulate_path(
            params,
            MeasureKind::Mmm,
            grid,
            &mut streams.stream(Purpose::Training, i as u64),
        )?;
        let m = path.steps();
        let st = path.terminal_price().to_f64_lossy();
        let mut remaining = S::zero();
        let mut row = vec![[0.0; 5]; m];
        for k in (0..m).rev() {
            remaining = remaining + path.int_var_step[k];
            let s = path.price(k);
            let (ratio, value) = match sampling {
                Sampling::Direct => {
                    let hit = if st < k_f { st / s.to_f64_lossy() } else { 0.0 };
                    (hit, (k_f - st).max(0.0))
                }
                Sampling::RaoBlackwell => (
                    put_ratio_given_variance(s, strike, remaining).to_f64_lossy(),
                    bs_put_value(s, strike, remaining).to_f64_lossy(),
                ),
            };
            row[k] = [
                path.log_s[k].to_f64_lossy(),
                path.sigma_sq_left[k].to_f64_lossy(),
                path.sigma_sq_right[k].to_f64_lossy(),
                ratio,
                value / k_f,
            ];
        }
        Ok(row)
    });
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| e.at_path(i)))
        .collect()
}

impl RegressionHedger {
    pub fn fit<S: Scalar>(
        params: &BnsParams<S>,
        strike: S,
        grid: &TimeGrid<S>,
        n_train: usize,
        degree: usize,
        streams: &Streams,
        sampling: Sampling,
    ) -> Result<Self> {
        check_request(params, strike, n_train, degree)?;
        let rows = training_rows(params, strike, grid, n_train, streams, sampling)?;
        Self::from_rows(params, strike.to_f64_lossy(), grid, &rows, degree, streams)
    }

    fn from_rows<S: Scalar>(
        params: &BnsParams<S>,
        strike: f64,
        grid: &TimeGrid<S>,
        rows: &[TrainingRow],
        degree: usize,
        streams: &Streams,
    ) -> Result<Self> {
        let m = grid.steps();
        let control = Control::new(params, strike, grid, streams);
        let fits: Vec<Result<(BasisFit, bool, BasisFit, bool)>> = par_collect(m, |k| {
            let xi_x: Vec<[f64; 2]> = rows.iter().map(|r| [r[k][0], r[k][1]]).collect();
            let ratio: Vec<f64> = rows
                .iter()
                .map(|r| r[k][3] - control.ratio(k, r[k][0], r[k][1]))
                .collect();
            let value_x: Vec<[f64; 2]> = rows.iter().map(|r| [r[k][0], r[k][2]]).collect();
            let value: Vec<f64> = rows
                .iter()
                .map(|r| r[k][4] - control.value(k, r[k][0], r[k][2]))
                .collect();
            let (xf, xr) = BasisFit::fit(&xi_x, &ratio, degree)?;
            let (vf, vr) = BasisFit::fit(&value_x, &value, degree)?;
            Ok((xf, xr, vf, vr))
        });
        let mut out = RegressionHedger {
            strike,
            grid: grid.points().iter().map(|t| t.to_f64_lossy()).collect(),
            control,
            xi_fits: Vec::with_capacity(m),
            value_fits: Vec::with_capacity(m),
            reduced: false,
            n_train: rows.len(),
        };
        for f in fits {
            let (xf, xr, vf, vr) = f?;
            out.reduced |= xr || vr;
            out.xi_fits.push(xf);
            out.value_fits.push(vf);
        }
        Ok(out)
    }

    pub fn steps(&self) -> usize {
        self.xi_fits.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Basis degree actually used at each grid time (hedge fits).
    pub fn degrees(&self) -> Vec<usize> {
        self.xi_fits.iter().map(BasisFit::degree).collect()
    }

    /// Put hedge at grid time `k`, clamped to `[-1, 0]`, with the regression
    /// standard error of the fitted ratio.
    pub fn xi<S: Scalar>(&self, k: usize, s: S, sigma_sq_left: S) -> (S, S) {
        let x = [s.to_f64_lossy().ln(), sigma_sq_left.to_f64_lossy()];
        let (resid, se) = self.xi_fits[k].predict(x);
        let ratio = self.control.ratio(k, x[0], x[1]) + resid;
        (S::lit((-ratio).clamp(-1.0, 0.0)), S::lit(se))
    }

    /// Put value at grid time `k`, clamped to `[(K - S)^+, K]`.
    pub fn put_value<S: Scalar>(&self, k: usize, s: S, sigma_sq: S) -> S {
        let s = s.to_f64_lossy();
        let x = [s.ln(), sigma_sq.to_f64_lossy()];
        let v = self.control.value(k, x[0], x[1]) + self.value_fits[k].predict(x).0;
        let k_f = self.strike;
        S::lit((v * k_f).clamp((k_f - s).max(0.0), k_f))
    }
}

/// In-sample regression hedge along the training paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionEstimates<S> {
    pub grid: Vec<S>,
    /// `xi[path][k]` for hedge times `t_0, ..., t_{m-1}`.
    pub xi: Vec<Vec<S>>,
    pub stderr: Vec<Vec<S>>,
    /// `(S_{t_k}, sigma^2_{t_k-})` at which each estimate applies.
    pub states: Vec<Vec<(S, S)>>,
    pub degrees: Vec<usize>,
    /// Rank deficiency forced a lower degree at some grid time.
    pub reduced: bool,
}

pub fn lrm_put_regression<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    basis_degree: usize,
    streams: &Streams,
    sampling: Sampling,
) -> Result<RegressionEstimates<S>> {
    check_request(params, strike, n_paths, basis_degree)?;
    let rows = training_rows(params, strike, grid, n_paths, streams, sampling)?;
    let hedger = RegressionHedger::from_rows(params, strike.to_f64_lossy(), grid, &rows, basis_degree, streams)?;
    let m = grid.steps();
    let mut out = RegressionEstimates {
        grid: grid.points().to_vec(),
        xi: Vec::with_capacity(n_paths),
        stderr: Vec::with_capacity(n_paths),
        states: Vec::with_capacity(n_paths),
        degrees: hedger.degrees(),
        reduced: hedger.reduced,
    };
    for row in &rows {
        let mut xi = Vec::with_capacity(m);
        let mut se = Vec::with_capacity(m);
        let mut st = Vec::with_capacity(m);
        for (k, r) in row.iter().enumerate() {
            let s = S::lit(r[0].exp());
            let sigma_sq = S::lit(r[1]);
            let (x, e) = hedger.xi(k, s, sigma_sq);
            xi.push(x);
            se.push(e);
            st.push((s, sigma_sq));
        }
        out.xi.push(xi);
        out.stderr.push(se);
        out.states.push(st);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_polynomial() {
        let xs: Vec<[f64; 2]> = (0..200)
            .map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]).collect();
        let (f, reduced) = BasisFit::fit(&xs, &ys, 2).unwrap();
        assert!(!reduced);
        let (v, se) = f.predict([0.3, -0.2]);
        assert_relative_eq!(v, 1.0 + 0.6 + 0.2 - 0.03, epsilon = 1e-10);
        assert!(se < 1e-9);
    }

    #[test]
    fn constant_feature_is_dropped() {
        let xs: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 / 100.0, 0.04]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
        let (f, reduced) = BasisFit::fit(&xs, &ys, 3).unwrap();
        assert!(!reduced);
        assert_relative_eq!(f.predict([0.5, 0.04]).0, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn duplicated_states_reduce_degree() {
        // three distinct values cannot support a cubic
        let xs: Vec<[f64; 2]> = (0..90).map(|i| [(i % 3) as f64, 1.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let (f, reduced) = BasisFit::fit(&xs, &ys, 3).unwrap();
        assert!(reduced);
        assert_eq!(f.degree(), 2);
    }

    #[test]
    fn standard_error_matches_ols_formula() {
        // intercept-only fit: the robust se of the mean is sd / sqrt(n)
        let ys: Vec<f64> = (0..400).map(|i| ((i * 7919) % 101) as f64).collect();
        let xs = vec![[0.0, 0.0]; ys.len()];
        let (f, _) = BasisFit::fit(&xs, &ys, 2).unwrap();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let (v, se) = f.predict([0.0, 0.0]);
        assert_relative_eq!(v, mean, max_relative = 1e-12);
        assert_relative_eq!(se, sd / n.sqrt(), max_relative = 1e-10);
    }
}
