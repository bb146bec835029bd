//! Minimal martingale measure.
//!
//! With market price of risk `u_t = mu / sigma_t + (beta + 1/2) sigma_t`,
//! the density is `Z_t = exp(-1/2 int u^2 dt - int u dW)`. Between jumps
//! `sigma^2` is a decaying exponential, so every integral of `u` over a step
//! is available in closed form and `(int sigma dW, int u dW)` is drawn from
//! its exact 2x2 Gaussian law.

use rand::Rng;
use serde::Serialize;

use crate::error::{EngineError, Result};
use crate::model::{
    cal_b, check_step_jumps, integrated_variance_step, simulate_path, validate_assumptions, BnsParams, MeasureKind,
    SimulatedPath, TimeGrid,
};
use crate::rng::{Purpose, Streams};
use crate::scalar::Scalar;
use crate::stats::{doubling_ratio, max_to_sum, par_collect, Moments};

/// Market price of risk `u = mu / sigma + (beta + 1/2) sigma`.
pub fn mpr<S: Scalar>(params: &BnsParams<S>, sigma_sq: S) -> Result<S> {
    if !(sigma_sq > S::zero()) {
        return Err(EngineError::domain(
            "variance must be positive (degenerate volatility)",
            sigma_sq.to_f64_lossy(),
        ));
    }
    let sigma = sigma_sq.sqrt();
    Ok(params.mu / sigma + params.premium() * sigma)
}

/// Exact integrals over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepIntegrals<S> {
    pub int_var: S,
    pub int_u_sq: S,
    pub int_cross: S,
}

/// `int sigma^{-2} ds` over the step, piecewise between jumps.
fn inverse_variance_integral<S: Scalar>(sigma_sq_s: S, lambda: S, delta: S, jumps: &[(S, S)]) -> S {
    let mut c = sigma_sq_s;
    let mut prev = S::zero();
    let mut acc = S::zero();
    let piece = |c: S, len: S| (lambda * len).exp_m1() / (lambda * c);
    for &(u, x) in jumps {
        let len = u - prev;
        acc = acc + piece(c, len);
        c = c * (-lambda * len).exp() + x;
        prev = u;
    }
    acc + piece(c, delta - prev)
}

/// Step integrals of `sigma^2`, `u^2` and `sigma u`.
///
/// `premium` is `beta + 1/2`.
pub fn step_integrals<S: Scalar>(
    sigma_sq_s: S,
    lambda: S,
    mu: S,
    premium: S,
    delta: S,
    jumps: &[(S, S)],
) -> Result<StepIntegrals<S>> {
    check_step_jumps(delta, jumps)?;
    let int_var = integrated_variance_step(sigma_sq_s, lambda, delta, jumps)?;
    let int_u_sq = if mu == S::zero() {
        premium * premium * int_var
    } else {
        let inv = inverse_variance_integral(sigma_sq_s, lambda, delta, jumps);
        (mu * mu * inv + S::lit(2.0) * mu * premium * delta + premium * premium * int_var).max(S::zero())
    };
    Ok(StepIntegrals {
        int_var,
        int_u_sq,
        int_cross: mu * delta + premium * int_var,
    })
}

pub fn step_integrals_for<S: Scalar>(
    params: &BnsParams<S>,
    sigma_sq_s: S,
    delta: S,
    jumps: &[(S, S)],
) -> Result<StepIntegrals<S>> {
    step_integrals(sigma_sq_s, params.lambda, params.mu, params.premium(), delta, jumps)
}

/// Knobs for [`density_path`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensityOptions {
    /// Mutation canary: the density exponent uses `u` with the sign of the
    /// premium term flipped while the Gaussian keeps the true law. Breaks
    /// `E[Z_T] = 1` whenever `mu (beta + 1/2) != 0`. Never set outside tests
    /// and the self-check canary.
    pub mpr_sign_bug: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityPath<S> {
    pub grid: Vec<S>,
    pub u_sq_step: Vec<S>,
    pub cross_step: Vec<S>,
    /// `Z_{t_k}`, with `Z_0 = 1`.
    pub z: Vec<S>,
    pub g_sigma: Vec<S>,
    pub g_u: Vec<S>,
    /// Steps whose correlation had to be clamped into `[-1, 1]`.
    pub clamped: usize,
}

impl<S: Scalar> DensityPath<S> {
    pub fn terminal(&self) -> S {
        *self.z.last().expect("nonempty")
    }
}

/// Density process along a physical path. The path's `gauss_step` is reused
/// as `int sigma dW`, so `S` and `Z` are jointly consistent; `rng` supplies
/// the independent part of `int u dW`.
pub fn density_path<S: Scalar, R: Rng + ?Sized>(
    params: &BnsParams<S>,
    path: &SimulatedPath<S>,
    rng: &mut R,
    options: DensityOptions,
) -> Result<DensityPath<S>> {
    if path.measure != MeasureKind::Physical {
        return Err(EngineError::Precondition(
            "density path needs a physical-measure path".into(),
        ));
    }
    if !validate_assumptions(params).feasible {
        return Err(EngineError::Infeasible(
            "standing assumption has no admissible kappa".into(),
        ));
    }
    let m = path.steps();
    let mut out = DensityPath {
        grid: path.grid.clone(),
        u_sq_step: Vec::with_capacity(m),
        cross_step: Vec::with_capacity(m),
        z: Vec::with_capacity(m + 1),
        g_sigma: Vec::with_capacity(m),
        g_u: Vec::with_capacity(m),
        clamped: 0,
    };
    let mut log_z = S::zero();
    out.z.push(S::one());
    for k in 0..m {
        let delta = path.grid[k + 1] - path.grid[k];
        let jumps = path.step_jumps(k);
        let start = path.sigma_sq_right[k];
        let ints = step_integrals_for(params, start, delta, &jumps)?;
        let iv = path.int_var_step[k];
        let q = ints.int_u_sq;
        let g_sigma = path.gauss_step[k];
        let n2 = S::standard_normal(rng);
        let g_u = if q > S::zero() && iv > S::zero() {
            let mut rho = ints.int_cross / (iv * q).sqrt();
            if rho.abs() > S::one() {
                rho = rho.signum();
                out.clamped += 1;
            }
            let n1 = g_sigma / iv.sqrt();
            q.sqrt() * (rho * n1 + (S::one() - rho * rho).max(S::zero()).sqrt() * n2)
        } else {
            S::zero()
        };
        let exponent_q = if options.mpr_sign_bug {
            step_integrals(start, params.lambda, params.mu, -params.premium(), delta, &jumps)?.int_u_sq
        } else {
            q
        };
        log_z = log_z - exponent_q * S::lit(0.5) - g_u;
        out.u_sq_step.push(q);
        out.cross_step.push(ints.int_cross);
        out.g_sigma.push(g_sigma);
        out.g_u.push(g_u);
        out.z.push(log_z.exp());
    }
    Ok(out)
}

/// The pair `(a, b)` admits the martingale `Y^{a,b}` when
/// `int_1^inf exp{(2b + a^2 B(T)/2) x} nu(dx) < inf`.
pub fn y_martingale_condition<S: Scalar>(params: &BnsParams<S>, a: S, b: S) -> Result<bool> {
    let kappa = S::lit(2.0) * b + a * a * cal_b(params.lambda, params.maturity) * S::lit(0.5);
    exp_integral_finite(params, kappa)
}

/// Strengthened condition `int_1^inf exp{(4b + 2 a^2 B(T)) x} nu(dx) < inf`
/// under which `Y^{a,b}` is square integrable.
pub fn y_square_condition<S: Scalar>(params: &BnsParams<S>, a: S, b: S) -> Result<bool> {
    let kappa = S::lit(4.0) * b + S::lit(2.0) * a * a * cal_b(params.lambda, params.maturity);
    exp_integral_finite(params, kappa)
}

fn exp_integral_finite<S: Scalar>(params: &BnsParams<S>, kappa: S) -> Result<bool> {
    if kappa == S::zero() {
        return Ok(true);
    }
    Ok(params.subordinator.exp_moment(kappa)?.finite)
}

/// Terminal value of
///
/// ```text
/// Y^{a,b}_T = exp{ -a^2/2 int sigma^2 + a int sigma dW + b J_T - T int (e^{b x} - 1) nu(dx) }
/// ```
///
/// with `nu = lambda nu^H`, read off a simulated path.
pub fn exp_martingale_y<S: Scalar>(a: S, b: S, params: &BnsParams<S>, path: &SimulatedPath<S>) -> Result<S> {
    if b < S::zero() {
        return Err(EngineError::domain("b must be nonnegative", b.to_f64_lossy()));
    }
    if !y_martingale_condition(params, a, b)? {
        return Err(EngineError::Precondition(format!(
            "int_1^inf exp{{(2b + a^2 B(T)/2) x}} nu(dx) diverges for a = {a}, b = {b}"
        )));
    }
    let compensator = if b > S::zero() {
        params.maturity * params.lambda * params.subordinator.exp_moment(b)?.value
    } else {
        S::zero()
    };
    let iv = path.total_variance();
    let w: S = path.gauss_step.iter().copied().sum();
    let exponent = -a * a * S::lit(0.5) * iv + a * w + b * path.jumps.terminal() - compensator;
    Ok(exponent.exp())
}

/// Monte Carlo check of the density process, reported as JSON by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityReport {
    pub n_paths: usize,
    pub e_z: f64,
    pub e_z_stderr: f64,
    pub e_zs: f64,
    pub e_zs_stderr: f64,
    /// `E_P[Z_T S_T]` uses `S_0` as target.
    pub s0: f64,
    pub e_z_sq: f64,
    pub e_z_sq_half: f64,
    pub z_sq_doubling_ratio: f64,
    pub z_sq_max_to_sum: f64,
    pub min_z: f64,
    pub clamped_steps: usize,
}

pub fn density_report<S: Scalar>(
    params: &BnsParams<S>,
    grid: &TimeGrid<S>,
    n_paths: usize,
    streams: &Streams,
    options: DensityOptions,
) -> Result<DensityReport> {
    let draws: Vec<Result<(f64, f64, f64, usize)>> = par_collect(n_paths, |i| {
        let mut rng = streams.stream(Purpose::Path, i as u64);
        let path = simulate_path(params, MeasureKind::Physical, grid, &mut rng)?;
        let mut drng = streams.stream(Purpose::Density, i as u64);
        let d = density_path(params, &path, &mut drng, options)?;
        let min_z = d.z.iter().fold(f64::INFINITY, |m, z| m.min(z.to_f64_lossy()));
        Ok((
            d.terminal().to_f64_lossy(),
            path.terminal_price().to_f64_lossy(),
            min_z,
            d.clamped,
        ))
    });
    let mut z = Vec::with_capacity(n_paths);
    let mut zs = Moments::<f64>::default();
    let mut min_z = f64::INFINITY;
    let mut clamped = 0;
    for (i, d) in draws.into_iter().enumerate() {
        let (zt, st, mz, c) = d.map_err(|e| e.at_path(i))?;
        z.push(zt);
        zs.push(zt * st);
        min_z = min_z.min(mz);
        clamped += c;
    }
    let zm: Moments<f64> = z.iter().copied().collect();
    let z_sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    let half = n_paths / 2;
    Ok(DensityReport {
        n_paths,
        e_z: zm.mean(),
        e_z_stderr: zm.stderr(),
        e_zs: zs.mean(),
        e_zs_stderr: zs.stderr(),
        s0: params.s0.to_f64_lossy(),
        e_z_sq: z_sq.iter().sum::<f64>() / n_paths as f64,
        e_z_sq_half: z_sq[..half].iter().sum::<f64>() / half as f64,
        z_sq_doubling_ratio: doubling_ratio(&z_sq),
        z_sq_max_to_sum: max_to_sum(&z_sq),
        min_z,
        clamped_steps: clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YReport {
    pub a: f64,
    pub b: f64,
    pub n_paths: usize,
    pub mean: f64,
    pub stderr: f64,
    pub square_integrable: bool,
    pub second_moment_doubling_ratio: f64,
}

pub fn y_report<S: Scalar>(
    params: &BnsParams<S>,
    a: S,
    b: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    streams: &Streams,
) -> Result<YReport> {
    let ys: Vec<Result<f64>> = par_collect(n_paths, |i| {
        let mut rng = streams.stream(Purpose::Path, i as u64);
        let path = simulate_path(params, MeasureKind::Physical, grid, &mut rng)?;
        exp_martingale_y(a, b, params, &path).map(|y| y.to_f64_lossy())
    });
    let ys: Vec<f64> = ys.into_iter().collect::<Result<_>>()?;
    let m: Moments<f64> = ys.iter().copied().collect();
    let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    Ok(YReport {
        a: a.to_f64_lossy(),
        b: b.to_f64_lossy(),
        n_paths,
        mean: m.mean(),
        stderr: m.stderr(),
        square_integrable: y_square_condition(params, a, b)?,
        second_moment_doubling_ratio: doubling_ratio(&sq),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinator::SubordinatorSpec;
    use approx::assert_relative_eq;

    fn params(mu: f64, beta: f64, sub: SubordinatorSpec<f64>) -> BnsParams<f64> {
        BnsParams::new(100.0, mu, beta, 1.0, 0.04, 1.0, sub).unwrap()
    }

    #[test]
    fn mpr_examples() {
        let p = params(0.0, -0.5, SubordinatorSpec::NoJumps);
        assert_eq!(mpr(&p, 0.7).unwrap(), 0.0);
        assert_relative_eq!(
            mpr(&params(0.05, 0.0, SubordinatorSpec::NoJumps), 0.04).unwrap(),
            0.35,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            mpr(&params(0.0, 0.5, SubordinatorSpec::NoJumps), 0.04).unwrap(),
            0.2,
            max_relative = 1e-15
        );
        assert!(mpr(&p, 0.0).is_err());
        assert!(mpr(&p, -1.0).is_err());
    }

    #[test]
    fn step_integral_examples() {
        // mu = 0, beta = -1/2
        let zero = step_integrals(0.3, 1.0, 0.0, 0.0, 0.5, &[(0.1, 0.2)]).unwrap();
        assert_eq!(zero.int_u_sq, 0.0);
        assert_eq!(zero.int_cross, 0.0);

        let s = step_integrals(0.04, 1.0, 0.0, 0.5, 0.5, &[]).unwrap();
        assert_relative_eq!(s.int_u_sq, 0.25 * 0.04 * (1.0 - (-0.5f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(s.int_u_sq, 0.003_934_7, epsilon = 1e-7);

        let s = step_integrals(0.04, 1.0, 0.05, 0.0, 0.5, &[]).unwrap();
        let expected = 0.0025 * (0.5f64.exp() - 1.0) / 0.04;
        assert_relative_eq!(s.int_u_sq, expected, max_relative = 1e-14);
        assert_relative_eq!(s.int_u_sq, 0.040_545_1, epsilon = 1e-7);
    }

    #[test]
    fn inverse_variance_matches_fine_riemann_sum() {
        // brute-force midpoint rule on the explicit piecewise variance path
        let (c0, lambda, delta) = (0.05, 1.7, 0.8);
        let jumps = [(0.2, 0.1), (0.55, 0.03)];
        let sigma_sq = |t: f64| {
            let mut v = c0 * (-lambda * t).exp();
            for &(u, x) in &jumps {
                if u <= t {
                    v += x * (-lambda * (t - u)).exp();
                }
            }
            v
        };
        let n = 400_000;
        let h = delta / n as f64;
        let (mut inv, mut var) = (0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            inv += h / sigma_sq(t);
            var += h * sigma_sq(t);
        }
        let (mu, premium) = (0.07, 0.9);
        let s = step_integrals(c0, lambda, mu, premium, delta, &jumps).unwrap();
        let u_sq = mu * mu * inv + 2.0 * mu * premium * delta + premium * premium * var;
        assert_relative_eq!(s.int_var, var, max_relative = 1e-8);
        assert_relative_eq!(s.int_u_sq, u_sq, max_relative = 1e-8);
        assert_relative_eq!(s.int_cross, mu * delta + premium * var, max_relative = 1e-8);
    }

    #[test]
    fn density_is_one_without_risk_premium() {
        let p = params(0.0, -0.5, SubordinatorSpec::gamma_ou(1.0, 10.0).unwrap());
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let streams = Streams::new(5);
        for i in 0..50 {
            let path = simulate_path(&p, MeasureKind::Physical, &grid, &mut streams.stream(Purpose::Path, i)).unwrap();
            let d = density_path(
                &p,
                &path,
                &mut streams.stream(Purpose::Density, i),
                DensityOptions::default(),
            )
            .unwrap();
            assert!(d.z.iter().all(|&z| z == 1.0));
        }
    }

    #[test]
    fn density_rejects_mmm_paths_and_infeasible_params() {
        let p = params(0.01, 0.0, SubordinatorSpec::gamma_ou(1.0, 10.0).unwrap());
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let mut rng = Streams::new(1).stream(Purpose::Path, 0);
        let path = simulate_path(&p, MeasureKind::Mmm, &grid, &mut rng).unwrap();
        assert!(density_path(&p, &path, &mut rng, DensityOptions::default()).is_err());
        let bad = params(0.01, 0.0, SubordinatorSpec::gamma_ou(1.0, 2.0).unwrap());
        let path = simulate_path(&bad, MeasureKind::Physical, &grid, &mut rng).unwrap();
        assert!(matches!(
            density_path(&bad, &path, &mut rng, DensityOptions::default()),
            Err(EngineError::Infeasible(_))
        ));
    }

    #[test]
    fn joint_gaussian_has_exact_covariance() {
        // NoJumps: the per-step integrals are deterministic, so the empirical
        // covariance of (G_sigma, G_u) can be checked directly
        let p = params(0.05, 0.3, SubordinatorSpec::NoJumps);
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let streams = Streams::new(77);
        let n = 200_000;
        let mut pairs = Vec::with_capacity(n);
        let mut first = None;
        for i in 0..n as u64 {
            let path = simulate_path(&p, MeasureKind::Physical, &grid, &mut streams.stream(Purpose::Path, i)).unwrap();
            let d = density_path(
                &p,
                &path,
                &mut streams.stream(Purpose::Density, i),
                DensityOptions::default(),
            )
            .unwrap();
            first.get_or_insert((path.int_var_step[0], d.u_sq_step[0], d.cross_step[0]));
            pairs.push((d.g_sigma[0], d.g_u[0]));
        }
        let (v, q, c) = first.unwrap();
        let nf = n as f64;
        let cov = pairs.iter().map(|(a, b)| a * b).sum::<f64>() / nf;
        let var_u = pairs.iter().map(|(_, b)| b * b).sum::<f64>() / nf;
        assert!((var_u - q).abs() < 4.0 * q * (2.0 / nf).sqrt());
        assert!((cov - c).abs() < 4.0 * ((v * q + c * c) / nf).sqrt());
    }

    #[test]
    fn y_gate_boundaries() {
        let p = params(0.03, 0.0, SubordinatorSpec::gamma_ou(1.0, 10.0).unwrap());
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let path = simulate_path(
            &p,
            MeasureKind::Physical,
            &grid,
            &mut Streams::new(1).stream(Purpose::Path, 0),
        )
        .unwrap();
        assert_eq!(exp_martingale_y(0.0, 0.0, &p, &path).unwrap(), 1.0);
        // 2b + a^2 B(T) / 2 < 10  <=>  admissible
        let b_t = cal_b(1.0, 1.0);
        let a = 1.0;
        let b_edge = (10.0 - 0.5 * a * a * b_t) / 2.0;
        assert!(exp_martingale_y(a, b_edge * (1.0 - 1e-9), &p, &path).is_ok());
        assert!(matches!(
            exp_martingale_y(a, b_edge, &p, &path),
            Err(EngineError::Precondition(_))
        ));
        assert!(matches!(
            exp_martingale_y(a, b_edge * 1.01, &p, &path),
            Err(EngineError::Precondition(_))
        ));
        assert!(exp_martingale_y(1.0, -0.1, &p, &path).is_err());
        assert!(y_square_condition(&p, 1.0, 0.5).unwrap());
        assert!(!y_square_condition(&p, 1.0, 2.5).unwrap());
    }
}
