//! Invariant suite run by `bns-hedge selfcheck`.

use serde::Serialize;

use crate::error::Result;
use crate::hedging::{bs_put_delta_oracle, lrm_call_t0, lrm_put_t0, HedgeEstimate, OptionKind, Sampling};
use crate::measure_change::{density_report, y_martingale_condition, y_report, DensityOptions};
use crate::model::{cal_b, terminal_sample, validate_assumptions, BnsParams, MeasureKind, TimeGrid};
use crate::rng::{Purpose, Streams};
use crate::stats::{par_collect, par_moments, Moments};
use crate::subordinator::SubordinatorSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub entry: String,
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Allowed `|value - target|`; zero for exact checks.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SelfcheckOptions {
    pub seed: u64,
    pub n_paths: usize,
    pub grid_steps: usize,
    pub inject_bug: bool,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions {
            seed: 1,
            n_paths: 100_000,
            grid_steps: 16,
            inject_bug: false,
        }
    }
}

/// Black-Scholes limit, Gamma-OU and IG-OU entries.
pub fn default_matrix() -> Vec<(String, BnsParams<f64>)> {
    let base = |mu, sub| BnsParams::new(100.0, mu, 0.0, 1.0, 0.04, 1.0, sub).expect("valid default");
    vec![
        ("no_jumps".to_string(), base(0.05, SubordinatorSpec::NoJumps)),
        (
            "gamma_ou".to_string(),
            base(0.03, SubordinatorSpec::GammaOu { a: 1.0, b: 8.0 }),
        ),
        (
            "ig_ou".to_string(),
            base(0.03, SubordinatorSpec::IgOu { a: 1.0, b: 4.0 }),
        ),
    ]
}

struct Recorder<'a> {
    entry: &'a str,
    out: Vec<CheckResult>,
}

impl Recorder<'_> {
    fn push(&mut self, name: impl Into<String>, value: f64, target: f64, tolerance: f64) {
        let pass = (value - target).abs() <= tolerance;
        self.push_flag(name, value, target, tolerance, pass);
    }

    fn push_flag(&mut self, name: impl Into<String>, value: f64, target: f64, tolerance: f64, pass: bool) {
        self.out.push(CheckResult {
            entry: self.entry.to_string(),
            name: name.into(),
            value,
            target,
            tolerance,
            pass,
        });
    }
}

/// Closed-form feasibility, written as the three inequalities on `kappa`.
fn feasible_closed_form(p: &BnsParams<f64>) -> bool {
    let b_t = cal_b(p.lambda, p.maturity);
    let prem = p.beta + 0.5;
    let lower = ((2.0 * prem.max(0.0) + 1.0) * b_t).max(prem * prem * b_t);
    match p.subordinator {
        SubordinatorSpec::GammaOu { b, .. } => 2.0 * lower < b,
        SubordinatorSpec::IgOu { b, .. } => 4.0 * lower < b * b,
        SubordinatorSpec::NoJumps => true,
    }
}

fn hedge_in_range(e: &HedgeEstimate<f64>, kind: OptionKind) -> f64 {
    f64::from(u8::from(e.in_range(kind)))
}

pub fn run_selfcheck(entries: &[(String, BnsParams<f64>)], opts: &SelfcheckOptions) -> Result<Vec<CheckResult>> {
    let mut all = Vec::new();
    for (ix, (name, params)) in entries.iter().enumerate() {
        let streams = Streams::new(opts.seed).child(Purpose::Diagnostics, ix as u64, 0);
        all.extend(check_entry(name, params, opts, &streams)?);
    }
    Ok(all)
}

fn check_entry(
    entry: &str,
    params: &BnsParams<f64>,
    opts: &SelfcheckOptions,
    streams: &Streams,
) -> Result<Vec<CheckResult>> {
    let mut rec = Recorder { entry, out: Vec::new() };
    let n = opts.n_paths;
    let cert = validate_assumptions(params);
    let oracle = feasible_closed_form(params);
    rec.push_flag(
        "assumption_matches_closed_form",
        f64::from(u8::from(cert.feasible)),
        f64::from(u8::from(oracle)),
        0.0,
        cert.feasible == oracle,
    );

    if !matches!(params.subordinator, SubordinatorSpec::NoJumps) {
        let fam = streams.child(Purpose::Diagnostics, 1, 0);
        let jumps: Vec<f64> = par_collect(n, |i| {
            params
                .subordinator
                .sample_path(params.lambda, &mut fam.rng(i as u64))
                .terminal()
        });
        for u in [0.5, 1.0, 2.0] {
            let m: Moments<f64> = jumps.iter().map(|j| (-u * j).exp()).collect();
            let target = params.lambda * params.subordinator.laplace_exponent(u)?;
            rec.push(
                format!("log_laplace_u{u}"),
                m.mean().ln(),
                target,
                3.0 * m.stderr() / m.mean(),
            );
        }
    }

    let fam = streams.child(Purpose::Terminal, 2, 0);
    let mmm = par_moments(n, |i| {
        terminal_sample(params, MeasureKind::Mmm, &mut fam.rng(i as u64)).0
    });
    rec.push("mmm_price_martingale", mmm.mean(), params.s0, 3.0 * mmm.stderr());

    if !cert.feasible {
        return Ok(rec.out);
    }

    let grid = TimeGrid::uniform(params.maturity, opts.grid_steps)?;
    let density = density_report(
        params,
        &grid,
        n,
        &streams.child(Purpose::Density, 3, 0),
        DensityOptions {
            mpr_sign_bug: opts.inject_bug,
        },
    )?;
    rec.push("density_mean_one", density.e_z, 1.0, 3.0 * density.e_z_stderr);
    rec.push(
        "density_price_martingale",
        density.e_zs,
        params.s0,
        3.0 * density.e_zs_stderr,
    );
    rec.push(
        "density_agrees_with_mmm",
        density.e_zs,
        mmm.mean(),
        3.0 * (density.e_zs_stderr.powi(2) + mmm.stderr().powi(2)).sqrt(),
    );
    rec.push("density_square_doubling_ratio", density.z_sq_doubling_ratio, 1.0, 0.2);
    rec.push_flag("density_positive", density.min_z, 0.0, 0.0, density.min_z > 0.0);

    let bound = params.subordinator.exp_moment_bound().min(8.0);
    for (a, b) in [(1.0, 0.0), (0.5, 0.1 * bound), (-1.0, 0.2 * bound)] {
        if !y_martingale_condition(params, a, b)? {
            continue;
        }
        let y = y_report(params, a, b, &grid, n, &streams.child(Purpose::Path, 4, 0))?;
        rec.push(format!("y_martingale_a{a}_b{b}"), y.mean, 1.0, 3.0 * y.stderr);
    }

    let hedge_streams = streams.child(Purpose::Terminal, 5, 0);
    for ratio in [0.8, 1.0, 1.2] {
        let k = ratio * params.s0;
        let put = lrm_put_t0(params, k, n, &hedge_streams, Sampling::Direct)?;
        let call = lrm_call_t0(params, k, n, &hedge_streams, Sampling::Direct)?;
        rec.push(
            format!("put_in_range_k{k}"),
            hedge_in_range(&put, OptionKind::Put),
            1.0,
            0.0,
        );
        rec.push(
            format!("call_in_range_k{k}"),
            hedge_in_range(&call, OptionKind::Call),
            1.0,
            0.0,
        );
        rec.push_flag(
            format!("parity_exact_k{k}"),
            call.xi,
            1.0 + put.xi,
            0.0,
            call.xi == 1.0 + put.xi,
        );
        if matches!(params.subordinator, SubordinatorSpec::NoJumps) {
            let v = params.sigma0_sq * cal_b(params.lambda, params.maturity);
            rec.push(
                format!("bs_oracle_k{k}"),
                put.xi,
                bs_put_delta_oracle(params.s0, k, v),
                3.0 * put.stderr,
            );
        }
    }

    let betas = [-0.5, 0.0, 1.0];
    let estimates: Vec<Option<f64>> = betas
        .iter()
        .map(|&beta| {
            let p = BnsParams { beta, ..*params };
            lrm_put_t0(&p, params.s0, n, &hedge_streams, Sampling::Direct)
                .ok()
                .map(|e| e.xi)
        })
        .collect();
    if estimates.iter().all(Option::is_some) {
        let first = estimates[0].unwrap();
        let identical = estimates.iter().all(|e| e.unwrap().to_bits() == first.to_bits());
        rec.push_flag("beta_invariance_bitwise", first, first, 0.0, identical);
    }
    Ok(rec.out)
}
