//! Put hedge ratio by Monte Carlo under the minimal martingale measure.
//!
//! The LRM hedge of `(K - S_T)^+` is
//!
//! ```text
//! xi_t = -(1 / S_{t-}) E~[ 1{S_T < K} S_T | F_{t-} ]
//! ```
//!
//! and the call hedge follows by parity, `xi_call = 1 + xi_put`. Under the
//! MMM the pair `(S, sigma^2)` is Markov and free of `beta`, so a conditional
//! expectation at `t` is a fresh terminal problem restarted from
//! `(S_t, sigma^2_{t-})` over `[t, T]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::model::{sample_model_jumps, terminal_sample, total_integrated_variance, validate_assumptions};
use crate::model::{BnsParams, MeasureKind};
use crate::rng::{Purpose, Streams};
use crate::scalar::Scalar;
use crate::stats::{par_moments, par_moments_pair, Moments};

/// Terminal draws required by [`lrm_put_t0`].
pub const MIN_TERMINAL_DRAWS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Put,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec<S> {
    pub kind: OptionKind,
    pub strike: S,
}

impl<S: Scalar> OptionSpec<S> {
    pub fn new(kind: OptionKind, strike: S) -> Result<Self> {
        let o = OptionSpec { kind, strike };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strike > S::zero() && self.strike.is_finite() {
            Ok(())
        } else {
            Err(EngineError::invalid(
                "strike",
                format!("must be positive and finite, got {}", self.strike),
            ))
        }
    }

    pub fn payoff(&self, s: S) -> S {
        match self.kind {
            OptionKind::Put => (self.strike - s).max(S::zero()),
            OptionKind::Call => (s - self.strike).max(S::zero()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Terminal,
    Nested,
    Regression,
    Parity,
}

impl EstimateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMethod::Terminal => "terminal",
            EstimateMethod::Nested => "nested",
            EstimateMethod::Regression => "regression",
            EstimateMethod::Parity => "parity",
        }
    }
}

/// How the payoff is averaged over the inner law.
///
/// `Direct` draws one Gaussian per jump path. `RaoBlackwell` integrates the
/// Gaussian out: given the jumps, `log S_T` is normal with variance
/// `v = int_t^T sigma^2`, so `E[1{S_T<K} S_T | jumps] = S_t Phi((ln(K/S_t) - v/2) / sqrt v)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Direct,
    RaoBlackwell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgeEstimate<S> {
    pub xi: S,
    pub stderr: S,
    pub method: EstimateMethod,
    pub n_outer: usize,
    pub n_inner: usize,
    pub t: S,
}

impl<S: Scalar> HedgeEstimate<S> {
    /// `xi` within three standard errors of the admissible range for `kind`.
    pub fn in_range(&self, kind: OptionKind) -> bool {
        let slack = S::lit(3.0) * self.stderr;
        let (lo, hi) = match kind {
            OptionKind::Put => (-S::one(), S::zero()),
            OptionKind::Call => (S::zero(), S::one()),
        };
        self.xi >= lo - slack && self.xi <= hi + slack
    }
}

/// `-Phi(-d1)` with `d1 = (ln(S0/K) + v/2) / sqrt v`: the exact put hedge
/// when the variance path is deterministic with total variance `v`.
pub fn bs_put_delta_oracle<S: Scalar>(s0: S, strike: S, total_var: S) -> S {
    let sd = total_var.sqrt();
    let d1 = ((s0 / strike).ln() + total_var * S::lit(0.5)) / sd;
    -(-d1).norm_cdf()
}

/// Zero-rate Black-Scholes put with total variance `v`.
pub fn bs_put_value<S: Scalar>(s: S, strike: S, total_var: S) -> S {
    let sd = total_var.sqrt();
    let d1 = ((s / strike).ln() + total_var * S::lit(0.5)) / sd;
    let d2 = d1 - sd;
    (strike * (-d2).norm_cdf() - s * (-d1).norm_cdf()).max(S::zero())
}

/// `E[1{S_T<K} S_T | jumps] / S_0` given remaining variance `v`.
#[inline]
pub(crate) fn put_ratio_given_variance<S: Scalar>(s: S, strike: S, v: S) -> S {
    (((strike / s).ln() - v * S::lit(0.5)) / v.sqrt()).norm_cdf()
}

/// One draw of `(1{S_T<K} S_T / S_0, (K - S_T)^+)` for a model started at `params`.
pub(crate) fn put_draw<S: Scalar, R: Rng + ?Sized>(
    params: &BnsParams<S>,
    strike: S,
    sampling: Sampling,
    rng: &mut R,
) -> (S, S) {
    match sampling {
        Sampling::Direct => {
            let (st, _) = terminal_sample(params, MeasureKind::Mmm, rng);
            let hit = if st < strike { st / params.s0 } else { S::zero() };
            (hit, (strike - st).max(S::zero()))
        }
        Sampling::RaoBlackwell => {
            let jumps = sample_model_jumps(params, rng);
            let v = total_integrated_variance(params, &jumps);
            (
                put_ratio_given_variance(params.s0, strike, v),
                bs_put_value(params.s0, strike, v),
            )
        }
    }
}

/// Ratio and value moments over draws from substreams `0..n` of `family`.
pub(crate) fn put_moments<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    n: usize,
    family: &Streams,
    sampling: Sampling,
) -> (Moments<S>, Moments<S>) {
    par_moments_pair(n, |i| put_draw(params, strike, sampling, &mut family.rng(i as u64)))
}

fn check_strike<S: Scalar>(strike: S) -> Result<()> {
    if strike > S::zero() && strike.is_finite() {
        Ok(())
    } else {
        Err(EngineError::invalid(
            "strike",
            format!("must be positive and finite, got {strike}"),
        ))
    }
}

pub(crate) fn require_feasible<S: Scalar>(params: &BnsParams<S>) -> Result<()> {
    if validate_assumptions(params).feasible {
        Ok(())
    } else {
        Err(EngineError::Infeasible(
            "standing assumption has no admissible kappa".into(),
        ))
    }
}

/// `xi_0` of the put from `n` terminal draws under the MMM.
pub fn lrm_put_t0<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    n: usize,
    streams: &Streams,
    sampling: Sampling,
) -> Result<HedgeEstimate<S>> {
    params.validate()?;
    check_strike(strike)?;
    require_feasible(params)?;
    if n < MIN_TERMINAL_DRAWS {
        return Err(EngineError::invalid(
            "n_paths",
            format!("terminal estimator needs at least {MIN_TERMINAL_DRAWS} draws, got {n}"),
        ));
    }
    let fam = streams.child(Purpose::Terminal, 0, 0);
    let m = par_moments(n, |i| put_draw(params, strike, sampling, &mut fam.rng(i as u64)).0);
    Ok(HedgeEstimate {
        xi: -m.mean(),
        stderr: m.stderr(),
        method: EstimateMethod::Terminal,
        n_outer: n,
        n_inner: 0,
        t: S::zero(),
    })
}

/// `xi_t` of the put at state `(S_t, sigma^2_{t-})` by restarting the MMM
/// dynamics over `[t, T]` with `n_inner` draws.
pub fn lrm_put_nested<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    t: S,
    state: (S, S),
    n_inner: usize,
    streams: &Streams,
    sampling: Sampling,
) -> Result<HedgeEstimate<S>> {
    let restarted = restart(params, t, state)?;
    check_strike(strike)?;
    if n_inner < 2 {
        return Err(EngineError::invalid("n_inner", "must be at least 2"));
    }
    let fam = streams.child(Purpose::Inner, 0, 0);
    let m = par_moments(n_inner, |i| {
        put_draw(&restarted, strike, sampling, &mut fam.rng(i as u64)).0
    });
    Ok(HedgeEstimate {
        xi: -m.mean(),
        stderr: m.stderr(),
        method: EstimateMethod::Nested,
        n_outer: 1,
        n_inner,
        t,
    })
}

pub(crate) fn restart<S: Scalar>(params: &BnsParams<S>, t: S, state: (S, S)) -> Result<BnsParams<S>> {
    if !(t >= S::zero()) || t >= params.maturity {
        return Err(EngineError::domain(
            "evaluation time must lie in [0, T)",
            t.to_f64_lossy(),
        ));
    }
    let (s, sigma_sq) = state;
    if !(s > S::zero()) || !(sigma_sq > S::zero()) {
        return Err(EngineError::domain(
            "state components must be positive",
            s.min(sigma_sq).to_f64_lossy(),
        ));
    }
    params.restarted(s, sigma_sq, params.maturity - t)
}

/// Call hedge from a put hedge: `1 + xi_put`, same standard error.
pub fn parity_call<S: Scalar>(put: &HedgeEstimate<S>) -> HedgeEstimate<S> {
    HedgeEstimate {
        xi: S::one() + put.xi,
        method: EstimateMethod::Parity,
        ..*put
    }
}

/// `xi_0` of the call, by parity with [`lrm_put_t0`].
pub fn lrm_call_t0<S: Scalar>(
    params: &BnsParams<S>,
    strike: S,
    n: usize,
    streams: &Streams,
    sampling: Sampling,
) -> Result<HedgeEstimate<S>> {
    lrm_put_t0(params, strike, n, streams, sampling).map(|p| parity_call(&p))
}
