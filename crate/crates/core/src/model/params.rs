use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::scalar::Scalar;
use crate::subordinator::SubordinatorSpec;

/// Smallest accepted initial variance.
pub const MIN_SIGMA0_SQ: f64 = 1e-12;

/// BNS model with zero leverage:
///
/// ```text
/// d sigma_t^2 = -lambda sigma_t^2 dt + dH_{lambda t}
/// S_t = S_0 exp( mu t + beta int_0^t sigma_s^2 ds + int_0^t sigma_s dW_s )
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnsParams<S> {
    pub s0: S,
    pub mu: S,
    pub beta: S,
    pub lambda: S,
    pub sigma0_sq: S,
    pub maturity: S,
    pub subordinator: SubordinatorSpec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Physical,
    #[serde(rename = "mmm")]
    Mmm,
}

impl<S: Scalar> BnsParams<S> {
    pub fn new(
        s0: S,
        mu: S,
        beta: S,
        lambda: S,
        sigma0_sq: S,
        maturity: S,
        subordinator: SubordinatorSpec<S>,
    ) -> Result<Self> {
        let p = BnsParams {
            s0,
            mu,
            beta,
            lambda,
            sigma0_sq,
            maturity,
            subordinator,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: S| {
            if v > S::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(EngineError::invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        positive("s0", self.s0)?;
        positive("lambda", self.lambda)?;
        positive("maturity", self.maturity)?;
        if !(self.sigma0_sq >= S::lit(MIN_SIGMA0_SQ) && self.sigma0_sq.is_finite()) {
            return Err(EngineError::invalid(
                "sigma0_sq",
                format!("must be at least {MIN_SIGMA0_SQ}, got {}", self.sigma0_sq),
            ));
        }
        if !self.mu.is_finite() {
            return Err(EngineError::invalid("mu", "must be finite"));
        }
        if !self.beta.is_finite() {
            return Err(EngineError::invalid("beta", "must be finite"));
        }
        self.subordinator.validate()
    }

    /// `beta + 1/2`, the coefficient of `sigma^2` in the drift of `dS / S`.
    pub fn premium(&self) -> S {
        self.beta + S::lit(0.5)
    }

    /// Same model restarted at `(s, sigma_sq)` with `remaining` time to maturity.
    pub fn restarted(&self, s: S, sigma_sq: S, remaining: S) -> Result<Self> {
        let p = BnsParams {
            s0: s,
            sigma0_sq: sigma_sq,
            maturity: remaining,
            ..*self
        };
        p.validate()?;
        Ok(p)
    }
}

/// Increasing simulation times `0 = t_0 < ... < t_m = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid<S>(Vec<S>);

impl<S: Scalar> TimeGrid<S> {
    pub fn uniform(maturity: S, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(EngineError::invalid("grid_steps", "must be at least 1"));
        }
        let m = S::from_count(steps);
        let mut pts: Vec<S> = (0..steps).map(|k| maturity * S::from_count(k) / m).collect();
        pts.push(maturity);
        Self::new(pts)
    }

    pub fn new(points: Vec<S>) -> Result<Self> {
        if points.len() < 2 || points[0] != S::zero() {
            return Err(EngineError::invalid(
                "grid",
                "must start at 0 and contain at least two points",
            ));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(EngineError::invalid("grid", "must be strictly increasing"));
        }
        Ok(TimeGrid(points))
    }

    pub fn points(&self) -> &[S] {
        &self.0
    }

    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn end(&self) -> S {
        *self.0.last().expect("nonempty grid")
    }

    /// Insert the midpoint of every step.
    pub fn refined(&self) -> Self {
        let mut pts = Vec::with_capacity(2 * self.0.len());
        for w in self.0.windows(2) {
            pts.push(w[0]);
            pts.push((w[0] + w[1]) * S::lit(0.5));
        }
        pts.push(self.end());
        TimeGrid(pts)
    }
}
