//! Background driving Lévy process of the variance.
//!
//! Two subordinator families are supported, named after the stationary
//! law they induce on the OU variance, plus the jump-free degenerate case:
//!
//! * Gamma-OU: `nu(dx) = a b exp(-b x) dx`, compound Poisson.
//! * IG-OU: `nu(dx) = a / (2 sqrt(2 pi)) x^{-3/2} (1 + b^2 x) exp(-b^2 x / 2) dx`,
//!   infinite activity. It splits into an inverse-Gaussian subordinator with
//!   Lévy density `(a/2)/sqrt(2 pi) x^{-3/2} exp(-b^2 x/2)` and a compound
//!   Poisson part with rate `a b / 2` and jumps distributed as `v^2 / b^2`,
//!   `v ~ N(0, 1)`.
//!
//! Time here is the subordinator's own clock. The model layer applies the
//! `lambda` time change by sampling over `lambda * T` and rescaling.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::quadrature::{self, Tolerance};
use crate::scalar::Scalar;

/// Number of sub-intervals used for the infinite-activity IG-OU part.
pub const DEFAULT_IG_SUBSTEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubordinatorSpec<S> {
    GammaOu { a: S, b: S },
    IgOu { a: S, b: S },
    NoJumps,
}

/// Result of an exponential-moment query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpMoment<S> {
    pub finite: bool,
    /// `int (e^{kappa x} - 1) nu(dx)`, or `+inf` when not finite.
    pub value: S,
}

impl<S: Scalar> SubordinatorSpec<S> {
    pub fn gamma_ou(a: S, b: S) -> Result<Self> {
        let spec = SubordinatorSpec::GammaOu { a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ig_ou(a: S, b: S) -> Result<Self> {
        let spec = SubordinatorSpec::IgOu { a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SubordinatorSpec::GammaOu { a, b } | SubordinatorSpec::IgOu { a, b } => {
                if !(a > S::zero() && a.is_finite()) {
                    return Err(EngineError::invalid("a", format!("must be positive, got {a}")));
                }
                if !(b > S::zero() && b.is_finite()) {
                    return Err(EngineError::invalid("b", format!("must be positive, got {b}")));
                }
                Ok(())
            }
            SubordinatorSpec::NoJumps => Ok(()),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            SubordinatorSpec::GammaOu { .. } => "gamma_ou",
            SubordinatorSpec::IgOu { .. } => "ig_ou",
            SubordinatorSpec::NoJumps => "no_jumps",
        }
    }

    /// Density of the Lévy measure at `x > 0`.
    pub fn levy_density(&self, x: S) -> Result<S> {
        if !(x > S::zero()) {
            return Err(EngineError::domain(
                "Lévy density argument must be positive",
                x.to_f64_lossy(),
            ));
        }
        match *self {
            SubordinatorSpec::GammaOu { a, b } => Ok(a * b * (-b * x).exp()),
            SubordinatorSpec::IgOu { a, b } => Ok(ig_density(a, b, x)),
            SubordinatorSpec::NoJumps => Err(EngineError::UnsupportedFamily { family: "no_jumps" }),
        }
    }

    /// `int_0^inf g(x) nu(dx)` by quadrature.
    pub fn levy_integral<G: Fn(S) -> S>(&self, g: G) -> Result<S> {
        self.measure_integral(|x| g(x) * self.levy_density(x).unwrap_or(S::zero()), S::zero())
    }

    /// `int_0^inf h(x) dx` for an integrand `h` that already contains the
    /// Lévy density, split at `x = 1`. `growth` is the exponential rate the
    /// integrand adds on top of the density tail and sets the scale of the
    /// map used on `[1, inf)`.
    ///
    /// The lower piece is integrated in `s = sqrt(x)` to absorb the `x^{-3/2}`
    /// singularity of the IG-OU density.
    fn measure_integral<H: Fn(S) -> S>(&self, h: H, growth: S) -> Result<S> {
        if let SubordinatorSpec::NoJumps = self {
            return Ok(S::zero());
        }
        let tol = Tolerance::default();
        let two = S::lit(2.0);
        let lower = quadrature::integrate(
            |s: S| {
                let x = s * s;
                if x <= S::zero() {
                    S::zero()
                } else {
                    h(x) * two * s
                }
            },
            S::zero(),
            S::one(),
            &tol,
        )?;
        let decay = (self.exp_moment_bound() - growth).max(S::min_positive_value());
        let scale = S::one().max(S::one() / decay);
        let upper = quadrature::integrate_to_infinity_scaled(h, S::one(), scale, &tol)?;
        Ok(lower.value + upper.value)
    }

    /// Laplace exponent `phi(u) = int (e^{-u x} - 1) nu(dx)`, so that
    /// `E[exp(-u H_t)] = exp(t phi(u))`.
    pub fn laplace_exponent(&self, u: S) -> Result<S> {
        if !(u >= S::zero()) {
            return Err(EngineError::domain(
                "Laplace argument must be nonnegative",
                u.to_f64_lossy(),
            ));
        }
        if u == S::zero() {
            return Ok(S::zero());
        }
        match *self {
            SubordinatorSpec::GammaOu { a, b } => Ok(-a * u / (b + u)),
            SubordinatorSpec::IgOu { .. } => self.levy_integral(|x| (-u * x).exp_m1()),
            SubordinatorSpec::NoJumps => Ok(S::zero()),
        }
    }

    /// Supremum of `kappa` with `int_1^inf e^{kappa x} nu(dx) < inf`
    /// (the bound itself excluded). `+inf` for `NoJumps`.
    pub fn exp_moment_bound(&self) -> S {
        match *self {
            SubordinatorSpec::GammaOu { b, .. } => b,
            SubordinatorSpec::IgOu { b, .. } => b * b / S::lit(2.0),
            SubordinatorSpec::NoJumps => S::infinity(),
        }
    }

    /// `int (e^{kappa x} - 1) nu(dx)` together with its finiteness.
    pub fn exp_moment(&self, kappa: S) -> Result<ExpMoment<S>> {
        if !(kappa > S::zero()) {
            return Err(EngineError::domain(
                "exponential moment order must be positive",
                kappa.to_f64_lossy(),
            ));
        }
        if kappa >= self.exp_moment_bound() {
            return Ok(ExpMoment {
                finite: false,
                value: S::infinity(),
            });
        }
        let value = match *self {
            SubordinatorSpec::GammaOu { a, b } => a * kappa / (b - kappa),
            SubordinatorSpec::IgOu { a, b } => {
                // e^{kappa x} nu(x) is formed with a single exponent so that the
                // far tail neither overflows nor underflows
                let integrand = |x: S| {
                    if x < S::one() {
                        (kappa * x).exp_m1() * ig_density(a, b, x)
                    } else {
                        ig_tilted_density(a, b, kappa, x) - ig_density(a, b, x)
                    }
                };
                self.measure_integral(integrand, kappa)?
            }
            SubordinatorSpec::NoJumps => S::zero(),
        };
        Ok(ExpMoment { finite: true, value })
    }

    /// `E[H_1] = int x nu(dx)`; equals `a / b` for both families.
    pub fn mean_rate(&self) -> S {
        match *self {
            SubordinatorSpec::GammaOu { a, b } | SubordinatorSpec::IgOu { a, b } => a / b,
            SubordinatorSpec::NoJumps => S::zero(),
        }
    }

    /// Sample the jumps of `H` on `(0, horizon]`.
    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: S, rng: &mut R) -> JumpPath<S> {
        self.sample_path_with(horizon, DEFAULT_IG_SUBSTEPS, rng)
    }

    /// As [`sample_path`](Self::sample_path) with an explicit IG-OU subgrid size.
    pub fn sample_path_with<R: Rng + ?Sized>(&self, horizon: S, substeps: usize, rng: &mut R) -> JumpPath<S> {
        assert!(horizon > S::zero(), "horizon must be positive");
        let mut jumps: Vec<(S, S)> = Vec::new();
        match *self {
            SubordinatorSpec::GammaOu { a, b } => {
                let n = poisson_count((a * horizon).to_f64_lossy(), rng);
                for _ in 0..n {
                    let t = horizon * S::open01(rng);
                    let x = -S::open01(rng).ln() / b;
                    jumps.push((t, x));
                }
            }
            SubordinatorSpec::IgOu { a, b } => {
                let half = S::lit(0.5);
                let n = poisson_count((a * b * half * horizon).to_f64_lossy(), rng);
                for _ in 0..n {
                    let t = horizon * S::open01(rng);
                    let v = S::standard_normal(rng);
                    let x = v * v / (b * b);
                    if x > S::zero() {
                        jumps.push((t, x));
                    }
                }
                let substeps = substeps.max(1);
                let h = horizon / S::from_count(substeps);
                let delta = a * half * h;
                let mean = delta / b;
                let shape = delta * delta;
                for k in 1..=substeps {
                    let x = sample_inverse_gaussian(mean, shape, rng);
                    if x > S::zero() {
                        let t = if k == substeps { horizon } else { h * S::from_count(k) };
                        jumps.push((t, x));
                    }
                }
            }
            SubordinatorSpec::NoJumps => {}
        }
        JumpPath::from_unsorted(horizon, jumps)
    }
}

fn ig_density<S: Scalar>(a: S, b: S, x: S) -> S {
    ig_tilted_density(a, b, S::zero(), x)
}

/// `e^{kappa x}` times the IG-OU Lévy density.
fn ig_tilted_density<S: Scalar>(a: S, b: S, kappa: S, x: S) -> S {
    let two = S::lit(2.0);
    let norm = a / (two * (two * S::PI()).sqrt());
    norm * x.powf(S::lit(-1.5)) * (S::one() + b * b * x) * ((kappa - b * b / two) * x).exp()
}

fn poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("finite positive Poisson rate");
    let n: f64 = dist.sample(rng);
    n as u64
}

/// Inverse-Gaussian draw (Michael, Schucany and Haas) with the smaller root
/// written in a cancellation-free form, which matters for the tiny shapes
/// produced by fine subgrids.
pub fn sample_inverse_gaussian<S: Scalar, R: Rng + ?Sized>(mean: S, shape: S, rng: &mut R) -> S {
    let n = S::standard_normal(rng);
    let r = mean * n * n / (S::lit(2.0) * shape);
    let x = mean / (S::one() + r + (r * (r + S::lit(2.0))).sqrt());
    let u = S::open01(rng);
    if u <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

/// Realized jumps of a subordinator on `(0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpPath<S> {
    horizon: S,
    times: Vec<S>,
    sizes: Vec<S>,
}

impl<S: Scalar> JumpPath<S> {
    pub fn empty(horizon: S) -> Self {
        JumpPath {
            horizon,
            times: Vec::new(),
            sizes: Vec::new(),
        }
    }

    /// Build from jumps in any order; coincident times are merged.
    pub fn from_unsorted(horizon: S, mut jumps: Vec<(S, S)>) -> Self {
        jumps.sort_by(|l, r| l.0.partial_cmp(&r.0).expect("finite jump time"));
        let mut times: Vec<S> = Vec::with_capacity(jumps.len());
        let mut sizes: Vec<S> = Vec::with_capacity(jumps.len());
        for (t, x) in jumps {
            match times.last() {
                Some(&last) if last == t => {
                    let s = sizes.last_mut().expect("parallel vectors");
                    *s = *s + x;
                }
                _ => {
                    times.push(t);
                    sizes.push(x);
                }
            }
        }
        JumpPath { horizon, times, sizes }
    }

    /// Checked constructor for already-sorted data.
    pub fn new(horizon: S, times: Vec<S>, sizes: Vec<S>) -> Result<Self> {
        if times.len() != sizes.len() {
            return Err(EngineError::invalid("sizes", "length differs from times"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(EngineError::invalid("times", "must be strictly increasing"));
        }
        if times.iter().any(|&t| !(t > S::zero() && t <= horizon)) {
            return Err(EngineError::invalid("times", "must lie in (0, horizon]"));
        }
        if sizes.iter().any(|&x| !(x > S::zero() && x.is_finite())) {
            return Err(EngineError::invalid("sizes", "must be positive and finite"));
        }
        Ok(JumpPath { horizon, times, sizes })
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn sizes(&self) -> &[S] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Terminal value: the sum of all jump sizes.
    pub fn terminal(&self) -> S {
        self.sizes.iter().copied().sum()
    }

    /// Same jumps on a clock running `1 / speed` times as fast: every time
    /// (and the horizon) is divided by `speed`.
    pub fn slowed_by(&self, speed: S) -> Self {
        let jumps = self
            .times
            .iter()
            .zip(&self.sizes)
            .map(|(&t, &x)| (t / speed, x))
            .collect();
        Self::from_unsorted(self.horizon / speed, jumps)
    }

    /// Index range of jumps with time in `(lo, hi]`.
    pub fn range_in(&self, lo: S, hi: S) -> std::ops::Range<usize> {
        let start = self.times.partition_point(|&t| t <= lo);
        let end = self.times.partition_point(|&t| t <= hi);
        start..end.max(start)
    }

    /// Jumps in `(lo, hi]` as `(offset from lo, size)` pairs.
    pub fn step_jumps(&self, lo: S, hi: S) -> Vec<(S, S)> {
        self.range_in(lo, hi)
            .map(|i| ((self.times[i] - lo).max(S::min_positive_value()), self.sizes[i]))
            .collect()
    }
}
