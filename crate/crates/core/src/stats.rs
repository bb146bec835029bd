//! Deterministic Monte Carlo reductions and small statistical tests.

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Paths per sequential chunk in parallel reductions. Chunk boundaries are a
/// function of the index only, so results do not depend on the thread count.
pub const CHUNK: usize = 2048;

/// Running mean and variance (Welford, mergeable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<S> {
    n: usize,
    mean: S,
    m2: S,
    max: S,
}

impl<S: Scalar> Default for Moments<S> {
    fn default() -> Self {
        Moments {
            n: 0,
            mean: S::zero(),
            m2: S::zero(),
            max: S::neg_infinity(),
        }
    }
}

impl<S: Scalar> Moments<S> {
    pub fn push(&mut self, x: S) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean = self.mean + delta / S::from_count(self.n);
        self.m2 = self.m2 + delta * (x - self.mean);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let (na, nb, nn) = (S::from_count(self.n), S::from_count(other.n), S::from_count(n));
        let delta = other.mean - self.mean;
        self.mean = self.mean + delta * nb / nn;
        self.m2 = self.m2 + other.m2 + delta * delta * na * nb / nn;
        self.n = n;
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> S {
        self.mean
    }

    pub fn max(&self) -> S {
        self.max
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> S {
        if self.n < 2 {
            S::zero()
        } else {
            (self.m2 / S::from_count(self.n - 1)).max(S::zero())
        }
    }

    pub fn std_dev(&self) -> S {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> S {
        if self.n == 0 {
            S::zero()
        } else {
            (self.variance() / S::from_count(self.n)).sqrt()
        }
    }
}

impl<S: Scalar> FromIterator<S> for Moments<S> {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Mean/variance of `f(i)` for `i in 0..n`, reduced in fixed index order.
pub fn par_moments<S, F>(n: usize, f: F) -> Moments<S>
where
    S: Scalar,
    F: Fn(usize) -> S + Sync,
{
    let chunks: Vec<Moments<S>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).collect())
        .collect();
    let mut total = Moments::default();
    for c in &chunks {
        total.merge(c);
    }
    total
}

/// [`par_moments`] for two statistics of the same draw.
pub fn par_moments_pair<S, F>(n: usize, f: F) -> (Moments<S>, Moments<S>)
where
    S: Scalar,
    F: Fn(usize) -> (S, S) + Sync,
{
    let chunks: Vec<(Moments<S>, Moments<S>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = (Moments::default(), Moments::default());
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let (a, b) = f(i);
                acc.0.push(a);
                acc.1.push(b);
            }
            acc
        })
        .collect();
    let mut total = (Moments::default(), Moments::default());
    for c in &chunks {
        total.0.merge(&c.0);
        total.1.merge(&c.1);
    }
    total
}

/// Order-preserving parallel map over `0..n`.
pub fn par_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Two-sided z-test: true when `|estimate - target| <= k * stderr`.
pub fn within_stderr<S: Scalar>(estimate: S, target: S, stderr: S, k: S) -> bool {
    (estimate - target).abs() <= k * stderr
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

/// Ratio of the Monte Carlo mean of `values` over all samples to the mean
/// over the first half. Values near 1 indicate a stable (finite) moment.
pub fn doubling_ratio(values: &[f64]) -> f64 {
    let half = values.len() / 2;
    let m_half: f64 = values[..half].iter().sum::<f64>() / half as f64;
    let m_full: f64 = values.iter().sum::<f64>() / values.len() as f64;
    m_full / m_half
}

/// Largest single contribution over the sum (heavy-tail diagnostic).
pub fn max_to_sum(values: &[f64]) -> f64 {
    let sum: f64 = values.iter().sum();
    let max = values.iter().cloned().fold(0.0, f64::max);
    if sum > 0.0 {
        max / sum
    } else {
        0.0
    }
}
