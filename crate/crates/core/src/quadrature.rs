//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{EngineError, Result};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-8,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<S> {
    pub value: S,
    pub abs_err: S,
}

#[derive(Clone, Copy)]
struct Piece<S> {
    a: S,
    b: S,
    value: S,
    err: S,
}

fn kronrod<S: Scalar, F: Fn(S) -> S>(f: &F, a: S, b: S) -> (S, S) {
    let half = S::lit(0.5);
    let center = (a + b) * half;
    let radius = (b - a) * half;
    let fc = f(center);
    let mut kron = fc * S::lit(WGK[7]);
    let mut gauss = fc * S::lit(WG[3]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = radius * S::lit(x);
        let pair = f(center - dx) + f(center + dx);
        kron = kron + pair * S::lit(w);
        if j % 2 == 1 {
            gauss = gauss + pair * S::lit(WG[j / 2]);
        }
    }
    (kron * radius, ((kron - gauss) * radius).abs())
}

fn target<S: Scalar>(tol: &Tolerance, value: S) -> S {
    let floor = S::lit(50.0) * S::epsilon() * value.abs();
    S::lit(tol.abs).max(S::lit(tol.rel) * value.abs()).max(floor)
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<S: Scalar, F: Fn(S) -> S>(f: F, a: S, b: S, tol: &Tolerance) -> Result<Estimate<S>> {
    const INITIAL: usize = 8;
    let width = (b - a) / S::from_count(INITIAL);
    let mut pieces: Vec<Piece<S>> = (0..INITIAL)
        .map(|i| {
            let lo = a + width * S::from_count(i);
            let hi = if i + 1 == INITIAL { b } else { lo + width };
            let (value, err) = kronrod(&f, lo, hi);
            Piece {
                a: lo,
                b: hi,
                value,
                err,
            }
        })
        .collect();
    loop {
        let total: S = pieces.iter().map(|p| p.value).sum();
        let total_err: S = pieces.iter().map(|p| p.err).sum();
        if !total.is_finite() || !total_err.is_finite() {
            return Err(EngineError::Quadrature {
                estimate: total.to_f64_lossy(),
                residual: total_err.to_f64_lossy(),
            });
        }
        if total_err <= target(tol, total) {
            return Ok(Estimate {
                value: total,
                abs_err: total_err,
            });
        }
        if pieces.len() >= tol.max_intervals {
            return Err(EngineError::Quadrature {
                estimate: total.to_f64_lossy(),
                residual: total_err.to_f64_lossy(),
            });
        }
        let (worst, _) =
            pieces.iter().enumerate().fold(
                (0, S::neg_infinity()),
                |acc, (i, p)| if p.err > acc.1 { (i, p.err) } else { acc },
            );
        let p = pieces.swap_remove(worst);
        let mid = (p.a + p.b) * S::lit(0.5);
        if mid <= p.a || mid >= p.b {
            // interval cannot be split further at this precision
            return Err(EngineError::Quadrature {
                estimate: total.to_f64_lossy(),
                residual: total_err.to_f64_lossy(),
            });
        }
        let (lv, le) = kronrod(&f, p.a, mid);
        let (rv, re) = kronrod(&f, mid, p.b);
        pieces.push(Piece {
            a: p.a,
            b: mid,
            value: lv,
            err: le,
        });
        pieces.push(Piece {
            a: mid,
            b: p.b,
            value: rv,
            err: re,
        });
    }
}

/// Integrate `f` over `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<S: Scalar, F: Fn(S) -> S>(f: F, a: S, tol: &Tolerance) -> Result<Estimate<S>> {
    integrate_to_infinity_scaled(f, a, S::one(), tol)
}

/// As [`integrate_to_infinity`] with `x = a + scale * t / (1 - t)`; `scale`
/// should be of the order of the tail's decay length.
pub fn integrate_to_infinity_scaled<S: Scalar, F: Fn(S) -> S>(
    f: F,
    a: S,
    scale: S,
    tol: &Tolerance,
) -> Result<Estimate<S>> {
    let one = S::one();
    let mapped = |t: S| {
        if t >= one {
            return S::zero();
        }
        let s = one - t;
        let y = f(a + scale * t / s) * scale / (s * s);
        if y.is_finite() {
            y
        } else {
            S::zero()
        }
    };
    integrate(mapped, S::zero(), one, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x: f64| x * x * x - 2.0 * x, 0.0, 2.0, &Tolerance::default()).unwrap();
        assert!((r.value - 0.0).abs() < 1e-13);
    }

    #[test]
    fn exponential_tail() {
        let r = integrate_to_infinity(|x: f64| (-3.0 * x).exp(), 1.0, &Tolerance::default()).unwrap();
        assert!((r.value - (-3.0f64).exp() / 3.0).abs() < 1e-11);
    }

    #[test]
    fn slow_tail_near_moment_boundary() {
        // integral of exp(-0.01 x) over [1, inf)
        let r = integrate_to_infinity(|x: f64| (-0.01 * x).exp(), 1.0, &Tolerance::default()).unwrap();
        let exact = 100.0 * (-0.01f64).exp();
        assert!((r.value - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn nonintegrable_reports_residual() {
        let tol = Tolerance {
            max_intervals: 50,
            ..Tolerance::default()
        };
        let err = integrate_to_infinity(|x: f64| 1.0 / x, 1.0, &tol).unwrap_err();
        assert!(matches!(err, EngineError::Quadrature { .. }));
    }
}
