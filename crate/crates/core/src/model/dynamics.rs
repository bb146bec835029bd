//! Closed-form OU kernels between grid points.
//!
//! A step starts at variance `sigma_sq_s`, lasts `delta`, and carries jumps
//! given as `(offset, size)` with offsets strictly increasing in `(0, delta]`.

use crate::error::{EngineError, Result};
use crate::scalar::Scalar;

/// `B(t) = int_0^t e^{-lambda s} ds = (1 - e^{-lambda t}) / lambda`.
pub fn cal_b<S: Scalar>(lambda: S, t: S) -> S {
    let x = lambda * t;
    if x < S::lit(1e-8) {
        t * (S::one() - x * S::lit(0.5))
    } else {
        -(-x).exp_m1() / lambda
    }
}

pub(crate) fn check_step_jumps<S: Scalar>(delta: S, jumps: &[(S, S)]) -> Result<()> {
    let mut prev = S::zero();
    for (i, &(u, x)) in jumps.iter().enumerate() {
        let ordered = if i == 0 { u > S::zero() } else { u > prev };
        if !ordered || u > delta {
            return Err(EngineError::domain(
                "jump offset outside (0, delta] or not increasing",
                u.to_f64_lossy(),
            ));
        }
        if !(x > S::zero()) {
            return Err(EngineError::domain("jump size must be positive", x.to_f64_lossy()));
        }
        prev = u;
    }
    Ok(())
}

/// Exact OU solution `e^{-lambda delta} sigma_sq_s + sum_i e^{-lambda (delta - u_i)} x_i`.
pub fn ou_step<S: Scalar>(sigma_sq_s: S, lambda: S, delta: S, jumps: &[(S, S)]) -> Result<S> {
    check_step_jumps(delta, jumps)?;
    Ok(ou_step_unchecked(sigma_sq_s, lambda, delta, jumps))
}

#[inline]
pub(crate) fn ou_step_unchecked<S: Scalar>(sigma_sq_s: S, lambda: S, delta: S, jumps: &[(S, S)]) -> S {
    let mut v = (-lambda * delta).exp() * sigma_sq_s;
    for &(u, x) in jumps {
        v = v + (-lambda * (delta - u)).exp() * x;
    }
    v
}

/// Exact `int_s^{s+delta} sigma_u^2 du = sigma_sq_s B(delta) + sum_i x_i B(delta - u_i)`.
pub fn integrated_variance_step<S: Scalar>(sigma_sq_s: S, lambda: S, delta: S, jumps: &[(S, S)]) -> Result<S> {
    check_step_jumps(delta, jumps)?;
    Ok(integrated_variance_unchecked(sigma_sq_s, lambda, delta, jumps))
}

#[inline]
pub(crate) fn integrated_variance_unchecked<S: Scalar>(sigma_sq_s: S, lambda: S, delta: S, jumps: &[(S, S)]) -> S {
    let mut v = sigma_sq_s * cal_b(lambda, delta);
    for &(u, x) in jumps {
        v = v + x * cal_b(lambda, delta - u);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn cal_b_examples() {
        assert_eq!(cal_b(1.0, 0.0), 0.0);
        assert_relative_eq!(cal_b(1.0, 1.0), 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(cal_b(1.0, 1.0), 0.632_120_6, epsilon = 1e-7);
        // series branch is continuous with the closed form
        let t = 1e-9;
        assert_relative_eq!(cal_b(1.0, t), t * (1.0 - t / 2.0), max_relative = 1e-15);
    }

    #[test]
    fn ou_examples() {
        let v = ou_step(0.04, 1.0, 0.5, &[]).unwrap();
        assert_relative_eq!(v, 0.04 * (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.024_261_2, epsilon = 1e-7);
        let w = ou_step(0.04, 1.0, 0.5, &[(0.25, 0.1)]).unwrap();
        assert_relative_eq!(w, v + (-0.25f64).exp() * 0.1, max_relative = 1e-15);
        assert_relative_eq!(w, 0.102_141_3, epsilon = 1e-7);
        assert_relative_eq!(ou_step(0.04, 1.0, 1e-14, &[]).unwrap(), 0.04, max_relative = 1e-13);
    }

    #[test]
    fn integrated_variance_examples() {
        let v = integrated_variance_step(0.04, 1.0, 0.5, &[]).unwrap();
        assert_relative_eq!(v, 0.04 * (1.0 - (-0.5f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(v, 0.015_738_8, epsilon = 1e-7);
        let w = integrated_variance_step(0.04, 1.0, 0.5, &[(0.25, 0.1)]).unwrap();
        assert_relative_eq!(w, v + 0.1 * (1.0 - (-0.25f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(w, 0.037_858_7, epsilon = 1e-7);
    }

    #[test]
    fn bad_offsets_rejected() {
        assert!(ou_step(0.04, 1.0, 0.5, &[(0.0, 0.1)]).is_err());
        assert!(ou_step(0.04, 1.0, 0.5, &[(0.6, 0.1)]).is_err());
        assert!(ou_step(0.04, 1.0, 0.5, &[(0.3, 0.1), (0.2, 0.1)]).is_err());
        assert!(integrated_variance_step(0.04, 1.0, 0.5, &[(0.3, -0.1)]).is_err());
        assert!(ou_step(0.04, 1.0, 0.5, &[(0.5, 0.1)]).is_ok());
    }

    #[test]
    fn f32_identity() {
        let (l, t) = (0.7f32, 1.3f32);
        assert!((l * cal_b(l, t) + (-l * t).exp() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cal_b_identity(lambda in 1e-3f64..50.0, t in 0.0f64..10.0) {
            let lhs = lambda * cal_b(lambda, t) + (-lambda * t).exp();
            prop_assert!((lhs - 1.0).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn integrated_sde_identity(
            sigma_sq in 1e-4f64..2.0,
            lambda in 0.01f64..20.0,
            delta in 1e-4f64..2.0,
            raw in proptest::collection::vec((0.0f64..1.0, 1e-4f64..1.0), 0..6),
        ) {
            let mut offs: Vec<(f64, f64)> = raw.iter().map(|&(f, x)| ((f * delta).max(delta * 1e-9), x)).collect();
            offs.sort_by(|a, b| a.0.total_cmp(&b.0));
            offs.dedup_by(|a, b| a.0 == b.0);
            let end = ou_step(sigma_sq, lambda, delta, &offs).unwrap();
            let iv = integrated_variance_step(sigma_sq, lambda, delta, &offs).unwrap();
            let jumps: f64 = offs.iter().map(|j| j.1).sum();
            let resid = end - sigma_sq + lambda * iv - jumps;
            let scale = sigma_sq + jumps + end;
            prop_assert!(resid.abs() <= 1e-12 * scale);
        }
    }
}
