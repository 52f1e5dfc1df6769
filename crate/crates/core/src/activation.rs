//! Logistic activations with exact first and second derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind<T> {
    /// `1 / (1 + e^{-z})`.
    Logistic,
    /// `1 / (1 + e^{-s z})` with slope `s` in `(0, 1]`.
    ScaledLogistic(T),
}

/// A bounded, twice differentiable activation together with the uniform bound
/// `c_sigma` on its first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation<T> {
    kind: ActivationKind<T>,
    c_sigma: T,
}

impl<T: Scalar> Default for Activation<T> {
    fn default() -> Self {
        Self::logistic()
    }
}

impl<T: Scalar> Activation<T> {
    pub fn logistic() -> Self {
        Self {
            kind: ActivationKind::Logistic,
            c_sigma: T::lit(0.25),
        }
    }

    /// Logistic with slope `s`. For `s <= 1` the derivative bound is `s/4`:
    /// `sup|σ'| = s/4` and `sup|σ''| = s²/(6√3) < s/4`.
    pub fn scaled_logistic(s: T) -> Result<Self> {
        if !(s > T::zero() && s <= T::one()) {
            return Err(domain(format!(
                "logistic slope must lie in (0, 1], got {s}"
            )));
        }
        Ok(Self {
            kind: ActivationKind::ScaledLogistic(s),
            c_sigma: s * T::lit(0.25),
        })
    }

    pub fn kind(&self) -> ActivationKind<T> {
        self.kind
    }

    pub fn c_sigma(&self) -> T {
        self.c_sigma
    }

    #[inline]
    fn slope(&self) -> T {
        match self.kind {
            ActivationKind::Logistic => T::one(),
            ActivationKind::ScaledLogistic(s) => s,
        }
    }

    /// σ(z). Overflow-free for any finite `z`.
    #[inline]
    pub fn value(&self, z: T) -> T {
        let u = self.slope() * z;
        if u >= T::zero() {
            T::one() / (T::one() + (-u).exp())
        } else {
            let e = u.exp();
            e / (T::one() + e)
        }
    }

    /// σ'(z).
    #[inline]
    pub fn d1(&self, z: T) -> T {
        let v = self.value(z);
        self.slope() * v * (T::one() - v)
    }

    #[inline]
    pub fn d2(&self, z: T) -> T {
        let s = self.slope();
        let v = self.value(z);
        s * s * v * (T::one() - v) * (T::one() - v - v)
    }

    /// `(σ(z), σ'(z))` from a single exponential.
    #[inline]
    pub fn value_d1(&self, z: T) -> (T, T) {
        let v = self.value(z);
        (v, self.slope() * v * (T::one() - v))
    }

    /// Checked evaluation of value and both derivatives.
    pub fn eval(&self, z: T) -> Result<(T, T, T)> {
        if !z.is_finite() {
            return Err(domain(format!("activation input must be finite, got {z}")));
        }
        let s = self.slope();
        let v = self.value(z);
        let p = v * (T::one() - v);
        Ok((v, s * p, s * s * p * (T::one() - v - v)))
    }
}

/// Free-function form of [`Activation::eval`].
pub fn act_eval<T: Scalar>(z: T, a: &Activation<T>) -> Result<(T, T, T)> {
    a.eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logistic_at_zero() {
        let a = Activation::<f64>::logistic();
        let (v, d1, d2) = a.eval(0.0).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(d1, 0.25);
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn saturation() {
        let a = Activation::<f64>::logistic();
        let (v, d1, _) = a.eval(800.0).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(d1, 0.0);
        let (v, d1, _) = a.eval(-800.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d1, 0.0);
    }

    #[test]
    fn logistic_at_one_matches_finite_difference() {
        let a = Activation::<f64>::logistic();
        let (v, d1, _) = a.eval(1.0).unwrap();
        assert_relative_eq!(v, 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_relative_eq!(d1, 0.196_611_933_241_481_85, epsilon = 1e-12);
        let h = 1e-6;
        let fd = (a.value(1.0 + h) - a.value(1.0 - h)) / (2.0 * h);
        assert_relative_eq!(fd, d1, max_relative = 1e-8);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let a = Activation::<f64>::logistic();
        assert!(a.eval(f64::NAN).is_err());
        assert!(a.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn scaled_slope_window() {
        assert!(Activation::<f64>::scaled_logistic(0.0).is_err());
        assert!(Activation::<f64>::scaled_logistic(1.5).is_err());
        let a = Activation::<f64>::scaled_logistic(0.5).unwrap();
        assert_eq!(a.c_sigma(), 0.125);
        assert_eq!(a.value(2.0), Activation::<f64>::logistic().value(1.0));
    }

    #[test]
    fn derivatives_match_finite_differences_on_grid() {
        for a in [
            Activation::<f64>::logistic(),
            Activation::<f64>::scaled_logistic(0.3).unwrap(),
        ] {
            let h = 1e-4;
            for i in 0..=400 {
                let z = -10.0 + 0.05 * i as f64;
                let (v, d1, d2) = a.eval(z).unwrap();
                assert!((0.0..=1.0).contains(&v));
                assert!(d1.abs() <= a.c_sigma() && d2.abs() <= a.c_sigma());
                let fd1 = (a.value(z + h) - a.value(z - h)) / (2.0 * h);
                let fd2 = (a.d1(z + h) - a.d1(z - h)) / (2.0 * h);
                // d2 vanishes at the inflection point, so its error is relative to the d1 scale.
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs(), "d1 at {z}");
                assert!((fd2 - d2).abs() <= 1e-6 * d1.abs(), "d2 at {z}");
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = Activation::<f32>::logistic();
        assert_eq!(a.value(0.0), 0.5);
        assert!((a.d1(1.0) - 0.196_612).abs() < 1e-6);
    }
}
