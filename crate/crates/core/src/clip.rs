//! Smooth clipping `ψ_N`: the identity on `[-N^γ, N^γ]`, constant beyond
//! `2N^γ`, and the integral of a C^∞ bump `ρ_N` in between.
//!
//! With `s = N^γ` and the smooth step `g(u) = f(u) / (f(u) + f(1-u))`,
//! `f(u) = exp(-1/u)`, the bump on the transition band is
//! `ρ_N(x) = g(2 - |x|/s)`. Integrating gives, for `s < |x| < 2s`,
//! `ψ_N(x) = sign(x) · s · (1 + G(2 - |x|/s))` where `G(a) = ∫_a^1 g`.
//! `G` does not depend on `(N, γ)`, and `g(u) + g(1-u) = 1` gives
//! `G(0) = 1/2`, so the saturation value is exactly `1.5 s`.

use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Clipping parameters: network width `n` and exponent `gamma` in `(0, 1/4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSpec<T> {
    n: usize,
    gamma: T,
    threshold: T,
}

impl<T: Scalar> ClipSpec<T> {
    pub fn new(n: usize, gamma: T) -> Result<Self> {
        if n == 0 {
            return Err(domain("clipping width N must be positive"));
        }
        if !(gamma > T::zero() && gamma < T::lit(0.25)) {
            return Err(domain(format!(
                "clipping exponent must lie in (0, 1/4), got {gamma}"
            )));
        }
        Ok(Self {
            n,
            gamma,
            threshold: T::from_usize_lossy(n).powf(gamma),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Inner threshold `N^γ`.
    pub fn threshold(&self) -> T {
        self.threshold
    }

    /// Outer threshold `2 N^γ`.
    pub fn outer(&self) -> T {
        self.threshold + self.threshold
    }

    /// `ψ_N(x)`.
    pub fn eval(&self, x: T) -> T {
        let s = self.threshold;
        let r = x.abs();
        if r <= s {
            return x;
        }
        let mag = if r >= s + s {
            s * T::lit(1.5)
        } else {
            s * (T::one() + tail_integral(T::lit(2.0) - r / s))
        };
        mag.copysign(x)
    }

    /// `ψ_N'(x) = ρ_N(x)`.
    pub fn deriv(&self, x: T) -> T {
        let s = self.threshold;
        let r = x.abs();
        if r <= s {
            T::one()
        } else if r >= s + s {
            T::zero()
        } else {
            smooth_step(T::lit(2.0) - r / s)
        }
    }
}

/// Checked `ψ_N(x)`.
pub fn clip_eval<T: Scalar>(x: T, spec: &ClipSpec<T>) -> Result<T> {
    if !x.is_finite() {
        return Err(domain("clipping input must be finite"));
    }
    Ok(spec.eval(x))
}

pub fn clip_deriv<T: Scalar>(x: T, spec: &ClipSpec<T>) -> Result<T> {
    if !x.is_finite() {
        return Err(domain("clipping input must be finite"));
    }
    Ok(spec.deriv(x))
}

#[inline]
fn flat_exp<T: Scalar>(u: T) -> T {
    if u > T::zero() {
        (-u.recip()).exp()
    } else {
        T::zero()
    }
}

/// C^∞ step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smooth_step<T: Scalar>(u: T) -> T {
    if u <= T::zero() {
        return T::zero();
    }
    if u >= T::one() {
        return T::one();
    }
    let a = flat_exp(u);
    a / (a + flat_exp(T::one() - u))
}

/// `∫_a^1 smooth_step` for `a` in `[0, 1]`.
fn tail_integral<T: Scalar>(a: T) -> T {
    let a = a.max(T::zero()).min(T::one());
    if a >= T::one() {
        return T::zero();
    }
    let tol = T::epsilon() * T::lit(4.0);
    adaptive_gauss_legendre(&smooth_step, a, T::one(), tol, 48)
}

const GL7_NODES: [f64; 4] = [
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_WEIGHTS: [f64; 4] = [
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gauss_legendre7<T: Scalar>(f: &dyn Fn(T) -> T, a: T, b: T) -> T {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let mut acc = T::lit(GL7_WEIGHTS[0]) * f(mid);
    for i in 1..4 {
        let dx = half * T::lit(GL7_NODES[i]);
        acc = acc + T::lit(GL7_WEIGHTS[i]) * (f(mid - dx) + f(mid + dx));
    }
    acc * half
}

/// Adaptive bisection with a 7-point Gauss–Legendre rule per panel.
pub(crate) fn adaptive_gauss_legendre<T: Scalar>(
    f: &dyn Fn(T) -> T,
    a: T,
    b: T,
    tol: T,
    max_depth: u32,
) -> T {
    let whole = gauss_legendre7(f, a, b);
    refine(f, a, b, whole, tol, max_depth)
}

fn refine<T: Scalar>(f: &dyn Fn(T) -> T, a: T, b: T, whole: T, tol: T, depth: u32) -> T {
    let m = (a + b) * T::lit(0.5);
    let left = gauss_legendre7(f, a, m);
    let right = gauss_legendre7(f, m, b);
    let both = left + right;
    if depth == 0 || (both - whole).abs() <= tol {
        return both;
    }
    let half_tol = tol * T::lit(0.5);
    refine(f, a, m, left, half_tol, depth - 1) + refine(f, m, b, right, half_tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n: usize, gamma: f64) -> ClipSpec<f64> {
        ClipSpec::new(n, gamma).unwrap()
    }

    /// Midpoint-rule integral of `ρ_N` on `[0, x]` with `steps_per_threshold`
    /// panels per `N^γ`. Independent of the closed-form tail integral.
    fn quadrature_oracle(c: &ClipSpec<f64>, x: f64, steps_per_threshold: usize) -> f64 {
        let h = c.threshold() / steps_per_threshold as f64;
        let n = (x.abs() / h).round() as usize;
        let sum: f64 = (0..n).map(|i| c.deriv((i as f64 + 0.5) * h)).sum();
        (sum * h).copysign(x)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ClipSpec::<f64>::new(0, 0.1).is_err());
        assert!(ClipSpec::<f64>::new(10, 0.0).is_err());
        assert!(ClipSpec::<f64>::new(10, 0.25).is_err());
        assert!(clip_eval(f64::NAN, &spec(10, 0.1)).is_err());
    }

    #[test]
    fn smooth_step_integrates_to_one_half() {
        let total = adaptive_gauss_legendre(&smooth_step::<f64>, 0.0, 1.0, 1e-15, 48);
        assert!((total - 0.5).abs() < 1e-14);
    }

    #[test]
    fn identity_region_and_anchor_values() {
        let c = spec(100, 0.1);
        let s = c.threshold();
        assert_eq!(clip_eval(0.0, &c).unwrap(), 0.0);
        assert_eq!(clip_eval(s, &c).unwrap(), s);
        assert_eq!(clip_eval(-s, &c).unwrap(), -s);
        assert_eq!(clip_deriv(0.0, &c).unwrap(), 1.0);
        assert_eq!(clip_deriv(2.5 * s, &c).unwrap(), 0.0);
        let mid = clip_deriv(1.5 * s, &c).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
        assert!(
            (mid - 0.5).abs() < 1e-15,
            "ρ is symmetric about the band centre"
        );
    }

    #[test]
    fn saturated_value_matches_quadrature_oracle() {
        let c = spec(1000, 0.2);
        let s = c.threshold();
        let v = c.eval(3.0 * s);
        assert!(v > s && v <= 2.0 * s);
        let oracle = quadrature_oracle(&c, 3.0 * s, 10_000);
        assert!((v - oracle).abs() < 1e-8 * s, "{v} vs {oracle}");
        assert!((v - 1.5 * s).abs() < 1e-14 * s);
    }

    #[test]
    fn transition_values_match_quadrature_oracle() {
        let c = spec(50, 0.15);
        let s = c.threshold();
        for frac in [1.1, 1.3, 1.5, 1.77, 1.99] {
            let x = frac * s;
            let oracle = quadrature_oracle(&c, x, 100_000);
            assert!((c.eval(x) - oracle).abs() < 1e-8 * s, "at {frac}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference_inside_band() {
        let c = spec(400, 0.12);
        let s = c.threshold();
        let h = 1e-5 * s;
        for i in 0..=80 {
            let x = s * (1.1 + 0.01 * i as f64);
            let fd = (c.eval(x + h) - c.eval(x - h)) / (2.0 * h);
            let rho = c.deriv(x);
            assert!((fd - rho).abs() <= 1e-5 * rho, "x/s = {}", x / s);
        }
    }

    #[test]
    fn single_precision_instantiation() {
        let c = ClipSpec::<f32>::new(100, 0.1).unwrap();
        let s = c.threshold();
        assert_eq!(c.eval(0.5 * s), 0.5 * s);
        assert!((c.eval(10.0 * s) - 1.5 * s).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn odd_bounded_and_lipschitz(
            n in 1usize..100_000,
            gamma in 0.01f64..0.249,
            x in -50.0f64..50.0,
            dx in -1.0f64..1.0,
        ) {
            let c = spec(n, gamma);
            let v = c.eval(x);
            prop_assert_eq!(c.eval(-x), -v);
            prop_assert!(v.abs() <= x.abs() + 1e-15);
            prop_assert!(v.abs() <= c.outer());
            let d = c.deriv(x);
            prop_assert!((0.0..=1.0).contains(&d));
            let w = c.eval(x + dx);
            prop_assert!((w - v).abs() <= dx.abs() * (1.0 + 1e-12) + 1e-14);
        }
    }
}
