//! Compact representation of the ridge-function class
//! `{ w ↦ σ(wᵀa + b) : |a| ≤ 1 }` and its zero closure point.

use crate::activation::Activation;
use crate::error::{domain, Result};
use crate::scalar::{dot, norm, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum FuncH<T> {
    Zero,
    /// `w ↦ σ(wᵀa + b)`.
    Logistic {
        a: Vec<T>,
        b: T,
    },
}

impl<T: Scalar> FuncH<T> {
    /// Builds `w ↦ σ(wᵀa + b)`; rejects `|a| > 1` (beyond rounding slack).
    pub fn logistic(a: Vec<T>, b: T) -> Result<Self> {
        let n = norm(&a);
        if !(n <= T::one() + T::lit(1e-12)) || !b.is_finite() {
            return Err(domain(format!(
                "ridge direction norm {n} exceeds 1 or offset {b} not finite"
            )));
        }
        Ok(FuncH::Logistic { a, b })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FuncH::Zero)
    }

    /// Ridge offset `b`; `None` for the zero function.
    pub fn offset(&self) -> Option<T> {
        match self {
            FuncH::Zero => None,
            FuncH::Logistic { b, .. } => Some(*b),
        }
    }

    pub fn direction(&self) -> Option<&[T]> {
        match self {
            FuncH::Zero => None,
            FuncH::Logistic { a, .. } => Some(a),
        }
    }

    #[inline]
    pub fn eval(&self, w: &[T], act: &Activation<T>) -> T {
        match self {
            FuncH::Zero => T::zero(),
            FuncH::Logistic { a, b } => act.value(dot(w, a) + *b),
        }
    }

    /// `∇h(w) = σ'(wᵀa + b) a`.
    pub fn grad(&self, w: &[T], act: &Activation<T>) -> Vec<T> {
        match self {
            FuncH::Zero => vec![T::zero(); w.len()],
            FuncH::Logistic { a, b } => {
                let s = act.d1(dot(w, a) + *b);
                a.iter().map(|&ai| s * ai).collect()
            }
        }
    }

    /// `h(w)` and the directional derivative `∇h(w)ᵀx` in one activation call.
    #[inline]
    pub fn eval_with_directional(&self, w: &[T], x: &[T], act: &Activation<T>) -> (T, T) {
        match self {
            FuncH::Zero => (T::zero(), T::zero()),
            FuncH::Logistic { a, b } => {
                let (v, d) = act.value_d1(dot(w, a) + *b);
                (v, d * dot(a, x))
            }
        }
    }
}
