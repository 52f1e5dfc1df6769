//! Finite samples of the parameter law `λ`, its empirical counterpart `λ^N`,
//! and Monte-Carlo inner products against them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{domain, Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureSource {
    /// i.i.d. draws from the initialization law.
    Lambda,
    /// The network's own initial parameters.
    LambdaN,
    /// The network's parameters after training step k.
    LambdaNk,
}

/// Initialization law: `c ~ U[-c_max, c_max]`, `b ~ U[b_lo, b_hi]`,
/// `w ~ N(0, (w_var / d) I_d)`, mutually independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaSpec {
    pub c_max: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub w_var: f64,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self {
            c_max: 1.0,
            b_lo: 0.0,
            b_hi: 1.0,
            w_var: 1.0,
        }
    }
}

impl LambdaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_max > 0.0 && self.c_max <= 1.0) {
            return Err(Error::Config(format!(
                "c_max must lie in (0, 1], got {}",
                self.c_max
            )));
        }
        if !(self.b_lo < self.b_hi && self.b_lo >= -1.0 && self.b_hi <= 1.0) {
            return Err(Error::Config(format!(
                "b support [{}, {}] must be a proper subinterval of [-1, 1]",
                self.b_lo, self.b_hi
            )));
        }
        if !(self.w_var > 0.0 && self.w_var <= 1.0) {
            return Err(Error::Config(format!(
                "E|w|^2 = {} must lie in (0, 1]",
                self.w_var
            )));
        }
        Ok(())
    }

    pub fn mean_b(&self) -> f64 {
        0.5 * (self.b_lo + self.b_hi)
    }

    /// Draws `m` triples. Entry `i` consumes `c`, then `w`, then `b` from one
    /// ChaCha stream, so the first `m` entries do not depend on the total count.
    pub fn sample<T: Scalar>(&self, m: usize, d: usize, seed: u64) -> Result<MeasureSample<T>> {
        self.validate()?;
        if d == 0 {
            return Err(domain("input dimension must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let w_std = (self.w_var / d as f64).sqrt();
        let mut c = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m * d);
        let mut b = Vec::with_capacity(m);
        for _ in 0..m {
            let u: f64 = rng.random();
            c.push(T::lit(self.c_max * (2.0 * u - 1.0)));
            for _ in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                w.push(T::lit(w_std * z));
            }
            let u: f64 = rng.random();
            b.push(T::lit(self.b_lo + (self.b_hi - self.b_lo) * u));
        }
        Ok(MeasureSample {
            c,
            w,
            b,
            d,
            source: MeasureSource::Lambda,
            seed,
        })
    }
}

/// A finite set of `(c, w, b)` triples stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSample<T> {
    c: Vec<T>,
    w: Vec<T>,
    b: Vec<T>,
    d: usize,
    source: MeasureSource,
    seed: u64,
}

impl<T: Scalar> MeasureSample<T> {
    pub fn from_parts(
        c: Vec<T>,
        w: Vec<T>,
        b: Vec<T>,
        d: usize,
        source: MeasureSource,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(domain("input dimension must be positive"));
        }
        if b.len() != c.len() {
            return Err(Error::LengthMismatch {
                expected: c.len(),
                got: b.len(),
            });
        }
        if w.len() != c.len() * d {
            return Err(Error::LengthMismatch {
                expected: c.len() * d,
                got: w.len(),
            });
        }
        Ok(Self {
            c,
            w,
            b,
            d,
            source,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn source(&self) -> MeasureSource {
        self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// Row-major `len × d` weight block.
    pub fn w(&self) -> &[T] {
        &self.w
    }

    pub fn w_row(&self, i: usize) -> &[T] {
        &self.w[i * self.d..(i + 1) * self.d]
    }

    /// First `m` entries (or all of them, if fewer).
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            c: self.c[..m].to_vec(),
            w: self.w[..m * self.d].to_vec(),
            b: self.b[..m].to_vec(),
            d: self.d,
            source: self.source,
            seed: self.seed,
        }
    }

    /// `⟨ b σ(wᵀx + m), measure ⟩`: the mean-field feedback produced by the
    /// ridge function `w ↦ σ(wᵀx + m)`.
    pub fn feedback(&self, x: &[T], m: T, act: &Activation<T>) -> T {
        debug_assert_eq!(x.len(), self.d);
        let mut acc = T::zero();
        if self.d == 1 {
            let x0 = x[0];
            for (&w, &b) in self.w.iter().zip(&self.b) {
                acc = acc + b * act.value(w * x0 + m);
            }
        } else {
            for (w, &b) in self.w.chunks_exact(self.d).zip(&self.b) {
                acc = acc + b * act.value(crate::scalar::dot(w, x) + m);
            }
        }
        acc / T::from_usize_lossy(self.len())
    }
}

/// Draws `m` triples from the default initialization law.
pub fn sample_lambda<T: Scalar>(m: usize, d: usize, seed: u64) -> Result<MeasureSample<T>> {
    LambdaSpec::default().sample(m, d, seed)
}

/// Checked form of [`MeasureSample::feedback`].
pub fn feedback_integral<T: Scalar>(
    x: &[T],
    m: T,
    measure: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<T> {
    if measure.is_empty() {
        return Err(domain("feedback integral over an empty measure"));
    }
    if x.len() != measure.dim() {
        return Err(Error::LengthMismatch {
            expected: measure.dim(),
            got: x.len(),
        });
    }
    Ok(measure.feedback(x, m, act))
}
