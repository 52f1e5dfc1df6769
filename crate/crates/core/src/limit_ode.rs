//! The kernel limit equation restricted to an empirical sample of the
//! stationary law: Gram assembly, RK4 and closed-form solutions, and the
//! induced functional on arbitrary test functions.

use nalgebra::{DMatrix, DVector, RealField, SymmetricEigen};
use num_traits::Float;

use crate::activation::Activation;
use crate::dynamics::{validate_assumptions, DataStream, DynamicsSpec};
use crate::error::{config, domain, Error, Result};
use crate::function::FuncH;
use crate::meanfield::{kernel_k, step_h, ChainTag, MemoryChainState};
use crate::measure::MeasureSample;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Scalars usable with the linear-algebra routines.
pub trait LinalgScalar: Scalar + RealField + Copy {}
impl<T: Scalar + RealField + Copy> LinalgScalar for T {}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEntry<T> {
    pub x: Vec<T>,
    pub z: T,
    pub y: T,
    /// `⟨b′h, λ⟩` for the memory function at the harvested step.
    pub m: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Harvest {
    /// Thinned states from one long chain.
    SingleChain,
    /// The final state of independent chains.
    Restarts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySample<T> {
    pub entries: Vec<StationaryEntry<T>>,
    pub burn_in: u64,
    pub stride: u64,
    pub seed: u64,
    pub harvest: Harvest,
}

impl<T: Scalar> StationarySample<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn targets(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.y).collect()
    }
}

/// Smallest burn-in for which `q₀^k ≤ tol`.
pub fn required_burn_in<T: Scalar>(
    spec: &DynamicsSpec<T>,
    act: &Activation<T>,
    tol: T,
) -> Result<u64> {
    let report = validate_assumptions(spec, act);
    report.mixing_steps(tol).ok_or_else(|| {
        config(format!(
            "contraction constant q0 = {} is not below 1; the chain has no certified mixing time",
            report.q0
        ))
    })
}

/// Samples states of the `(data, h)` chain after `burn_in` steps, keeping
/// every `stride`-th. Refuses when `q₀ ≥ 1` or `burn_in` is shorter than the
/// geometric mixing bound for `tol`.
#[allow(clippy::too_many_arguments)]
pub fn sample_mu<T: Scalar>(
    spec: &DynamicsSpec<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
    m: usize,
    burn_in: u64,
    stride: u64,
    tol: T,
    seed: u64,
    harvest: Harvest,
) -> Result<StationarySample<T>> {
    let needed = required_burn_in(spec, act, tol)?;
    if burn_in < needed {
        return Err(config(format!(
            "burn-in {burn_in} shorter than the mixing bound {needed}"
        )));
    }
    if m == 0 || stride == 0 {
        return Err(config("sample size and stride must be positive"));
    }
    spec.validate()?;
    let mut entries = Vec::with_capacity(m);
    match harvest {
        Harvest::SingleChain => {
            let mut stream = DataStream::new(spec.clone(), seed);
            let mut chain = MemoryChainState::start(ChainTag::H);
            let mut k = 0u64;
            while entries.len() < m {
                if k >= burn_in && (k - burn_in).is_multiple_of(stride) {
                    entries.push(entry(&stream, &chain));
                }
                let x = stream.state().x.clone();
                step_h(&mut chain, &x, lambda, act)?;
                stream.advance()?;
                k += 1;
            }
        }
        Harvest::Restarts => {
            for j in 0..m {
                let mut stream = DataStream::new(spec.clone(), derive_seed(seed, &[j as u64]));
                let mut chain = MemoryChainState::start(ChainTag::H);
                for _ in 0..burn_in {
                    let x = stream.state().x.clone();
                    step_h(&mut chain, &x, lambda, act)?;
                    stream.advance()?;
                }
                entries.push(entry(&stream, &chain));
            }
        }
    }
    Ok(StationarySample {
        entries,
        burn_in,
        stride,
        seed,
        harvest,
    })
}

fn entry<T: Scalar>(stream: &DataStream<T>, chain: &MemoryChainState<T>) -> StationaryEntry<T> {
    let s = stream.state();
    StationaryEntry {
        x: s.x.clone(),
        z: s.z,
        y: s.y,
        m: chain.m,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelGram<T: LinalgScalar> {
    pub k: DMatrix<T>,
    pub y: DVector<T>,
    pub lambda_seed: u64,
}

impl<T: LinalgScalar> KernelGram<T> {
    pub fn from_parts(k: DMatrix<T>, y: DVector<T>) -> Result<Self> {
        if !k.is_square() || k.nrows() != y.len() {
            return Err(Error::LengthMismatch {
                expected: k.nrows(),
                got: y.len(),
            });
        }
        Ok(Self {
            k,
            y,
            lambda_seed: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn trace(&self) -> T {
        self.k.trace()
    }

    pub fn eigenvalues(&self) -> DVector<T> {
        SymmetricEigen::new(self.k.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(Float::infinity(), Float::min)
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(Float::neg_infinity(), Float::max)
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.m();
        (0..m).all(|i| (0..i).all(|j| self.k[(i, j)] == self.k[(j, i)]))
    }
}

/// `K[i][j] = K̃(Hᵢ, Hⱼ)` over a shared λ-sample, assembled as
/// `F Fᵀ + (G Gᵀ) ∘ (X Xᵀ)` with `F_{iℓ} = σ(w_ℓᵀxᵢ + mᵢ)` and
/// `G_{iℓ} = c_ℓ σ′(w_ℓᵀxᵢ + mᵢ)`. The lower triangle is mirrored from the
/// upper, so the result is exactly symmetric.
pub fn build_gram<T: LinalgScalar>(
    sample: &StationarySample<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<KernelGram<T>> {
    let m = sample.len();
    if m == 0 || lambda.is_empty() {
        return Err(domain(
            "Gram matrix needs at least one state and one λ entry",
        ));
    }
    let d = lambda.dim();
    for e in &sample.entries {
        if e.x.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: e.x.len(),
            });
        }
    }
    const BLOCK: usize = 4096;
    let mut ff = DMatrix::<T>::zeros(m, m);
    let mut gg = DMatrix::<T>::zeros(m, m);
    let total = lambda.len();
    let mut start = 0;
    while start < total {
        let len = BLOCK.min(total - start);
        let mut f = DMatrix::<T>::zeros(m, len);
        let mut g = DMatrix::<T>::zeros(m, len);
        for l in 0..len {
            let w = lambda.w_row(start + l);
            let c = lambda.c()[start + l];
            for (i, e) in sample.entries.iter().enumerate() {
                let (s, ds) = act.value_d1(crate::scalar::dot(w, &e.x) + e.m);
                f[(i, l)] = s;
                g[(i, l)] = c * ds;
            }
        }
        ff.gemm(T::one(), &f, &f.transpose(), T::one());
        gg.gemm(T::one(), &g, &g.transpose(), T::one());
        start += len;
    }
    let inv = T::one() / T::from_usize_lossy(total);
    let mut k = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let xx = crate::scalar::dot(&sample.entries[i].x, &sample.entries[j].x);
            let v = (ff[(i, j)] + gg[(i, j)] * xx) * inv;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let y = DVector::from_vec(sample.targets());
    Ok(KernelGram {
        k,
        y,
        lambda_seed: lambda.seed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Rk4,
    EigenClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitTrajectory<T: LinalgScalar> {
    pub times: Vec<T>,
    /// One row per time.
    pub u: Vec<DVector<T>>,
    pub alpha: T,
    pub method: OdeMethod,
}

impl<T: LinalgScalar> LimitTrajectory<T> {
    pub fn horizon(&self) -> T {
        *self.times.last().expect("trajectory has at least t = 0")
    }
}

/// Largest `dt` accepted by [`integrate`]: `0.1 / (α λ_max / M)`.
pub fn stable_dt<T: LinalgScalar>(g: &KernelGram<T>, alpha: T) -> T {
    let rate = alpha * g.max_eigenvalue() / T::from_usize_lossy(g.m());
    if rate <= T::zero() {
        Float::infinity()
    } else {
        T::lit(0.1) / rate
    }
}

/// Classical RK4 on `du/dt = −(α/M) K (u − y)`, `u(0) = 0`. The step is
/// shrunk so that it divides `horizon` evenly.
pub fn integrate<T: LinalgScalar>(
    g: &KernelGram<T>,
    alpha: T,
    horizon: T,
    dt: T,
) -> Result<LimitTrajectory<T>> {
    if !(dt > T::zero()) || !(horizon >= T::zero()) {
        return Err(domain("step and horizon must be positive"));
    }
    let bound = stable_dt(g, alpha);
    if dt > bound {
        return Err(Error::StepSize {
            dt: dt.to_f64_lossy(),
            bound: bound.to_f64_lossy(),
        });
    }
    let steps = Float::ceil(horizon / dt - T::lit(1e-9))
        .to_usize()
        .unwrap_or(0);
    let h = if steps == 0 {
        T::zero()
    } else {
        horizon / T::from_usize_lossy(steps)
    };
    let a = g.k.clone() * (-(alpha / T::from_usize_lossy(g.m())));
    let rhs = |u: &DVector<T>| &a * (u - &g.y);
    let mut u = DVector::<T>::zeros(g.m());
    let mut times = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps + 1);
    times.push(T::zero());
    us.push(u.clone());
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    for n in 1..=steps {
        let k1 = rhs(&u);
        let k2 = rhs(&(&u + &k1 * (h * half)));
        let k3 = rhs(&(&u + &k2 * (h * half)));
        let k4 = rhs(&(&u + &k3 * h));
        u += (k1 + k2 * T::lit(2.0) + k3 * T::lit(2.0) + k4) * (h * sixth);
        times.push(h * T::from_usize_lossy(n));
        us.push(u.clone());
    }
    Ok(LimitTrajectory {
        times,
        u: us,
        alpha,
        method: OdeMethod::Rk4,
    })
}

/// Eigendecomposition of `K` for repeated closed-form evaluation.
#[derive(Debug, Clone)]
pub struct ClosedForm<T: LinalgScalar> {
    q: DMatrix<T>,
    lambdas: DVector<T>,
    qty: DVector<T>,
    m: T,
}

impl<T: LinalgScalar> ClosedForm<T> {
    pub fn new(g: &KernelGram<T>) -> Result<Self> {
        if !g.is_symmetric() {
            return Err(Error::Numeric(
                "closed form needs a symmetric kernel matrix".into(),
            ));
        }
        let eig = SymmetricEigen::try_new(g.k.clone(), T::default_epsilon(), 0)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        let qty = eig.eigenvectors.transpose() * &g.y;
        Ok(Self {
            q: eig.eigenvectors,
            lambdas: eig.eigenvalues,
            qty,
            m: T::from_usize_lossy(g.m()),
        })
    }

    /// `u(t) = Q (1 − e^{−α Λ t / M}) Qᵀ y`.
    pub fn eval(&self, alpha: T, t: T) -> DVector<T> {
        let scaled = DVector::from_iterator(
            self.lambdas.len(),
            self.lambdas
                .iter()
                .zip(self.qty.iter())
                .map(|(&l, &c)| -Float::exp_m1(-alpha * l * t / self.m) * c),
        );
        &self.q * scaled
    }

    pub fn trajectory(&self, alpha: T, times: &[T]) -> LimitTrajectory<T> {
        LimitTrajectory {
            times: times.to_vec(),
            u: times.iter().map(|&t| self.eval(alpha, t)).collect(),
            alpha,
            method: OdeMethod::EigenClosedForm,
        }
    }
}

pub fn closed_form<T: LinalgScalar>(g: &KernelGram<T>, alpha: T, t: T) -> Result<DVector<T>> {
    Ok(ClosedForm::new(g)?.eval(alpha, t))
}

/// Largest componentwise gap between two trajectories on the same grid.
pub fn max_abs_difference<T: LinalgScalar>(a: &LimitTrajectory<T>, b: &LimitTrajectory<T>) -> T {
    a.u.iter()
        .zip(&b.u)
        .map(|(x, y)| (x - y).amax())
        .fold(T::zero(), Float::max)
}

/// Running integrals `∫₀^{t_n} (u_j(s) − y_j) ds` by the trapezoid rule.
#[derive(Debug, Clone)]
pub struct LimitFunctional<T: LinalgScalar> {
    times: Vec<T>,
    residual: Vec<DVector<T>>,
    cumulative: Vec<DVector<T>>,
    alpha: T,
    m: usize,
}

impl<T: LinalgScalar> LimitFunctional<T> {
    pub fn new(traj: &LimitTrajectory<T>, g: &KernelGram<T>) -> Self {
        let residual: Vec<DVector<T>> = traj.u.iter().map(|u| u - &g.y).collect();
        let mut cumulative = Vec::with_capacity(residual.len());
        let mut acc = DVector::<T>::zeros(g.m());
        cumulative.push(acc.clone());
        for n in 1..residual.len() {
            let dt = traj.times[n] - traj.times[n - 1];
            acc += (&residual[n] + &residual[n - 1]) * (dt * T::lit(0.5));
            cumulative.push(acc.clone());
        }
        Self {
            times: traj.times.clone(),
            residual,
            cumulative,
            alpha: traj.alpha,
            m: g.m(),
        }
    }

    /// `∫₀ᵗ (u(s) − y) ds`, with linear interpolation inside the last interval.
    pub fn integral(&self, t: T) -> Result<DVector<T>> {
        let horizon = *self.times.last().unwrap();
        if t < T::zero() || t > horizon + T::lit(1e-12) * (T::one() + horizon) {
            return Err(domain(format!("time {t} outside [0, {horizon}]")));
        }
        let n = match self.times.iter().position(|&s| s > t) {
            None => return Ok(self.cumulative[self.times.len() - 1].clone()),
            Some(0) => 0,
            Some(p) => p - 1,
        };
        let tn = self.times[n];
        if t == tn {
            return Ok(self.cumulative[n].clone());
        }
        let span = self.times[n + 1] - tn;
        let theta = (t - tn) / span;
        let et = &self.residual[n] * (T::one() - theta) + &self.residual[n + 1] * theta;
        Ok(&self.cumulative[n] + (&self.residual[n] + et) * ((t - tn) * T::lit(0.5)))
    }

    /// `g_t(h) = −(α/M) Σⱼ K_{xⱼ,λ}(h, hⱼ) ∫₀ᵗ (uⱼ(s) − yⱼ) ds` for precomputed
    /// kernel weights `K_{xⱼ,λ}(h, hⱼ)`.
    pub fn eval_with_weights(&self, weights: &[T], t: T) -> Result<T> {
        if weights.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                got: weights.len(),
            });
        }
        let integral = self.integral(t)?;
        let s: T = weights
            .iter()
            .zip(integral.iter())
            .map(|(&w, &i)| w * i)
            .sum();
        Ok(-self.alpha / T::from_usize_lossy(self.m) * s)
    }
}

/// `K_{xⱼ,λ}(h, hⱼ)` for every sampled state.
pub fn kernel_weights<T: Scalar>(
    sample: &StationarySample<T>,
    h_test: &FuncH<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> Vec<T> {
    sample
        .entries
        .iter()
        .map(|e| kernel_k(&e.x, e.m, h_test, lambda, act))
        .collect()
}

/// `g_t(h)` on the sampled limit equation.
#[allow(clippy::too_many_arguments)]
pub fn g_limit_eval<T: LinalgScalar>(
    traj: &LimitTrajectory<T>,
    sample: &StationarySample<T>,
    g: &KernelGram<T>,
    h_test: &FuncH<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
    t: T,
) -> Result<T> {
    let weights = kernel_weights(sample, h_test, lambda, act);
    LimitFunctional::new(traj, g).eval_with_weights(&weights, t)
}

/// `(t, (1/2M) Σⱼ (uⱼ(t) − yⱼ)²)` along the trajectory.
pub fn loss_curve<T: LinalgScalar>(traj: &LimitTrajectory<T>, g: &KernelGram<T>) -> Vec<(T, T)> {
    let scale = T::lit(0.5) / T::from_usize_lossy(g.m());
    traj.times
        .iter()
        .zip(&traj.u)
        .map(|(&t, u)| (t, (u - &g.y).norm_squared() * scale))
        .collect()
}

/// Whether `loss(t_{n+1}) ≤ loss(t_n) + rel_tol · loss(0)` at every step.
pub fn is_monotone<T: Scalar>(curve: &[(T, T)], rel_tol: T) -> bool {
    let Some(&(_, l0)) = curve.first() else {
        return true;
    };
    curve.windows(2).all(|w| w[1].1 <= w[0].1 + rel_tol * l0)
}
