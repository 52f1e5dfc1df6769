//! Hidden-Markov data process: `(X_{k+1}, Z_{k+1}) = g(X_k, Z_k) + ε_k`,
//! `Y_k = f(X_k, Z_k) + η_k`, with bounded i.i.d. noise.

use rand::Rng;

use crate::activation::Activation;
use crate::error::{config, Error, Result};
use crate::rng::{rng_from_seed, SimRng};
use crate::scalar::{dot, norm, Scalar};

/// State map `g : R^{d+1} → R^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum GMap<T> {
    Zero,
    /// `v ↦ ½ tanh(A v)` with `A` stored row-major, `(d+1) × (d+1)`.
    HalfTanhLinear {
        matrix: Vec<T>,
    },
}

/// Output map `f : R^{d+1} → R`.
#[derive(Debug, Clone, PartialEq)]
pub enum FMap<T> {
    Zero,
    /// `v ↦ coeffsᵀ v`.
    Linear {
        coeffs: Vec<T>,
    },
}

/// Bounded, mean-zero noise applied independently per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise<T> {
    None,
    Uniform {
        half_width: T,
    },
    /// `±scale` with probability one half each.
    Rademacher {
        scale: T,
    },
}

impl<T: Scalar> Noise<T> {
    /// Per-coordinate bound.
    pub fn bound(&self) -> T {
        match *self {
            Noise::None => T::zero(),
            Noise::Uniform { half_width } => half_width.abs(),
            Noise::Rademacher { scale } => scale.abs(),
        }
    }

    fn draw(&self, rng: &mut SimRng) -> T {
        match *self {
            Noise::None => T::zero(),
            Noise::Uniform { half_width } => {
                let u: f64 = rng.random();
                half_width * T::lit(2.0 * u - 1.0)
            }
            Noise::Rademacher { scale } => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec<T> {
    pub name: String,
    /// Input dimension; the joint state `(x, z)` has `d + 1` coordinates.
    pub d: usize,
    pub g_map: GMap<T>,
    pub f_map: FMap<T>,
    /// Joint Lipschitz constant of `(f, g)`.
    pub lipschitz: T,
    /// `sup |g|` over the closed unit ball.
    pub g_sup: T,
    pub eps: Noise<T>,
    pub eta: Noise<T>,
}

/// One step of the data process.
#[derive(Debug, Clone, PartialEq)]
pub struct DataState<T> {
    pub x: Vec<T>,
    pub z: T,
    pub y: T,
    pub k: u64,
}

impl<T: Scalar> DataState<T> {
    /// `|(x, z)|`.
    pub fn joint_norm(&self) -> T {
        (dot(&self.x, &self.x) + self.z * self.z).sqrt()
    }

    fn joint(&self) -> Vec<T> {
        let mut v = self.x.clone();
        v.push(self.z);
        v
    }
}

/// `P diag(1, ½) P⁻¹` for `P` the rotation `[[√3/2, ½], [−½, √3/2]]`.
pub fn rotation_tanh_matrix<T: Scalar>() -> [[T; 2]; 2] {
    let r3 = T::lit(3.0).sqrt() * T::lit(0.5);
    let h = T::lit(0.5);
    let p = [[r3, h], [-h, r3]];
    // P is orthogonal, so P⁻¹ = Pᵀ.
    let diag = [T::one(), h];
    let mut out = [[T::zero(); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..2).map(|k| p[i][k] * diag[k] * p[j][k]).sum();
        }
    }
    out
}

/// The two-dimensional rotation-tanh system with `d = 1`, noise-free, and
/// output map `f(x, z) = (x + z)/4`.
///
/// `A` is symmetric with eigenvalues `1` and `½`, so `½ tanh(A ·)` is
/// `½`-Lipschitz and bounded by `½` on the unit ball; `f` is `√2/4`-Lipschitz.
pub fn make_builtin_rotation_tanh<T: Scalar>() -> DynamicsSpec<T> {
    let a = rotation_tanh_matrix::<T>();
    let quarter = T::lit(0.25);
    let lg = T::lit(0.5);
    let lf = quarter * T::lit(2.0).sqrt();
    DynamicsSpec {
        name: "rotation_tanh".into(),
        d: 1,
        g_map: GMap::HalfTanhLinear {
            matrix: vec![a[0][0], a[0][1], a[1][0], a[1][1]],
        },
        f_map: FMap::Linear {
            coeffs: vec![quarter, quarter],
        },
        lipschitz: (lg * lg + lf * lf).sqrt(),
        g_sup: T::lit(0.5),
        eps: Noise::None,
        eta: Noise::Uniform {
            half_width: T::lit(0.05),
        },
    }
}

/// `g ≡ 0`, `f ≡ 0`, no noise.
pub fn make_zero_dynamics<T: Scalar>(d: usize) -> DynamicsSpec<T> {
    DynamicsSpec {
        name: "zero".into(),
        d,
        g_map: GMap::Zero,
        f_map: FMap::Zero,
        lipschitz: T::zero(),
        g_sup: T::zero(),
        eps: Noise::None,
        eta: Noise::None,
    }
}

impl<T: Scalar> DynamicsSpec<T> {
    pub fn with_state_noise(mut self, eps: Noise<T>) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_output_noise(mut self, eta: Noise<T>) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_lipschitz(mut self, l: T) -> Self {
        self.lipschitz = l;
        self
    }

    /// Euclidean bound on the state noise vector.
    pub fn eps_bound(&self) -> T {
        self.eps.bound() * T::from_usize_lossy(self.d + 1).sqrt()
    }

    /// `sup |f|` over the unit ball.
    pub fn f_sup(&self) -> T {
        match &self.f_map {
            FMap::Zero => T::zero(),
            FMap::Linear { coeffs } => norm(coeffs),
        }
    }

    /// Bound `C_y` on `|Y_k|` while `|(X_k, Z_k)| ≤ 1`.
    pub fn c_y(&self) -> T {
        self.f_sup() + self.eta.bound()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.d + 1;
        if self.d == 0 {
            return Err(config("input dimension must be positive"));
        }
        if let GMap::HalfTanhLinear { matrix } = &self.g_map {
            if matrix.len() != dim * dim {
                return Err(Error::LengthMismatch {
                    expected: dim * dim,
                    got: matrix.len(),
                });
            }
        }
        if let FMap::Linear { coeffs } = &self.f_map {
            if coeffs.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: coeffs.len(),
                });
            }
        }
        if !(self.lipschitz >= T::zero() && self.lipschitz < T::one()) {
            return Err(config(format!(
                "Lipschitz constant {} must lie in [0, 1)",
                self.lipschitz
            )));
        }
        if self.g_sup + self.eps_bound() > T::one() {
            return Err(config(format!(
                "sup|g| + |ε| = {} + {} exceeds 1: paths can leave the unit ball",
                self.g_sup,
                self.eps_bound()
            )));
        }
        Ok(())
    }

    fn apply_g(&self, v: &[T]) -> Vec<T> {
        match &self.g_map {
            GMap::Zero => vec![T::zero(); v.len()],
            GMap::HalfTanhLinear { matrix } => matrix
                .chunks_exact(v.len())
                .map(|row| T::lit(0.5) * dot(row, v).tanh())
                .collect(),
        }
    }

    fn apply_f(&self, v: &[T]) -> T {
        match &self.f_map {
            FMap::Zero => T::zero(),
            FMap::Linear { coeffs } => dot(coeffs, v),
        }
    }

    /// Initial state: `X₀, Z₀` i.i.d. `U[0, 1]` per coordinate and
    /// `Y₀ = f(X₀, Z₀) + η₀`. `|(X₀, Z₀)|` may exceed 1; the bound applies from
    /// step 1 on.
    pub fn initial_state(&self, rng: &mut SimRng) -> DataState<T> {
        let mut v: Vec<T> = (0..=self.d).map(|_| T::lit(rng.random::<f64>())).collect();
        let y = self.apply_f(&v) + self.eta.draw(rng);
        let z = v.pop().expect("d + 1 >= 1");
        DataState { x: v, z, y, k: 0 }
    }

    pub fn origin(&self) -> DataState<T> {
        let v = vec![T::zero(); self.d + 1];
        DataState {
            x: vec![T::zero(); self.d],
            z: T::zero(),
            y: self.apply_f(&v),
            k: 0,
        }
    }
}

/// Advances the data process one step.
pub fn step_data<T: Scalar>(
    state: &DataState<T>,
    spec: &DynamicsSpec<T>,
    rng: &mut SimRng,
) -> Result<DataState<T>> {
    let mut v = spec.apply_g(&state.joint());
    for vi in v.iter_mut() {
        *vi = *vi + spec.eps.draw(rng);
    }
    let y = spec.apply_f(&v) + spec.eta.draw(rng);
    let z = v.pop().expect("d + 1 >= 1");
    let next = DataState {
        x: v,
        z,
        y,
        k: state.k + 1,
    };
    let slack = T::lit(1e-12);
    if next.joint_norm() > T::one() + slack || next.y.abs() > spec.c_y() + slack {
        return Err(config(format!(
            "data state left its bounds at step {}: |(x,z)| = {}, |y| = {} > C_y = {}",
            next.k,
            next.joint_norm(),
            next.y.abs(),
            spec.c_y()
        )));
    }
    Ok(next)
}

/// Owns a data path: the dynamics, its random stream and the current state.
#[derive(Debug, Clone)]
pub struct DataStream<T> {
    spec: DynamicsSpec<T>,
    rng: SimRng,
    state: DataState<T>,
}

impl<T: Scalar> DataStream<T> {
    /// Starts from a random initial state drawn from the stream's own seed.
    pub fn new(spec: DynamicsSpec<T>, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let state = spec.initial_state(&mut rng);
        Self { spec, rng, state }
    }

    pub fn from_state(spec: DynamicsSpec<T>, state: DataState<T>, seed: u64) -> Self {
        Self {
            spec,
            rng: rng_from_seed(seed),
            state,
        }
    }

    pub fn state(&self) -> &DataState<T> {
        &self.state
    }

    pub fn spec(&self) -> &DynamicsSpec<T> {
        &self.spec
    }

    pub fn advance(&mut self) -> Result<&DataState<T>> {
        self.state = step_data(&self.state, &self.spec, &mut self.rng)?;
        Ok(&self.state)
    }
}

/// Per-clause outcome of the assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionFlags {
    pub lipschitz_below_one: bool,
    /// `C_σ² < min(1/2, (1 − L²)/8)`.
    pub c_sigma_clause: bool,
    pub q0_below_one: bool,
    pub noise_bounded: bool,
    pub path_bounded: bool,
    /// `β ∈ (1/2, 1)`, `γ ∈ (0, (1 − β)/2)`; `None` when not checked.
    pub beta_gamma_window: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport<T> {
    pub lipschitz: T,
    pub c_sigma: T,
    /// Contraction constant `q₀ = √(L² + 8 C_σ²)`.
    pub q0: T,
    pub flags: AssumptionFlags,
}

impl<T: Scalar> AssumptionReport<T> {
    pub fn passes(&self) -> bool {
        let f = &self.flags;
        f.lipschitz_below_one
            && f.c_sigma_clause
            && f.q0_below_one
            && f.noise_bounded
            && f.path_bounded
            && f.beta_gamma_window.unwrap_or(true)
    }

    pub fn with_window(mut self, beta: T, gamma: T) -> Self {
        self.flags.beta_gamma_window = Some(beta_gamma_window_ok(beta, gamma));
        self
    }

    /// Steps needed for the geometric bound `q₀^k` to fall below `tol`.
    pub fn mixing_steps(&self, tol: T) -> Option<u64> {
        if !(self.q0 < T::one()) {
            return None;
        }
        if self.q0 <= T::zero() {
            return Some(1);
        }
        (tol.ln() / self.q0.ln()).ceil().to_u64()
    }

    /// Names of the failing clauses.
    pub fn failures(&self) -> Vec<&'static str> {
        let f = &self.flags;
        let mut out = Vec::new();
        if !f.lipschitz_below_one {
            out.push("L < 1");
        }
        if !f.c_sigma_clause {
            out.push("C_sigma^2 < min(1/2, (1 - L^2)/8)");
        }
        if !f.q0_below_one {
            out.push("q0 < 1");
        }
        if !f.noise_bounded {
            out.push("bounded noise");
        }
        if !f.path_bounded {
            out.push("sup|g| + |eps| <= 1");
        }
        if f.beta_gamma_window == Some(false) {
            out.push("beta in (1/2, 1), gamma in (0, (1 - beta)/2)");
        }
        out
    }
}

pub fn beta_gamma_window_ok<T: Scalar>(beta: T, gamma: T) -> bool {
    let half = T::lit(0.5);
    beta > half && beta < T::one() && gamma > T::zero() && gamma < (T::one() - beta) * half
}

/// Checks the data-process and activation assumptions and computes `q₀`.
pub fn validate_assumptions<T: Scalar>(
    spec: &DynamicsSpec<T>,
    act: &Activation<T>,
) -> AssumptionReport<T> {
    let l = spec.lipschitz;
    let cs = act.c_sigma();
    let q0 = (l * l + T::lit(8.0) * cs * cs).sqrt();
    let cap = T::lit(0.5).min((T::one() - l * l) / T::lit(8.0));
    let noise_bounded = spec.eps.bound().is_finite() && spec.eta.bound().is_finite();
    AssumptionReport {
        lipschitz: l,
        c_sigma: cs,
        q0,
        flags: AssumptionFlags {
            lipschitz_below_one: l < T::one(),
            c_sigma_clause: cs * cs < cap,
            q0_below_one: q0 < T::one(),
            noise_bounded,
            path_bounded: spec.g_sup + spec.eps_bound() <= T::one(),
            beta_gamma_window: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_l(l: f64) -> DynamicsSpec<f64> {
        make_builtin_rotation_tanh::<f64>().with_lipschitz(l)
    }

    #[test]
    fn zero_maps_send_everything_to_origin() {
        let spec = make_zero_dynamics::<f64>(2);
        let s = DataState {
            x: vec![0.3, -0.2],
            z: 0.5,
            y: 0.1,
            k: 4,
        };
        let mut rng = rng_from_seed(0);
        let next = step_data(&s, &spec, &mut rng).unwrap();
        assert_eq!(
            next,
            DataState {
                x: vec![0.0, 0.0],
                z: 0.0,
                y: 0.0,
                k: 5
            }
        );
    }

    #[test]
    fn rotation_matrix_entries() {
        let a = rotation_tanh_matrix::<f64>();
        let off = 3f64.sqrt() / 8.0;
        assert!((a[0][0] - 0.875).abs() < 1e-15);
        assert!((a[1][1] - 0.625).abs() < 1e-15);
        assert!((a[0][1] + off).abs() < 1e-15);
        assert!((a[1][0] + off).abs() < 1e-15);
        assert_eq!(make_builtin_rotation_tanh::<f64>().d, 1);
    }

    #[test]
    fn origin_is_fixed_point() {
        let spec = make_builtin_rotation_tanh::<f64>().with_output_noise(Noise::None);
        let mut s = spec.origin();
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            s = step_data(&s, &spec, &mut rng).unwrap();
            assert_eq!((s.x[0], s.z, s.y), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn long_path_stays_in_unit_ball() {
        let spec = make_builtin_rotation_tanh::<f64>();
        let start = DataState {
            x: vec![0.5],
            z: 0.5,
            y: 0.0,
            k: 0,
        };
        let mut stream = DataStream::from_state(spec, start, 3);
        for _ in 0..10_000 {
            let s = stream.advance().unwrap();
            assert!(s.joint_norm() <= 1.0);
        }
    }

    #[test]
    fn iterates_converge_to_origin() {
        let spec = make_builtin_rotation_tanh::<f64>();
        for seed in 0..100 {
            let mut stream = DataStream::new(spec.clone(), seed);
            for _ in 0..60 {
                stream.advance().unwrap();
            }
            assert!(stream.state().joint_norm() < 1e-15);
        }
    }

    #[test]
    fn noise_free_paths_contract_at_lipschitz_rate() {
        let spec = make_builtin_rotation_tanh::<f64>();
        let lg = 0.5f64;
        let mut a = DataStream::from_state(
            spec.clone(),
            DataState {
                x: vec![0.7],
                z: -0.6,
                y: 0.0,
                k: 0,
            },
            9,
        );
        let mut b = DataStream::from_state(
            spec,
            DataState {
                x: vec![-0.2],
                z: 0.1,
                y: 0.0,
                k: 0,
            },
            9,
        );
        let gap0 = ((0.9f64).powi(2) + 0.7f64.powi(2)).sqrt();
        for k in 1..40 {
            let sa = a.advance().unwrap().clone();
            let sb = b.advance().unwrap();
            let gap = ((sa.x[0] - sb.x[0]).powi(2) + (sa.z - sb.z).powi(2)).sqrt();
            assert!(gap <= lg.powi(k) * gap0 + 1e-300, "step {k}");
        }
    }

    #[test]
    fn noisy_path_respects_bounds_and_is_reproducible() {
        let spec = make_builtin_rotation_tanh::<f64>()
            .with_state_noise(Noise::Uniform { half_width: 0.25 });
        spec.validate().unwrap();
        let mut a = DataStream::new(spec.clone(), 5);
        let mut b = DataStream::new(spec.clone(), 5);
        for _ in 0..100_000 {
            let sa = a.advance().unwrap().clone();
            let sb = b.advance().unwrap();
            assert_eq!(&sa, sb);
            assert!(sa.joint_norm() <= 1.0 && sa.y.abs() <= spec.c_y());
        }
    }

    #[test]
    fn invariant_violation_is_a_configuration_error() {
        let spec =
            make_builtin_rotation_tanh::<f64>().with_state_noise(Noise::Rademacher { scale: 0.9 });
        assert!(spec.validate().is_err());
        let mut rng = rng_from_seed(0);
        let s = spec.origin();
        assert!(matches!(
            step_data(&s, &spec, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn assumption_report_examples() {
        let act = Activation::<f64>::logistic();
        let r = validate_assumptions(&with_l(0.5), &act);
        assert!((r.q0 - 0.75f64.sqrt()).abs() < 1e-15);
        assert!(r.passes(), "{:?}", r.failures());
        let r = validate_assumptions(&with_l(0.9), &act);
        assert!(!r.flags.c_sigma_clause);
        assert!(!r.passes());
        let z = make_zero_dynamics::<f64>(1);
        let flat = Activation::<f64>::scaled_logistic(1e-300).unwrap();
        let r = validate_assumptions(&z, &flat);
        assert!(r.q0 < 1e-299);
        let builtin =
            validate_assumptions(&make_builtin_rotation_tanh::<f64>(), &act).with_window(0.75, 0.1);
        assert!(builtin.passes(), "{:?}", builtin.failures());
        assert!(!builtin.with_window(0.75, 0.2).passes());
    }

    #[test]
    fn mixing_steps_from_geometric_bound() {
        let act = Activation::<f64>::logistic();
        let r = validate_assumptions(&with_l(0.5), &act);
        assert_eq!(r.mixing_steps(1e-6), Some(97));
    }
}
