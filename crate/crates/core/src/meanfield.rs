//! Auxiliary memory processes in ridge-function form, their coupled error
//! diagnostics, and the kernels of the limit dynamics.
//!
//! Every process iterate is `w ↦ σ(wᵀX_k + m_k)` for a scalar `m_k`, so a
//! chain only carries `m_k` and the function it produced last.

use crate::activation::Activation;
use crate::dynamics::{DataState, DataStream};
use crate::error::{Error, Result};
use crate::function::FuncH;
use crate::measure::MeasureSample;
use crate::network::{ModelConfig, ParamSet, Trainer};
use crate::scalar::{dot, Scalar};
use crate::sobolev::h1_distance_sq;

/// `⟨b′ h(w′), measure⟩`.
pub fn feedback_of<T: Scalar>(h: &FuncH<T>, measure: &MeasureSample<T>, act: &Activation<T>) -> T {
    match h {
        FuncH::Zero => T::zero(),
        FuncH::Logistic { a, b } => measure.feedback(a, *b, act),
    }
}

/// `ς(x, ·, ·, h) = [w ↦ σ(wᵀx + ⟨b′h, λ⟩)]`.
pub fn varsigma<T: Scalar>(
    data: &DataState<T>,
    h: &FuncH<T>,
    measure: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<FuncH<T>> {
    FuncH::logistic(data.x.clone(), feedback_of(h, measure, act))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainTag {
    /// Trained parameters.
    V,
    /// Frozen empirical initialization.
    HN,
    /// Initialization law.
    H,
}

/// State of one auxiliary memory process at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryChainState<T> {
    /// Feedback scalar of the current function.
    pub m: T,
    /// Current function, `w ↦ σ(wᵀX_{k−1} + m_{k−1})`, or zero at `k = 0`.
    pub func: FuncH<T>,
    pub k: u64,
    pub tag: ChainTag,
}

impl<T: Scalar> MemoryChainState<T> {
    pub fn start(tag: ChainTag) -> Self {
        Self {
            m: T::zero(),
            func: FuncH::Zero,
            k: 0,
            tag,
        }
    }

    fn advance(&mut self, x: &[T], m_next: T) {
        self.func = FuncH::Logistic {
            a: x.to_vec(),
            b: self.m,
        };
        self.m = m_next;
        self.k += 1;
    }
}

fn check_tag<T>(state: &MemoryChainState<T>, tag: ChainTag) -> Result<()> {
    if state.tag != tag {
        return Err(Error::Domain(format!(
            "expected a {tag:?} chain, got {:?}",
            state.tag
        )));
    }
    Ok(())
}

/// Limit process: `m_{k+1} = ⟨b σ(wᵀX_k + m_k), λ⟩`.
pub fn step_h<T: Scalar>(
    state: &mut MemoryChainState<T>,
    x: &[T],
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<()> {
    check_tag(state, ChainTag::H)?;
    let next = lambda.feedback(x, state.m, act);
    state.advance(x, next);
    Ok(())
}

/// Frozen-parameter process: `m_{k+1} = (1/N) Σ_i B^i σ(W^iᵀX_k + m_k)` over `λ^N`.
pub fn step_hn<T: Scalar>(
    state: &mut MemoryChainState<T>,
    x: &[T],
    lambda_n: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<()> {
    check_tag(state, ChainTag::HN)?;
    let next = lambda_n.feedback(x, state.m, act);
    state.advance(x, next);
    Ok(())
}

/// Trained process: `m^v_{k+1} = (1/N) Σ_j B_{k+1}^j σ(W_k^jᵀX_k + m^v_k)`.
pub fn step_v<T: Scalar>(
    state: &mut MemoryChainState<T>,
    x: &[T],
    b_next: &[T],
    w_cur: &[T],
    act: &Activation<T>,
) -> Result<()> {
    check_tag(state, ChainTag::V)?;
    let d = x.len();
    if d == 0 || w_cur.len() != b_next.len() * d {
        return Err(Error::LengthMismatch {
            expected: b_next.len() * d,
            got: w_cur.len(),
        });
    }
    let mut acc = T::zero();
    for (&b, w) in b_next.iter().zip(w_cur.chunks_exact(d)) {
        acc = acc + b * act.value(dot(w, x) + state.m);
    }
    let next = acc / T::from_usize_lossy(b_next.len());
    state.advance(x, next);
    Ok(())
}

/// Errors between the three processes at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDiag<T> {
    /// `⟨b′h^N_k, λ^N⟩ − ⟨b′h_k, λ⟩`.
    pub e1: T,
    /// `⟨b′v^N_k, λ^N_k⟩ − ⟨b′h^N_k, λ^N⟩`.
    pub e2: T,
    /// `‖h^N_k − h_k‖²_{H¹(λ)}`, if estimated.
    pub gamma1_h1: Option<T>,
    /// `‖v^N_k − h^N_k‖²_{H¹(λ)}`, if estimated.
    pub gamma2_h1: Option<T>,
    /// `|v^N_k(w) − h_k(w)|` at the requested points.
    pub gamma_at_w: Vec<T>,
}

/// Error diagnostics for chains advanced on the same data path. `h1_measure`
/// (typically a truncation of `λ`) switches on the `H¹` estimates.
pub fn error_diag<T: Scalar>(
    v: &MemoryChainState<T>,
    hn: &MemoryChainState<T>,
    h: &MemoryChainState<T>,
    eval_points: &[Vec<T>],
    h1_measure: Option<&MeasureSample<T>>,
    act: &Activation<T>,
) -> Result<ErrorDiag<T>> {
    check_tag(v, ChainTag::V)?;
    check_tag(hn, ChainTag::HN)?;
    check_tag(h, ChainTag::H)?;
    let (gamma1_h1, gamma2_h1) = match h1_measure {
        Some(m) => (
            Some(h1_distance_sq(&hn.func, &h.func, m, act)?),
            Some(h1_distance_sq(&v.func, &hn.func, m, act)?),
        ),
        None => (None, None),
    };
    let gamma_at_w = eval_points
        .iter()
        .map(|w| (v.func.eval(w, act) - h.func.eval(w, act)).abs())
        .collect();
    Ok(ErrorDiag {
        e1: hn.m - h.m,
        e2: v.m - hn.m,
        gamma1_h1,
        gamma2_h1,
        gamma_at_w,
    })
}

/// A trained network and its three auxiliary processes, all driven by one data path.
#[derive(Debug, Clone)]
pub struct CoupledChains<'a, T> {
    trainer: Trainer<T>,
    lambda: &'a MeasureSample<T>,
    lambda_n: MeasureSample<T>,
    pub v: MemoryChainState<T>,
    pub hn: MemoryChainState<T>,
    pub h: MemoryChainState<T>,
    w_prev: Vec<T>,
}

impl<'a, T: Scalar> CoupledChains<'a, T> {
    pub fn new(
        cfg: ModelConfig<T>,
        params: ParamSet<T>,
        stream: DataStream<T>,
        lambda: &'a MeasureSample<T>,
    ) -> Result<Self> {
        let lambda_n = params.initial_measure();
        Ok(Self {
            trainer: Trainer::new(cfg, params, stream)?,
            lambda,
            lambda_n,
            v: MemoryChainState::start(ChainTag::V),
            hn: MemoryChainState::start(ChainTag::HN),
            h: MemoryChainState::start(ChainTag::H),
            w_prev: Vec::new(),
        })
    }

    pub fn trainer(&self) -> &Trainer<T> {
        &self.trainer
    }

    pub fn lambda_n(&self) -> &MeasureSample<T> {
        &self.lambda_n
    }

    /// One training step plus one step of each process on the same `X_k`.
    pub fn step(&mut self) -> Result<()> {
        let act = self.trainer.cfg().act;
        let x = self.trainer.data().x.clone();
        self.w_prev.clear();
        self.w_prev.extend_from_slice(&self.trainer.params().w);
        self.trainer.step()?;
        step_v(
            &mut self.v,
            &x,
            &self.trainer.params().b,
            &self.w_prev,
            &act,
        )?;
        step_hn(&mut self.hn, &x, &self.lambda_n, &act)?;
        step_h(&mut self.h, &x, self.lambda, &act)?;
        Ok(())
    }

    /// Steps the trainer, `v` and `h^N` only; `m_h` must come from an
    /// externally computed `h` chain on the same path.
    pub fn step_without_h(&mut self) -> Result<()> {
        let act = self.trainer.cfg().act;
        let x = self.trainer.data().x.clone();
        self.w_prev.clear();
        self.w_prev.extend_from_slice(&self.trainer.params().w);
        self.trainer.step()?;
        step_v(
            &mut self.v,
            &x,
            &self.trainer.params().b,
            &self.w_prev,
            &act,
        )?;
        step_hn(&mut self.hn, &x, &self.lambda_n, &act)?;
        self.h.k += 1;
        Ok(())
    }
}

/// Path of the `h` chain: `m_k` for `k = 0..=steps` along a data path.
pub fn h_chain_path<T: Scalar>(
    stream: &mut DataStream<T>,
    steps: u64,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<Vec<T>> {
    let mut state = MemoryChainState::start(ChainTag::H);
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(state.m);
    for _ in 0..steps {
        let x = stream.state().x.clone();
        step_h(&mut state, &x, lambda, act)?;
        stream.advance()?;
        out.push(state.m);
    }
    Ok(out)
}

/// A point of the extended state space: data plus the memory function, with
/// its feedback scalar `m = ⟨b′h, λ⟩` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainH<T> {
    pub data: DataState<T>,
    pub h: FuncH<T>,
    pub m: T,
}

/// `K_{x,λ}(h_test, h)` with `m = ⟨b′h, λ⟩`:
/// `⟨σ(wᵀx + m) h_test(w) + c² σ′(wᵀx + m) ∇h_test(w)ᵀx, λ⟩`.
pub fn kernel_k<T: Scalar>(
    x: &[T],
    m: T,
    h_test: &FuncH<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> T {
    if h_test.is_zero() || lambda.is_empty() {
        return T::zero();
    }
    let d = lambda.dim();
    let mut acc = T::zero();
    for ((w, &c), _) in lambda.w().chunks_exact(d).zip(lambda.c()).zip(lambda.b()) {
        let (s, ds) = act.value_d1(dot(w, x) + m);
        let (hv, hd) = h_test.eval_with_directional(w, x, act);
        acc = acc + s * hv + c * c * ds * hd;
    }
    acc / T::from_usize_lossy(lambda.len())
}

/// `K̃(Hᵢ, Hⱼ) = ⟨σᵢσⱼ + c² σ′ᵢσ′ⱼ xᵢᵀxⱼ, λ⟩` with `σᵢ = σ(wᵀxᵢ + mᵢ)`.
pub fn kernel_tilde<T: Scalar>(
    hi: &ChainH<T>,
    hj: &ChainH<T>,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> T {
    kernel_tilde_raw(&hi.data.x, hi.m, &hj.data.x, hj.m, lambda, act)
}

pub(crate) fn kernel_tilde_raw<T: Scalar>(
    xi: &[T],
    mi: T,
    xj: &[T],
    mj: T,
    lambda: &MeasureSample<T>,
    act: &Activation<T>,
) -> T {
    let d = lambda.dim();
    let xx = dot(xi, xj);
    let mut a = T::zero();
    let mut g = T::zero();
    for (w, &c) in lambda.w().chunks_exact(d).zip(lambda.c()) {
        let (si, dsi) = act.value_d1(dot(w, xi) + mi);
        let (sj, dsj) = act.value_d1(dot(w, xj) + mj);
        a = a + si * sj;
        g = g + c * c * dsi * dsj;
    }
    (a + g * xx) / T::from_usize_lossy(lambda.len())
}

/// `g^N_k(h) = N^{−β} Σ_i C^i h(W^i)`.
pub fn g_functional<T: Scalar>(p: &ParamSet<T>, h_test: &FuncH<T>, cfg: &ModelConfig<T>) -> T {
    if h_test.is_zero() {
        return T::zero();
    }
    let s: T = (0..p.n())
        .map(|i| p.c[i] * h_test.eval(p.w_row(i), &cfg.act))
        .sum();
    cfg.output_scale() * s
}

/// What one training step saw; borrowed from the trainer right after the step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a, T> {
    pub x: &'a [T],
    /// `ψ^N(Ŷ) − Y`.
    pub residual: T,
    /// `Ŝ_{k+1}`.
    pub s_next: &'a [T],
    /// `ΔŜ_{k+1}`.
    pub ds: &'a [T],
}

/// Actual one-step change of `g^N(h)` and its first-order prediction
/// `−(α/N²)(ψ^N(Ŷ) − Y) Σ_i [Ŝ^i_{k+1} h(W^i_k) + (C^i_k)² ΔŜ^i_{k+1} ∇h(W^i_k)ᵀX_k]`.
pub fn increment_delta1<T: Scalar>(
    before: &ParamSet<T>,
    after: &ParamSet<T>,
    ctx: &StepContext<'_, T>,
    h_test: &FuncH<T>,
    cfg: &ModelConfig<T>,
) -> (T, T) {
    if h_test.is_zero() {
        return (T::zero(), T::zero());
    }
    let act = &cfg.act;
    let n = before.n();
    let mut diff = T::zero();
    let mut pred = T::zero();
    for i in 0..n {
        let w0 = before.w_row(i);
        let (h0, dir) = h_test.eval_with_directional(w0, ctx.x, act);
        let h1 = h_test.eval(after.w_row(i), act);
        diff = diff + (after.c[i] * h1 - before.c[i] * h0);
        let c = before.c[i];
        pred = pred + ctx.s_next[i] * h0 + c * c * ctx.ds[i] * dir;
    }
    let nt = T::from_usize_lossy(n);
    let actual = cfg.output_scale() * diff;
    let predicted = -(cfg.alpha / (nt * nt)) * ctx.residual * pred;
    (actual, predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_builtin_rotation_tanh;
    use crate::measure::{sample_lambda, LambdaSpec, MeasureSource};
    use crate::network::{init_params, sgd_tbptt_step, HiddenState, StepScratch};

    fn act() -> Activation<f64> {
        Activation::logistic()
    }

    #[test]
    fn varsigma_of_zero() {
        let lam = sample_lambda::<f64>(100, 1, 0).unwrap();
        let data = DataState {
            x: vec![0.0],
            z: 0.3,
            y: 0.1,
            k: 0,
        };
        let f = varsigma(&data, &FuncH::Zero, &lam, &act()).unwrap();
        assert_eq!(
            f,
            FuncH::Logistic {
                a: vec![0.0],
                b: 0.0
            }
        );
        assert_eq!(f.eval(&[3.0], &act()), 0.5);
    }

    #[test]
    fn first_h_step_from_origin() {
        let lam = sample_lambda::<f64>(1_000_000, 1, 3).unwrap();
        let mut s = MemoryChainState::start(ChainTag::H);
        step_h(&mut s, &[0.0], &lam, &act()).unwrap();
        assert!((s.m - 0.25).abs() < 3.0 * 0.29 * 0.5 / 1000.0);
        let mut hn = MemoryChainState::start(ChainTag::HN);
        assert!(step_h(&mut hn, &[0.0], &lam, &act()).is_err());
    }

    #[test]
    fn zero_b_keeps_feedback_zero() {
        let lam = MeasureSample::from_parts(
            vec![0.5; 4],
            vec![0.1, -0.3, 0.7, 1.2],
            vec![0.0; 4],
            1,
            MeasureSource::Lambda,
            0,
        )
        .unwrap();
        let mut s = MemoryChainState::start(ChainTag::H);
        for k in 0..20 {
            step_h(&mut s, &[0.1 * k as f64 - 1.0], &lam, &act()).unwrap();
            assert_eq!(s.m, 0.0);
        }
    }

    #[test]
    fn single_unit_hn_step() {
        let lam = MeasureSample::from_parts(
            vec![1.0],
            vec![0.0],
            vec![1.0],
            1,
            MeasureSource::LambdaN,
            0,
        )
        .unwrap();
        let mut s = MemoryChainState::start(ChainTag::HN);
        step_hn(&mut s, &[0.7], &lam, &act()).unwrap();
        assert_eq!(s.m, 0.5);
    }

    #[test]
    fn representation_matches_direct_recursion() {
        let lam = sample_lambda::<f64>(2000, 2, 5).unwrap();
        let xs = [[0.3, -0.2], [0.1, 0.6], [-0.5, 0.5]];
        let mut s = MemoryChainState::start(ChainTag::H);
        let mut m_prev = 0.0;
        for x in &xs {
            m_prev = s.m;
            step_h(&mut s, x, &lam, &act()).unwrap();
        }
        let last = xs[2];
        for i in 0..100 {
            let w = lam.w_row(i);
            let direct = act().value(w[0] * last[0] + w[1] * last[1] + m_prev);
            assert!((s.func.eval(w, &act()) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_k_special_cases() {
        let lam = sample_lambda::<f64>(5000, 1, 1).unwrap();
        assert_eq!(kernel_k(&[0.4], 0.2, &FuncH::Zero, &lam, &act()), 0.0);
        let h = FuncH::logistic(vec![0.9], -0.25).unwrap();
        let at0 = kernel_k(&[0.0], 0.3, &h, &lam, &act());
        let direct: f64 = (0..lam.len())
            .map(|i| act().value(0.3) * h.eval(lam.w_row(i), &act()))
            .sum::<f64>()
            / 5000.0;
        assert!((at0 - direct).abs() < 1e-14);
        let v = kernel_k(&[0.7], 0.3, &h, &lam, &act());
        assert!(v.abs() <= 1.0 + act().c_sigma());
    }

    #[test]
    fn kernel_tilde_matches_kernel_k_and_is_symmetric() {
        let lam = sample_lambda::<f64>(3000, 1, 2).unwrap();
        let hi = ChainH {
            data: DataState {
                x: vec![0.4],
                z: 0.0,
                y: 0.0,
                k: 0,
            },
            h: FuncH::Zero,
            m: 0.2,
        };
        let hj = ChainH {
            data: DataState {
                x: vec![-0.6],
                z: 0.0,
                y: 0.0,
                k: 0,
            },
            h: FuncH::Zero,
            m: 0.35,
        };
        let kij = kernel_tilde(&hi, &hj, &lam, &act());
        assert_eq!(kij, kernel_tilde(&hj, &hi, &lam, &act()));
        let s_i = FuncH::logistic(vec![0.4], 0.2).unwrap();
        let via_k = kernel_k(&[-0.6], 0.35, &s_i, &lam, &act());
        assert!((kij - via_k).abs() < 1e-14);
        assert!(kernel_tilde(&hi, &hi, &lam, &act()) >= 0.0);
    }

    #[test]
    fn g_functional_zero_cases() {
        let cfg = ModelConfig::<f64>::new(10, 1, 0);
        let mut p = init_params(&cfg, &LambdaSpec::default()).unwrap();
        assert_eq!(g_functional(&p, &FuncH::Zero, &cfg), 0.0);
        p.c.iter_mut().for_each(|c| *c = 0.0);
        let h = FuncH::logistic(vec![0.9], 1.0).unwrap();
        assert_eq!(g_functional(&p, &h, &cfg), 0.0);
    }

    #[test]
    fn frozen_chains_coincide_and_start_at_zero() {
        let cfg = ModelConfig::<f64>::new(30, 1, 7);
        let mut p = init_params(&cfg, &LambdaSpec::default()).unwrap();
        let lam_n = p.initial_measure();
        let mut v = MemoryChainState::start(ChainTag::V);
        let mut hn = MemoryChainState::start(ChainTag::HN);
        let lam = sample_lambda::<f64>(100, 1, 0).unwrap();
        let h = MemoryChainState::start(ChainTag::H);
        let diag = error_diag(&v, &hn, &h, &[vec![0.1], vec![0.2]], Some(&lam), &act()).unwrap();
        assert_eq!((diag.e1, diag.e2), (0.0, 0.0));
        let mut stream = DataStream::new(make_builtin_rotation_tanh(), 4);
        for _ in 0..50 {
            let x = stream.state().x.clone();
            step_v(&mut v, &x, &p.b, &p.w, &act()).unwrap();
            step_hn(&mut hn, &x, &lam_n, &act()).unwrap();
            assert_eq!(v.m, hn.m);
            assert!(hn.m.abs() <= 1.0);
            stream.advance().unwrap();
        }
        p.b.pop();
        assert!(step_v(&mut v, &[0.0], &p.b, &p.w, &act()).is_err());
    }

    #[test]
    fn increment_hand_oracle() {
        let mut cfg = ModelConfig::<f64>::new(4, 1, 0);
        cfg.alpha = 0.7;
        let lam = MeasureSample::from_parts(
            vec![0.5, -0.3, 0.8, -0.9],
            vec![0.2, -1.1, 0.4, 0.9],
            vec![0.1, 0.6, 0.3, 0.9],
            1,
            MeasureSource::LambdaN,
            0,
        )
        .unwrap();
        let before = ParamSet::from_measure(&lam);
        let mut after = before.clone();
        let mut s = HiddenState {
            s: vec![0.3, 0.6, 0.2, 0.9],
            k: 1,
        };
        let data = DataState {
            x: vec![0.45],
            z: 0.1,
            y: 0.12,
            k: 1,
        };
        let mut scratch = StepScratch::default();
        let info = sgd_tbptt_step(
            &mut after,
            &mut s,
            &data,
            &cfg,
            &cfg.clip().unwrap(),
            &mut scratch,
        );
        let h = FuncH::logistic(vec![-0.8], 0.25).unwrap();
        let ctx = StepContext {
            x: &data.x,
            residual: info.residual,
            s_next: &s.s,
            ds: &scratch.ds,
        };
        let (actual, predicted) = increment_delta1(&before, &after, &ctx, &h, &cfg);

        // Straight-line reference.
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let c = [0.5, -0.3, 0.8, -0.9];
        let w = [0.2, -1.1, 0.4, 0.9];
        let b = [0.1, 0.6, 0.3, 0.9];
        let sk = [0.3, 0.6, 0.2, 0.9];
        let m = (b[0] * sk[0] + b[1] * sk[1] + b[2] * sk[2] + b[3] * sk[3]) / 4.0;
        let nb = 4f64.powf(-0.75);
        let mut yhat = 0.0;
        let mut sn = [0.0; 4];
        let mut dsn = [0.0; 4];
        for i in 0..4 {
            sn[i] = sig(w[i] * 0.45 + m);
            dsn[i] = sn[i] * (1.0 - sn[i]);
            yhat += c[i] * sn[i];
        }
        yhat *= nb;
        let r = yhat - 0.12;
        let lr_c = 0.7 / 4f64.powf(1.25);
        let hf = |wi: f64| sig(-0.8 * wi + 0.25);
        let mut g0 = 0.0;
        let mut g1 = 0.0;
        let mut pred = 0.0;
        for i in 0..4 {
            let c1 = c[i] - lr_c * r * sn[i];
            let w1 = w[i] - lr_c * c[i] * r * dsn[i] * 0.45;
            g0 += c[i] * hf(w[i]);
            g1 += c1 * hf(w1);
            let hv = hf(w[i]);
            pred += sn[i] * hv + c[i] * c[i] * dsn[i] * (hv * (1.0 - hv) * -0.8) * 0.45;
        }
        let actual_ref = nb * (g1 - g0);
        let pred_ref = -(0.7 / 16.0) * r * pred;
        assert!((actual - actual_ref).abs() < 1e-12);
        assert!((predicted - pred_ref).abs() < 1e-12);
        assert!((info.residual - r).abs() < 1e-15);
    }
}
