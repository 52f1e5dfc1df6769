//! Width-`N` recurrent network with a shared feedback scalar and its online
//! SGD / truncated-BPTT (`τ = 1`) trainer.

use crate::activation::Activation;
use crate::clip::ClipSpec;
use crate::dynamics::{beta_gamma_window_ok, DataState, DataStream, DynamicsSpec};
use crate::error::{config, Error, Result};
use crate::function::FuncH;
use crate::meanfield::g_functional;
use crate::measure::{LambdaSpec, MeasureSample, MeasureSource};
use crate::scalar::{dot, Scalar};

/// How the memory weights `B` are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BUpdateRule {
    /// Truncated gradient: `Ŝ^i_k · Σ_ℓ C^ℓ_k ΔŜ^ℓ_{k+1}`.
    #[default]
    Gradient,
    /// `Σ_ℓ C^ℓ_k Ŝ^ℓ_k ΔŜ^ℓ_{k+1}`, the same for every unit.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T> {
    pub n: usize,
    pub d: usize,
    pub beta: T,
    pub gamma: T,
    pub alpha: T,
    pub seed: u64,
    pub act: Activation<T>,
    pub b_rule: BUpdateRule,
}

impl<T: Scalar> ModelConfig<T> {
    /// Defaults: `β = 0.75`, `γ = 0.1`, `α = 1`, standard logistic.
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            beta: T::lit(0.75),
            gamma: T::lit(0.1),
            alpha: T::one(),
            seed,
            act: Activation::logistic(),
            b_rule: BUpdateRule::Gradient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(config("width and input dimension must be positive"));
        }
        if !beta_gamma_window_ok(self.beta, self.gamma) {
            return Err(config(format!(
                "(beta, gamma) = ({}, {}) outside beta in (1/2, 1), gamma in (0, (1 - beta)/2)",
                self.beta, self.gamma
            )));
        }
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(config(format!(
                "learning rate {} must be positive",
                self.alpha
            )));
        }
        Ok(())
    }

    fn n_t(&self) -> T {
        T::from_usize_lossy(self.n)
    }

    /// `α^N = α / N^{2 − 2β}`.
    pub fn learning_rate(&self) -> T {
        self.alpha / self.n_t().powf(T::lit(2.0) - T::lit(2.0) * self.beta)
    }

    /// Output scale `N^{−β}`.
    pub fn output_scale(&self) -> T {
        self.n_t().powf(-self.beta)
    }

    pub fn clip(&self) -> Result<ClipSpec<T>> {
        ClipSpec::new(self.n, self.gamma)
    }

    /// Number of steps `⌊N T⌋` covering rescaled time `T`.
    pub fn steps_for(&self, horizon: T) -> u64 {
        (self.n_t() * horizon).floor().to_u64().unwrap_or(0)
    }
}

/// Trainable parameters with their frozen initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    n: usize,
    d: usize,
    pub c: Vec<T>,
    /// Row-major `N × d`.
    pub w: Vec<T>,
    pub b: Vec<T>,
    c0: Vec<T>,
    w0: Vec<T>,
    b0: Vec<T>,
    seed: u64,
}

impl<T: Scalar> ParamSet<T> {
    pub fn from_measure(m: &MeasureSample<T>) -> Self {
        Self {
            n: m.len(),
            d: m.dim(),
            c: m.c().to_vec(),
            w: m.w().to_vec(),
            b: m.b().to_vec(),
            c0: m.c().to_vec(),
            w0: m.w().to_vec(),
            b0: m.b().to_vec(),
            seed: m.seed(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn w_row(&self, i: usize) -> &[T] {
        &self.w[i * self.d..(i + 1) * self.d]
    }

    pub fn c0(&self) -> &[T] {
        &self.c0
    }

    pub fn w0(&self) -> &[T] {
        &self.w0
    }

    pub fn b0(&self) -> &[T] {
        &self.b0
    }

    /// `λ^N`, the empirical law of the initial parameters.
    pub fn initial_measure(&self) -> MeasureSample<T> {
        MeasureSample::from_parts(
            self.c0.clone(),
            self.w0.clone(),
            self.b0.clone(),
            self.d,
            MeasureSource::LambdaN,
            self.seed,
        )
        .expect("shapes fixed at construction")
    }

    /// `λ^N_k`, the empirical law of the current parameters.
    pub fn current_measure(&self) -> MeasureSample<T> {
        MeasureSample::from_parts(
            self.c.clone(),
            self.w.clone(),
            self.b.clone(),
            self.d,
            MeasureSource::LambdaNk,
            self.seed,
        )
        .expect("shapes fixed at construction")
    }

    /// Shared feedback scalar `(1/N) Σ_j B^j S^j`.
    pub fn feedback(&self, s: &[T]) -> T {
        dot(&self.b, s) / T::from_usize_lossy(self.n)
    }
}

/// `N` i.i.d. triples from `lambda`, seeded by `cfg.seed`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig<T>, lambda: &LambdaSpec) -> Result<ParamSet<T>> {
    cfg.validate()?;
    let m = lambda.sample(cfg.n, cfg.d, cfg.seed)?;
    Ok(ParamSet::from_measure(&m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    pub s: Vec<T>,
    pub k: u64,
}

impl<T: Scalar> HiddenState<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            s: vec![T::zero(); n],
            k: 0,
        }
    }
}

/// `S^i_{k+1} = σ(W^iᵀx + m)` with the shared scalar `m = (1/N) Σ_j B^j S^j_k`.
pub fn memory_step<T: Scalar>(
    p: &ParamSet<T>,
    s: &HiddenState<T>,
    x: &[T],
    act: &Activation<T>,
) -> HiddenState<T> {
    let mut next = s.clone();
    memory_step_in_place(p, &mut next, x, act);
    next
}

/// In-place [`memory_step`]; returns the feedback scalar that was used.
pub fn memory_step_in_place<T: Scalar>(
    p: &ParamSet<T>,
    s: &mut HiddenState<T>,
    x: &[T],
    act: &Activation<T>,
) -> T {
    let m = p.feedback(&s.s);
    for (si, wi) in s.s.iter_mut().zip(p.w.chunks_exact(p.d)) {
        *si = act.value(dot(wi, x) + m);
    }
    s.k += 1;
    m
}

/// `N^{−β} Σ_i C^i S^i`.
pub fn predict<T: Scalar>(p: &ParamSet<T>, s_next: &HiddenState<T>, cfg: &ModelConfig<T>) -> T {
    cfg.output_scale() * dot(&p.c, &s_next.s)
}

/// Per-step quantities exposed for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub k: u64,
    pub y_hat: T,
    pub y: T,
    /// `½ (Ŷ − Y)²`.
    pub loss: T,
    /// `ψ^N(Ŷ) − Y`.
    pub residual: T,
    /// `(1/N) Σ_j B^j_k Ŝ^j_k`.
    pub feedback: T,
}

/// Buffers reused across steps.
#[derive(Debug, Clone, Default)]
pub struct StepScratch<T> {
    /// `ΔŜ_{k+1} = σ'(preactivation)`.
    pub ds: Vec<T>,
    prev_s: Vec<T>,
}

/// One step of online SGD with `τ = 1` truncation. Every right-hand side is
/// read from the pre-update parameters; `s` is advanced to `Ŝ_{k+1}` and
/// `scratch.ds` holds `ΔŜ_{k+1}` on return.
pub fn sgd_tbptt_step<T: Scalar>(
    p: &mut ParamSet<T>,
    s: &mut HiddenState<T>,
    data: &DataState<T>,
    cfg: &ModelConfig<T>,
    clip: &ClipSpec<T>,
    scratch: &mut StepScratch<T>,
) -> StepInfo<T> {
    let n = p.n;
    let d = p.d;
    let act = &cfg.act;
    let x = &data.x;
    let nt = T::from_usize_lossy(n);

    scratch.prev_s.clear();
    scratch.prev_s.extend_from_slice(&s.s);
    scratch.ds.resize(n, T::zero());

    let m = p.feedback(&s.s);
    for ((si, dsi), wi) in
        s.s.iter_mut()
            .zip(scratch.ds.iter_mut())
            .zip(p.w.chunks_exact(d))
    {
        let (v, dv) = act.value_d1(dot(wi, x) + m);
        *si = v;
        *dsi = dv;
    }
    s.k += 1;

    let y_hat = cfg.output_scale() * dot(&p.c, &s.s);
    let residual = clip.eval(y_hat) - data.y;
    let lr_c = cfg.alpha / nt.powf(T::lit(2.0) - cfg.beta);
    let lr_b = lr_c / nt;

    let b_shared = match cfg.b_rule {
        BUpdateRule::Gradient => dot(&p.c, &scratch.ds),
        BUpdateRule::AsPrinted => {
            p.c.iter()
                .zip(&scratch.prev_s)
                .zip(&scratch.ds)
                .map(|((&c, &sp), &ds)| c * sp * ds)
                .sum()
        }
    };

    let g = lr_c * residual;
    for i in 0..n {
        let ci = p.c[i];
        let wscale = g * ci * scratch.ds[i];
        for (wij, &xj) in p.w[i * d..(i + 1) * d].iter_mut().zip(x) {
            *wij = *wij - wscale * xj;
        }
        p.c[i] = ci - g * s.s[i];
        let bi = match cfg.b_rule {
            BUpdateRule::Gradient => scratch.prev_s[i] * b_shared,
            BUpdateRule::AsPrinted => b_shared,
        };
        p.b[i] = p.b[i] - lr_b * residual * bi;
    }

    let e = y_hat - data.y;
    StepInfo {
        k: data.k,
        y_hat,
        y: data.y,
        loss: T::lit(0.5) * e * e,
        residual,
        feedback: m,
    }
}

/// Sure bound on `|C^i_{k+1} − C^i_k|`: `(α / N^{2−β}) (2N^γ + C_y)`.
pub fn c_increment_bound<T: Scalar>(cfg: &ModelConfig<T>, c_y: T) -> T {
    let nt = T::from_usize_lossy(cfg.n);
    cfg.alpha / nt.powf(T::lit(2.0) - cfg.beta) * (T::lit(2.0) * nt.powf(cfg.gamma) + c_y)
}

/// Per-unit drift `|C − C₀| + ‖W − W₀‖ + |B − B₀|` and its maximum.
pub fn drift<T: Scalar>(p: &ParamSet<T>) -> (Vec<T>, T) {
    let per: Vec<T> = (0..p.n)
        .map(|i| {
            let dw: T = p.w[i * p.d..(i + 1) * p.d]
                .iter()
                .zip(&p.w0[i * p.d..(i + 1) * p.d])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            (p.c[i] - p.c0[i]).abs() + dw.sqrt() + (p.b[i] - p.b0[i]).abs()
        })
        .collect();
    let max = per.iter().copied().fold(T::zero(), T::max);
    (per, max)
}

pub fn max_drift<T: Scalar>(p: &ParamSet<T>) -> T {
    drift(p).1
}

/// One-step truncated loss `½ (Ŷ − Y)²` with `S_k` held fixed.
fn truncated_loss<T: Scalar>(
    p: &ParamSet<T>,
    s: &[T],
    data: &DataState<T>,
    cfg: &ModelConfig<T>,
) -> T {
    let m = p.feedback(s);
    let y_hat: T =
        p.c.iter()
            .zip(p.w.chunks_exact(p.d))
            .map(|(&c, w)| c * cfg.act.value(dot(w, &data.x) + m))
            .sum::<T>()
            * cfg.output_scale();
    let e = y_hat - data.y;
    T::lit(0.5) * e * e
}

/// Compares the trainer's increments, rescaled by `−1/α^N`, with central finite
/// differences (five-point stencil, step `1e-4`) of the truncated loss. Returns `None` when
/// `|Ŷ| ≥ N^γ`, where clipping makes the comparison meaningless.
pub fn grad_check<T: Scalar>(
    p: &ParamSet<T>,
    s: &HiddenState<T>,
    data: &DataState<T>,
    cfg: &ModelConfig<T>,
) -> Result<Option<T>> {
    let clip = cfg.clip()?;
    let mut after = p.clone();
    let mut s_after = s.clone();
    let mut scratch = StepScratch::default();
    let info = sgd_tbptt_step(&mut after, &mut s_after, data, cfg, &clip, &mut scratch);
    if info.y_hat.abs() >= clip.threshold() {
        return Ok(None);
    }
    if info.residual == T::zero() {
        return Ok(Some(T::zero()));
    }
    let lr = cfg.learning_rate();
    let h = T::lit(1e-4);
    let floor = T::lit(1e-9);
    let mut worst = T::zero();
    let mut probe = p.clone();

    let mut compare = |analytic: T, fd: T| {
        let scale = analytic.abs().max(fd.abs()).max(floor);
        worst = worst.max((analytic - fd).abs() / scale);
    };

    macro_rules! check_field {
        ($field:ident) => {
            for j in 0..p.$field.len() {
                let orig = probe.$field[j];
                let mut at = |off: T| {
                    probe.$field[j] = orig + off;
                    truncated_loss(&probe, &s.s, data, cfg)
                };
                let fd = (at(-(h + h)) - T::lit(8.0) * at(-h) + T::lit(8.0) * at(h) - at(h + h))
                    / (T::lit(12.0) * h);
                probe.$field[j] = orig;
                let analytic = -(after.$field[j] - p.$field[j]) / lr;
                compare(analytic, fd);
            }
        };
    }
    check_field!(c);
    check_field!(w);
    check_field!(b);
    Ok(Some(worst))
}

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord<T> {
    pub k: u64,
    pub t: T,
    pub y_hat: T,
    pub y: T,
    pub loss: T,
    pub mean_feedback: T,
    pub max_drift: T,
}

/// `g^N_k(h)` for each configured test function at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub k: u64,
    pub t: T,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog<T> {
    pub n: usize,
    pub records: Vec<TrainRecord<T>>,
    pub snapshots: Vec<Snapshot<T>>,
    pub params: ParamSet<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions<T> {
    pub test_functions: Vec<FuncH<T>>,
    /// Snapshot period in steps; `None` means `⌈N/50⌉`.
    pub snapshot_every: Option<u64>,
    pub keep_records: bool,
}

impl<T> Default for TrainOptions<T> {
    fn default() -> Self {
        Self {
            test_functions: Vec::new(),
            snapshot_every: None,
            keep_records: true,
        }
    }
}

/// Network, data stream and step counter advancing together.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    cfg: ModelConfig<T>,
    clip: ClipSpec<T>,
    params: ParamSet<T>,
    hidden: HiddenState<T>,
    stream: DataStream<T>,
    scratch: StepScratch<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(cfg: ModelConfig<T>, params: ParamSet<T>, stream: DataStream<T>) -> Result<Self> {
        cfg.validate()?;
        if params.n() != cfg.n || params.d() != cfg.d {
            return Err(Error::LengthMismatch {
                expected: cfg.n * cfg.d,
                got: params.n() * params.d(),
            });
        }
        if stream.spec().d != cfg.d {
            return Err(Error::LengthMismatch {
                expected: cfg.d,
                got: stream.spec().d,
            });
        }
        let clip = cfg.clip()?;
        let hidden = HiddenState::zeros(cfg.n);
        Ok(Self {
            cfg,
            clip,
            params,
            hidden,
            stream,
            scratch: StepScratch::default(),
        })
    }

    pub fn cfg(&self) -> &ModelConfig<T> {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn hidden(&self) -> &HiddenState<T> {
        &self.hidden
    }

    /// The data state the next step will consume.
    pub fn data(&self) -> &DataState<T> {
        self.stream.state()
    }

    /// `ΔŜ_{k+1}` from the last step.
    pub fn last_ds(&self) -> &[T] {
        &self.scratch.ds
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    /// Trains on the current data state, then advances the data process.
    pub fn step(&mut self) -> Result<StepInfo<T>> {
        let info = sgd_tbptt_step(
            &mut self.params,
            &mut self.hidden,
            self.stream.state(),
            &self.cfg,
            &self.clip,
            &mut self.scratch,
        );
        self.stream.advance()?;
        Ok(info)
    }
}

/// Runs `⌊N T⌋` steps from `init` on a data path seeded by `data_seed`.
pub fn run_training<T: Scalar>(
    cfg: &ModelConfig<T>,
    init: ParamSet<T>,
    spec: &DynamicsSpec<T>,
    horizon: T,
    data_seed: u64,
    opts: &TrainOptions<T>,
) -> Result<TrainLog<T>> {
    if !(horizon >= T::zero()) {
        return Err(config(format!("horizon {horizon} must be non-negative")));
    }
    let steps = cfg.steps_for(horizon);
    let every = opts
        .snapshot_every
        .unwrap_or(cfg.n.div_ceil(50) as u64)
        .max(1);
    let nt = T::from_usize_lossy(cfg.n);
    let mut trainer = Trainer::new(cfg.clone(), init, DataStream::new(spec.clone(), data_seed))?;
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let snap = |tr: &Trainer<T>, k: u64| Snapshot {
        k,
        t: T::from_u64(k).unwrap() / nt,
        values: opts
            .test_functions
            .iter()
            .map(|h| g_functional(tr.params(), h, tr.cfg()))
            .collect(),
    };
    if !opts.test_functions.is_empty() && steps > 0 {
        snapshots.push(snap(&trainer, 0));
    }
    for k in 0..steps {
        let info = trainer.step()?;
        if opts.keep_records {
            records.push(TrainRecord {
                k,
                t: T::from_u64(k).unwrap() / nt,
                y_hat: info.y_hat,
                y: info.y,
                loss: info.loss,
                mean_feedback: info.feedback,
                max_drift: max_drift(trainer.params()),
            });
        }
        let done = k + 1;
        if !opts.test_functions.is_empty() && (done % every == 0 || done == steps) {
            snapshots.push(snap(&trainer, done));
        }
    }
    Ok(TrainLog {
        n: cfg.n,
        records,
        snapshots,
        params: trainer.into_params(),
    })
}
