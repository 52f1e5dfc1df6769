//! Numerics for wide recurrent networks trained online on Markovian data:
//! the finite-width network and trainer, its mean-field auxiliary processes,
//! and the kernel limit equation.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

pub mod activation;
pub mod clip;
pub mod dynamics;
pub mod error;
pub mod function;
pub mod limit_ode;
pub mod meanfield;
pub mod measure;
pub mod network;
pub mod rate;
pub mod rng;
pub mod scalar;
pub mod sobolev;
pub mod wasserstein;

pub use activation::{act_eval, Activation, ActivationKind};
pub use clip::{clip_deriv, clip_eval, ClipSpec};
pub use dynamics::{
    make_builtin_rotation_tanh, make_zero_dynamics, step_data, validate_assumptions,
    AssumptionReport, DataState, DataStream, DynamicsSpec, FMap, GMap, Noise,
};
pub use error::{Error, Result};
pub use function::FuncH;
pub use measure::{feedback_integral, sample_lambda, LambdaSpec, MeasureSample, MeasureSource};
pub use network::{BUpdateRule, ModelConfig, ParamSet, Trainer};
pub use rate::{fit_rate, RateFit};
pub use rng::{derive_seed, rng_from_seed, SimRng};
pub use scalar::Scalar;
pub use sobolev::h1_distance_sq;
pub use wasserstein::wasserstein1;

pub type Activation64 = Activation<f64>;
pub type ClipSpec64 = ClipSpec<f64>;
pub type DynamicsSpec64 = DynamicsSpec<f64>;
pub type DataState64 = DataState<f64>;
pub type FuncH64 = FuncH<f64>;
pub type MeasureSample64 = MeasureSample<f64>;
pub type ModelConfig64 = ModelConfig<f64>;
pub type ParamSet64 = ParamSet<f64>;
pub type Trainer64 = Trainer<f64>;
pub type KernelGram64 = limit_ode::KernelGram<f64>;
pub type StationarySample64 = limit_ode::StationarySample<f64>;
