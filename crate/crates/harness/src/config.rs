//! Experiment configuration: per-experiment defaults, a TOML file layered on
//! top, then command-line overrides.

use std::path::{Path, PathBuf};

use mflab_core::activation::Activation;
use mflab_core::dynamics::{
    make_builtin_rotation_tanh, make_zero_dynamics, validate_assumptions, AssumptionReport,
};
use mflab_core::limit_ode::Harvest;
use mflab_core::network::{BUpdateRule, ModelConfig};
use mflab_core::{DynamicsSpec, FMap, FuncH, LambdaSpec, Noise};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Ergodicity,
    Drift,
    GammaRates,
    Increment,
    Ntk,
    Ode,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ergodicity => "ergodicity",
            Experiment::Drift => "drift",
            Experiment::GammaRates => "gamma-rates",
            Experiment::Increment => "increment",
            Experiment::Ntk => "ntk",
            Experiment::Ode => "ode",
            Experiment::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    /// Base seed; every stream is derived from it.
    pub seed: u64,
    /// Independent repetitions per width.
    pub seeds: usize,
    pub n_grid: Vec<usize>,
    /// Rescaled training horizon `T` (steps `⌊N T⌋`).
    pub horizon: f64,
    /// Step count for the untrained-memory experiment.
    pub steps: u64,
    /// Data paths for the untrained-memory experiment.
    pub paths: usize,
    /// Distinct data paths shared round-robin by the seeds of the rate experiment.
    pub data_paths: usize,
    pub out: PathBuf,
    pub jobs: usize,
    pub allow_assumption_violation: bool,
    pub model: ModelSection,
    pub dynamics: DynamicsSection,
    pub lambda: LambdaSection,
    pub test_functions: TestFunctionSection,
    pub ode: OdeSection,
    pub ergodicity: ErgodicitySection,
    pub gamma_rates: GammaRatesSection,
    pub ntk: NtkSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub activation: ActivationSection,
    pub b_rule: BRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationSection {
    Logistic,
    ScaledLogistic { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BRule {
    Gradient,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// `rotation_tanh` or `zero`.
    pub name: String,
    /// Overrides the recorded joint Lipschitz constant.
    pub lipschitz: Option<f64>,
    pub state_noise: NoiseSection,
    pub output_noise: NoiseSection,
    /// Coefficients of the linear output map over `(x, z)`.
    pub f_coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSection {
    None,
    Uniform { half_width: f64 },
    Rademacher { scale: f64 },
}

impl NoiseSection {
    fn to_noise(self) -> Noise<f64> {
        match self {
            NoiseSection::None => Noise::None,
            NoiseSection::Uniform { half_width } => Noise::Uniform { half_width },
            NoiseSection::Rademacher { scale } => Noise::Rademacher { scale },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    pub c_max: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub w_var: f64,
    /// Size of the fixed λ-sample used for mean-field integrals.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSection {
    pub count: usize,
    /// Norm of the ridge directions.
    pub scale: f64,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    /// Stationary sample size.
    pub m: usize,
    pub stride: u64,
    /// Mixing tolerance that sets the minimum burn-in.
    pub tol: f64,
    /// Burn-in; `None` uses the minimum from the mixing bound.
    pub burn_in: Option<u64>,
    pub dt: f64,
    pub horizon: f64,
    pub harvest: HarvestSection,
    /// Sub-sample size for the closed-form comparison.
    pub oracle_m: usize,
    /// Also write `u(t)` in wide format and the Gram matrix.
    pub dump: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestSection {
    SingleChain,
    Restarts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicitySection {
    pub bins: usize,
    /// Time-average evaluation points per decade (doublings of `steps` are always included).
    pub points_per_decade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaRatesSection {
    /// λ entries used for the H¹ estimates.
    pub h1_samples: usize,
    /// H¹ estimates per run.
    pub h1_snapshots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkSection {
    /// Seeds for the initialization-term RMS.
    pub init_seeds: usize,
}

impl Config {
    pub fn defaults_for(experiment: Experiment) -> Self {
        let mut cfg = Config {
            experiment,
            seed: 20240501,
            seeds: 10,
            n_grid: vec![200, 800, 3200],
            horizon: 1.0,
            steps: 5000,
            paths: 20,
            data_paths: 5,
            out: PathBuf::from("out").join(experiment.name()),
            jobs: 1,
            allow_assumption_violation: false,
            model: ModelSection {
                beta: 0.75,
                gamma: 0.1,
                alpha: 1.0,
                activation: ActivationSection::Logistic,
                b_rule: BRule::Gradient,
            },
            dynamics: DynamicsSection {
                name: "rotation_tanh".into(),
                lipschitz: None,
                state_noise: NoiseSection::Uniform { half_width: 0.25 },
                output_noise: NoiseSection::Uniform { half_width: 0.05 },
                f_coeffs: None,
            },
            lambda: LambdaSection {
                c_max: 1.0,
                b_lo: 0.0,
                b_hi: 1.0,
                w_var: 1.0,
                samples: 100_000,
            },
            test_functions: TestFunctionSection {
                count: 8,
                scale: 0.9,
                offsets: vec![-1.0, -0.25, 0.25, 1.0],
            },
            ode: OdeSection {
                m: 256,
                stride: 10,
                tol: 1e-6,
                burn_in: None,
                dt: 0.01,
                horizon: 10.0,
                harvest: HarvestSection::SingleChain,
                oracle_m: 32,
                dump: false,
            },
            ergodicity: ErgodicitySection {
                bins: 200,
                points_per_decade: 20,
            },
            gamma_rates: GammaRatesSection {
                h1_samples: 2000,
                h1_snapshots: 10,
            },
            ntk: NtkSection { init_seeds: 400 },
        };
        match experiment {
            Experiment::Ergodicity => {
                cfg.n_grid = vec![100, 1000, 10_000];
                cfg.paths = 20;
                cfg.steps = 5000;
            }
            Experiment::Drift => {
                cfg.n_grid = vec![200, 800, 3200];
                cfg.seeds = 10;
                cfg.horizon = 1.0;
            }
            Experiment::GammaRates => {
                cfg.n_grid = vec![100, 400, 1600, 6400];
                cfg.seeds = 50;
                cfg.horizon = 0.5;
            }
            Experiment::Increment => {
                cfg.n_grid = vec![100, 1000];
                cfg.seeds = 5;
                cfg.horizon = 1.0;
            }
            Experiment::Ntk => {
                cfg.n_grid = vec![500, 2000, 8000];
                cfg.seeds = 20;
                cfg.horizon = 1.0;
            }
            Experiment::Ode | Experiment::Validate => {}
        }
        cfg
    }

    /// Defaults, then the file (if any), then `overrides` (`key.path = value`).
    pub fn load(
        experiment: Experiment,
        file: Option<&Path>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, HarnessError> {
        let defaults = Config::defaults_for(experiment);
        let mut merged =
            toml::Value::try_from(&defaults).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("reading {}: {e}", path.display())))?;
            let user: toml::Table = text
                .parse()
                .map_err(|e| HarnessError::Config(format!("parsing {}: {e}", path.display())))?;
            if let Some(exp) = user.get("experiment") {
                if exp.as_str() != Some(experiment.name()) {
                    return Err(HarnessError::Config(format!(
                        "config file is for experiment {exp}, not {}",
                        experiment.name()
                    )));
                }
            }
            merge(&mut merged, toml::Value::Table(user));
        }
        for (key, value) in overrides {
            set_path(&mut merged, key, value.clone())?;
        }
        let cfg: Config = merged
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    fn check_shape(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n_grid must be a non-empty list of positive widths");
        }
        if self.seeds == 0 || self.paths == 0 || self.data_paths == 0 || self.jobs == 0 {
            return bad("seeds, paths, data_paths and jobs must be positive");
        }
        if !(self.horizon >= 0.0) || !(self.ode.horizon >= 0.0) {
            return bad("horizons must be non-negative");
        }
        if self.test_functions.offsets.is_empty()
            || !(self.test_functions.scale > 0.0 && self.test_functions.scale <= 1.0)
        {
            return bad("test functions need offsets and a direction scale in (0, 1]");
        }
        if self.lambda.samples == 0 || self.ode.m == 0 || self.ode.oracle_m == 0 {
            return bad("sample sizes must be positive");
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config, ignoring `out` and `jobs`, which do not
    /// affect results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = PathBuf::new();
        canon.jobs = 1;
        hex::encode(Sha256::digest(canon.to_toml().as_bytes()))
    }

    pub fn activation(&self) -> Result<Activation<f64>, HarnessError> {
        Ok(match self.model.activation {
            ActivationSection::Logistic => Activation::logistic(),
            ActivationSection::ScaledLogistic { scale } => Activation::scaled_logistic(scale)?,
        })
    }

    pub fn dynamics_spec(&self) -> Result<DynamicsSpec<f64>, HarnessError> {
        let mut spec = match self.dynamics.name.as_str() {
            "rotation_tanh" => make_builtin_rotation_tanh(),
            "zero" => make_zero_dynamics(1),
            other => return Err(HarnessError::Config(format!("unknown dynamics {other:?}"))),
        };
        spec = spec
            .with_state_noise(self.dynamics.state_noise.to_noise())
            .with_output_noise(self.dynamics.output_noise.to_noise());
        if let Some(l) = self.dynamics.lipschitz {
            spec = spec.with_lipschitz(l);
        }
        if let Some(coeffs) = &self.dynamics.f_coeffs {
            spec.f_map = FMap::Linear {
                coeffs: coeffs.clone(),
            };
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn lambda_spec(&self) -> LambdaSpec {
        LambdaSpec {
            c_max: self.lambda.c_max,
            b_lo: self.lambda.b_lo,
            b_hi: self.lambda.b_hi,
            w_var: self.lambda.w_var,
        }
    }

    pub fn model_config(
        &self,
        n: usize,
        d: usize,
        seed: u64,
    ) -> Result<ModelConfig<f64>, HarnessError> {
        let cfg = ModelConfig {
            n,
            d,
            beta: self.model.beta,
            gamma: self.model.gamma,
            alpha: self.model.alpha,
            seed,
            act: self.activation()?,
            b_rule: match self.model.b_rule {
                BRule::Gradient => BUpdateRule::Gradient,
                BRule::AsPrinted => BUpdateRule::AsPrinted,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn harvest(&self) -> Harvest {
        match self.ode.harvest {
            HarvestSection::SingleChain => Harvest::SingleChain,
            HarvestSection::Restarts => Harvest::Restarts,
        }
    }

    pub fn assumption_report(&self) -> Result<AssumptionReport<f64>, HarnessError> {
        let spec = self.dynamics_spec()?;
        Ok(validate_assumptions(&spec, &self.activation()?)
            .with_window(self.model.beta, self.model.gamma))
    }

    /// `count` ridge functions `w ↦ σ(wᵀa + b)` with `|a| = scale`; directions
    /// alternate in sign for `d = 1` and cycle through coordinate axes
    /// otherwise; offsets cycle every two functions.
    pub fn test_functions(&self, d: usize) -> Vec<FuncH<f64>> {
        let tf = &self.test_functions;
        (0..tf.count)
            .map(|i| {
                let mut a = vec![0.0; d];
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                a[(i / 2) % d] = sign * tf.scale;
                let b = tf.offsets[(i / 2) % tf.offsets.len()];
                FuncH::Logistic { a, b }
            })
            .collect()
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| {
            HarnessError::Config(format!("override {key}: {part} is not a table"))
        })?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| HarnessError::Config(format!("override {key}: parent is not a table")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to
/// a bare string.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value), HarnessError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for e in [Experiment::Ergodicity, Experiment::Ntk, Experiment::Ode] {
            let cfg = Config::defaults_for(e);
            let back: Config = toml::from_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seeds = 3\n[model]\nalpha = 0.5\n[dynamics.state_noise]\nkind = \"none\"\n",
        )
        .unwrap();
        let ov = vec![
            parse_override("model.alpha=0.25").unwrap(),
            parse_override("n_grid=[10, 20]").unwrap(),
        ];
        let cfg = Config::load(Experiment::Drift, Some(&path), &ov).unwrap();
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.model.alpha, 0.25);
        assert_eq!(cfg.model.beta, 0.75);
        assert_eq!(cfg.n_grid, vec![10, 20]);
        assert_eq!(cfg.dynamics.state_noise, NoiseSection::None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let ov = vec![parse_override("model.betta=0.7").unwrap()];
        assert!(matches!(
            Config::load(Experiment::Drift, None, &ov),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::defaults_for(Experiment::Drift);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.jobs = 4;
        b.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn default_assumptions_hold() {
        for e in [
            Experiment::Ergodicity,
            Experiment::GammaRates,
            Experiment::Ntk,
        ] {
            let r = Config::defaults_for(e).assumption_report().unwrap();
            assert!(r.passes(), "{:?}", r.failures());
        }
    }
}
