//! The experiment suites. Each takes a resolved [`Config`], writes its CSVs and
//! returns the checks it asserted.

mod drift;
mod ergodicity;
mod gamma_rates;
mod increment;
mod ntk;
mod ode;
mod validate;

use mflab_core::{derive_seed, fit_rate, MeasureSample, RateFit};
use rayon::prelude::*;

use crate::config::{Config, Experiment};
use crate::output::OutDir;
use crate::{HarnessError, Report};

const TAG_PARAMS: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_LAMBDA: u64 = 3;
const TAG_MU: u64 = 4;

/// Seed of the network initialization for repetition `s`. Width is not mixed
/// in: λ-sampling is prefix-stable, so the widths of one repetition share
/// their first units.
pub fn params_seed(cfg: &Config, s: usize) -> u64 {
    derive_seed(cfg.seed, &[TAG_PARAMS, s as u64])
}

/// Seed of data path `p`, shared across widths.
pub fn data_seed(cfg: &Config, p: usize) -> u64 {
    derive_seed(cfg.seed, &[TAG_DATA, p as u64])
}

pub fn lambda_seed(cfg: &Config) -> u64 {
    derive_seed(cfg.seed, &[TAG_LAMBDA])
}

pub fn mu_seed(cfg: &Config) -> u64 {
    derive_seed(cfg.seed, &[TAG_MU])
}

/// Validates the configuration and runs the experiment it names.
pub fn run(cfg: &Config) -> Result<Report, HarnessError> {
    let note = preflight(cfg)?;
    let out = OutDir::create(cfg, note.as_deref())?;
    let mut report = match cfg.experiment {
        Experiment::Ergodicity => ergodicity::run(cfg, &out)?,
        Experiment::Drift => drift::run(cfg, &out)?,
        Experiment::GammaRates => gamma_rates::run(cfg, &out)?,
        Experiment::Increment => increment::run(cfg, &out)?,
        Experiment::Ntk => ntk::run(cfg, &out)?,
        Experiment::Ode => ode::run(cfg, &out)?,
        Experiment::Validate => validate::run(cfg, &out)?,
    };
    let mut f = out.csv("checks.csv", &["check", "passed", "detail"])?;
    for c in &report.checks {
        f.row([
            c.name.as_str(),
            if c.passed { "true" } else { "false" },
            c.detail.as_str(),
        ])?;
    }
    report.files.push(f.finish()?);
    Ok(report)
}

/// Rejects invalid windows and failed assumptions; with the override flag set,
/// returns the failed clauses for the output headers instead.
fn preflight(cfg: &Config) -> Result<Option<String>, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    cfg.model_config(cfg.n_grid[0], spec.d, 0)?;
    cfg.lambda_spec().validate()?;
    if cfg.experiment == Experiment::Validate {
        return Ok(None);
    }
    let report = cfg.assumption_report()?;
    if report.passes() {
        return Ok(None);
    }
    let failed = report.failures().join("; ");
    if cfg.allow_assumption_violation {
        log::warn!("running with failed assumptions: {failed}");
        Ok(Some(failed))
    } else {
        Err(HarnessError::Config(format!(
            "assumptions fail ({failed}); q0 = {:.6}. Pass --allow-assumption-violation to run anyway",
            report.q0
        )))
    }
}

/// Maps `f` over `items` on a pool of `jobs` threads, keeping input order.
pub(crate) fn par_map<I, O, F>(jobs: usize, items: Vec<I>, f: F) -> Result<Vec<O>, HarnessError>
where
    I: Send,
    O: Send,
    F: Fn(I) -> Result<O, HarnessError> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

pub(crate) fn sample_lambda_for(
    cfg: &Config,
    d: usize,
) -> Result<MeasureSample<f64>, HarnessError> {
    Ok(cfg
        .lambda_spec()
        .sample(cfg.lambda.samples, d, lambda_seed(cfg))?)
}

/// Log-log slope: least squares with three or more widths, the two-point slope otherwise.
pub(crate) fn slope(points: &[(f64, f64)]) -> Result<RateFit<f64>, HarnessError> {
    if points.len() >= 3 {
        return Ok(fit_rate(points)?);
    }
    match points {
        [(n0, v0), (n1, v1)] if *n0 > 0.0 && *n1 > 0.0 && *v0 > 0.0 && *v1 > 0.0 && n0 != n1 => {
            let slope = (v1.ln() - v0.ln()) / (n1.ln() - n0.ln());
            Ok(RateFit {
                slope,
                intercept: v0.ln() - slope * n0.ln(),
                r_squared: 1.0,
            })
        }
        _ => Err(HarnessError::Config(format!(
            "a rate needs two distinct positive widths with positive values, got {points:?}"
        ))),
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}
