//! One-step change of `g^N(h)` against its first-order prediction.

use mflab_core::meanfield::{increment_delta1, StepContext};
use mflab_core::network::init_params;
use mflab_core::{DataStream, Trainer};

use super::{data_seed, fmt, fmt_list, mean, par_map, params_seed, slope};
use crate::config::Config;
use crate::output::OutDir;
use crate::{strictly_decreasing, HarnessError, Report};

struct Run {
    n: usize,
    seed: usize,
    /// Per test function: (max |Δg − δ⁽¹⁾g|, max |Δg|).
    per_h: Vec<(f64, f64)>,
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let tests = cfg.test_functions(spec.d);
    let mut items = Vec::new();
    for &n in &cfg.n_grid {
        for s in 0..cfg.seeds {
            items.push((n, s));
        }
    }
    let runs = par_map(cfg.jobs, items, |(n, s)| {
        let model = cfg.model_config(n, spec.d, params_seed(cfg, s))?;
        let init = init_params(&model, &cfg.lambda_spec())?;
        let steps = model.steps_for(cfg.horizon);
        let mut trainer = Trainer::new(
            model.clone(),
            init,
            DataStream::new(spec.clone(), data_seed(cfg, s)),
        )?;
        let mut per_h = vec![(0.0f64, 0.0f64); tests.len()];
        for _ in 0..steps {
            let before = trainer.params().clone();
            let x = trainer.data().x.clone();
            let info = trainer.step()?;
            let ctx = StepContext {
                x: &x,
                residual: info.residual,
                s_next: &trainer.hidden().s,
                ds: trainer.last_ds(),
            };
            for (acc, h) in per_h.iter_mut().zip(&tests) {
                let (actual, predicted) =
                    increment_delta1(&before, trainer.params(), &ctx, h, &model);
                acc.0 = acc.0.max((actual - predicted).abs());
                acc.1 = acc.1.max(actual.abs());
            }
        }
        Ok(Run { n, seed: s, per_h })
    })?;

    let mut report = Report::new(cfg.experiment);
    let mut csv = out.csv(
        "increment.csv",
        &["N", "seed", "h", "max_abs_diff", "max_abs_increment"],
    )?;
    for r in &runs {
        for (j, (d, a)) in r.per_h.iter().enumerate() {
            csv.row([
                r.n.to_string(),
                r.seed.to_string(),
                j.to_string(),
                fmt(*d),
                fmt(*a),
            ])?;
        }
    }
    report.files.push(csv.finish()?);

    // Envelope per width: mean over seeds of the worst test function.
    let env: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.per_h.iter().map(|p| p.0).fold(0.0, f64::max))
                .collect();
            mean(&v)
        })
        .collect();
    let points: Vec<(f64, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| n as f64)
        .zip(env.iter().copied())
        .collect();
    let fit = slope(&points)?;
    let (beta, gamma) = (cfg.model.beta, cfg.model.gamma);
    let theory = -(3.0 - beta - 2.0 * gamma);
    let bound = theory + 0.5;
    let (n0, n1) = (cfg.n_grid[0] as f64, *cfg.n_grid.last().unwrap() as f64);
    let ratio = env[0] / env[env.len() - 1];
    let ratio_needed = (n1 / n0).powf(1.5);

    let mut fcsv = out.csv(
        "increment_fit.csv",
        &[
            "slope",
            "intercept",
            "theory",
            "bound",
            "ratio",
            "ratio_needed",
        ],
    )?;
    fcsv.row([
        fmt(fit.slope),
        fmt(fit.intercept),
        fmt(theory),
        fmt(bound),
        fmt(ratio),
        fmt(ratio_needed),
    ])?;
    report.files.push(fcsv.finish()?);

    report.record("slope", fit.slope);
    report.record("ratio", ratio);
    report.check(
        "increment_slope",
        fit.slope <= bound,
        format!(
            "envelope slope {:.4} <= {bound:.4} (theory {theory:.4}); envelope {}",
            fit.slope,
            fmt_list(&env)
        ),
    );
    report.check(
        "increment_ratio",
        ratio >= ratio_needed && strictly_decreasing(&env),
        format!("envelope ratio N={n0} / N={n1}: {ratio:.4e} >= {ratio_needed:.4e}"),
    );
    Ok(report)
}
