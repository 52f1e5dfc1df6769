//! Largest parameter drift from initialization over a training run.

use mflab_core::network::{init_params, run_training, TrainOptions};

use super::{data_seed, fmt, fmt_list, mean, par_map, params_seed, slope};
use crate::config::Config;
use crate::output::OutDir;
use crate::{strictly_decreasing, HarnessError, Report};

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let mut items = Vec::new();
    for &n in &cfg.n_grid {
        for s in 0..cfg.seeds {
            items.push((n, s));
        }
    }
    let results = par_map(cfg.jobs, items, |(n, s)| {
        let model = cfg.model_config(n, spec.d, params_seed(cfg, s))?;
        let init = init_params(&model, &cfg.lambda_spec())?;
        let opts = TrainOptions {
            keep_records: true,
            ..TrainOptions::default()
        };
        let log = run_training(&model, init, &spec, cfg.horizon, data_seed(cfg, s), &opts)?;
        let max = log.records.iter().map(|r| r.max_drift).fold(0.0, f64::max);
        Ok((n, s, max, if s == 0 { Some(log.records) } else { None }))
    })?;

    let mut report = Report::new(cfg.experiment);
    let mut csv = out.csv("drift.csv", &["N", "seed", "steps", "max_drift"])?;
    for (n, s, max, _) in &results {
        let steps = (*n as f64 * cfg.horizon).floor() as u64;
        csv.row([n.to_string(), s.to_string(), steps.to_string(), fmt(*max)])?;
    }
    report.files.push(csv.finish()?);

    for (n, _, _, records) in &results {
        let Some(records) = records else { continue };
        let mut log = out.csv(
            &format!("train_log_N{n}.csv"),
            &["k", "t", "y_hat", "y", "loss", "mean_feedback", "max_drift"],
        )?;
        for r in records {
            log.row([
                r.k.to_string(),
                fmt(r.t),
                fmt(r.y_hat),
                fmt(r.y),
                fmt(r.loss),
                fmt(r.mean_feedback),
                fmt(r.max_drift),
            ])?;
        }
        report.files.push(log.finish()?);
    }

    let means: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            let v: Vec<f64> = results.iter().filter(|r| r.0 == n).map(|r| r.2).collect();
            mean(&v)
        })
        .collect();
    let points: Vec<(f64, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| n as f64)
        .zip(means.iter().copied())
        .collect();
    let fit = slope(&points)?;
    let theory = -(1.0 - cfg.model.beta - cfg.model.gamma);
    let bound = theory + 0.3;
    let mut fcsv = out.csv(
        "drift_fit.csv",
        &["slope", "intercept", "r_squared", "theory", "bound"],
    )?;
    fcsv.row([
        fmt(fit.slope),
        fmt(fit.intercept),
        fmt(fit.r_squared),
        fmt(theory),
        fmt(bound),
    ])?;
    report.files.push(fcsv.finish()?);

    report.record("slope", fit.slope);
    report.check(
        "drift_slope",
        fit.slope <= bound,
        format!(
            "fitted slope {:.4} <= {bound:.4} (theory {theory:.4})",
            fit.slope
        ),
    );
    report.check(
        "drift_decreasing",
        strictly_decreasing(&means),
        format!("mean max drift per width {}", fmt_list(&means)),
    );
    Ok(report)
}
