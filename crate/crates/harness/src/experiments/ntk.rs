//! Trained `g^N_t(h)` against the kernel limit `g_t(h)`.

use mflab_core::limit_ode::{kernel_weights, LimitFunctional};
use mflab_core::meanfield::g_functional;
use mflab_core::network::{init_params, run_training, TrainOptions};

use super::ode::{build_limit, solve};
use super::{data_seed, fmt, fmt_list, mean, par_map, params_seed, slope};
use crate::config::Config;
use crate::output::OutDir;
use crate::{non_increasing, HarnessError, Report};

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let act = cfg.activation()?;
    let tests = cfg.test_functions(spec.d);
    let alpha = cfg.model.alpha;

    let limit = build_limit(cfg)?;
    let traj = solve(&limit.gram, alpha, cfg.horizon, cfg.ode.dt)?;
    let functional = LimitFunctional::new(&traj, &limit.gram);
    let weights: Vec<Vec<f64>> = tests
        .iter()
        .map(|h| kernel_weights(&limit.sample, h, &limit.lambda, &act))
        .collect();

    let mut items = Vec::new();
    for &n in &cfg.n_grid {
        for s in 0..cfg.seeds {
            items.push((n, s));
        }
    }
    let runs = par_map(cfg.jobs, items, |(n, s)| {
        let model = cfg.model_config(n, spec.d, params_seed(cfg, s))?;
        let init = init_params(&model, &cfg.lambda_spec())?;
        let opts = TrainOptions {
            test_functions: tests.clone(),
            snapshot_every: None,
            keep_records: false,
        };
        let log = run_training(&model, init, &spec, cfg.horizon, data_seed(cfg, s), &opts)?;
        let mut rows = Vec::with_capacity(log.snapshots.len());
        let mut sup = 0.0f64;
        for snap in &log.snapshots {
            let mut worst = 0.0f64;
            for (v, w) in snap.values.iter().zip(&weights) {
                let g = functional.eval_with_weights(w, snap.t)?;
                worst = worst.max((v - g).abs());
            }
            sup = sup.max(worst);
            rows.push((snap.k, snap.t, worst));
        }
        Ok((n, s, sup, rows))
    })?;

    let mut report = Report::new(cfg.experiment);
    let mut csv = out.csv("ntk.csv", &["N", "seed", "k", "t", "max_abs_error"])?;
    for (n, s, _, rows) in &runs {
        for (k, t, e) in rows {
            csv.row([
                n.to_string(),
                s.to_string(),
                k.to_string(),
                fmt(*t),
                fmt(*e),
            ])?;
        }
    }
    report.files.push(csv.finish()?);

    let mut lcsv = out.csv("ntk_limit.csv", &["t", "h", "g"])?;
    for &t in &traj.times {
        for (j, w) in weights.iter().enumerate() {
            lcsv.row([
                fmt(t),
                j.to_string(),
                fmt(functional.eval_with_weights(w, t)?),
            ])?;
        }
    }
    report.files.push(lcsv.finish()?);

    let errs: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| {
            mean(
                &runs
                    .iter()
                    .filter(|r| r.0 == n)
                    .map(|r| r.2)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let mut scsv = out.csv("ntk_summary.csv", &["N", "mean_sup_error", "init_rms"])?;

    // Initialization term alone over many seeds.
    let init_rms = par_map(cfg.jobs, cfg.n_grid.clone(), |n| {
        let mut acc = 0.0;
        for s in 0..cfg.ntk.init_seeds {
            let model = cfg.model_config(n, spec.d, params_seed(cfg, s))?;
            let p = init_params(&model, &cfg.lambda_spec())?;
            for h in &tests {
                let g = g_functional(&p, h, &model);
                acc += g * g;
            }
        }
        Ok((acc / (cfg.ntk.init_seeds * tests.len()) as f64).sqrt())
    })?;
    for ((n, e), r) in cfg.n_grid.iter().zip(&errs).zip(&init_rms) {
        scsv.row([n.to_string(), fmt(*e), fmt(*r)])?;
    }
    report.files.push(scsv.finish()?);

    let points: Vec<(f64, f64)> = cfg
        .n_grid
        .iter()
        .map(|&n| n as f64)
        .zip(init_rms.iter().copied())
        .collect();
    let fit = slope(&points)?;
    let theory = -(cfg.model.beta - 0.5);

    report.record("init_slope", fit.slope);
    report.check(
        "sup_error_non_increasing",
        non_increasing(&errs),
        format!("mean sup error per width {}", fmt_list(&errs)),
    );
    report.check(
        "init_rms_slope",
        (fit.slope - theory).abs() <= 0.1,
        format!(
            "initialization RMS slope {:.4} within 0.1 of {theory:.4}; RMS {}",
            fit.slope,
            fmt_list(&init_rms)
        ),
    );
    Ok(report)
}
