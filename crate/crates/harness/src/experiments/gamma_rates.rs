//! Errors between the trained memory process, its frozen-parameter version and
//! the mean-field limit, on shared data paths.

use mflab_core::meanfield::{error_diag, step_h, ChainTag, CoupledChains, MemoryChainState};
use mflab_core::network::init_params;
use mflab_core::{DataStream, FuncH, MeasureSample};

use super::{data_seed, fmt, fmt_list, mean, par_map, params_seed, sample_lambda_for, slope};
use crate::config::Config;
use crate::output::OutDir;
use crate::{strictly_decreasing, HarnessError, Report};

/// Inputs and limit-chain feedback along one data path.
struct LimitPath {
    xs: Vec<Vec<f64>>,
    mh: Vec<f64>,
}

struct Run {
    n: usize,
    seed: usize,
    max_e1_sq: f64,
    max_e2_sq: f64,
    /// (k, e1, e2, Γ₁, Γ₂)
    rows: Vec<(u64, f64, f64, f64, f64)>,
}

fn limit_path(
    cfg: &Config,
    p: usize,
    steps: u64,
    lambda: &MeasureSample<f64>,
) -> Result<LimitPath, HarnessError> {
    let act = cfg.activation()?;
    let mut stream = DataStream::new(cfg.dynamics_spec()?, data_seed(cfg, p));
    let mut chain = MemoryChainState::start(ChainTag::H);
    let mut xs = Vec::with_capacity(steps as usize);
    let mut mh = Vec::with_capacity(steps as usize + 1);
    mh.push(chain.m);
    for _ in 0..steps {
        let x = stream.state().x.clone();
        step_h(&mut chain, &x, lambda, &act)?;
        stream.advance()?;
        xs.push(x);
        mh.push(chain.m);
    }
    Ok(LimitPath { xs, mh })
}

fn snapshot_steps(steps: u64, count: usize) -> Vec<u64> {
    let mut ks: Vec<u64> = (1..=count as u64)
        .map(|j| ((j as f64) * steps as f64 / count as f64).round() as u64)
        .filter(|&k| k >= 1)
        .collect();
    ks.dedup();
    ks
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let act = cfg.activation()?;
    let lambda = sample_lambda_for(cfg, spec.d)?;
    let h1_measure = lambda.truncated(cfg.gamma_rates.h1_samples.min(lambda.len()));
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let steps_max = (n_max as f64 * cfg.horizon).floor() as u64;
    let paths = cfg.data_paths.min(cfg.seeds);
    let limits = par_map(cfg.jobs, (0..paths).collect(), |p| {
        limit_path(cfg, p, steps_max, &lambda)
    })?;

    let mut items = Vec::new();
    for &n in &cfg.n_grid {
        for s in 0..cfg.seeds {
            items.push((n, s));
        }
    }
    let runs = par_map(cfg.jobs, items, |(n, s)| {
        let p = s % paths;
        let lp = &limits[p];
        let model = cfg.model_config(n, spec.d, params_seed(cfg, s))?;
        let steps = model.steps_for(cfg.horizon);
        let init = init_params(&model, &cfg.lambda_spec())?;
        let mut chains = CoupledChains::new(
            model,
            init,
            DataStream::new(spec.clone(), data_seed(cfg, p)),
            &lambda,
        )?;
        let snaps = snapshot_steps(steps, cfg.gamma_rates.h1_snapshots);
        let mut next = snaps.iter().peekable();
        let mut rows = vec![(0u64, 0.0, 0.0, 0.0, 0.0)];
        let (mut max1, mut max2) = (0.0f64, 0.0f64);
        for k in 1..=steps {
            chains.step_without_h()?;
            let e1 = chains.hn.m - lp.mh[k as usize];
            let e2 = chains.v.m - chains.hn.m;
            max1 = max1.max(e1 * e1);
            max2 = max2.max(e2 * e2);
            if next.peek() == Some(&&k) {
                next.next();
                let h = MemoryChainState {
                    m: lp.mh[k as usize],
                    func: FuncH::Logistic {
                        a: lp.xs[k as usize - 1].clone(),
                        b: lp.mh[k as usize - 1],
                    },
                    k,
                    tag: ChainTag::H,
                };
                let diag = error_diag(&chains.v, &chains.hn, &h, &[], Some(&h1_measure), &act)?;
                rows.push((
                    k,
                    diag.e1,
                    diag.e2,
                    diag.gamma1_h1.unwrap(),
                    diag.gamma2_h1.unwrap(),
                ));
            }
        }
        Ok(Run {
            n,
            seed: s,
            max_e1_sq: max1,
            max_e2_sq: max2,
            rows,
        })
    })?;

    let mut report = Report::new(cfg.experiment);
    let mut csv = out.csv(
        "gamma.csv",
        &[
            "N",
            "seed",
            "k",
            "e1",
            "e2",
            "e1_sq",
            "e2_sq",
            "gamma1_h1",
            "gamma2_h1",
        ],
    )?;
    for r in &runs {
        for &(k, e1, e2, g1, g2) in &r.rows {
            csv.row([
                r.n.to_string(),
                r.seed.to_string(),
                k.to_string(),
                fmt(e1),
                fmt(e2),
                fmt(e1 * e1),
                fmt(e2 * e2),
                fmt(g1),
                fmt(g2),
            ])?;
        }
    }
    report.files.push(csv.finish()?);

    let mut mcsv = out.csv("gamma_max.csv", &["N", "seed", "max_e1_sq", "max_e2_sq"])?;
    for r in &runs {
        mcsv.row([
            r.n.to_string(),
            r.seed.to_string(),
            fmt(r.max_e1_sq),
            fmt(r.max_e2_sq),
        ])?;
    }
    report.files.push(mcsv.finish()?);

    let envelope = |f: fn(&Run) -> f64| -> Vec<f64> {
        cfg.n_grid
            .iter()
            .map(|&n| mean(&runs.iter().filter(|r| r.n == n).map(f).collect::<Vec<_>>()))
            .collect()
    };
    let env1 = envelope(|r| r.max_e1_sq);
    let env2 = envelope(|r| r.max_e2_sq);
    let ns: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    let fit1 = slope(
        &ns.iter()
            .copied()
            .zip(env1.iter().copied())
            .collect::<Vec<_>>(),
    )?;
    let fit2 = slope(
        &ns.iter()
            .copied()
            .zip(env2.iter().copied())
            .collect::<Vec<_>>(),
    )?;
    let (beta, gamma) = (cfg.model.beta, cfg.model.gamma);
    let theory2 = -(2.0 - 2.0 * beta - 2.0 * gamma);
    let bound1 = -0.7;
    let bound2 = theory2 + 0.3;

    let mut fcsv = out.csv(
        "gamma_fit.csv",
        &[
            "quantity",
            "slope",
            "intercept",
            "r_squared",
            "theory",
            "bound",
        ],
    )?;
    fcsv.row([
        "e1_sq".to_string(),
        fmt(fit1.slope),
        fmt(fit1.intercept),
        fmt(fit1.r_squared),
        fmt(-1.0),
        fmt(bound1),
    ])?;
    fcsv.row([
        "e2_sq".to_string(),
        fmt(fit2.slope),
        fmt(fit2.intercept),
        fmt(fit2.r_squared),
        fmt(theory2),
        fmt(bound2),
    ])?;
    report.files.push(fcsv.finish()?);

    report.record("slope_e1", fit1.slope);
    report.record("slope_e2", fit2.slope);
    report.check(
        "e1_slope",
        fit1.slope <= bound1,
        format!(
            "mean max e1^2 slope {:.4} <= {bound1} (theory -1); envelope {}",
            fit1.slope,
            fmt_list(&env1)
        ),
    );
    report.check(
        "e2_slope",
        fit2.slope <= bound2,
        format!(
            "mean max e2^2 slope {:.4} <= {bound2:.4} (theory {theory2:.4}); envelope {}",
            fit2.slope,
            fmt_list(&env2)
        ),
    );
    report.check("e1_decreasing", strictly_decreasing(&env1), fmt_list(&env1));
    report.check("e2_decreasing", strictly_decreasing(&env2), fmt_list(&env2));
    Ok(report)
}
