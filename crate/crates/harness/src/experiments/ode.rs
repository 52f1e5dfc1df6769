//! Kernel limit equation on a sample of the stationary chain.

use mflab_core::limit_ode::{
    build_gram, integrate, is_monotone, loss_curve, max_abs_difference, required_burn_in,
    sample_mu, stable_dt, ClosedForm, KernelGram, LimitTrajectory, StationarySample,
};
use mflab_core::MeasureSample;

use super::{fmt, mu_seed, sample_lambda_for};
use crate::config::Config;
use crate::output::OutDir;
use crate::{HarnessError, Report};

pub(crate) struct Limit {
    pub lambda: MeasureSample<f64>,
    pub sample: StationarySample<f64>,
    pub gram: KernelGram<f64>,
}

pub(crate) fn build_limit(cfg: &Config) -> Result<Limit, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let act = cfg.activation()?;
    let lambda = sample_lambda_for(cfg, spec.d)?;
    let burn_in = match cfg.ode.burn_in {
        Some(b) => b,
        None => required_burn_in(&spec, &act, cfg.ode.tol)?,
    };
    let sample = sample_mu(
        &spec,
        &lambda,
        &act,
        cfg.ode.m,
        burn_in,
        cfg.ode.stride,
        cfg.ode.tol,
        mu_seed(cfg),
        cfg.harvest(),
    )?;
    let gram = build_gram(&sample, &lambda, &act)?;
    Ok(Limit {
        lambda,
        sample,
        gram,
    })
}

/// RK4 with the configured step, reduced to the stability bound if needed.
pub(crate) fn solve(
    gram: &KernelGram<f64>,
    alpha: f64,
    horizon: f64,
    dt: f64,
) -> Result<LimitTrajectory<f64>, HarnessError> {
    let dt = dt.min(stable_dt(gram, alpha));
    Ok(integrate(gram, alpha, horizon, dt)?)
}

fn leading(gram: &KernelGram<f64>, m: usize) -> Result<KernelGram<f64>, HarnessError> {
    let m = m.min(gram.m());
    Ok(KernelGram::from_parts(
        gram.k.view((0, 0), (m, m)).into_owned(),
        gram.y.rows(0, m).into_owned(),
    )?)
}

fn oracle_error(
    gram: &KernelGram<f64>,
    alpha: f64,
    horizon: f64,
    dt: f64,
) -> Result<f64, HarnessError> {
    let rk = solve(gram, alpha, horizon, dt)?;
    let exact = ClosedForm::new(gram)?.trajectory(alpha, &rk.times);
    Ok(max_abs_difference(&rk, &exact))
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let limit = build_limit(cfg)?;
    let gram = &limit.gram;
    let alpha = cfg.model.alpha;
    let (horizon, dt) = (cfg.ode.horizon, cfg.ode.dt);
    let traj = solve(gram, alpha, horizon, dt)?;
    let curve = loss_curve(&traj, gram);
    let trace = gram.trace();
    let eigs = gram.eigenvalues();
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let oracle_small = oracle_error(&leading(gram, cfg.ode.oracle_m)?, alpha, horizon, dt)?;
    let oracle_full = oracle_error(gram, alpha, horizon, dt)?;
    let monotone = is_monotone(&curve, 1e-10);
    let psd = min_eig >= -1e-8 * trace;

    let mut report = Report::new(cfg.experiment);
    let mut lcsv = out.csv("ode_loss.csv", &["t", "loss"])?;
    for (t, l) in &curve {
        lcsv.row([fmt(*t), fmt(*l)])?;
    }
    report.files.push(lcsv.finish()?);

    let mut scsv = out.csv(
        "ode_summary.csv",
        &[
            "m",
            "burn_in",
            "stride",
            "alpha",
            "horizon",
            "dt",
            "trace",
            "min_eigenvalue",
            "max_eigenvalue",
            "oracle_m",
            "oracle_max_error",
            "full_max_error",
            "monotone",
        ],
    )?;
    scsv.row([
        gram.m().to_string(),
        limit.sample.burn_in.to_string(),
        limit.sample.stride.to_string(),
        fmt(alpha),
        fmt(horizon),
        fmt(traj.times.get(1).copied().unwrap_or(0.0)),
        fmt(trace),
        fmt(min_eig),
        fmt(max_eig),
        cfg.ode.oracle_m.min(gram.m()).to_string(),
        fmt(oracle_small),
        fmt(oracle_full),
        monotone.to_string(),
    ])?;
    report.files.push(scsv.finish()?);

    if cfg.ode.dump {
        let mut header = vec!["t".to_string()];
        header.extend((0..gram.m()).map(|j| format!("u{j}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut ucsv = out.csv("ode_u.csv", &refs)?;
        for (t, u) in traj.times.iter().zip(&traj.u) {
            ucsv.row(std::iter::once(fmt(*t)).chain(u.iter().map(|v| fmt(*v))))?;
        }
        report.files.push(ucsv.finish()?);
        let mut header = vec!["i".to_string(), "y".to_string()];
        header.extend((0..gram.m()).map(|j| format!("k{j}")));
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut gcsv = out.csv("gram.csv", &refs)?;
        for i in 0..gram.m() {
            gcsv.row(
                [i.to_string(), fmt(gram.y[i])]
                    .into_iter()
                    .chain(gram.k.row(i).iter().map(|v| fmt(*v))),
            )?;
        }
        report.files.push(gcsv.finish()?);
    }

    report.record("min_eigenvalue", min_eig);
    report.record("trace", trace);
    report.record("oracle_error", oracle_small);
    report.record("oracle_error_full", oracle_full);
    report.check(
        "gram_psd",
        psd,
        format!(
            "min eigenvalue {min_eig:.4e} >= -1e-8 * trace ({trace:.4e}), M = {}",
            gram.m()
        ),
    );
    report.check(
        "rk4_matches_closed_form",
        oracle_small < 1e-6,
        format!(
            "max |u_rk4 - u_exact| = {oracle_small:.3e} < 1e-6 on M = {} (full M: {oracle_full:.3e})",
            cfg.ode.oracle_m.min(gram.m())
        ),
    );
    report.check(
        "loss_monotone",
        monotone,
        format!(
            "loss non-increasing within 1e-10 * loss(0); loss {:.4e} -> {:.4e}",
            curve.first().map_or(0.0, |c| c.1),
            curve.last().map_or(0.0, |c| c.1)
        ),
    );
    Ok(report)
}
