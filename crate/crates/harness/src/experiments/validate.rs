use crate::config::Config;
use crate::output::OutDir;
use crate::{HarnessError, Report};

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let r = cfg.assumption_report()?;
    let spec = cfg.dynamics_spec()?;
    let mut report = Report::new(cfg.experiment);
    let f = &r.flags;
    let clauses = [
        ("lipschitz_below_one", f.lipschitz_below_one),
        ("c_sigma_clause", f.c_sigma_clause),
        ("q0_below_one", f.q0_below_one),
        ("noise_bounded", f.noise_bounded),
        ("path_bounded", f.path_bounded),
        ("beta_gamma_window", f.beta_gamma_window.unwrap_or(true)),
    ];
    let mixing = r.mixing_steps(cfg.ode.tol);
    let mut csv = out.csv(
        "assumptions.csv",
        &[
            "dynamics",
            "lipschitz",
            "c_sigma",
            "q0",
            "g_sup",
            "eps_bound",
            "mixing_steps",
            "clause",
            "passed",
        ],
    )?;
    for (name, ok) in clauses {
        csv.row([
            spec.name.clone(),
            r.lipschitz.to_string(),
            r.c_sigma.to_string(),
            r.q0.to_string(),
            spec.g_sup.to_string(),
            spec.eps_bound().to_string(),
            mixing.map(|m| m.to_string()).unwrap_or_default(),
            name.to_string(),
            ok.to_string(),
        ])?;
        report.check(
            name,
            ok,
            format!(
                "L = {}, C_sigma = {}, q0 = {:.6}",
                r.lipschitz, r.c_sigma, r.q0
            ),
        );
    }
    report.files.push(csv.finish()?);
    report.record("q0", r.q0);
    report.record("lipschitz", r.lipschitz);
    report.record("c_sigma", r.c_sigma);
    Ok(report)
}
