//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mflab::config::{Config, Experiment};
use mflab::Report;
use mflab_core::dynamics::validate_assumptions;
use mflab_core::meanfield::CoupledChains;
use mflab_core::network::{grad_check, init_params, memory_step_in_place, HiddenState};
use mflab_core::{
    make_builtin_rotation_tanh, rng_from_seed, Activation, ClipSpec, DataState, DataStream,
    LambdaSpec, ModelConfig, ParamSet,
};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn assumptions() -> Outcome {
    let act = Activation::<f64>::logistic();
    let good = validate_assumptions(&make_builtin_rotation_tanh().with_lipschitz(0.5), &act)
        .with_window(0.75, 0.1);
    let bad = validate_assumptions(&make_builtin_rotation_tanh().with_lipschitz(0.9), &act);
    let q0_ok = (good.q0 - 0.75f64.sqrt()).abs() < 1e-12;
    outcome(
        q0_ok && good.passes() && !bad.flags.c_sigma_clause && !bad.passes(),
        format!(
            "L=0.5: q0 = {:.6}, failures {:?}; L=0.9: c_sigma clause {}",
            good.q0,
            good.failures(),
            if bad.flags.c_sigma_clause {
                "passes"
            } else {
                "fails"
            }
        ),
    )
}

fn clipping() -> Outcome {
    let mut rng = rng_from_seed(101);
    let mut worst_fd = 0.0f64;
    let mut violations = Vec::new();
    for case in 0..1000 {
        let n = rng.random_range(1..=100_000usize);
        let gamma = rng.random_range(0.001..0.125);
        let clip = ClipSpec::<f64>::new(n, gamma).unwrap();
        let s = clip.threshold();
        let x = rng.random_range(-3.0 * s..3.0 * s);
        let v = clip.eval(x);
        let d = clip.deriv(x);
        if x.abs() <= s && (v != x || d != 1.0) {
            violations.push(format!("case {case}: not the identity at x = {x}"));
        }
        if v.abs() > 2.0 * s || d.abs() > 1.0 {
            violations.push(format!("case {case}: bound violated at x = {x}"));
        }
        if clip.eval(-x) != -v {
            violations.push(format!("case {case}: not odd at x = {x}"));
        }
        let h = 1e-5 * s;
        let near_kink = [s, clip.outer()]
            .iter()
            .any(|&k| (x.abs() - k).abs() < 2.0 * h);
        if !near_kink {
            let fd = (clip.eval(x + h) - clip.eval(x - h)) / (2.0 * h);
            worst_fd = worst_fd.max((fd - d).abs());
        }
    }
    let ok = violations.is_empty() && worst_fd < 1e-5;
    outcome(
        ok,
        format!(
            "1000 cases, max |psi' - FD| = {worst_fd:.2e} (< 1e-5), {} property violations {:?}",
            violations.len(),
            violations.first()
        ),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = rng_from_seed(202);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut drawn = 0;
    while checked < 50 && drawn < 500 {
        drawn += 1;
        let n = rng.random_range(1..=20);
        let d = rng.random_range(1..=3);
        let cfg = ModelConfig::<f64>::new(n, d, rng.random());
        let mut p = init_params(&cfg, &LambdaSpec::default()).unwrap();
        for v in p.c.iter_mut().chain(p.w.iter_mut()).chain(p.b.iter_mut()) {
            *v += rng.random_range(-0.1..0.1);
        }
        let s = HiddenState {
            s: (0..n).map(|_| rng.random::<f64>()).collect(),
            k: 1,
        };
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        let data = DataState {
            x,
            z: 0.0,
            y: rng.random_range(-0.5..0.5),
            k: 1,
        };
        if let Some(err) = grad_check(&p, &s, &data, &cfg).unwrap() {
            worst = worst.max(err);
            checked += 1;
        }
    }
    outcome(
        checked == 50 && worst < 1e-5,
        format!("{checked} instances (N <= 20), max relative error {worst:.2e} (< 1e-5)"),
    )
}

fn exact_identities() -> Outcome {
    let spec = make_builtin_rotation_tanh::<f64>();
    let act = Activation::logistic();
    let lambda = LambdaSpec::default().sample::<f64>(1, 1, 0).unwrap();
    let (n, steps) = (50usize, 500u64);
    let mut worst_v = 0.0f64;
    let mut worst_h = 0.0f64;
    for seed in 0..5u64 {
        let cfg = ModelConfig::<f64>::new(n, 1, 1000 + seed);
        let init = init_params(&cfg, &LambdaSpec::default()).unwrap();
        let frozen: ParamSet<f64> = init.clone();
        let mut untrained = HiddenState::zeros(n);
        let mut chains = CoupledChains::new(
            cfg,
            init,
            DataStream::new(spec.clone(), 2000 + seed),
            &lambda,
        )
        .unwrap();
        for _ in 0..steps {
            let w_prev = chains.trainer().params().w.clone();
            let x = chains.trainer().data().x.clone();
            chains.step_without_h().unwrap();
            memory_step_in_place(&frozen, &mut untrained, &x, &act);
            let s_hat = &chains.trainer().hidden().s;
            for i in 0..n {
                let v = chains.v.func.eval(&w_prev[i..i + 1], &act);
                worst_v = worst_v.max((v - s_hat[i]).abs());
                let h = chains.hn.func.eval(frozen.w_row(i), &act);
                worst_h = worst_h.max((h - untrained.s[i]).abs());
            }
        }
    }
    outcome(
        worst_v <= 1e-12 && worst_h <= 1e-12,
        format!("N=50, k <= 500, 5 seeds: max |v(W_k) - S_hat| = {worst_v:.1e}, max |hN(W) - S| = {worst_h:.1e} (<= 1e-12)"),
    )
}

fn experiment(e: Experiment, dir: &std::path::Path) -> Outcome {
    let mut cfg = Config::defaults_for(e);
    cfg.out = dir.join(e.name());
    match mflab::run(&cfg) {
        Ok(report) => from_report(&report),
        Err(err) => outcome(false, format!("run failed: {err}")),
    }
}

fn from_report(r: &Report) -> Outcome {
    let lines: Vec<String> = r.checks.iter().map(|c| format!("\n      {c}")).collect();
    outcome(r.passed(), lines.concat())
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    type Criterion<'a> = (&'a str, Option<Duration>, Box<dyn Fn() -> Outcome + 'a>);
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        (
            "assumption and q0 validation",
            Some(Duration::from_secs(1)),
            Box::new(assumptions),
        ),
        (
            "clipping suite",
            Some(Duration::from_secs(5)),
            Box::new(clipping),
        ),
        (
            "gradient check",
            Some(Duration::from_secs(10)),
            Box::new(gradient_check),
        ),
        (
            "exact identities",
            Some(Duration::from_secs(10)),
            Box::new(exact_identities),
        ),
        (
            "ergodicity",
            None,
            Box::new(move || experiment(Experiment::Ergodicity, d)),
        ),
        (
            "memory-process error envelopes",
            None,
            Box::new(move || experiment(Experiment::GammaRates, d)),
        ),
        (
            "parameter drift envelope",
            None,
            Box::new(move || experiment(Experiment::Drift, d)),
        ),
        (
            "increment envelope",
            None,
            Box::new(move || experiment(Experiment::Increment, d)),
        ),
        (
            "limit ODE",
            None,
            Box::new(move || experiment(Experiment::Ode, d)),
        ),
        (
            "kernel-limit convergence",
            None,
            Box::new(move || experiment(Experiment::Ntk, d)),
        ),
    ];
    let mut failed = 0;
    for (name, budget, run) in &criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed < b);
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget_note = budget
            .map(|b| format!(" (limit {:.0} s)", b.as_secs_f64()))
            .unwrap_or_default();
        println!(
            "{} {name} [{:.2} s{budget_note}]: {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
