//! Untrained hidden units under frozen parameters: final-step distributions,
//! time-averaged moments, and distances between widths.

use mflab_core::network::{memory_step_in_place, HiddenState};
use mflab_core::{wasserstein1, DataStream, ParamSet};

use super::{data_seed, fmt, fmt_list, par_map, params_seed};
use crate::config::Config;
use crate::output::OutDir;
use crate::{strictly_decreasing, HarnessError, Report};

struct PathRun {
    n: usize,
    path: usize,
    /// `(T, time average of S, time average of S²)` at each scheduled `T`.
    averages: Vec<(u64, f64, f64)>,
    finals: Vec<f64>,
}

struct Band {
    n: usize,
    p: u32,
    /// Max minus min across paths of the time average at the last step.
    width: f64,
    /// `(T, mean over paths)`.
    overall: Vec<(u64, f64)>,
}

/// Log-spaced evaluation times in `[1, steps]` plus `steps / 2^j`.
pub fn schedule(steps: u64, per_decade: usize) -> Vec<u64> {
    let mut ts = Vec::new();
    if steps == 0 {
        return ts;
    }
    let top = (steps as f64).log10();
    let count = (top * per_decade as f64).ceil() as usize;
    for i in 0..=count {
        let t = 10f64.powf(top * i as f64 / count.max(1) as f64).round() as u64;
        ts.push(t.clamp(1, steps));
    }
    let mut t = steps;
    while t >= 1 {
        ts.push(t);
        t /= 2;
    }
    ts.sort_unstable();
    ts.dedup();
    ts
}

fn run_path(
    params: &ParamSet<f64>,
    cfg: &Config,
    n: usize,
    path: usize,
    times: &[u64],
) -> Result<PathRun, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let act = cfg.activation()?;
    let mut stream = DataStream::new(spec, data_seed(cfg, path));
    let mut hidden = HiddenState::zeros(n);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut averages = Vec::with_capacity(times.len());
    let mut next = times.iter().peekable();
    let nf = n as f64;
    for k in 1..=cfg.steps {
        let x = stream.state().x.clone();
        memory_step_in_place(params, &mut hidden, &x, &act);
        stream.advance()?;
        for &s in &hidden.s {
            s1 += s;
            s2 += s * s;
        }
        if next.peek() == Some(&&k) {
            next.next();
            let denom = nf * k as f64;
            averages.push((k, s1 / denom, s2 / denom));
        }
    }
    Ok(PathRun {
        n,
        path,
        averages,
        finals: hidden.s,
    })
}

fn histogram(values: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        let i = ((v * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
}

pub fn run(cfg: &Config, out: &OutDir) -> Result<Report, HarnessError> {
    let spec = cfg.dynamics_spec()?;
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let full = cfg
        .lambda_spec()
        .sample::<f64>(n_max, spec.d, params_seed(cfg, 0))?;
    let times = schedule(cfg.steps, cfg.ergodicity.points_per_decade);

    let mut items = Vec::new();
    for &n in &cfg.n_grid {
        for p in 0..cfg.paths {
            items.push((n, p));
        }
    }
    let runs = par_map(cfg.jobs, items, |(n, p)| {
        let params = ParamSet::from_measure(&full.truncated(n));
        run_path(&params, cfg, n, p, &times)
    })?;

    let mut report = Report::new(cfg.experiment);
    let bins = cfg.ergodicity.bins;
    let width = 1.0 / bins as f64;

    let mut hist = out.csv(
        "hist.csv",
        &["N", "path", "bin", "lo", "hi", "count", "density"],
    )?;
    let mut tavg = out.csv("timeavg.csv", &["N", "p", "path", "T", "value"])?;
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut bands: Vec<Band> = Vec::new();

    for &n in &cfg.n_grid {
        let group: Vec<&PathRun> = runs.iter().filter(|r| r.n == n).collect();
        let mut all = Vec::with_capacity(n * group.len());
        for r in &group {
            write_hist(
                &mut hist,
                n,
                &r.path.to_string(),
                &histogram(&r.finals, bins),
                width,
            )?;
            all.extend_from_slice(&r.finals);
        }
        write_hist(&mut hist, n, "overall", &histogram(&all, bins), width)?;
        pooled.push(all);

        for p in [1u32, 2] {
            let pick = |a: &(u64, f64, f64)| if p == 1 { a.1 } else { a.2 };
            for r in &group {
                for a in &r.averages {
                    tavg.row([
                        n.to_string(),
                        p.to_string(),
                        r.path.to_string(),
                        a.0.to_string(),
                        fmt(pick(a)),
                    ])?;
                }
            }
            let mut overall = Vec::with_capacity(times.len());
            for (j, &t) in times.iter().enumerate() {
                let v =
                    group.iter().map(|r| pick(&r.averages[j])).sum::<f64>() / group.len() as f64;
                tavg.row([
                    n.to_string(),
                    p.to_string(),
                    "overall".into(),
                    t.to_string(),
                    fmt(v),
                ])?;
                overall.push((t, v));
            }
            let last: Vec<f64> = group
                .iter()
                .map(|r| pick(r.averages.last().unwrap()))
                .collect();
            let band = last.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - last.iter().cloned().fold(f64::INFINITY, f64::min);
            bands.push(Band {
                n,
                p,
                width: band,
                overall,
            });
        }
    }
    report.files.push(hist.finish()?);
    report.files.push(tavg.finish()?);

    let mut w1s = Vec::new();
    let mut wcsv = out.csv("w1.csv", &["N_a", "N_b", "w1"])?;
    for (i, pair) in cfg.n_grid.windows(2).enumerate() {
        let w = wasserstein1(&pooled[i], &pooled[i + 1])?;
        wcsv.row([pair[0].to_string(), pair[1].to_string(), fmt(w)])?;
        report.record(format!("w1_{}_{}", pair[0], pair[1]), w);
        w1s.push(w);
    }
    report.files.push(wcsv.finish()?);
    report.check(
        "w1_strictly_decreasing",
        strictly_decreasing(&w1s),
        format!("W1 between consecutive widths {}", fmt_list(&w1s)),
    );

    let n_lo = cfg.n_grid[0];
    let n_hi = *cfg.n_grid.last().unwrap();
    let mut bcsv = out.csv("band.csv", &["N", "p", "T", "band_width"])?;
    for b in &bands {
        bcsv.row([
            b.n.to_string(),
            b.p.to_string(),
            cfg.steps.to_string(),
            fmt(b.width),
        ])?;
    }
    report.files.push(bcsv.finish()?);
    for p in [1u32, 2] {
        let get = |n: usize| bands.iter().find(|b| b.n == n && b.p == p).unwrap();
        let (lo, hi) = (get(n_lo).width, get(n_hi).width);
        report.record(format!("band_p{p}_N{n_lo}"), lo);
        report.record(format!("band_p{p}_N{n_hi}"), hi);
        report.check(
            &format!("band_narrower_p{p}"),
            hi < lo,
            format!(
                "time-average band at T={}: N={n_hi} {hi:.4e} vs N={n_lo} {lo:.4e}",
                cfg.steps
            ),
        );

        let overall = &get(n_hi).overall;
        let at = |t: u64| overall.iter().find(|o| o.0 == t).map(|o| o.1);
        let mut diffs = Vec::new();
        let mut t = cfg.steps;
        while diffs.len() < 3 && t / 2 >= 1 {
            if let (Some(a), Some(b)) = (at(t), at(t / 2)) {
                diffs.push((a - b).abs());
            }
            t /= 2;
        }
        diffs.reverse();
        report.check(
            &format!("time_average_settles_p{p}"),
            diffs.len() == 3 && strictly_decreasing(&diffs),
            format!(
                "|A(T) - A(T/2)| over the last three doublings at N={n_hi}: {}",
                fmt_list(&diffs)
            ),
        );
    }
    Ok(report)
}

fn write_hist(
    f: &mut crate::output::CsvFile,
    n: usize,
    path: &str,
    counts: &[u64],
    width: f64,
) -> Result<(), HarnessError> {
    let total: u64 = counts.iter().sum();
    for (i, &c) in counts.iter().enumerate() {
        let density = if total > 0 {
            c as f64 / (total as f64 * width)
        } else {
            0.0
        };
        f.row([
            n.to_string(),
            path.to_string(),
            i.to_string(),
            fmt(i as f64 * width),
            fmt((i + 1) as f64 * width),
            c.to_string(),
            fmt(density),
        ])?;
    }
    Ok(())
}
