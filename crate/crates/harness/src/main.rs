use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mflab::config::{parse_override, Config, Experiment};
use mflab::HarnessError;

#[derive(Parser)]
#[command(
    name = "mflab",
    version,
    about = "Wide recurrent network experiments on Markovian data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Untrained hidden-unit distributions and time averages across widths.
    Ergodicity(Args),
    /// Parameter drift from initialization during training.
    Drift(Args),
    /// Errors between the trained, frozen and limit memory processes.
    GammaRates(Args),
    /// One-step increments of g^N against their first-order prediction.
    Increment(Args),
    /// Trained g^N against the kernel limit.
    Ntk(Args),
    /// Kernel limit equation: Gram spectrum, integrator accuracy, loss curve.
    Ode(Args),
    /// Checks the data-process and activation assumptions.
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML config file; unspecified keys take the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Widths, comma separated.
    #[arg(long = "n-grid", alias = "N-grid", value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Repetitions per width.
    #[arg(long)]
    seeds: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Run even if q0 >= 1 or another assumption fails; recorded in every CSV header.
    #[arg(long)]
    allow_assumption_violation: bool,
    /// Any other setting, as key.path=value (value in TOML syntax).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>, HarnessError> {
        let mut ov = Vec::new();
        for s in &self.set {
            ov.push(parse_override(s)?);
        }
        if let Some(g) = &self.n_grid {
            let arr = g.iter().map(|&n| toml::Value::Integer(n as i64)).collect();
            ov.push(("n_grid".into(), toml::Value::Array(arr)));
        }
        if let Some(s) = self.seeds {
            ov.push(("seeds".into(), toml::Value::Integer(s as i64)));
        }
        if let Some(s) = self.seed {
            ov.push(("seed".into(), toml::Value::Integer(s as i64)));
        }
        if let Some(o) = &self.out {
            ov.push(("out".into(), toml::Value::String(o.display().to_string())));
        }
        if let Some(j) = self.jobs {
            ov.push(("jobs".into(), toml::Value::Integer(j as i64)));
        }
        if self.allow_assumption_violation {
            ov.push((
                "allow_assumption_violation".into(),
                toml::Value::Boolean(true),
            ));
        }
        Ok(ov)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Ergodicity(a) => (Experiment::Ergodicity, a),
        Command::Drift(a) => (Experiment::Drift, a),
        Command::GammaRates(a) => (Experiment::GammaRates, a),
        Command::Increment(a) => (Experiment::Increment, a),
        Command::Ntk(a) => (Experiment::Ntk, a),
        Command::Ode(a) => (Experiment::Ode, a),
        Command::Validate(a) => (Experiment::Validate, a),
    };
    let result = args
        .overrides()
        .and_then(|ov| Config::load(experiment, args.config.as_deref(), &ov))
        .and_then(|cfg| {
            log::info!("{} -> {}", experiment.name(), cfg.out.display());
            mflab::run(&cfg)
        });
    match result {
        Ok(report) => {
            for c in &report.checks {
                println!("{c}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
