//! Experiment runner: configuration, the experiment suites, and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

use std::fmt;

pub use config::{Config, Experiment};
pub use experiments::run;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mflab_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: everything here is a setup problem, not a failed check.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// One asserted property of an experiment's output.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: Experiment,
    pub checks: Vec<Check>,
    pub files: Vec<std::path::PathBuf>,
    /// Scalar results by name, for callers that want numbers rather than verdicts.
    pub values: Vec<(String, f64)>,
}

impl Report {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            checks: Vec::new(),
            files: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub(crate) fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub(crate) fn record(&mut self, name: impl Into<String>, v: f64) {
        self.values.push((name.into(), v));
    }
}

/// Strictly decreasing sequence.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}
