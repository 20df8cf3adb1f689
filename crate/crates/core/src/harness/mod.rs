//! Seeded experiment drivers and long-form CSV output.

mod cartpole;
mod gridworld;
mod verify;

pub use cartpole::{run_cartpole_experiment, CartpoleOptions, CartpoleResult, CartpoleTrial, EvalPoint};
pub use gridworld::{run_gridworld_experiment, GridworldOptions, GridworldResult, RateChoice, VariantResult, VARIANTS};
pub use verify::{run_verification_suite, sign_flipped_log_partition, CheckResult, VerificationReport, VerifyOptions};

use std::fmt::{Debug, Write as _};
use std::io::Write;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const BUILD_ID: &str = env!("KL_BUILD_ID");

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub environment: String,
    pub algorithm: String,
    pub seeds: Vec<u64>,
    /// Samples (tabular) or episodes (LSPsi).
    pub budget: u64,
    pub eval_every: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config(format!("experiment {:?} has no seeds", self.id)));
        }
        if self.budget == 0 {
            return Err(Error::Config(format!("experiment {:?} has a zero budget", self.id)));
        }
        if self.eval_every == 0 || self.eval_every > self.budget {
            return Err(Error::Config(format!("evaluation period {} outside 1..={}", self.eval_every, self.budget)));
        }
        Ok(())
    }

    /// Seeds `base, base + 1, ...`.
    pub fn consecutive_seeds(base: u64, trials: usize) -> Vec<u64> {
        (0..trials as u64).map(|i| base + i).collect()
    }

    /// Everything but the output path, which does not affect results.
    pub fn without_output(&self) -> Self {
        Self { output: None, ..self.clone() }
    }
}

/// Hex sha256 of the `Debug` rendering of everything that shapes a run.
pub fn config_hash(parts: &impl Debug) -> String {
    let digest = Sha256::digest(format!("{parts:?}").as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `trial` is a seed index, or `"all"` for across-trial summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub trial: String,
    pub progress: u64,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(trial: impl ToString, progress: u64, metric: impl Into<String>, value: f64) -> Self {
        Self { trial: trial.to_string(), progress, metric: metric.into(), value }
    }
}

/// Long-form table with `#` provenance lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub header: Vec<String>,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn new(config_hash: &str, extra: impl IntoIterator<Item = String>) -> Self {
        let mut header = vec![format!("config_hash: {config_hash}"), format!("build: {BUILD_ID}")];
        header.extend(extra);
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Rows with the given metric and trial, in insertion order.
    pub fn series<'a>(&'a self, trial: &'a str, metric: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.trial == trial && r.metric == metric)
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for h in &self.header {
            writeln!(out, "# {h}")?;
        }
        writeln!(out, "trial,progress,metric,value")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.trial, r.progress, r.metric, r.value)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Median with `None` ordered above every number.
pub fn median_option(values: &[Option<u64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |s| s as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return None;
    }
    let m = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    m.is_finite().then_some(m)
}

/// Appends `.mean` and `.sd` rows across trials for every `(metric, progress)`
/// present in per-trial rows.
pub fn append_summaries(table: &mut MetricTable, metrics: &[String]) {
    let mut extra = Vec::new();
    for m in metrics {
        let mut by_progress: Vec<(u64, Vec<f64>)> = Vec::new();
        for r in table.rows.iter().filter(|r| &r.metric == m && r.trial != "all") {
            match by_progress.iter_mut().find(|(p, _)| *p == r.progress) {
                Some((_, v)) => v.push(r.value),
                None => by_progress.push((r.progress, vec![r.value])),
            }
        }
        by_progress.sort_by_key(|(p, _)| *p);
        for (p, v) in by_progress {
            let (mean, sd) = mean_sd(&v);
            extra.push(MetricRow::new("all", p, format!("{m}.mean"), mean));
            extra.push(MetricRow::new("all", p, format!("{m}.sd"), sd));
        }
    }
    table.rows.extend(extra);
}
