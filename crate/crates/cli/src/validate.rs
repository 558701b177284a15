//! Analytic pipeline against the frame simulator.

use std::fmt::Write as _;
use std::path::Path;

use cogcap::fading::FadingModel;
use cogcap::optimizer::{effective_capacity, solve_lambda};
use cogcap::simulator::{
    estimate_effective_capacity_mc, simulate_frames, simulate_queue, QueueConfig,
};
use cogcap::statemodel::scenario_probabilities;

use crate::experiments::Cell;
use crate::{write_artifact, CliError, ExperimentConfig};

/// Fewest frames for which a Monte Carlo comparison is meaningful.
pub const MIN_FRAMES: u64 = 10_000;
/// Largest `3·SE / R_E` at which the capacity comparison is conclusive.
pub const MAX_RELATIVE_SPREAD: f64 = 0.1;
pub const CAPACITY_REL_TOL: f64 = 0.01;
pub const SLOPE_REL_TOL: f64 = 0.15;
/// Shortest queue trace whose fitted tail slope is trusted.
pub const MIN_QUEUE_FRAMES: u64 = 1_000_000;
pub const SUMMARY_FILE: &str = "validate.csv";
pub const REPORT_FILE: &str = "validate_report.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckStatus {
    Pass,
    Inconclusive,
    Fail,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Inconclusive => "inconclusive",
            CheckStatus::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub std_error: f64,
    /// Largest accepted `|observed − expected|`.
    pub tolerance: f64,
    pub status: CheckStatus,
}

impl Check {
    fn new(
        name: &str,
        expected: f64,
        observed: f64,
        std_error: f64,
        tolerance: f64,
        conclusive: bool,
    ) -> Self {
        let status = if !conclusive {
            CheckStatus::Inconclusive
        } else if (observed - expected).abs() <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name: name.into(),
            expected,
            observed,
            std_error,
            tolerance,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub frames: u64,
    pub queue_frames: u64,
    pub seed: u64,
    pub lambda: f64,
    pub config_line: String,
}

impl ValidationReport {
    /// Worst status over all checks.
    pub fn overall(&self) -> CheckStatus {
        self.checks
            .iter()
            .map(|c| c.status)
            .max()
            .unwrap_or(CheckStatus::Inconclusive)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err =
            |e: csv::Error| CliError::output(Path::new(SUMMARY_FILE), std::io::Error::other(e));
        w.write_record([
            "check",
            "expected",
            "observed",
            "std_error",
            "tolerance",
            "status",
        ])
        .map_err(err)?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                Cell::Real(c.expected).to_string(),
                Cell::Real(c.observed).to_string(),
                Cell::Real(c.std_error).to_string(),
                Cell::Real(c.tolerance).to_string(),
                c.status.as_str().into(),
            ])
            .map_err(err)?;
        }
        w.write_record(["overall", "", "", "", "", self.overall().as_str()])
            .map_err(err)?;
        w.into_inner()
            .map_err(|e| CliError::output(Path::new(SUMMARY_FILE), e.into_error()))
    }

    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.config_line);
        let _ = writeln!(
            out,
            "frames = {}, queue frames = {}, seed = {}, lambda = {:.6e}",
            self.frames, self.queue_frames, self.seed, self.lambda
        );
        let _ = writeln!(
            out,
            "{:<22} {:>14} {:>14} {:>11} {:>11}  status",
            "check", "analytic", "monte carlo", "std err", "tolerance"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<22} {:>14.6e} {:>14.6e} {:>11.3e} {:>11.3e}  {}",
                c.name,
                c.expected,
                c.observed,
                c.std_error,
                c.tolerance,
                c.status.as_str()
            );
        }
        let _ = writeln!(out, "overall: {}", self.overall().as_str());
        out
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<ValidationReport, CliError> {
    cfg.validate()?;
    let p = cfg.system;
    let pol = solve_lambda(&p)?;
    let analytic = effective_capacity(&pol, &p)?;
    let enough = cfg.frames >= MIN_FRAMES;
    let mut checks = Vec::new();

    let agg = simulate_frames(&p, &pol, cfg.frames, cfg.seed)?;
    let mc = estimate_effective_capacity_mc(&agg, &p)?;
    checks.push(Check::new(
        "effective_capacity",
        analytic.re,
        mc.re,
        mc.se,
        (CAPACITY_REL_TOL * analytic.re).max(3.0 * mc.se),
        enough && 3.0 * mc.se <= MAX_RELATIVE_SPREAD * analytic.re,
    ));

    let (mean, se) = agg.interference();
    let expected = analytic.achieved_interference;
    let tol = if se > 0.0 { 3.0 * se } else { 1e-12 * expected };
    checks.push(Check::new(
        "average_interference",
        expected,
        mean,
        se,
        tol,
        enough,
    ));

    let probs = scenario_probabilities(&p.inputs())?.as_array();
    let n = agg.frames as f64;
    for (j, (freq, prob)) in agg
        .scenario_frequencies()
        .into_iter()
        .zip(probs)
        .enumerate()
    {
        let se = (prob * (1.0 - prob) / n).sqrt();
        let tol = if se > 0.0 { 3.0 * se } else { 1e-12 };
        checks.push(Check::new(
            &format!("scenario_{}", j + 1),
            prob,
            freq,
            se,
            tol,
            enough,
        ));
    }

    let queue = simulate_queue(
        &p,
        &pol,
        &QueueConfig {
            arrival_bits: analytic.re * p.frame * p.bandwidth,
            frames: cfg.queue_frames(),
            seed: cfg.seed,
            keep_backlog: false,
        },
    )?;
    let (slope, slope_se) = queue.fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.se));
    checks.push(Check::new(
        "queue_tail_slope",
        p.theta,
        slope,
        slope_se,
        SLOPE_REL_TOL * p.theta,
        queue.stable
            && cfg.queue_frames() >= MIN_QUEUE_FRAMES
            && 3.0 * slope_se <= SLOPE_REL_TOL * p.theta,
    ));

    let fading = match p.model {
        FadingModel::Rayleigh => "rayleigh".to_string(),
        FadingModel::Nakagami { m } => format!("nakagami(m = {m})"),
    };
    Ok(ValidationReport {
        checks,
        frames: cfg.frames,
        queue_frames: cfg.queue_frames(),
        seed: cfg.seed,
        lambda: analytic.lambda,
        config_line: format!(
            "M = {}, {fading}, I_avg = {:.6} dB, pd = {}, pf = {}, rho = {}, theta = {}",
            p.channels,
            cfg.iavg_db(),
            p.perf.pd,
            p.perf.pf,
            p.rho,
            p.theta
        ),
    })
}

/// Runs the validation and writes the summary CSV and text report into `dir`.
pub fn run_and_write(cfg: &ExperimentConfig, dir: &Path) -> Result<ValidationReport, CliError> {
    let report = validate(cfg)?;
    write_artifact(dir, SUMMARY_FILE, &report.to_csv()?)?;
    write_artifact(dir, REPORT_FILE, report.report().as_bytes())?;
    Ok(report)
}
