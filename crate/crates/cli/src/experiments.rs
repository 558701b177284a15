//! Parameter sweeps emitted as CSV tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use cogcap::fading::FadingModel;
use cogcap::optimizer::{effective_capacity, solve_lambda, SystemParams};
use cogcap::sensing::{
    detector_performance, threshold_for_target, DetectorMethod, SensingPerformance, Target,
};
use cogcap::statemodel::{interference_probability, scenario_probabilities};

use crate::{write_artifact, CliError, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    SensingCurves,
    ScenarioProbs,
    EffcapVsPd,
    EffcapVsIavg,
    PintCurves,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::SensingCurves,
        Experiment::ScenarioProbs,
        Experiment::EffcapVsPd,
        Experiment::EffcapVsIavg,
        Experiment::PintCurves,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SensingCurves => "sensing-curves",
            Experiment::ScenarioProbs => "scenario-probs",
            Experiment::EffcapVsPd => "effcap-vs-pd",
            Experiment::EffcapVsIavg => "effcap-vs-iavg",
            Experiment::PintCurves => "pint-curves",
        }
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            Experiment::SensingCurves => &["gamma", "N", "pf", "pd"],
            Experiment::ScenarioProbs => &["pd", "pf", "M", "ps1", "ps2", "ps3", "ps4"],
            Experiment::EffcapVsPd => &["pd", "pf", "M", "iavg_db", "re_bits_s_hz", "lambda"],
            Experiment::EffcapVsIavg => &["iavg_db", "M", "re_bits_s_hz", "lambda"],
            Experiment::PintCurves => &["pd", "pf", "M", "p_int"],
        }
    }

    /// Whether `P_f` follows `P_d` along the detector ROC.
    pub fn roc_coupled(self) -> bool {
        matches!(
            self,
            Experiment::ScenarioProbs | Experiment::EffcapVsPd | Experiment::PintCurves
        )
    }

    pub fn csv_name(self) -> String {
        format!("{}.csv", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Real(f64),
    Count(u32),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Real(v) => write!(f, "{v:.16e}"),
            Cell::Count(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err =
            |e: csv::Error| CliError::output(Path::new("<csv>"), std::io::Error::other(e));
        w.write_record(self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_string))
                .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| CliError::output(Path::new("<csv>"), e.into_error()))
    }

    /// Values of column `name` as reals.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| *h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[j] {
                    Cell::Real(v) => v,
                    Cell::Count(n) => f64::from(n),
                })
                .collect(),
        )
    }
}

/// Sensing performance at target detection probability `pd` on the configured ROC.
pub fn roc_point(cfg: &ExperimentConfig, pd: f64) -> Result<SensingPerformance, CliError> {
    let params = cfg.sensing_params(cfg.system.sensing);
    let gamma = threshold_for_target(&params, Target::Detection(pd))?;
    let probs = detector_performance(&params.with_threshold(gamma))?;
    Ok(probs.into())
}

fn roc_points(cfg: &ExperimentConfig) -> Result<Vec<SensingPerformance>, CliError> {
    cfg.pd_grid
        .par_iter()
        .map(|&pd| roc_point(cfg, pd))
        .collect()
}

fn capacity_cells(p: &SystemParams) -> Result<[Cell; 2], CliError> {
    let pol = solve_lambda(p)?;
    let res = effective_capacity(&pol, p)?;
    Ok([Cell::Real(res.re), Cell::Real(res.lambda)])
}

pub fn run(exp: Experiment, cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let rows = match exp {
        Experiment::SensingCurves => {
            let jobs: Vec<(f64, f64)> = cfg
                .sensing_durations
                .iter()
                .flat_map(|&n| cfg.gamma_grid.iter().map(move |&g| (n, g)))
                .collect();
            jobs.par_iter()
                .map(|&(n, gamma)| {
                    let d = detector_performance(&cfg.sensing_params(n).with_threshold(gamma))?;
                    Ok(vec![
                        Cell::Real(gamma),
                        Cell::Real(n),
                        Cell::Real(d.pf),
                        Cell::Real(d.pd),
                    ])
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
        Experiment::ScenarioProbs => {
            let roc = roc_points(cfg)?;
            let mut rows = Vec::new();
            for &m in &cfg.channels_list {
                for perf in &roc {
                    let s = scenario_probabilities(&cfg.system_at(m, None, Some(*perf)).inputs())?;
                    let mut row = vec![Cell::Real(perf.pd), Cell::Real(perf.pf), Cell::Count(m)];
                    row.extend(s.as_array().map(Cell::Real));
                    rows.push(row);
                }
            }
            rows
        }
        Experiment::PintCurves => {
            let roc = roc_points(cfg)?;
            let mut rows = Vec::new();
            for &m in &cfg.channels_list {
                for perf in &roc {
                    let p =
                        interference_probability(&cfg.system_at(m, None, Some(*perf)).inputs())?;
                    rows.push(vec![
                        Cell::Real(perf.pd),
                        Cell::Real(perf.pf),
                        Cell::Count(m),
                        Cell::Real(p.p_int),
                    ]);
                }
            }
            rows
        }
        Experiment::EffcapVsPd => {
            let roc = roc_points(cfg)?;
            let mut jobs = Vec::new();
            for &db in &cfg.iavg_db_list {
                for &m in &cfg.channels_list {
                    for perf in &roc {
                        jobs.push((db, m, *perf));
                    }
                }
            }
            jobs.par_iter()
                .map(|&(db, m, perf)| {
                    let [re, lambda] = capacity_cells(&cfg.system_at(m, Some(db), Some(perf)))?;
                    Ok(vec![
                        Cell::Real(perf.pd),
                        Cell::Real(perf.pf),
                        Cell::Count(m),
                        Cell::Real(db),
                        re,
                        lambda,
                    ])
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
        Experiment::EffcapVsIavg => {
            let jobs: Vec<(u32, f64)> = cfg
                .channels_list
                .iter()
                .flat_map(|&m| cfg.iavg_db_grid.iter().map(move |&db| (m, db)))
                .collect();
            jobs.par_iter()
                .map(|&(m, db)| {
                    let [re, lambda] = capacity_cells(&cfg.system_at(m, Some(db), None))?;
                    Ok(vec![Cell::Real(db), Cell::Count(m), re, lambda])
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    Ok(Table {
        header: exp.header(),
        rows,
    })
}

/// Parameters behind a table, one `key = value` per line.
pub fn metadata(exp: Experiment, cfg: &ExperimentConfig) -> String {
    let s = &cfg.system;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("experiment", exp.name().into());
    line("columns", exp.header().join(","));
    if exp.roc_coupled() {
        line(
            "pf_coupling",
            "roc: threshold solved for each target pd, pf evaluated at that threshold".into(),
        );
    } else if exp != Experiment::SensingCurves {
        line(
            "pf_coupling",
            format!("fixed: pd = {}, pf = {}", s.perf.pd, s.perf.pf),
        );
    }
    let detector = match cfg.detector {
        DetectorMethod::ExactChiSquare => "exact",
        DetectorMethod::GaussianApprox => "gaussian",
    };
    line("detector", detector.into());
    line("sensing_bandwidth", format!("{}", cfg.sensing_bandwidth));
    line("sensing_signal_var", format!("{}", cfg.sensing_signal_var));
    line("noise_var", format!("{}", s.noise_var));
    if exp == Experiment::SensingCurves {
        return out;
    }
    line("sensing", format!("{}", s.sensing));
    line("rho", format!("{}", s.rho));
    if matches!(exp, Experiment::EffcapVsPd | Experiment::EffcapVsIavg) {
        let fading = match s.model {
            FadingModel::Rayleigh => "rayleigh".to_string(),
            FadingModel::Nakagami { m } => format!("nakagami m = {m}"),
        };
        line("fading", fading);
        line("frame", format!("{}", s.frame));
        line("bandwidth", format!("{}", s.bandwidth));
        line("theta", format!("{}", s.theta));
        line("signal_var", format!("{}", s.signal_var));
        line("iavg_reference_w", format!("{}", cfg.iavg_reference()));
        line(
            "peak_power",
            s.peak_power.map_or("none".into(), |p| format!("{p}")),
        );
        line(
            "lambda_note",
            "0 when the interference limit is slack or below the smallest positive double".into(),
        );
    }
    out
}

/// Runs `exp` and writes `<name>.csv` and `<name>.csv.meta` into `dir`.
pub fn run_and_write(
    exp: Experiment,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<PathBuf, CliError> {
    let table = run(exp, cfg)?;
    let csv = table.to_csv()?;
    let path = write_artifact(dir, &exp.csv_name(), &csv)?;
    write_artifact(
        dir,
        &format!("{}.meta", exp.csv_name()),
        metadata(exp, cfg).as_bytes(),
    )?;
    Ok(path)
}
