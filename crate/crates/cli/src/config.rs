//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cogcap::fading::FadingModel;
use cogcap::optimizer::{db_to_watts, SystemParams};
use cogcap::sensing::{DetectorMethod, SensingParams, SensingPerformance};
use cogcap::statemodel::MAX_CHANNELS;

use crate::CliError;

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "channels",
    "frame",
    "sensing",
    "bandwidth",
    "theta",
    "rho",
    "noise_var",
    "signal_var",
    "primary_noise_var",
    "iavg",
    "iavg_db",
    "fading",
    "nakagami_m",
    "pd",
    "pf",
    "peak_power",
    "detector",
    "sensing_bandwidth",
    "sensing_signal_var",
    "sensing_durations",
    "gamma_grid",
    "pd_grid",
    "channels_list",
    "iavg_db_grid",
    "iavg_db_list",
    "frames",
    "queue_frames",
    "seed",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemParams,
    /// Noise variance at the primary receiver; `σ²_np·B_c` is the 0 dB interference level.
    pub primary_noise_var: f64,
    pub detector: DetectorMethod,
    pub sensing_bandwidth: f64,
    /// Primary-signal variance seen by the energy detector (W).
    pub sensing_signal_var: f64,
    pub sensing_durations: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub pd_grid: Vec<f64>,
    pub channels_list: Vec<u32>,
    pub iavg_db_grid: Vec<f64>,
    pub iavg_db_list: Vec<f64>,
    pub frames: u64,
    /// Queue trace length; defaults to ten times `frames`.
    pub queue_frames: Option<u64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemParams::default(),
            primary_noise_var: 1e-4,
            detector: DetectorMethod::ExactChiSquare,
            sensing_bandwidth: 1e4,
            sensing_signal_var: 1e-5,
            sensing_durations: vec![1e-4, 1e-3, 1e-2],
            gamma_grid: linspace(0.0, 3e-4, 61),
            pd_grid: linspace(0.05, 0.995, 20),
            channels_list: vec![1, 2, 5, 10],
            iavg_db_grid: linspace(-40.0, 0.0, 21),
            iavg_db_list: vec![-10.0, 0.0],
            frames: 1_000_000,
            queue_frames: None,
            seed: 1,
            out_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        let mut iavg_db = None;
        let mut iavg = None;
        let mut nakagami_m = None;
        let mut fading = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Config(format!("line {line_no}: {msg}"));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let key = *KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if let Some(prev) = seen.insert(key, line_no) {
                return Err(err(format!(
                    "duplicate key `{key}` (first set on line {prev})"
                )));
            }
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("`{key}` expects a number, got `{value}`")))
            };
            let int = || {
                value.parse::<u64>().map_err(|_| {
                    err(format!(
                        "`{key}` expects a nonnegative integer, got `{value}`"
                    ))
                })
            };
            let grid = || parse_grid(value).map_err(|m| err(format!("`{key}`: {m}")));
            let s = &mut cfg.system;
            match key {
                "channels" => s.channels = small_int(int()?).map_err(err)?,
                "frame" => s.frame = num()?,
                "sensing" => s.sensing = num()?,
                "bandwidth" => s.bandwidth = num()?,
                "theta" => s.theta = num()?,
                "rho" => s.rho = num()?,
                "noise_var" => s.noise_var = num()?,
                "signal_var" => s.signal_var = num()?,
                "primary_noise_var" => cfg.primary_noise_var = num()?,
                "iavg" => iavg = Some(num()?),
                "iavg_db" => iavg_db = Some(num()?),
                "fading" => {
                    fading = Some(match value.to_ascii_lowercase().as_str() {
                        "rayleigh" => false,
                        "nakagami" => true,
                        _ => {
                            return Err(err(format!(
                                "`fading` expects rayleigh or nakagami, got `{value}`"
                            )))
                        }
                    })
                }
                "nakagami_m" => nakagami_m = Some(small_int(int()?).map_err(err)?),
                "pd" => s.perf.pd = num()?,
                "pf" => s.perf.pf = num()?,
                "peak_power" => {
                    s.peak_power = match value.to_ascii_lowercase().as_str() {
                        "none" => None,
                        _ => Some(num()?),
                    }
                }
                "detector" => {
                    cfg.detector = match value.to_ascii_lowercase().as_str() {
                        "exact" => DetectorMethod::ExactChiSquare,
                        "gaussian" => DetectorMethod::GaussianApprox,
                        _ => {
                            return Err(err(format!(
                                "`detector` expects exact or gaussian, got `{value}`"
                            )))
                        }
                    }
                }
                "sensing_bandwidth" => cfg.sensing_bandwidth = num()?,
                "sensing_signal_var" => cfg.sensing_signal_var = num()?,
                "sensing_durations" => cfg.sensing_durations = grid()?,
                "gamma_grid" => cfg.gamma_grid = grid()?,
                "pd_grid" => cfg.pd_grid = grid()?,
                "channels_list" => {
                    cfg.channels_list = grid()?
                        .into_iter()
                        .map(|v| {
                            if v.fract() == 0.0 && (1.0..=f64::from(u32::MAX)).contains(&v) {
                                Ok(v as u32)
                            } else {
                                Err(err(format!(
                                    "`channels_list` entries must be positive integers, got {v}"
                                )))
                            }
                        })
                        .collect::<Result<_, _>>()?
                }
                "iavg_db_grid" => cfg.iavg_db_grid = grid()?,
                "iavg_db_list" => cfg.iavg_db_list = grid()?,
                "frames" => cfg.frames = int()?,
                "queue_frames" => cfg.queue_frames = Some(int()?),
                "seed" => cfg.seed = int()?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                _ => unreachable!("key list and match arms agree"),
            }
        }

        cfg.system.interference_cap = match (iavg, iavg_db) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "set only one of `iavg` and `iavg_db`".into(),
                ))
            }
            (Some(w), None) => w,
            (None, Some(db)) => db_to_watts(db, cfg.iavg_reference()),
            (None, None) => db_to_watts(-40.0, cfg.iavg_reference()),
        };
        cfg.system.model = match (fading, nakagami_m) {
            (Some(true), m) => FadingModel::Nakagami { m: m.unwrap_or(1) },
            (_, Some(_)) => {
                return Err(CliError::Config(
                    "`nakagami_m` requires `fading = nakagami`".into(),
                ))
            }
            _ => FadingModel::Rayleigh,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.system.interference_cap > 0.0) {
            return bad(format!(
                "average interference limit must be positive, got {} W",
                self.system.interference_cap
            ));
        }
        self.system
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sensing_params(self.system.sensing)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.primary_noise_var > 0.0 && self.primary_noise_var.is_finite()) {
            return bad("`primary_noise_var` must be positive".into());
        }
        for (name, grid) in [
            ("sensing_durations", &self.sensing_durations),
            ("gamma_grid", &self.gamma_grid),
            ("pd_grid", &self.pd_grid),
            ("iavg_db_grid", &self.iavg_db_grid),
            ("iavg_db_list", &self.iavg_db_list),
        ] {
            check_sorted(name, grid)?;
        }
        if self.channels_list.iter().any(|&m| m > MAX_CHANNELS) {
            return bad(format!(
                "`channels_list` entries must not exceed {MAX_CHANNELS}"
            ));
        }
        let channels: Vec<f64> = self.channels_list.iter().map(|&m| f64::from(m)).collect();
        check_sorted("channels_list", &channels)?;
        if self.sensing_durations.iter().any(|&n| !(n > 0.0)) {
            return bad("`sensing_durations` must be positive".into());
        }
        if self.gamma_grid.iter().any(|&g| g < 0.0) {
            return bad("`gamma_grid` must be nonnegative".into());
        }
        if self.pd_grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return bad("`pd_grid` entries must lie strictly between 0 and 1".into());
        }
        if self.frames == 0 || self.queue_frames == Some(0) {
            return bad("frame counts must be positive".into());
        }
        Ok(())
    }

    /// Detector configuration for sensing duration `duration`.
    pub fn sensing_params(&self, duration: f64) -> SensingParams {
        SensingParams {
            duration,
            bandwidth: self.sensing_bandwidth,
            noise_var: self.system.noise_var,
            signal_var: self.sensing_signal_var,
            threshold: self.system.noise_var,
            method: self.detector,
        }
    }

    pub fn queue_frames(&self) -> u64 {
        self.queue_frames.unwrap_or(self.frames.saturating_mul(10))
    }

    /// System parameters with `M`, `I_avg` (dB) and sensing performance replaced.
    pub fn system_at(
        &self,
        channels: u32,
        iavg_db: Option<f64>,
        perf: Option<SensingPerformance>,
    ) -> SystemParams {
        let mut s = self.system;
        s.channels = channels;
        if let Some(db) = iavg_db {
            s.interference_cap = db_to_watts(db, self.iavg_reference());
        }
        if let Some(perf) = perf {
            s.perf = perf;
        }
        s
    }

    /// `σ²_np·B_c` (W).
    pub fn iavg_reference(&self) -> f64 {
        self.primary_noise_var * self.system.bandwidth
    }

    pub fn iavg_db(&self) -> f64 {
        10.0 * (self.system.interference_cap / self.iavg_reference()).log10()
    }
}

fn small_int(v: u64) -> Result<u32, String> {
    u32::try_from(v).map_err(|_| format!("value {v} is too large"))
}

/// Parses `a, b, c` or `lin(start, stop, count)`.
pub fn parse_grid(value: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        let s = s.trim();
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`{s}` is not a finite number"))
    };
    if let Some(args) = value.strip_prefix("lin(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').collect();
        if parts.len() != 3 {
            return Err("lin(start, stop, count) takes three arguments".into());
        }
        let count = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("`{}` is not a point count", parts[2].trim()))?;
        if count == 0 {
            return Err("grid must be nonempty".into());
        }
        return Ok(linspace(num(parts[0])?, num(parts[1])?, count));
    }
    let grid = value.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        return Err("grid must be nonempty".into());
    }
    Ok(grid)
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let step = (stop - start) / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                stop
            } else {
                start + step * i as f64
            }
        })
        .collect()
}

fn check_sorted(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(CliError::Config(format!("`{name}` must be nonempty")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Config(format!(
            "`{name}` must be strictly increasing"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_err(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.system.interference_cap, 1e-4);
        assert_eq!(cfg.queue_frames(), 10_000_000);
    }

    #[test]
    fn parses_every_kind_of_value() {
        let cfg = ExperimentConfig::parse(
            "channels = 5  # trailing comment\n\
             fading = Nakagami\nnakagami_m = 3\n\
             primary_noise_var = 1e-3\niavg_db = -10\n\
             peak_power = 2.5\ndetector = gaussian\n\
             pd_grid = lin(0.1, 0.9, 5)\nchannels_list = 1, 10\n\
             seed = 9\nout_dir = runs/a\n",
        )
        .unwrap();
        assert_eq!(cfg.system.channels, 5);
        assert_eq!(cfg.system.model, FadingModel::Nakagami { m: 3 });
        assert!((cfg.system.interference_cap - 1.0).abs() < 1e-12);
        assert!((cfg.iavg_db() + 10.0).abs() < 1e-12);
        assert_eq!(cfg.system.peak_power, Some(2.5));
        assert_eq!(cfg.detector, DetectorMethod::GaussianApprox);
        assert_eq!(
            cfg.pd_grid,
            vec![0.1, 0.30000000000000004, 0.5, 0.7000000000000001, 0.9]
        );
        assert_eq!(cfg.channels_list, vec![1, 10]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out_dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn diagnostics_name_the_line() {
        assert!(config_err("theta = 0.1\nbogus = 3\n").starts_with("line 2: unknown key"));
        assert!(config_err("\n\ntheta 0.1\n").starts_with("line 3: expected"));
        assert!(config_err("rho = high\n").starts_with("line 1: `rho` expects a number"));
        assert!(config_err("rho = 0.1\nrho = 0.2\n").contains("first set on line 1"));
        assert!(config_err("pd_grid = lin(0, 1)\n").starts_with("line 1: `pd_grid`"));
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(config_err("iavg = 0\n").contains("must be positive"));
        assert!(config_err("iavg = -1e-3\n").contains("must be positive"));
        assert!(config_err("iavg = 1\niavg_db = 0\n").contains("only one"));
        assert!(config_err("pd_grid = 0.5, 0.4\n").contains("strictly increasing"));
        assert!(config_err("pd_grid = 0.5, 1\n").contains("strictly between"));
        assert!(config_err("rho = 1.5\n").contains("rho"));
        assert!(config_err("sensing = 2\n").contains("sensing time"));
        assert!(config_err("nakagami_m = 2\n").contains("requires"));
        assert!(config_err("fading = rician\n").contains("rayleigh or nakagami"));
        assert!(config_err("frames = 0\n").contains("positive"));
        assert!(config_err("channels_list = 1, 2.5\n").contains("positive integers"));
    }

    #[test]
    fn linspace_hits_endpoints() {
        assert_eq!(
            linspace(-40.0, 0.0, 5),
            vec![-40.0, -30.0, -20.0, -10.0, 0.0]
        );
        assert_eq!(linspace(3.0, 9.0, 1), vec![3.0]);
        assert_eq!(parse_grid(" 1 ,2,3 ").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_grid("1, nan").is_err());
    }
}
