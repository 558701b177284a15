use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cogcap_cli::experiments::{self, Experiment};
use cogcap_cli::plot::gnuplot_script;
use cogcap_cli::validate::{self, CheckStatus};
use cogcap_cli::{write_artifact, CliError, ExperimentConfig};

/// Effective capacity of a cognitive-radio link: sweeps and Monte Carlo validation.
#[derive(Debug, Parser)]
#[command(name = "cogcap", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo frames (overrides `frames`).
    #[arg(long, global = true)]
    frames: Option<u64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// P_f and P_d against the detection threshold for each sensing duration.
    SensingCurves,
    /// Scenario probabilities along the detector ROC.
    ScenarioProbs,
    /// Effective capacity along the detector ROC.
    EffcapVsPd,
    /// Effective capacity against the average interference limit.
    EffcapVsIavg,
    /// Probability of interfering with a primary user along the detector ROC.
    PintCurves,
    /// Compare analytic results with the frame simulator.
    Validate,
    /// Write a gnuplot script for an experiment's CSV.
    PlotScript {
        #[arg(value_enum)]
        experiment: Experiment,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = cli.frames {
        cfg.frames = frames;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    let exp = match &cli.command {
        Command::SensingCurves => Experiment::SensingCurves,
        Command::ScenarioProbs => Experiment::ScenarioProbs,
        Command::EffcapVsPd => Experiment::EffcapVsPd,
        Command::EffcapVsIavg => Experiment::EffcapVsIavg,
        Command::PintCurves => Experiment::PintCurves,
        Command::PlotScript { experiment } => {
            let name = format!("{}.gp", experiment.name());
            let path = write_artifact(
                &cfg.out_dir,
                &name,
                gnuplot_script(*experiment, &cfg).as_bytes(),
            )?;
            say(format!("wrote {}", path.display()));
            return Ok(());
        }
        Command::Validate => {
            let report = validate::run_and_write(&cfg, &cfg.out_dir)?;
            say(report.report());
            return match report.overall() {
                CheckStatus::Pass => Ok(()),
                CheckStatus::Inconclusive => {
                    eprintln!("warning: some comparisons are inconclusive; increase --frames");
                    Ok(())
                }
                CheckStatus::Fail => {
                    let failed: Vec<&str> = report
                        .checks
                        .iter()
                        .filter(|c| c.status == CheckStatus::Fail)
                        .map(|c| c.name.as_str())
                        .collect();
                    Err(CliError::ValidationFailed(failed.join(", ")))
                }
            };
        }
    };
    let path = experiments::run_and_write(exp, &cfg, &cfg.out_dir)?;
    say(format!("wrote {}", path.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
