use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use reachdim_lab::config::{Experiment, ExperimentConfig};
use reachdim_lab::error::{LabError, LabResult};
use reachdim_lab::{experiments, io, table};

#[derive(Parser)]
#[command(
    name = "reachdim",
    version,
    about = "Attained-state dimension experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-scale sampling (1000 policies) instead of the reduced default.
    #[arg(long)]
    full: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Attained-set dimension of the chain integrator across d_s.
    ToyDim(Common),
    /// Truncation-error order of the Lie series.
    LieCheck(Common),
    /// TWO-NN estimate of a CSV point cloud, printed as JSON.
    EstimateDim {
        #[command(flatten)]
        common: Common,
        /// CSV file with a header row and one point per line.
        input: Option<PathBuf>,
    },
    /// Singular-value profile of the attained set across δ.
    LocalSpectrum(Common),
    /// Across-seed statistics of trained policies across widths.
    TrainStats(Common),
    /// Kalman rank test of a linear system.
    Reachability(Common),
}

fn resolve(experiment: Experiment, common: &Common) -> LabResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(experiment),
    };
    if cfg.experiment != experiment {
        return Err(LabError::Config(format!(
            "config is for {}, subcommand is {}",
            cfg.experiment.name(),
            experiment.name()
        )));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.full |= common.full;
    cfg.validate()?;
    Ok(cfg)
}

fn write_outputs(cfg: &ExperimentConfig, report: &experiments::Report, secs: f64) -> LabResult<()> {
    let dir: &Path = &cfg.output;
    report.table.write(dir, &table::git_describe())?;
    io::write_text(&dir.join("config.json"), &cfg.to_json())?;
    io::write_text(
        &dir.join("runtime.json"),
        &format!("{{\n  \"seconds\": {secs:.3}\n}}\n"),
    )?;
    if let Some(svg) = &report.svg {
        io::write_text(&dir.join("plot.svg"), svg)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> LabResult<()> {
    let (experiment, common, input) = match cli.command {
        Command::ToyDim(c) => (Experiment::ToyDim, c, None),
        Command::LieCheck(c) => (Experiment::LieCheck, c, None),
        Command::EstimateDim { common, input } => (Experiment::EstimateDim, common, input),
        Command::LocalSpectrum(c) => (Experiment::LocalSpectrum, c, None),
        Command::TrainStats(c) => (Experiment::TrainStats, c, None),
        Command::Reachability(c) => (Experiment::Reachability, c, None),
    };
    let mut cfg = resolve(experiment, &common)?;
    if input.is_some() {
        cfg.input = input;
    }
    let start = Instant::now();
    let report = experiments::run(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    print!("{}", report.text);
    write_outputs(&cfg, &report, secs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
