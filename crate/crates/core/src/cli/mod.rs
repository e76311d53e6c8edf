//! Command-line interface: `gen-data`, `train`, `forecast`, `simulate` and
//! `certify`, plus `--from-manifest` to repeat a recorded run.
//!
//! Every command writes `manifest.json` into its output directory before it
//! starts work and rewrites it with output hashes once it finishes.
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use commands::SolutionBundle;
pub use config::{ConfigSource, Resolved, RunConfig, SimulateSection};
pub use manifest::{RunManifest, RunStatus, MANIFEST_FILE};

use crate::forecast::{ForecastError, Season};
use crate::guarantees::GuaranteeError;
use crate::hub::HubError;
use crate::mpc::MpcError;
use crate::sim::SimError;
use crate::timeutil::parse_timestamp;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Guarantee(#[from] GuaranteeError),
    #[error("io: {0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Guarantee(GuaranteeError::Input(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ehub",
    version,
    about = "Energy hub forecasting, scenario MPC and closed-loop simulation",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Repeat the run recorded in a manifest.
    #[arg(long, value_name = "MANIFEST")]
    pub from_manifest: Option<PathBuf>,
    /// Output directory of the repeated run (default: the recorded one).
    #[arg(long, requires = "from_manifest")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Write a synthetic demand and weather series.
    GenData(GenDataArgs),
    /// Fit seasonal electric and heat predictors.
    Train(TrainArgs),
    /// Sample demand trajectories at one hour, optionally solving the scenario program.
    Forecast(ForecastArgs),
    /// Closed-loop runs for several controllers.
    Simulate(SimulateArgs),
    /// Support-subsample certificate of a saved solution.
    Certify(CertifyArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `data.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seasons; default is every season present in the training range.
    #[arg(long, value_delimiter = ',', value_parser = parse_season)]
    pub seasons: Option<Vec<Season>>,
    /// First hour of the training range.
    #[arg(long, value_parser = parse_time)]
    pub from: Option<NaiveDateTime>,
    /// End of the training range (exclusive).
    #[arg(long, value_parser = parse_time)]
    pub to: Option<NaiveDateTime>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub models: PathBuf,
    /// First forecast hour.
    #[arg(long, value_parser = parse_time)]
    pub at: NaiveDateTime,
    /// Number of trajectories (overrides `sampler.m`).
    #[arg(long = "M", short = 'M')]
    pub m: Option<usize>,
    /// Horizon in hours (overrides `mpc.horizon`).
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draw with zero variance: every trajectory equals the recursive mean.
    #[arg(long)]
    pub zero_variance: bool,
    /// Solve the scenario program and write the solution bundle here
    /// (relative paths are inside `--out`).
    #[arg(long)]
    pub solve_out: Option<PathBuf>,
    /// Start of a one-step residual evaluation range.
    #[arg(long, value_parser = parse_time, requires = "residuals_to")]
    pub residuals_from: Option<NaiveDateTime>,
    #[arg(long, value_parser = parse_time, requires = "residuals_from")]
    pub residuals_to: Option<NaiveDateTime>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Pd,
    Scenario,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Required unless only `pd` runs.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "pd,scenario")]
    pub controllers: Vec<ControllerKind>,
    /// Scenario counts of the scenario controller.
    #[arg(long = "M", short = 'M', value_delimiter = ',', default_value = "10")]
    pub m: Vec<usize>,
    /// Sampling seeds of the scenario controller.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, value_parser = parse_time)]
    pub start: NaiveDateTime,
    /// Exclusive.
    #[arg(long, value_parser = parse_time)]
    pub end: NaiveDateTime,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CertifyArgs {
    /// Solution bundle written by `forecast --solve-out`.
    #[arg(long)]
    pub solution: PathBuf,
    /// Scenario CSV the solution was computed from.
    #[arg(long)]
    pub scenarios: PathBuf,
    /// Overrides `guarantees.beta`.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_time(s: &str) -> Result<NaiveDateTime, String> {
    parse_timestamp(s).ok_or_else(|| format!("'{s}' is not a timestamp (YYYY-MM-DDTHH:MM:SS)"))
}

fn parse_season(s: &str) -> Result<Season, String> {
    Season::ALL
        .into_iter()
        .find(|x| x.name() == s.trim().to_ascii_lowercase())
        .ok_or_else(|| format!("unknown season '{s}' (winter, spring, summer, autumn)"))
}

impl Command {
    pub fn out(&self) -> &Path {
        match self {
            Command::GenData(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Forecast(a) => &a.out,
            Command::Simulate(a) => &a.out,
            Command::Certify(a) => &a.out,
        }
    }

    fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::GenData(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Forecast(a) => a.out = out,
            Command::Simulate(a) => a.out = out,
            Command::Certify(a) => a.out = out,
        }
    }

    pub fn config_path(&self) -> Option<&Path> {
        match self {
            Command::GenData(a) => Some(&a.config),
            Command::Train(a) => Some(&a.config),
            Command::Forecast(a) => Some(&a.config),
            Command::Simulate(a) => Some(&a.config),
            Command::Certify(a) => a.config.as_deref(),
        }
    }

    /// Every path argument made absolute against the working directory.
    fn absolutized(&self) -> Command {
        use manifest::absolute as abs;
        let mut c = self.clone();
        match &mut c {
            Command::GenData(a) => {
                a.config = abs(&a.config);
                a.out = abs(&a.out);
            }
            Command::Train(a) => {
                a.config = abs(&a.config);
                a.data = abs(&a.data);
                a.out = abs(&a.out);
            }
            Command::Forecast(a) => {
                a.config = abs(&a.config);
                a.data = abs(&a.data);
                a.models = abs(&a.models);
                a.out = abs(&a.out);
            }
            Command::Simulate(a) => {
                a.config = abs(&a.config);
                a.data = abs(&a.data);
                a.models = a.models.as_deref().map(abs);
                a.out = abs(&a.out);
            }
            Command::Certify(a) => {
                a.solution = abs(&a.solution);
                a.scenarios = abs(&a.scenarios);
                a.config = a.config.as_deref().map(abs);
                a.out = abs(&a.out);
            }
        }
        c
    }

    /// Input files whose hashes go into the manifest.
    fn input_files(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut files: Vec<PathBuf> = self.config_path().map(Path::to_path_buf).into_iter().collect();
        match self {
            Command::GenData(_) => {}
            Command::Train(a) => files.push(a.data.clone()),
            Command::Forecast(a) => {
                files.push(a.data.clone());
                files.extend(manifest::model_files(&a.models)?);
            }
            Command::Simulate(a) => {
                files.push(a.data.clone());
                if let Some(m) = &a.models {
                    files.extend(manifest::model_files(m)?);
                }
            }
            Command::Certify(a) => {
                files.push(a.solution.clone());
                files.push(a.scenarios.clone());
            }
        }
        Ok(files)
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: Cli) -> Result<(), CliError> {
    match (cli.from_manifest, cli.command) {
        (Some(path), _) => rerun(&path, cli.out),
        (None, Some(cmd)) => {
            let cmd = cmd.absolutized();
            let source = match cmd.config_path() {
                Some(p) => Some(ConfigSource::read(p)?),
                None => None,
            };
            execute(&cmd, source)
        }
        (None, None) => Err(CliError::Usage("a subcommand or --from-manifest is required".into())),
    }
}

fn rerun(path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let recorded = RunManifest::read(path)?;
    recorded.check_inputs()?;
    let mut cmd = recorded.command.clone();
    if let Some(out) = out {
        cmd.set_out(manifest::absolute(&out));
    }
    let source = recorded.config_text.map(|text| ConfigSource { path: recorded.config_path, text });
    execute(&cmd, source)
}

/// Writes the manifest, runs the command and records its outcome.
pub fn execute(cmd: &Command, source: Option<ConfigSource>) -> Result<(), CliError> {
    let resolved = match &source {
        Some(s) => Some(s.resolve()?),
        None => None,
    };
    let out = cmd.out().to_path_buf();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut inputs = std::collections::BTreeMap::new();
    for f in cmd.input_files()? {
        let h = manifest::sha256_file(&f).map_err(|e| CliError::Usage(format!("input {}: {e}", f.display())))?;
        inputs.insert(f, h);
    }
    let mut record = RunManifest {
        manifest_version: manifest::MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: cmd.clone(),
        config_path: source.as_ref().and_then(|s| s.path.clone()),
        config_text: source.as_ref().map(|s| s.text.clone()),
        inputs,
        outputs: Default::default(),
        status: RunStatus::Running,
        error: None,
    };
    record.write(&out)?;
    let result = commands::dispatch(cmd, resolved.as_ref());
    record.outputs = manifest::output_hashes(&out)?;
    match &result {
        Ok(()) => record.status = RunStatus::Complete,
        Err(e) => {
            record.status = RunStatus::Failed;
            record.error = Some(e.to_string());
        }
    }
    record.write(&out)?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simulate_lists() {
        let cli = Cli::try_parse_from([
            "ehub", "simulate", "--config", "c.toml", "--data", "d.csv", "--models", "m", "--controllers",
            "pd,scenario", "--M", "1,3,10", "--seeds", "1,2", "--start", "2021-01-10", "--end",
            "2021-01-12T00:00:00", "--out", "o",
        ])
        .unwrap();
        let Some(Command::Simulate(a)) = cli.command else { panic!("not simulate") };
        assert_eq!(a.controllers, vec![ControllerKind::Pd, ControllerKind::Scenario]);
        assert_eq!(a.m, vec![1, 3, 10]);
        assert_eq!(a.seeds, vec![1, 2]);
        assert_eq!(a.jobs, 1);
    }

    #[test]
    fn parses_seasons() {
        let cli = Cli::try_parse_from([
            "ehub", "train", "--config", "c", "--data", "d", "--seasons", "winter,Summer", "--out", "o",
        ])
        .unwrap();
        let Some(Command::Train(a)) = cli.command else { panic!("not train") };
        assert_eq!(a.seasons, Some(vec![Season::Winter, Season::Summer]));
        assert!(Cli::try_parse_from(["ehub", "train", "--config", "c", "--data", "d", "--seasons", "monsoon"]).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["ehub", "forecast", "--config", "c"]), 2);
        assert_eq!(run(["ehub"]), 2);
        assert_eq!(run(["ehub", "gen-data", "--config", "/nonexistent/c.toml", "--out", "/tmp/x"]), 2);
    }

    #[test]
    fn command_round_trips_through_json() {
        let cmd = Command::Certify(CertifyArgs {
            solution: "/a/s.json".into(),
            scenarios: "/a/t.csv".into(),
            beta: Some(1e-3),
            config: None,
            out: "/a/o".into(),
        });
        let text = serde_json::to_string(&cmd).unwrap();
        assert!(text.contains("\"name\":\"certify\""));
        assert_eq!(serde_json::from_str::<Command>(&text).unwrap(), cmd);
    }
}
