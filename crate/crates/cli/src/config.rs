//! Effective run configuration: command-line flags layered over an optional
//! `key = value` config file, layered over defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use growthcast::ensemble::DEFAULT_SIGMA_MIN_COUNT;
use growthcast::{EnsembleConfig, FitMethod, FitOptions, DEFAULT_QC_THRESHOLD};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_HORIZON: usize = 30;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    #[default]
    RateRegression,
    DiscreteMap,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::RateRegression => FitMethod::RateRegression,
            MethodArg::DiscreteMap => FitMethod::DiscreteMap,
        }
    }
}

/// Flags shared by the data-driven subcommands. Every field is optional so
/// that a config file can fill what the command line leaves out.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` file with defaults for any of the flags below.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// CSV with header `date,day,confirmed,cumulative`.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Bundled dataset name (see `growthcast datasets`).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Last day of training data; defaults to the last observed day.
    #[arg(long, allow_hyphen_values = true)]
    pub issuance_day: Option<i64>,
    /// Forecast length in days.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub members: Option<usize>,
    /// Members whose training days are shifted one day forward.
    #[arg(long)]
    pub lag_forward: Option<usize>,
    /// Members whose training days are shifted one day backward.
    #[arg(long)]
    pub lag_backward: Option<usize>,
    /// Perturbation std as a multiple of the observed increment std.
    #[arg(long)]
    pub sigma_scale: Option<f64>,
    /// Smallest previous-day count whose fractional increment enters sigma_obs.
    #[arg(long)]
    pub sigma_min_count: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spike ratio above the neighbour mean that triggers a QC replacement.
    #[arg(long)]
    pub qc_threshold: Option<f64>,
    /// Consecutive negative-concavity days required before forecasting; 0 disables the check.
    #[arg(long)]
    pub readiness_k: Option<usize>,
    #[arg(long, value_enum)]
    pub fit_method: Option<MethodArg>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Directory that receives the output files.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Forecast JSON written by `growthcast forecast`; without it the
    /// deterministic fit at the issuance day is scored.
    #[arg(long, value_name = "FILE")]
    pub forecast: Option<PathBuf>,
    /// First scored day.
    #[arg(long, allow_hyphen_values = true)]
    pub first: Option<i64>,
    /// Last scored day.
    #[arg(long, allow_hyphen_values = true)]
    pub last: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Dataset(String),
    Input(PathBuf),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dataset(name) => write!(f, "dataset {name}"),
            Self::Input(path) => write!(f, "{}", path.display()),
        }
    }
}

/// Everything a run depends on. Echoed into every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub source: Source,
    pub issuance_day: Option<i64>,
    pub horizon_days: usize,
    pub seed: u64,
    pub qc_threshold: f64,
    pub readiness_k: usize,
    pub format: Format,
    pub out_dir: Option<PathBuf>,
    pub ensemble: EnsembleSettings,
    pub fit: FitOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forecast: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub n_members: usize,
    pub n_lag_forward: usize,
    pub n_lag_backward: usize,
    pub sigma_scale: f64,
    pub sigma_min_count: f64,
}

impl RunConfig {
    pub fn resolve(command: &str, args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let input = pick(&args.input, file.get::<PathBuf>("input")?);
        let dataset = pick(&args.dataset, file.get::<String>("dataset")?);
        let source = match (dataset, input) {
            (Some(name), None) => Source::Dataset(name),
            (None, Some(path)) => Source::Input(path),
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "give either --dataset or --input, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Usage(
                    "one of --dataset or --input is required".into(),
                ))
            }
        };
        let defaults = EnsembleConfig::new(0, DEFAULT_HORIZON, DEFAULT_SEED);
        let ensemble = EnsembleSettings {
            n_members: pick(&args.members, file.get("members")?).unwrap_or(defaults.n_members),
            n_lag_forward: pick(&args.lag_forward, file.get("lag_forward")?)
                .unwrap_or(defaults.n_lag_forward),
            n_lag_backward: pick(&args.lag_backward, file.get("lag_backward")?)
                .unwrap_or(defaults.n_lag_backward),
            sigma_scale: pick(&args.sigma_scale, file.get("sigma_scale")?)
                .unwrap_or(defaults.sigma_scale),
            sigma_min_count: pick(&args.sigma_min_count, file.get("sigma_min_count")?)
                .unwrap_or(DEFAULT_SIGMA_MIN_COUNT),
        };
        let method: MethodArg =
            pick(&args.fit_method, file.get_enum("fit_method")?).unwrap_or_default();
        let config = Self {
            command: command.to_string(),
            source,
            issuance_day: pick(&args.issuance_day, file.get("issuance_day")?),
            horizon_days: pick(&args.horizon, file.get("horizon")?).unwrap_or(DEFAULT_HORIZON),
            seed: pick(&args.seed, file.get("seed")?).unwrap_or(DEFAULT_SEED),
            qc_threshold: pick(&args.qc_threshold, file.get("qc_threshold")?)
                .unwrap_or(DEFAULT_QC_THRESHOLD),
            readiness_k: pick(&args.readiness_k, file.get("readiness_k")?)
                .unwrap_or(growthcast::diagnostics::DEFAULT_READINESS_K),
            format: pick(&args.format, file.get_enum("format")?).unwrap_or_default(),
            out_dir: pick(&args.out_dir, file.get("out_dir")?),
            ensemble,
            fit: FitOptions {
                method: method.into(),
                ..FitOptions::default()
            },
            forecast: None,
            first: None,
            last: None,
        };
        file.reject_unknown()?;
        Ok(config)
    }

    pub fn resolve_verify(args: &VerifyArgs) -> Result<Self, CliError> {
        let mut config = Self::resolve("verify", &args.run)?;
        config.forecast = args.forecast.clone();
        config.first = args.first;
        config.last = args.last;
        Ok(config)
    }

    pub fn ensemble_config(&self, issuance_day: i64) -> EnsembleConfig {
        EnsembleConfig {
            n_members: self.ensemble.n_members,
            n_lag_forward: self.ensemble.n_lag_forward,
            n_lag_backward: self.ensemble.n_lag_backward,
            sigma_scale: self.ensemble.sigma_scale,
            sigma_min_count: self.ensemble.sigma_min_count,
            seed: self.seed,
            horizon_days: self.horizon_days,
            issuance_day,
            readiness_k: (self.readiness_k > 0).then_some(self.readiness_k),
            fit: self.fit,
        }
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: Option<T>) -> Option<T> {
    flag.clone().or(file)
}

/// Parsed `key = value` lines. Keys use the flag names, with `-` or `_`.
#[derive(Debug, Default)]
struct ConfigFile {
    path: PathBuf,
    values: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<Vec<String>>,
}

impl ConfigFile {
    fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    i + 1
                )));
            };
            let key = key.trim().trim_start_matches("--").replace('-', "_");
            values.insert(key, (i + 1, value.trim().to_string()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            values,
            used: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.used.borrow_mut().push(key.to_string());
        self.values.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<T>().map_err(|e| {
                    CliError::Usage(format!(
                        "{}:{line}: invalid {key} `{v}`: {e}",
                        self.path.display()
                    ))
                })
            })
            .transpose()
    }

    fn get_enum<T: ValueEnum>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|(line, v)| {
                T::from_str(&v.replace('_', "-"), true).map_err(|e| {
                    CliError::Usage(format!(
                        "{}:{line}: invalid {key} `{v}`: {e}",
                        self.path.display()
                    ))
                })
            })
            .transpose()
    }

    fn reject_unknown(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        match self.values.iter().find(|(k, _)| !used.contains(k)) {
            Some((key, (line, _))) => Err(CliError::Usage(format!(
                "{}:{line}: unknown key `{key}`",
                self.path.display()
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_win_over_file() {
        let f = write(
            "dataset = italy\nseed = 9\nhorizon = 12 # days\n--sigma-scale = 0.2\nformat = csv\n",
        );
        let args = RunArgs {
            config: Some(f.path().to_path_buf()),
            seed: Some(3),
            ..Default::default()
        };
        let c = RunConfig::resolve("forecast", &args).unwrap();
        assert_eq!(c.source, Source::Dataset("italy".into()));
        assert_eq!(c.seed, 3);
        assert_eq!(c.horizon_days, 12);
        assert_eq!(c.ensemble.sigma_scale, 0.2);
        assert_eq!(c.format, Format::Csv);
    }

    #[test]
    fn defaults() {
        let args = RunArgs {
            dataset: Some("china".into()),
            ..Default::default()
        };
        let c = RunConfig::resolve("fit", &args).unwrap();
        assert_eq!(c.horizon_days, 30);
        assert_eq!(c.ensemble.n_members, 30);
        assert_eq!(c.readiness_k, 2);
        assert_eq!(c.ensemble_config(25).readiness_k, Some(2));
    }

    #[test]
    fn bad_files_are_usage_errors() {
        for text in [
            "dataset china\n",
            "dataset = china\nbogus = 1\n",
            "dataset = china\nseed = x\n",
        ] {
            let f = write(text);
            let args = RunArgs {
                config: Some(f.path().to_path_buf()),
                ..Default::default()
            };
            let err = RunConfig::resolve("fit", &args).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text:?}: {err}");
        }
    }

    #[test]
    fn source_is_required_and_exclusive() {
        assert!(RunConfig::resolve("fit", &RunArgs::default()).is_err());
        let both = RunArgs {
            dataset: Some("china".into()),
            input: Some("x.csv".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve("fit", &both).is_err());
    }
}
