use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use growthcast::diagnostics::DerivativeSeries;
use growthcast::fitting::FitQuality;
use growthcast::{
    bundled_dataset, derivatives, fit_quality, fit_with, generate, parse_csv, qc_correct,
    readiness, verify_deterministic, verify_ensemble, CaseSeries, EnsembleForecast, FitResult,
    QcReport, ReadinessVerdict, VerificationReport, BUNDLED_NAMES,
};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig, Source};
use crate::error::CliError;

/// What a command produced: the text for stdout, the files for `--out-dir`,
/// and an error to report after the outputs are written.
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<(&'static str, String)>,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn new(
        format: Format,
        (json_name, json): (&'static str, String),
        (csv_name, csv): (&'static str, String),
    ) -> Self {
        let stdout = match format {
            Format::Json => json.clone(),
            Format::Csv => csv.clone(),
        };
        Self {
            stdout,
            files: vec![(json_name, json), (csv_name, csv)],
            failure: None,
        }
    }

    pub fn write_files(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn load(config: &RunConfig) -> Result<(CaseSeries, QcReport), CliError> {
    let raw = match &config.source {
        Source::Dataset(name) => bundled_dataset(name)?,
        Source::Input(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            parse_csv(&text, &label)?
        }
    };
    Ok(qc_correct(&raw, config.qc_threshold)?)
}

/// Resolves the issuance day against the series and records it in the echo.
fn issuance(config: &mut RunConfig, series: &CaseSeries) -> Result<i64, CliError> {
    let day = config.issuance_day.unwrap_or(series.last_day());
    if !series.contains_day(day) {
        return Err(CliError::Usage(format!(
            "issuance day {day} is outside the observed days {}..={}",
            series.first_day(),
            series.last_day()
        )));
    }
    config.issuance_day = Some(day);
    Ok(day)
}

#[derive(Serialize)]
struct DatasetsEcho {
    command: &'static str,
    format: Format,
    out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct DatasetRow {
    name: &'static str,
    days: usize,
    first_day: i64,
    last_day: i64,
    first_date: Option<String>,
    last_date: Option<String>,
    last_cumulative: f64,
}

pub fn datasets(format: Format, out_dir: Option<PathBuf>) -> Result<Outcome, CliError> {
    let rows: Vec<DatasetRow> = BUNDLED_NAMES
        .iter()
        .map(|&name| {
            let s = bundled_dataset(name).expect("bundled names resolve");
            DatasetRow {
                name,
                days: s.len(),
                first_day: s.first_day(),
                last_day: s.last_day(),
                first_date: s.date(s.first_day()).map(|d| d.to_string()),
                last_date: s.date(s.last_day()).map(|d| d.to_string()),
                last_cumulative: *s.cumulative().last().unwrap(),
            }
        })
        .collect();
    let mut csv =
        String::from("name,days,first_day,last_day,first_date,last_date,last_cumulative\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.name,
            r.days,
            r.first_day,
            r.last_day,
            r.first_date.as_deref().unwrap_or(""),
            r.last_date.as_deref().unwrap_or(""),
            num(r.last_cumulative)
        );
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        config: DatasetsEcho,
        datasets: &'a [DatasetRow],
    }
    let json = to_json(&Doc {
        config: DatasetsEcho {
            command: "datasets",
            format,
            out_dir,
        },
        datasets: &rows,
    });
    Ok(Outcome::new(
        format,
        ("datasets.json", json),
        ("datasets.csv", csv),
    ))
}

pub fn fit(mut config: RunConfig) -> Result<Outcome, CliError> {
    let (series, qc) = load(&config)?;
    let last_day = issuance(&mut config, &series)?;
    let result = fit_with(&series, last_day, config.fit)?;

    let quality = |first: i64, last: i64| -> Option<FitQuality> {
        (result.valid_for_forecast() && first <= last)
            .then(|| fit_quality(&result, &series, first, last).ok())
            .flatten()
    };
    let first_scored = series.first_day() + 1;
    let doubling_time_days = series
        .value(last_day)
        .and_then(|e| result.params.doubling_time(e).ok());

    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        qc: &'a QcReport,
        fit: &'a FitResult,
        valid_for_forecast: bool,
        reason: Option<String>,
        doubling_time_days: Option<f64>,
        quality_training: Option<FitQuality>,
        quality_observed: Option<FitQuality>,
    }
    let doc = Doc {
        config: &config,
        qc: &qc,
        fit: &result,
        valid_for_forecast: result.valid_for_forecast(),
        reason: result.invalid_reason.map(|r| r.to_string()),
        doubling_time_days,
        quality_training: quality(first_scored, last_day),
        quality_observed: quality(first_scored, series.last_day()),
    };

    let end = series.last_day().max(last_day + config.horizon_days as i64);
    let curve = result.forecast_solution().ok();
    let mut csv = String::from("day,observed,fitted\n");
    for day in series.first_day()..=end {
        let fitted = curve.map(|s| s.at_day(day as f64));
        let _ = writeln!(csv, "{day},{},{}", opt(series.value(day)), opt(fitted));
    }

    let mut out = Outcome::new(config.format, ("fit.json", to_json(&doc)), ("fit.csv", csv));
    if let Some(reason) = result.invalid_reason {
        out.failure = Some(CliError::Collapse(format!(
            "fit through day {last_day} is not usable for forecasting: {reason}"
        )));
    }
    Ok(out)
}

pub fn diagnose(mut config: RunConfig) -> Result<Outcome, CliError> {
    let (series, qc) = load(&config)?;
    let last_day = issuance(&mut config, &series)?;
    let series = series.truncate_to(last_day)?;
    let der = derivatives(&series)?;
    let verdict = readiness(&series, config.readiness_k.max(1))?;

    let mut csv =
        String::from("day,increment,second_diff,smoothed_increment,smoothed_second_diff,ready\n");
    for (i, &day) in der.days.iter().enumerate() {
        let ready = verdict.first_ready_day.is_some_and(|r| day >= r);
        let _ = writeln!(
            csv,
            "{day},{},{},{},{},{ready}",
            opt(der.first[i]),
            opt(der.second[i]),
            opt(der.smoothed_first[i]),
            opt(der.smoothed_second[i]),
        );
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        qc: &'a QcReport,
        readiness: &'a ReadinessVerdict,
        concavity_turns_negative: Vec<i64>,
        derivatives: &'a DerivativeSeries,
    }
    let json = to_json(&Doc {
        config: &config,
        qc: &qc,
        readiness: &verdict,
        concavity_turns_negative: der.concavity_turns_negative(),
        derivatives: &der,
    });
    Ok(Outcome::new(
        config.format,
        ("diagnose.json", json),
        ("diagnose.csv", csv),
    ))
}

#[derive(Serialize, Deserialize)]
struct ForecastDoc {
    config: RunConfig,
    qc: QcReport,
    readiness: Option<ReadinessVerdict>,
    forecast: EnsembleForecast,
}

pub fn forecast(mut config: RunConfig) -> Result<Outcome, CliError> {
    let (series, qc) = load(&config)?;
    let day = issuance(&mut config, &series)?;
    let ens = config.ensemble_config(day);
    let verdict = match ens.readiness_k {
        Some(k) => Some(readiness(&series.truncate_to(day)?, k)?),
        None => None,
    };
    let fc = generate(&series, &ens)?;

    let mut fan_csv = String::from("day,min,q25,median,q75,max\n");
    for p in &fc.fan {
        let f = p.fan;
        let _ = writeln!(
            fan_csv,
            "{},{},{},{},{},{}",
            p.day,
            num(f.min),
            num(f.q25),
            num(f.median),
            num(f.q75),
            num(f.max)
        );
    }

    let mut members = String::from("member,lag,day,value\n");
    for m in &fc.members {
        if let growthcast::ensemble::MemberOutcome::Forecast {
            member,
            lag,
            values,
            ..
        } = m
        {
            for (d, v) in fc.days().zip(values) {
                let _ = writeln!(members, "{member},{},{d},{}", lag.days(), num(*v));
            }
        }
    }

    let last_fan = fc.days().last().unwrap_or(day);
    let mut dat = String::from("# day observed_used observed_held_out min q25 median q75 max\n");
    for d in series.first_day()..=series.last_day().max(last_fan) {
        let obs = series.value(d);
        let nan = |v: Option<f64>| v.map(num).unwrap_or_else(|| "NaN".into());
        let used = obs.filter(|_| d <= day);
        let held = obs.filter(|_| d > day);
        let f = fc.fan_at(d);
        let _ = writeln!(
            dat,
            "{d} {} {} {} {} {} {} {}",
            nan(used),
            nan(held),
            nan(f.map(|f| f.min)),
            nan(f.map(|f| f.q25)),
            nan(f.map(|f| f.median)),
            nan(f.map(|f| f.q75)),
            nan(f.map(|f| f.max)),
        );
    }

    let json = to_json(&ForecastDoc {
        config: config.clone(),
        qc,
        readiness: verdict,
        forecast: fc,
    });
    let mut out = Outcome::new(config.format, ("forecast.json", json), ("fan.csv", fan_csv));
    out.files.push(("members.csv", members));
    out.files.push(("forecast.dat", dat));
    Ok(out)
}

pub fn verify(mut config: RunConfig) -> Result<Outcome, CliError> {
    let (series, _qc) = load(&config)?;

    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a RunConfig,
        mode: &'static str,
        issuance_day: i64,
        first: i64,
        last: i64,
        report: VerificationReport,
    }

    let (mode, issuance_day, first, last, report) = match config.forecast.clone() {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let doc: ForecastDoc =
                serde_json::from_str(&text).map_err(|e| CliError::BadForecast {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            let fc = doc.forecast;
            let last_fan = fc.days().last().unwrap_or(fc.issuance_day);
            let first = config.first.unwrap_or(fc.issuance_day + 1);
            let last = config.last.unwrap_or(last_fan.min(series.last_day()));
            config.issuance_day = Some(fc.issuance_day);
            (
                "ensemble",
                fc.issuance_day,
                first,
                last,
                verify_ensemble(&fc, &series, first, last)?,
            )
        }
        None => {
            let day = issuance(&mut config, &series)?;
            let result = fit_with(&series, day, config.fit)?;
            let first = config.first.unwrap_or(series.first_day() + 1);
            let last = config.last.unwrap_or(series.last_day());
            (
                "deterministic",
                day,
                first,
                last,
                verify_deterministic(&result, &series, first, last)?,
            )
        }
    };
    config.first = Some(first);
    config.last = Some(last);

    let csv = format!(
        "rmse,correlation,minmax_coverage,iqr_coverage,n_days\n{},{},{},{},{}\n",
        num(report.rmse),
        opt(report.correlation),
        opt(report.minmax_coverage),
        opt(report.iqr_coverage),
        report.n_days
    );
    let json = to_json(&Doc {
        config: &config,
        mode,
        issuance_day,
        first,
        last,
        report,
    });
    Ok(Outcome::new(
        config.format,
        ("verify.json", json),
        ("verify.csv", csv),
    ))
}
