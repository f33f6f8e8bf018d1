//! Case-count series: CSV ingestion, the bundled outbreak tables and
//! outlier quality control.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod bundled;

pub use bundled::{bundled_dataset, BUNDLED_NAMES};

/// Default ratio for [`qc_correct`]: an increment larger than this multiple of
/// the mean of its two neighbours is replaced.
pub const DEFAULT_QC_THRESHOLD: f64 = 4.5;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("structural error: {0}")]
    Structure(String),
    #[error("line {line}: negative cumulative count {value}")]
    NegativeValue { line: u64, value: f64 },
    #[error("unknown dataset `{name}` (valid: {})", BUNDLED_NAMES.join(", "))]
    UnknownDataset { name: String },
    #[error("series has {len} days, need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("day {day} is outside the series (days {first}..={last})")]
    DayOutOfRange { day: i64, first: i64, last: i64 },
}

/// Cumulative confirmed-case counts on consecutive integer days.
///
/// Day indices are contiguous starting at `first_day`; by convention an
/// outbreak series has day 0 as the last zero-count day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSeries {
    label: String,
    first_day: i64,
    dates: Vec<Option<NaiveDate>>,
    cumulative: Vec<f64>,
}

impl CaseSeries {
    pub fn new(label: impl Into<String>, first_day: i64, cumulative: Vec<f64>) -> Self {
        let dates = vec![None; cumulative.len()];
        Self {
            label: label.into(),
            first_day,
            dates,
            cumulative,
        }
    }

    /// Builds a series with calendar dates. `dates` must match `cumulative` in length.
    pub fn with_dates(
        label: impl Into<String>,
        first_day: i64,
        dates: Vec<Option<NaiveDate>>,
        cumulative: Vec<f64>,
    ) -> Self {
        assert_eq!(dates.len(), cumulative.len(), "one date slot per day");
        Self {
            label: label.into(),
            first_day,
            dates,
            cumulative,
        }
    }

    /// Builds a series from daily increments, with `cumulative[first_day] = start`.
    pub fn from_increments(
        label: impl Into<String>,
        first_day: i64,
        start: f64,
        increments: &[f64],
    ) -> Self {
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        let mut total = start;
        cumulative.push(total);
        for inc in increments {
            total += inc;
            cumulative.push(total);
        }
        Self::new(label, first_day, cumulative)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn first_day(&self) -> i64 {
        self.first_day
    }

    pub fn last_day(&self) -> i64 {
        self.first_day + self.cumulative.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        self.first_day..=self.last_day()
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn dates(&self) -> &[Option<NaiveDate>] {
        &self.dates
    }

    pub fn contains_day(&self, day: i64) -> bool {
        day >= self.first_day && day <= self.last_day()
    }

    pub fn value(&self, day: i64) -> Option<f64> {
        self.index_of(day).map(|i| self.cumulative[i])
    }

    pub fn date(&self, day: i64) -> Option<NaiveDate> {
        self.index_of(day).and_then(|i| self.dates[i])
    }

    /// `cumulative[day] - cumulative[day - 1]`, defined from the second day on.
    pub fn increment(&self, day: i64) -> Option<f64> {
        let i = self.index_of(day)?;
        (i > 0).then(|| self.cumulative[i] - self.cumulative[i - 1])
    }

    /// Increments for days `first_day + 1 ..= last_day`.
    pub fn increments(&self) -> Vec<f64> {
        self.cumulative.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// First day with a strictly positive count.
    pub fn onset_day(&self) -> Option<i64> {
        self.cumulative
            .iter()
            .position(|&c| c > 0.0)
            .map(|i| self.first_day + i as i64)
    }

    pub fn max_cumulative(&self) -> f64 {
        self.cumulative
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Prefix of the series ending at `last_day` (inclusive).
    pub fn truncate_to(&self, last_day: i64) -> Result<Self, DataError> {
        let i = self.index_of(last_day).ok_or(DataError::DayOutOfRange {
            day: last_day,
            first: self.first_day,
            last: self.last_day(),
        })?;
        Ok(Self {
            label: self.label.clone(),
            first_day: self.first_day,
            dates: self.dates[..=i].to_vec(),
            cumulative: self.cumulative[..=i].to_vec(),
        })
    }

    /// Same days and dates, new counts.
    pub fn with_cumulative(&self, cumulative: Vec<f64>) -> Self {
        assert_eq!(cumulative.len(), self.cumulative.len());
        Self {
            label: self.label.clone(),
            first_day: self.first_day,
            dates: self.dates.clone(),
            cumulative,
        }
    }

    /// Relabels every observation `d -> d + shift`; counts and dates are untouched.
    pub fn shifted(&self, shift: i64) -> Self {
        Self {
            first_day: self.first_day + shift,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_cumulative(self.cumulative.iter().map(|c| c * factor).collect())
    }

    fn index_of(&self, day: i64) -> Option<usize> {
        if self.contains_day(day) {
            Some((day - self.first_day) as usize)
        } else {
            None
        }
    }
}

/// Non-fatal findings from [`parse_csv_checked`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvWarning {
    pub line: u64,
    pub day: i64,
    pub message: String,
}

/// Parses `date,day,confirmed,cumulative` CSV text. The cumulative column is
/// authoritative; `confirmed` is only cross-checked (see [`parse_csv_checked`]).
pub fn parse_csv(text: &str, label: &str) -> Result<CaseSeries, DataError> {
    let (series, warnings) = parse_csv_checked(text, label)?;
    for w in &warnings {
        log::warn!("{}: line {}: {}", label, w.line, w.message);
    }
    Ok(series)
}

pub fn parse_csv_checked(
    text: &str,
    label: &str,
) -> Result<(CaseSeries, Vec<CsvWarning>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| DataError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let expected = ["date", "day", "confirmed", "cumulative"];
    if headers
        .iter()
        .map(str::to_ascii_lowercase)
        .ne(expected.iter().map(|s| s.to_string()))
    {
        return Err(DataError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut days = Vec::new();
    let mut dates = Vec::new();
    let mut confirmed = Vec::new();
    let mut cumulative = Vec::new();
    let mut lines = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");

        let date = match field(0) {
            "" => None,
            s => Some(
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| DataError::Parse {
                    line,
                    message: format!("bad date `{s}`: {e}"),
                })?,
            ),
        };
        let day = parse_number(field(1), line, "day")?.trunc() as i64;
        let conf = match field(2) {
            "" => None,
            s => Some(parse_number(s, line, "confirmed")?),
        };
        let cum = parse_number(field(3), line, "cumulative")?;
        if cum < 0.0 {
            return Err(DataError::NegativeValue { line, value: cum });
        }

        if let Some(&prev) = days.last() {
            if day != prev + 1 {
                return Err(DataError::Structure(format!(
                    "line {line}: day {day} does not follow day {prev}"
                )));
            }
        }
        days.push(day);
        dates.push(date);
        confirmed.push(conf);
        cumulative.push(cum);
        lines.push(line);
    }

    let Some(&first_day) = days.first() else {
        return Err(DataError::Structure("no data rows".into()));
    };

    let mut warnings = Vec::new();
    for i in 0..cumulative.len() {
        let Some(conf) = confirmed[i] else { continue };
        let expected = if i == 0 {
            cumulative[0]
        } else {
            cumulative[i] - cumulative[i - 1]
        };
        if conf != expected {
            warnings.push(CsvWarning {
                line: lines[i],
                day: days[i],
                message: format!(
                    "confirmed column {conf} differs from cumulative increment {expected}"
                ),
            });
        }
    }

    Ok((
        CaseSeries::with_dates(label, first_day, dates, cumulative),
        warnings,
    ))
}

fn parse_number(s: &str, line: u64, column: &str) -> Result<f64, DataError> {
    let v: f64 = s.parse().map_err(|_| DataError::Parse {
        line,
        message: format!("{column}: `{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::Parse {
            line,
            message: format!("{column}: `{s}` is not finite"),
        });
    }
    Ok(v)
}

/// Inverse of [`parse_csv`]. The `confirmed` column carries the daily
/// increment (the first row repeats its cumulative value).
pub fn render_csv(series: &CaseSeries) -> String {
    let mut out = String::from("date,day,confirmed,cumulative\n");
    let cum = series.cumulative();
    for (i, day) in series.days().enumerate() {
        let date = series.dates()[i]
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default();
        let confirmed = if i == 0 { cum[0] } else { cum[i] - cum[i - 1] };
        let _ = writeln!(out, "{date},{day},{confirmed},{}", cum[i]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcCorrection {
    pub day: i64,
    pub original: f64,
    pub replacement: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub corrected: Vec<QcCorrection>,
    pub threshold_used: f64,
}

impl QcReport {
    pub fn is_empty(&self) -> bool {
        self.corrected.is_empty()
    }
}

/// Replaces isolated spikes in the daily increments.
///
/// An interior day whose increment exceeds `ratio_threshold` times the mean of
/// the two neighbouring increments (with that mean positive) gets the rounded
/// neighbour mean instead. Detection uses the uncorrected increments; the
/// cumulative column is rebuilt from the corrected ones.
pub fn qc_correct(
    series: &CaseSeries,
    ratio_threshold: f64,
) -> Result<(CaseSeries, QcReport), DataError> {
    if series.len() < 3 {
        return Err(DataError::TooShort {
            len: series.len(),
            need: 3,
        });
    }
    let raw = series.increments();
    let mut fixed = raw.clone();
    let mut corrected = Vec::new();

    // raw[k] is the increment of day first_day + k + 1
    for k in 1..raw.len().saturating_sub(1) {
        let neighbour_mean = 0.5 * (raw[k - 1] + raw[k + 1]);
        if neighbour_mean > 0.0 && raw[k] > ratio_threshold * neighbour_mean {
            let replacement = neighbour_mean.round();
            fixed[k] = replacement;
            corrected.push(QcCorrection {
                day: series.first_day() + k as i64 + 1,
                original: raw[k],
                replacement,
                reason: format!(
                    "increment is {:.2}x the neighbour mean {neighbour_mean}",
                    raw[k] / neighbour_mean
                ),
            });
        }
    }

    let out = if corrected.is_empty() {
        series.clone()
    } else {
        let mut cum = Vec::with_capacity(series.len());
        let mut total = series.cumulative()[0];
        cum.push(total);
        for inc in &fixed {
            total += inc;
            cum.push(total);
        }
        series.with_cumulative(cum)
    };

    Ok((
        out,
        QcReport {
            corrected,
            threshold_used: ratio_threshold,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_appendix_style_rows() {
        let text = "date,day,confirmed,cumulative\n\
                    2020-01-22,0.00,0.00,0.00\n\
                    2020-01-23,1.00,261,261\n\
                    2020-01-24,2.00,261,522\n";
        let (s, warnings) = parse_csv_checked(text, "x").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(s.first_day(), 0);
        assert_eq!(s.last_day(), 2);
        assert_eq!(s.value(2), Some(522.0));
        assert_eq!(s.increment(2), Some(261.0));
        assert_eq!(s.date(1), NaiveDate::from_ymd_opt(2020, 1, 23));
    }

    #[test]
    fn header_only_is_structural_error() {
        let err = parse_csv("date,day,confirmed,cumulative\n", "x").unwrap_err();
        assert!(matches!(err, DataError::Structure(_)));
    }

    #[test]
    fn gap_in_days_is_structural_error() {
        let text = "date,day,confirmed,cumulative\n,0,0,0\n,2,5,5\n";
        assert!(matches!(
            parse_csv(text, "x").unwrap_err(),
            DataError::Structure(_)
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "date,day,confirmed,cumulative\n,0,0,0\n,1,3,abc\n";
        match parse_csv(text, "x").unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_cumulative_rejected() {
        let text = "date,day,confirmed,cumulative\n,0,0,0\n,1,-3,-3\n";
        assert!(matches!(
            parse_csv(text, "x").unwrap_err(),
            DataError::NegativeValue { line: 3, .. }
        ));
    }

    #[test]
    fn confirmed_mismatch_is_only_a_warning() {
        let text = "date,day,confirmed,cumulative\n,0,0,0\n,1,10,10\n,2,7,15\n";
        let (s, warnings) = parse_csv_checked(text, "x").unwrap();
        assert_eq!(s.value(2), Some(15.0));
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].day, 2);
        assert_eq!(warnings[0].line, 4);
    }

    #[test]
    fn qc_constant_increments_untouched() {
        let s = CaseSeries::from_increments("c", 0, 0.0, &[50.0; 10]);
        let (out, report) = qc_correct(&s, DEFAULT_QC_THRESHOLD).unwrap();
        assert!(report.is_empty());
        assert_eq!(out, s);
    }

    #[test]
    fn qc_replaces_tenfold_spike_with_neighbour_mean() {
        let s = CaseSeries::from_increments("c", 0, 0.0, &[100.0, 100.0, 1000.0, 100.0, 100.0]);
        let (out, report) = qc_correct(&s, DEFAULT_QC_THRESHOLD).unwrap();
        assert_eq!(report.corrected.len(), 1);
        let c = &report.corrected[0];
        assert_eq!((c.day, c.original, c.replacement), (3, 1000.0, 100.0));
        assert_eq!(out.increments(), vec![100.0; 5]);
    }

    #[test]
    fn qc_rounds_replacement_to_nearest_integer() {
        let s = CaseSeries::from_increments("c", 0, 0.0, &[3.0, 100.0, 4.0]);
        let (_, report) = qc_correct(&s, 3.0).unwrap();
        assert_eq!(report.corrected[0].replacement, 4.0);
    }

    #[test]
    fn qc_needs_three_days() {
        let s = CaseSeries::new("c", 0, vec![0.0, 1.0]);
        assert!(matches!(
            qc_correct(&s, 3.0),
            Err(DataError::TooShort { len: 2, need: 3 })
        ));
    }

    #[test]
    fn shifted_keeps_values() {
        let s = CaseSeries::new("c", 0, vec![0.0, 1.0, 3.0]);
        let t = s.shifted(-1);
        assert_eq!(t.first_day(), -1);
        assert_eq!(t.value(-1), Some(0.0));
        assert_eq!(t.cumulative(), s.cumulative());
        assert_eq!(s.shifted(0), s);
    }
}
