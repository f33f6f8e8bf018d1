//! Scores against held-out observations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::CaseSeries;
use crate::dataio::DataError;
use crate::ensemble::EnsembleForecast;
use crate::fitting::{fit_quality, FitError, FitResult};
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum VerificationError {
    #[error("days {first}..={last} do not overlap both the forecast and the observations")]
    EmptyRange { first: i64, last: i64 },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub rmse: f64,
    /// `None` when either side has zero variance.
    pub correlation: Option<f64>,
    /// Fraction of days inside the closed band `[min, max]`.
    pub minmax_coverage: Option<f64>,
    /// Fraction of days inside the closed band `[q25, q75]`.
    pub iqr_coverage: Option<f64>,
    pub n_days: usize,
}

pub fn verify_deterministic(
    fit: &FitResult,
    series: &CaseSeries,
    first: i64,
    last: i64,
) -> Result<VerificationReport, VerificationError> {
    let q = fit_quality(fit, series, first, last)?;
    Ok(VerificationReport {
        rmse: q.rmse,
        correlation: q.correlation,
        minmax_coverage: None,
        iqr_coverage: None,
        n_days: q.n_days,
    })
}

/// Coverage of the observations by the fan, plus RMSE and correlation of the
/// median curve, over the days in `first..=last` that the forecast and the
/// series both cover.
pub fn verify_ensemble(
    forecast: &EnsembleForecast,
    series: &CaseSeries,
    first: i64,
    last: i64,
) -> Result<VerificationReport, VerificationError> {
    let points: Vec<_> = forecast
        .fan
        .iter()
        .filter(|p| p.day >= first && p.day <= last)
        .filter_map(|p| series.value(p.day).map(|obs| (p.fan, obs)))
        .collect();
    if points.is_empty() {
        return Err(VerificationError::EmptyRange { first, last });
    }
    let n = points.len() as f64;
    let inside = |lo: f64, hi: f64, x: f64| lo <= x && x <= hi;
    let minmax = points
        .iter()
        .filter(|(f, o)| inside(f.min, f.max, *o))
        .count() as f64
        / n;
    let iqr = points
        .iter()
        .filter(|(f, o)| inside(f.q25, f.q75, *o))
        .count() as f64
        / n;
    let median: Vec<f64> = points.iter().map(|(f, _)| f.median).collect();
    let observed: Vec<f64> = points.iter().map(|(_, o)| *o).collect();

    Ok(VerificationReport {
        rmse: stats::rmse(&median, &observed),
        correlation: stats::pearson(&median, &observed),
        minmax_coverage: Some(minmax),
        iqr_coverage: Some(iqr),
        n_days: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Fan, FanPoint};

    fn forecast_from(fans: Vec<(i64, Fan)>) -> EnsembleForecast {
        EnsembleForecast {
            issuance_day: fans[0].0 - 1,
            sigma_obs: 0.0,
            noise_std: 0.0,
            fan: fans
                .into_iter()
                .map(|(day, fan)| FanPoint { day, fan })
                .collect(),
            n_failed: 0,
            members: Vec::new(),
        }
    }

    fn flat(v: f64) -> Fan {
        Fan {
            min: v,
            q25: v,
            median: v,
            q75: v,
            max: v,
        }
    }

    #[test]
    fn exact_fan_covers_everything() {
        let series = CaseSeries::new("o", 0, vec![0.0, 1.0, 4.0, 9.0, 16.0]);
        let fc = forecast_from((2..=4).map(|d| (d, flat((d * d) as f64))).collect());
        let r = verify_ensemble(&fc, &series, 2, 4).unwrap();
        assert_eq!(r.minmax_coverage, Some(1.0));
        assert_eq!(r.iqr_coverage, Some(1.0));
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.correlation, Some(1.0));
        assert_eq!(r.n_days, 3);
    }

    #[test]
    fn partial_coverage_and_ordering() {
        let series = CaseSeries::new("o", 0, vec![0.0, 10.0, 20.0, 30.0, 40.0]);
        let band = Fan {
            min: 15.0,
            q25: 19.0,
            median: 22.0,
            q75: 25.0,
            max: 35.0,
        };
        let fc = forecast_from((1..=4).map(|d| (d, band)).collect());
        let r = verify_ensemble(&fc, &series, 1, 4).unwrap();
        assert_eq!(r.minmax_coverage, Some(0.5));
        assert_eq!(r.iqr_coverage, Some(0.25));
        assert!(r.iqr_coverage <= r.minmax_coverage);
        // constant median against varying observations
        assert_eq!(r.correlation, None);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let series = CaseSeries::new("o", 0, vec![0.0, 1.0, 2.0]);
        let fc = forecast_from(vec![(5, flat(1.0)), (6, flat(1.0))]);
        assert!(matches!(
            verify_ensemble(&fc, &series, 5, 6),
            Err(VerificationError::EmptyRange { .. })
        ));
    }
}
