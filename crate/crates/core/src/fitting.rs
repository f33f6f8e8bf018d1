//! Least-squares estimation of the rate-equation coefficients from a
//! cumulative series.
//!
//! Each training day `d` contributes one row of the linear regression
//!
//! ```text
//! dE(d) = alpha * Ebar(d) - beta * Ebar(d)^2 + gamma
//! ```
//!
//! with `dE(d) = E(d) - E(d-1)` and `Ebar(d)` either the midpoint
//! `(E(d) + E(d-1))/2` (default) or the previous value `E(d-1)`. The rows
//! start the day after onset, so the jump from zero never enters the fit.
//!
//! The regression is biased by the one-day discretisation; on noiseless
//! logistic samples it recovers `alpha`, `beta` and the asymptote closely but
//! `gamma` poorly. [`FitMethod::DiscreteMap`] instead fits the exact one-day
//! propagator of the rate equation, a Moebius map
//! `E(d) = (p E(d-1) + q) / (r E(d-1) + 1)`, which is linear in `(p, q, r)`
//! once multiplied out, and recovers the coefficients from its matrix
//! logarithm.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{CaseSeries, DataError};
use crate::logistic::{derive_solution, LogisticError, LogisticParams, LogisticSolution};
use crate::stats;

/// Minimum number of positive observations in the training window.
pub const MIN_NONZERO_OBSERVATIONS: usize = 5;

// Columns are rescaled to unit max-abs before the SVD; singular values below
// this fraction of the largest mark the design as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least {need} positive observations up to day {last_day}, found {found}")]
    TooFewPoints {
        last_day: i64,
        found: usize,
        need: usize,
    },
    #[error("regression design is singular (e.g. all abscissae equal)")]
    DegenerateDesign,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fit is not valid for forecasting: {0}")]
    InvalidFit(InvalidReason),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    /// `(E(d) + E(d-1)) / 2`
    #[default]
    Midpoint,
    /// `E(d-1)`
    Previous,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    RateRegression,
    DiscreteMap,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    #[serde(default)]
    pub method: FitMethod,
    /// Only used by [`FitMethod::RateRegression`].
    #[serde(default)]
    pub abscissa: Abscissa,
}

/// Why a fitted curve cannot be used to forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NotLogistic,
    NoRealAsymptote,
    SaturatedStart,
    /// The start value sits below the unstable lower root, so the curve decays.
    UnstableStart,
    NonPositiveRate,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::NotLogistic => "beta <= 0, growth is unbounded",
            Self::NoRealAsymptote => "no real asymptote",
            Self::SaturatedStart => "start value at or above the asymptote",
            Self::UnstableStart => "start value below the lower root, the curve decays",
            Self::NonPositiveRate => "C2 <= 0",
        };
        f.write_str(s)
    }
}

impl From<LogisticError> for InvalidReason {
    fn from(e: LogisticError) -> Self {
        match e {
            LogisticError::NotLogistic => Self::NotLogistic,
            LogisticError::SaturatedStart => Self::SaturatedStart,
            LogisticError::NoRealAsymptote | LogisticError::UndefinedDoublingTime => {
                Self::NoRealAsymptote
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: LogisticParams,
    /// Present whenever the closed form exists, even if the fit is invalid.
    pub solution: Option<LogisticSolution>,
    pub training_range: (i64, i64),
    /// RMS residual of the rate regression, cases/day.
    pub residual_rms: f64,
    pub n_rows: usize,
    pub invalid_reason: Option<InvalidReason>,
    /// The asymptote lies below the largest observed training value.
    pub asymptote_below_data: bool,
}

impl FitResult {
    pub fn valid_for_forecast(&self) -> bool {
        self.invalid_reason.is_none()
    }

    /// The solution if the fit is valid.
    pub fn forecast_solution(&self) -> Result<&LogisticSolution, FitError> {
        match (self.invalid_reason, &self.solution) {
            (None, Some(sol)) => Ok(sol),
            (Some(r), _) => Err(FitError::InvalidFit(r)),
            (None, None) => unreachable!("valid fits carry a solution"),
        }
    }
}

pub fn fit(series: &CaseSeries, last_day: i64) -> Result<FitResult, FitError> {
    fit_with(series, last_day, FitOptions::default())
}

pub fn fit_with(
    series: &CaseSeries,
    last_day: i64,
    options: FitOptions,
) -> Result<FitResult, FitError> {
    let training = series.truncate_to(last_day)?;
    let nonzero = training.cumulative().iter().filter(|&&c| c > 0.0).count();
    let onset = training.onset_day();
    let Some(onset) = onset.filter(|_| nonzero >= MIN_NONZERO_OBSERVATIONS) else {
        return Err(FitError::TooFewPoints {
            last_day,
            found: nonzero,
            need: MIN_NONZERO_OBSERVATIONS,
        });
    };

    let start = (onset - training.first_day()) as usize;
    let cum = &training.cumulative()[start..];
    let (params, residual_rms) = match options.method {
        FitMethod::RateRegression => rate_regression(cum, options.abscissa)?,
        FitMethod::DiscreteMap => discrete_map(cum)?,
    };
    let n_rows = cum.len() - 1;

    let e0 = cum[0];
    let solution = derive_solution(&params, e0, onset);
    let invalid_reason = match &solution {
        Err(e) => Some(InvalidReason::from(*e)),
        Ok(sol) if !(sol.c1 > 0.0) => Some(InvalidReason::UnstableStart),
        Ok(sol) if !(sol.c2 > 0.0) => Some(InvalidReason::NonPositiveRate),
        Ok(_) => None,
    };
    let solution = solution.ok();
    let asymptote_below_data = solution.is_some_and(|s| s.e_inf < training.max_cumulative());

    Ok(FitResult {
        params,
        solution,
        training_range: (onset, last_day),
        residual_rms,
        n_rows,
        invalid_reason,
        asymptote_below_data,
    })
}

fn rate_regression(cum: &[f64], abscissa: Abscissa) -> Result<(LogisticParams, f64), FitError> {
    let mut design = Vec::with_capacity(cum.len());
    let mut rhs = Vec::with_capacity(cum.len());
    for w in cum.windows(2) {
        let x = match abscissa {
            Abscissa::Midpoint => 0.5 * (w[0] + w[1]),
            Abscissa::Previous => w[0],
        };
        design.push([x, -x * x, 1.0]);
        rhs.push(w[1] - w[0]);
    }
    let (coef, rms) = least_squares(&design, &rhs)?;
    Ok((LogisticParams::new(coef[0], coef[1], coef[2]), rms))
}

/// Fits `E(d) = p E(d-1) + q - r E(d-1) E(d)`, then takes the logarithm of
/// the normalised propagator `[[p, q], [r, 1]]`. With `E = u/v` the rate
/// equation is the linear system `(u, v)' = M (u, v)` for the traceless
/// `M = [[alpha/2, gamma], [beta, -alpha/2]]`, and one day of it is `exp(M)`.
fn discrete_map(cum: &[f64]) -> Result<(LogisticParams, f64), FitError> {
    let mut design = Vec::with_capacity(cum.len());
    let mut rhs = Vec::with_capacity(cum.len());
    for w in cum.windows(2) {
        design.push([w[0], 1.0, -w[0] * w[1]]);
        rhs.push(w[1]);
    }
    let ([p, q, r], rms) = least_squares(&design, &rhs)?;

    let det = p - q * r;
    if !(det > 0.0) {
        return Err(FitError::DegenerateDesign);
    }
    let norm = det.sqrt();
    let (p, q, r, s) = (p / norm, q / norm, r / norm, 1.0 / norm);
    let half_trace = 0.5 * (p + s);
    // exp(M) = cosh(l) I + sinh(l)/l M with l^2 = alpha^2/4 + beta*gamma
    let factor = if half_trace > 1.0 {
        let l = half_trace.acosh();
        l / l.sinh()
    } else if half_trace > -1.0 {
        let l = half_trace.acos();
        if l == 0.0 {
            1.0
        } else {
            l / l.sin()
        }
    } else {
        return Err(FitError::DegenerateDesign);
    };
    let alpha = (p - half_trace) * factor * 2.0;
    let gamma = q * factor;
    let beta = r * factor;
    Ok((LogisticParams::new(alpha, beta, gamma), rms))
}

/// Least-squares solution of `design * x = rhs` with column equilibration.
/// Returns the coefficients and the RMS residual.
fn least_squares(design: &[[f64; 3]], rhs: &[f64]) -> Result<([f64; 3], f64), FitError> {
    let n = design.len();
    if n < 3 {
        return Err(FitError::DegenerateDesign);
    }
    let mut design = DMatrix::<f64>::from_fn(n, 3, |i, j| design[i][j]);
    let rhs = DVector::<f64>::from_column_slice(rhs);

    let mut scale = [1.0f64; 3];
    for (j, s) in scale.iter_mut().enumerate() {
        let m = design.column(j).amax();
        if m == 0.0 || !m.is_finite() {
            return Err(FitError::DegenerateDesign);
        }
        *s = m;
        design.column_mut(j).scale_mut(1.0 / m);
    }

    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max_sv = sv.max();
    if !(sv.min() > RANK_TOLERANCE * max_sv) {
        return Err(FitError::DegenerateDesign);
    }
    let solved = svd
        .solve(&rhs, 0.0)
        .map_err(|_| FitError::DegenerateDesign)?;

    let residual = &design * &solved - &rhs;
    let rms = (residual.norm_squared() / n as f64).sqrt();
    let coef = [
        solved[0] / scale[0],
        solved[1] / scale[1],
        solved[2] / scale[2],
    ];
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(FitError::DegenerateDesign);
    }
    Ok((coef, rms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitQuality {
    pub rmse: f64,
    /// `None` when either the fitted or the observed values are constant.
    pub correlation: Option<f64>,
    pub n_days: usize,
}

/// RMSE and Pearson correlation between the fitted curve and the observed
/// cumulative counts over `first..=last`.
pub fn fit_quality(
    result: &FitResult,
    series: &CaseSeries,
    first: i64,
    last: i64,
) -> Result<FitQuality, FitError> {
    let sol = result.forecast_solution()?;
    let (predicted, observed) = paired_values(series, first, last, |d| sol.at_day(d as f64))?;
    Ok(FitQuality {
        rmse: stats::rmse(&predicted, &observed),
        correlation: stats::pearson(&predicted, &observed),
        n_days: observed.len(),
    })
}

pub(crate) fn paired_values(
    series: &CaseSeries,
    first: i64,
    last: i64,
    mut predict: impl FnMut(i64) -> f64,
) -> Result<(Vec<f64>, Vec<f64>), DataError> {
    for day in [first, last] {
        if !series.contains_day(day) || first > last {
            return Err(DataError::DayOutOfRange {
                day,
                first: series.first_day(),
                last: series.last_day(),
            });
        }
    }
    let predicted = (first..=last).map(&mut predict).collect();
    let observed = (first..=last).map(|d| series.value(d).unwrap()).collect();
    Ok((predicted, observed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(params: LogisticParams, e0: f64, days: i64) -> (CaseSeries, LogisticSolution) {
        let sol = derive_solution(&params, e0, 0).unwrap();
        let cum = (0..=days).map(|d| sol.evaluate(d as f64)).collect();
        (CaseSeries::new("synthetic", 0, cum), sol)
    }

    #[test]
    fn too_few_points() {
        let s = CaseSeries::new("c", 0, vec![0.0, 1.0, 2.0, 4.0, 8.0, 12.0]);
        assert!(matches!(
            fit(&s, 4),
            Err(FitError::TooFewPoints { found: 4, .. })
        ));
    }

    #[test]
    fn degenerate_design_on_constant_counts() {
        let s = CaseSeries::new("c", 0, vec![5.0; 10]);
        assert_eq!(fit(&s, 9), Err(FitError::DegenerateDesign));
    }

    #[test]
    fn rate_regression_recovers_growth_and_asymptote() {
        let truth = LogisticParams::new(0.4, 5e-6, 10.0);
        let (series, sol) = synthetic(truth, 10.0, 60);
        let r = fit(&series, 60).unwrap();
        assert!(r.valid_for_forecast());
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(r.params.alpha, truth.alpha) < 5e-2, "{:?}", r.params);
        assert!(rel(r.params.beta, truth.beta) < 5e-2, "{:?}", r.params);
        assert!(rel(r.solution.unwrap().e_inf, sol.e_inf) < 1e-3);
    }

    #[test]
    fn discrete_map_recovers_all_coefficients() {
        let opts = FitOptions {
            method: FitMethod::DiscreteMap,
            ..Default::default()
        };
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        for truth in [
            LogisticParams::new(0.4, 5e-6, 10.0),
            LogisticParams::new(0.15, 2e-6, 600.0),
            LogisticParams::new(0.9, 1e-4, 1.0),
        ] {
            let (series, sol) = synthetic(truth, 10.0, 60);
            let r = fit_with(&series, 60, opts).unwrap();
            assert!(rel(r.params.alpha, truth.alpha) < 1e-6, "{:?}", r.params);
            assert!(rel(r.params.beta, truth.beta) < 1e-6, "{:?}", r.params);
            assert!(rel(r.params.gamma, truth.gamma) < 1e-6, "{:?}", r.params);
            assert!(rel(r.solution.unwrap().e_inf, sol.e_inf) < 1e-9);
        }
    }

    #[test]
    fn exact_quadratic_rates_give_zero_residual() {
        // build a series whose increments sit exactly on the parabola in the
        // previous-value abscissa
        let p = LogisticParams::new(0.3, 1e-3, 2.0);
        let mut cum = vec![0.0, 5.0];
        for _ in 0..30 {
            let e = *cum.last().unwrap();
            cum.push(e + p.rate(e));
        }
        let s = CaseSeries::new("q", 0, cum);
        let r = fit_with(
            &s,
            31,
            FitOptions {
                abscissa: Abscissa::Previous,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.residual_rms < 1e-9, "{}", r.residual_rms);
        assert!((r.params.alpha - 0.3).abs() < 1e-9);
    }

    #[test]
    fn exponential_data_is_not_logistic() {
        // accelerating growth fits a negative beta
        let cum = (0..25).map(|d| (0.01 * (d * d) as f64).exp()).collect();
        let s = CaseSeries::new("e", 0, cum);
        let r = fit(&s, 24).unwrap();
        assert_eq!(
            r.invalid_reason,
            Some(InvalidReason::NotLogistic),
            "{:?}",
            r.params
        );
    }

    #[test]
    fn quality_against_own_curve() {
        let truth = LogisticParams::new(0.4, 5e-6, 10.0);
        let (series, _) = synthetic(truth, 10.0, 60);
        let r = fit(&series, 60).unwrap();
        let sol = r.solution.unwrap();
        let own = CaseSeries::new("own", 0, (0..=60).map(|d| sol.at_day(d as f64)).collect());
        let q = fit_quality(&r, &own, 0, 60).unwrap();
        assert!(q.rmse < 1e-6 * sol.e_inf);
        assert!((q.correlation.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(q.n_days, 61);
    }

    #[test]
    fn quality_rejects_bad_range() {
        let truth = LogisticParams::new(0.4, 5e-6, 10.0);
        let (series, _) = synthetic(truth, 10.0, 30);
        let r = fit(&series, 30).unwrap();
        assert!(fit_quality(&r, &series, 0, 31).is_err());
        assert!(fit_quality(&r, &series, 10, 5).is_err());
    }
}
