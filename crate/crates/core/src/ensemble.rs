//! Perturbed-observation ensembles of logistic fits.
//!
//! Every member refits the rate equation to a copy of the training data in
//! which each cumulative value `E(d)` has been multiplied by `1 + r(d)`, with
//! `r(d) ~ N(0, sigma_scale * sigma_obs)` and `sigma_obs` the sample standard
//! deviation of the fractional daily increments `(E(d) - E(d-1)) / E(d-1)`.
//! Two groups of members also relabel their training days by one day
//! forward or backward to mimic reporting-time errors; all members are
//! evaluated on the unshifted day axis. The per-day spread of the surviving
//! members is summarised as a min/quartile/median/max fan.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{CaseSeries, DataError};
use crate::diagnostics::{readiness, ReadinessVerdict, DEFAULT_READINESS_K};
use crate::fitting::{fit_with, FitOptions};
use crate::logistic::LogisticParams;
use crate::stats::{quantile_sorted, sample_std};

/// Fractional increments are only used where the previous day's count is at
/// least this large.
pub const DEFAULT_SIGMA_MIN_COUNT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub n_lag_forward: usize,
    pub n_lag_backward: usize,
    pub sigma_scale: f64,
    /// Smallest previous-day count for which a fractional increment enters `sigma_obs`.
    pub sigma_min_count: f64,
    pub seed: u64,
    pub horizon_days: usize,
    pub issuance_day: i64,
    /// Consecutive negative-concavity days the training data must show before
    /// members are fitted; `None` skips the check.
    pub readiness_k: Option<usize>,
    #[serde(default)]
    pub fit: FitOptions,
}

impl EnsembleConfig {
    pub fn new(issuance_day: i64, horizon_days: usize, seed: u64) -> Self {
        Self {
            n_members: 30,
            n_lag_forward: 10,
            n_lag_backward: 10,
            sigma_scale: 0.1,
            sigma_min_count: DEFAULT_SIGMA_MIN_COUNT,
            seed,
            horizon_days,
            issuance_day,
            readiness_k: Some(DEFAULT_READINESS_K),
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: &str| Err(EnsembleError::InvalidConfig(m.to_string()));
        if self.n_lag_forward + self.n_lag_backward > self.n_members {
            return bad("n_lag_forward + n_lag_backward exceeds n_members");
        }
        if !(self.sigma_scale >= 0.0 && self.sigma_scale.is_finite()) {
            return bad("sigma_scale must be finite and >= 0");
        }
        if !(self.sigma_min_count >= 0.0) {
            return bad("sigma_min_count must be >= 0");
        }
        if self.horizon_days < 1 {
            return bad("horizon_days must be >= 1");
        }
        Ok(())
    }

    /// Lag applied to member `j` (zero-based): unshifted members first, then
    /// forward, then backward.
    pub fn lag_of(&self, j: usize) -> LagShift {
        let unshifted = self.n_members - self.n_lag_forward - self.n_lag_backward;
        if j < unshifted {
            LagShift::None
        } else if j < unshifted + self.n_lag_forward {
            LagShift::Forward
        } else {
            LagShift::Backward
        }
    }

    pub fn forecast_days(&self) -> impl Iterator<Item = i64> {
        let start = self.issuance_day + 1;
        start..start + self.horizon_days as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagShift {
    Backward,
    None,
    Forward,
}

impl LagShift {
    pub fn days(self) -> i64 {
        match self {
            Self::Backward => -1,
            Self::None => 0,
            Self::Forward => 1,
        }
    }
}

/// Relabels observation days `d -> d + shift`. Day indices may become negative.
pub fn lag_shift(series: &CaseSeries, shift: LagShift) -> CaseSeries {
    series.shifted(shift.days())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// `(day, (E(d) - E(d-1)) / E(d-1))` for every day that qualified.
    pub delta_n_obs: Vec<(i64, f64)>,
    /// Days after onset whose previous count was zero.
    pub undefined_days: Vec<i64>,
    pub sigma_obs: f64,
    /// Standard deviation of `r(d)`: `sigma_scale * sigma_obs`.
    pub noise_std: f64,
}

impl PerturbationSpec {
    pub fn from_series(series: &CaseSeries, sigma_scale: f64, min_count: f64) -> Self {
        let cum = series.cumulative();
        let onset = series.onset_day();
        let mut delta_n_obs = Vec::new();
        let mut undefined_days = Vec::new();
        for (i, day) in series.days().enumerate().skip(1) {
            let prev = cum[i - 1];
            if prev <= 0.0 {
                if onset.is_some_and(|o| day > o + 1) {
                    log::warn!(
                        "{}: zero count on day {} makes the fractional increment of day {day} undefined",
                        series.label(),
                        day - 1
                    );
                    undefined_days.push(day);
                }
                continue;
            }
            if prev < min_count {
                continue;
            }
            delta_n_obs.push((day, (cum[i] - prev) / prev));
        }
        let values: Vec<f64> = delta_n_obs.iter().map(|&(_, v)| v).collect();
        let sigma_obs = sample_std(&values).unwrap_or(0.0);
        Self {
            delta_n_obs,
            undefined_days,
            sigma_obs,
            noise_std: sigma_scale * sigma_obs,
        }
    }
}

/// Standard-normal draws for every member and training day, generated in
/// member-major, day-minor order. Member `j` reads ChaCha stream `j` of the
/// seeded generator, so its draw for day index `d` depends only on
/// `(seed, j, d)` and not on the member count or training length.
pub fn draw_standard_normals(seed: u64, n_members: usize, n_days: usize) -> Vec<Vec<f64>> {
    (0..n_members)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            (0..n_days)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

/// Multiplies each cumulative value by `1 + noise_std * z[d]`, flooring at 0.
pub fn perturb_series(series: &CaseSeries, z: &[f64], noise_std: f64) -> CaseSeries {
    assert_eq!(z.len(), series.len(), "one draw per day");
    let cum = series
        .cumulative()
        .iter()
        .zip(z)
        .map(|(&e, &zd)| (e * (1.0 + noise_std * zd)).max(0.0))
        .collect();
    series.with_cumulative(cum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MemberOutcome {
    Forecast {
        member: usize,
        lag: LagShift,
        params: LogisticParams,
        e_inf: f64,
        /// Values on the canonical forecast days.
        values: Vec<f64>,
    },
    Failed {
        member: usize,
        lag: LagShift,
        reason: String,
    },
}

impl MemberOutcome {
    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Self::Forecast { values, .. } => Some(values),
            Self::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fan {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Order statistics of the member values: exact extremes, and quartiles and
/// median by linear interpolation at zero-based position `p * (n - 1)`.
pub fn quantile_fan(values: &[f64]) -> Fan {
    assert!(values.len() >= 2, "need at least two members");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Fan {
        min: sorted[0],
        q25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanPoint {
    pub day: i64,
    #[serde(flatten)]
    pub fan: Fan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub issuance_day: i64,
    pub sigma_obs: f64,
    pub noise_std: f64,
    pub fan: Vec<FanPoint>,
    pub n_failed: usize,
    pub members: Vec<MemberOutcome>,
}

impl EnsembleForecast {
    /// Reduces member outcomes to a fan; needs at least two successful members.
    pub fn from_members(
        issuance_day: i64,
        days: &[i64],
        spec: &PerturbationSpec,
        members: Vec<MemberOutcome>,
    ) -> Result<Self, EnsembleError> {
        let curves: Vec<&[f64]> = members.iter().filter_map(MemberOutcome::values).collect();
        if curves.len() < 2 {
            return Err(EnsembleError::Collapse(CollapseReport {
                issuance_day,
                readiness: None,
                n_success: curves.len(),
                failures: members
                    .iter()
                    .filter_map(|m| match m {
                        MemberOutcome::Failed { member, reason, .. } => {
                            Some((*member, reason.clone()))
                        }
                        _ => None,
                    })
                    .collect(),
            }));
        }
        let mut column = Vec::with_capacity(curves.len());
        let fan = days
            .iter()
            .enumerate()
            .map(|(i, &day)| {
                column.clear();
                column.extend(curves.iter().map(|c| c[i]));
                FanPoint {
                    day,
                    fan: quantile_fan(&column),
                }
            })
            .collect();
        Ok(Self {
            issuance_day,
            sigma_obs: spec.sigma_obs,
            noise_std: spec.noise_std,
            n_failed: members.len() - curves.len(),
            fan,
            members,
        })
    }

    pub fn fan_at(&self, day: i64) -> Option<&Fan> {
        self.fan.iter().find(|p| p.day == day).map(|p| &p.fan)
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        self.fan.iter().map(|p| p.day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub issuance_day: i64,
    /// Set when the training data failed the readiness check.
    pub readiness: Option<ReadinessVerdict>,
    pub n_success: usize,
    pub failures: Vec<(usize, String)>,
}

impl fmt::Display for CollapseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no forecast could be issued on day {}: ",
            self.issuance_day
        )?;
        if let Some(v) = &self.readiness {
            return write!(f, "series not ready ({})", v.explanation);
        }
        write!(
            f,
            "{} member(s) produced a logistic curve, at least 2 required",
            self.n_success
        )?;
        for (member, reason) in self.failures.iter().take(5) {
            write!(f, "; member {member}: {reason}")?;
        }
        if self.failures.len() > 5 {
            write!(f, "; ... {} more", self.failures.len() - 5)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Collapse(CollapseReport),
}

/// How member fits are scheduled. Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

pub fn generate(
    series: &CaseSeries,
    config: &EnsembleConfig,
) -> Result<EnsembleForecast, EnsembleError> {
    generate_with(series, config, Execution::default())
}

pub fn generate_with(
    series: &CaseSeries,
    config: &EnsembleConfig,
    execution: Execution,
) -> Result<EnsembleForecast, EnsembleError> {
    config.validate()?;
    let training = series.truncate_to(config.issuance_day)?;

    if let Some(k) = config.readiness_k {
        let verdict = readiness(&training, k)?;
        if !verdict.ready {
            return Err(EnsembleError::Collapse(CollapseReport {
                issuance_day: config.issuance_day,
                readiness: Some(verdict),
                n_success: 0,
                failures: Vec::new(),
            }));
        }
    }

    let spec = PerturbationSpec::from_series(&training, config.sigma_scale, config.sigma_min_count);
    let draws = draw_standard_normals(config.seed, config.n_members, training.len());
    let members = run_members(&training, config, &spec, &draws, execution);
    let days: Vec<i64> = config.forecast_days().collect();
    EnsembleForecast::from_members(config.issuance_day, &days, &spec, members)
}

/// Fits every member from pre-generated draws (`draws[j]` holds one standard
/// normal per training day for member `j`).
pub fn run_members(
    training: &CaseSeries,
    config: &EnsembleConfig,
    spec: &PerturbationSpec,
    draws: &[Vec<f64>],
    execution: Execution,
) -> Vec<MemberOutcome> {
    let days: Vec<i64> = config.forecast_days().collect();
    let member = |j: usize| fit_member(training, config, spec, &draws[j], j, &days);
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..draws.len()).into_par_iter().map(member).collect()
        }
        _ => (0..draws.len()).map(member).collect(),
    }
}

fn fit_member(
    training: &CaseSeries,
    config: &EnsembleConfig,
    spec: &PerturbationSpec,
    z: &[f64],
    j: usize,
    days: &[i64],
) -> MemberOutcome {
    let lag = config.lag_of(j);
    let perturbed = perturb_series(training, z, spec.noise_std);
    let shifted = lag_shift(&perturbed, lag);
    let failed = |reason: String| MemberOutcome::Failed {
        member: j,
        lag,
        reason,
    };
    match fit_with(&shifted, config.issuance_day + lag.days(), config.fit) {
        Err(e) => failed(e.to_string()),
        Ok(result) => match result.forecast_solution() {
            Err(e) => failed(e.to_string()),
            Ok(sol) => MemberOutcome::Forecast {
                member: j,
                lag,
                params: result.params,
                e_inf: sol.e_inf,
                values: days.iter().map(|&d| sol.at_day(d as f64)).collect(),
            },
        },
    }
}
