//! Discrete growth-rate and concavity diagnostics, and the readiness check
//! that gates forecasting.

use serde::{Deserialize, Serialize};

use crate::dataio::{CaseSeries, DataError};

pub const DEFAULT_READINESS_K: usize = 2;

/// Per-day first and second differences of a cumulative series, raw and
/// smoothed with a centred 3-day mean. `None` where a value is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSeries {
    pub days: Vec<i64>,
    pub first: Vec<Option<f64>>,
    pub second: Vec<Option<f64>>,
    pub smoothed_first: Vec<Option<f64>>,
    pub smoothed_second: Vec<Option<f64>>,
}

impl DerivativeSeries {
    fn index_of(&self, day: i64) -> Option<usize> {
        let first = *self.days.first()?;
        let i = usize::try_from(day - first).ok()?;
        (i < self.days.len()).then_some(i)
    }

    pub fn smoothed_second_at(&self, day: i64) -> Option<f64> {
        self.index_of(day).and_then(|i| self.smoothed_second[i])
    }

    pub fn smoothed_first_at(&self, day: i64) -> Option<f64> {
        self.index_of(day).and_then(|i| self.smoothed_first[i])
    }

    /// Days on which the smoothed second difference turns from positive to
    /// negative. Zero values are skipped when looking back for the last sign.
    pub fn concavity_turns_negative(&self) -> Vec<i64> {
        let mut out = Vec::new();
        let mut last_sign = 0.0f64;
        for (day, v) in self.days.iter().zip(&self.smoothed_second) {
            let Some(v) = *v else { continue };
            if v < 0.0 && last_sign > 0.0 {
                out.push(*day);
            }
            if v != 0.0 {
                last_sign = v.signum();
            }
        }
        out
    }
}

pub fn derivatives(series: &CaseSeries) -> Result<DerivativeSeries, DataError> {
    if series.len() < 3 {
        return Err(DataError::TooShort {
            len: series.len(),
            need: 3,
        });
    }
    let days: Vec<i64> = series.days().collect();
    let cum = series.cumulative();
    let n = cum.len();

    let mut first = vec![None; n];
    for i in 1..n {
        first[i] = Some(cum[i] - cum[i - 1]);
    }
    let mut second = vec![None; n];
    for i in 2..n {
        second[i] = Some(first[i].unwrap() - first[i - 1].unwrap());
    }

    Ok(DerivativeSeries {
        smoothed_first: centred_mean(&first),
        smoothed_second: centred_mean(&second),
        days,
        first,
        second,
    })
}

/// Centred 3-point running mean; undefined wherever any of the three inputs is.
pub fn centred_mean(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 >= n {
                return None;
            }
            match (values[i - 1], values[i], values[i + 1]) {
                (Some(a), Some(b), Some(c)) => Some((a + b + c) / 3.0),
                _ => None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessVerdict {
    pub ready: bool,
    pub first_ready_day: Option<i64>,
    pub consecutive_negative_days_required: usize,
    pub explanation: String,
}

/// Decides whether the series has left exponential growth.
///
/// Ready at the first day `d` where the smoothed second difference is
/// negative on the `k_consecutive` days ending at `d`, and the smoothed first
/// difference at `d` is below its running maximum. Because smoothing needs a
/// following day, the latest day that can qualify is the second-to-last.
pub fn readiness(series: &CaseSeries, k_consecutive: usize) -> Result<ReadinessVerdict, DataError> {
    if series.len() < 5 {
        return Err(DataError::TooShort {
            len: series.len(),
            need: 5,
        });
    }
    let k = k_consecutive.max(1);
    let der = derivatives(series)?;

    let mut running_max = f64::NEG_INFINITY;
    let mut negative_run = 0usize;
    let mut concavity_seen = false;
    let mut first_ready_day = None;

    for (i, &day) in der.days.iter().enumerate() {
        if let Some(v) = der.smoothed_first[i] {
            running_max = running_max.max(v);
        }
        match der.smoothed_second[i] {
            Some(v) if v < 0.0 => negative_run += 1,
            _ => negative_run = 0,
        }
        if negative_run >= k {
            concavity_seen = true;
            if der.smoothed_first[i].is_some_and(|v| v < running_max) {
                first_ready_day = Some(day);
                break;
            }
        }
    }

    let explanation = match first_ready_day {
        Some(day) => format!(
            "smoothed second difference negative for {k} consecutive days ending on day {day}, \
             with the smoothed daily increment below its running maximum"
        ),
        None if !concavity_seen => format!(
            "smoothed second difference has not been negative for {k} consecutive days \
             (concavity has not changed sign)"
        ),
        None => format!(
            "concavity turned negative for {k} consecutive days, but the smoothed daily \
             increment was still at its running maximum"
        ),
    };

    Ok(ReadinessVerdict {
        ready: first_ready_day.is_some(),
        first_ready_day,
        consecutive_negative_days_required: k,
        explanation,
    })
}
