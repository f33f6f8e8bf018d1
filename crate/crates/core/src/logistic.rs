//! The logistic rate equation `dE/dt = alpha*E - beta*E^2 + gamma` and its
//! closed-form solution.
//!
//! Writing the right-hand side as `(a*E + S)(1 - E/E_inf)` with
//!
//! ```text
//! S     = gamma
//! E_inf = alpha/(2 beta) + sqrt(alpha^2/(4 beta^2) + gamma/beta)
//! a     = beta * E_inf
//! ```
//!
//! the trajectory through `E(0) = E0` is
//!
//! ```text
//! E(t) = E_inf * [1 - (1 + S/(a E_inf)) / (1 + C1 exp(C2 t))]
//! C1   = (E0 + S/a) / (E_inf - E0)
//! C2   = a + S/E_inf
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum LogisticError {
    #[error("beta <= 0: growth is unbounded, no logistic asymptote")]
    NotLogistic,
    #[error("initial value is at or above the asymptote")]
    SaturatedStart,
    #[error("alpha^2/(4 beta^2) + gamma/beta < 0: no real asymptote")]
    NoRealAsymptote,
    #[error("alpha + gamma/E <= 0: doubling time undefined")]
    UndefinedDoublingTime,
}

/// Rate-equation coefficients: `alpha` in 1/day, `beta` in 1/(day*case),
/// `gamma` in cases/day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LogisticParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Right-hand side of the rate equation.
    pub fn rate(&self, e: f64) -> f64 {
        self.alpha * e - self.beta * e * e + self.gamma
    }

    pub fn discriminant(&self) -> f64 {
        self.alpha * self.alpha / (4.0 * self.beta * self.beta) + self.gamma / self.beta
    }

    /// Positive root of `beta E^2 - alpha E - gamma = 0`.
    pub fn asymptote(&self) -> Result<f64, LogisticError> {
        if !(self.beta > 0.0) {
            return Err(LogisticError::NotLogistic);
        }
        let disc = self.discriminant();
        if disc < 0.0 {
            return Err(LogisticError::NoRealAsymptote);
        }
        Ok(self.alpha / (2.0 * self.beta) + disc.sqrt())
    }

    /// Count at which the growth rate peaks (the curve's inflection).
    pub fn inflection(&self) -> f64 {
        self.alpha / (2.0 * self.beta)
    }

    /// `ln 2 / (alpha + gamma/E)`.
    ///
    /// The quadratic term is deliberately absent: this is the doubling time
    /// of the linear part of the rate only.
    pub fn doubling_time(&self, e: f64) -> Result<f64, LogisticError> {
        let rate = self.alpha + self.gamma / e;
        if !(e > 0.0) || !(rate > 0.0) {
            return Err(LogisticError::UndefinedDoublingTime);
        }
        Ok(std::f64::consts::LN_2 / rate)
    }
}

/// Closed-form trajectory anchored at `origin_day` (where `t = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSolution {
    pub s: f64,
    pub a: f64,
    pub e_inf: f64,
    pub c1: f64,
    pub c2: f64,
    pub e0: f64,
    pub origin_day: i64,
}

pub fn derive_solution(
    params: &LogisticParams,
    e0: f64,
    origin_day: i64,
) -> Result<LogisticSolution, LogisticError> {
    let e_inf = params.asymptote()?;
    if e0 >= e_inf {
        return Err(LogisticError::SaturatedStart);
    }
    let s = params.gamma;
    let a = params.beta * e_inf;
    Ok(LogisticSolution {
        s,
        a,
        e_inf,
        c1: (e0 + s / a) / (e_inf - e0),
        c2: a + s / e_inf,
        e0,
        origin_day,
    })
}

impl LogisticSolution {
    /// `E(t)` with `t` in days since `origin_day`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.e_inf * self.evaluate_normalized(t)
    }

    /// `E(t) / E_inf`.
    pub fn evaluate_normalized(&self, t: f64) -> f64 {
        let growth = self.c1 * (self.c2 * t).exp();
        1.0 - (1.0 + self.s / (self.a * self.e_inf)) / (1.0 + growth)
    }

    /// Value on the absolute day axis.
    pub fn at_day(&self, day: f64) -> f64 {
        self.evaluate(day - self.origin_day as f64)
    }

    /// Lower (unstable) root `-S/a`; trajectories starting below it decay.
    pub fn lower_root(&self) -> f64 {
        -self.s / self.a
    }

    pub fn shifted(&self, days: i64) -> Self {
        Self {
            origin_day: self.origin_day + days,
            ..*self
        }
    }
}

/// Samples of an ODE trajectory: `times[i]` paired with `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, f64) {
        (
            *self.times.last().expect("non-empty"),
            *self.values.last().expect("non-empty"),
        )
    }
}

/// Classical fourth-order Runge-Kutta integration of the rate equation from
/// `t = 0` to `t_end`. The final step is shortened to land on `t_end`.
pub fn integrate_ode(params: &LogisticParams, e0: f64, t_end: f64, step: f64) -> Trajectory {
    assert!(step > 0.0, "step must be positive");
    let n_full = (t_end / step).floor() as usize;
    let mut times = Vec::with_capacity(n_full + 2);
    let mut values = Vec::with_capacity(n_full + 2);
    let f = |e: f64| params.rate(e);

    let mut e = e0;
    times.push(0.0);
    values.push(e);
    let mut i = 0usize;
    loop {
        let t = i as f64 * step;
        let remaining = t_end - t;
        if remaining <= step * 1e-9 {
            break;
        }
        let h = remaining.min(step);
        let k1 = f(e);
        let k2 = f(e + 0.5 * h * k1);
        let k3 = f(e + 0.5 * h * k2);
        let k4 = f(e + h * k3);
        e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        i += 1;
        times.push(if h < step { t_end } else { i as f64 * step });
        values.push(e);
    }
    Trajectory { times, values }
}
