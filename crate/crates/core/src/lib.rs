//! Logistic growth-curve fitting and ensemble forecasting for cumulative
//! epidemic case counts.
//!
//! The pipeline is: load a [`CaseSeries`] (CSV or a bundled table), remove
//! isolated reporting spikes with [`qc_correct`], check with [`readiness`]
//! that growth has left its exponential phase, then either [`fit`] a single
//! curve or [`generate`] a perturbed-observation ensemble and summarise it as
//! a quantile fan. [`verify_deterministic`] and [`verify_ensemble`] score the
//! results against held-out observations.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod diagnostics;
pub mod ensemble;
pub mod fitting;
pub mod logistic;
pub mod stats;
pub mod verification;

pub use dataio::{
    bundled_dataset, parse_csv, qc_correct, render_csv, CaseSeries, DataError, QcReport,
    BUNDLED_NAMES, DEFAULT_QC_THRESHOLD,
};
pub use diagnostics::{derivatives, readiness, DerivativeSeries, ReadinessVerdict};
pub use ensemble::{
    generate, generate_with, quantile_fan, EnsembleConfig, EnsembleError, EnsembleForecast,
    Execution, Fan, LagShift,
};
pub use fitting::{
    fit, fit_quality, fit_with, Abscissa, FitError, FitMethod, FitOptions, FitResult, InvalidReason,
};
pub use logistic::{derive_solution, integrate_ode, LogisticParams, LogisticSolution};
pub use verification::{verify_deterministic, verify_ensemble, VerificationReport};
