//! Brute-force min-plus operations on sampled curves.
//!
//! Test support: the closed forms in the parent module are validated against
//! these direct grid computations, which work on plain arrays of samples and
//! share no code with the implementation they check. Accuracy is limited by
//! the grid: results are exact up to one step times the relevant Lipschitz
//! constant. Nothing in the analysis pipeline uses this module.

use super::{ArrivalCurve, ServiceCurve};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    /// The searched extremum ran off the sampled window; the caller must
    /// sample a longer horizon (at least twice the expected deviation).
    #[error("sampled horizon too small: {0}")]
    InsufficientHorizon(String),
    #[error("invalid sampled curve: {0}")]
    InvalidCurve(String),
}

/// A curve discretised on the uniform grid `0, step, 2*step, ...`.
///
/// Samples must be non-negative and non-decreasing (all curves in this crate
/// are cumulative).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    step: f64,
    values: Vec<f64>,
}

impl SampledCurve {
    pub fn from_values(step: f64, values: Vec<f64>) -> Result<Self, OracleError> {
        if !(step > 0.0) {
            return Err(OracleError::InvalidCurve(format!("step {step} must be > 0")));
        }
        if values.is_empty() {
            return Err(OracleError::InvalidCurve("no samples".into()));
        }
        if values[0] < 0.0 {
            return Err(OracleError::InvalidCurve(format!(
                "negative sample {} at index 0",
                values[0]
            )));
        }
        if let Some(i) = (1..values.len()).find(|&i| values[i] < values[i - 1]) {
            return Err(OracleError::InvalidCurve(format!(
                "samples decrease at index {i}"
            )));
        }
        Ok(Self { step, values })
    }

    /// Sample `alpha(t) = burst + rate * t` on `[0, horizon]`.
    pub fn sample_arrival(curve: ArrivalCurve, step: f64, horizon: f64) -> Self {
        Self::sample(|t| curve.eval(t), step, horizon)
    }

    /// Sample `beta(t) = rate * max(0, t - latency)` on `[0, horizon]`.
    pub fn sample_service(curve: ServiceCurve, step: f64, horizon: f64) -> Self {
        Self::sample(|t| curve.eval(t), step, horizon)
    }

    fn sample(f: impl Fn(f64) -> f64, step: f64, horizon: f64) -> Self {
        assert!(step > 0.0 && horizon > step, "bad grid: step {step}, horizon {horizon}");
        let n = (horizon / step).ceil() as usize + 1;
        let values = (0..n).map(|i| f(i as f64 * step)).collect();
        Self { step, values }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample at grid index `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }
}

fn check_same_grid(a: &SampledCurve, b: &SampledCurve) -> Result<(), OracleError> {
    if a.step != b.step || a.len() != b.len() {
        return Err(OracleError::InvalidCurve(format!(
            "grid mismatch: ({}, {}) vs ({}, {})",
            a.step,
            a.len(),
            b.step,
            b.len()
        )));
    }
    Ok(())
}

/// Min-plus convolution at grid index `i`:
/// `min over j <= i of f(t_i - t_j) + g(t_j)`.
pub fn convolve_at(f: &SampledCurve, g: &SampledCurve, i: usize) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..=i.min(g.len() - 1) {
        if i - j >= f.len() {
            continue;
        }
        let v = f.value(i - j) + g.value(j);
        if v < best {
            best = v;
        }
    }
    best
}

/// Min-plus deconvolution at grid index `i`:
/// `sup over u >= 0 of alpha(t_i + u) - beta(u)`.
///
/// The sup is scanned over the sampled window, so `i` must leave at least
/// half the window for `u`; beyond that the result would silently truncate.
pub fn deconvolve_at(
    alpha: &SampledCurve,
    beta: &SampledCurve,
    i: usize,
) -> Result<f64, OracleError> {
    check_same_grid(alpha, beta)?;
    if i > alpha.len() / 2 {
        return Err(OracleError::InsufficientHorizon(format!(
            "probe index {i} beyond half of {} samples",
            alpha.len()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for u in 0..alpha.len() - i {
        let v = alpha.value(i + u) - beta.value(u);
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Horizontal deviation: the largest delay `d` such that some backlog of
/// `alpha` waits `d` before `beta` catches up. Scans every grid point in the
/// first half of the window and walks `beta` forward to the crossing.
pub fn horizontal_deviation(
    alpha: &SampledCurve,
    beta: &SampledCurve,
) -> Result<f64, OracleError> {
    check_same_grid(alpha, beta)?;
    let mut j = 0usize;
    let mut best = 0.0f64;
    for i in 0..=alpha.len() / 2 {
        let target = alpha.value(i);
        while j < beta.len() && beta.value(j) < target {
            j += 1;
        }
        if j == beta.len() {
            return Err(OracleError::InsufficientHorizon(format!(
                "service never reaches {target} within the window"
            )));
        }
        if j > i {
            best = best.max((j - i) as f64 * alpha.step());
        }
    }
    Ok(best)
}

/// Vertical deviation: `max over t of alpha(t) - beta(t)`.
pub fn vertical_deviation(
    alpha: &SampledCurve,
    beta: &SampledCurve,
) -> Result<f64, OracleError> {
    check_same_grid(alpha, beta)?;
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for i in 0..alpha.len() {
        let v = alpha.value(i) - beta.value(i);
        if v > best {
            best = v;
            arg = i;
        }
    }
    if arg + 1 == alpha.len() {
        return Err(OracleError::InsufficientHorizon(
            "deviation still growing at the window edge".into(),
        ));
    }
    Ok(best.max(0.0))
}

/// Point-wise positive part of `beta - alpha`, the blind-multiplexing
/// residual before any curve fitting.
pub fn residual_pointwise(
    beta: &SampledCurve,
    alpha: &SampledCurve,
) -> Result<SampledCurve, OracleError> {
    check_same_grid(beta, alpha)?;
    let values = (0..beta.len())
        .map(|i| (beta.value(i) - alpha.value(i)).max(0.0))
        .collect();
    SampledCurve::from_values(beta.step(), values)
}

/// Fit the tightest rate-latency curve under a sampled curve that is zero up
/// to some latency and (near-)linear afterwards. Returns `(rate, latency)`.
pub fn rate_latency_envelope(curve: &SampledCurve) -> Result<(f64, f64), OracleError> {
    let eps = 1e-12;
    let Some(first) = (0..curve.len()).find(|&i| curve.value(i) > eps) else {
        return Err(OracleError::InvalidCurve("curve is identically zero".into()));
    };
    if first + 1 >= curve.len() {
        return Err(OracleError::InsufficientHorizon(
            "curve only rises at the window edge".into(),
        ));
    }
    // Linear-interpolate the zero crossing, then take the end-to-end slope.
    let t_first = first as f64 * curve.step();
    let rise = curve.value(first) - curve.value(first - 1).max(0.0);
    let latency = if first == 0 {
        0.0
    } else {
        t_first - curve.step() * curve.value(first) / rise
    };
    let rate =
        (curve.value(curve.len() - 1) - curve.value(first)) / ((curve.len() - 1 - first) as f64 * curve.step());
    Ok((rate, latency))
}
