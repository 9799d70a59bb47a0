//! Closed-form min-plus algebra over token-bucket arrival curves and
//! rate-latency service curves.
//!
//! An arrival curve `alpha(t) = burst + rate * t` upper-bounds the traffic a
//! flow may emit in any window of length `t`; a service curve
//! `beta(t) = rate * max(0, t - latency)` lower-bounds the service a resource
//! guarantees over the same window. Both families are closed under every
//! operator the analysis needs, so each operation below is an exact closed
//! form:
//!
//! * concatenation of servers: `convolve` keeps the minimum rate and adds
//!   latencies,
//! * output characterisation: `deconvolve` inflates the burst by
//!   `rate * latency`,
//! * blind multiplexing: `residual_blind` subtracts the competitor rate and
//!   stretches the latency to the first instant the residual turns positive,
//! * `delay_bound` (horizontal deviation) and `backlog_bound` (vertical
//!   deviation) extract scalar guarantees from an (arrival, service) pair.
//!
//! The brute-force grid implementations used to validate these identities
//! live in [`oracle`].
//!
//! All quantities are plain `f64` in consistent units (bytes, milliseconds or
//! whatever the caller picks); callers compare results with an explicit
//! tolerance, never bitwise.

pub mod oracle;

use thiserror::Error;

/// Rate proxy used where an unconstrained (infinite-rate) server is needed,
/// e.g. the neutral element of [`ServiceCurve::convolve`].
pub const IDENTITY_RATE: f64 = 1e12;

/// Errors produced by curve operations whose closed form only exists under a
/// stability precondition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MinplusError {
    /// The arrival (or cross-traffic) rate reaches or exceeds the service
    /// rate, so backlog can grow without bound and no finite result exists.
    #[error("unstable: arrival rate {arrival_rate} vs service rate {service_rate}")]
    Unstable { arrival_rate: f64, service_rate: f64 },
    /// A delay shift must move the curve to the right.
    #[error("delay shift must be non-negative, got {0}")]
    NegativeDelay(f64),
}

/// Token-bucket arrival envelope `alpha(t) = burst + rate * t` for `t >= 0`,
/// zero for negative `t`.
///
/// Invariants: `burst >= 0`, `rate >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalCurve {
    /// Instantaneous backlog the source may release at once (bytes).
    pub burst: f64,
    /// Long-run rate (bytes per time unit).
    pub rate: f64,
}

impl ArrivalCurve {
    pub fn new(burst: f64, rate: f64) -> Self {
        debug_assert!(burst >= 0.0, "negative burst {burst}");
        debug_assert!(rate >= 0.0, "negative rate {rate}");
        Self { burst, rate }
    }

    /// Envelope of a source that never sends anything.
    pub fn zero() -> Self {
        Self { burst: 0.0, rate: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.burst + self.rate * t
        }
    }

    /// Tight envelope of the flow after it has crossed `service`
    /// (min-plus deconvolution `alpha / beta`).
    ///
    /// The burst grows by `rate * latency`; the rate is preserved. Requires
    /// `rate <= service.rate`, otherwise the backlog diverges.
    pub fn deconvolve(self, service: ServiceCurve) -> Result<ArrivalCurve, MinplusError> {
        if self.rate > service.rate {
            return Err(MinplusError::Unstable {
                arrival_rate: self.rate,
                service_rate: service.rate,
            });
        }
        Ok(ArrivalCurve {
            burst: self.burst + self.rate * service.latency,
            rate: self.rate,
        })
    }

    /// Component-wise sum of envelopes: the aggregate of independent sources.
    /// An empty iterator yields the zero envelope.
    pub fn sum<I>(curves: I) -> ArrivalCurve
    where
        I: IntoIterator<Item = ArrivalCurve>,
    {
        curves
            .into_iter()
            .fold(ArrivalCurve::zero(), |acc, c| ArrivalCurve {
                burst: acc.burst + c.burst,
                rate: acc.rate + c.rate,
            })
    }
}

/// Rate-latency service guarantee `beta(t) = rate * max(0, t - latency)`.
///
/// Invariants: `rate > 0`, `latency >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceCurve {
    /// Guaranteed long-run rate (bytes per time unit).
    pub rate: f64,
    /// Worst-case initial lag before the guarantee kicks in (time units).
    pub latency: f64,
}

impl ServiceCurve {
    pub fn new(rate: f64, latency: f64) -> Self {
        debug_assert!(rate > 0.0, "non-positive service rate {rate}");
        debug_assert!(latency >= 0.0, "negative latency {latency}");
        Self { rate, latency }
    }

    /// Neutral element of [`ServiceCurve::convolve`]: an (effectively)
    /// infinite-rate, zero-latency server.
    pub fn identity() -> Self {
        Self { rate: IDENTITY_RATE, latency: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.rate * (t - self.latency).max(0.0)
    }

    /// Service offered by this server followed by `other` (min-plus
    /// convolution): the slower rate and the summed latencies.
    pub fn convolve(self, other: ServiceCurve) -> ServiceCurve {
        ServiceCurve {
            rate: self.rate.min(other.rate),
            latency: self.latency + other.latency,
        }
    }

    /// The same guarantee delayed by `delay` (right shift of the curve).
    pub fn delay_shifted(self, delay: f64) -> Result<ServiceCurve, MinplusError> {
        if delay < 0.0 {
            return Err(MinplusError::NegativeDelay(delay));
        }
        Ok(ServiceCurve {
            rate: self.rate,
            latency: self.latency + delay,
        })
    }

    /// Residual service left to one flow when this server is shared with
    /// blind-multiplexed cross traffic bounded by `cross`:
    /// `(beta - alpha_cross)^+`, which is again rate-latency with
    /// rate `R - r` and latency `(R * T + b) / (R - r)`.
    ///
    /// Requires `cross.rate < rate`; at or above that the residual never
    /// turns positive.
    pub fn residual_blind(self, cross: ArrivalCurve) -> Result<ServiceCurve, MinplusError> {
        if cross.burst == 0.0 && cross.rate == 0.0 {
            return Ok(self);
        }
        if cross.rate >= self.rate {
            return Err(MinplusError::Unstable {
                arrival_rate: cross.rate,
                service_rate: self.rate,
            });
        }
        let rate = self.rate - cross.rate;
        let latency = (self.rate * self.latency + cross.burst) / rate;
        Ok(ServiceCurve { rate, latency })
    }
}

/// Worst-case delay of a flow bounded by `arrival` crossing a server
/// guaranteeing `service`: the horizontal deviation
/// `latency + burst / rate` between the two curves.
///
/// Requires `arrival.rate <= service.rate`.
pub fn delay_bound(arrival: ArrivalCurve, service: ServiceCurve) -> Result<f64, MinplusError> {
    if arrival.rate > service.rate {
        return Err(MinplusError::Unstable {
            arrival_rate: arrival.rate,
            service_rate: service.rate,
        });
    }
    Ok(service.latency + arrival.burst / service.rate)
}

/// Worst-case backlog of the same crossing: the vertical deviation
/// `burst + rate * latency`.
///
/// Requires `arrival.rate <= service.rate`.
pub fn backlog_bound(arrival: ArrivalCurve, service: ServiceCurve) -> Result<f64, MinplusError> {
    if arrival.rate > service.rate {
        return Err(MinplusError::Unstable {
            arrival_rate: arrival.rate,
            service_rate: service.rate,
        });
    }
    Ok(arrival.burst + arrival.rate * service.latency)
}
