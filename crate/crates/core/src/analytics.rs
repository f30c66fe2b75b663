//! Closed-form performance analysis of the balanced replication system.
//!
//! The per-replica delivery delay is hypoexponential: an `Exp(lambda1)`
//! encounter lag with the task-RSU followed by an `Exp(lambda2)` collection
//! lag (`lambda1 = mu`, `lambda2 = mu * B`). Thinning the vehicle pool evenly
//! over the batch leaves `Poisson(alpha)` candidate vehicles per task with
//! `alpha = lambda*S/N`, and the deadline violation probability of the system
//! is bounded by `exp(-alpha * F(D))` with `F` the hypoexponential CDF. For
//! short deadlines that bound degenerates into a Rayleigh tail, which is what
//! links offloading performance to road-traffic quantities.

use serde::Serialize;
use thiserror::Error;

/// Default deadline-regime threshold: the short-deadline (Rayleigh) forms are
/// flagged trustworthy when both `lambda1*D` and `lambda2*D` stay below this.
pub const SHORT_DEADLINE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("rate `{0}` must be positive")]
    NonPositiveRate(&'static str),
    #[error("the service CDF is defined for x >= 0, got {0}")]
    NegativeX(f64),
    #[error("the mean delay diverges when alpha = 0 (no vehicles)")]
    ZeroAlpha,
}

/// Rates of the two delivery stages: `lambda1 = mu` (reach the task-RSU),
/// `lambda2 = mu * B` (reach any of the B RSUs with the output).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypoexpParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Relative rate gap below which the CDF switches to its two-stage Erlang
/// limit (the generic form divides by `lambda2 - lambda1`).
const DEGENERATE_RATE_GAP: f64 = 1e-9;

impl HypoexpParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, AnalyticsError> {
        if lambda1 <= 0.0 || !lambda1.is_finite() {
            return Err(AnalyticsError::NonPositiveRate("lambda1"));
        }
        if lambda2 <= 0.0 || !lambda2.is_finite() {
            return Err(AnalyticsError::NonPositiveRate("lambda2"));
        }
        Ok(HypoexpParams { lambda1, lambda2 })
    }

    /// Stage rates of a system with meeting rate `mu` (1/s) and `rsu_count` RSUs.
    pub fn from_rates(mu: f64, rsu_count: u32) -> Result<Self, AnalyticsError> {
        Self::new(mu, mu * f64::from(rsu_count))
    }

    fn is_degenerate(self) -> bool {
        (self.lambda2 - self.lambda1).abs() < DEGENERATE_RATE_GAP * self.lambda1
    }
}

/// CDF of the two-stage delivery delay `Exp(lambda1) + Exp(lambda2)`.
///
/// Evaluated through the survival form
/// `S(x) = exp(-lambda1*x) * (1 + lambda1 * (1 - exp(-gap*x)) / gap)`,
/// which avoids the catastrophic cancellation of the textbook two-term
/// expression when the rates are close, and degenerates continuously into the
/// two-stage Erlang limit `1 - exp(-lx)(1 + lx)` at `lambda1 = lambda2`.
pub fn service_cdf(x: f64, params: HypoexpParams) -> Result<f64, AnalyticsError> {
    if x < 0.0 || x.is_nan() {
        return Err(AnalyticsError::NegativeX(x));
    }
    let survival = if params.is_degenerate() {
        let rate = 0.5 * (params.lambda1 + params.lambda2);
        (-rate * x).exp() * (1.0 + rate * x)
    } else {
        let gap = params.lambda2 - params.lambda1;
        let g = -f64::exp_m1(-gap * x) / gap;
        (-params.lambda1 * x).exp() * (1.0 + params.lambda1 * g)
    };
    Ok(1.0 - survival)
}

/// Everything the closed-form bounds need for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Mean vehicles per task, `lambda * S / N`.
    pub alpha: f64,
    pub params: HypoexpParams,
    /// Deadline (s).
    pub deadline: f64,
}

/// Upper bound on the deadline violation probability: `exp(-alpha * F(D))`.
pub fn violation_bound(inputs: BoundInputs) -> f64 {
    let f = service_cdf(inputs.deadline, inputs.params).expect("deadline >= 0");
    poisson_mixture_survival(inputs.alpha, f)
}

/// Short-deadline (Rayleigh) form of the bound:
/// `exp(-alpha * lambda1 * lambda2 * D^2 / 2)`.
pub fn rayleigh_bound(inputs: BoundInputs) -> f64 {
    let exponent = 0.5
        * inputs.alpha
        * inputs.params.lambda1
        * inputs.params.lambda2
        * inputs.deadline.powi(2);
    (-exponent).exp()
}

/// Whether the short-deadline regime holds at `threshold` (see
/// [`SHORT_DEADLINE_THRESHOLD`]).
pub fn short_deadline_ok(inputs: BoundInputs, threshold: f64) -> bool {
    inputs.params.lambda1 * inputs.deadline <= threshold
        && inputs.params.lambda2 * inputs.deadline <= threshold
}

/// Mean delivery delay of the bounding system (Rayleigh mean):
/// `sqrt(pi / (2 * alpha * lambda1 * lambda2))`.
pub fn mean_delay(inputs: BoundInputs) -> Result<f64, AnalyticsError> {
    if inputs.alpha <= 0.0 {
        return Err(AnalyticsError::ZeroAlpha);
    }
    Ok((std::f64::consts::PI
        / (2.0 * inputs.alpha * inputs.params.lambda1 * inputs.params.lambda2))
        .sqrt())
}

/// Poisson mixture identity: averaging `(1 - F)^K` over `K ~ Poisson(alpha)`
/// collapses to `exp(-alpha * F)`.
pub fn poisson_mixture_survival(alpha: f64, f_value: f64) -> f64 {
    debug_assert!(alpha >= 0.0);
    debug_assert!((0.0..=1.0).contains(&f_value));
    (-alpha * f_value).exp()
}

/// Truncated-series companion of [`poisson_mixture_survival`]:
/// `sum_{k=0}^{terms} alpha^k e^{-alpha} (1 - F)^k / k!`.
pub fn poisson_mixture_survival_series(alpha: f64, f_value: f64, terms: u32) -> f64 {
    let ratio = alpha * (1.0 - f_value);
    let mut term = (-alpha).exp();
    let mut total = term;
    for k in 1..=terms {
        term *= ratio / f64::from(k);
        total += term;
    }
    total
}

/// Violation probability in the long-road regime, in density-normalised form:
/// `exp(-L * V(L)^2 * (B/S) * D^2 / (2N))` with the linear speed law
/// `V(L) = vmax * (1 - L/lmax)`. Invariant under scaling the road and the RSU
/// fleet together.
pub fn asymptotic_large_city(
    density: f64,
    vmax_kmh: f64,
    lmax: f64,
    rsu_per_km: f64,
    task_count: usize,
    deadline: f64,
) -> f64 {
    let speed = vmax_kmh * (1.0 - density / lmax);
    // speed is km/h while the deadline is in seconds.
    let exponent = density * speed * speed * rsu_per_km * deadline * deadline
        / (2.0 * task_count as f64 * 3600.0 * 3600.0);
    (-exponent).exp()
}

/// Violation probability when RSUs saturate the road: collection is
/// instantaneous, so only the `Exp(mu)` encounter lag remains:
/// `exp(-(L*S/N) * (1 - e^{-mu*D}))`.
pub fn asymptotic_high_rsu(
    density: f64,
    road_length: f64,
    task_count: usize,
    mu: f64,
    deadline: f64,
) -> f64 {
    let exponent = density * road_length / task_count as f64 * (-f64::exp_m1(-mu * deadline));
    (-exponent).exp()
}

/// Short-deadline limit of [`asymptotic_high_rsu`] under the linear speed
/// law: `exp(-(L * V(L) / N) * D)` (with the km/h-to-seconds conversion).
pub fn asymptotic_high_rsu_short_deadline(
    density: f64,
    vmax_kmh: f64,
    lmax: f64,
    task_count: usize,
    deadline: f64,
) -> f64 {
    let speed = vmax_kmh * (1.0 - density / lmax);
    let exponent = density * speed * deadline / (task_count as f64 * 3600.0);
    (-exponent).exp()
}

/// Flags qualifying the closed forms in a [`BoundReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeFlags {
    /// True when both stage rates times the deadline stay below
    /// [`SHORT_DEADLINE_THRESHOLD`], i.e. the Rayleigh forms are trustworthy.
    pub short_deadline_ok: bool,
}

/// Bundle of every closed form for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub exact_bound: f64,
    pub rayleigh_bound: f64,
    /// `None` when `alpha = 0` (the mean diverges on an empty road).
    pub mean_delay: Option<f64>,
    pub regime_flags: RegimeFlags,
}

impl BoundReport {
    pub fn for_inputs(inputs: BoundInputs) -> Self {
        BoundReport {
            exact_bound: violation_bound(inputs),
            rayleigh_bound: rayleigh_bound(inputs),
            mean_delay: mean_delay(inputs).ok(),
            regime_flags: RegimeFlags {
                short_deadline_ok: short_deadline_ok(inputs, SHORT_DEADLINE_THRESHOLD),
            },
        }
    }

    /// Bound inputs of a scenario configuration.
    pub fn for_config(cfg: &crate::model::SystemConfig) -> Result<Self, AnalyticsError> {
        let inputs = BoundInputs {
            alpha: cfg.vehicle_density * cfg.road_length / cfg.task_count as f64,
            params: HypoexpParams::from_rates(cfg.meeting_rate, cfg.rsu_count)?,
            deadline: cfg.deadline,
        };
        Ok(Self::for_inputs(inputs))
    }
}
