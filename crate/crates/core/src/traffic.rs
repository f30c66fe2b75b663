//! Speed-density models and road-traffic optima.
//!
//! Macroscopic traffic theory ties the mean vehicle speed `V` to the density
//! `L` through a non-increasing law `V(L)`; the flow is `F = V*L`. Offloading
//! performance depends on the same law through the meeting rate `mu = V/S`,
//! but weighs speed more heavily: in the short-deadline regime the violation
//! exponent is proportional to `L*V(L)^2`. The density maximizing that
//! objective (`L-dagger`) sits below the classical flow-optimal ("critical")
//! density (`L-star`) for every model in the supported families.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{rayleigh_bound, violation_bound, BoundInputs, HypoexpParams};
use crate::model::SystemConfig;
use crate::policy::PolicyKind;
use crate::rng::derive_seed;
use crate::sim::run_monte_carlo;

/// Jam density of the measurement-calibrated freeway model.
pub const M27_JAM_DENSITY: f64 = 149.797;
/// Free-flow speed of the calibrated freeway model (km/h).
pub const M27_FREE_FLOW: f64 = 116.4;
/// Exponent of the calibrated freeway model.
pub const M27_EXPONENT: f64 = 1.964;

/// Grid size for the coarse scan that brackets the numeric optimizer and for
/// the sampled validity checks.
const GRID_POINTS: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("density {0} outside the model domain [{1}, {2}]")]
    DensityOutOfDomain(f64, f64, f64),
    #[error("free-flow speed must be positive")]
    NonPositiveSpeed,
    #[error("jam density must be positive")]
    NonPositiveJam,
    #[error("road length must be positive")]
    NonPositiveRoad,
    #[error("free-flow term must be non-negative, got {0}")]
    NegativeFreeFlow(f64),
    #[error("polynomial coefficient must be non-negative, got {0}")]
    NegativeCoefficient(f64),
    #[error("polynomial exponent {0} outside (0, +inf) and (-1, -1/2)")]
    ExponentOutOfRange(f64),
    #[error(
        "polynomial exponent {0} sits on an open-interval boundary; \
         the ordering guarantee is unverified there"
    )]
    ExponentOnBoundary(f64),
    #[error("speed model goes negative near density {0:.3} (V = {1:.3})")]
    NegativeSpeedAt(f64, f64),
    #[error("speed model increases near density {0:.3}")]
    SpeedIncreasesAt(f64),
    #[error("custom model needs at least two (density, speed) points")]
    TooFewPoints,
    #[error("custom model densities must be strictly increasing and non-negative")]
    BadDensityGrid,
}

/// Macroscopic speed-density law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SpeedDensityModel {
    /// `V(L) = v_max * (1 - L/l_max)`.
    Linear { v_max: f64, l_max: f64 },
    /// `V(L) = free_flow - sum_k c_k * L^(alpha_k)` on `[0, l_max]`.
    Polynomial {
        free_flow: f64,
        /// `(coefficient, exponent)` pairs.
        terms: Vec<(f64, f64)>,
        l_max: f64,
    },
    /// Freeway model calibrated on loop-sensor measurements:
    /// `V = 116.4 * (1 - (L/149.797)^1.964)`.
    M27Calibrated,
    /// Tabulated `(density, speed)` points, linearly interpolated.
    Custom { points: Vec<(f64, f64)> },
}

impl SpeedDensityModel {
    pub fn linear(v_max: f64, l_max: f64) -> Result<Self, TrafficError> {
        if v_max <= 0.0 || v_max.is_nan() {
            return Err(TrafficError::NonPositiveSpeed);
        }
        if l_max <= 0.0 || l_max.is_nan() {
            return Err(TrafficError::NonPositiveJam);
        }
        Ok(SpeedDensityModel::Linear { v_max, l_max })
    }

    pub fn polynomial(
        free_flow: f64,
        terms: Vec<(f64, f64)>,
        l_max: f64,
    ) -> Result<Self, TrafficError> {
        if free_flow < 0.0 {
            return Err(TrafficError::NegativeFreeFlow(free_flow));
        }
        if l_max <= 0.0 || l_max.is_nan() {
            return Err(TrafficError::NonPositiveJam);
        }
        for &(c, alpha) in &terms {
            if c < 0.0 {
                return Err(TrafficError::NegativeCoefficient(c));
            }
            // Valid exponents: (0, inf) or the open interval (-1, -1/2); the
            // boundaries are flagged rather than silently admitted.
            if alpha == -1.0 || alpha == -0.5 {
                return Err(TrafficError::ExponentOnBoundary(alpha));
            }
            let valid = alpha > 0.0 || (-1.0 < alpha && alpha < -0.5);
            if !valid {
                return Err(TrafficError::ExponentOutOfRange(alpha));
            }
        }
        let model = SpeedDensityModel::Polynomial {
            free_flow,
            terms,
            l_max,
        };
        model.check_sampled()?;
        Ok(model)
    }

    pub fn m27() -> Self {
        SpeedDensityModel::M27Calibrated
    }

    pub fn custom(points: Vec<(f64, f64)>) -> Result<Self, TrafficError> {
        if points.len() < 2 {
            return Err(TrafficError::TooFewPoints);
        }
        if points[0].0 < 0.0 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(TrafficError::BadDensityGrid);
        }
        for w in points.windows(2) {
            if w[1].1 > w[0].1 + 1e-9 {
                return Err(TrafficError::SpeedIncreasesAt(w[1].0));
            }
        }
        if let Some(&(l, v)) = points.iter().find(|&&(_, v)| v < 0.0) {
            return Err(TrafficError::NegativeSpeedAt(l, v));
        }
        Ok(SpeedDensityModel::Custom { points })
    }

    /// Model domain `[lo, hi]` in veh/km.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            SpeedDensityModel::Linear { l_max, .. }
            | SpeedDensityModel::Polynomial { l_max, .. } => (0.0, *l_max),
            SpeedDensityModel::M27Calibrated => (0.0, M27_JAM_DENSITY),
            SpeedDensityModel::Custom { points } => (points[0].0, points[points.len() - 1].0),
        }
    }

    fn speed_unchecked(&self, density: f64) -> f64 {
        match self {
            SpeedDensityModel::Linear { v_max, l_max } => v_max * (1.0 - density / l_max),
            SpeedDensityModel::Polynomial {
                free_flow, terms, ..
            } => free_flow - terms.iter().map(|&(c, a)| c * density.powf(a)).sum::<f64>(),
            SpeedDensityModel::M27Calibrated => {
                M27_FREE_FLOW * (1.0 - (density / M27_JAM_DENSITY).powf(M27_EXPONENT))
            }
            SpeedDensityModel::Custom { points } => {
                let idx = points.partition_point(|&(l, _)| l <= density);
                if idx == 0 {
                    return points[0].1;
                }
                if idx == points.len() {
                    return points[points.len() - 1].1;
                }
                let (l0, v0) = points[idx - 1];
                let (l1, v1) = points[idx];
                v0 + (v1 - v0) * (density - l0) / (l1 - l0)
            }
        }
    }

    fn check_sampled(&self) -> Result<(), TrafficError> {
        let (lo, hi) = self.domain();
        let mut prev = f64::INFINITY;
        for i in 0..=GRID_POINTS {
            let l = lo + (hi - lo) * i as f64 / GRID_POINTS as f64;
            let v = self.speed_unchecked(l);
            if v < -1e-9 {
                return Err(TrafficError::NegativeSpeedAt(l, v));
            }
            if v > prev + 1e-9 {
                return Err(TrafficError::SpeedIncreasesAt(l));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Mean speed (km/h) at a density inside the model domain.
pub fn speed(model: &SpeedDensityModel, density: f64) -> Result<f64, TrafficError> {
    let (lo, hi) = model.domain();
    if !(lo..=hi).contains(&density) {
        return Err(TrafficError::DensityOutOfDomain(density, lo, hi));
    }
    Ok(model.speed_unchecked(density))
}

/// One point of the fundamental diagram; `flow = speed * density` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrafficPoint {
    /// veh/km
    pub density: f64,
    /// km/h
    pub speed: f64,
    /// veh/h
    pub flow: f64,
}

pub fn traffic_point(
    model: &SpeedDensityModel,
    density: f64,
) -> Result<TrafficPoint, TrafficError> {
    let v = speed(model, density)?;
    Ok(TrafficPoint {
        density,
        speed: v,
        flow: v * density,
    })
}

/// Per-vehicle per-RSU meeting rate (1/h): a vehicle at mean speed `V`
/// traverses the `S` km road loop in `S/V` hours, so `mu = V(L)/S`.
pub fn meeting_rate_per_hour(
    model: &SpeedDensityModel,
    density: f64,
    road_length: f64,
) -> Result<f64, TrafficError> {
    if road_length <= 0.0 || road_length.is_nan() {
        return Err(TrafficError::NonPositiveRoad);
    }
    Ok(speed(model, density)? / road_length)
}

/// [`meeting_rate_per_hour`] converted to the library's internal 1/s.
pub fn meeting_rate_per_second(
    model: &SpeedDensityModel,
    density: f64,
    road_length: f64,
) -> Result<f64, TrafficError> {
    Ok(meeting_rate_per_hour(model, density, road_length)? / 3600.0)
}

/// Bounded scalar maximization: a coarse scan over `GRID_POINTS` cells
/// brackets the maximum, then golden-section search narrows the bracket to a
/// relative width below `1e-9` (tight enough for closed-form agreement at
/// 1e-6). Objectives here are unimodal for valid models; the scan guards the
/// tabulated ones.
fn maximize<F: Fn(f64) -> f64>(objective: F, lo: f64, hi: f64) -> f64 {
    debug_assert!(hi > lo);
    let span = hi - lo;
    let grid = |i: usize| lo + span * i as f64 / GRID_POINTS as f64;
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for i in 0..=GRID_POINTS {
        let value = objective(grid(i));
        if value > best_value {
            best_value = value;
            best = i;
        }
    }
    let mut a = grid(best.saturating_sub(1));
    let mut b = grid((best + 1).min(GRID_POINTS));

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > 1e-9 * span.max(a.abs()) {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        }
    }
    0.5 * (a + b)
}

/// Critical density: argmax of the traffic flow `V(L)*L` (endpoint maxima
/// allowed). `l_max/2` for the linear law.
pub fn critical_density(model: &SpeedDensityModel) -> f64 {
    let (lo, hi) = model.domain();
    maximize(|l| model.speed_unchecked(l) * l, lo, hi)
}

/// Offloading-optimal density: argmax of the short-deadline objective
/// `V(L)^2 * L`. `l_max/3` for the linear law.
pub fn evcc_optimal_density(model: &SpeedDensityModel) -> f64 {
    let (lo, hi) = model.domain();
    maximize(|l| model.speed_unchecked(l).powi(2) * l, lo, hi)
}

/// Closed-form optima of a pure monomial law `V = g - c*L^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonomialOptima {
    pub coefficient: f64,
    pub exponent: f64,
    /// `(g / (c (1 + alpha)))^(1/alpha)`; `None` when the expression leaves
    /// the real line.
    pub l_star: Option<f64>,
    /// `(g / (c (1 + 2 alpha)))^(1/alpha)`.
    pub l_dagger: Option<f64>,
}

fn monomial_optima(free_flow: f64, c: f64, alpha: f64) -> MonomialOptima {
    let closed = |stretch: f64| {
        let base = free_flow / (c * stretch);
        let value = base.powf(1.0 / alpha);
        (value.is_finite() && value > 0.0).then_some(value)
    };
    MonomialOptima {
        coefficient: c,
        exponent: alpha,
        l_star: closed(1.0 + alpha),
        l_dagger: closed(1.0 + 2.0 * alpha),
    }
}

/// Both optima, their ordering, and whether the sufficient conditions for the
/// ordering could be verified for this model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityComparison {
    pub l_star: f64,
    pub l_dagger: f64,
    /// `l_dagger <= l_star` up to optimizer resolution.
    pub ordering_holds: bool,
    /// False for tabulated models that fail the sampled concavity probe; the
    /// comparison is still computed, just not guaranteed in advance.
    pub conditions_verified: bool,
    /// Per-term closed forms for polynomial models, empty otherwise.
    pub monomial_closed_forms: Vec<MonomialOptima>,
}

/// Sampled concavity probe (second differences on the validation grid).
fn looks_concave(model: &SpeedDensityModel) -> bool {
    let (lo, hi) = model.domain();
    let step = (hi - lo) / GRID_POINTS as f64;
    let tol = 1e-9 * model.speed_unchecked(lo).abs().max(1.0);
    (1..GRID_POINTS).all(|i| {
        let l = lo + step * i as f64;
        let second = model.speed_unchecked(l - step) + model.speed_unchecked(l + step)
            - 2.0 * model.speed_unchecked(l);
        second <= tol
    })
}

pub fn compare_densities(model: &SpeedDensityModel) -> DensityComparison {
    let l_star = critical_density(model);
    let l_dagger = evcc_optimal_density(model);
    let (lo, hi) = model.domain();
    let conditions_verified = match model {
        SpeedDensityModel::Linear { .. } | SpeedDensityModel::Polynomial { .. } => true,
        SpeedDensityModel::M27Calibrated => true,
        SpeedDensityModel::Custom { .. } => looks_concave(model),
    };
    let monomial_closed_forms = match model {
        SpeedDensityModel::Polynomial {
            free_flow, terms, ..
        } => terms
            .iter()
            .map(|&(c, alpha)| monomial_optima(*free_flow, c, alpha))
            .collect(),
        _ => Vec::new(),
    };
    DensityComparison {
        l_star,
        l_dagger,
        ordering_holds: l_dagger <= l_star + 1e-6 * (hi - lo),
        conditions_verified,
        monomial_closed_forms,
    }
}

/// How the violation probability entering the efficiency metric is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PvSource {
    /// Hypoexponential closed-form upper bound.
    ExactBound,
    /// Short-deadline Rayleigh form.
    Rayleigh,
    /// BETA-policy Monte Carlo with this many episodes per grid point.
    MonteCarlo { iterations: u64 },
}

/// One point of the computing-vs-traffic efficiency tradeoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    /// veh/km
    pub density: f64,
    /// km/h
    pub speed: f64,
    pub violation_prob: f64,
    /// Executed tasks per hour, `task_gen_rate * (1 - p_v)`.
    pub eta_ce: f64,
    /// Traffic flow `V*L` (veh/h).
    pub eta_te: f64,
    /// Offered tasks per hour.
    pub task_gen_rate: f64,
}

/// Sweeps the density grid, deriving the meeting rate from the speed model
/// and the violation probability from the chosen source. Densities at which
/// no vehicle moves (or none exist) execute nothing.
pub fn efficiency_curve(
    model: &SpeedDensityModel,
    template: &SystemConfig,
    task_gen_rate_per_hour: f64,
    grid: &[f64],
    source: PvSource,
) -> Result<Vec<EfficiencyPoint>, TrafficError> {
    let mut points = Vec::with_capacity(grid.len());
    for (index, &density) in grid.iter().enumerate() {
        let v = speed(model, density)?;
        let mu = meeting_rate_per_second(model, density, template.road_length)?;
        let alpha = density * template.road_length / template.task_count as f64;
        let violation_prob = if mu <= 0.0 || alpha <= 0.0 {
            1.0
        } else {
            let inputs = BoundInputs {
                alpha,
                params: HypoexpParams::from_rates(mu, template.rsu_count)
                    .expect("positive meeting rate"),
                deadline: template.deadline,
            };
            match source {
                PvSource::ExactBound => violation_bound(inputs),
                PvSource::Rayleigh => rayleigh_bound(inputs),
                PvSource::MonteCarlo { iterations } => {
                    let cfg = SystemConfig {
                        vehicle_density: density,
                        meeting_rate: mu,
                        seed: derive_seed(template.seed, index as u64),
                        ..template.clone()
                    };
                    run_monte_carlo(&cfg, PolicyKind::Beta, iterations)
                        .expect("BETA runs on the continuous backend")
                        .violation_ratio_mean
                }
            }
        };
        points.push(EfficiencyPoint {
            density,
            speed: v,
            violation_prob,
            eta_ce: task_gen_rate_per_hour * (1.0 - violation_prob),
            eta_te: v * density,
            task_gen_rate: task_gen_rate_per_hour,
        });
    }
    Ok(points)
}

/// Samples a random non-increasing concave piecewise-linear speed law
/// (property-test input for the ordering guarantee).
pub fn sample_concave_model<R: Rng + ?Sized>(rng: &mut R) -> SpeedDensityModel {
    let v_max = rng.random_range(40.0..140.0);
    let l_max = rng.random_range(80.0..220.0);
    let segments = rng.random_range(3..9usize);
    // Non-decreasing positive slopes magnitudes => concave decreasing V.
    let mut magnitudes: Vec<f64> = (0..segments).map(|_| rng.random_range(0.2..1.0)).collect();
    magnitudes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut widths: Vec<f64> = (0..segments).map(|_| rng.random_range(0.5..1.5)).collect();
    let width_total: f64 = widths.iter().sum();
    for w in &mut widths {
        *w *= l_max / width_total;
    }
    let drop_total: f64 = magnitudes.iter().zip(&widths).map(|(m, w)| m * w).sum();
    let scale = v_max / drop_total;
    let mut points = vec![(0.0, v_max)];
    let (mut l, mut v) = (0.0, v_max);
    for (m, w) in magnitudes.iter().zip(&widths) {
        l += w;
        v -= scale * m * w;
        points.push((l, v.max(0.0)));
    }
    SpeedDensityModel::custom(points).expect("construction is valid by design")
}
