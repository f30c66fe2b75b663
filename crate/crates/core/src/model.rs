//! Shared domain types: scenario configuration, task status and Monte Carlo
//! outcome aggregates.
//!
//! Units are seconds and kilometres throughout the library; any km/h or
//! per-hour quantity is converted at the construction boundary.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-slot total event probability budget for the sampled-time chain.
/// Slot lengths must keep `meeting_prob + N*M*unit_completion_prob` below this
/// for the discrete approximation of the continuous dynamics to be faithful.
pub const SLOT_EVENT_BUDGET: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("field `{0}` must not be negative")]
    Negative(&'static str),
    #[error("field `{0}` must be at least 1")]
    BelowOne(&'static str),
    #[error(
        "slot duration too coarse: per-slot event budget {actual:.4} exceeds {budget} \
         (shrink `slot_duration`)"
    )]
    SlotTooCoarse { actual: f64, budget: f64 },
}

/// Full description of one offloading scenario.
///
/// `meeting_rate` is the per-vehicle, per-RSU encounter rate in 1/s; it can be
/// given directly or derived from a speed-density model via
/// [`crate::traffic::meeting_rate_per_second`]. `slot_duration` is only
/// consumed when the scenario is discretised into the sampled-time chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Vehicle density on the road (veh/km).
    pub vehicle_density: f64,
    /// Road length (km).
    pub road_length: f64,
    /// Number of tasks in the batch.
    pub task_count: usize,
    /// Deadline shared by all tasks (s).
    pub deadline: f64,
    /// Number of RSUs collecting task outputs.
    pub rsu_count: u32,
    /// Per-vehicle per-RSU meeting rate (1/s).
    pub meeting_rate: f64,
    /// Sampled-time increment (s); discrete chain only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_duration: Option<f64>,
    /// Task batch generation interval (s); consumed only by the efficiency
    /// metric. Defaults to the deadline when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_interval: Option<f64>,
    /// Root RNG seed.
    pub seed: u64,
}

impl SystemConfig {
    /// Checks every field invariant, returning the config unchanged on success.
    ///
    /// The error names the offending field. A zero vehicle density is legal
    /// (an empty road simply violates every deadline).
    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.vehicle_density < 0.0 || !self.vehicle_density.is_finite() {
            return Err(ConfigError::Negative("vehicle_density"));
        }
        if self.road_length <= 0.0 || !self.road_length.is_finite() {
            return Err(ConfigError::NonPositive("road_length"));
        }
        if self.task_count < 1 {
            return Err(ConfigError::BelowOne("task_count"));
        }
        if self.deadline <= 0.0 || !self.deadline.is_finite() {
            return Err(ConfigError::NonPositive("deadline"));
        }
        if self.rsu_count < 1 {
            return Err(ConfigError::BelowOne("rsu_count"));
        }
        if self.meeting_rate < 0.0 || !self.meeting_rate.is_finite() {
            return Err(ConfigError::Negative("meeting_rate"));
        }
        if let Some(delta) = self.slot_duration {
            if delta <= 0.0 || !delta.is_finite() {
                return Err(ConfigError::NonPositive("slot_duration"));
            }
            // Expected vehicle count stands in for M when budgeting the slot.
            let m = self.vehicle_density * self.road_length;
            let meeting_prob = m * self.meeting_rate * delta;
            let unit = self.rsu_count as f64 * self.meeting_rate * delta;
            let actual = meeting_prob + self.task_count as f64 * m * unit;
            if actual > SLOT_EVENT_BUDGET {
                return Err(ConfigError::SlotTooCoarse {
                    actual,
                    budget: SLOT_EVENT_BUDGET,
                });
            }
        }
        if let Some(t) = self.task_interval {
            if t <= 0.0 || !t.is_finite() {
                return Err(ConfigError::NonPositive("task_interval"));
            }
        }
        Ok(self)
    }

    /// Expected vehicle count on the road.
    pub fn mean_vehicle_count(&self) -> f64 {
        self.vehicle_density * self.road_length
    }

    /// Task batch generation rate N/T (1/s); T defaults to the deadline.
    pub fn task_gen_rate(&self) -> f64 {
        self.task_count as f64 / self.task_interval.unwrap_or(self.deadline)
    }
}

/// Draws the number of vehicles present for one episode: Poisson with mean
/// `lambda * road_length`, held fixed for the episode (deadlines are short
/// relative to vehicle turnover).
pub fn sample_vehicle_count<R: Rng + ?Sized>(lambda: f64, road_length: f64, rng: &mut R) -> u64 {
    let mean = lambda * road_length;
    if mean <= 0.0 {
        return 0;
    }
    let poisson = Poisson::new(mean).expect("positive finite mean");
    poisson.sample(rng) as u64
}

/// Execution state of one task: the number of replicas being computed, or
/// finished. Finished is absorbing; replica counts never decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TaskState {
    Active(u32),
    Finished,
}

impl TaskState {
    pub fn is_finished(self) -> bool {
        matches!(self, TaskState::Finished)
    }

    /// Replica count for an active task, `None` once finished.
    pub fn replicas(self) -> Option<u32> {
        match self {
            TaskState::Active(r) => Some(r),
            TaskState::Finished => None,
        }
    }
}

/// Replica-count vector over the task batch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TaskStatus(Vec<TaskState>);

impl TaskStatus {
    /// All tasks pending with zero replicas.
    pub fn new(task_count: usize) -> Self {
        TaskStatus(vec![TaskState::Active(0); task_count])
    }

    pub fn from_states(states: Vec<TaskState>) -> Self {
        TaskStatus(states)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, task: usize) -> TaskState {
        self.0[task]
    }

    pub fn states(&self) -> &[TaskState] {
        &self.0
    }

    pub fn set_finished(&mut self, task: usize) {
        self.0[task] = TaskState::Finished;
    }

    /// Adds one replica to an active task. Panics on a finished task; callers
    /// must route assignments through an unfinished-task check.
    pub fn add_replica(&mut self, task: usize) {
        match self.0[task] {
            TaskState::Active(r) => self.0[task] = TaskState::Active(r + 1),
            TaskState::Finished => panic!("replica added to finished task {task}"),
        }
    }

    pub fn all_finished(&self) -> bool {
        self.0.iter().all(|s| s.is_finished())
    }

    pub fn finished_count(&self) -> usize {
        self.0.iter().filter(|s| s.is_finished()).count()
    }

    /// Number of unfinished tasks.
    pub fn unfinished_count(&self) -> usize {
        self.0.len() - self.finished_count()
    }

    /// Total replicas across unfinished tasks.
    pub fn active_replicas(&self) -> u64 {
        self.0
            .iter()
            .filter_map(|s| s.replicas())
            .map(u64::from)
            .sum()
    }

    pub fn unfinished(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.replicas().map(|r| (i, r)))
    }
}

/// What happened to each task in one simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    /// Per-task completion-before-deadline flags.
    pub omega: Vec<bool>,
    /// Vehicle count drawn (or fixed) for the episode.
    pub vehicle_count: u64,
    /// Per-task first completion time (s, or slots for the discrete backend);
    /// `None` when no replica of the task ever completes.
    pub completion_times: Vec<Option<f64>>,
    /// Replicas offloaded per task (round-robin may replicate finished tasks).
    pub replica_counts: Vec<u32>,
}

impl EpisodeOutcome {
    /// Fraction of tasks that missed the deadline.
    pub fn violation_ratio(&self) -> f64 {
        let missed = self.omega.iter().filter(|&&done| !done).count();
        missed as f64 / self.omega.len() as f64
    }
}

/// Monte Carlo aggregate of per-episode violation ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Mean per-episode violation ratio.
    pub violation_ratio_mean: f64,
    /// Standard error of the mean; `None` below two iterations.
    pub stderr: Option<f64>,
    pub iterations: u64,
    /// Raw per-episode ratios in episode order.
    pub per_iteration_ratios: Vec<f64>,
}

impl SimStats {
    /// Aggregates per-episode ratios. The summation order is fixed (episode
    /// order), so parallel and sequential runs aggregate identically.
    pub fn from_ratios(ratios: Vec<f64>) -> Self {
        assert!(!ratios.is_empty(), "at least one iteration required");
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let stderr = if ratios.len() >= 2 {
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Some((var / n).sqrt())
        } else {
            None
        };
        SimStats {
            violation_ratio_mean: mean,
            stderr,
            iterations: ratios.len() as u64,
            per_iteration_ratios: ratios,
        }
    }
}
