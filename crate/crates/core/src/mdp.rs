//! Sampled-time chain and exact finite-horizon dynamic programming.
//!
//! The continuous encounter dynamics are discretised into slots of length
//! `delta`: a vehicle meets the task-RSU in a slot with probability
//! `M*mu*delta`, and each replica of a task independently completes (output
//! collected at one of the `B` RSUs) with probability `B*mu*delta`. Backwards
//! induction over the resulting chain yields the optimal expected number of
//! finished tasks and the optimal assignment per (status, slot) — the
//! benchmark every heuristic policy is validated against.

use std::collections::{HashMap, HashSet};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{TaskState, TaskStatus, SLOT_EVENT_BUDGET};

/// Hard cap on the enumerated `(status, stage)` table size.
pub const STATE_SPACE_CAP: f64 = 1e8;

/// Value ties tighter than this count as exact (fp noise from re-ordered
/// sums), so tied actions are all recorded as optimal.
const VALUE_TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("meeting_prob must lie in [0, 1), got {0}")]
    MeetingProb(f64),
    #[error("unit_completion_prob must lie in [0, 1), got {0}")]
    CompletionProb(f64),
    #[error("field `{0}` must be at least 1")]
    BelowOne(&'static str),
    #[error(
        "per-slot event budget {actual:.4} exceeds {budget}: the sampled-time \
         approximation needs a finer slot"
    )]
    SlotTooCoarse { actual: f64, budget: f64 },
    #[error(
        "state space needs about {estimate:.3e} entries, cap is {cap:.1e}; \
         use Monte Carlo plus the closed-form bound instead"
    )]
    StateSpaceCap { estimate: f64, cap: f64 },
    #[error("cannot assign finished task {0}")]
    FinishedTask(usize),
    #[error("task assignment requires a vehicle meeting")]
    AssignmentWithoutMeeting,
}

/// Parameters of the sampled-time chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteChainParams {
    /// Per-slot probability that a vehicle meets the task-RSU (`M*mu*delta`).
    pub meeting_prob: f64,
    /// Per-replica per-slot completion probability (`B*mu*delta`).
    pub unit_completion_prob: f64,
    /// Deadline in slots.
    pub horizon: u32,
    /// Batch size N.
    pub task_count: usize,
    /// Vehicle count M; active replicas can never exceed it.
    pub vehicle_count: u32,
}

impl DiscreteChainParams {
    /// Builds and validates chain parameters with the event probabilities
    /// given directly (the two knobs are independent here; physical scenarios
    /// couple them through `mu*delta`, see [`DiscreteChainParams::from_rates`]).
    pub fn new(
        meeting_prob: f64,
        unit_completion_prob: f64,
        horizon: u32,
        task_count: usize,
        vehicle_count: u32,
    ) -> Result<Self, ChainError> {
        let params = DiscreteChainParams {
            meeting_prob,
            unit_completion_prob,
            horizon,
            task_count,
            vehicle_count,
        };
        params.validate()
    }

    /// Discretises physical rates: `M` vehicles, `B` RSUs, meeting rate `mu`
    /// (1/s), slot length `delta` (s) and a deadline in seconds (rounded to
    /// whole slots).
    pub fn from_rates(
        vehicle_count: u32,
        rsu_count: u32,
        meeting_rate: f64,
        delta: f64,
        deadline: f64,
        task_count: usize,
    ) -> Result<Self, ChainError> {
        Self::new(
            vehicle_count as f64 * meeting_rate * delta,
            rsu_count as f64 * meeting_rate * delta,
            (deadline / delta).round() as u32,
            task_count,
            vehicle_count,
        )
    }

    fn validate(self) -> Result<Self, ChainError> {
        if !(0.0..1.0).contains(&self.meeting_prob) {
            return Err(ChainError::MeetingProb(self.meeting_prob));
        }
        if !(0.0..1.0).contains(&self.unit_completion_prob) {
            return Err(ChainError::CompletionProb(self.unit_completion_prob));
        }
        if self.task_count < 1 {
            return Err(ChainError::BelowOne("task_count"));
        }
        if self.vehicle_count < 1 {
            return Err(ChainError::BelowOne("vehicle_count"));
        }
        let actual = self.meeting_prob
            + self.task_count as f64 * self.vehicle_count as f64 * self.unit_completion_prob;
        if actual > SLOT_EVENT_BUDGET {
            return Err(ChainError::SlotTooCoarse {
                actual,
                budget: SLOT_EVENT_BUDGET,
            });
        }
        Ok(self)
    }

    /// Product-space size estimate behind [`STATE_SPACE_CAP`].
    pub fn state_space_estimate(self) -> f64 {
        ((self.vehicle_count + 2) as f64).powi(self.task_count as i32) * (self.horizon + 1) as f64
    }
}

/// One chain state: task status plus elapsed slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub status: TaskStatus,
    pub elapsed: u32,
}

/// Number of finished tasks; the reward collected at the terminal stage.
pub fn terminal_reward(state: &MdpState) -> u32 {
    state.status.finished_count() as u32
}

/// One-slot successor distribution from `state` under an optional assignment.
///
/// Independently per unfinished task `i`, completion occurs with probability
/// `(r_i + 1{i assigned}) * unit_completion_prob`; an assigned task that does
/// not complete this slot keeps the extra replica. Probabilities sum to one.
pub fn slot_transition(
    state: &MdpState,
    action: Option<usize>,
    meeting: bool,
    params: &DiscreteChainParams,
) -> Result<Vec<(MdpState, f64)>, ChainError> {
    debug_assert!(
        state.elapsed < params.horizon,
        "transition from terminal state"
    );
    if let Some(task) = action {
        if !meeting {
            return Err(ChainError::AssignmentWithoutMeeting);
        }
        if state.status.get(task).is_finished() {
            return Err(ChainError::FinishedTask(task));
        }
    }
    let unfinished: Vec<(usize, u32)> = state.status.unfinished().collect();
    let completion_probs: Vec<f64> = unfinished
        .iter()
        .map(|&(i, r)| {
            let boost = u32::from(action == Some(i));
            f64::from(r + boost) * params.unit_completion_prob
        })
        .collect();

    let mut successors = Vec::with_capacity(1 << unfinished.len());
    for mask in 0..(1_u64 << unfinished.len()) {
        let mut prob = 1.0;
        let mut status = state.status.clone();
        for (bit, (&(task, _), &q)) in unfinished.iter().zip(&completion_probs).enumerate() {
            if mask >> bit & 1 == 1 {
                prob *= q;
                status.set_finished(task);
            } else {
                prob *= 1.0 - q;
            }
        }
        if prob == 0.0 {
            continue;
        }
        if let Some(task) = action {
            if !status.get(task).is_finished() {
                status.add_replica(task);
            }
        }
        successors.push((
            MdpState {
                status,
                elapsed: state.elapsed + 1,
            },
            prob,
        ));
    }
    Ok(successors)
}

/// Expected immediate reward of the queue formulation for assigning `action`
/// given the current status: total in-service replicas after the slot, in
/// expectation. Maximising it over actions reproduces the fewest-replicas
/// assignment rule.
pub fn myopic_reward(
    status: &TaskStatus,
    action: usize,
    meeting: bool,
    params: &DiscreteChainParams,
) -> Result<f64, ChainError> {
    if status.get(action).is_finished() {
        return Err(ChainError::FinishedTask(action));
    }
    let c = f64::from(meeting);
    let mut reward = c;
    for (i, r) in status.unfinished() {
        let served = f64::from(r) + if i == action { c } else { 0.0 };
        let completion_prob = served * params.unit_completion_prob;
        reward += f64::from(r) - completion_prob * served;
    }
    Ok(reward)
}

/// Assignment recorded for one `(status, stage)`; conditional on a meeting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionChoice {
    /// Deterministic pick: lowest-index optimal action, preferring the
    /// fewest-replicas set on value ties. `None` when no assignment is
    /// possible (every task finished, or the vehicle pool is exhausted).
    pub canonical: Option<usize>,
    /// Every action whose conditional value ties the best within fp noise.
    pub optimal_set: Vec<usize>,
}

#[derive(Debug)]
struct StageTable {
    values: HashMap<TaskStatus, f64>,
    actions: HashMap<TaskStatus, ActionChoice>,
}

/// Output of value iteration: expected terminal reward and optimal action for
/// every reachable `(status, stage)` pair.
#[derive(Debug)]
pub struct ValueTable {
    params: DiscreteChainParams,
    stages: Vec<StageTable>,
}

impl ValueTable {
    pub fn params(&self) -> &DiscreteChainParams {
        &self.params
    }

    pub fn horizon(&self) -> u32 {
        self.params.horizon
    }

    /// Expected terminal reward from `(status, stage)`, if reachable.
    pub fn value(&self, status: &TaskStatus, stage: u32) -> Option<f64> {
        self.stages
            .get(stage as usize)
            .and_then(|s| s.values.get(status))
            .copied()
    }

    /// Recorded assignment for `(status, stage)`, if reachable and non-terminal.
    pub fn action(&self, status: &TaskStatus, stage: u32) -> Option<&ActionChoice> {
        self.stages
            .get(stage as usize)
            .and_then(|s| s.actions.get(status))
    }

    /// Reachable statuses at a stage, in deterministic order.
    pub fn reachable(&self, stage: u32) -> Vec<&TaskStatus> {
        let mut statuses: Vec<&TaskStatus> = match self.stages.get(stage as usize) {
            Some(s) => s.values.keys().collect(),
            None => Vec::new(),
        };
        statuses.sort_by_key(|s| status_sort_key(s));
        statuses
    }

    /// Optimal expected number of finished tasks from the all-zero start.
    pub fn optimal_expected_reward(&self) -> f64 {
        let start = TaskStatus::new(self.params.task_count);
        self.stages[0].values[&start]
    }

    /// Optimal average deadline violation ratio, `1 - J/N`.
    pub fn optimal_violation_ratio(&self) -> f64 {
        1.0 - self.optimal_expected_reward() / self.params.task_count as f64
    }

    /// Flat dump keyed by (replica vector, stage) for serialisation; finished
    /// tasks are encoded as -1.
    pub fn policy_dump(&self) -> PolicyDump {
        let mut entries = Vec::new();
        for stage in 0..=self.params.horizon {
            for status in self.reachable(stage) {
                let choice = self.action(status, stage);
                entries.push(PolicyEntry {
                    replicas: status
                        .states()
                        .iter()
                        .map(|s| s.replicas().map_or(-1, i64::from))
                        .collect(),
                    stage,
                    value: self.value(status, stage).unwrap(),
                    canonical_action: choice.and_then(|c| c.canonical),
                    optimal_actions: choice.map(|c| c.optimal_set.clone()).unwrap_or_default(),
                });
            }
        }
        PolicyDump {
            params: self.params,
            entries,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyDump {
    pub params: DiscreteChainParams,
    pub entries: Vec<PolicyEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyEntry {
    /// Replica count per task; -1 marks a finished task.
    pub replicas: Vec<i64>,
    pub stage: u32,
    pub value: f64,
    pub canonical_action: Option<usize>,
    pub optimal_actions: Vec<usize>,
}

fn status_sort_key(status: &TaskStatus) -> Vec<u64> {
    status
        .states()
        .iter()
        .map(|s| match s {
            TaskState::Active(r) => u64::from(*r),
            TaskState::Finished => u64::MAX,
        })
        .collect()
}

/// Actions available on a meeting: every unfinished task, provided a vehicle
/// is still free to take a replica.
fn available_actions(status: &TaskStatus, params: &DiscreteChainParams) -> Vec<usize> {
    if status.active_replicas() >= u64::from(params.vehicle_count) {
        return Vec::new();
    }
    status.unfinished().map(|(i, _)| i).collect()
}

/// Exact finite-horizon backwards induction over the reachable state space.
///
/// Returns the expected-reward and optimal-action tables for every reachable
/// `(status, stage)`; refuses configurations whose enumeration would exceed
/// [`STATE_SPACE_CAP`].
pub fn value_iteration(params: &DiscreteChainParams) -> Result<ValueTable, ChainError> {
    let estimate = params.state_space_estimate();
    if estimate > STATE_SPACE_CAP {
        return Err(ChainError::StateSpaceCap {
            estimate,
            cap: STATE_SPACE_CAP,
        });
    }

    // Forward pass: reachable statuses per stage, closed under every action.
    let start = TaskStatus::new(params.task_count);
    let mut reachable: Vec<Vec<TaskStatus>> = Vec::with_capacity(params.horizon as usize + 1);
    reachable.push(vec![start]);
    for stage in 0..params.horizon {
        let mut next: HashSet<TaskStatus> = HashSet::new();
        for status in &reachable[stage as usize] {
            let state = MdpState {
                status: status.clone(),
                elapsed: stage,
            };
            let p_meet = params.meeting_prob;
            let mut branches: Vec<(bool, Option<usize>)> = Vec::new();
            if p_meet < 1.0 {
                branches.push((false, None));
            }
            if p_meet > 0.0 {
                let actions = available_actions(status, params);
                if actions.is_empty() {
                    branches.push((true, None));
                } else {
                    branches.extend(actions.into_iter().map(|a| (true, Some(a))));
                }
            }
            for (meeting, action) in branches {
                for (succ, _) in slot_transition(&state, action, meeting, params).unwrap() {
                    next.insert(succ.status);
                }
            }
        }
        let mut next: Vec<TaskStatus> = next.into_iter().collect();
        next.sort_by_key(status_sort_key);
        reachable.push(next);
    }

    // Backward pass: terminal stage collects the finished-task count.
    let mut stages: Vec<StageTable> = (0..=params.horizon)
        .map(|_| StageTable {
            values: HashMap::new(),
            actions: HashMap::new(),
        })
        .collect();
    for status in &reachable[params.horizon as usize] {
        stages[params.horizon as usize]
            .values
            .insert(status.clone(), status.finished_count() as f64);
    }

    for stage in (0..params.horizon).rev() {
        let next_values = std::mem::take(&mut stages[stage as usize + 1].values);
        let evaluate = |status: &TaskStatus| -> (TaskStatus, f64, Option<ActionChoice>) {
            let state = MdpState {
                status: status.clone(),
                elapsed: stage,
            };
            let expected = |action: Option<usize>, meeting: bool| -> f64 {
                slot_transition(&state, action, meeting, params)
                    .unwrap()
                    .iter()
                    .map(|(succ, prob)| prob * next_values[&succ.status])
                    .sum()
            };

            let p_meet = params.meeting_prob;
            let no_meet_value = if p_meet < 1.0 {
                expected(None, false)
            } else {
                0.0
            };
            let actions = available_actions(status, params);
            let (meet_value, choice) = if p_meet == 0.0 {
                (0.0, None)
            } else if actions.is_empty() {
                (
                    expected(None, true),
                    Some(ActionChoice {
                        canonical: None,
                        optimal_set: Vec::new(),
                    }),
                )
            } else {
                let valued: Vec<(usize, f64)> = actions
                    .iter()
                    .map(|&a| (a, expected(Some(a), true)))
                    .collect();
                let best = valued
                    .iter()
                    .map(|&(_, v)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let optimal_set: Vec<usize> = valued
                    .iter()
                    .filter(|&&(_, v)| v >= best - VALUE_TIE_EPS)
                    .map(|&(a, _)| a)
                    .collect();
                // Prefer the fewest-replicas members so the canonical pick is
                // stable across equivalent-value ties.
                let fewest = status
                    .unfinished()
                    .map(|(_, r)| r)
                    .min()
                    .expect("unfinished task exists");
                let canonical = optimal_set
                    .iter()
                    .copied()
                    .find(|&a| status.get(a).replicas() == Some(fewest))
                    .or_else(|| optimal_set.first().copied());
                (
                    best,
                    Some(ActionChoice {
                        canonical,
                        optimal_set,
                    }),
                )
            };

            let value = (1.0 - p_meet) * no_meet_value + p_meet * meet_value;
            (status.clone(), value, choice)
        };

        #[cfg(feature = "parallel")]
        let results: Vec<_> = reachable[stage as usize].par_iter().map(evaluate).collect();
        #[cfg(not(feature = "parallel"))]
        let results: Vec<_> = reachable[stage as usize].iter().map(evaluate).collect();

        stages[stage as usize + 1].values = next_values;
        for (status, value, choice) in results {
            if let Some(choice) = choice {
                stages[stage as usize]
                    .actions
                    .insert(status.clone(), choice);
            }
            stages[stage as usize].values.insert(status, value);
        }
    }

    Ok(ValueTable {
        params: *params,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskState::{Active, Finished};

    fn status(states: &[TaskState]) -> TaskStatus {
        TaskStatus::from_states(states.to_vec())
    }

    fn tiny_params(unit: f64) -> DiscreteChainParams {
        DiscreteChainParams {
            meeting_prob: 0.01,
            unit_completion_prob: unit,
            horizon: 20,
            task_count: 2,
            vehicle_count: 20,
        }
    }

    #[test]
    fn validation_enforces_event_budget() {
        let err = DiscreteChainParams::new(0.02, 0.005, 20, 2, 20).unwrap_err();
        assert!(matches!(err, ChainError::SlotTooCoarse { .. }));
        assert!(DiscreteChainParams::new(0.004, 0.001, 20, 2, 20).is_ok());
    }

    #[test]
    fn all_finished_self_loops() {
        let params = tiny_params(0.001);
        let state = MdpState {
            status: status(&[Finished, Finished]),
            elapsed: 3,
        };
        let dist = slot_transition(&state, None, true, &params).unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].0.status, state.status);
        assert_eq!(dist[0].0.elapsed, 4);
        assert_eq!(dist[0].1, 1.0);
    }

    #[test]
    fn single_task_no_meeting_is_bernoulli() {
        let params = DiscreteChainParams {
            meeting_prob: 0.004,
            unit_completion_prob: 0.01,
            horizon: 5,
            task_count: 1,
            vehicle_count: 4,
        };
        let state = MdpState {
            status: status(&[Active(1)]),
            elapsed: 0,
        };
        let dist = slot_transition(&state, None, false, &params).unwrap();
        let mut by_status: HashMap<TaskStatus, f64> = HashMap::new();
        for (s, p) in dist {
            *by_status.entry(s.status).or_insert(0.0) += p;
        }
        assert!((by_status[&status(&[Finished])] - 0.01).abs() < 1e-15);
        assert!((by_status[&status(&[Active(1)])] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn assignment_distribution_matches_product_form() {
        // r = (1, 2), meeting, assign task 0: both completion probabilities
        // are 2u, and the assigned task keeps the extra replica only when it
        // does not complete this slot.
        let u = 0.001;
        let params = tiny_params(u);
        let state = MdpState {
            status: status(&[Active(1), Active(2)]),
            elapsed: 0,
        };
        let dist = slot_transition(&state, Some(0), true, &params).unwrap();
        let q = 2.0 * u;
        let mut by_status: HashMap<TaskStatus, f64> = HashMap::new();
        for (s, p) in dist {
            *by_status.entry(s.status).or_insert(0.0) += p;
        }
        let cases = [
            (status(&[Finished, Finished]), q * q),
            (status(&[Finished, Active(2)]), q * (1.0 - q)),
            (status(&[Active(2), Finished]), (1.0 - q) * q),
            (status(&[Active(2), Active(2)]), (1.0 - q) * (1.0 - q)),
        ];
        assert_eq!(by_status.len(), cases.len());
        for (st, expected) in cases {
            assert!(
                (by_status[&st] - expected).abs() < 1e-15,
                "mass mismatch for {st:?}"
            );
        }
    }

    #[test]
    fn assigning_finished_task_errors() {
        let params = tiny_params(0.001);
        let state = MdpState {
            status: status(&[Finished, Active(0)]),
            elapsed: 0,
        };
        assert_eq!(
            slot_transition(&state, Some(0), true, &params).unwrap_err(),
            ChainError::FinishedTask(0)
        );
        assert_eq!(
            slot_transition(&state, Some(1), false, &params).unwrap_err(),
            ChainError::AssignmentWithoutMeeting
        );
    }

    #[test]
    fn from_rates_discretises_physical_parameters() {
        // 20 vehicles, 5 RSUs, mu = 4e-5/s, 0.01 s slots, 0.2 s deadline.
        let params = DiscreteChainParams::from_rates(20, 5, 4e-5, 0.01, 0.2, 2).unwrap();
        assert!((params.meeting_prob - 20.0 * 4e-5 * 0.01).abs() < 1e-18);
        assert!((params.unit_completion_prob - 5.0 * 4e-5 * 0.01).abs() < 1e-18);
        assert_eq!(params.horizon, 20);
        assert_eq!(params.vehicle_count, 20);
    }

    proptest::proptest! {
        #[test]
        fn transition_mass_is_conserved(
            replicas in proptest::collection::vec(0_u32..6, 1..5),
            finished_mask in proptest::collection::vec(proptest::bool::ANY, 1..5),
            unit in 1e-5_f64..0.002,
            meeting in proptest::bool::ANY,
        ) {
            let states: Vec<TaskState> = replicas
                .iter()
                .zip(finished_mask.iter().cycle())
                .map(|(&r, &f)| if f { Finished } else { Active(r) })
                .collect();
            let n = states.len();
            let st = TaskStatus::from_states(states);
            let params = DiscreteChainParams {
                meeting_prob: 0.01,
                unit_completion_prob: unit,
                horizon: 4,
                task_count: n,
                vehicle_count: 40,
            };
            let state = MdpState { status: st.clone(), elapsed: 0 };
            let action = if meeting { st.unfinished().map(|(i, _)| i).next() } else { None };
            let total: f64 = slot_transition(&state, action, meeting, &params)
                .unwrap()
                .iter()
                .map(|(_, p)| p)
                .sum();
            proptest::prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_probabilities_sum_to_one() {
        let params = tiny_params(0.0012);
        let statuses = [
            status(&[Active(0), Active(0)]),
            status(&[Active(3), Active(1)]),
            status(&[Finished, Active(5)]),
            status(&[Active(2), Finished]),
        ];
        for st in statuses {
            let state = MdpState {
                status: st.clone(),
                elapsed: 1,
            };
            let action = st.unfinished().map(|(i, _)| i).next();
            for (act, meeting) in [(None, false), (None, true), (action, true)] {
                let total: f64 = slot_transition(&state, act, meeting, &params)
                    .unwrap()
                    .iter()
                    .map(|(_, p)| p)
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "sum {total} for {st:?}");
            }
        }
    }

    #[test]
    fn terminal_reward_counts_finished() {
        let mk = |states: &[TaskState]| MdpState {
            status: status(states),
            elapsed: 0,
        };
        assert_eq!(terminal_reward(&mk(&[Finished, Finished, Finished])), 3);
        assert_eq!(terminal_reward(&mk(&[Active(0), Active(0)])), 0);
        assert_eq!(terminal_reward(&mk(&[Finished, Active(3), Finished])), 2);
    }

    #[test]
    fn myopic_reward_symmetric_when_counts_tie() {
        let params = tiny_params(0.001);
        let st = status(&[Active(0), Active(0)]);
        let g0 = myopic_reward(&st, 0, true, &params).unwrap();
        let g1 = myopic_reward(&st, 1, true, &params).unwrap();
        assert_eq!(g0, g1);
    }

    #[test]
    fn myopic_reward_prefers_fewest_replicas() {
        let params = tiny_params(0.001);
        let st = status(&[Active(1), Active(3)]);
        let g0 = myopic_reward(&st, 0, true, &params).unwrap();
        let g1 = myopic_reward(&st, 1, true, &params).unwrap();
        assert!(g0 > g1, "expected task with 1 replica to win: {g0} vs {g1}");
    }

    #[test]
    fn myopic_reward_ignores_action_without_meeting() {
        let params = tiny_params(0.001);
        let st = status(&[Active(1), Active(3)]);
        let g0 = myopic_reward(&st, 0, false, &params).unwrap();
        let g1 = myopic_reward(&st, 1, false, &params).unwrap();
        assert_eq!(g0, g1);
    }

    #[test]
    fn myopic_argmax_subset_of_fewest_replicas() {
        // Exhaustive sweep over small statuses: the myopic rule never prefers
        // a task that does not have the fewest replicas.
        let params = tiny_params(0.0008);
        let values = [Active(0), Active(1), Active(2), Active(4), Finished];
        for &a in &values {
            for &b in &values {
                for &c in &values {
                    let st = status(&[a, b, c]);
                    let unfinished: Vec<usize> = st.unfinished().map(|(i, _)| i).collect();
                    if unfinished.is_empty() {
                        continue;
                    }
                    let rewards: Vec<(usize, f64)> = unfinished
                        .iter()
                        .map(|&i| (i, myopic_reward(&st, i, true, &params).unwrap()))
                        .collect();
                    let best = rewards
                        .iter()
                        .map(|&(_, g)| g)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let fewest = st.unfinished().map(|(_, r)| r).min().unwrap();
                    for (i, g) in rewards {
                        if g >= best - 1e-15 {
                            assert_eq!(
                                st.get(i).replicas(),
                                Some(fewest),
                                "argmax action {i} in {st:?} is not a fewest-replicas task"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_horizon_collects_nothing() {
        let params = DiscreteChainParams::new(0.004, 0.001, 0, 2, 20).unwrap();
        let table = value_iteration(&params).unwrap();
        assert_eq!(table.optimal_expected_reward(), 0.0);
        assert_eq!(table.optimal_violation_ratio(), 1.0);
    }

    #[test]
    fn single_task_always_assigned() {
        let params = DiscreteChainParams::new(0.01, 0.002, 12, 1, 10).unwrap();
        let table = value_iteration(&params).unwrap();
        for stage in 0..params.horizon {
            for st in table.reachable(stage) {
                let choice = table.action(st, stage).unwrap();
                if st.all_finished() || st.active_replicas() >= 10 {
                    assert_eq!(choice.canonical, None);
                } else {
                    assert_eq!(choice.canonical, Some(0), "stage {stage}, {st:?}");
                }
            }
        }
    }

    #[test]
    fn values_bounded_and_terminal_matches_reward() {
        let params = DiscreteChainParams::new(0.004, 0.001, 10, 2, 20).unwrap();
        let table = value_iteration(&params).unwrap();
        for stage in 0..=params.horizon {
            for st in table.reachable(stage) {
                let v = table.value(st, stage).unwrap();
                assert!((0.0..=2.0 + 1e-12).contains(&v));
                if stage == params.horizon {
                    assert_eq!(v, st.finished_count() as f64);
                }
            }
        }
    }

    #[test]
    fn value_non_increasing_in_stage() {
        // Less time remaining cannot increase the expected reward.
        let params = DiscreteChainParams::new(0.004, 0.001, 12, 2, 20).unwrap();
        let table = value_iteration(&params).unwrap();
        for stage in 0..params.horizon {
            for st in table.reachable(stage) {
                let now = table.value(st, stage).unwrap();
                if let Some(later) = table.value(st, stage + 1) {
                    assert!(
                        now + 1e-12 >= later,
                        "J increased with elapsed time at {st:?}: {now} < {later}"
                    );
                }
            }
        }
    }

    #[test]
    fn optimal_actions_are_fewest_replica_tasks() {
        // Structural consequence of optimality: wherever an assignment is
        // possible, some fewest-replicas task attains the best value and the
        // canonical pick is one of them.
        let params = DiscreteChainParams::new(0.01, 0.001, 10, 3, 12).unwrap();
        let table = value_iteration(&params).unwrap();
        let mut checked = 0;
        for stage in 0..params.horizon {
            for st in table.reachable(stage) {
                let choice = table.action(st, stage).unwrap();
                let Some(canonical) = choice.canonical else {
                    continue;
                };
                let fewest = st.unfinished().map(|(_, r)| r).min().unwrap();
                assert_eq!(
                    st.get(canonical).replicas(),
                    Some(fewest),
                    "canonical action at stage {stage}, {st:?}"
                );
                checked += 1;
            }
        }
        assert!(checked > 100, "sweep too small: {checked} states");
    }

    #[test]
    fn state_space_cap_enforced() {
        let params = DiscreteChainParams {
            meeting_prob: 0.0001,
            unit_completion_prob: 1e-9,
            horizon: 100,
            task_count: 8,
            vehicle_count: 100,
        };
        assert!(matches!(
            value_iteration(&params).unwrap_err(),
            ChainError::StateSpaceCap { .. }
        ));
    }

    #[test]
    fn coupled_service_trajectories_finish_supersets() {
        // Fixed completion-event coupling: with shared uniforms, a replica
        // plan that is pointwise at least another finishes a superset of
        // tasks. Enumerated over tiny instances (N <= 2, D <= 6 slots).
        use rand::Rng;
        let u = 0.04;
        let mut rng = crate::rng::episode_rng(99, 0);
        for _ in 0..200 {
            let n = rng.random_range(1..=2usize);
            let d = rng.random_range(1..=6u32);
            let low: Vec<Vec<u32>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(0..4u32)).collect())
                .collect();
            let high: Vec<Vec<u32>> = low
                .iter()
                .map(|row| row.iter().map(|&r| r + rng.random_range(0..3u32)).collect())
                .collect();
            let uniforms: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
                .collect();
            let finishes = |plan: &[Vec<u32>]| -> Vec<bool> {
                (0..n)
                    .map(|i| (0..d as usize).any(|t| uniforms[i][t] < plan[i][t] as f64 * u))
                    .collect()
            };
            let f_low = finishes(&low);
            let f_high = finishes(&high);
            for i in 0..n {
                assert!(
                    !f_low[i] || f_high[i],
                    "higher-rate plan dropped a completion"
                );
            }
        }
    }
}
