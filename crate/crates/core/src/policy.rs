//! Task assignment policies.
//!
//! The balanced-task-assignment (BETA) rule offloads the unfinished task with
//! the fewest replicas; it keeps the replica vector as balanced as possible
//! and matches the dynamic-programming optimum. The round-robin baseline
//! cycles through task indices regardless of completion status — wasteful by
//! construction, which is exactly what makes it the analytic upper-bound
//! vehicle for the closed-form violation bound.

use crate::mdp::ValueTable;
use crate::model::TaskStatus;

/// Assignment rule selector. A value table can only drive the sampled-time
/// chain it was computed for.
#[derive(Debug, Clone, Copy)]
pub enum PolicyKind<'a> {
    Beta,
    RoundRobin,
    MdpTable(&'a ValueTable),
}

/// BETA: the unfinished task with the fewest replicas, lowest index on ties;
/// `None` once every task has finished.
pub fn beta_assign(status: &TaskStatus) -> Option<usize> {
    status
        .unfinished()
        .min_by_key(|&(i, r)| (r, i))
        .map(|(i, _)| i)
}

/// Round-robin: the `k`-th meeting (0-based) is assigned task `k mod N`,
/// even if that task has already finished.
pub fn round_robin_assign(meeting_index: u64, task_count: usize) -> usize {
    (meeting_index % task_count as u64) as usize
}

/// Totals behind the balance invariant: active replicas and unfinished tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceSnapshot {
    pub gamma: u64,
    pub unfinished: u64,
}

impl BalanceSnapshot {
    pub fn of(status: &TaskStatus) -> Self {
        BalanceSnapshot {
            gamma: status.active_replicas(),
            unfinished: status.unfinished_count() as u64,
        }
    }
}

/// True when every unfinished replica count lies within the tightest possible
/// band `{floor(gamma/u), ceil(gamma/u)}` — the signature of BETA assignment.
pub fn check_balance(status: &TaskStatus) -> bool {
    let snap = BalanceSnapshot::of(status);
    if snap.unfinished == 0 {
        return true;
    }
    let lo = snap.gamma / snap.unfinished;
    let hi = snap.gamma.div_ceil(snap.unfinished);
    status
        .unfinished()
        .all(|(_, r)| u64::from(r) == lo || u64::from(r) == hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskState;
    use crate::model::TaskState::{Active, Finished};
    use rand::Rng;

    fn status(states: &[TaskState]) -> TaskStatus {
        TaskStatus::from_states(states.to_vec())
    }

    #[test]
    fn beta_breaks_ties_toward_lowest_index() {
        assert_eq!(
            beta_assign(&status(&[Active(0), Active(0), Active(0)])),
            Some(0)
        );
    }

    #[test]
    fn beta_picks_unique_minimum_among_unfinished() {
        assert_eq!(
            beta_assign(&status(&[Active(2), Active(1), Finished])),
            Some(1)
        );
    }

    #[test]
    fn beta_returns_none_when_done() {
        assert_eq!(beta_assign(&status(&[Finished, Finished])), None);
    }

    #[test]
    fn round_robin_wraps_over_task_indices() {
        assert_eq!(round_robin_assign(0, 3), 0);
        assert_eq!(round_robin_assign(5, 3), 2);
        assert_eq!(round_robin_assign(7, 50), 7);
    }

    #[test]
    fn balance_examples() {
        assert!(check_balance(&status(&[Active(2), Active(2), Active(3)])));
        assert!(!check_balance(&status(&[Active(1), Active(3)])));
        assert!(check_balance(&status(&[Finished, Active(2), Active(2)])));
        assert!(check_balance(&status(&[Finished, Finished])));
    }

    #[test]
    fn beta_preserves_balance_along_random_trajectories() {
        // Any interleaving of BETA assignments and arbitrary completions keeps
        // the replica vector balanced right after every assignment.
        let mut rng = crate::rng::episode_rng(7, 0);
        for _ in 0..10_000 {
            let n = rng.random_range(1..=6usize);
            let mut st = TaskStatus::new(n);
            for _ in 0..rng.random_range(0..40usize) {
                if rng.random_bool(0.7) {
                    if let Some(task) = beta_assign(&st) {
                        st.add_replica(task);
                        assert!(check_balance(&st), "imbalanced after assignment: {st:?}");
                    }
                } else {
                    let unfinished: Vec<usize> = st.unfinished().map(|(i, _)| i).collect();
                    if !unfinished.is_empty() {
                        let pick = unfinished[rng.random_range(0..unfinished.len())];
                        st.set_finished(pick);
                    }
                }
            }
        }
    }
}
