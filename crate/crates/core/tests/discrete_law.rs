//! The discrete simulator, the transition kernel and the value tables must
//! all describe one chain: these tests cross-validate them against each other
//! and against exhaustive forward propagation.

use std::collections::HashMap;

use evcc_sim::mdp::{slot_transition, value_iteration, DiscreteChainParams, MdpState};
use evcc_sim::model::{TaskState, TaskStatus};
use evcc_sim::policy::{beta_assign, PolicyKind};
use evcc_sim::rng::episode_rng;
use evcc_sim::sim::{run_monte_carlo_discrete, simulate_episode_discrete};

/// Exact state distribution after `stages` slots under the BETA policy,
/// propagated through the transition kernel.
fn propagate_beta(params: &DiscreteChainParams, stages: u32) -> HashMap<TaskStatus, f64> {
    let mut dist: HashMap<TaskStatus, f64> = HashMap::new();
    dist.insert(TaskStatus::new(params.task_count), 1.0);
    for stage in 0..stages {
        let mut next: HashMap<TaskStatus, f64> = HashMap::new();
        for (status, mass) in &dist {
            let state = MdpState {
                status: status.clone(),
                elapsed: stage,
            };
            let mut spread = |action, meeting, weight: f64| {
                if weight == 0.0 {
                    return;
                }
                for (succ, p) in slot_transition(&state, action, meeting, params).unwrap() {
                    *next.entry(succ.status).or_insert(0.0) += weight * p;
                }
            };
            spread(None, false, mass * (1.0 - params.meeting_prob));
            let capacity = status.active_replicas() < u64::from(params.vehicle_count);
            let action = if capacity { beta_assign(status) } else { None };
            spread(action, true, mass * params.meeting_prob);
        }
        dist = next;
    }
    dist
}

/// End-of-episode status reconstructed from an outcome: finished tasks show
/// their completion, unfinished ones their replica count.
fn final_status(outcome: &evcc_sim::model::EpisodeOutcome) -> TaskStatus {
    TaskStatus::from_states(
        outcome
            .omega
            .iter()
            .zip(&outcome.replica_counts)
            .map(|(&done, &replicas)| {
                if done {
                    TaskState::Finished
                } else {
                    TaskState::Active(replicas)
                }
            })
            .collect(),
    )
}

/// Upper 0.1% chi-squared quantile (Wilson-Hilferty approximation).
fn chi2_quantile_999(df: f64) -> f64 {
    let z = 3.0902; // Phi^{-1}(0.999)
    df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3)
}

#[test]
fn simulator_matches_forward_propagation() {
    let params = DiscreteChainParams::new(0.02, 0.0007, 10, 2, 20).unwrap();
    let episodes = 100_000_u64;
    let expected = propagate_beta(&params, params.horizon);

    let mut observed: HashMap<TaskStatus, u64> = HashMap::new();
    for episode in 0..episodes {
        let mut rng = episode_rng(123, episode);
        let outcome = simulate_episode_discrete(&params, PolicyKind::Beta, &mut rng).unwrap();
        *observed.entry(final_status(&outcome)).or_insert(0) += 1;
    }

    // Chi-squared over cells with enough expected mass, remainder pooled.
    let n = episodes as f64;
    let mut statistic = 0.0;
    let mut cells = 0.0;
    let mut rest_expected = 0.0;
    let mut rest_observed = 0.0;
    for (status, p) in &expected {
        let expect = p * n;
        let count = *observed.get(status).unwrap_or(&0) as f64;
        if expect >= 5.0 {
            statistic += (count - expect).powi(2) / expect;
            cells += 1.0;
        } else {
            rest_expected += expect;
            rest_observed += count;
        }
    }
    if rest_expected > 0.0 {
        statistic += (rest_observed - rest_expected).powi(2) / rest_expected;
        cells += 1.0;
    }
    let threshold = chi2_quantile_999(cells - 1.0);
    assert!(
        statistic <= threshold,
        "chi-squared {statistic:.2} over {cells} cells exceeds {threshold:.2}"
    );
    // No probability mass outside the propagated support.
    for status in observed.keys() {
        assert!(
            expected.contains_key(status),
            "unexpected status {status:?}"
        );
    }
}

#[test]
fn beta_action_always_attains_table_optimum() {
    // Benchmark chain: the fewest-replicas pick lies in the optimal action
    // set of every reachable non-terminal state.
    let params = DiscreteChainParams::new(0.008, 0.001, 20, 2, 20).unwrap();
    let table = value_iteration(&params).unwrap();
    let mut checked = 0_u64;
    for stage in 0..params.horizon {
        for status in table.reachable(stage) {
            let choice = table.action(status, stage).unwrap();
            if choice.canonical.is_none() {
                continue;
            }
            let beta = beta_assign(status).expect("canonical implies unfinished tasks");
            assert!(
                choice.optimal_set.contains(&beta),
                "BETA pick {beta} not optimal at stage {stage}, {status:?} \
                 (optimal set {:?})",
                choice.optimal_set
            );
            checked += 1;
        }
    }
    assert!(checked > 1_000, "only {checked} states checked");
}

#[test]
fn value_iteration_predicts_beta_monte_carlo() {
    let params = DiscreteChainParams::new(0.008, 0.001, 20, 2, 20).unwrap();
    let table = value_iteration(&params).unwrap();
    let stats = run_monte_carlo_discrete(&params, PolicyKind::Beta, 4_000, 2024).unwrap();
    let gap = (table.optimal_violation_ratio() - stats.violation_ratio_mean).abs();
    let slack = 3.0 * stats.stderr.unwrap();
    assert!(
        gap <= slack,
        "DP {:.6} vs MC {:.6}: gap {gap:.2e} > {slack:.2e}",
        table.optimal_violation_ratio(),
        stats.violation_ratio_mean
    );
}

#[test]
fn table_policy_reproduces_optimal_value() {
    // Driving the simulator with the recorded optimal actions must agree with
    // the DP prediction too.
    let params = DiscreteChainParams::new(0.008, 0.001, 20, 2, 20).unwrap();
    let table = value_iteration(&params).unwrap();
    let stats = run_monte_carlo_discrete(&params, PolicyKind::MdpTable(&table), 4_000, 77).unwrap();
    let gap = (table.optimal_violation_ratio() - stats.violation_ratio_mean).abs();
    assert!(gap <= 3.0 * stats.stderr.unwrap());
}
