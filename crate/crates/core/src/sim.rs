//! Monte Carlo episode simulation.
//!
//! Two backends share the policy layer:
//!
//! - the continuous backend draws a Poisson vehicle count, runs the
//!   task-RSU encounter process at aggregate rate `M*mu` over `[0, D]`
//!   (with a guaranteed offload opportunity at time zero) and gives each
//!   offloaded replica an `Exp(B*mu)` service lag;
//! - the discrete backend walks the sampled-time chain slot by slot with
//!   exactly the law of [`crate::mdp::slot_transition`], so Monte Carlo
//!   estimates can be compared to the dynamic-programming benchmark without
//!   any discretisation mismatch.
//!
//! Episodes are embarrassingly parallel: each draws its own counter-based RNG
//! stream and aggregation is an ordered reduction, so parallel and sequential
//! runs produce bit-identical statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::DiscreteChainParams;
use crate::model::{sample_vehicle_count, EpisodeOutcome, SimStats, SystemConfig, TaskStatus};
use crate::policy::{beta_assign, round_robin_assign, PolicyKind};
use crate::rng::episode_rng;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("the value-table policy runs only on the sampled-time chain")]
    TablePolicyNeedsDiscrete,
    #[error("value table was computed for different chain parameters")]
    TableParamsMismatch,
}

/// One offloaded replica. Never mutated once created: replicas of finished
/// tasks are not recalled or reassigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaRecord {
    pub task: usize,
    /// Offload instant (s).
    pub offload_time: f64,
    /// Offload instant plus the service lag (s); infinite when outputs can
    /// never be collected (`B*mu = 0`).
    pub completion_time: f64,
}

/// Continuous-time episode with the vehicle count drawn from its Poisson law.
pub fn simulate_episode_continuous(
    cfg: &SystemConfig,
    policy: PolicyKind,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome, SimError> {
    let m = sample_vehicle_count(cfg.vehicle_density, cfg.road_length, rng);
    simulate_episode_continuous_with_m(cfg, m, policy, rng)
}

/// Continuous-time episode with a fixed vehicle count (diagnostics / tests).
pub fn simulate_episode_continuous_with_m(
    cfg: &SystemConfig,
    vehicle_count: u64,
    policy: PolicyKind,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome, SimError> {
    simulate_episode_continuous_traced(cfg, vehicle_count, policy, rng).map(|(outcome, _)| outcome)
}

/// As [`simulate_episode_continuous_with_m`], additionally returning every
/// replica record.
pub fn simulate_episode_continuous_traced(
    cfg: &SystemConfig,
    vehicle_count: u64,
    policy: PolicyKind,
    rng: &mut ChaCha8Rng,
) -> Result<(EpisodeOutcome, Vec<ReplicaRecord>), SimError> {
    if matches!(policy, PolicyKind::MdpTable(_)) {
        return Err(SimError::TablePolicyNeedsDiscrete);
    }
    let n = cfg.task_count;
    let mut first_completion: Vec<Option<f64>> = vec![None; n];
    let mut replica_counts = vec![0_u32; n];
    let mut records = Vec::new();
    let mut status = TaskStatus::new(n);

    let meeting_rate = vehicle_count as f64 * cfg.meeting_rate;
    let service_rate = f64::from(cfg.rsu_count) * cfg.meeting_rate;
    let service_lag = if service_rate > 0.0 {
        Some(Exp::new(service_rate).expect("positive service rate"))
    } else {
        None
    };

    // The first offload opportunity is granted at time zero whenever any
    // vehicle is present; the deadline is measured from it.
    let mut offloads: u64 = 0;
    let mut meeting_index: u64 = 0;
    let mut now = 0.0;
    while vehicle_count > 0 && now <= cfg.deadline {
        for (task, completion) in first_completion.iter().enumerate() {
            if !status.get(task).is_finished() && completion.is_some_and(|t| t <= now) {
                status.set_finished(task);
            }
        }
        let choice = match policy {
            PolicyKind::Beta => {
                if status.all_finished() {
                    break; // remaining encounters are ignored
                }
                beta_assign(&status)
            }
            PolicyKind::RoundRobin => {
                let pick = round_robin_assign(meeting_index, n);
                Some(pick)
            }
            PolicyKind::MdpTable(_) => unreachable!(),
        };
        meeting_index += 1;
        if let Some(task) = choice {
            replica_counts[task] += 1;
            offloads += 1;
            let completion_time = match service_lag {
                Some(dist) => now + dist.sample(rng),
                None => f64::INFINITY,
            };
            records.push(ReplicaRecord {
                task,
                offload_time: now,
                completion_time,
            });
            if completion_time.is_finite() {
                first_completion[task] = Some(match first_completion[task] {
                    Some(t) => t.min(completion_time),
                    None => completion_time,
                });
            }
            if !status.get(task).is_finished() {
                status.add_replica(task);
            }
        }
        if offloads >= vehicle_count || meeting_rate <= 0.0 {
            break; // every vehicle is busy, or no further encounters occur
        }
        now += Exp::new(meeting_rate).expect("positive rate").sample(rng);
    }

    let omega: Vec<bool> = first_completion
        .iter()
        .map(|c| c.is_some_and(|t| t <= cfg.deadline))
        .collect();
    let outcome = EpisodeOutcome {
        omega,
        vehicle_count,
        completion_times: first_completion,
        replica_counts,
    };
    Ok((outcome, records))
}

/// One slot-by-slot episode of the sampled-time chain; shares the exact law
/// of [`crate::mdp::slot_transition`]. Completion times are in slots.
pub fn simulate_episode_discrete(
    params: &DiscreteChainParams,
    policy: PolicyKind,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome, SimError> {
    if let PolicyKind::MdpTable(table) = policy {
        if table.params() != params {
            return Err(SimError::TableParamsMismatch);
        }
    }
    let n = params.task_count;
    let mut status = TaskStatus::new(n);
    let mut completion_slot: Vec<Option<f64>> = vec![None; n];
    let mut replica_counts = vec![0_u32; n];
    let mut meeting_index: u64 = 0;

    for slot in 0..params.horizon {
        let meeting = params.meeting_prob > 0.0 && rng.random_bool(params.meeting_prob);
        let mut action: Option<usize> = None;
        if meeting {
            let capacity = status.active_replicas() < u64::from(params.vehicle_count);
            action = match policy {
                PolicyKind::Beta => capacity.then(|| beta_assign(&status)).flatten(),
                PolicyKind::RoundRobin => {
                    // Picks aimed at finished tasks are wasted: the chain has
                    // no replica to add, and no vehicle is tied up.
                    let pick = round_robin_assign(meeting_index, n);
                    (capacity && !status.get(pick).is_finished()).then_some(pick)
                }
                PolicyKind::MdpTable(table) => table
                    .action(&status, slot)
                    .and_then(|choice| choice.canonical),
            };
            meeting_index += 1;
        }

        // Completion draws use the pre-slot replica counts plus the fresh
        // assignment, in task order; the assigned replica sticks only if the
        // task survives the slot.
        let unfinished: Vec<(usize, u32)> = status.unfinished().collect();
        for (task, replicas) in unfinished {
            let boost = u32::from(action == Some(task));
            let q = f64::from(replicas + boost) * params.unit_completion_prob;
            if q > 0.0 && rng.random_bool(q) {
                status.set_finished(task);
                completion_slot[task] = Some(f64::from(slot + 1));
            }
        }
        if let Some(task) = action {
            replica_counts[task] += 1;
            if !status.get(task).is_finished() {
                status.add_replica(task);
            }
        }
    }

    let omega: Vec<bool> = completion_slot.iter().map(Option::is_some).collect();
    Ok(EpisodeOutcome {
        omega,
        vehicle_count: u64::from(params.vehicle_count),
        completion_times: completion_slot,
        replica_counts,
    })
}

/// Single-task replication system behind the closed-form bound: `Poisson(alpha)`
/// vehicles, each independently reaching the task-RSU after `Exp(lambda1)` and
/// delivering the output after a further `Exp(lambda2)` lag. Returns `true`
/// when no delivery lands by the deadline.
pub fn simulate_single_task_replication(
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
    deadline: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    let vehicles = if alpha > 0.0 {
        Poisson::new(alpha).expect("positive mean").sample(rng) as u64
    } else {
        0
    };
    let meet = Exp::new(lambda1).expect("positive rate");
    let serve = Exp::new(lambda2).expect("positive rate");
    for _ in 0..vehicles {
        let delivery = meet.sample(rng) + serve.sample(rng);
        if delivery <= deadline {
            return false;
        }
    }
    true
}

fn collect_ratios<F>(iterations: u64, per_episode: F, parallel: bool) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..iterations).into_par_iter().map(per_episode).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = parallel;
    (0..iterations).map(per_episode).collect()
}

/// Monte Carlo over the continuous backend. Deterministic in `cfg.seed`;
/// parallel when the `parallel` feature is enabled.
pub fn run_monte_carlo(
    cfg: &SystemConfig,
    policy: PolicyKind,
    iterations: u64,
) -> Result<SimStats, SimError> {
    run_continuous(cfg, policy, iterations, true)
}

/// Sequential reference path of [`run_monte_carlo`]; always compiled, used by
/// the benchmark suite and the determinism tests.
pub fn run_monte_carlo_serial(
    cfg: &SystemConfig,
    policy: PolicyKind,
    iterations: u64,
) -> Result<SimStats, SimError> {
    run_continuous(cfg, policy, iterations, false)
}

fn run_continuous(
    cfg: &SystemConfig,
    policy: PolicyKind,
    iterations: u64,
    parallel: bool,
) -> Result<SimStats, SimError> {
    assert!(iterations >= 1, "at least one iteration required");
    if matches!(policy, PolicyKind::MdpTable(_)) {
        return Err(SimError::TablePolicyNeedsDiscrete);
    }
    let ratios = collect_ratios(
        iterations,
        |episode| {
            let mut rng = episode_rng(cfg.seed, episode);
            simulate_episode_continuous(cfg, policy, &mut rng)
                .expect("policy checked above")
                .violation_ratio()
        },
        parallel,
    );
    Ok(SimStats::from_ratios(ratios))
}

/// Monte Carlo over the sampled-time chain.
pub fn run_monte_carlo_discrete(
    params: &DiscreteChainParams,
    policy: PolicyKind,
    iterations: u64,
    seed: u64,
) -> Result<SimStats, SimError> {
    run_discrete(params, policy, iterations, seed, true)
}

/// Sequential reference path of [`run_monte_carlo_discrete`].
pub fn run_monte_carlo_discrete_serial(
    params: &DiscreteChainParams,
    policy: PolicyKind,
    iterations: u64,
    seed: u64,
) -> Result<SimStats, SimError> {
    run_discrete(params, policy, iterations, seed, false)
}

fn run_discrete(
    params: &DiscreteChainParams,
    policy: PolicyKind,
    iterations: u64,
    seed: u64,
    parallel: bool,
) -> Result<SimStats, SimError> {
    assert!(iterations >= 1, "at least one iteration required");
    if let PolicyKind::MdpTable(table) = policy {
        if table.params() != params {
            return Err(SimError::TableParamsMismatch);
        }
    }
    let ratios = collect_ratios(
        iterations,
        |episode| {
            let mut rng = episode_rng(seed, episode);
            simulate_episode_discrete(params, policy, &mut rng)
                .expect("table checked above")
                .violation_ratio()
        },
        parallel,
    );
    Ok(SimStats::from_ratios(ratios))
}

/// Runs continuous episodes and keeps every outcome (per-episode CSV export).
pub fn run_episodes(
    cfg: &SystemConfig,
    policy: PolicyKind,
    iterations: u64,
) -> Result<Vec<EpisodeOutcome>, SimError> {
    if matches!(policy, PolicyKind::MdpTable(_)) {
        return Err(SimError::TablePolicyNeedsDiscrete);
    }
    let outcomes: Vec<EpisodeOutcome> = {
        let run = |episode: u64| {
            let mut rng = episode_rng(cfg.seed, episode);
            simulate_episode_continuous(cfg, policy, &mut rng).expect("policy checked above")
        };
        #[cfg(feature = "parallel")]
        {
            (0..iterations).into_par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..iterations).map(run).collect()
        }
    };
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_config() -> SystemConfig {
        SystemConfig {
            vehicle_density: 60.0,
            road_length: 10.0,
            task_count: 50,
            deadline: 80.0,
            rsu_count: 10,
            meeting_rate: 0.0015873015873015873,
            slot_duration: None,
            task_interval: None,
            seed: 11,
        }
    }

    #[test]
    fn no_vehicles_means_total_violation() {
        let cfg = test_config();
        let mut rng = episode_rng(cfg.seed, 0);
        let outcome =
            simulate_episode_continuous_with_m(&cfg, 0, PolicyKind::Beta, &mut rng).unwrap();
        assert_eq!(outcome.violation_ratio(), 1.0);
        assert!(outcome.omega.iter().all(|&done| !done));
        assert!(outcome.replica_counts.iter().all(|&c| c == 0));

        let empty = SystemConfig {
            vehicle_density: 0.0,
            ..cfg
        };
        let mut rng = episode_rng(empty.seed, 1);
        let outcome = simulate_episode_continuous(&empty, PolicyKind::Beta, &mut rng).unwrap();
        assert_eq!(outcome.violation_ratio(), 1.0);
    }

    #[test]
    fn lone_replica_service_time_is_exponential() {
        // One vehicle, one task: the single replica is offloaded at t = 0 and
        // completes after Exp(B*mu) = Exp(0.1/s); mean 10 s within 2% at 1e5
        // episodes.
        let cfg = SystemConfig {
            vehicle_density: 1.0,
            road_length: 1.0,
            task_count: 1,
            deadline: 1e9,
            rsu_count: 10,
            meeting_rate: 0.01,
            slot_duration: None,
            task_interval: None,
            seed: 5,
        };
        let episodes = 100_000;
        let mut total = 0.0;
        for episode in 0..episodes {
            let mut rng = episode_rng(cfg.seed, episode);
            let outcome =
                simulate_episode_continuous_with_m(&cfg, 1, PolicyKind::Beta, &mut rng).unwrap();
            assert_eq!(outcome.replica_counts, vec![1]);
            total += outcome.completion_times[0].expect("one replica always lands");
        }
        let mean = total / episodes as f64;
        assert!(
            (mean - 10.0).abs() <= 0.2,
            "empirical mean {mean} not within 2% of 10 s"
        );
    }

    #[test]
    fn replica_records_are_consistent() {
        let cfg = test_config();
        for episode in 0..50 {
            let mut rng = episode_rng(cfg.seed, episode);
            let m = sample_vehicle_count(cfg.vehicle_density, cfg.road_length, &mut rng);
            let (outcome, records) =
                simulate_episode_continuous_traced(&cfg, m, PolicyKind::Beta, &mut rng).unwrap();
            // Conservation: one record per offload, never more than vehicles.
            assert_eq!(
                records.len() as u64,
                outcome
                    .replica_counts
                    .iter()
                    .map(|&c| u64::from(c))
                    .sum::<u64>()
            );
            assert!(records.len() as u64 <= m);
            for pair in records.windows(2) {
                assert!(pair[0].offload_time < pair[1].offload_time);
            }
            for record in &records {
                assert!(record.completion_time >= record.offload_time);
            }
        }
    }

    #[test]
    fn discrete_without_meetings_never_offloads() {
        let params = DiscreteChainParams {
            meeting_prob: 0.0,
            unit_completion_prob: 0.001,
            horizon: 50,
            task_count: 3,
            vehicle_count: 10,
        };
        let mut rng = episode_rng(3, 0);
        let outcome = simulate_episode_discrete(&params, PolicyKind::Beta, &mut rng).unwrap();
        assert_eq!(outcome.violation_ratio(), 1.0);
        assert!(outcome.replica_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn discrete_without_completions_violates_everything() {
        let params = DiscreteChainParams {
            meeting_prob: 0.04,
            unit_completion_prob: 0.0,
            horizon: 50,
            task_count: 3,
            vehicle_count: 10,
        };
        let stats = run_monte_carlo_discrete(&params, PolicyKind::Beta, 200, 9).unwrap();
        assert_eq!(stats.violation_ratio_mean, 1.0);
    }

    #[test]
    fn discrete_round_robin_skips_finished_tasks_without_replicas() {
        let params = DiscreteChainParams {
            meeting_prob: 0.02,
            unit_completion_prob: 0.001,
            horizon: 400,
            task_count: 2,
            vehicle_count: 10,
        };
        // Just exercises the wasted-pick branch; law-level checks live in the
        // chain agreement tests.
        for episode in 0..50 {
            let mut rng = episode_rng(17, episode);
            let outcome =
                simulate_episode_discrete(&params, PolicyKind::RoundRobin, &mut rng).unwrap();
            assert!(outcome.replica_counts.iter().all(|&c| u64::from(c) <= 10));
        }
    }

    #[test]
    fn single_iteration_has_no_stderr() {
        let cfg = test_config();
        let stats = run_monte_carlo(&cfg, PolicyKind::Beta, 1).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.stderr.is_none());
    }

    #[test]
    fn same_seed_reproduces_stats() {
        let cfg = test_config();
        let a = run_monte_carlo(&cfg, PolicyKind::Beta, 64).unwrap();
        let b = run_monte_carlo(&cfg, PolicyKind::Beta, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_policy_rejected_on_continuous_backend() {
        let params = DiscreteChainParams::new(0.008, 0.001, 4, 2, 20).unwrap();
        let table = crate::mdp::value_iteration(&params).unwrap();
        let cfg = test_config();
        assert_eq!(
            run_monte_carlo(&cfg, PolicyKind::MdpTable(&table), 4).unwrap_err(),
            SimError::TablePolicyNeedsDiscrete
        );
        let other = DiscreteChainParams::new(0.004, 0.001, 4, 2, 20).unwrap();
        assert_eq!(
            run_monte_carlo_discrete(&other, PolicyKind::MdpTable(&table), 4, 0).unwrap_err(),
            SimError::TableParamsMismatch
        );
    }

    #[test]
    fn longer_deadline_never_hurts_with_common_randomness() {
        let base = test_config();
        for episode in 0..200 {
            let short = SystemConfig {
                deadline: 40.0,
                ..base.clone()
            };
            let long = SystemConfig {
                deadline: 90.0,
                ..base.clone()
            };
            let mut rng_a = episode_rng(base.seed, episode);
            let mut rng_b = episode_rng(base.seed, episode);
            let a = simulate_episode_continuous(&short, PolicyKind::Beta, &mut rng_a).unwrap();
            let b = simulate_episode_continuous(&long, PolicyKind::Beta, &mut rng_b).unwrap();
            assert!(
                b.violation_ratio() <= a.violation_ratio() + 1e-12,
                "episode {episode}: extending the deadline raised the ratio"
            );
        }
    }
}
