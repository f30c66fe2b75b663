//! Task replication for deadline-constrained computing in encounter-based
//! vehicular clouds.
//!
//! A task batch collected at a roadside unit (RSU) is offloaded, copy by copy,
//! to vehicles that pass by; a task finishes when any of its replicas is
//! computed and its output collected at a later encounter. This crate provides:
//!
//! - [`model`]: scenario configuration, the replica-count task status, episode
//!   outcomes and Monte Carlo aggregates;
//! - [`mdp`]: the sampled-time chain and exact finite-horizon value iteration
//!   (the optimality benchmark);
//! - [`policy`]: the balanced-task-assignment (BETA) rule, the round-robin
//!   baseline and the balance invariant;
//! - [`sim`]: continuous-time and slot-based episode simulators with a
//!   reproducible parallel Monte Carlo driver;
//! - [`analytics`]: closed-form violation bounds (hypoexponential and Rayleigh
//!   forms), the Poisson mixture identity and asymptotic regimes;
//! - [`traffic`]: speed-density models, flow/efficiency metrics and the
//!   comparison between the flow-optimal and the offloading-optimal density.
//!
//! Everything stochastic is driven by counter-based per-episode RNG streams,
//! so results are bit-identical for a given seed whether episodes run
//! sequentially or in parallel (the `parallel` feature, enabled by default).
//!
//! ```
//! use evcc_sim::analytics::BoundReport;
//! use evcc_sim::model::SystemConfig;
//! use evcc_sim::policy::PolicyKind;
//! use evcc_sim::sim::run_monte_carlo;
//!
//! // 60 veh/km on a 10 km road, 10 RSUs, 50 tasks due within 80 s.
//! let cfg = SystemConfig {
//!     vehicle_density: 60.0,
//!     road_length: 10.0,
//!     task_count: 50,
//!     deadline: 80.0,
//!     rsu_count: 10,
//!     meeting_rate: 0.0016,
//!     slot_duration: None,
//!     task_interval: None,
//!     seed: 7,
//! }
//! .validate()?;
//!
//! let stats = run_monte_carlo(&cfg, PolicyKind::Beta, 500)?;
//! let report = BoundReport::for_config(&cfg)?;
//! assert!(stats.violation_ratio_mean <= report.exact_bound);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod analytics;
pub mod mdp;
pub mod model;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod traffic;

pub use analytics::{BoundInputs, BoundReport, HypoexpParams};
pub use mdp::{DiscreteChainParams, MdpState, ValueTable};
pub use model::{ConfigError, EpisodeOutcome, SimStats, SystemConfig, TaskState, TaskStatus};
pub use policy::PolicyKind;
pub use sim::{run_monte_carlo, run_monte_carlo_discrete};
pub use traffic::SpeedDensityModel;
