//! Experiment definitions and the runner.
//!
//! Each experiment id maps to a fully-defaulted parameter set (10 km road,
//! 10 RSUs, 50 tasks, 80 s deadline, 100 km/h speed limit, 140 veh/km jam
//! density, 1000 iterations) so the reference curves reproduce without any
//! flags; `--set key=value` tweaks individual knobs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use evcc_sim::analytics::{
    mean_delay, rayleigh_bound, violation_bound, AnalyticsError, BoundInputs, HypoexpParams,
};
use evcc_sim::mdp::{value_iteration, ChainError, DiscreteChainParams};
use evcc_sim::model::{ConfigError, SimStats, SystemConfig};
use evcc_sim::policy::PolicyKind;
use evcc_sim::rng::derive_seed;
use evcc_sim::sim::{run_episodes, run_monte_carlo, run_monte_carlo_discrete, SimError};
use evcc_sim::traffic::{meeting_rate_per_second, speed, SpeedDensityModel, TrafficError};
use serde_json::json;
use thiserror::Error;

pub const EXPERIMENT_IDS: &[&str] = &[
    "policy-structure",
    "mdp-vs-beta",
    "sweep-deadline",
    "sweep-rsus",
    "sweep-tasks",
    "sweep-density",
    "m27-density",
    "efficiency-tradeoff",
    "custom",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    PolicyStructure,
    MdpVsBeta,
    SweepDeadline,
    SweepRsus,
    SweepTasks,
    SweepDensity,
    M27Density,
    EfficiencyTradeoff,
    Custom,
}

impl ExperimentId {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "policy-structure" => ExperimentId::PolicyStructure,
            "mdp-vs-beta" => ExperimentId::MdpVsBeta,
            "sweep-deadline" => ExperimentId::SweepDeadline,
            "sweep-rsus" => ExperimentId::SweepRsus,
            "sweep-tasks" => ExperimentId::SweepTasks,
            "sweep-density" => ExperimentId::SweepDensity,
            "m27-density" => ExperimentId::M27Density,
            "efficiency-tradeoff" => ExperimentId::EfficiencyTradeoff,
            "custom" => ExperimentId::Custom,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::PolicyStructure => "policy-structure",
            ExperimentId::MdpVsBeta => "mdp-vs-beta",
            ExperimentId::SweepDeadline => "sweep-deadline",
            ExperimentId::SweepRsus => "sweep-rsus",
            ExperimentId::SweepTasks => "sweep-tasks",
            ExperimentId::SweepDensity => "sweep-density",
            ExperimentId::M27Density => "m27-density",
            ExperimentId::EfficiencyTradeoff => "efficiency-tradeoff",
            ExperimentId::Custom => "custom",
        }
    }

    fn default_out(self) -> PathBuf {
        if self == ExperimentId::PolicyStructure {
            PathBuf::from("policy-structure.json")
        } else {
            PathBuf::from(format!("{}.csv", self.name()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Beta,
    RoundRobin,
    Mdp,
}

impl PolicyChoice {
    pub fn name(self) -> &'static str {
        match self {
            PolicyChoice::Beta => "beta",
            PolicyChoice::RoundRobin => "round-robin",
            PolicyChoice::Mdp => "mdp",
        }
    }

    /// Continuous-backend policies; the value-table policy has no meaning
    /// there.
    fn continuous(self, experiment: ExperimentId) -> Result<PolicyKind<'static>, CliError> {
        match self {
            PolicyChoice::Beta => Ok(PolicyKind::Beta),
            PolicyChoice::RoundRobin => Ok(PolicyKind::RoundRobin),
            PolicyChoice::Mdp => Err(CliError::Policy(format!(
                "policy `mdp` needs the sampled-time chain; `{}` runs the \
                 continuous backend (use it with mdp-vs-beta)",
                experiment.name()
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(
        "unknown experiment `{0}`; known ids: policy-structure, mdp-vs-beta, \
         sweep-deadline, sweep-rsus, sweep-tasks, sweep-density, m27-density, \
         efficiency-tradeoff, custom"
    )]
    UnknownExperiment(String),
    #[error("bad `--set` entry `{0}`: expected key=value with a numeric value")]
    BadSetEntry(String),
    #[error("override `{key}` is not available for {experiment} (allowed: {allowed})")]
    BadOverride {
        key: String,
        experiment: &'static str,
        allowed: String,
    },
    #[error("override `{key}` = {value} is not a valid {expected}")]
    BadOverrideValue {
        key: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("{0}")]
    MissingInput(String),
    #[error("{0}")]
    Policy(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::UnknownExperiment(_) => "experiment",
            CliError::BadSetEntry(_) | CliError::BadOverride { .. } => "override",
            CliError::BadOverrideValue { .. } => "override",
            CliError::MissingInput(_) => "input",
            CliError::Policy(_) => "policy",
            CliError::Config(_) => "config",
            CliError::Analytics(_) => "analytics",
            CliError::Chain(_) => "chain",
            CliError::Traffic(_) => "traffic",
            CliError::Sim(_) => "sim",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }
}

/// Parsed `--set` overrides.
pub type Overrides = Vec<(String, f64)>;

pub fn parse_overrides(entries: &[String]) -> Result<Overrides, CliError> {
    entries
        .iter()
        .map(|entry| {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| CliError::BadSetEntry(entry.clone()))?;
            let value: f64 = value
                .parse()
                .map_err(|_| CliError::BadSetEntry(entry.clone()))?;
            Ok((key.trim().to_string(), value))
        })
        .collect()
}

pub struct RunSpec {
    pub id: ExperimentId,
    pub seed: u64,
    pub iterations: u64,
    pub out: Option<PathBuf>,
    pub overrides: Overrides,
    pub policy: PolicyChoice,
    /// Explicit speed model from the CLI flags, if any.
    pub speed_model: Option<SpeedDensityModel>,
    pub config: Option<SystemConfig>,
    pub episode_log: Option<PathBuf>,
}

pub struct RunSummary {
    pub out: PathBuf,
    pub rows: usize,
    pub note: String,
}

/// Continuous-backend scenario knobs shared by the sweep experiments.
#[derive(Debug, Clone)]
struct Scenario {
    road_length: f64,
    task_count: usize,
    rsu_count: u32,
    deadline: f64,
    task_interval: Option<f64>,
    grid_step: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            road_length: 10.0,
            task_count: 50,
            rsu_count: 10,
            deadline: 80.0,
            task_interval: None,
            grid_step: 2.0,
        }
    }
}

fn positive_int(key: &'static str, value: f64) -> Result<u64, CliError> {
    if value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64 {
        Ok(value as u64)
    } else {
        Err(CliError::BadOverrideValue {
            key,
            value,
            expected: "positive integer",
        })
    }
}

impl Scenario {
    fn apply(&mut self, key: &str, value: f64) -> Result<bool, CliError> {
        match key {
            "road_length" => self.road_length = value,
            "task_count" => self.task_count = positive_int("task_count", value)? as usize,
            "rsu_count" => self.rsu_count = positive_int("rsu_count", value)? as u32,
            "deadline" => self.deadline = value,
            "task_interval" => self.task_interval = Some(value),
            "grid_step" => self.grid_step = value,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Sampled-time chain knobs for the dynamic-programming experiments.
#[derive(Debug, Clone, Copy)]
struct ChainScenario {
    meeting_prob: f64,
    unit_completion_prob: f64,
    horizon: u32,
    task_count: usize,
    vehicle_count: u32,
}

impl Default for ChainScenario {
    fn default() -> Self {
        // 20 vehicles, 5 RSUs, two tasks over a 20-slot deadline, inside the
        // per-slot event budget.
        ChainScenario {
            meeting_prob: 0.008,
            unit_completion_prob: 0.001,
            horizon: 20,
            task_count: 2,
            vehicle_count: 20,
        }
    }
}

impl ChainScenario {
    fn apply(&mut self, key: &str, value: f64) -> Result<bool, CliError> {
        match key {
            "meeting_prob" => self.meeting_prob = value,
            "unit_completion_prob" => self.unit_completion_prob = value,
            "horizon" => self.horizon = positive_int("horizon", value)? as u32,
            "task_count" => self.task_count = positive_int("task_count", value)? as usize,
            "vehicle_count" => self.vehicle_count = positive_int("vehicle_count", value)? as u32,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn params(&self) -> Result<DiscreteChainParams, ChainError> {
        DiscreteChainParams::new(
            self.meeting_prob,
            self.unit_completion_prob,
            self.horizon,
            self.task_count,
            self.vehicle_count,
        )
    }
}

fn scenario_from(spec: &RunSpec, disallowed: &[&str], allowed: &str) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::default();
    for (key, value) in &spec.overrides {
        if disallowed.contains(&key.as_str()) || !scenario.apply(key, *value)? {
            return Err(CliError::BadOverride {
                key: key.clone(),
                experiment: spec.id.name(),
                allowed: allowed.to_string(),
            });
        }
    }
    Ok(scenario)
}

fn chain_from(
    spec: &RunSpec,
    disallowed: &[&str],
    allowed: &str,
) -> Result<ChainScenario, CliError> {
    let mut chain = ChainScenario::default();
    for (key, value) in &spec.overrides {
        if disallowed.contains(&key.as_str()) || !chain.apply(key, *value)? {
            return Err(CliError::BadOverride {
                key: key.clone(),
                experiment: spec.id.name(),
                allowed: allowed.to_string(),
            });
        }
    }
    Ok(chain)
}

fn default_model(spec: &RunSpec) -> Result<SpeedDensityModel, CliError> {
    if let Some(model) = &spec.speed_model {
        return Ok(model.clone());
    }
    Ok(match spec.id {
        ExperimentId::M27Density => SpeedDensityModel::m27(),
        _ => SpeedDensityModel::linear(100.0, 140.0)?,
    })
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(path: &PathBuf, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

struct SweepCell {
    density: f64,
    deadline: f64,
    rsu_count: u32,
    task_count: usize,
}

/// Shared body of the four continuous Monte Carlo sweeps.
fn run_sweep(
    spec: &RunSpec,
    scenario: &Scenario,
    model: &SpeedDensityModel,
    cells: Vec<SweepCell>,
) -> Result<Vec<String>, CliError> {
    let policy = spec.policy.continuous(spec.id)?;
    let mut rows = Vec::with_capacity(cells.len());
    for (index, cell) in cells.iter().enumerate() {
        let mu = meeting_rate_per_second(model, cell.density, scenario.road_length)?;
        let speed_kmh = speed(model, cell.density)?;
        let seed = derive_seed(spec.seed, index as u64);
        let cfg = SystemConfig {
            vehicle_density: cell.density,
            road_length: scenario.road_length,
            task_count: cell.task_count,
            deadline: cell.deadline,
            rsu_count: cell.rsu_count,
            meeting_rate: mu,
            slot_duration: None,
            task_interval: scenario.task_interval,
            seed,
        }
        .validate()?;
        let stats = run_monte_carlo(&cfg, policy, spec.iterations)?;
        let inputs = BoundInputs {
            alpha: cell.density * scenario.road_length / cell.task_count as f64,
            params: HypoexpParams::from_rates(mu, cell.rsu_count)
                .expect("positive meeting rate on the sweep grids"),
            deadline: cell.deadline,
        };
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            cell.density,
            speed_kmh,
            mu,
            scenario.road_length,
            cell.task_count,
            cell.rsu_count,
            cell.deadline,
            spec.policy.name(),
            spec.iterations,
            seed,
            stats.violation_ratio_mean,
            fmt_opt(stats.stderr),
            violation_bound(inputs),
            rayleigh_bound(inputs),
        ));
    }
    Ok(rows)
}

const SWEEP_DENSITIES: [f64; 4] = [30.0, 60.0, 90.0, 120.0];
const SCENARIO_KEYS: &str =
    "road_length, task_count, rsu_count, deadline, task_interval, grid_step";

pub fn run_experiment(spec: &RunSpec) -> Result<RunSummary, CliError> {
    if spec.episode_log.is_some() && spec.id != ExperimentId::Custom {
        return Err(CliError::MissingInput(
            "--episode-log is only available for the custom experiment".into(),
        ));
    }
    if spec.config.is_some() && spec.id != ExperimentId::Custom {
        return Err(CliError::MissingInput(
            "--config is only consumed by the custom experiment".into(),
        ));
    }
    let out = spec.out.clone().unwrap_or_else(|| spec.id.default_out());
    match spec.id {
        ExperimentId::PolicyStructure => run_policy_structure(spec, out),
        ExperimentId::MdpVsBeta => run_mdp_vs_beta(spec, out),
        ExperimentId::SweepDeadline => {
            let scenario = scenario_from(
                spec,
                &["deadline"],
                "road_length, task_count, rsu_count, task_interval",
            )?;
            let model = default_model(spec)?;
            let cells = SWEEP_DENSITIES
                .iter()
                .flat_map(|&density| {
                    (1..=8).map(move |k| SweepCell {
                        density,
                        deadline: 20.0 * f64::from(k),
                        rsu_count: scenario.rsu_count,
                        task_count: scenario.task_count,
                    })
                })
                .collect();
            let rows = run_sweep(spec, &scenario, &model, cells)?;
            finish_csv(spec, out, rows)
        }
        ExperimentId::SweepRsus => {
            let scenario = scenario_from(
                spec,
                &["rsu_count"],
                "road_length, task_count, deadline, task_interval",
            )?;
            let model = default_model(spec)?;
            let cells = SWEEP_DENSITIES
                .iter()
                .flat_map(|&density| {
                    (1..=10).map(move |k| SweepCell {
                        density,
                        deadline: scenario.deadline,
                        rsu_count: 2 * k,
                        task_count: scenario.task_count,
                    })
                })
                .collect();
            let rows = run_sweep(spec, &scenario, &model, cells)?;
            finish_csv(spec, out, rows)
        }
        ExperimentId::SweepTasks => {
            let scenario = scenario_from(
                spec,
                &["task_count"],
                "road_length, rsu_count, deadline, task_interval",
            )?;
            let model = default_model(spec)?;
            let cells = SWEEP_DENSITIES
                .iter()
                .flat_map(|&density| {
                    (1..=10).map(move |k| SweepCell {
                        density,
                        deadline: scenario.deadline,
                        rsu_count: scenario.rsu_count,
                        task_count: 10 * k,
                    })
                })
                .collect();
            let rows = run_sweep(spec, &scenario, &model, cells)?;
            finish_csv(spec, out, rows)
        }
        ExperimentId::SweepDensity | ExperimentId::M27Density => {
            let scenario = scenario_from(spec, &[], SCENARIO_KEYS)?;
            let model = default_model(spec)?;
            let top = if spec.id == ExperimentId::M27Density {
                14
            } else {
                13
            };
            let cells = (1..=top)
                .map(|k| SweepCell {
                    density: 10.0 * f64::from(k),
                    deadline: scenario.deadline,
                    rsu_count: scenario.rsu_count,
                    task_count: scenario.task_count,
                })
                .collect();
            let rows = run_sweep(spec, &scenario, &model, cells)?;
            finish_csv(spec, out, rows)
        }
        ExperimentId::EfficiencyTradeoff => run_efficiency(spec, out),
        ExperimentId::Custom => run_custom(spec, out),
    }
}

fn finish_csv(spec: &RunSpec, out: PathBuf, rows: Vec<String>) -> Result<RunSummary, CliError> {
    write_csv(&out, &crate::schema::csv_header(spec.id), &rows)?;
    Ok(RunSummary {
        rows: rows.len(),
        out,
        note: String::new(),
    })
}

fn run_policy_structure(spec: &RunSpec, out: PathBuf) -> Result<RunSummary, CliError> {
    let chain = chain_from(
        spec,
        &[],
        "meeting_prob, unit_completion_prob, horizon, task_count, vehicle_count",
    )?;
    let params = chain.params()?;
    let table = value_iteration(&params)?;
    let dump = table.policy_dump();
    let document = json!({
        "experiment": spec.id.name(),
        "params": dump.params,
        "optimal_expected_reward": table.optimal_expected_reward(),
        "optimal_violation_ratio": table.optimal_violation_ratio(),
        "entries": dump.entries,
    });
    let mut file = BufWriter::new(File::create(&out)?);
    serde_json::to_writer_pretty(&mut file, &document)?;
    writeln!(file)?;
    file.flush()?;
    Ok(RunSummary {
        rows: dump.entries.len(),
        out,
        note: format!(
            "optimal expected reward {:.6}, violation ratio {:.6}",
            table.optimal_expected_reward(),
            table.optimal_violation_ratio()
        ),
    })
}

fn run_mdp_vs_beta(spec: &RunSpec, out: PathBuf) -> Result<RunSummary, CliError> {
    let chain = chain_from(
        spec,
        &["meeting_prob", "unit_completion_prob"],
        "horizon, task_count, vehicle_count",
    )?;
    let meeting_probs = [0.002, 0.004, 0.008];
    let completion_probs = [0.0005, 0.001];
    let mut rows = Vec::new();
    let mut index = 0_u64;
    for &meeting_prob in &meeting_probs {
        for &unit in &completion_probs {
            let params = DiscreteChainParams::new(
                meeting_prob,
                unit,
                chain.horizon,
                chain.task_count,
                chain.vehicle_count,
            )?;
            let table = value_iteration(&params)?;
            let policy = match spec.policy {
                PolicyChoice::Beta => PolicyKind::Beta,
                PolicyChoice::RoundRobin => PolicyKind::RoundRobin,
                PolicyChoice::Mdp => PolicyKind::MdpTable(&table),
            };
            let seed = derive_seed(spec.seed, index);
            let stats = run_monte_carlo_discrete(&params, policy, spec.iterations, seed)?;
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                meeting_prob,
                unit,
                chain.horizon,
                chain.task_count,
                chain.vehicle_count,
                spec.policy.name(),
                spec.iterations,
                seed,
                table.optimal_violation_ratio(),
                stats.violation_ratio_mean,
                fmt_opt(stats.stderr),
            ));
            index += 1;
        }
    }
    finish_csv(spec, out, rows)
}

fn run_efficiency(spec: &RunSpec, out: PathBuf) -> Result<RunSummary, CliError> {
    if spec.policy != PolicyChoice::Beta {
        return Err(CliError::Policy(
            "efficiency-tradeoff always evaluates the balanced policy".into(),
        ));
    }
    let scenario = scenario_from(spec, &[], SCENARIO_KEYS)?;
    let model = default_model(spec)?;
    let (lo, hi) = {
        let (lo, hi) = model.domain();
        (lo.max(0.0), hi)
    };
    let task_gen_rate_per_h =
        3600.0 * scenario.task_count as f64 / scenario.task_interval.unwrap_or(scenario.deadline);
    if scenario.grid_step <= 0.0 || scenario.grid_step.is_nan() {
        return Err(CliError::BadOverrideValue {
            key: "grid_step",
            value: scenario.grid_step,
            expected: "positive number",
        });
    }
    let mut rows = Vec::new();
    let mut index = 0_u64;
    loop {
        let density = lo + scenario.grid_step * (index + 1) as f64;
        if density >= hi {
            break;
        }
        let mu = meeting_rate_per_second(&model, density, scenario.road_length)?;
        let speed_kmh = speed(&model, density)?;
        let seed = derive_seed(spec.seed, index);
        let cfg = SystemConfig {
            vehicle_density: density,
            road_length: scenario.road_length,
            task_count: scenario.task_count,
            deadline: scenario.deadline,
            rsu_count: scenario.rsu_count,
            meeting_rate: mu,
            slot_duration: None,
            task_interval: scenario.task_interval,
            seed,
        }
        .validate()?;
        let stats = run_monte_carlo(&cfg, PolicyKind::Beta, spec.iterations)?;
        let inputs = BoundInputs {
            alpha: density * scenario.road_length / scenario.task_count as f64,
            params: HypoexpParams::from_rates(mu, scenario.rsu_count)
                .expect("positive meeting rate inside the domain"),
            deadline: scenario.deadline,
        };
        let pv_bound = violation_bound(inputs);
        let pv_rayleigh = rayleigh_bound(inputs);
        rows.push(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            density,
            speed_kmh,
            scenario.road_length,
            scenario.task_count,
            scenario.rsu_count,
            scenario.deadline,
            task_gen_rate_per_h,
            spec.iterations,
            seed,
            speed_kmh * density,
            pv_bound,
            pv_rayleigh,
            stats.violation_ratio_mean,
            fmt_opt(stats.stderr),
            task_gen_rate_per_h * (1.0 - pv_bound),
            task_gen_rate_per_h * (1.0 - pv_rayleigh),
            task_gen_rate_per_h * (1.0 - stats.violation_ratio_mean),
        ));
        index += 1;
    }
    finish_csv(spec, out, rows)
}

fn run_custom(spec: &RunSpec, out: PathBuf) -> Result<RunSummary, CliError> {
    let cfg = custom_config(spec)?;
    let policy = spec.policy.continuous(spec.id)?;
    let stats = run_monte_carlo(&cfg, policy, spec.iterations)?;
    let alpha = cfg.vehicle_density * cfg.road_length / cfg.task_count as f64;
    let (bound_exact, bound_rayleigh, delay) = if cfg.meeting_rate > 0.0 {
        let inputs = BoundInputs {
            alpha,
            params: HypoexpParams::from_rates(cfg.meeting_rate, cfg.rsu_count)
                .expect("positive meeting rate"),
            deadline: cfg.deadline,
        };
        (
            violation_bound(inputs),
            rayleigh_bound(inputs),
            mean_delay(inputs).ok(),
        )
    } else {
        (1.0, 1.0, None)
    };
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cfg.vehicle_density,
        cfg.road_length,
        cfg.task_count,
        cfg.rsu_count,
        cfg.deadline,
        cfg.meeting_rate,
        fmt_opt(cfg.task_interval),
        spec.policy.name(),
        spec.iterations,
        cfg.seed,
        stats.violation_ratio_mean,
        fmt_opt(stats.stderr),
        bound_exact,
        bound_rayleigh,
        fmt_opt(delay),
    );
    if let Some(log) = &spec.episode_log {
        write_episode_log(log, &cfg, policy, spec.iterations, &stats)?;
    }
    write_csv(&out, &crate::schema::csv_header(spec.id), &[row])?;
    Ok(RunSummary {
        rows: 1,
        out,
        note: format!(
            "violation ratio {:.6} (bound {:.6})",
            stats.violation_ratio_mean, bound_exact
        ),
    })
}

fn custom_config(spec: &RunSpec) -> Result<SystemConfig, CliError> {
    let mut cfg = match &spec.config {
        Some(cfg) => cfg.clone(),
        None => {
            let density = spec
                .overrides
                .iter()
                .find(|(k, _)| k == "vehicle_density")
                .map(|&(_, v)| v)
                .ok_or_else(|| {
                    CliError::MissingInput(
                        "custom needs --config or at least --set vehicle_density=<veh/km>".into(),
                    )
                })?;
            let scenario = Scenario::default();
            let meeting_rate = match spec.overrides.iter().find(|(k, _)| k == "meeting_rate") {
                Some(&(_, v)) => v,
                None => {
                    let model = default_model(spec)?;
                    meeting_rate_per_second(&model, density, scenario.road_length)?
                }
            };
            SystemConfig {
                vehicle_density: density,
                road_length: scenario.road_length,
                task_count: scenario.task_count,
                deadline: scenario.deadline,
                rsu_count: scenario.rsu_count,
                meeting_rate,
                slot_duration: None,
                task_interval: scenario.task_interval,
                seed: spec.seed,
            }
        }
    };
    for (key, value) in &spec.overrides {
        match key.as_str() {
            "vehicle_density" => cfg.vehicle_density = *value,
            "road_length" => cfg.road_length = *value,
            "task_count" => cfg.task_count = positive_int("task_count", *value)? as usize,
            "rsu_count" => cfg.rsu_count = positive_int("rsu_count", *value)? as u32,
            "deadline" => cfg.deadline = *value,
            "meeting_rate" => cfg.meeting_rate = *value,
            "task_interval" => cfg.task_interval = Some(*value),
            other => {
                return Err(CliError::BadOverride {
                    key: other.to_string(),
                    experiment: spec.id.name(),
                    allowed: "vehicle_density, road_length, task_count, rsu_count, \
                              deadline, meeting_rate, task_interval"
                        .to_string(),
                })
            }
        }
    }
    cfg.seed = spec.seed;
    Ok(cfg.validate()?)
}

fn write_episode_log(
    path: &PathBuf,
    cfg: &SystemConfig,
    policy: PolicyKind,
    iterations: u64,
    stats: &SimStats,
) -> Result<(), CliError> {
    debug_assert_eq!(stats.iterations, iterations);
    let outcomes = run_episodes(cfg, policy, iterations)?;
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "episode,task,offloads,completed,completion_time")?;
    for (episode, outcome) in outcomes.iter().enumerate() {
        for task in 0..cfg.task_count {
            writeln!(
                file,
                "{episode},{task},{},{},{}",
                outcome.replica_counts[task],
                u8::from(outcome.omega[task]),
                fmt_opt(outcome.completion_times[task]),
            )?;
        }
    }
    file.flush()?;
    Ok(())
}
