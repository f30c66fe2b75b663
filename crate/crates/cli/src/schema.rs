//! Stable result-row schemas, one per experiment id, for downstream plotters.

use serde_json::{json, Value};

use crate::experiments::ExperimentId;

/// Column order of the Monte Carlo sweep experiments (CSV).
pub const SWEEP_COLUMNS: &[(&str, &str, bool)] = &[
    ("vehicle_density", "float", false),
    ("speed_kmh", "float", false),
    ("meeting_rate_per_s", "float", false),
    ("road_length_km", "float", false),
    ("task_count", "int", false),
    ("rsu_count", "int", false),
    ("deadline_s", "float", false),
    ("policy", "string", false),
    ("iterations", "int", false),
    ("seed", "int", false),
    ("mc_mean", "float", false),
    ("mc_stderr", "float", true),
    ("bound_exact", "float", false),
    ("bound_rayleigh", "float", false),
];

pub const MDP_VS_BETA_COLUMNS: &[(&str, &str, bool)] = &[
    ("meeting_prob", "float", false),
    ("unit_completion_prob", "float", false),
    ("horizon_slots", "int", false),
    ("task_count", "int", false),
    ("vehicle_count", "int", false),
    ("policy", "string", false),
    ("iterations", "int", false),
    ("seed", "int", false),
    ("dp_violation", "float", false),
    ("mc_mean", "float", false),
    ("mc_stderr", "float", true),
];

pub const EFFICIENCY_COLUMNS: &[(&str, &str, bool)] = &[
    ("vehicle_density", "float", false),
    ("speed_kmh", "float", false),
    ("road_length_km", "float", false),
    ("task_count", "int", false),
    ("rsu_count", "int", false),
    ("deadline_s", "float", false),
    ("task_gen_rate_per_h", "float", false),
    ("iterations", "int", false),
    ("seed", "int", false),
    ("eta_te", "float", false),
    ("pv_bound", "float", false),
    ("pv_rayleigh", "float", false),
    ("mc_mean", "float", false),
    ("mc_stderr", "float", true),
    ("eta_ce_bound", "float", false),
    ("eta_ce_rayleigh", "float", false),
    ("eta_ce_mc", "float", false),
];

pub const CUSTOM_COLUMNS: &[(&str, &str, bool)] = &[
    ("vehicle_density", "float", false),
    ("road_length_km", "float", false),
    ("task_count", "int", false),
    ("rsu_count", "int", false),
    ("deadline_s", "float", false),
    ("meeting_rate_per_s", "float", false),
    ("task_interval_s", "float", true),
    ("policy", "string", false),
    ("iterations", "int", false),
    ("seed", "int", false),
    ("mc_mean", "float", false),
    ("mc_stderr", "float", true),
    ("bound_exact", "float", false),
    ("bound_rayleigh", "float", false),
    ("mean_delay_s", "float", true),
];

/// Fields of the policy-structure JSON entries.
pub const POLICY_STRUCTURE_FIELDS: &[(&str, &str, bool)] = &[
    ("replicas", "int[] (-1 marks a finished task)", false),
    ("stage", "int", false),
    ("value", "float", false),
    ("canonical_action", "int", true),
    ("optimal_actions", "int[]", false),
];

pub fn columns_for(id: ExperimentId) -> &'static [(&'static str, &'static str, bool)] {
    match id {
        ExperimentId::PolicyStructure => POLICY_STRUCTURE_FIELDS,
        ExperimentId::MdpVsBeta => MDP_VS_BETA_COLUMNS,
        ExperimentId::SweepDeadline
        | ExperimentId::SweepRsus
        | ExperimentId::SweepTasks
        | ExperimentId::SweepDensity
        | ExperimentId::M27Density => SWEEP_COLUMNS,
        ExperimentId::EfficiencyTradeoff => EFFICIENCY_COLUMNS,
        ExperimentId::Custom => CUSTOM_COLUMNS,
    }
}

/// Machine-readable schema document for one experiment id.
pub fn emit_schema(id: ExperimentId) -> Value {
    let columns: Vec<Value> = columns_for(id)
        .iter()
        .map(|&(name, kind, nullable)| json!({ "name": name, "type": kind, "nullable": nullable }))
        .collect();
    json!({
        "experiment": id.name(),
        "output": if id == ExperimentId::PolicyStructure { "json" } else { "csv" },
        "columns": columns,
    })
}

/// CSV header line for an experiment (not meaningful for policy-structure).
pub fn csv_header(id: ExperimentId) -> String {
    columns_for(id)
        .iter()
        .map(|&(name, _, _)| name)
        .collect::<Vec<_>>()
        .join(",")
}
