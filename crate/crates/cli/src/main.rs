//! `evcc` — experiment runner and closed-form calculator for deadline-constrained
//! task replication in encounter-based vehicular clouds.
//!
//! Errors go to stderr as one JSON object (`{"error":{"kind":...,"message":...}}`)
//! with a non-zero exit code, so scripted pipelines can branch on failures.

mod experiments;
mod schema;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evcc_sim::analytics::{
    asymptotic_high_rsu, asymptotic_large_city, poisson_mixture_survival,
    poisson_mixture_survival_series, service_cdf, BoundReport, HypoexpParams,
};
use evcc_sim::model::SystemConfig;
use evcc_sim::traffic::{compare_densities, meeting_rate_per_second, SpeedDensityModel};
use serde_json::json;

use experiments::{parse_overrides, CliError, ExperimentId, PolicyChoice, RunSpec};

#[derive(Parser)]
#[command(
    name = "evcc",
    version,
    about = "Deadline-constrained task replication in vehicular clouds: \
             experiments, bounds and density optima"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its results (CSV, or JSON for policy tables)
    Run(RunArgs),
    /// Print the stable result schema of an experiment id (`list` enumerates them)
    Schema {
        #[arg(long)]
        experiment: String,
    },
    /// Closed-form violation bound report for one scenario
    Bound(BoundArgs),
    /// Two-stage service-time CDF at a point
    Cdf {
        /// Evaluation point (s)
        #[arg(long)]
        x: f64,
        /// Per-vehicle per-RSU meeting rate (1/s)
        #[arg(long)]
        meeting_rate: f64,
        #[arg(long, default_value_t = 10)]
        rsu_count: u32,
    },
    /// Poisson mixture identity: closed form vs truncated series
    Mixture {
        #[arg(long)]
        alpha: f64,
        /// CDF value in [0, 1]
        #[arg(long)]
        f_value: f64,
        #[arg(long, default_value_t = 200)]
        terms: u32,
    },
    /// Long-road violation probability (density-normalised form)
    LargeCity {
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 100.0)]
        v_max: f64,
        #[arg(long, default_value_t = 140.0)]
        l_max: f64,
        /// RSUs per km of road
        #[arg(long)]
        rsu_per_km: f64,
        #[arg(long, default_value_t = 50)]
        task_count: usize,
        #[arg(long)]
        deadline: f64,
    },
    /// Saturated-RSU violation probability
    HighRsu {
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 10.0)]
        road_length: f64,
        #[arg(long, default_value_t = 50)]
        task_count: usize,
        /// Per-vehicle per-RSU meeting rate (1/s)
        #[arg(long)]
        meeting_rate: f64,
        #[arg(long)]
        deadline: f64,
    },
    /// Flow-optimal vs offloading-optimal vehicle density for a speed model
    Optima(ModelArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment id (see `evcc schema --help` or the README for the list)
    #[arg(long)]
    experiment: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte Carlo episodes per grid point
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    iterations: u64,
    /// Output path (defaults to `<experiment>.csv` / `.json`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, repeatable (e.g. --set deadline=120)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Beta)]
    policy: PolicyArg,
    #[command(flatten)]
    model: ModelArgs,
    /// Scenario JSON for the custom experiment
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-episode CSV log (custom experiment only)
    #[arg(long)]
    episode_log: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Beta,
    RoundRobin,
    Mdp,
}

impl From<PolicyArg> for PolicyChoice {
    fn from(arg: PolicyArg) -> Self {
        match arg {
            PolicyArg::Beta => PolicyChoice::Beta,
            PolicyArg::RoundRobin => PolicyChoice::RoundRobin,
            PolicyArg::Mdp => PolicyChoice::Mdp,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Speed-density model family
    #[arg(long, value_enum)]
    speed_model: Option<ModelKind>,
    /// Speed limit (km/h) for the linear model
    #[arg(long, default_value_t = 100.0)]
    v_max: f64,
    /// Jam density (veh/km) for the linear and polynomial models
    #[arg(long, default_value_t = 140.0)]
    l_max: f64,
    /// Free-flow term of the polynomial model
    #[arg(long)]
    poly_free_flow: Option<f64>,
    /// Polynomial term as `coefficient,exponent`; repeatable
    #[arg(long = "poly-term", value_name = "C,ALPHA")]
    poly_terms: Vec<String>,
    /// Two-column CSV (density,speed) for the custom model
    #[arg(long)]
    model_csv: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Linear,
    M27,
    Poly,
    CustomCsv,
}

impl ModelArgs {
    /// Builds the model selected by the flags; `None` when no `--speed-model`
    /// was given (experiments then pick their own default).
    fn build(&self) -> Result<Option<SpeedDensityModel>, CliError> {
        let Some(kind) = self.speed_model else {
            return Ok(None);
        };
        let model = match kind {
            ModelKind::Linear => SpeedDensityModel::linear(self.v_max, self.l_max)?,
            ModelKind::M27 => SpeedDensityModel::m27(),
            ModelKind::Poly => {
                let free_flow = self.poly_free_flow.ok_or_else(|| {
                    CliError::MissingInput(
                        "--poly-free-flow is required for --speed-model poly".into(),
                    )
                })?;
                if self.poly_terms.is_empty() {
                    return Err(CliError::MissingInput(
                        "at least one --poly-term C,ALPHA is required for --speed-model poly"
                            .into(),
                    ));
                }
                let mut terms = Vec::with_capacity(self.poly_terms.len());
                for term in &self.poly_terms {
                    let parsed = term.split_once(',').and_then(|(c, a)| {
                        Some((c.trim().parse::<f64>().ok()?, a.trim().parse::<f64>().ok()?))
                    });
                    let Some(pair) = parsed else {
                        return Err(CliError::MissingInput(format!(
                            "bad --poly-term `{term}`: expected coefficient,exponent"
                        )));
                    };
                    terms.push(pair);
                }
                SpeedDensityModel::polynomial(free_flow, terms, self.l_max)?
            }
            ModelKind::CustomCsv => {
                let path = self.model_csv.as_ref().ok_or_else(|| {
                    CliError::MissingInput(
                        "--model-csv is required for --speed-model custom-csv".into(),
                    )
                })?;
                let mut points = Vec::new();
                for (number, line) in fs::read_to_string(path)?.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let parsed = line.split_once(',').and_then(|(l, v)| {
                        Some((l.trim().parse::<f64>().ok()?, v.trim().parse::<f64>().ok()?))
                    });
                    let Some(pair) = parsed else {
                        return Err(CliError::MissingInput(format!(
                            "bad model CSV line {}: `{line}`",
                            number + 1
                        )));
                    };
                    points.push(pair);
                }
                SpeedDensityModel::custom(points)?
            }
        };
        Ok(Some(model))
    }
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    vehicle_density: f64,
    #[arg(long, default_value_t = 10.0)]
    road_length: f64,
    #[arg(long, default_value_t = 50)]
    task_count: usize,
    #[arg(long, default_value_t = 10)]
    rsu_count: u32,
    #[arg(long, default_value_t = 80.0)]
    deadline: f64,
    /// Per-vehicle per-RSU meeting rate (1/s); derived from the speed model
    /// at the given density when omitted
    #[arg(long)]
    meeting_rate: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                std::process::exit(0);
            }
            emit_error("usage", &err.to_string());
            std::process::exit(2);
        }
    };
    if let Err(err) = dispatch(cli) {
        emit_error(err.kind(), &err.to_string());
        std::process::exit(1);
    }
}

fn emit_error(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
}

/// Writes one line to stdout; a closed pipe (e.g. `evcc ... | head`) is a
/// normal way for a consumer to stop reading, not an error.
fn emit(text: &str) {
    use std::io::Write;
    if let Err(err) = writeln!(std::io::stdout(), "{text}") {
        if err.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        emit_error("io", &err.to_string());
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Schema { experiment } => {
            if experiment == "list" {
                emit(&serde_json::to_string_pretty(&json!(
                    experiments::EXPERIMENT_IDS
                ))?);
                return Ok(());
            }
            let id =
                ExperimentId::parse(&experiment).ok_or(CliError::UnknownExperiment(experiment))?;
            emit(&serde_json::to_string_pretty(&schema::emit_schema(id))?);
            Ok(())
        }
        Command::Bound(args) => {
            let meeting_rate = match args.meeting_rate {
                Some(rate) => rate,
                None => {
                    let model = args.model.build()?.unwrap_or(SpeedDensityModel::linear(
                        args.model.v_max,
                        args.model.l_max,
                    )?);
                    meeting_rate_per_second(&model, args.vehicle_density, args.road_length)?
                }
            };
            let cfg = SystemConfig {
                vehicle_density: args.vehicle_density,
                road_length: args.road_length,
                task_count: args.task_count,
                deadline: args.deadline,
                rsu_count: args.rsu_count,
                meeting_rate,
                slot_duration: None,
                task_interval: None,
                seed: 0,
            }
            .validate()?;
            let report = BoundReport::for_config(&cfg)?;
            emit(&serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Cdf {
            x,
            meeting_rate,
            rsu_count,
        } => {
            let params = HypoexpParams::from_rates(meeting_rate, rsu_count)?;
            let value = service_cdf(x, params)?;
            emit(&serde_json::to_string_pretty(&json!({
                "x": x,
                "lambda1": params.lambda1,
                "lambda2": params.lambda2,
                "cdf": value,
            }))?);
            Ok(())
        }
        Command::Mixture {
            alpha,
            f_value,
            terms,
        } => {
            if !(0.0..=1.0).contains(&f_value) || alpha < 0.0 {
                return Err(CliError::MissingInput(
                    "mixture needs alpha >= 0 and f_value in [0, 1]".into(),
                ));
            }
            emit(&serde_json::to_string_pretty(&json!({
                "alpha": alpha,
                "f_value": f_value,
                "closed_form": poisson_mixture_survival(alpha, f_value),
                "series": poisson_mixture_survival_series(alpha, f_value, terms),
                "terms": terms,
            }))?);
            Ok(())
        }
        Command::LargeCity {
            density,
            v_max,
            l_max,
            rsu_per_km,
            task_count,
            deadline,
        } => {
            emit(&serde_json::to_string_pretty(&json!({
                "violation_probability":
                    asymptotic_large_city(density, v_max, l_max, rsu_per_km, task_count, deadline),
            }))?);
            Ok(())
        }
        Command::HighRsu {
            density,
            road_length,
            task_count,
            meeting_rate,
            deadline,
        } => {
            emit(&serde_json::to_string_pretty(&json!({
                "violation_probability":
                    asymptotic_high_rsu(density, road_length, task_count, meeting_rate, deadline),
            }))?);
            Ok(())
        }
        Command::Optima(model_args) => {
            let model = model_args.build()?.unwrap_or(SpeedDensityModel::linear(
                model_args.v_max,
                model_args.l_max,
            )?);
            let comparison = compare_densities(&model);
            emit(&serde_json::to_string_pretty(&comparison)?);
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let id = ExperimentId::parse(&args.experiment)
        .ok_or_else(|| CliError::UnknownExperiment(args.experiment.clone()))?;
    let config = match &args.config {
        Some(path) => {
            let cfg: SystemConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
            Some(cfg.validate()?)
        }
        None => None,
    };
    let spec = RunSpec {
        id,
        seed: args.seed,
        iterations: args.iterations,
        out: args.out,
        overrides: parse_overrides(&args.set)?,
        policy: args.policy.into(),
        speed_model: args.model.build()?,
        config,
        episode_log: args.episode_log,
    };
    let summary = experiments::run_experiment(&spec)?;
    if summary.note.is_empty() {
        emit(&format!(
            "{}: {} rows -> {}",
            id.name(),
            summary.rows,
            summary.out.display()
        ));
    } else {
        emit(&format!(
            "{}: {} rows -> {} ({})",
            id.name(),
            summary.rows,
            summary.out.display(),
            summary.note
        ));
    }
    Ok(())
}
