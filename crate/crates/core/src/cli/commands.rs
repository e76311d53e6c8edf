use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Resolved;
use super::manifest::write_file;
use super::{CertifyArgs, CliError, Command, ControllerKind, ForecastArgs, GenDataArgs, SimulateArgs, TrainArgs};
use crate::forecast::{evaluate_one_step, DemandHistory, ForecastError, ModelFile, ModelSet};
use crate::guarantees::{certify, SpInstance};
use crate::hub::{HubParameters, HubState, Tariffs};
use crate::mpc::{solve_scenarios, SolveOptions, SpConfig, SpSolution};
use crate::sampler::{
    mean_trajectory, read_trajectories_csv, sample_trajectories, write_trajectories_csv, SamplerConfig,
    WeatherForecast,
};
use crate::sim::{
    generate_synthetic_data, run_arms, summarize, write_combined_csv, write_trace_csv, Controller, SimulationConfig,
};
use crate::timeutil::{format_timestamp, from_hour_index, hour_index};

/// Everything `certify` needs to re-solve a scenario program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionBundle {
    pub state: HubState,
    pub params: HubParameters,
    pub tariffs: Tariffs,
    pub irradiance: Vec<f64>,
    pub sp: SpConfig,
    pub solution: SpSolution,
}

pub(super) fn dispatch(cmd: &Command, cfg: Option<&Resolved>) -> Result<(), CliError> {
    let need = || cfg.ok_or_else(|| CliError::Usage("--config is required".into()));
    match cmd {
        Command::GenData(a) => gen_data(a, need()?),
        Command::Train(a) => train(a, need()?),
        Command::Forecast(a) => forecast(a, need()?),
        Command::Simulate(a) => simulate(a, need()?),
        Command::Certify(a) => certify_cmd(a, cfg),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn gen_data(a: &GenDataArgs, cfg: &Resolved) -> Result<(), CliError> {
    let mut data_cfg = cfg.data()?;
    if let Some(s) = a.seed {
        data_cfg.seed = s;
    }
    let data = generate_synthetic_data(&data_cfg)?;
    let path = a.out.join("data.csv");
    data.write_csv(&path)?;
    println!("wrote {} hours from {} to {}", data.len(), format_timestamp(data.start), path.display());
    Ok(())
}

/// `[from, to)` of the data as a slice; an uncovered range is an error
/// naming both ranges.
fn training_range(data: &DemandHistory, a: &TrainArgs) -> Result<DemandHistory, CliError> {
    let from = a.from.map_or(data.start_hour(), hour_index);
    let to = a.to.map_or(data.end_hour(), hour_index);
    let (lo, hi) = (data.index_of_hour(from), data.index_of_hour(to - 1));
    match (lo, hi) {
        (Some(lo), Some(hi)) if hi >= lo => Ok(data.slice(lo, hi + 1)),
        _ => Err(ForecastError::InsufficientHistory(format!(
            "training range {} .. {} requested, data covers {} .. {}",
            format_timestamp(from_hour_index(from)),
            format_timestamp(from_hour_index(to)),
            format_timestamp(from_hour_index(data.start_hour())),
            format_timestamp(from_hour_index(data.end_hour())),
        ))
        .into()),
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    train_from: String,
    train_to: String,
    fit: &'a crate::forecast::FitOptions,
    models: Vec<ModelFile>,
}

fn train(a: &TrainArgs, cfg: &Resolved) -> Result<(), CliError> {
    let data = DemandHistory::read_csv(&a.data)?;
    let range = training_range(&data, a)?;
    let mut fit = cfg.train.clone();
    if let Some(s) = a.seed {
        fit.seed = s;
    }
    let set = ModelSet::train(&range, a.seasons.as_deref(), &fit, &cfg.seasons)?;
    set.save(&a.out)?;
    let models: Vec<ModelFile> = set.models.values().map(|m| m.to_file()).collect();
    for m in &models {
        if let Some(d) = &m.diagnostics {
            println!(
                "{}_{}: lml {:.4} |grad| {:.2e} rows {} converged {}/{}",
                m.kind.name(),
                m.season.name(),
                d.log_marginal_likelihood,
                d.gradient_norm,
                d.train_rows,
                d.restarts_converged,
                fit.restarts
            );
        }
    }
    let report = TrainReport {
        train_from: format_timestamp(range.start),
        train_to: format_timestamp(from_hour_index(range.end_hour())),
        fit: &fit,
        models,
    };
    write_file(&a.out.join("diagnostics.json"), &to_json(&report))
}

fn forecast(a: &ForecastArgs, cfg: &Resolved) -> Result<(), CliError> {
    let data = DemandHistory::read_csv(&a.data)?;
    let mut models = ModelSet::load(&a.models, &data, &cfg.seasons)?;
    let at = hour_index(a.at);
    let season = models.season_for(a.at.date());
    models.refresh_season(season, &data, at, cfg.simulate.window_hours)?;
    let predictors = models.predictors(season)?;

    let mut sp = cfg.sp.clone();
    sp.horizon = a.horizon.unwrap_or(sp.horizon);
    let scfg = SamplerConfig {
        m: a.m.unwrap_or(cfg.sampler.m),
        horizon: sp.horizon,
        seed: a.seed.unwrap_or(cfg.sampler.seed),
        variance_scale: if a.zero_variance { 0.0 } else { cfg.sampler.variance_scale },
        ..cfg.sampler.clone()
    };
    scfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    sp.validate(&cfg.params, &cfg.tariffs).map_err(|e| CliError::Config(e.to_string()))?;

    let weather = WeatherForecast::from_history(&data, at, sp.horizon)?;
    let set = sample_trajectories(predictors, &data, at, &weather, &scfg)?;
    let mean = mean_trajectory(predictors, &data, at, &weather, sp.horizon)?;
    write_trajectories_csv(&a.out.join("trajectories.csv"), &set.samples)?;
    write_trajectories_csv(&a.out.join("mean.csv"), &[mean])?;
    println!(
        "{} trajectories of {} h from {} ({} season), {} of {} draws clipped at 0",
        scfg.m,
        sp.horizon,
        format_timestamp(a.at),
        season.name(),
        set.clipped,
        set.total_draws
    );

    if let Some(rel) = &a.solve_out {
        let state = HubState::initial(&cfg.params, at);
        let sol = solve_scenarios(
            &state,
            &cfg.params,
            &cfg.tariffs,
            &weather.irradiance,
            &set.samples,
            &sp,
            &SolveOptions::default(),
        )?;
        println!("scenario program: objective {:.4} CHF, slack {:.3} kWh", sol.objective, sol.slack_sum());
        let bundle = SolutionBundle {
            state,
            params: cfg.params.clone(),
            tariffs: cfg.tariffs.clone(),
            irradiance: weather.irradiance.clone(),
            sp,
            solution: sol,
        };
        write_file(&a.out.join(rel), &to_json(&bundle))?;
    }

    if let (Some(from), Some(to)) = (a.residuals_from, a.residuals_to) {
        let report = evaluate_one_step(
            &models,
            &data,
            hour_index(from),
            hour_index(to),
            cfg.simulate.refresh_hours,
            cfg.simulate.window_hours,
        )?;
        let path = a.out.join("residual_quartiles.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
        for s in &report.stats {
            w.serialize(s).map_err(|e| CliError::Io(e.to_string()))?;
            println!(
                "{}: n {} rel. error q25 {:.4} q50 {:.4} q75 {:.4}, 90% coverage {:.3}",
                s.kind.name(),
                s.count,
                s.rel_q25,
                s.rel_q50,
                s.rel_q75,
                s.coverage90
            );
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Arm names and configs; `pd` and `mean` do not sample so they run once.
fn arms(a: &SimulateArgs, cfg: &Resolved) -> Vec<(String, SimulationConfig)> {
    let mut kinds = a.controllers.clone();
    kinds.dedup();
    let mut ms = a.m.clone();
    ms.sort_unstable();
    ms.dedup();
    let make = |controller: Controller, seed: u64| {
        let mut s = SimulationConfig::new(a.start, a.end, controller, seed);
        s.sp = cfg.sp.clone();
        s.sampler = cfg.sampler.clone();
        s.refresh_hours = cfg.simulate.refresh_hours;
        s.window_hours = cfg.simulate.window_hours;
        s
    };
    let mut out = Vec::new();
    for kind in kinds {
        match kind {
            ControllerKind::Pd => out.push(("pd_mpc".to_string(), make(Controller::PerfectDemand, 0))),
            ControllerKind::Mean => out.push(("mean_mpc".to_string(), make(Controller::MeanForecast, 0))),
            ControllerKind::Scenario => {
                for &m in &ms {
                    for &seed in &a.seeds {
                        let c = Controller::Scenario { m };
                        out.push((format!("{}_seed{seed}", c.label()), make(c, seed)));
                    }
                }
            }
        }
    }
    out
}

fn simulate(a: &SimulateArgs, cfg: &Resolved) -> Result<(), CliError> {
    if a.end <= a.start {
        return Err(CliError::Usage("--end must be after --start".into()));
    }
    if a.m.contains(&0) {
        return Err(CliError::Usage("--M values must be at least 1".into()));
    }
    let data = DemandHistory::read_csv(&a.data)?;
    let needs_models = a.controllers.iter().any(|c| *c != ControllerKind::Pd);
    let models = match (&a.models, needs_models) {
        (Some(dir), _) => ModelSet::load(dir, &data, &cfg.seasons)?,
        (None, false) => ModelSet::default(),
        (None, true) => return Err(CliError::Usage("--models is required for the scenario and mean controllers".into())),
    };
    let arms = arms(a, cfg);
    let configs: Vec<SimulationConfig> = arms.iter().map(|(_, c)| c.clone()).collect();
    let results = run_arms(&configs, &cfg.params, &cfg.tariffs, &models, &data, a.jobs);

    let mut summaries = Vec::new();
    let mut failed = Vec::new();
    for ((name, _), result) in arms.iter().zip(results) {
        let outcome = result.map_err(CliError::from).and_then(|trace| {
            write_trace_csv(&a.out.join(format!("{name}_trace.csv")), &trace)?;
            let summary = summarize(&trace)?;
            write_file(&a.out.join(format!("{name}_summary.json")), &(summary.to_json() + "\n"))?;
            Ok(summary)
        });
        match outcome {
            Ok(s) => {
                println!(
                    "{name:<24} mean cost {:.3} CHF/h, {} violations, {:.1} kWh",
                    s.mean_cost_chf_per_h, s.violation_count, s.cumulative_violation_kwh
                );
                summaries.push((name.clone(), s));
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                write_file(&a.out.join(format!("{name}_error.txt")), &format!("{e}\n"))?;
                failed.push(name.clone());
            }
        }
    }
    write_combined_csv(&a.out.join("combined.csv"), &summaries)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} of {} arms failed: {}", failed.len(), arms.len(), failed.join(", "))))
    }
}

fn read_bundle(path: &Path) -> Result<SolutionBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("solution bundle {}: {e}", path.display())))
}

fn certify_cmd(a: &CertifyArgs, cfg: Option<&Resolved>) -> Result<(), CliError> {
    let bundle = read_bundle(&a.solution)?;
    let scenarios = read_trajectories_csv(&a.scenarios)?;
    let mut gcfg = cfg.map(|c| c.guarantees.clone()).unwrap_or_default();
    if let Some(b) = a.beta {
        gcfg.beta = b;
    }
    gcfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let inst = SpInstance {
        state: &bundle.state,
        params: &bundle.params,
        tariffs: &bundle.tariffs,
        irradiance: &bundle.irradiance,
        sp: &bundle.sp,
    };
    let result = certify(&inst, &bundle.solution, &scenarios, &gcfg)?;
    write_file(&a.out.join("certificate.json"), &(result.to_json() + "\n"))?;
    println!("{}", result.statement);
    Ok(())
}
