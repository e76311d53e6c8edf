use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::realize::{realize_step, RealizedStep};
use super::SimError;
use crate::forecast::{DemandHistory, ModelSet, Season};
use crate::forecast::features::WINDOW_HOURS;
use crate::hub::{pv_output, HubParameters, HubState, StepSetPoint, Tariffs};
use crate::mpc::{mpc_step, MpcConfig, ScenarioSource, SpConfig, SpSolution};
use crate::sampler::{SamplerConfig, TrajectorySample, WeatherForecast};
use crate::timeutil::{format_timestamp, from_hour_index, hour_index};

/// Solve failures (including fallback hours) in a row that abort a run.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Controller {
    /// Scenario program over `m` sampled trajectories.
    Scenario { m: usize },
    /// Single scenario equal to the true future demand.
    PerfectDemand,
    /// Single scenario equal to the recursive mean forecast.
    MeanForecast,
}

impl Controller {
    pub fn label(&self) -> String {
        match self {
            Controller::Scenario { m } => format!("scenario_m{m}"),
            Controller::PerfectDemand => "pd_mpc".into(),
            Controller::MeanForecast => "mean_mpc".into(),
        }
    }

    pub fn scenarios(&self) -> usize {
        match self {
            Controller::Scenario { m } => *m,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub start: NaiveDateTime,
    /// Exclusive.
    pub end: NaiveDateTime,
    pub controller: Controller,
    pub sampling_seed: u64,
    #[serde(default)]
    pub sp: SpConfig,
    /// Sampler options; `m`, `horizon` and `seed` are set per hour.
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Hours between re-conditioning of the predictors.
    #[serde(default = "default_refresh")]
    pub refresh_hours: usize,
    /// Conditioning window of the predictors (hours).
    #[serde(default = "default_window")]
    pub window_hours: usize,
    #[serde(default)]
    pub initial_state: Option<HubState>,
}

fn default_refresh() -> usize {
    24
}

fn default_window() -> usize {
    21 * 24
}

impl SimulationConfig {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime, controller: Controller, sampling_seed: u64) -> Self {
        Self {
            start,
            end,
            controller,
            sampling_seed,
            sp: SpConfig::default(),
            sampler: SamplerConfig::default(),
            refresh_hours: default_refresh(),
            window_hours: default_window(),
            initial_state: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.end <= self.start {
            return Err(SimError::Input("simulation end must be after start".into()));
        }
        if let Controller::Scenario { m } = self.controller {
            if m == 0 {
                return Err(SimError::Input("scenario controller needs M >= 1".into()));
            }
        }
        if self.refresh_hours == 0 || self.window_hours == 0 {
            return Err(SimError::Input("refresh_hours and window_hours must be positive".into()));
        }
        Ok(())
    }
}

/// One simulated hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub hour: i64,
    pub timestamp: String,
    pub p_pv: f64,
    pub p_chp: f64,
    pub q_chp: f64,
    pub f_chp: f64,
    pub p_hp: f64,
    pub q_hp: f64,
    pub q_gb: f64,
    pub f_gb: f64,
    pub load_e: f64,
    pub load_h: f64,
    pub grid_buy: f64,
    pub grid_sell: f64,
    pub es_discharge: f64,
    pub es_charge: f64,
    pub es_level: f64,
    pub ts_discharge: f64,
    pub ts_charge: f64,
    pub ts_level: f64,
    pub unserved_heat_kwh: f64,
    pub dumped_heat_kwh: f64,
    pub violation_kwh: f64,
    pub violated: bool,
    pub cost_chf: f64,
    /// σ⁺ + σ⁻ of the first planned hour.
    pub planned_slack_kwh: f64,
    pub residual_e: f64,
    pub residual_h: f64,
    pub throughput_kwh: f64,
    pub fallback: bool,
    pub lp_iterations: usize,
    pub bnb_nodes: usize,
    pub clipped_draws: usize,
}

impl TraceRow {
    fn new(hour: i64, sp: &StepSetPoint, le: f64, lh: f64, r: &RealizedStep) -> Self {
        Self {
            hour,
            timestamp: format_timestamp(from_hour_index(hour)),
            p_pv: sp.p_pv,
            p_chp: sp.p_chp,
            q_chp: sp.q_chp,
            f_chp: sp.f_chp,
            p_hp: sp.p_hp,
            q_hp: sp.q_hp,
            q_gb: sp.q_gb,
            f_gb: sp.f_gb,
            load_e: le,
            load_h: lh,
            grid_buy: r.grid_buy,
            grid_sell: r.grid_sell,
            es_discharge: r.es_discharge,
            es_charge: r.es_charge,
            es_level: r.es_level,
            ts_discharge: r.ts_discharge,
            ts_charge: r.ts_charge,
            ts_level: r.ts_level,
            unserved_heat_kwh: r.unserved_heat,
            dumped_heat_kwh: r.dumped_heat,
            violation_kwh: r.violation_kwh,
            violated: r.violated(),
            cost_chf: r.cost,
            planned_slack_kwh: 0.0,
            residual_e: r.residual_e,
            residual_h: r.residual_h,
            throughput_kwh: r.throughput,
            fallback: false,
            lp_iterations: 0,
            bnb_nodes: 0,
            clipped_draws: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopTrace {
    pub controller: String,
    pub m: usize,
    pub sampling_seed: u64,
    pub rows: Vec<TraceRow>,
}

impl ClosedLoopTrace {
    pub fn mean_cost(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.cost_chf).sum::<f64>() / self.rows.len() as f64
    }

    pub fn violation_count(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    pub fn cumulative_violation(&self) -> f64 {
        self.rows.iter().map(|r| r.violation_kwh).sum()
    }
}

fn hour_seed(seed: u64, hour: i64) -> u64 {
    let mut z = seed ^ (hour as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// CHP at its first vertex, everything else idle; used only when no plan exists.
fn idle_set_point(params: &HubParameters, irradiance: f64) -> StepSetPoint {
    let p = params;
    StepSetPoint {
        p_pv: pv_output(irradiance, p).unwrap_or(0.0).max(p.p_pv_min),
        chp_weights: [1.0, 0.0, 0.0, 0.0],
        p_chp: p.chp_p[0],
        q_chp: p.chp_q[0],
        f_chp: p.chp_p[0] / p.eta_chp,
        q_hp: p.q_hp_min,
        p_hp: p.q_hp_min / p.cop,
        q_gb: p.q_gb_min,
        f_gb: p.q_gb_min / p.eta_gb,
        ..Default::default()
    }
}

/// Receding-horizon run over `[cfg.start, cfg.end)`.
pub fn run_closed_loop(
    cfg: &SimulationConfig,
    params: &HubParameters,
    tariffs: &Tariffs,
    models: &ModelSet,
    data: &DemandHistory,
) -> Result<ClosedLoopTrace, SimError> {
    cfg.validate()?;
    let t_len = cfg.sp.horizon;
    let first = hour_index(cfg.start);
    let last = hour_index(cfg.end);
    let start_idx = data
        .index_of_hour(first)
        .ok_or_else(|| SimError::Input(format!("start {} outside the data", format_timestamp(cfg.start))))?;
    if start_idx < WINDOW_HOURS {
        return Err(SimError::Input(format!(
            "first controlled hour has {start_idx} h of history, {WINDOW_HOURS} h required"
        )));
    }
    if data.end_hour() < last + t_len as i64 {
        return Err(SimError::Input(format!(
            "data ends at {}, the run needs data through {}",
            format_timestamp(from_hour_index(data.end_hour())),
            format_timestamp(from_hour_index(last + t_len as i64))
        )));
    }

    let mcfg = MpcConfig {
        sp: cfg.sp.clone(),
        sampler: SamplerConfig { m: cfg.controller.scenarios(), horizon: t_len, ..cfg.sampler.clone() },
    };
    let mut models = models.clone();
    let mut refreshed: BTreeMap<Season, i64> = BTreeMap::new();
    let mut state = cfg.initial_state.map_or_else(|| HubState::initial(params, first), |s| HubState { clock: first, ..s });
    state.validate(params)?;
    let mut previous: Option<SpSolution> = None;
    let mut failures = 0;
    let mut rows = Vec::with_capacity((last - first) as usize);

    for hour in first..last {
        let k = (hour - data.start_hour()) as usize;
        let weather = WeatherForecast::from_history(data, hour, t_len)?;
        let source = match cfg.controller {
            Controller::PerfectDemand => ScenarioSource::Fixed(vec![TrajectorySample {
                scenario: 0,
                load_e: data.load_e[k..k + t_len].to_vec(),
                load_h: data.load_h[k..k + t_len].to_vec(),
            }]),
            Controller::Scenario { .. } | Controller::MeanForecast => {
                let season = models.season_for(data.timestamp(k).date());
                let epoch = (hour - first) / cfg.refresh_hours as i64;
                if refreshed.get(&season) != Some(&epoch) {
                    models.refresh_season(season, data, hour, cfg.window_hours)?;
                    refreshed.insert(season, epoch);
                }
                let predictors = models.predictors(season)?;
                if cfg.controller == Controller::MeanForecast {
                    ScenarioSource::Mean(predictors)
                } else {
                    ScenarioSource::Sampled(predictors)
                }
            }
        };
        let step = mpc_step(
            &state,
            params,
            tariffs,
            source,
            data,
            &weather,
            &mcfg,
            hour_seed(cfg.sampling_seed, hour),
            previous.as_ref(),
        );
        let (applied, solution, clipped, error) = match step {
            Ok(s) => (s.applied, s.solution, s.samples.clipped, None),
            Err(e) => (idle_set_point(params, weather.irradiance[0]), None, 0, Some(e.to_string())),
        };
        let fallback = solution.is_none();
        if fallback {
            failures += 1;
            let reason = error.unwrap_or_else(|| "solve failed, previous plan applied".into());
            log::warn!("hour {}: {reason}", format_timestamp(from_hour_index(hour)));
            if failures >= MAX_CONSECUTIVE_FAILURES {
                return Err(SimError::Aborted { hour: format_timestamp(from_hour_index(hour)), reason });
            }
        } else {
            failures = 0;
        }
        let (r, next) = realize_step(&applied, data.load_e[k], data.load_h[k], &state, params, tariffs);
        let mut row = TraceRow::new(hour, &applied, data.load_e[k], data.load_h[k], &r);
        row.fallback = fallback;
        row.clipped_draws = clipped;
        if let Some(sol) = &solution {
            row.planned_slack_kwh = sol.sigma_plus[0] + sol.sigma_minus[0];
            row.lp_iterations = sol.stats.lp_iterations;
            row.bnb_nodes = sol.stats.nodes;
        }
        rows.push(row);
        state = next;
        if solution.is_some() {
            previous = solution;
        }
    }
    Ok(ClosedLoopTrace {
        controller: cfg.controller.label(),
        m: cfg.controller.scenarios(),
        sampling_seed: cfg.sampling_seed,
        rows,
    })
}

/// Runs independent arms on up to `jobs` threads; results keep the input order.
pub fn run_arms(
    arms: &[SimulationConfig],
    params: &HubParameters,
    tariffs: &Tariffs,
    models: &ModelSet,
    data: &DemandHistory,
    jobs: usize,
) -> Vec<Result<ClosedLoopTrace, SimError>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ClosedLoopTrace, SimError>>>> =
        Mutex::new((0..arms.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, arms.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= arms.len() {
                    break;
                }
                let r = run_closed_loop(&arms[i], params, tariffs, models, data);
                results.lock().expect("result slot lock")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("result slot lock").into_iter().map(|r| r.expect("every arm ran")).collect()
}
