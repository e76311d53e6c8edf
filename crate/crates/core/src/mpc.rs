//! Scenario program assembly and the receding-horizon step.
//!
//! Variable layout, in column order:
//!
//! * shared block, per step `k`: `p_pv, w_A..w_D, p_chp, q_chp, f_chp, p_hp,
//!   q_hp, q_gb, f_gb, es_discharge, es_charge, es_level` (15 per step);
//! * recourse block, per scenario `i` and step `k`: `buy, sell, ts_discharge,
//!   ts_charge, ts_level` (5 per step);
//! * slacks `σ⁺_k`, `σ⁻_k` shared by all scenarios (2 per step);
//! * epigraph variable `t` when requested.
//!
//! Rows: 7 per step in the shared block (CHP output, heat and fuel
//! definitions, CHP weight sum, heat pump, boiler, ES dynamics), then 5 per
//! scenario and step (electric balance, heat balance, TS dynamics, soft upper
//! TS bound, soft lower TS bound), then one cost row per scenario under the
//! epigraph form. Without the terminal option this gives `15T + 5MT + 2T`
//! columns and `7T + 5MT` rows.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::forecast::ForecastError;
use crate::hub::{
    pv_output, stage_cost, HubError, HubParameters, HubState, RecourseVariables, SetPoints, StepRecourse,
    StepSetPoint, Tariffs,
};
use crate::optimizer::{
    solve_with_complementarity_opts, Basis, BranchMode, BranchOptions, BranchStats, ComplementarityPair,
    LinearProgram, OptimizeError, RowId, RowSense, SolveStatus, VarId, COMP_TOL,
};
use crate::sampler::{
    mean_trajectory, sample_trajectories, Predictors, SampleSet, SamplerConfig, TrajectorySample, WeatherForecast,
};
use crate::forecast::DemandHistory;

/// Box on grid and storage power flows (kW).
pub const FLOW_CAP: f64 = 1e5;
/// Box on the softly bounded thermal level (kWh).
const LEVEL_BOX: f64 = 1e7;
/// Tolerance of the post-solve balance and bound checks.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum MpcError {
    #[error("invalid scenario program input: {0}")]
    Input(String),
    #[error(transparent)]
    Hub(#[from] HubError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("solver returned {0:?} and no fallback plan is available")]
    NoSolution(SolveStatus),
    #[error("solution check failed: {0}")]
    Check(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpConfig {
    pub horizon: usize,
    /// Slack weight in CHF/kWh; `None` uses ten times the largest buy price.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub epigraph: bool,
    #[serde(default)]
    pub branch_mode: BranchMode,
    /// Penalty (CHF/kWh) on deviating from the initial storage levels at the
    /// end of the horizon. Off when `None`.
    #[serde(default)]
    pub terminal_weight: Option<f64>,
    #[serde(default = "default_node_limit")]
    pub node_limit: usize,
}

fn default_node_limit() -> usize {
    20_000
}

impl Default for SpConfig {
    fn default() -> Self {
        Self {
            horizon: 24,
            rho: None,
            epigraph: false,
            branch_mode: BranchMode::RelaxFirst,
            terminal_weight: None,
            node_limit: default_node_limit(),
        }
    }
}

impl SpConfig {
    /// Effective slack weight for a tariff over the horizon.
    pub fn rho_for(&self, tariffs: &Tariffs) -> f64 {
        self.rho.unwrap_or_else(|| 10.0 * tariffs.max_buy())
    }

    pub fn validate(&self, params: &HubParameters, tariffs: &Tariffs) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::Input("horizon must be at least 1".into()));
        }
        let rho = self.rho_for(tariffs);
        // cheapest real heat must stay cheaper than slack heat
        let heat_cost = tariffs
            .buy
            .iter()
            .zip(&tariffs.gas)
            .map(|(b, g)| (b / params.cop).min(g / params.eta_gb))
            .fold(0.0, f64::max)
            / params.eta_ts;
        if !(rho > heat_cost) || !rho.is_finite() {
            return Err(MpcError::Input(format!(
                "slack weight {rho} must exceed the marginal heat cost {heat_cost}"
            )));
        }
        if let Some(w) = self.terminal_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(MpcError::Input("terminal_weight must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedStepVars {
    pub p_pv: VarId,
    pub w: [VarId; 4],
    pub p_chp: VarId,
    pub q_chp: VarId,
    pub f_chp: VarId,
    pub p_hp: VarId,
    pub q_hp: VarId,
    pub q_gb: VarId,
    pub f_gb: VarId,
    pub es_discharge: VarId,
    pub es_charge: VarId,
    pub es_level: VarId,
}

impl SharedStepVars {
    pub fn all(&self) -> [VarId; 15] {
        [
            self.p_pv,
            self.w[0],
            self.w[1],
            self.w[2],
            self.w[3],
            self.p_chp,
            self.q_chp,
            self.f_chp,
            self.p_hp,
            self.q_hp,
            self.q_gb,
            self.f_gb,
            self.es_discharge,
            self.es_charge,
            self.es_level,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecourseStepVars {
    pub buy: VarId,
    pub sell: VarId,
    pub ts_discharge: VarId,
    pub ts_charge: VarId,
    pub ts_level: VarId,
}

/// Column and row indices of an assembled scenario program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpLayout {
    pub horizon: usize,
    pub m: usize,
    pub shared: Vec<SharedStepVars>,
    /// `recourse[i][k]`.
    pub recourse: Vec<Vec<RecourseStepVars>>,
    pub sigma_plus: Vec<VarId>,
    pub sigma_minus: Vec<VarId>,
    pub epigraph_t: Option<VarId>,
    /// Rows generated by scenario `i` (balances, TS rows and its epigraph row).
    pub scenario_rows: Vec<Vec<RowId>>,
    /// Per-scenario stage-cost coefficients, summed over the horizon.
    pub scenario_cost: Vec<Vec<(VarId, f64)>>,
    /// Terminal deviation variables (ES pair, then one TS pair per scenario).
    pub terminal: Vec<VarId>,
}

impl SpLayout {
    /// Scenario-independent decision columns: set points and slacks.
    pub fn shared_columns(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = self.shared.iter().flat_map(|s| s.all()).collect();
        v.extend(&self.sigma_plus);
        v.extend(&self.sigma_minus);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProgram {
    pub lp: LinearProgram,
    pub pairs: Vec<ComplementarityPair>,
    pub layout: SpLayout,
    pub rho: f64,
    pub scenario_hash: String,
    /// Absolute hour of the first step.
    pub start_hour: i64,
    pub dt: f64,
}

/// Hex SHA-256 over the bit patterns of all scenario values.
pub fn scenario_hash(scenarios: &[TrajectorySample]) -> String {
    let mut h = Sha256::new();
    for s in scenarios {
        h.update((s.load_e.len() as u64).to_le_bytes());
        for v in s.load_e.iter().chain(&s.load_h) {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Weather needed by the program: irradiance caps PV over the horizon.
pub fn build_scenario_program(
    state: &HubState,
    params: &HubParameters,
    tariffs: &Tariffs,
    irradiance: &[f64],
    scenarios: &[TrajectorySample],
    cfg: &SpConfig,
) -> Result<ScenarioProgram, MpcError> {
    params.validate()?;
    tariffs.validate()?;
    cfg.validate(params, tariffs)?;
    let t_len = cfg.horizon;
    let m = scenarios.len();
    if m == 0 {
        return Err(MpcError::Input("at least one scenario is required".into()));
    }
    for s in scenarios {
        if s.load_e.len() != t_len || s.load_h.len() != t_len {
            return Err(MpcError::Input(format!(
                "scenario {} has {} / {} steps, horizon is {t_len}",
                s.scenario,
                s.load_e.len(),
                s.load_h.len()
            )));
        }
        if s.load_e.iter().chain(&s.load_h).any(|v| !v.is_finite()) {
            return Err(MpcError::Input(format!("scenario {} has non-finite demand", s.scenario)));
        }
    }
    if irradiance.len() < t_len {
        return Err(MpcError::Input(format!("irradiance covers {} of {t_len} steps", irradiance.len())));
    }

    let p = params;
    let dt = p.dt;
    let rho = cfg.rho_for(tariffs);
    let mf = m as f64;
    let mut lp = LinearProgram::new();
    let mut pairs = Vec::new();
    let prices: Vec<_> = (0..t_len).map(|k| tariffs.at(state.clock + k as i64)).collect();

    let mut shared = Vec::with_capacity(t_len);
    for k in 0..t_len {
        let avail = pv_output(irradiance[k], p)?;
        let gas = prices[k].gas * dt;
        let v = SharedStepVars {
            p_pv: lp.add_var(p.p_pv_min.min(avail), avail, 0.0),
            w: [
                lp.add_var(0.0, 1.0, 0.0),
                lp.add_var(0.0, 1.0, 0.0),
                lp.add_var(0.0, 1.0, 0.0),
                lp.add_var(0.0, 1.0, 0.0),
            ],
            p_chp: lp.add_var(p.p_chp_min, p.p_chp_max, 0.0),
            q_chp: lp.add_var(p.q_chp_min, p.q_chp_max, 0.0),
            f_chp: lp.add_var(0.0, f64::INFINITY, gas),
            p_hp: lp.add_var(0.0, f64::INFINITY, 0.0),
            q_hp: lp.add_var(p.q_hp_min, p.q_hp_max, 0.0),
            q_gb: lp.add_var(p.q_gb_min, p.q_gb_max, 0.0),
            f_gb: lp.add_var(0.0, f64::INFINITY, gas),
            es_discharge: lp.add_var(0.0, FLOW_CAP, 0.0),
            es_charge: lp.add_var(0.0, FLOW_CAP, 0.0),
            es_level: lp.add_var(p.es_min, p.es_max, 0.0),
        };
        shared.push(v);
    }
    let mut recourse = vec![Vec::with_capacity(t_len); m];
    for rec in recourse.iter_mut() {
        for k in 0..t_len {
            rec.push(RecourseStepVars {
                buy: lp.add_var(0.0, FLOW_CAP, prices[k].buy * dt / mf),
                sell: lp.add_var(0.0, FLOW_CAP, -prices[k].sell * dt / mf),
                ts_discharge: lp.add_var(0.0, FLOW_CAP, 0.0),
                ts_charge: lp.add_var(0.0, FLOW_CAP, 0.0),
                ts_level: lp.add_var(-LEVEL_BOX, LEVEL_BOX, 0.0),
            });
        }
    }
    let sigma_plus: Vec<VarId> = (0..t_len).map(|_| lp.add_var(0.0, f64::INFINITY, rho)).collect();
    let sigma_minus: Vec<VarId> = (0..t_len).map(|_| lp.add_var(0.0, f64::INFINITY, rho)).collect();

    // shared rows
    for k in 0..t_len {
        let v = &shared[k];
        let mut row = vec![(v.p_chp, 1.0)];
        row.extend((0..4).map(|j| (v.w[j], -p.chp_p[j])));
        lp.add_row(&row, RowSense::Eq, 0.0);
        let mut row = vec![(v.q_chp, 1.0)];
        row.extend((0..4).map(|j| (v.w[j], -p.chp_q[j])));
        lp.add_row(&row, RowSense::Eq, 0.0);
        lp.add_row(&[(v.f_chp, 1.0), (v.p_chp, -1.0 / p.eta_chp)], RowSense::Eq, 0.0);
        let row: Vec<(VarId, f64)> = v.w.iter().map(|&w| (w, 1.0)).collect();
        lp.add_row(&row, RowSense::Eq, 1.0);
        lp.add_row(&[(v.q_hp, 1.0), (v.p_hp, -p.cop)], RowSense::Eq, 0.0);
        lp.add_row(&[(v.q_gb, 1.0), (v.f_gb, -p.eta_gb)], RowSense::Eq, 0.0);
        // level_k - γ level_{k-1} - η ch dt + dis dt/η = 0
        let mut row = vec![(v.es_level, 1.0), (v.es_charge, -p.eta_es * dt), (v.es_discharge, dt / p.eta_es)];
        let rhs = if k == 0 {
            p.gamma_es * state.es_level
        } else {
            row.push((shared[k - 1].es_level, -p.gamma_es));
            0.0
        };
        lp.add_row(&row, RowSense::Eq, rhs);
        pairs.push(ComplementarityPair::new(v.es_discharge, v.es_charge));
    }

    let mut scenario_rows = vec![Vec::new(); m];
    let mut scenario_cost = vec![Vec::new(); m];
    for (i, s) in scenarios.iter().enumerate() {
        for k in 0..t_len {
            let v = &shared[k];
            let r = &recourse[i][k];
            let rows = &mut scenario_rows[i];
            rows.push(lp.add_row(
                &[
                    (v.p_pv, 1.0),
                    (v.p_chp, 1.0),
                    (v.p_hp, -1.0),
                    (r.buy, 1.0),
                    (r.sell, -1.0),
                    (v.es_discharge, 1.0),
                    (v.es_charge, -1.0),
                ],
                RowSense::Eq,
                s.load_e[k],
            ));
            rows.push(lp.add_row(
                &[(v.q_gb, 1.0), (v.q_chp, 1.0), (v.q_hp, 1.0), (r.ts_discharge, 1.0), (r.ts_charge, -1.0)],
                RowSense::Eq,
                s.load_h[k],
            ));
            let mut row = vec![(r.ts_level, 1.0), (r.ts_charge, -p.eta_ts * dt), (r.ts_discharge, dt / p.eta_ts)];
            let rhs = if k == 0 {
                p.gamma_ts * state.ts_level
            } else {
                row.push((recourse[i][k - 1].ts_level, -p.gamma_ts));
                0.0
            };
            rows.push(lp.add_row(&row, RowSense::Eq, rhs));
            rows.push(lp.add_row(&[(r.ts_level, 1.0), (sigma_plus[k], -1.0)], RowSense::Le, p.ts_max));
            rows.push(lp.add_row(&[(r.ts_level, 1.0), (sigma_minus[k], 1.0)], RowSense::Ge, p.ts_min));
            pairs.push(ComplementarityPair::new(r.buy, r.sell));
            pairs.push(ComplementarityPair::new(r.ts_discharge, r.ts_charge));
            let c = &mut scenario_cost[i];
            c.push((r.buy, prices[k].buy * dt));
            c.push((r.sell, -prices[k].sell * dt));
            c.push((v.f_chp, prices[k].gas * dt));
            c.push((v.f_gb, prices[k].gas * dt));
        }
    }

    let mut terminal = Vec::new();
    if let Some(w) = cfg.terminal_weight {
        let last = t_len - 1;
        let up = lp.add_var(0.0, f64::INFINITY, w);
        let down = lp.add_var(0.0, f64::INFINITY, w);
        lp.add_row(&[(shared[last].es_level, 1.0), (up, -1.0), (down, 1.0)], RowSense::Eq, state.es_level);
        terminal.extend([up, down]);
        for i in 0..m {
            let up = lp.add_var(0.0, f64::INFINITY, w / mf);
            let down = lp.add_var(0.0, f64::INFINITY, w / mf);
            let r = lp.add_row(
                &[(recourse[i][last].ts_level, 1.0), (up, -1.0), (down, 1.0)],
                RowSense::Eq,
                state.ts_level,
            );
            scenario_rows[i].push(r);
            terminal.extend([up, down]);
        }
    }

    let mut program = ScenarioProgram {
        lp,
        pairs,
        layout: SpLayout {
            horizon: t_len,
            m,
            shared,
            recourse,
            sigma_plus,
            sigma_minus,
            epigraph_t: None,
            scenario_rows,
            scenario_cost,
            terminal,
        },
        rho,
        scenario_hash: scenario_hash(scenarios),
        start_hour: state.clock,
        dt,
    };
    if cfg.epigraph {
        program = epigraph_reformulate(&program);
    }
    Ok(program)
}

/// Replaces the mean cost by `t` with one row `cost_i ≤ t` per scenario.
/// Slack and terminal penalties stay in the objective.
pub fn epigraph_reformulate(program: &ScenarioProgram) -> ScenarioProgram {
    if program.layout.epigraph_t.is_some() {
        return program.clone();
    }
    let mut out = program.clone();
    let layout = &mut out.layout;
    for rec in &layout.recourse {
        for r in rec {
            out.lp.set_cost(r.buy, 0.0);
            out.lp.set_cost(r.sell, 0.0);
        }
    }
    for s in &layout.shared {
        out.lp.set_cost(s.f_chp, 0.0);
        out.lp.set_cost(s.f_gb, 0.0);
    }
    let t = out.lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
    for i in 0..layout.m {
        let mut row = merge_coeffs(&layout.scenario_cost[i]);
        row.push((t, -1.0));
        let r = out.lp.add_row(&row, RowSense::Le, 0.0);
        layout.scenario_rows[i].push(r);
    }
    layout.epigraph_t = Some(t);
    out
}

fn merge_coeffs(c: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut v = c.to_vec();
    v.sort_by_key(|(id, _)| id.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(v.len());
    for (id, a) in v {
        match out.last_mut() {
            Some((last, acc)) if *last == id => *acc += a,
            _ => out.push((id, a)),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpSolution {
    pub status: SolveStatus,
    /// Solver stopped at its node limit; the plan is the best incumbent.
    pub degraded: bool,
    pub start_hour: i64,
    pub set_points: SetPoints,
    pub recourse: Vec<RecourseVariables>,
    pub sigma_plus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
    /// Optimal value of the assembled objective (CHF).
    pub objective: f64,
    /// Empirical mean stage cost over the scenarios (CHF).
    pub mean_cost: f64,
    pub scenario_costs: Vec<f64>,
    pub epigraph_t: Option<f64>,
    pub rho: f64,
    pub scenario_hash: String,
    pub stats: BranchStats,
    #[serde(skip)]
    pub primal: Vec<f64>,
    #[serde(skip)]
    pub basis: Option<Basis>,
}

impl SpSolution {
    pub fn slack_sum(&self) -> f64 {
        self.sigma_plus.iter().chain(&self.sigma_minus).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub warm: Option<Basis>,
}

pub fn solve_sp(
    program: &ScenarioProgram,
    params: &HubParameters,
    tariffs: &Tariffs,
    scenarios: &[TrajectorySample],
    cfg: &SpConfig,
    opts: &SolveOptions,
) -> Result<SpSolution, MpcError> {
    let bopts = BranchOptions { mode: cfg.branch_mode, node_limit: cfg.node_limit, ..Default::default() };
    let warm = opts.warm.as_ref().filter(|b| b.status.len() == program.lp.num_vars() + program.lp.num_rows());
    let res = solve_with_complementarity_opts(&program.lp, &program.pairs, &bopts, warm)?;
    let degraded = res.status == SolveStatus::IterationLimit;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::IterationLimit if res.objective.is_finite() => {}
        s => return Err(MpcError::NoSolution(s)),
    }
    let x = &res.primal;
    let l = &program.layout;
    let set_points = SetPoints {
        steps: l
            .shared
            .iter()
            .map(|v| StepSetPoint {
                p_pv: x[v.p_pv.0],
                chp_weights: [x[v.w[0].0], x[v.w[1].0], x[v.w[2].0], x[v.w[3].0]],
                p_chp: x[v.p_chp.0],
                q_chp: x[v.q_chp.0],
                f_chp: x[v.f_chp.0],
                p_hp: x[v.p_hp.0],
                q_hp: x[v.q_hp.0],
                q_gb: x[v.q_gb.0],
                f_gb: x[v.f_gb.0],
                es_discharge: x[v.es_discharge.0],
                es_charge: x[v.es_charge.0],
                es_level: x[v.es_level.0],
            })
            .collect(),
    };
    let recourse: Vec<RecourseVariables> = l
        .recourse
        .iter()
        .map(|rec| RecourseVariables {
            steps: rec
                .iter()
                .map(|r| StepRecourse {
                    grid_buy: x[r.buy.0],
                    grid_sell: x[r.sell.0],
                    ts_discharge: x[r.ts_discharge.0],
                    ts_charge: x[r.ts_charge.0],
                    ts_level: x[r.ts_level.0],
                })
                .collect(),
        })
        .collect();
    let sigma_plus: Vec<f64> = l.sigma_plus.iter().map(|v| x[v.0]).collect();
    let sigma_minus: Vec<f64> = l.sigma_minus.iter().map(|v| x[v.0]).collect();
    let scenario_costs: Vec<f64> = recourse
        .iter()
        .map(|rec| {
            (0..l.horizon)
                .map(|k| {
                    let prices = tariffs.at(program.start_hour + k as i64);
                    stage_cost(&set_points.steps[k], &rec.steps[k], prices, program.dt)
                })
                .sum()
        })
        .collect();
    let mean_cost = scenario_costs.iter().sum::<f64>() / l.m as f64;
    let sol = SpSolution {
        status: res.status,
        degraded,
        start_hour: program.start_hour,
        set_points,
        recourse,
        sigma_plus,
        sigma_minus,
        objective: res.objective,
        mean_cost,
        scenario_costs,
        epigraph_t: l.epigraph_t.map(|t| x[t.0]),
        rho: program.rho,
        scenario_hash: program.scenario_hash.clone(),
        stats: res.stats.clone(),
        primal: res.primal.clone(),
        basis: res.basis.clone(),
    };
    check_solution(&sol, program, params, scenarios)?;
    Ok(sol)
}

/// Verifies slack signs, softened TS bounds, per-scenario balances and the
/// objective recomputed from hub stage costs.
pub fn check_solution(
    sol: &SpSolution,
    program: &ScenarioProgram,
    params: &HubParameters,
    scenarios: &[TrajectorySample],
) -> Result<(), MpcError> {
    let fail = |m: String| Err(MpcError::Check(m));
    let l = &program.layout;
    for k in 0..l.horizon {
        let (sp, sm) = (sol.sigma_plus[k], sol.sigma_minus[k]);
        if sp < -CHECK_TOL || sm < -CHECK_TOL {
            return fail(format!("negative slack at step {k}"));
        }
        for (i, rec) in sol.recourse.iter().enumerate() {
            let r = &rec.steps[k];
            if r.ts_level > params.ts_max + sp + CHECK_TOL || r.ts_level < params.ts_min - sm - CHECK_TOL {
                return fail(format!("scenario {i} TS level {} outside softened bounds at step {k}", r.ts_level));
            }
            let (re, rh) =
                crate::hub::balance_residuals(&sol.set_points.steps[k], r, scenarios[i].load_e[k], scenarios[i].load_h[k]);
            let scale = 1.0 + scenarios[i].load_e[k].abs().max(scenarios[i].load_h[k].abs());
            if re.abs() > CHECK_TOL * scale || rh.abs() > CHECK_TOL * scale {
                return fail(format!("scenario {i} balance residual ({re:e}, {rh:e}) at step {k}"));
            }
        }
    }
    for p in &program.pairs {
        if p.product(&sol.primal) > COMP_TOL {
            return fail(format!("complementarity pair ({}, {}) violated", p.first.0, p.second.0));
        }
    }
    let slack_cost = program.rho * sol.slack_sum();
    let terminal_cost: f64 = l.terminal.iter().map(|v| program.lp.cost[v.0] * sol.primal[v.0]).sum();
    let recomputed = match sol.epigraph_t {
        Some(t) => t + slack_cost + terminal_cost,
        None => sol.mean_cost + slack_cost + terminal_cost,
    };
    if (recomputed - sol.objective).abs() > CHECK_TOL * sol.objective.abs().max(1.0) {
        return fail(format!("objective {} differs from recomputed {recomputed}", sol.objective));
    }
    Ok(())
}

/// Builds and solves the program for a given scenario set.
#[allow(clippy::too_many_arguments)]
pub fn solve_scenarios(
    state: &HubState,
    params: &HubParameters,
    tariffs: &Tariffs,
    irradiance: &[f64],
    scenarios: &[TrajectorySample],
    cfg: &SpConfig,
    opts: &SolveOptions,
) -> Result<SpSolution, MpcError> {
    let program = build_scenario_program(state, params, tariffs, irradiance, scenarios, cfg)?;
    solve_sp(&program, params, tariffs, scenarios, cfg, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub sp: SpConfig,
    pub sampler: SamplerConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { sp: SpConfig::default(), sampler: SamplerConfig::default() }
    }
}

#[derive(Clone, Debug)]
pub struct MpcStep {
    /// First-hour set points to apply.
    pub applied: StepSetPoint,
    pub solution: Option<SpSolution>,
    pub samples: SampleSet,
    /// The solve failed and the previous plan, shifted to the current hour, was used.
    pub fallback: bool,
}

/// Where the scenarios of one step come from.
pub enum ScenarioSource<'a> {
    /// Sample `cfg.sampler.m` trajectories from the predictors.
    Sampled(Predictors<'a>),
    /// Recursive mean forecast as the only scenario.
    Mean(Predictors<'a>),
    /// Given trajectories, e.g. the true demand.
    Fixed(Vec<TrajectorySample>),
}

/// One receding-horizon step: scenarios, program, solve, first-hour slice.
#[allow(clippy::too_many_arguments)]
pub fn mpc_step(
    state: &HubState,
    params: &HubParameters,
    tariffs: &Tariffs,
    source: ScenarioSource<'_>,
    history: &DemandHistory,
    weather: &WeatherForecast,
    cfg: &MpcConfig,
    seed: u64,
    previous: Option<&SpSolution>,
) -> Result<MpcStep, MpcError> {
    let t_len = cfg.sp.horizon;
    let samples = match source {
        ScenarioSource::Sampled(models) => {
            let scfg = SamplerConfig { horizon: t_len, seed, ..cfg.sampler.clone() };
            sample_trajectories(models, history, state.clock, weather, &scfg)?
        }
        ScenarioSource::Mean(models) => {
            let s = mean_trajectory(models, history, state.clock, weather, t_len)?;
            SampleSet { samples: vec![s], clipped: 0, total_draws: 2 * t_len }
        }
        ScenarioSource::Fixed(s) => SampleSet { samples: s, clipped: 0, total_draws: 0 },
    };
    let opts = SolveOptions { warm: previous.and_then(|p| p.basis.clone()) };
    let solved = solve_scenarios(state, params, tariffs, &weather.irradiance, &samples.samples, &cfg.sp, &opts);
    match solved {
        Ok(sol) => Ok(MpcStep { applied: sol.set_points.steps[0], solution: Some(sol), samples, fallback: false }),
        Err(e) => {
            let shifted = previous.and_then(|p| {
                let offset = usize::try_from(state.clock - p.start_hour).ok().filter(|&o| o >= 1)?;
                p.set_points.steps.get(offset).copied()
            });
            match shifted {
                Some(applied) => {
                    log::warn!("scenario program failed ({e}); applying the previous plan shifted to hour {}", state.clock);
                    Ok(MpcStep { applied, solution: None, samples, fallback: true })
                }
                None => Err(e),
            }
        }
    }
}
