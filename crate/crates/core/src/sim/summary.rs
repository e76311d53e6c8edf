use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::closed_loop::ClosedLoopTrace;
use super::SimError;

/// Lower edges (kWh) of the violation-severity bins; the last bin is open.
pub const SEVERITY_EDGES: [f64; 8] = [0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 100.0, 250.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lower_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyCost {
    pub date: String,
    pub cost_chf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub controller: String,
    pub m: usize,
    pub sampling_seed: u64,
    pub hours: usize,
    /// Violations are counted per hour with a TS bound breach.
    pub violation_counting: String,
    pub mean_cost_chf_per_h: f64,
    pub total_cost_chf: f64,
    pub violation_count: usize,
    pub cumulative_violation_kwh: f64,
    pub unserved_heat_kwh: f64,
    pub dumped_heat_kwh: f64,
    pub severity_histogram: Histogram,
    pub daily_cost: Vec<DailyCost>,
    pub fallback_hours: usize,
    pub clipped_draws: usize,
    pub max_hour_residual: f64,
    pub total_throughput_kwh: f64,
    /// |Σ residuals| / Σ throughput over the run.
    pub ledger_closure: f64,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn severity_bin(v: f64) -> usize {
    SEVERITY_EDGES.iter().rposition(|&e| v >= e).unwrap_or(0)
}

pub fn summarize(trace: &ClosedLoopTrace) -> Result<Summary, SimError> {
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(SimError::Input("cannot summarize an empty trace".into()));
    }
    let mut counts = vec![0; SEVERITY_EDGES.len()];
    for r in rows.iter().filter(|r| r.violated) {
        counts[severity_bin(r.violation_kwh)] += 1;
    }
    let mut daily: BTreeMap<String, f64> = BTreeMap::new();
    for r in rows {
        *daily.entry(r.timestamp[..10].to_string()).or_default() += r.cost_chf;
    }
    let total_cost: f64 = rows.iter().map(|r| r.cost_chf).sum();
    let throughput: f64 = rows.iter().map(|r| r.throughput_kwh).sum();
    let residual: f64 = rows.iter().map(|r| r.residual_e + r.residual_h).sum();
    Ok(Summary {
        controller: trace.controller.clone(),
        m: trace.m,
        sampling_seed: trace.sampling_seed,
        hours: rows.len(),
        violation_counting: "per_hour".into(),
        mean_cost_chf_per_h: total_cost / rows.len() as f64,
        total_cost_chf: total_cost,
        violation_count: trace.violation_count(),
        cumulative_violation_kwh: trace.cumulative_violation(),
        unserved_heat_kwh: rows.iter().map(|r| r.unserved_heat_kwh).sum(),
        dumped_heat_kwh: rows.iter().map(|r| r.dumped_heat_kwh).sum(),
        severity_histogram: Histogram { lower_edges: SEVERITY_EDGES.to_vec(), counts },
        daily_cost: daily.into_iter().map(|(date, cost_chf)| DailyCost { date, cost_chf }).collect(),
        fallback_hours: rows.iter().filter(|r| r.fallback).count(),
        clipped_draws: rows.iter().map(|r| r.clipped_draws).sum(),
        max_hour_residual: rows.iter().map(|r| r.residual_e.abs().max(r.residual_h.abs())).fold(0.0, f64::max),
        total_throughput_kwh: throughput,
        ledger_closure: if throughput > 0.0 { residual.abs() / throughput } else { residual.abs() },
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io(format!("{}: {e}", path.display()))
}

/// One CSV row per hour, columns as the [`TraceRow`](super::TraceRow) fields.
pub fn write_trace_csv(path: &Path, trace: &ClosedLoopTrace) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in &trace.rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<super::TraceRow>, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| io_err(path, e))
}

/// Columns `arm,controller,m,seed,mean_cost_chf_per_h,violation_count,cumulative_violation_kwh`.
pub fn write_combined_csv(path: &Path, arms: &[(String, Summary)]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["arm", "controller", "m", "seed", "mean_cost_chf_per_h", "violation_count", "cumulative_violation_kwh"])
        .map_err(|e| io_err(path, e))?;
    for (arm, s) in arms {
        w.write_record([
            arm.clone(),
            s.controller.clone(),
            s.m.to_string(),
            s.sampling_seed.to_string(),
            s.mean_cost_chf_per_h.to_string(),
            s.violation_count.to_string(),
            s.cumulative_violation_kwh.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
