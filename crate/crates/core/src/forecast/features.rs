use std::f64::consts::TAU;
use std::ops::Range;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{DemandHistory, ForecastError};
use crate::timeutil::{format_timestamp, hour_index};

/// Length of the trailing window used for lags and quantiles.
pub const WINDOW_HOURS: usize = 168;

const YEAR_HOURS: f64 = 365.25 * 24.0;
const MONTH_HOURS: f64 = YEAR_HOURS / 12.0;
const WEEK_HOURS: f64 = 168.0;

/// Percentiles of the quantile block.
pub const QUANTILE_LEVELS: [f64; 3] = [5.0, 50.0, 95.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Electric,
    Heat,
}

impl ModelKind {
    pub fn lags(self) -> usize {
        match self {
            ModelKind::Electric => 6,
            ModelKind::Heat => 12,
        }
    }

    pub fn layout(self) -> FeatureLayout {
        FeatureLayout::new(self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Electric => "electric",
            ModelKind::Heat => "heat",
        }
    }

    /// Demand series of this kind in a history.
    pub fn series(self, h: &DemandHistory) -> &[f64] {
        match self {
            ModelKind::Electric => &h.load_e,
            ModelKind::Heat => &h.load_h,
        }
    }
}

/// Index map of a feature vector.
///
/// Order: six sin/cos values (year, month, week), workday flag, ambient
/// temperature, irradiance (heat only), lags (`lag 1` first), quantiles.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayout {
    pub kind: ModelKind,
    pub time: Range<usize>,
    pub workday: usize,
    pub temp: usize,
    pub irradiance: Option<usize>,
    pub lags: Range<usize>,
    pub quantiles: Range<usize>,
    pub dim: usize,
}

impl FeatureLayout {
    pub fn new(kind: ModelKind) -> Self {
        let irradiance = (kind == ModelKind::Heat).then_some(8);
        let lag_start = if irradiance.is_some() { 9 } else { 8 };
        let lags = lag_start..lag_start + kind.lags();
        let quantiles = lags.end..lags.end + 3;
        let dim = quantiles.end;
        Self { kind, time: 0..6, workday: 6, temp: 7, irradiance, lags, quantiles, dim }
    }

    /// Default linear-kernel inputs: temperature, irradiance and lags.
    pub fn default_linear_dims(&self) -> Vec<usize> {
        let mut d = vec![self.temp];
        d.extend(self.irradiance);
        d.extend(self.lags.clone());
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: ModelKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn layout(&self) -> FeatureLayout {
        self.kind.layout()
    }

    pub fn time_encoding(&self) -> &[f64] {
        &self.values[0..6]
    }

    pub fn lag_block(&self) -> &[f64] {
        &self.values[self.layout().lags]
    }

    pub fn quantile_block(&self) -> &[f64] {
        &self.values[self.layout().quantiles]
    }
}

/// Sin/cos pairs for yearly, monthly and weekly periods at an absolute hour.
pub fn time_encoding(hour: i64) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (j, period) in [YEAR_HOURS, MONTH_HOURS, WEEK_HOURS].into_iter().enumerate() {
        let phase = (hour as f64).rem_euclid(period) / period;
        let (s, c) = (TAU * phase).sin_cos();
        out[2 * j] = s;
        out[2 * j + 1] = c;
    }
    out
}

/// Nearest-rank percentile: the value at rank `ceil(p/100·n)` of the sorted data.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Builds a feature vector from the trailing demand window (oldest first,
/// newest is the hour just before `t`) and the weather at `t`.
pub fn encode_from_window(
    kind: ModelKind,
    t: NaiveDateTime,
    workday: bool,
    temp: f64,
    irradiance: f64,
    window: &[f64],
) -> Result<FeatureVector, ForecastError> {
    if window.len() != WINDOW_HOURS {
        return Err(ForecastError::InsufficientHistory(format!(
            "need {WINDOW_HOURS} trailing hours before {}, got {}",
            format_timestamp(t),
            window.len()
        )));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidHistory("non-finite demand in trailing window".into()));
    }
    let layout = kind.layout();
    let mut values = Vec::with_capacity(layout.dim);
    values.extend_from_slice(&time_encoding(hour_index(t)));
    values.push(if workday { 1.0 } else { 0.0 });
    values.push(temp);
    if layout.irradiance.is_some() {
        values.push(irradiance);
    }
    values.extend(window.iter().rev().take(kind.lags()));
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    values.extend(QUANTILE_LEVELS.iter().map(|&p| nearest_rank(&sorted, p)));
    debug_assert_eq!(values.len(), layout.dim);
    Ok(FeatureVector { kind, values })
}

/// Features for predicting demand of hour index `k` of `history`.
pub fn encode(kind: ModelKind, k: usize, history: &DemandHistory) -> Result<FeatureVector, ForecastError> {
    if k < WINDOW_HOURS || k >= history.len() {
        let first = k as i64 - WINDOW_HOURS as i64;
        return Err(ForecastError::InsufficientHistory(format!(
            "hours {}..={} (relative to history start) must be present, history has 0..{}",
            first,
            k,
            history.len()
        )));
    }
    let t = history.timestamp(k);
    encode_from_window(
        kind,
        t,
        history.is_workday(t),
        history.temp[k],
        history.irradiance[k],
        &kind.series(history)[k - WINDOW_HOURS..k],
    )
}

pub fn encode_electric(k: usize, history: &DemandHistory) -> Result<FeatureVector, ForecastError> {
    encode(ModelKind::Electric, k, history)
}

pub fn encode_heat(k: usize, history: &DemandHistory) -> Result<FeatureVector, ForecastError> {
    encode(ModelKind::Heat, k, history)
}
