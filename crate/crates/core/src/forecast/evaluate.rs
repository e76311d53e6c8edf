use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::features::nearest_rank;
use super::{encode, DemandHistory, ForecastError, ModelKind, ModelSet, Season};

/// One-step prediction against the realized value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepPoint {
    pub hour: i64,
    pub mean: f64,
    /// Predictive variance (latent plus noise).
    pub variance: f64,
    pub actual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub kind: ModelKind,
    pub count: usize,
    /// Nearest-rank quartiles of `(mean - actual) / actual`, hours with
    /// `actual > 1` only.
    pub rel_q25: f64,
    pub rel_q50: f64,
    pub rel_q75: f64,
    /// Share of actuals inside the central 90% predictive interval.
    pub coverage90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepReport {
    pub points: BTreeMap<ModelKind, Vec<OneStepPoint>>,
    pub stats: Vec<ResidualStats>,
}

pub fn coverage(points: &[OneStepPoint], level: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + level / 2.0);
    let inside = points.iter().filter(|p| (p.actual - p.mean).abs() <= z * p.variance.sqrt()).count();
    inside as f64 / points.len() as f64
}

pub fn residual_stats(kind: ModelKind, points: &[OneStepPoint]) -> ResidualStats {
    let mut rel: Vec<f64> = points.iter().filter(|p| p.actual > 1.0).map(|p| (p.mean - p.actual) / p.actual).collect();
    rel.sort_by(f64::total_cmp);
    let q = |p: f64| if rel.is_empty() { f64::NAN } else { nearest_rank(&rel, p) };
    ResidualStats {
        kind,
        count: points.len(),
        rel_q25: q(25.0),
        rel_q50: q(50.0),
        rel_q75: q(75.0),
        coverage90: coverage(points, 0.9),
    }
}

/// One-step predictions for hours `[from_hour, to_hour)` from the real
/// history, re-conditioning the models every `refresh_hours`.
pub fn evaluate_one_step(
    models: &ModelSet,
    data: &DemandHistory,
    from_hour: i64,
    to_hour: i64,
    refresh_hours: usize,
    window_hours: usize,
) -> Result<OneStepReport, ForecastError> {
    if to_hour <= from_hour || refresh_hours == 0 {
        return Err(ForecastError::InvalidHistory("empty evaluation range".into()));
    }
    let mut models = models.clone();
    let mut refreshed: BTreeMap<Season, i64> = BTreeMap::new();
    let mut points: BTreeMap<ModelKind, Vec<OneStepPoint>> = BTreeMap::new();
    for hour in from_hour..to_hour {
        let k = data
            .index_of_hour(hour)
            .ok_or_else(|| ForecastError::InsufficientHistory(format!("hour {hour} outside the data")))?;
        let season = models.season_for(data.timestamp(k).date());
        let epoch = (hour - from_hour) / refresh_hours as i64;
        if refreshed.get(&season) != Some(&epoch) {
            models.refresh_season(season, data, hour, window_hours)?;
            refreshed.insert(season, epoch);
        }
        for kind in [ModelKind::Electric, ModelKind::Heat] {
            let fv = encode(kind, k, data)?;
            let (mean, variance) = models.get(kind, season)?.predictive(&fv.values)?;
            points.entry(kind).or_default().push(OneStepPoint { hour, mean, variance, actual: kind.series(data)[k] });
        }
    }
    let stats = points.iter().map(|(k, p)| residual_stats(*k, p)).collect();
    Ok(OneStepReport { points, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_counts_inside() {
        let pts: Vec<OneStepPoint> = (0..10)
            .map(|i| OneStepPoint { hour: i, mean: 0.0, variance: 1.0, actual: if i < 9 { 1.0 } else { 3.0 } })
            .collect();
        assert!((coverage(&pts, 0.9) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn quartiles_match_sorted_oracle() {
        let pts: Vec<OneStepPoint> = [10.0, 12.0, 8.0, 11.0, 9.0, 10.5, 9.5, 13.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| OneStepPoint { hour: i as i64, mean: m, variance: 1.0, actual: 10.0 })
            .collect();
        let s = residual_stats(ModelKind::Heat, &pts);
        // sorted relative errors: -.2 -.1 -.05 0 .05 .1 .2 .3 → ranks 2, 4, 6
        assert!((s.rel_q25 + 0.1).abs() < 1e-12);
        assert!(s.rel_q50.abs() < 1e-12);
        assert!((s.rel_q75 - 0.1).abs() < 1e-12);
    }
}
