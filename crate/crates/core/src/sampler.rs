//! Recursive multi-step scenario sampling from one-step GP predictors.
//!
//! Each scenario runs its own electricity and heat chains. At every step the
//! feature vector is encoded from the trailing 168 h window made of real
//! history and the scenario's own earlier draws, one Gaussian draw is taken
//! from the one-step predictive distribution and appended to the window.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::forecast::features::{encode_from_window, FeatureVector, ModelKind, WINDOW_HOURS};
use crate::forecast::{DemandHistory, ForecastError, GpModel};
use crate::timeutil::{format_timestamp, from_hour_index};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of scenarios.
    pub m: usize,
    /// Horizon length in hours.
    pub horizon: usize,
    pub seed: u64,
    /// Pair scenarios `2j`, `2j+1` on mirrored normal draws.
    #[serde(default)]
    pub antithetic: bool,
    /// Sample observations (latent variance plus noise) rather than the latent mean function.
    #[serde(default = "default_true")]
    pub include_noise: bool,
    /// Multiplier on the predictive variance; 0 gives the recursive-mean path.
    #[serde(default = "default_one")]
    pub variance_scale: f64,
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { m: 10, horizon: 24, seed: 0, antithetic: false, include_noise: true, variance_scale: 1.0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.m == 0 || self.horizon == 0 {
            return Err(ForecastError::InvalidHyperparameters("sampler needs M >= 1 and T >= 1".into()));
        }
        if !(self.variance_scale >= 0.0 && self.variance_scale.is_finite()) {
            return Err(ForecastError::InvalidHyperparameters("variance_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Hourly weather over the horizon, taken as exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherForecast {
    pub temp: Vec<f64>,
    pub irradiance: Vec<f64>,
}

impl WeatherForecast {
    /// Weather of hours `[start_hour, start_hour + horizon)` read from a history.
    pub fn from_history(history: &DemandHistory, start_hour: i64, horizon: usize) -> Result<Self, ForecastError> {
        let k = history.index_of_hour(start_hour);
        match k {
            Some(k) if k + horizon <= history.len() => Ok(Self {
                temp: history.temp[k..k + horizon].to_vec(),
                irradiance: history.irradiance[k..k + horizon].to_vec(),
            }),
            _ => Err(ForecastError::InsufficientHistory(format!(
                "weather for {} .. +{horizon} h not in history",
                format_timestamp(from_hour_index(start_hour))
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub scenario: usize,
    pub load_e: Vec<f64>,
    pub load_h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<TrajectorySample>,
    /// Draws that came out negative and were set to 0.
    pub clipped: usize,
    pub total_draws: usize,
}

/// The pair of one-step predictors a sampler queries.
#[derive(Clone, Copy)]
pub struct Predictors<'a> {
    pub electric: &'a GpModel,
    pub heat: &'a GpModel,
}

impl<'a> Predictors<'a> {
    fn get(&self, kind: ModelKind) -> &'a GpModel {
        match kind {
            ModelKind::Electric => self.electric,
            ModelKind::Heat => self.heat,
        }
    }
}

fn trailing_window(
    kind: ModelKind,
    history: &DemandHistory,
    start_hour: i64,
) -> Result<Vec<f64>, ForecastError> {
    let first = start_hour - WINDOW_HOURS as i64;
    match (history.index_of_hour(first), history.index_of_hour(start_hour - 1)) {
        (Some(a), Some(b)) => Ok(kind.series(history)[a..=b].to_vec()),
        _ => Err(ForecastError::InsufficientHistory(format!(
            "history must cover {} .. {}",
            format_timestamp(from_hour_index(first)),
            format_timestamp(from_hour_index(start_hour - 1))
        ))),
    }
}

/// Seed for the substream of one chain of one scenario.
fn substream_seed(seed: u64, stream: usize, kind: ModelKind) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ match kind {
            ModelKind::Electric => 0x0123_4567_89AB_CDEF,
            ModelKind::Heat => 0xFEDC_BA98_7654_3210,
        };
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base substream and sign of a stream under the antithetic pairing.
fn stream_of(cfg: &SamplerConfig, stream: usize) -> (usize, f64) {
    if cfg.antithetic {
        (stream / 2, if stream % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (stream, 1.0)
    }
}

struct Chain {
    values: Vec<f64>,
    clipped: usize,
}

/// Advances several chains of one kind in lockstep so each step needs a
/// single batched posterior evaluation. `rngs[c]` drives chain `c`; `None`
/// gives the recursive mean. Feature vectors of chain 0 go to `trace`.
#[allow(clippy::too_many_arguments)]
fn run_chains(
    kind: ModelKind,
    model: &GpModel,
    history: &DemandHistory,
    start_hour: i64,
    weather: &WeatherForecast,
    cfg: &SamplerConfig,
    mut rngs: Vec<Option<(ChaCha8Rng, f64)>>,
    mut trace: Option<&mut Vec<FeatureVector>>,
) -> Result<Vec<Chain>, ForecastError> {
    let window = trailing_window(kind, history, start_hour)?;
    let mut bufs: Vec<Vec<f64>> = rngs
        .iter()
        .map(|_| {
            let mut b = Vec::with_capacity(WINDOW_HOURS + cfg.horizon);
            b.extend_from_slice(&window);
            b
        })
        .collect();
    let mut clipped = vec![0; rngs.len()];
    for s in 0..cfg.horizon {
        let t = from_hour_index(start_hour + s as i64);
        let workday = history.is_workday(t);
        let mut features = Vec::with_capacity(bufs.len());
        for buf in &bufs {
            features.push(encode_from_window(
                kind,
                t,
                workday,
                weather.temp[s],
                weather.irradiance[s],
                &buf[s..s + WINDOW_HOURS],
            )?);
        }
        let xs: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
        let moments = model.posterior_batch(&xs)?;
        let noise = if cfg.include_noise { model.noise_variance_units() } else { 0.0 };
        for (c, (mean, var)) in moments.into_iter().enumerate() {
            let mut draw = mean;
            if let Some((rng, sign)) = rngs[c].as_mut() {
                let e: f64 = StandardNormal.sample(rng);
                draw += *sign * e * (cfg.variance_scale * (var + noise)).sqrt();
            }
            if draw < 0.0 {
                clipped[c] += 1;
                draw = 0.0;
            }
            bufs[c].push(draw);
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(features.swap_remove(0));
        }
    }
    Ok(bufs
        .into_iter()
        .zip(clipped)
        .map(|(mut b, clipped)| Chain { values: b.split_off(WINDOW_HOURS), clipped })
        .collect())
}

fn check_inputs(weather: &WeatherForecast, cfg: &SamplerConfig) -> Result<(), ForecastError> {
    cfg.validate()?;
    if weather.temp.len() < cfg.horizon || weather.irradiance.len() < cfg.horizon {
        return Err(ForecastError::InsufficientHistory(format!(
            "weather forecast covers {} of {} steps",
            weather.temp.len().min(weather.irradiance.len()),
            cfg.horizon
        )));
    }
    Ok(())
}

/// One scenario drawn from substream `stream`. Feature vectors of each step
/// are appended to `trace` (electric then heat) when given.
pub fn sample_scenario(
    models: Predictors<'_>,
    history: &DemandHistory,
    start_hour: i64,
    weather: &WeatherForecast,
    cfg: &SamplerConfig,
    scenario: usize,
    stream: usize,
    mut trace: Option<&mut Vec<FeatureVector>>,
) -> Result<(TrajectorySample, usize), ForecastError> {
    check_inputs(weather, cfg)?;
    let (base, sign) = stream_of(cfg, stream);
    let mut out = [Vec::new(), Vec::new()];
    let mut clipped = 0;
    for (slot, kind) in [ModelKind::Electric, ModelKind::Heat].into_iter().enumerate() {
        let rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, base, kind));
        let chain = run_chains(
            kind,
            models.get(kind),
            history,
            start_hour,
            weather,
            cfg,
            vec![Some((rng, sign))],
            trace.as_deref_mut(),
        )?
        .remove(0);
        clipped += chain.clipped;
        out[slot] = chain.values;
    }
    let [load_e, load_h] = out;
    Ok((TrajectorySample { scenario, load_e, load_h }, clipped))
}

/// `cfg.m` independent scenarios starting at absolute hour `start_hour`.
pub fn sample_trajectories(
    models: Predictors<'_>,
    history: &DemandHistory,
    start_hour: i64,
    weather: &WeatherForecast,
    cfg: &SamplerConfig,
) -> Result<SampleSet, ForecastError> {
    check_inputs(weather, cfg)?;
    let mut per_kind = Vec::with_capacity(2);
    for kind in [ModelKind::Electric, ModelKind::Heat] {
        let rngs = (0..cfg.m)
            .map(|i| {
                let (base, sign) = stream_of(cfg, i);
                Some((ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, base, kind)), sign))
            })
            .collect();
        per_kind.push(run_chains(kind, models.get(kind), history, start_hour, weather, cfg, rngs, None)?);
    }
    let heat = per_kind.pop().expect("heat chains");
    let elec = per_kind.pop().expect("electric chains");
    let mut clipped = 0;
    let samples: Vec<TrajectorySample> = elec
        .into_iter()
        .zip(heat)
        .enumerate()
        .map(|(i, (e, h))| {
            clipped += e.clipped + h.clipped;
            TrajectorySample { scenario: i, load_e: e.values, load_h: h.values }
        })
        .collect();
    if clipped > 0 {
        log::debug!("{clipped} negative demand draws clipped to 0");
    }
    Ok(SampleSet { samples, clipped, total_draws: 2 * cfg.m * cfg.horizon })
}

/// Recursive mean forecast: every draw replaced by the predictive mean.
pub fn mean_trajectory(
    models: Predictors<'_>,
    history: &DemandHistory,
    start_hour: i64,
    weather: &WeatherForecast,
    horizon: usize,
) -> Result<TrajectorySample, ForecastError> {
    let cfg = SamplerConfig { m: 1, horizon, ..Default::default() };
    check_inputs(weather, &cfg)?;
    let e = run_chains(ModelKind::Electric, models.electric, history, start_hour, weather, &cfg, vec![None], None)?
        .remove(0);
    let h = run_chains(ModelKind::Heat, models.heat, history, start_hour, weather, &cfg, vec![None], None)?.remove(0);
    Ok(TrajectorySample { scenario: 0, load_e: e.values, load_h: h.values })
}

/// CSV with columns `scenario,step,L_e_kwh,L_h_kwh`.
pub fn write_trajectories_csv(path: &Path, samples: &[TrajectorySample]) -> Result<(), ForecastError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ForecastError::Io(e.to_string()))?;
    w.write_record(["scenario", "step", "L_e_kwh", "L_h_kwh"]).map_err(|e| ForecastError::Io(e.to_string()))?;
    for s in samples {
        for k in 0..s.load_e.len() {
            w.write_record([
                s.scenario.to_string(),
                k.to_string(),
                s.load_e[k].to_string(),
                s.load_h[k].to_string(),
            ])
            .map_err(|e| ForecastError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| ForecastError::Io(e.to_string()))
}

/// Reads the format of [`write_trajectories_csv`]; rows may come in any order.
pub fn read_trajectories_csv(path: &Path) -> Result<Vec<TrajectorySample>, ForecastError> {
    #[derive(Deserialize)]
    struct Row {
        scenario: usize,
        step: usize,
        #[serde(rename = "L_e_kwh")]
        load_e: f64,
        #[serde(rename = "L_h_kwh")]
        load_h: f64,
    }
    let io = |e: csv::Error| ForecastError::Io(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let mut by_scenario: std::collections::BTreeMap<usize, Vec<(usize, f64, f64)>> = Default::default();
    for row in rdr.deserialize::<Row>() {
        let r = row.map_err(io)?;
        by_scenario.entry(r.scenario).or_default().push((r.step, r.load_e, r.load_h));
    }
    let mut out = Vec::with_capacity(by_scenario.len());
    for (scenario, mut rows) in by_scenario {
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(ForecastError::Format(format!("scenario {scenario} has missing or repeated steps")));
        }
        out.push(TrajectorySample {
            scenario,
            load_e: rows.iter().map(|r| r.1).collect(),
            load_h: rows.iter().map(|r| r.2).collect(),
        });
    }
    Ok(out)
}
