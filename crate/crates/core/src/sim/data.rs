use std::collections::BTreeSet;
use std::f64::consts::PI;

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::forecast::DemandHistory;
use crate::timeutil::{from_hour_index, hour_index};

const YEAR_DAYS: f64 = 365.25;

/// Parameters of the synthetic demand and weather generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataConfig {
    pub start: NaiveDateTime,
    pub hours: usize,
    pub seed: u64,
    /// Mean electric load (kWh per hour).
    pub base_e: f64,
    /// Relative amplitude of the daily electric cycle (peak at 15:00).
    pub daily_amp_e: f64,
    /// Relative amplitude of the weekly electric cycle.
    pub weekly_amp_e: f64,
    /// Electric load multiplier on weekends.
    pub weekend_factor: f64,
    pub base_h: f64,
    /// Heat load per kelvin below `t_ref` (kWh/K).
    pub temp_sensitivity_h: f64,
    pub t_ref: f64,
    /// Absolute amplitude of the daily heat cycle, peaking at 07:00 (kWh).
    pub daily_amp_h: f64,
    /// Innovation std of the AR(1) load noise (kWh).
    pub noise_std_e: f64,
    pub noise_std_h: f64,
    /// AR(1) coefficient of the load noise, in [0, 1).
    pub noise_ar: f64,
    /// Annual mean temperature (°C).
    pub temp_mean: f64,
    /// Annual half-swing; coldest around mid January.
    pub temp_annual_amp: f64,
    /// Daily half-swing; warmest at 15:00.
    pub temp_daily_amp: f64,
    pub temp_noise_std: f64,
    /// Clear-sky irradiance at solar noon in midsummer (kW/m²).
    pub irradiance_peak: f64,
}

impl Default for SyntheticDataConfig {
    fn default() -> Self {
        Self {
            start: chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            hours: 365 * 24,
            seed: 0,
            base_e: 200.0,
            daily_amp_e: 0.25,
            weekly_amp_e: 0.05,
            weekend_factor: 0.8,
            base_h: 120.0,
            temp_sensitivity_h: 12.0,
            t_ref: 16.0,
            daily_amp_h: 50.0,
            noise_std_e: 10.0,
            noise_std_h: 15.0,
            noise_ar: 0.5,
            temp_mean: 9.0,
            temp_annual_amp: 9.0,
            temp_daily_amp: 4.0,
            temp_noise_std: 0.5,
            irradiance_peak: 0.8,
        }
    }
}

impl SyntheticDataConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            ("base_e", self.base_e),
            ("base_h", self.base_h),
            ("temp_sensitivity_h", self.temp_sensitivity_h),
            ("noise_std_e", self.noise_std_e),
            ("noise_std_h", self.noise_std_h),
            ("temp_noise_std", self.temp_noise_std),
            ("irradiance_peak", self.irradiance_peak),
            ("weekend_factor", self.weekend_factor),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Input(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return Err(SimError::Input(format!("noise_ar must lie in [0, 1), got {}", self.noise_ar)));
        }
        if self.hours == 0 {
            return Err(SimError::Input("hours must be positive".into()));
        }
        Ok(())
    }
}

fn day_of_year(t: NaiveDateTime) -> f64 {
    t.ordinal0() as f64 + t.hour() as f64 / 24.0
}

/// Clear-sky shape: a half sine between sunrise and sunset whose day length
/// and peak follow the season.
fn clear_sky(t: NaiveDateTime, peak: f64) -> f64 {
    let season = (2.0 * PI * (day_of_year(t) - 172.0) / YEAR_DAYS).cos();
    let day_len = 12.0 + 3.5 * season;
    let height = peak * (0.65 + 0.35 * season);
    let h = t.hour() as f64 + 0.5;
    let rise = 12.5 - day_len / 2.0;
    if h <= rise || h >= rise + day_len {
        0.0
    } else {
        height * (PI * (h - rise) / day_len).sin()
    }
}

/// Hourly synthetic record. Weekends are the only non-working days.
pub fn generate_synthetic_data(cfg: &SyntheticDataConfig) -> Result<DemandHistory, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let h0 = hour_index(cfg.start);
    let mut out = DemandHistory {
        start: from_hour_index(h0),
        load_e: Vec::with_capacity(cfg.hours),
        load_h: Vec::with_capacity(cfg.hours),
        temp: Vec::with_capacity(cfg.hours),
        irradiance: Vec::with_capacity(cfg.hours),
        holidays: BTreeSet::new(),
    };
    let innovation = (1.0 - cfg.noise_ar * cfg.noise_ar).sqrt();
    let (mut ne, mut nh) = (0.0, 0.0);
    for k in 0..cfg.hours {
        let t = from_hour_index(h0 + k as i64);
        let hour = t.hour() as f64;
        let how = (t.weekday().num_days_from_monday() * 24 + t.hour()) as f64;
        let workday = t.weekday().num_days_from_monday() < 5;

        let temp = cfg.temp_mean - cfg.temp_annual_amp * (2.0 * PI * (day_of_year(t) - 15.0) / YEAR_DAYS).cos()
            + cfg.temp_daily_amp * (2.0 * PI * (hour - 15.0) / 24.0).cos()
            + cfg.temp_noise_std * std_normal.sample(&mut rng);
        let irr = clear_sky(t, cfg.irradiance_peak);

        // stationary AR(1) noise with marginal std noise_std_*
        ne = cfg.noise_ar * ne + innovation * std_normal.sample(&mut rng);
        nh = cfg.noise_ar * nh + innovation * std_normal.sample(&mut rng);

        let shape_e = 1.0
            + cfg.daily_amp_e * (2.0 * PI * (hour - 15.0) / 24.0).cos()
            + cfg.weekly_amp_e * (2.0 * PI * how / 168.0).sin();
        let le = cfg.base_e * shape_e * if workday { 1.0 } else { cfg.weekend_factor } + cfg.noise_std_e * ne;
        let lh = cfg.base_h
            + cfg.temp_sensitivity_h * (cfg.t_ref - temp).max(0.0)
            + cfg.daily_amp_h * (2.0 * PI * (hour - 7.0) / 24.0).cos()
            + cfg.noise_std_h * nh;

        out.load_e.push(le.max(0.0));
        out.load_h.push(lh.max(0.0));
        out.temp.push(temp);
        out.irradiance.push(irr);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_without_noise_or_harmonics() {
        let cfg = SyntheticDataConfig {
            hours: 400,
            daily_amp_e: 0.0,
            weekly_amp_e: 0.0,
            weekend_factor: 1.0,
            noise_std_e: 0.0,
            ..Default::default()
        };
        let d = generate_synthetic_data(&cfg).unwrap();
        assert!(d.load_e.iter().all(|&v| v == cfg.base_e));
        d.validate().unwrap();
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticDataConfig { hours: 500, seed: 11, ..Default::default() };
        assert_eq!(generate_synthetic_data(&cfg).unwrap(), generate_synthetic_data(&cfg).unwrap());
        let other = SyntheticDataConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate_synthetic_data(&cfg).unwrap().load_h, generate_synthetic_data(&other).unwrap().load_h);
    }

    #[test]
    fn summer_heat_below_winter() {
        let d = generate_synthetic_data(&SyntheticDataConfig::default()).unwrap();
        let month_mean = |m: u32| {
            let v: Vec<f64> = (0..d.len()).filter(|&k| d.timestamp(k).month() == m).map(|k| d.load_h[k]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(month_mean(7) < month_mean(1));
        assert!(d.load_e.iter().chain(&d.load_h).all(|&v| v >= 0.0));
        let noon_june = d.index_of(chrono::NaiveDate::from_ymd_opt(2021, 6, 21).unwrap().and_hms_opt(12, 0, 0).unwrap());
        assert!(d.irradiance[noon_june.unwrap()] > 0.5);
        let night = d.index_of(chrono::NaiveDate::from_ymd_opt(2021, 6, 21).unwrap().and_hms_opt(1, 0, 0).unwrap());
        assert_eq!(d.irradiance[night.unwrap()], 0.0);
    }
}
