use serde::{Deserialize, Serialize};

use super::HubError;

/// Converter and storage parameters. Powers in kW, energies in kWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubParameters {
    /// Electrical output of CHP vertices A..D.
    pub chp_p: [f64; 4],
    /// Thermal output of CHP vertices A..D.
    pub chp_q: [f64; 4],
    pub eta_chp: f64,
    pub p_chp_min: f64,
    pub p_chp_max: f64,
    pub q_chp_min: f64,
    pub q_chp_max: f64,
    pub cop: f64,
    pub q_hp_min: f64,
    pub q_hp_max: f64,
    pub eta_gb: f64,
    pub q_gb_min: f64,
    pub q_gb_max: f64,
    pub eta_pv: f64,
    /// PV area in m².
    pub a_pv: f64,
    pub p_pv_min: f64,
    pub p_pv_max: f64,
    pub eta_es: f64,
    pub gamma_es: f64,
    pub es_min: f64,
    pub es_max: f64,
    pub eta_ts: f64,
    pub gamma_ts: f64,
    pub ts_min: f64,
    pub ts_max: f64,
    /// Step length in hours.
    pub dt: f64,
}

impl HubParameters {
    /// Reference hub: CHP polytope, heat pump, boiler, PV field and two
    /// storages as used throughout the examples and tests.
    pub fn reference() -> Self {
        let chp_p = [120.0, 106.0, 252.0, 305.0];
        let chp_q = [0.0, 171.0, 408.0, 0.0];
        Self {
            chp_p,
            chp_q,
            eta_chp: 0.36,
            // the polytope itself bounds the CHP; the box is its extent
            p_chp_min: 106.0,
            p_chp_max: 305.0,
            q_chp_min: 0.0,
            q_chp_max: 408.0,
            cop: 4.5,
            q_hp_min: 0.0,
            q_hp_max: 120.0,
            eta_gb: 0.78,
            q_gb_min: 0.0,
            q_gb_max: 120.0,
            eta_pv: 0.15,
            a_pv: 3000.0,
            p_pv_min: 0.0,
            p_pv_max: 400.0,
            eta_es: 0.95,
            gamma_es: 0.999,
            es_min: 40.0,
            es_max: 250.0,
            eta_ts: 0.99,
            gamma_ts: 0.992,
            ts_min: 0.0,
            ts_max: 4800.0,
            dt: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), HubError> {
        let bad = |msg: String| Err(HubError::InvalidParameter(msg));
        for (name, v) in [
            ("eta_chp", self.eta_chp),
            ("eta_gb", self.eta_gb),
            ("eta_pv", self.eta_pv),
            ("eta_es", self.eta_es),
            ("eta_ts", self.eta_ts),
            ("gamma_es", self.gamma_es),
            ("gamma_ts", self.gamma_ts),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1]"));
            }
        }
        if !(self.cop > 0.0) || !(self.a_pv > 0.0) || !(self.dt > 0.0) {
            return bad("cop, a_pv and dt must be strictly positive".into());
        }
        for (name, lo, hi) in [
            ("p_chp", self.p_chp_min, self.p_chp_max),
            ("q_chp", self.q_chp_min, self.q_chp_max),
            ("q_hp", self.q_hp_min, self.q_hp_max),
            ("q_gb", self.q_gb_min, self.q_gb_max),
            ("p_pv", self.p_pv_min, self.p_pv_max),
            ("es", self.es_min, self.es_max),
            ("ts", self.ts_min, self.ts_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} bounds [{lo}, {hi}] are not an interval"));
            }
        }
        for (j, &p) in self.chp_p.iter().enumerate() {
            if p < self.p_chp_min - 1e-9 || p > self.p_chp_max + 1e-9 {
                return bad(format!("CHP vertex {j} has P = {p} outside [p_chp_min, p_chp_max]"));
            }
        }
        if self.chp_q.iter().any(|q| *q < 0.0) {
            return bad("CHP vertex heat outputs must be nonnegative".into());
        }
        Ok(())
    }
}

/// Prices of one hour in CHF/kWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub buy: f64,
    pub sell: f64,
    pub gas: f64,
}

/// Hourly tariff schedule. A schedule with a single entry applies to every
/// hour; longer schedules start at `start_hour` (absolute hour index) and
/// hold their first/last value outside the covered range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tariffs {
    pub start_hour: i64,
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    pub gas: Vec<f64>,
}

impl Tariffs {
    /// Illustrative defaults: 0.20 buy, 0.06 sell, 0.11 gas (CHF/kWh).
    pub fn illustrative() -> Self {
        Self::constant(0.20, 0.06, 0.11)
    }

    pub fn constant(buy: f64, sell: f64, gas: f64) -> Self {
        Self { start_hour: 0, buy: vec![buy], sell: vec![sell], gas: vec![gas] }
    }

    pub fn at(&self, hour: i64) -> Prices {
        let idx = if self.buy.len() == 1 {
            0
        } else {
            (hour - self.start_hour).clamp(0, self.buy.len() as i64 - 1) as usize
        };
        Prices { buy: self.buy[idx], sell: self.sell[idx], gas: self.gas[idx] }
    }

    pub fn max_buy(&self) -> f64 {
        self.buy.iter().cloned().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), HubError> {
        let n = self.buy.len();
        if n == 0 || self.sell.len() != n || self.gas.len() != n {
            return Err(HubError::InvalidTariff("price series must be nonempty and of equal length".into()));
        }
        for k in 0..n {
            let (b, s, g) = (self.buy[k], self.sell[k], self.gas[k]);
            if !(b >= 0.0 && s >= 0.0 && g >= 0.0) || !(b.is_finite() && s.is_finite() && g.is_finite()) {
                return Err(HubError::InvalidTariff(format!("negative or non-finite price at entry {k}")));
            }
            if s > b {
                return Err(HubError::InvalidTariff(format!(
                    "sell price {s} exceeds buy price {b} at entry {k}"
                )));
            }
        }
        Ok(())
    }
}
