//! Energy-hub physics: converters, storages, power balances and costs.
//!
//! Storage flow naming follows the balance equations literally: the
//! "discharge" flow of a storage enters the hub's balance with a plus sign and
//! lowers the stored level by `flow/eta`, while "charge" leaves the balance
//! and raises the level by `eta·flow`.

mod config;
mod params;

pub use config::{load_hub_config, load_tariff_csv, HubConfig, TariffSpec};
pub use params::{HubParameters, Prices, Tariffs};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("invalid hub parameter: {0}")]
    InvalidParameter(String),
    #[error("CHP weights {0:?} are not on the unit simplex")]
    OffSimplex([f64; 4]),
    #[error("{0} must be nonnegative, got {1}")]
    Negative(&'static str, f64),
    #[error("invalid tariff: {0}")]
    InvalidTariff(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Storage levels at the start of hour `clock` (absolute hour index).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HubState {
    pub es_level: f64,
    pub ts_level: f64,
    pub clock: i64,
}

impl HubState {
    /// Electrical storage at its minimum, thermal storage half full.
    pub fn initial(params: &HubParameters, clock: i64) -> Self {
        Self { es_level: params.es_min, ts_level: 0.5 * (params.ts_min + params.ts_max), clock }
    }

    pub fn validate(&self, params: &HubParameters) -> Result<(), HubError> {
        let tol = 1e-6;
        if self.es_level < params.es_min - tol || self.es_level > params.es_max + tol {
            return Err(HubError::InvalidParameter(format!("ES level {} outside bounds", self.es_level)));
        }
        if self.ts_level < params.ts_min - tol || self.ts_level > params.ts_max + tol {
            return Err(HubError::InvalidParameter(format!("TS level {} outside bounds", self.ts_level)));
        }
        Ok(())
    }
}

/// Scenario-independent decisions for one hour (kW, or kWh for levels).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSetPoint {
    pub p_pv: f64,
    pub chp_weights: [f64; 4],
    pub p_chp: f64,
    pub q_chp: f64,
    pub f_chp: f64,
    pub p_hp: f64,
    pub q_hp: f64,
    pub q_gb: f64,
    pub f_gb: f64,
    /// Electrical storage flow into the hub balance.
    pub es_discharge: f64,
    /// Electrical storage flow out of the hub balance, into the storage.
    pub es_charge: f64,
    /// ES level at the end of the hour.
    pub es_level: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SetPoints {
    pub steps: Vec<StepSetPoint>,
}

/// Recourse decisions of one scenario for one hour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecourse {
    pub grid_buy: f64,
    pub grid_sell: f64,
    pub ts_discharge: f64,
    pub ts_charge: f64,
    /// TS level at the end of the hour.
    pub ts_level: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecourseVariables {
    pub steps: Vec<StepRecourse>,
}

/// CHP electrical output, heat output and fuel input for simplex weights
/// over the four operating vertices.
pub fn chp_output(weights: [f64; 4], params: &HubParameters) -> Result<(f64, f64, f64), HubError> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < -1e-9 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(HubError::OffSimplex(weights));
    }
    let p: f64 = weights.iter().zip(&params.chp_p).map(|(w, p)| w * p).sum();
    let q: f64 = weights.iter().zip(&params.chp_q).map(|(w, q)| w * q).sum();
    Ok((p, q, p / params.eta_chp))
}

/// Heat from the heat pump and the gas boiler.
pub fn hp_gb_output(p_hp: f64, f_gb: f64, params: &HubParameters) -> Result<(f64, f64), HubError> {
    if p_hp < 0.0 {
        return Err(HubError::Negative("heat pump input", p_hp));
    }
    if f_gb < 0.0 {
        return Err(HubError::Negative("boiler fuel input", f_gb));
    }
    Ok((params.cop * p_hp, params.eta_gb * f_gb))
}

/// Available PV power: the irradiance-driven output capped at the converter
/// maximum. Dispatch may curtail below this ceiling.
pub fn pv_output(irradiance: f64, params: &HubParameters) -> Result<f64, HubError> {
    if irradiance < 0.0 || irradiance.is_nan() {
        return Err(HubError::Negative("irradiance", irradiance));
    }
    Ok((params.eta_pv * irradiance * params.a_pv).min(params.p_pv_max))
}

/// One step of storage dynamics: `gamma·level + eta·charge·dt - discharge·dt/eta`.
pub fn storage_step(level: f64, discharge: f64, charge: f64, eta: f64, gamma: f64, dt: f64) -> f64 {
    gamma * level + eta * charge * dt - discharge * dt / eta
}

/// Supply minus demand for the electrical and thermal balances.
pub fn balance_residuals(sp: &StepSetPoint, rec: &StepRecourse, load_e: f64, load_h: f64) -> (f64, f64) {
    let supply_e = sp.p_pv + sp.p_chp - sp.p_hp + (rec.grid_buy - rec.grid_sell) + (sp.es_discharge - sp.es_charge);
    let supply_h = sp.q_gb + sp.q_chp + sp.q_hp + (rec.ts_discharge - rec.ts_charge);
    (supply_e - load_e, supply_h - load_h)
}

/// Cost of one hour in CHF: grid purchases minus sales plus gas.
pub fn stage_cost(sp: &StepSetPoint, rec: &StepRecourse, prices: Prices, dt: f64) -> f64 {
    (prices.buy * rec.grid_buy - prices.sell * rec.grid_sell + prices.gas * (sp.f_chp + sp.f_gb)) * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference() -> HubParameters {
        HubParameters::reference()
    }

    #[test]
    fn chp_vertex_and_mean() {
        let p = reference();
        let (pe, qh, f) = chp_output([1.0, 0.0, 0.0, 0.0], &p).unwrap();
        assert_eq!((pe, qh), (120.0, 0.0));
        assert_relative_eq!(f, 120.0 / 0.36);
        let (pe, qh, _) = chp_output([0.25; 4], &p).unwrap();
        assert_relative_eq!(pe, 195.75);
        assert_relative_eq!(qh, 144.75);
    }

    #[test]
    fn chp_rejects_off_simplex() {
        assert!(chp_output([0.5, 0.5, 0.1, 0.0], &reference()).is_err());
        assert!(chp_output([1.2, -0.2, 0.0, 0.0], &reference()).is_err());
    }

    #[test]
    fn heat_pump_and_boiler() {
        let p = reference();
        assert_eq!(hp_gb_output(0.0, 0.0, &p).unwrap(), (0.0, 0.0));
        let (q_hp, q_gb) = hp_gb_output(10.0, 100.0, &p).unwrap();
        assert_relative_eq!(q_hp, 45.0);
        assert_relative_eq!(q_gb, 78.0);
        assert!(hp_gb_output(-1.0, 0.0, &p).is_err());
    }

    #[test]
    fn pv_is_capped() {
        let p = reference();
        assert_eq!(pv_output(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(pv_output(0.5, &p).unwrap(), 225.0);
        // uncapped value 450 kW exceeds the 400 kW converter limit
        let uncapped = p.eta_pv * 1.0 * p.a_pv;
        assert_relative_eq!(uncapped, 450.0);
        assert_relative_eq!(pv_output(1.0, &p).unwrap(), uncapped.min(p.p_pv_max));
        assert!(pv_output(-0.1, &p).is_err());
    }

    #[test]
    fn storage_examples() {
        assert_relative_eq!(storage_step(100.0, 0.0, 0.0, 0.99, 0.992, 1.0), 99.2);
        assert_relative_eq!(storage_step(0.0, 0.0, 10.0, 1.0, 1.0, 1.0), 10.0);
        assert_relative_eq!(storage_step(50.0, 10.0, 0.0, 0.95, 0.999, 1.0), 50.0 * 0.999 - 10.0 / 0.95);
        assert_relative_eq!(storage_step(50.0, 10.0, 0.0, 0.95, 0.999, 1.0), 39.423684210526, epsilon = 1e-9);
    }

    #[test]
    fn balance_examples() {
        let zero = StepSetPoint::default();
        assert_eq!(balance_residuals(&zero, &StepRecourse::default(), 0.0, 0.0), (0.0, 0.0));
        let sp = StepSetPoint { p_pv: 100.0, ..Default::default() };
        let rec = StepRecourse { grid_buy: 50.0, ..Default::default() };
        assert_eq!(balance_residuals(&sp, &rec, 150.0, 0.0).0, 0.0);
    }

    #[test]
    fn stage_cost_examples() {
        let prices = Prices { buy: 0.2, sell: 0.06, gas: 0.11 };
        assert_eq!(stage_cost(&StepSetPoint::default(), &StepRecourse::default(), prices, 1.0), 0.0);
        let rec = StepRecourse { grid_buy: 10.0, ..Default::default() };
        assert_relative_eq!(stage_cost(&StepSetPoint::default(), &rec, prices, 1.0), 2.0);
    }

    proptest! {
        #[test]
        fn storage_monotone_in_flows(
            level in 0.0..5000.0f64, d in 0.0..500.0f64, c in 0.0..500.0f64,
            bump in 0.01..50.0f64, eta in 0.5..1.0f64, gamma in 0.5..1.0f64,
        ) {
            let base = storage_step(level, d, c, eta, gamma, 1.0);
            prop_assert!(storage_step(level, d, c + bump, eta, gamma, 1.0) > base);
            prop_assert!(storage_step(level, d + bump, c, eta, gamma, 1.0) < base);
        }

        #[test]
        fn lossless_storage_conserves_energy(level in 0.0..5000.0f64, d in 0.0..500.0f64, c in 0.0..500.0f64) {
            let next = storage_step(level, d, c, 1.0, 1.0, 1.0);
            prop_assert!(((next - level) - (c - d)).abs() < 1e-9);
        }
    }
}
