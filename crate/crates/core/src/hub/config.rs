//! Hub configuration files.
//!
//! ```toml
//! schema_version = 1
//! [hub]
//! chp_p = [120.0, 106.0, 252.0, 305.0]   # kW
//! # ... every HubParameters key, see configs/hub.toml
//! [tariffs]
//! price_buy = 0.20                        # CHF/kWh
//! price_sell = 0.06
//! price_gas = 0.11
//! # or: csv = "prices.csv"  (timestamp,price_buy,price_sell,price_gas)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HubError, HubParameters, Tariffs};
use crate::timeutil::{hour_index, parse_timestamp};

pub const HUB_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TariffSpec {
    Constant { price_buy: f64, price_sell: f64, price_gas: f64 },
    Csv { csv: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubConfig {
    pub schema_version: u32,
    pub hub: HubParameters,
    pub tariffs: TariffSpec,
}

impl HubConfig {
    pub fn reference() -> Self {
        Self {
            schema_version: HUB_SCHEMA_VERSION,
            hub: HubParameters::reference(),
            tariffs: TariffSpec::Constant { price_buy: 0.20, price_sell: 0.06, price_gas: 0.11 },
        }
    }

    /// Resolve the tariff spec; relative CSV paths are taken from `base_dir`.
    pub fn tariffs(&self, base_dir: &Path) -> Result<Tariffs, HubError> {
        let t = match &self.tariffs {
            TariffSpec::Constant { price_buy, price_sell, price_gas } => {
                Tariffs::constant(*price_buy, *price_sell, *price_gas)
            }
            TariffSpec::Csv { csv } => load_tariff_csv(&base_dir.join(csv))?,
        };
        t.validate()?;
        Ok(t)
    }
}

pub fn load_hub_config(path: &Path) -> Result<HubConfig, HubError> {
    let text = std::fs::read_to_string(path)?;
    let cfg: HubConfig = toml::from_str(&text).map_err(|e| HubError::Config(format!("{}: {}", path.display(), e)))?;
    if cfg.schema_version != HUB_SCHEMA_VERSION {
        return Err(HubError::Config(format!(
            "unsupported schema_version {} (expected {HUB_SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    cfg.hub.validate()?;
    Ok(cfg)
}

/// Hourly tariffs from `timestamp,price_buy,price_sell,price_gas`.
pub fn load_tariff_csv(path: &Path) -> Result<Tariffs, HubError> {
    #[derive(Deserialize)]
    struct Row {
        timestamp: String,
        price_buy: f64,
        price_sell: f64,
        price_gas: f64,
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| HubError::Config(e.to_string()))?;
    let mut t = Tariffs { start_hour: 0, buy: Vec::new(), sell: Vec::new(), gas: Vec::new() };
    let mut prev: Option<i64> = None;
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| HubError::Config(format!("{}: {e}", path.display())))?;
        let ts = parse_timestamp(&row.timestamp)
            .ok_or_else(|| HubError::Config(format!("bad timestamp '{}' on row {}", row.timestamp, line + 1)))?;
        let h = hour_index(ts);
        match prev {
            None => t.start_hour = h,
            Some(p) if h != p + 1 => {
                return Err(HubError::InvalidTariff(format!("tariff rows must be consecutive hours (row {})", line + 1)))
            }
            _ => {}
        }
        prev = Some(h);
        t.buy.push(row.price_buy);
        t.sell.push(row.price_sell);
        t.gas.push(row.price_gas);
    }
    t.validate()?;
    Ok(t)
}
