//! Run configuration shared by every subcommand.
//!
//! ```toml
//! schema_version = 1
//! [hub]          # every HubParameters key; omitted section = reference hub
//! [tariffs]      # price_buy/price_sell/price_gas, or csv = "prices.csv"
//! [data]         # synthetic generator (gen-data)
//! [train]        # GP fitting
//! [mpc]          # scenario program
//! [sampler]      # trajectory sampling
//! [simulate]     # predictor refresh and conditioning window
//! [guarantees]   # certificate
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::forecast::{FitOptions, SeasonTable};
use crate::guarantees::GuaranteeConfig;
use crate::hub::{HubConfig, HubParameters, TariffSpec, Tariffs};
use crate::mpc::SpConfig;
use crate::sampler::SamplerConfig;
use crate::sim::SyntheticDataConfig;

pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub refresh_hours: usize,
    pub window_hours: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { refresh_hours: 24, window_hours: 21 * 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub hub: Option<HubParameters>,
    #[serde(default)]
    pub tariffs: Option<TariffSpec>,
    #[serde(default)]
    pub seasons: Option<SeasonTable>,
    #[serde(default)]
    pub data: Option<SyntheticDataConfig>,
    #[serde(default)]
    pub train: Option<FitOptions>,
    #[serde(default)]
    pub mpc: Option<SpConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub guarantees: Option<GuaranteeConfig>,
}

/// A parsed config with every optional section filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub raw: RunConfig,
    pub params: HubParameters,
    pub tariffs: Tariffs,
    pub seasons: SeasonTable,
    pub train: FitOptions,
    pub sp: SpConfig,
    pub sampler: SamplerConfig,
    pub simulate: SimulateSection,
    pub guarantees: GuaranteeConfig,
}

impl Resolved {
    pub fn data(&self) -> Result<SyntheticDataConfig, CliError> {
        self.raw.data.clone().ok_or_else(|| CliError::Config("missing config section `data`".into()))
    }
}

/// Config text with the directory relative paths inside it refer to.
#[derive(Clone, Debug)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub text: String,
}

impl ConfigSource {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self { path: Some(path.to_path_buf()), text })
    }

    fn base_dir(&self) -> PathBuf {
        self.path.as_ref().and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_default()
    }

    fn label(&self) -> String {
        self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<config>".into())
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let raw: RunConfig =
            toml::from_str(&self.text).map_err(|e| CliError::Config(format!("{}: {}", self.label(), e.message())))?;
        raw.resolve(&self.base_dir())
    }
}

impl RunConfig {
    pub fn resolve(self, base_dir: &Path) -> Result<Resolved, CliError> {
        if self.schema_version != RUN_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {RUN_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let reference = HubConfig::reference();
        let hub = HubConfig {
            schema_version: reference.schema_version,
            hub: self.hub.clone().unwrap_or(reference.hub),
            tariffs: self.tariffs.clone().unwrap_or(reference.tariffs),
        };
        let cfg_err = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        hub.hub.validate().map_err(|e| cfg_err(&e))?;
        let tariffs = hub.tariffs(base_dir).map_err(|e| cfg_err(&e))?;
        let seasons = self.seasons.clone().unwrap_or_default();
        seasons.validate().map_err(|e| cfg_err(&e))?;
        let sp = self.mpc.clone().unwrap_or_default();
        sp.validate(&hub.hub, &tariffs).map_err(|e| cfg_err(&e))?;
        let mut sampler = self.sampler.clone().unwrap_or_default();
        sampler.horizon = sp.horizon;
        sampler.validate().map_err(|e| cfg_err(&e))?;
        let guarantees = self.guarantees.clone().unwrap_or_default();
        guarantees.validate().map_err(|e| cfg_err(&e))?;
        if let Some(d) = &self.data {
            d.validate().map_err(|e| cfg_err(&e))?;
        }
        let simulate = self.simulate.clone().unwrap_or_default();
        if simulate.refresh_hours == 0 || simulate.window_hours == 0 {
            return Err(CliError::Config("simulate.refresh_hours and simulate.window_hours must be positive".into()));
        }
        Ok(Resolved {
            params: hub.hub,
            tariffs,
            seasons,
            train: self.train.clone().unwrap_or_default(),
            sp,
            sampler,
            simulate,
            guarantees,
            raw: self,
        })
    }
}
