use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{
    fit, DemandHistory, FitOptions, ForecastError, GpModel, KernelHyperparameters, ModelFile, ModelKind, Season,
    SeasonTable,
};
use crate::sampler::Predictors;

/// Electric and heat predictors for each trained season.
#[derive(Clone, Debug, Default)]
pub struct ModelSet {
    pub models: BTreeMap<(ModelKind, Season), GpModel>,
    pub seasons: SeasonTable,
}

pub fn model_file_name(kind: ModelKind, season: Season) -> String {
    format!("{}_{}.json", kind.name(), season.name())
}

impl ModelSet {
    /// Fits both kinds for every season in `seasons` (all seasons with data
    /// when `None`).
    pub fn train(
        data: &DemandHistory,
        seasons: Option<&[Season]>,
        opts: &FitOptions,
        table: &SeasonTable,
    ) -> Result<Self, ForecastError> {
        let wanted: Vec<Season> = match seasons {
            Some(s) => s.to_vec(),
            None => {
                let mut present: Vec<Season> =
                    (0..data.len()).step_by(24).map(|k| table.season_of(data.timestamp(k).date())).collect();
                present.sort();
                present.dedup();
                present
            }
        };
        let mut set = ModelSet { models: BTreeMap::new(), seasons: table.clone() };
        for season in wanted {
            for kind in [ModelKind::Electric, ModelKind::Heat] {
                let layout = kind.layout();
                let init = KernelHyperparameters::default_for(layout.dim, layout.default_linear_dims());
                let model = fit(data, kind, season, &init, opts, table)?;
                set.models.insert((kind, season), model);
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: ModelKind, season: Season) -> Result<&GpModel, ForecastError> {
        self.models.get(&(kind, season)).ok_or_else(|| {
            ForecastError::Format(format!("no {} model for {}", kind.name(), season.name()))
        })
    }

    pub fn season_for(&self, date: NaiveDate) -> Season {
        self.seasons.season_of(date)
    }

    pub fn predictors(&self, season: Season) -> Result<Predictors<'_>, ForecastError> {
        Ok(Predictors { electric: self.get(ModelKind::Electric, season)?, heat: self.get(ModelKind::Heat, season)? })
    }

    /// Re-conditions the models of `season` on the window ending before `end_hour`.
    pub fn refresh_season(
        &mut self,
        season: Season,
        history: &DemandHistory,
        end_hour: i64,
        window_hours: usize,
    ) -> Result<(), ForecastError> {
        for kind in [ModelKind::Electric, ModelKind::Heat] {
            let fresh = self.get(kind, season)?.condition_on_window(history, end_hour, window_hours)?;
            self.models.insert((kind, season), fresh);
        }
        Ok(())
    }

    /// Writes one JSON file per model; returns the paths in key order.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>, ForecastError> {
        std::fs::create_dir_all(dir).map_err(|e| ForecastError::Io(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::new();
        for ((kind, season), m) in &self.models {
            let path = dir.join(model_file_name(*kind, *season));
            let text = serde_json::to_string_pretty(&m.to_file()).map_err(|e| ForecastError::Format(e.to_string()))?;
            std::fs::write(&path, text + "\n").map_err(|e| ForecastError::Io(format!("{}: {e}", path.display())))?;
            out.push(path);
        }
        Ok(out)
    }

    /// Loads every `<kind>_<season>.json` in `dir`, conditioning on `history`.
    pub fn load(dir: &Path, history: &DemandHistory, table: &SeasonTable) -> Result<Self, ForecastError> {
        let mut set = ModelSet { models: BTreeMap::new(), seasons: table.clone() };
        for season in Season::ALL {
            for kind in [ModelKind::Electric, ModelKind::Heat] {
                let path = dir.join(model_file_name(kind, season));
                if !path.exists() {
                    continue;
                }
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ForecastError::Io(format!("{}: {e}", path.display())))?;
                let file: ModelFile = serde_json::from_str(&text)
                    .map_err(|e| ForecastError::Format(format!("{}: {e}", path.display())))?;
                if file.kind != kind || file.season != season {
                    return Err(ForecastError::Format(format!("{} holds a different model", path.display())));
                }
                set.models.insert((kind, season), GpModel::from_file(&file, history)?);
            }
        }
        if set.models.is_empty() {
            return Err(ForecastError::Io(format!("no model files in {}", dir.display())));
        }
        Ok(set)
    }
}
