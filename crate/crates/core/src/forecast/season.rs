use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::ForecastError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
        }
    }
}

/// Month (index 0 = January) to season map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonTable {
    pub months: [Season; 12],
}

impl Default for SeasonTable {
    /// Meteorological seasons: DJF, MAM, JJA, SON.
    fn default() -> Self {
        use Season::*;
        Self {
            months: [
                Winter, Winter, Spring, Spring, Spring, Summer, Summer, Summer, Autumn, Autumn, Autumn, Winter,
            ],
        }
    }
}

impl SeasonTable {
    pub fn season_of(&self, date: NaiveDate) -> Season {
        self.months[date.month0() as usize]
    }

    /// Every season must own at least one month.
    pub fn validate(&self) -> Result<(), ForecastError> {
        for s in Season::ALL {
            if !self.months.contains(&s) {
                return Err(ForecastError::InvalidHistory(format!("season table assigns no month to {}", s.name())));
            }
        }
        Ok(())
    }
}

pub fn select_seasonal_model(date: NaiveDate) -> Season {
    SeasonTable::default().season_of(date)
}
