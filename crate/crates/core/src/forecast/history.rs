use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Weekday};
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::timeutil::{format_timestamp, from_hour_index, hour_index, parse_timestamp};

/// Gap-free hourly demand and weather record.
///
/// Index `k` refers to the hour starting at `start + k h`. Demands are the
/// energy consumed during that hour (kWh), weather is the value at that hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandHistory {
    pub start: NaiveDateTime,
    pub load_e: Vec<f64>,
    pub load_h: Vec<f64>,
    pub temp: Vec<f64>,
    pub irradiance: Vec<f64>,
    /// Extra non-working days on top of weekends.
    #[serde(default)]
    pub holidays: BTreeSet<NaiveDate>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    timestamp: String,
    #[serde(rename = "L_e_kwh")]
    load_e: f64,
    #[serde(rename = "L_h_kwh")]
    load_h: f64,
    temp_c: f64,
    irradiance_kw_m2: f64,
}

impl DemandHistory {
    pub fn len(&self) -> usize {
        self.load_e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_e.is_empty()
    }

    pub fn start_hour(&self) -> i64 {
        hour_index(self.start)
    }

    pub fn end_hour(&self) -> i64 {
        self.start_hour() + self.len() as i64
    }

    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        from_hour_index(self.start_hour() + k as i64)
    }

    /// Position of an absolute hour index in this record.
    pub fn index_of_hour(&self, hour: i64) -> Option<usize> {
        let k = hour - self.start_hour();
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        self.index_of_hour(hour_index(t))
    }

    pub fn is_workday(&self, t: NaiveDateTime) -> bool {
        !matches!(t.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&t.date())
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let n = self.len();
        if self.load_h.len() != n || self.temp.len() != n || self.irradiance.len() != n {
            return Err(ForecastError::InvalidHistory("series lengths differ".into()));
        }
        for k in 0..n {
            if !(self.load_e[k] >= 0.0 && self.load_h[k] >= 0.0) {
                return Err(ForecastError::InvalidHistory(format!(
                    "negative or missing demand at {}",
                    format_timestamp(self.timestamp(k))
                )));
            }
            if !self.temp[k].is_finite() || !(self.irradiance[k] >= 0.0) {
                return Err(ForecastError::InvalidHistory(format!(
                    "invalid weather at {}",
                    format_timestamp(self.timestamp(k))
                )));
            }
        }
        Ok(())
    }

    /// Rows `[from, to)` as a new record.
    pub fn slice(&self, from: usize, to: usize) -> DemandHistory {
        DemandHistory {
            start: self.timestamp(from),
            load_e: self.load_e[from..to].to_vec(),
            load_h: self.load_h[from..to].to_vec(),
            temp: self.temp[from..to].to_vec(),
            irradiance: self.irradiance[from..to].to_vec(),
            holidays: self.holidays.clone(),
        }
    }

    pub fn read_csv(path: &Path) -> Result<Self, ForecastError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| ForecastError::Io(e.to_string()))?;
        let mut h = DemandHistory {
            start: NaiveDateTime::default(),
            load_e: Vec::new(),
            load_h: Vec::new(),
            temp: Vec::new(),
            irradiance: Vec::new(),
            holidays: BTreeSet::new(),
        };
        let mut prev: Option<i64> = None;
        for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
            let row = row.map_err(|e| ForecastError::InvalidHistory(format!("{}: {e}", path.display())))?;
            let t = parse_timestamp(&row.timestamp).ok_or_else(|| {
                ForecastError::InvalidHistory(format!("bad timestamp '{}' on row {}", row.timestamp, line + 1))
            })?;
            let hour = hour_index(t);
            match prev {
                None => h.start = t,
                Some(p) if hour != p + 1 => {
                    return Err(ForecastError::InvalidHistory(format!(
                        "timestamps must be consecutive hours; gap before {}",
                        row.timestamp
                    )))
                }
                _ => {}
            }
            prev = Some(hour);
            h.load_e.push(row.load_e);
            h.load_h.push(row.load_h);
            h.temp.push(row.temp_c);
            h.irradiance.push(row.irradiance_kw_m2);
        }
        h.validate()?;
        Ok(h)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ForecastError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ForecastError::Io(e.to_string()))?;
        for k in 0..self.len() {
            w.serialize(CsvRow {
                timestamp: format_timestamp(self.timestamp(k)),
                load_e: self.load_e[k],
                load_h: self.load_h[k],
                temp_c: self.temp[k],
                irradiance_kw_m2: self.irradiance[k],
            })
            .map_err(|e| ForecastError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| ForecastError::Io(e.to_string()))?;
        Ok(())
    }

    /// Add holidays from a CSV with one `YYYY-MM-DD` date per row (header `date`).
    pub fn load_holidays(&mut self, path: &Path) -> Result<(), ForecastError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| ForecastError::Io(e.to_string()))?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ForecastError::Io(e.to_string()))?;
            let field = rec.get(0).unwrap_or("").trim();
            let d = NaiveDate::parse_from_str(field, "%Y-%m-%d")
                .map_err(|_| ForecastError::InvalidHistory(format!("bad holiday date '{field}'")))?;
            self.holidays.insert(d);
        }
        Ok(())
    }
}
