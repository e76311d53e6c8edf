//! Hour-resolution timestamps.

use chrono::{DateTime, NaiveDateTime};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| {
            chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
        })
        .ok()
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Hours since the Unix epoch (floor).
pub fn hour_index(t: NaiveDateTime) -> i64 {
    t.and_utc().timestamp().div_euclid(3600)
}

pub fn from_hour_index(h: i64) -> NaiveDateTime {
    DateTime::from_timestamp(h * 3600, 0).expect("hour index in range").naive_utc()
}
