//! Minute-resolution timestamps and hour-valued durations.

use chrono::{NaiveDateTime, Timelike};
use thiserror::Error;

pub type Timestamp = NaiveDateTime;

const FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeError {
    #[error("invalid timestamp `{0}` (expected YYYY-MM-DDTHH:MM)")]
    Invalid(String),
    #[error("timestamp `{0}` has sub-minute precision")]
    SubMinute(String),
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp, TimeError> {
    let t = NaiveDateTime::parse_from_str(s, FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .map_err(|_| TimeError::Invalid(s.to_string()))?;
    if t.second() != 0 || t.nanosecond() != 0 {
        return Err(TimeError::SubMinute(s.to_string()));
    }
    Ok(t)
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format(FORMAT).to_string()
}

/// Signed number of hours from `from` to `to`.
pub fn hours_between(from: Timestamp, to: Timestamp) -> f64 {
    (to - from).num_minutes() as f64 / 60.0
}

pub fn add_hours(t: Timestamp, hours: f64) -> Timestamp {
    t + chrono::Duration::minutes((hours * 60.0).round() as i64)
}
