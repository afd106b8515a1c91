use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// UTC wall-clock time. All timestamps in the pipeline are naive UTC.
pub type Timestamp = NaiveDateTime;

/// Parses an ISO-8601 timestamp. Offsets are converted to UTC; a missing
/// offset is taken as UTC.
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    let body = s.strip_suffix('Z').unwrap_or(s);
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ];
    for fmt in FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(body, fmt) {
            return Ok(ts);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(body, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight"));
    }
    Err(Error::invalid(format!("unparseable timestamp {s:?}")))
}

/// Formats a timestamp the way every output file writes it.
pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Rejects timestamps that are not on a whole hour.
pub fn require_whole_hour(ts: &Timestamp) -> Result<()> {
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::invalid(format!(
            "timestamp {} is not on a whole hour",
            format_timestamp(ts)
        )));
    }
    Ok(())
}

/// `(hour 0-23, day_of_week 0-6 with Monday = 0, ISO week 1-53, month 1-12)`.
pub fn temporal_features(ts: &Timestamp) -> (u32, u32, u32, u32) {
    (
        ts.hour(),
        ts.weekday().num_days_from_monday(),
        ts.iso_week().week(),
        ts.month(),
    )
}

/// Index into a 168-slot week profile: `day_of_week * 24 + hour`.
pub fn week_hour(ts: &Timestamp) -> usize {
    let (hour, dow, _, _) = temporal_features(ts);
    (dow * 24 + hour) as usize
}

/// Hourly timestamps in `[start, end)`.
pub fn hourly_range(start: Timestamp, end: Timestamp) -> impl Iterator<Item = Timestamp> {
    let mut next = start;
    std::iter::from_fn(move || {
        if next >= end {
            return None;
        }
        let out = next;
        next += chrono::Duration::hours(1);
        Some(out)
    })
}
