use std::collections::BTreeMap;
use std::path::Path;

use super::temporal::{parse_timestamp, require_whole_hour, Timestamp};
use super::{check_columns, field, open_csv, parse_at, record_error, Pollutant};
use crate::error::Result;
use crate::grid::{EnvironmentClass, StationSite, StudyArea};

/// One hourly station reading in µg/m³.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub station_id: String,
    pub pollutant: Pollutant,
    pub timestamp: Timestamp,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanedMeasurements {
    pub kept: Vec<Measurement>,
    pub removed: BTreeMap<Pollutant, usize>,
}

impl CleanedMeasurements {
    pub fn removed_total(&self) -> usize {
        self.removed.values().sum()
    }
}

/// Drops negative readings. Survivors keep their order and are not altered.
/// NaN readings are treated as invalid and dropped with the negatives.
pub fn clean_measurements(raw: Vec<Measurement>) -> CleanedMeasurements {
    let mut out = CleanedMeasurements {
        kept: Vec::with_capacity(raw.len()),
        removed: BTreeMap::new(),
    };
    for m in raw {
        if m.value >= 0.0 {
            out.kept.push(m);
        } else {
            *out.removed.entry(m.pollutant).or_default() += 1;
        }
    }
    out
}

/// Reads `station_id,pollutant,timestamp_iso8601,value`.
pub fn load_measurements(path: &Path) -> Result<Vec<Measurement>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_columns(path, &rec, 4)?;
        let timestamp = parse_timestamp(field(path, &rec, 2)?)
            .map_err(|e| record_error(path, &rec, e))?;
        require_whole_hour(&timestamp).map_err(|e| record_error(path, &rec, e))?;
        out.push(Measurement {
            station_id: field(path, &rec, 0)?.to_string(),
            pollutant: parse_at(path, &rec, 1)?,
            timestamp,
            value: parse_at(path, &rec, 3)?,
        });
    }
    Ok(out)
}

pub fn write_measurements(path: &Path, rows: &[Measurement]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["station_id", "pollutant", "timestamp_iso8601", "value"])?;
    for m in rows {
        w.write_record([
            m.station_id.as_str(),
            m.pollutant.as_str(),
            &super::temporal::format_timestamp(&m.timestamp),
            &m.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}

/// Reads `station_id,name,environment_class,x,y` and snaps every station to
/// its closest centroid. A station outside the area is an error.
pub fn load_stations(path: &Path, area: &StudyArea) -> Result<Vec<StationSite>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_columns(path, &rec, 5)?;
        let class: EnvironmentClass = parse_at(path, &rec, 2)?;
        let x: f64 = parse_at(path, &rec, 3)?;
        let y: f64 = parse_at(path, &rec, 4)?;
        let site = StationSite::locate(
            field(path, &rec, 0)?,
            field(path, &rec, 1)?,
            class,
            x,
            y,
            area,
        )
        .map_err(|e| record_error(path, &rec, e))?;
        out.push(site);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &out {
        if !seen.insert(s.station_id.as_str()) {
            return Err(crate::error::Error::invalid(format!(
                "{}: duplicate station id {}",
                path.display(),
                s.station_id
            )));
        }
    }
    Ok(out)
}

pub fn write_stations(path: &Path, stations: &[StationSite]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["station_id", "name", "environment_class", "x", "y"])?;
    for s in stations {
        w.write_record([
            s.station_id.as_str(),
            s.name.as_str(),
            s.environment_class.as_str(),
            &s.true_x.to_string(),
            &s.true_y.to_string(),
        ])?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}
