//! Dataset-family ingestion.
//!
//! Each family is read from a flat CSV schema (see the README for the
//! column layouts) and turned into per-cell, per-timestamp values on the
//! study-area grid. [`store::FeatureStore`] ties the families together and
//! materializes 152-element feature rows on demand.

pub mod emissions;
pub mod landuse;
pub mod measurements;
pub mod met;
pub mod remote;
pub mod roads;
pub mod store;
pub mod temporal;
pub mod traffic;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use emissions::{scale_emissions, EmissionScaling, EmissionsInventory};
pub use landuse::{LandUseProfile, LAND_USE_CLASSES};
pub use measurements::{clean_measurements, CleanedMeasurements, Measurement};
pub use met::{idw_interpolate, idw_weights, IdwParams, MetField};
pub use remote::{monthly_composite, RemoteComposite, RemoteSample};
pub use roads::{road_structural_features, RoadFeatures, RoadSegment, ROAD_DISTANCE_SENTINEL};
pub use store::{
    assemble_feature_matrix, feature_schema, schema_hash, Family, FeatureColumn, FeatureMatrix, FeatureStore,
    N_FEATURES,
};
pub use temporal::{parse_timestamp, temporal_features, Timestamp};
pub use traffic::{
    temporal_distribute, traffic_grid_score, RegionMap, TrafficMeans, TravelProfiles,
};

/// Declares a closed set of named categories with string round-tripping.
/// Parsing ignores case, spaces, underscores and hyphens.
macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let key = normalize_label(s);
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| normalize_label(v.as_str()) == key)
                    .ok_or_else(|| {
                        Error::invalid(format!("unknown {} {:?}", stringify!($name), s))
                    })
            }
        }
    };
}

pub(crate) fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-' | '.'))
        .collect::<String>()
        .to_ascii_lowercase()
}

named_enum!(
    /// Target pollutants measured by the monitoring network.
    Pollutant {
        No => "NO",
        No2 => "NO2",
        Nox => "NOx",
        O3 => "O3",
        Pm10 => "PM10",
        Pm25 => "PM25",
        So2 => "SO2",
    }
);

named_enum!(
    HighwayType {
        Residential => "residential",
        Footway => "footway",
        Service => "service",
        Primary => "primary",
        Path => "path",
        Cycleway => "cycleway",
        Tertiary => "tertiary",
        Secondary => "secondary",
        Unclassified => "unclassified",
        Trunk => "trunk",
        Track => "track",
        Motorway => "motorway",
        Pedestrian => "pedestrian",
        LivingStreet => "living_street",
    }
);

impl HighwayType {
    /// Road types that carry motor traffic and therefore have traffic means.
    pub const MOTOR: [HighwayType; 10] = [
        HighwayType::Motorway,
        HighwayType::Trunk,
        HighwayType::Primary,
        HighwayType::Secondary,
        HighwayType::Tertiary,
        HighwayType::Unclassified,
        HighwayType::Residential,
        HighwayType::LivingStreet,
        HighwayType::Service,
        HighwayType::Track,
    ];

    pub fn carries_motor_traffic(self) -> bool {
        Self::MOTOR.contains(&self)
    }
}

named_enum!(
    TravelMode {
        Bicycle => "bicycle",
        CarTaxi => "car_taxi",
        BusCoach => "bus_coach",
        Lgv => "lgv",
        Hgv => "hgv",
    }
);

named_enum!(
    DayKind {
        Weekday => "weekday",
        Saturday => "saturday",
        Sunday => "sunday",
    }
);

named_enum!(
    /// Reanalysis variables interpolated onto cell centroids.
    MetVariable {
        U100 => "u100",
        U10 => "u10",
        V100 => "v100",
        V10 => "v10",
        Dewpoint2m => "d2m",
        Temperature2m => "t2m",
        BoundaryLayerHeight => "blh",
        DownwardUv => "uvb",
        WindGust10m => "i10fg",
        SurfacePressure => "sp",
        TotalColumnRainWater => "tcrw",
    }
);

named_enum!(
    /// Monthly satellite composites.
    RemoteVariable {
        No2 => "s5p_no2",
        Co => "s5p_co",
        Hcho => "s5p_hcho",
        O3 => "s5p_o3",
        AerosolIndex => "s5p_aai",
    }
);

named_enum!(
    EmissionSpecies {
        Pm25 => "PM25",
        Pm10 => "PM10",
        Nmvoc => "NMVOC",
        Nh3 => "NH3",
        Sox => "SOx",
        Co => "CO",
        Nox => "NOx",
    }
);

/// Number of SNAP emission sectors (numbered 1..=11).
pub const SNAP_SECTORS: usize = 11;

impl DayKind {
    /// Day kind for a day-of-week index where 0 is Monday.
    pub fn from_weekday(day_of_week: u32) -> DayKind {
        match day_of_week {
            5 => DayKind::Saturday,
            6 => DayKind::Sunday,
            _ => DayKind::Weekday,
        }
    }
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::invalid(format!("{}: {other:?}", path.display())),
        })
}

/// Line-numbered parse error for a CSV record.
pub(crate) fn record_error(path: &Path, record: &csv::StringRecord, message: impl fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: record.position().map(|p| p.line() as usize).unwrap_or(0),
        message: message.to_string(),
    }
}

pub(crate) fn field<'r>(
    path: &Path,
    record: &'r csv::StringRecord,
    index: usize,
) -> Result<&'r str> {
    record
        .get(index)
        .ok_or_else(|| record_error(path, record, format!("missing column {}", index + 1)))
}

pub(crate) fn parse_at<T: FromStr>(path: &Path, record: &csv::StringRecord, index: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = field(path, record, index)?;
    raw.parse::<T>()
        .map_err(|e| record_error(path, record, format!("column {}: {raw:?}: {e}", index + 1)))
}

pub(crate) fn check_columns(path: &Path, record: &csv::StringRecord, expected: usize) -> Result<()> {
    if record.len() != expected {
        return Err(record_error(
            path,
            record,
            format!("expected {expected} columns, found {}", record.len()),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_counts() {
        assert_eq!(Pollutant::ALL.len(), 7);
        assert_eq!(HighwayType::ALL.len(), 14);
        assert_eq!(HighwayType::MOTOR.len(), 10);
        assert_eq!(TravelMode::ALL.len(), 5);
        assert_eq!(MetVariable::ALL.len(), 11);
        assert_eq!(RemoteVariable::ALL.len(), 5);
        assert_eq!(EmissionSpecies::ALL.len(), 7);
    }

    #[test]
    fn label_parsing_is_lenient() {
        assert_eq!("Living Street".parse::<HighwayType>().unwrap(), HighwayType::LivingStreet);
        assert_eq!("PM2.5".parse::<Pollutant>().unwrap(), Pollutant::Pm25);
        assert_eq!("CarTaxi".parse::<TravelMode>().unwrap(), TravelMode::CarTaxi);
        assert!("bridleway".parse::<HighwayType>().is_err());
    }

    #[test]
    fn footways_carry_no_motor_traffic() {
        assert!(!HighwayType::Footway.carries_motor_traffic());
        assert!(!HighwayType::Cycleway.carries_motor_traffic());
        assert!(HighwayType::Track.carries_motor_traffic());
    }
}
