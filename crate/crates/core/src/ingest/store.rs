//! Feature schema, the per-family feature store, and row assembly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Datelike;
use sha2::{Digest, Sha256};

use super::emissions::{EmissionScaling, EmissionsInventory};
use super::landuse::{LandUseProfile, LAND_USE_CLASSES};
use super::measurements::{clean_measurements, load_measurements, load_stations, CleanedMeasurements};
use super::met::{build_met_fields, load_met_samples, IdwParams, MetField};
use super::remote::{load_remote_samples, monthly_composite, RemoteComposite};
use super::roads::{load_roads, road_structural_features, RoadFeatures, RoadSegment, ROAD_FEATURES};
use super::temporal::{temporal_features, Timestamp};
use super::traffic::{traffic_grid_score, Profile24, RegionMap, TrafficMeans, TravelProfiles};
use super::{
    DayKind, EmissionSpecies, HighwayType, MetVariable, RemoteVariable, TravelMode, SNAP_SECTORS,
};
use crate::error::{Error, Result};
use crate::grid::{CellId, StationSite, StudyArea};

/// Total feature-vector length across all families.
pub const N_FEATURES: usize = 152;

/// The seven dataset families, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    TransportStructural,
    TransportUse,
    Meteorology,
    RemoteSensing,
    Emissions,
    LandUse,
    Temporal,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::TransportStructural,
        Family::TransportUse,
        Family::Meteorology,
        Family::RemoteSensing,
        Family::Emissions,
        Family::LandUse,
        Family::Temporal,
    ];

    pub fn width(self) -> usize {
        match self {
            Family::TransportStructural => ROAD_FEATURES,
            Family::TransportUse => TravelMode::ALL.len(),
            Family::Meteorology => MetVariable::ALL.len(),
            Family::RemoteSensing => RemoteVariable::ALL.len(),
            Family::Emissions => EmissionSpecies::ALL.len() * SNAP_SECTORS,
            Family::LandUse => LAND_USE_CLASSES,
            Family::Temporal => 4,
        }
    }

    /// Offset of this family's first column in a full row.
    pub fn offset(self) -> usize {
        Family::ALL
            .iter()
            .take_while(|&&f| f != self)
            .map(|f| f.width())
            .sum()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::TransportStructural => "transport_structural",
            Family::TransportUse => "transport_use",
            Family::Meteorology => "meteorology",
            Family::RemoteSensing => "remote_sensing",
            Family::Emissions => "emissions",
            Family::LandUse => "land_use",
            Family::Temporal => "temporal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = super::normalize_label(s);
        Family::ALL
            .into_iter()
            .find(|f| super::normalize_label(f.as_str()) == key)
            .ok_or_else(|| Error::invalid(format!("unknown dataset family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureColumn {
    pub family: Family,
    pub name: String,
}

/// The canonical 152-column schema.
pub fn feature_schema() -> Vec<FeatureColumn> {
    let mut cols = Vec::with_capacity(N_FEATURES);
    let mut push = |family, name: String| cols.push(FeatureColumn { family, name });
    for ty in HighwayType::ALL {
        push(Family::TransportStructural, format!("road_dist_{ty}"));
    }
    for ty in HighwayType::ALL {
        push(Family::TransportStructural, format!("road_len_{ty}"));
    }
    for mode in TravelMode::ALL {
        push(Family::TransportUse, format!("traffic_{mode}"));
    }
    for var in MetVariable::ALL {
        push(Family::Meteorology, format!("met_{var}"));
    }
    for var in RemoteVariable::ALL {
        push(Family::RemoteSensing, var.to_string());
    }
    for sp in EmissionSpecies::ALL {
        for sector in 1..=SNAP_SECTORS {
            push(Family::Emissions, format!("emis_{sp}_snap{sector:02}"));
        }
    }
    for i in 0..LAND_USE_CLASSES {
        push(Family::LandUse, format!("landuse_class_{i:02}"));
    }
    for name in ["hour", "day_of_week", "week", "month"] {
        push(Family::Temporal, name.to_string());
    }
    cols
}

/// Short stable hash of an ordered column list.
pub fn schema_hash(columns: &[FeatureColumn]) -> String {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.family.as_str().as_bytes());
        h.update(b":");
        h.update(c.name.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Rows of features keyed by `(cell, timestamp)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<FeatureColumn>,
    pub keys: Vec<(CellId, Timestamp)>,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<FeatureColumn>) -> Self {
        FeatureMatrix {
            columns,
            keys: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.values[i * self.n_cols() + j]).collect()
    }

    pub fn push_row(&mut self, key: (CellId, Timestamp), row: &[f64]) {
        assert_eq!(row.len(), self.n_cols());
        self.keys.push(key);
        self.values.extend_from_slice(row);
    }

    /// Keeps only the given column indices, in the order given.
    pub fn select_columns(&self, indices: &[usize]) -> FeatureMatrix {
        let columns = indices.iter().map(|&j| self.columns[j].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows() * indices.len());
        for i in 0..self.n_rows() {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            columns,
            keys: self.keys.clone(),
            values,
        }
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.columns)
    }
}

struct RoadSnapshot {
    features: RoadFeatures,
    daily_traffic: Vec<[f64; 5]>,
}

/// Inputs for [`FeatureStore::new`].
pub struct FeatureSources {
    pub roads: BTreeMap<i32, Vec<RoadSegment>>,
    pub traffic_means: TrafficMeans,
    pub regions: RegionMap,
    pub profiles: TravelProfiles,
    pub met: Vec<MetField>,
    pub remote: RemoteComposite,
    pub emissions: EmissionsInventory,
    pub land_use: LandUseProfile,
}

/// Per-family caches able to materialize the feature row of any
/// `(cell, timestamp)`. Immutable once built.
pub struct FeatureStore {
    area: StudyArea,
    roads: BTreeMap<i32, RoadSnapshot>,
    cell_region: Vec<usize>,
    // [region][day kind][mode]
    profiles: Vec<[[Option<Profile24>; 5]; 3]>,
    met: Vec<MetField>,
    remote: RemoteComposite,
    emissions: EmissionsInventory,
    land_use: LandUseProfile,
    columns: Vec<FeatureColumn>,
}

impl FeatureStore {
    pub fn new(area: StudyArea, src: FeatureSources) -> Result<Self> {
        if src.met.len() != MetVariable::ALL.len()
            || src.met.iter().zip(MetVariable::ALL).any(|(f, v)| f.variable() != *v)
        {
            return Err(Error::invalid("meteorology fields must cover all 11 variables in order"));
        }
        if src.emissions.n_cells() != area.len() {
            return Err(Error::invalid("emissions inventory does not match the study area"));
        }

        let mut region_names: Vec<String> = Vec::new();
        let mut region_ids: HashMap<String, usize> = HashMap::new();
        let mut cell_region = Vec::with_capacity(area.len());
        for c in area.cells() {
            let r = src.regions.region(c.cell_id)?;
            let id = *region_ids.entry(r.to_string()).or_insert_with(|| {
                region_names.push(r.to_string());
                region_names.len() - 1
            });
            cell_region.push(id);
        }

        let profiles = region_names
            .iter()
            .map(|r| {
                let mut t: [[Option<Profile24>; 5]; 3] = Default::default();
                for &d in DayKind::ALL {
                    for &m in TravelMode::ALL {
                        t[d.index()][m.index()] = src.profiles.get(r, d, m).copied();
                    }
                }
                t
            })
            .collect();

        let mut roads = BTreeMap::new();
        for (year, segments) in &src.roads {
            let features = road_structural_features(&area, segments);
            let daily_traffic = area
                .cells()
                .iter()
                .map(|c| {
                    traffic_grid_score(
                        features.lengths(c.cell_id),
                        &region_names[cell_region[c.cell_id as usize]],
                        &src.traffic_means,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            roads.insert(
                *year,
                RoadSnapshot {
                    features,
                    daily_traffic,
                },
            );
        }

        Ok(FeatureStore {
            area,
            roads,
            cell_region,
            profiles,
            met: src.met,
            remote: src.remote,
            emissions: src.emissions,
            land_use: src.land_use,
            columns: feature_schema(),
        })
    }

    pub fn area(&self) -> &StudyArea {
        &self.area
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn road_years(&self) -> impl Iterator<Item = i32> + '_ {
        self.roads.keys().copied()
    }

    pub fn emissions(&self) -> &EmissionsInventory {
        &self.emissions
    }

    /// Writes the 152 features of `(cell, ts)` into `out`. On failure returns
    /// the names of the families with no value.
    pub fn fill_row(&self, cell: CellId, ts: &Timestamp, out: &mut [f64]) -> std::result::Result<(), Vec<Family>> {
        assert_eq!(out.len(), N_FEATURES);
        let mut missing = Vec::new();
        if cell as usize >= self.area.len() {
            return Err(Family::ALL.to_vec());
        }

        let snapshot = self.roads.get(&ts.year());
        match snapshot {
            Some(s) => out[..ROAD_FEATURES].copy_from_slice(s.features.cell(cell)),
            None => missing.push(Family::TransportStructural),
        }

        let off = Family::TransportUse.offset();
        let (hour, dow, week, month) = temporal_features(ts);
        let day = DayKind::from_weekday(dow);
        let region_profiles = &self.profiles[self.cell_region[cell as usize]][day.index()];
        match snapshot {
            Some(s) if region_profiles.iter().all(Option::is_some) => {
                let daily = &s.daily_traffic[cell as usize];
                for m in 0..5 {
                    let p = region_profiles[m].as_ref().expect("checked");
                    out[off + m] = daily[m] * p[hour as usize];
                }
            }
            _ => missing.push(Family::TransportUse),
        }

        let off = Family::Meteorology.offset();
        for (i, field) in self.met.iter().enumerate() {
            match field.value(cell, ts) {
                Some(v) => out[off + i] = v,
                None => {
                    missing.push(Family::Meteorology);
                    break;
                }
            }
        }

        let off = Family::RemoteSensing.offset();
        for (i, &var) in RemoteVariable::ALL.iter().enumerate() {
            out[off + i] = self.remote.value(var, cell, ts).unwrap_or(f64::NAN);
        }

        let off = Family::Emissions.offset();
        for (si, &sp) in EmissionSpecies::ALL.iter().enumerate() {
            for sector in 1..=SNAP_SECTORS {
                out[off + si * SNAP_SECTORS + sector - 1] = self.emissions.value(sp, sector, cell, ts);
            }
        }

        let off = Family::LandUse.offset();
        match self.land_use.get(cell) {
            Some(counts) => {
                for (i, &c) in counts.iter().enumerate() {
                    out[off + i] = c as f64;
                }
            }
            None => missing.push(Family::LandUse),
        }

        let off = Family::Temporal.offset();
        out[off] = hour as f64;
        out[off + 1] = dow as f64;
        out[off + 2] = week as f64;
        out[off + 3] = month as f64;

        if missing.is_empty() {
            Ok(())
        } else {
            Err(missing)
        }
    }

    pub fn row(&self, cell: CellId, ts: &Timestamp) -> Result<Vec<f64>> {
        let mut out = vec![0.0; N_FEATURES];
        self.fill_row(cell, ts, &mut out)
            .map_err(|fams| Error::DataGap(vec![gap_message(cell, ts, &fams)]))?;
        Ok(out)
    }

    /// Rows for explicit keys, in the given order.
    pub fn assemble_keys(&self, keys: &[(CellId, Timestamp)]) -> Result<FeatureMatrix> {
        let mut m = FeatureMatrix::new(self.columns.clone());
        m.values.reserve(keys.len() * N_FEATURES);
        let mut row = vec![0.0; N_FEATURES];
        let mut gaps = Vec::new();
        for &(cell, ts) in keys {
            match self.fill_row(cell, &ts, &mut row) {
                Ok(()) => m.push_row((cell, ts), &row),
                Err(fams) => gaps.push(gap_message(cell, &ts, &fams)),
            }
        }
        if !gaps.is_empty() {
            return Err(Error::DataGap(gaps));
        }
        Ok(m)
    }
}

pub(crate) fn gap_message(cell: CellId, ts: &Timestamp, families: &[Family]) -> String {
    let names: Vec<&str> = families.iter().map(|f| f.as_str()).collect();
    format!(
        "cell {cell} at {} missing {}",
        super::temporal::format_timestamp(ts),
        names.join("+")
    )
}

/// One row per `(cell, timestamp)` pair, cells outermost.
pub fn assemble_feature_matrix(
    store: &FeatureStore,
    cells: &[CellId],
    timestamps: &[Timestamp],
) -> Result<FeatureMatrix> {
    let keys: Vec<(CellId, Timestamp)> = cells
        .iter()
        .flat_map(|&c| timestamps.iter().map(move |&t| (c, t)))
        .collect();
    store.assemble_keys(&keys)
}

/// File names of an input directory.
#[derive(Debug, Clone)]
pub struct InputLayout {
    pub dir: PathBuf,
}

impl InputLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        InputLayout { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn area(&self) -> PathBuf {
        self.path("area.csv")
    }
    pub fn stations(&self) -> PathBuf {
        self.path("stations.csv")
    }
    pub fn measurements(&self) -> PathBuf {
        self.path("measurements.csv")
    }
    pub fn roads(&self, year: i32) -> PathBuf {
        self.path(&format!("roads_{year}.csv"))
    }
    pub fn traffic_means(&self) -> PathBuf {
        self.path("traffic_means.csv")
    }
    pub fn travel_profiles(&self) -> PathBuf {
        self.path("travel_profiles.csv")
    }
    pub fn regions(&self) -> PathBuf {
        self.path("regions.csv")
    }
    pub fn met_samples(&self) -> PathBuf {
        self.path("met_samples.csv")
    }
    pub fn remote_sensing(&self) -> PathBuf {
        self.path("remote_sensing.csv")
    }
    pub fn emissions(&self) -> PathBuf {
        self.path("emissions.csv")
    }
    pub fn emissions_hour_scaling(&self) -> PathBuf {
        self.path("emissions_hour_scaling.csv")
    }
    pub fn emissions_month_scaling(&self) -> PathBuf {
        self.path("emissions_month_scaling.csv")
    }
    pub fn land_use(&self) -> PathBuf {
        self.path("land_use.csv")
    }

    /// Years with a `roads_<year>.csv` snapshot, ascending.
    pub fn road_years(&self) -> Result<Vec<i32>> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut years = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(year) = name
                .strip_prefix("roads_")
                .and_then(|r| r.strip_suffix(".csv"))
                .and_then(|y| y.parse::<i32>().ok())
            {
                years.push(year);
            }
        }
        years.sort_unstable();
        Ok(years)
    }
}

/// Everything read from an input directory.
pub struct LoadedInputs {
    pub stations: Vec<StationSite>,
    pub measurements: CleanedMeasurements,
    pub store: FeatureStore,
}

impl LoadedInputs {
    pub fn area(&self) -> &StudyArea {
        self.store.area()
    }
}

/// Loads the study area alone.
pub fn load_area(dir: &Path) -> Result<StudyArea> {
    StudyArea::load(&InputLayout::new(dir).area())
}

/// Reads and validates every family of an input directory.
pub fn load_inputs(dir: &Path) -> Result<LoadedInputs> {
    let layout = InputLayout::new(dir);
    let area = StudyArea::load(&layout.area())?;
    let stations = load_stations(&layout.stations(), &area)?;
    let measurements = clean_measurements(load_measurements(&layout.measurements())?);
    let known: std::collections::BTreeSet<&str> = stations.iter().map(|s| s.station_id.as_str()).collect();
    if let Some(m) = measurements.kept.iter().find(|m| !known.contains(m.station_id.as_str())) {
        return Err(Error::invalid(format!(
            "measurement for unknown station {}",
            m.station_id
        )));
    }

    let mut roads = BTreeMap::new();
    for year in layout.road_years()? {
        roads.insert(year, load_roads(&layout.roads(year))?);
    }
    if roads.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no roads_<year>.csv snapshots",
            dir.display()
        )));
    }
    let traffic_means = TrafficMeans::load(&layout.traffic_means())?;
    let regions = RegionMap::load(&layout.regions(), &area)?;
    let profiles = TravelProfiles::load(&layout.travel_profiles())?;
    let met = build_met_fields(&load_met_samples(&layout.met_samples())?, &area, IdwParams::default())?;
    let remote = monthly_composite(&load_remote_samples(&layout.remote_sensing())?, &area)?;
    let scaling = EmissionScaling::load(
        &layout.emissions_hour_scaling(),
        &layout.emissions_month_scaling(),
    )?;
    let emissions = EmissionsInventory::load(&layout.emissions(), area.len(), scaling)?;
    let land_use = LandUseProfile::load(&layout.land_use(), &area)?;

    let store = FeatureStore::new(
        area,
        FeatureSources {
            roads,
            traffic_means,
            regions,
            profiles,
            met,
            remote,
            emissions,
            land_use,
        },
    )?;
    Ok(LoadedInputs {
        stations,
        measurements,
        store,
    })
}
