//! Small synthetic study area with every input file and station
//! measurements drawn from a fixed, documented generating function.
//!
//! For a normal station at hour `t` in snapped cell `c`:
//!
//! ```text
//! g(x) = intercept + sum_f weight_f * term_f(x)
//! value = max(0, g(x) + e)                 e ~ N(0, noise_sigma)
//! ```
//!
//! Adversarial stations invert the relationship around their own mean:
//! `value = max(0, level - (g(x) - intercept) + e)` where `level` is
//! `intercept + 2 * mean(g - intercept)` over the span at that cell unless
//! `inversion_level` is given. Levels are written to the manifest.
//!
//! `x` is the 152-column feature row of `(c, t)` assembled from the written
//! files; the terms are listed on [`GeneratingFunction`].

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{EnvironmentClass, StationSite, StudyArea};
use crate::ingest::measurements::{write_measurements, write_stations};
use crate::ingest::roads::write_roads;
use crate::ingest::store::{load_inputs, InputLayout};
use crate::ingest::temporal::{format_timestamp, hourly_range};
use crate::ingest::{
    feature_schema, road_structural_features, DayKind, EmissionScaling, EmissionSpecies,
    EmissionsInventory, Family, HighwayType, LandUseProfile, Measurement, MetVariable, Pollutant,
    RegionMap, RemoteVariable, RoadSegment, Timestamp, TrafficMeans, TravelMode, TravelProfiles, LAND_USE_CLASSES,
};

/// Parameters of a synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub rows: u32,
    pub cols: u32,
    pub cell_size: f64,
    pub origin: (f64, f64),
    /// Hourly span `[start, end)`.
    pub start: Timestamp,
    pub end: Timestamp,
    /// Stations per environment class, in `EnvironmentClass::ALL` order.
    pub stations_per_class: [usize; 6],
    /// How many of the stations (taken from the end of the list) are inverted.
    pub adversarial: usize,
    pub intercept: f64,
    /// Per-family weights, in `Family::ALL` order.
    pub weights: [f64; 7],
    pub inversion_level: Option<f64>,
    pub noise_sigma: f64,
    /// Probability that a station-hour is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        let ts = |y, m| NaiveDate::from_ymd_opt(y, m, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        WorldSpec {
            rows: 20,
            cols: 20,
            cell_size: 1000.0,
            origin: (400_000.0, 300_000.0),
            start: ts(2016, 7),
            end: ts(2018, 7),
            stations_per_class: [2; 6],
            adversarial: 1,
            intercept: 8.0,
            weights: [4.0, 12.0, 30.0, 4.0, 6.0, 4.0, 6.0],
            inversion_level: None,
            noise_sigma: 1.0,
            missing_rate: 0.02,
            seed: 42,
        }
    }
}

impl WorldSpec {
    pub fn n_stations(&self) -> usize {
        self.stations_per_class.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 4 || self.cols < 4 {
            return Err(Error::invalid("world needs at least 4x4 cells"));
        }
        if !(self.cell_size >= 100.0 && self.cell_size.is_finite()) {
            return Err(Error::invalid("cell_size must be at least 100 m"));
        }
        if self.end <= self.start {
            return Err(Error::invalid("world span is empty"));
        }
        if self.adversarial > self.n_stations() {
            return Err(Error::invalid("more adversarial stations than stations"));
        }
        if self.n_stations() > (self.rows * self.cols) as usize / 4 {
            return Err(Error::invalid("too many stations for the grid"));
        }
        if !(self.noise_sigma >= 0.0) || !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::invalid("noise_sigma must be >= 0 and missing_rate in [0, 1)"));
        }
        Ok(())
    }
}

/// Scale of the traffic term.
pub const TRAFFIC_SCALE: f64 = 1000.0;
/// Length scale of the road-proximity term, meters.
pub const ROAD_DECAY_M: f64 = 500.0;
/// Boundary-layer height at which the meteorology term reaches zero, meters.
pub const BLH_SCALE: f64 = 2000.0;
/// Hours counted as rush hour by the temporal term.
pub const RUSH_HOURS: [u32; 6] = [7, 8, 9, 16, 17, 18];

/// The per-family terms of `g`, read from a full feature row:
///
/// | family | term |
/// |---|---|
/// | transport_structural | `exp(-road_dist_primary / 500)` |
/// | transport_use | `traffic_car_taxi / 1000` |
/// | meteorology | `1 - met_blh / 2000` |
/// | remote_sensing | `s5p_no2` |
/// | emissions | `emis_NOx_snap07` |
/// | land_use | `landuse_class_00 / pixels_per_cell` |
/// | temporal | `1` if `hour` is 7-9 or 16-18, else `0` |
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    pub intercept: f64,
    pub weights: [f64; 7],
    pub pixels_per_cell: f64,
    columns: [usize; 7],
}

pub const TERM_COLUMNS: [&str; 7] = [
    "road_dist_primary",
    "traffic_car_taxi",
    "met_blh",
    "s5p_no2",
    "emis_NOx_snap07",
    "landuse_class_00",
    "hour",
];

impl GeneratingFunction {
    pub fn new(intercept: f64, weights: [f64; 7], pixels_per_cell: f64) -> Self {
        let schema = feature_schema();
        let columns = TERM_COLUMNS.map(|n| schema.iter().position(|c| c.name == n).expect("term column in schema"));
        GeneratingFunction {
            intercept,
            weights,
            pixels_per_cell,
            columns,
        }
    }

    pub fn terms(&self, row: &[f64]) -> [f64; 7] {
        let x = |i: usize| row[self.columns[i]];
        [
            (-x(0) / ROAD_DECAY_M).exp(),
            x(1) / TRAFFIC_SCALE,
            1.0 - x(2) / BLH_SCALE,
            x(3),
            x(4),
            x(5) / self.pixels_per_cell,
            if RUSH_HOURS.contains(&(x(6) as u32)) { 1.0 } else { 0.0 },
        ]
    }

    pub fn value(&self, row: &[f64]) -> f64 {
        self.intercept + self.terms(row).iter().zip(&self.weights).map(|(t, w)| t * w).sum::<f64>()
    }

    fn describe(&self) -> String {
        let mut s = format!("g = {}", self.intercept);
        let forms = [
            "exp(-road_dist_primary / 500)".to_string(),
            "traffic_car_taxi / 1000".into(),
            "(1 - met_blh / 2000)".into(),
            "s5p_no2".into(),
            "emis_NOx_snap07".into(),
            format!("landuse_class_00 / {}", self.pixels_per_cell),
            "rush_hour(hour in 7,8,9,16,17,18)".into(),
        ];
        for (w, f) in self.weights.iter().zip(forms) {
            let _ = write!(s, " + {w} * {f}");
        }
        s
    }
}

/// What [`generate_world`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSummary {
    pub dir: PathBuf,
    pub stations: Vec<String>,
    pub adversarial: Vec<String>,
    pub n_measurements: usize,
    pub files: Vec<PathBuf>,
}

pub const WORLD_MANIFEST: &str = "world.txt";
pub const WORLD_RECIPE: &str = "recipe.txt";

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

/// Writes a complete input directory for `spec` into `dir`.
pub fn generate_world(spec: &WorldSpec, dir: &Path) -> Result<WorldSummary> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layout = InputLayout::new(dir);
    let area = StudyArea::rectangle(spec.origin, spec.cell_size, spec.rows, spec.cols)?;
    area.save(&layout.area())?;
    let w = spec.cols as f64 * spec.cell_size;
    let h = spec.rows as f64 * spec.cell_size;
    let (ox, oy) = spec.origin;
    // Urban core around (0.35, 0.35) of the extent; roads stay inside the
    // lower-left 70% so the far corner is road-free.
    let core = (ox + 0.35 * w, oy + 0.35 * h);
    let urban = |x: f64, y: f64| {
        let d2 = (x - core.0).powi(2) + (y - core.1).powi(2);
        (-d2 / (2.0 * (0.25 * w).powi(2))).exp()
    };

    let years: BTreeSet<i32> = hourly_range(spec.start, spec.end).map(|t| t.year()).collect();
    let roads = make_roads(&mut stream(spec.seed, 1), spec.origin, w, h)?;
    let mut extra = make_roads(&mut stream(spec.seed, 2), spec.origin, w, h)?;
    for (k, &year) in years.iter().enumerate() {
        let mut net = roads.clone();
        // each later year gains one more road
        net.extend(extra.drain(..k.min(extra.len())).map(|mut r| {
            r.segment_id = format!("{}_y{year}", r.segment_id);
            r
        }));
        write_roads(&layout.roads(year), &net)?;
    }

    let mut regions = RegionMap::new(&area);
    for c in area.cells() {
        regions.assign(c.cell_id, if c.col < spec.cols / 2 { "west" } else { "east" })?;
    }
    regions.save(&layout.regions())?;
    traffic_means()?.save(&layout.traffic_means())?;
    travel_profiles()?.save(&layout.travel_profiles())?;

    write_met(&layout.met_samples(), spec, w, h, &mut stream(spec.seed, 3))?;
    write_remote(&layout.remote_sensing(), &area, &urban, &mut stream(spec.seed, 4))?;

    let lengths = road_structural_features(&area, &roads);
    let (scaling, inventory) = make_emissions(&area, &lengths, &urban, &mut stream(spec.seed, 5))?;
    scaling.save(&layout.emissions_hour_scaling(), &layout.emissions_month_scaling())?;
    inventory.save(&layout.emissions())?;
    make_land_use(&area, &urban, &mut stream(spec.seed, 6))?.save(&layout.land_use())?;

    let stations = place_stations(spec, &area, &urban, &mut stream(spec.seed, 7))?;
    write_stations(&layout.stations(), &stations)?;
    write_measurements(&layout.measurements(), &[])?;

    let inputs = load_inputs(dir)?;
    let g = GeneratingFunction::new(
        spec.intercept,
        spec.weights,
        crate::ingest::landuse::pixels_per_cell(spec.cell_size) as f64,
    );
    let n_normal = stations.len() - spec.adversarial;
    let mut measurements = Vec::new();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("sigma checked");
    let mut row = vec![0.0; crate::ingest::N_FEATURES];
    let mut levels = Vec::new();
    for (i, st) in inputs.stations.iter().enumerate() {
        let mut rng = stream(spec.seed, 100 + i as u64);
        let inverted = i >= n_normal;
        let level = match (inverted, spec.inversion_level) {
            (false, _) => 0.0,
            (true, Some(l)) => l,
            (true, None) => {
                let mut sum = 0.0;
                let mut n = 0usize;
                for ts in hourly_range(spec.start, spec.end) {
                    inputs.store.fill_row(st.snapped_cell, &ts, &mut row).map_err(|f| {
                        Error::invalid(format!("world feature gap at {}: {f:?}", format_timestamp(&ts)))
                    })?;
                    sum += g.value(&row) - spec.intercept;
                    n += 1;
                }
                spec.intercept + 2.0 * sum / n as f64
            }
        };
        if inverted {
            levels.push((st.station_id.clone(), level));
        }
        for ts in hourly_range(spec.start, spec.end) {
            let skip = rng.random::<f64>() < spec.missing_rate;
            let e = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            if skip {
                continue;
            }
            inputs
                .store
                .fill_row(st.snapped_cell, &ts, &mut row)
                .map_err(|f| Error::invalid(format!("world feature gap at {}: {f:?}", format_timestamp(&ts))))?;
            let gv = g.value(&row);
            let v = if inverted { level - (gv - spec.intercept) + e } else { gv + e };
            measurements.push(Measurement {
                station_id: st.station_id.clone(),
                pollutant: Pollutant::No2,
                timestamp: ts,
                value: v.max(0.0),
            });
        }
    }
    write_measurements(&layout.measurements(), &measurements)?;

    let adversarial: Vec<String> = stations[n_normal..].iter().map(|s| s.station_id.clone()).collect();
    write_manifest(&dir.join(WORLD_MANIFEST), spec, &g, &stations, &levels)?;
    write_recipe(&dir.join(WORLD_RECIPE), &years)?;

    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(WorldSummary {
        dir: dir.to_path_buf(),
        stations: stations.iter().map(|s| s.station_id.clone()).collect(),
        adversarial,
        n_measurements: measurements.len(),
        files,
    })
}

fn make_roads(rng: &mut ChaCha8Rng, origin: (f64, f64), w: f64, h: f64) -> Result<Vec<RoadSegment>> {
    let (ox, oy) = origin;
    let lim = 0.7;
    let mut out = Vec::new();
    let mut add = |rng: &mut ChaCha8Rng, ty: HighwayType, pts: Vec<(f64, f64)>| -> Result<()> {
        let id = format!("{}_{:03}", ty.as_str(), rng.random_range(0..1000));
        let n = out.len();
        out.push(RoadSegment::new(format!("{id}_{n}"), ty, pts.iter().map(|&(x, y)| (ox + x * w, oy + y * h)).collect())?);
        Ok(())
    };
    add(rng, HighwayType::Motorway, vec![(0.0, 0.08), (0.3, 0.3), (lim, 0.45)])?;
    for _ in 0..2 {
        let y = rng.random_range(0.1..0.65);
        let bend = y + rng.random_range(-0.05..0.05);
        add(rng, HighwayType::Primary, vec![(0.0, y), (0.35, bend), (lim, y)])?;
        let x = rng.random_range(0.1..0.65);
        add(rng, HighwayType::Primary, vec![(x, 0.0), (x, lim)])?;
    }
    for ty in [HighwayType::Secondary, HighwayType::Tertiary, HighwayType::Unclassified, HighwayType::Trunk] {
        for _ in 0..2 {
            let a = (rng.random_range(0.0..lim), rng.random_range(0.0..lim));
            let b = (rng.random_range(0.0..lim), rng.random_range(0.0..lim));
            add(rng, ty, vec![a, b])?;
        }
    }
    for _ in 0..24 {
        let cx = (0.35 + rng.random_range(-0.25..0.25_f64)).clamp(0.0, lim);
        let cy = (0.35 + rng.random_range(-0.25..0.25_f64)).clamp(0.0, lim);
        let ty = [HighwayType::Residential, HighwayType::Service, HighwayType::LivingStreet][rng.random_range(0..3)];
        let dx = rng.random_range(0.01..0.05);
        let b = if rng.random::<bool>() { ((cx + dx).min(lim), cy) } else { (cx, (cy + dx).min(lim)) };
        add(rng, ty, vec![(cx, cy), b])?;
    }
    for ty in [HighwayType::Footway, HighwayType::Cycleway, HighwayType::Path] {
        let a = (rng.random_range(0.1..0.6), rng.random_range(0.1..0.6));
        add(rng, ty, vec![a, (a.0 + 0.05, a.1 + 0.03)])?;
    }
    Ok(out)
}

fn traffic_means() -> Result<TrafficMeans> {
    let base = |ty: HighwayType| match ty {
        HighwayType::Motorway => 40.0,
        HighwayType::Trunk => 30.0,
        HighwayType::Primary => 20.0,
        HighwayType::Secondary => 12.0,
        HighwayType::Tertiary => 8.0,
        HighwayType::Unclassified => 4.0,
        HighwayType::Residential => 3.0,
        HighwayType::LivingStreet | HighwayType::Service => 1.0,
        _ => 0.2,
    };
    let share = |m: TravelMode| match m {
        TravelMode::CarTaxi => 0.75,
        TravelMode::Lgv => 0.12,
        TravelMode::Hgv => 0.06,
        TravelMode::BusCoach => 0.02,
        TravelMode::Bicycle => 0.05,
    };
    let mut t = TrafficMeans::new();
    for (region, f) in [("west", 1.0), ("east", 0.8)] {
        for ty in HighwayType::MOTOR {
            for &m in TravelMode::ALL {
                t.insert(region, ty, m, base(ty) * share(m) * f)?;
            }
        }
    }
    Ok(t)
}

fn normalized(p: [f64; 24]) -> [f64; 24] {
    let s: f64 = p.iter().sum();
    p.map(|v| v / s)
}

fn travel_profiles() -> Result<TravelProfiles> {
    let bump = |h: f64, c: f64, wd: f64| (-(h - c).powi(2) / (2.0 * wd * wd)).exp();
    let mut p = TravelProfiles::new();
    for region in ["west", "east"] {
        for &day in DayKind::ALL {
            for &mode in TravelMode::ALL {
                let mut v = [0.0; 24];
                for (hr, slot) in v.iter_mut().enumerate() {
                    let h = hr as f64;
                    *slot = 0.05
                        + match day {
                            DayKind::Weekday => bump(h, 8.0, 1.2) + 0.9 * bump(h, 17.0, 1.5) + 0.3 * bump(h, 13.0, 3.0),
                            DayKind::Saturday => bump(h, 13.0, 3.5),
                            DayKind::Sunday => 0.7 * bump(h, 14.0, 4.0),
                        };
                    if mode == TravelMode::Hgv {
                        *slot = 0.5 * *slot + 0.1;
                    }
                }
                p.insert(region, day, mode, normalized(v))?;
            }
        }
    }
    Ok(p)
}

/// AR(1) with unit stationary variance.
struct Ar1 {
    phi: f64,
    x: f64,
}

impl Ar1 {
    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let n: f64 = rand_distr::StandardNormal.sample(rng);
        self.x = self.phi * self.x + (1.0 - self.phi * self.phi).sqrt() * n;
        self.x
    }
}

fn write_met(path: &Path, spec: &WorldSpec, w: f64, h: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let (ox, oy) = spec.origin;
    let sites = [(0.1, 0.1), (0.9, 0.2), (0.5, 0.9)].map(|(a, b)| (ox + a * w, oy + b * h));
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(out, "variable,x,y,timestamp,value").map_err(io)?;
    let mut shared: Vec<Ar1> = (0..6).map(|_| Ar1 { phi: 0.97, x: 0.0 }).collect();
    for ts in hourly_range(spec.start, spec.end) {
        let doy = ts.ordinal() as f64;
        let hour = ts.hour() as f64;
        let season = (2.0 * PI * (doy - 110.0) / 365.25).sin();
        let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let z: Vec<f64> = shared.iter_mut().map(|a| a.step(rng)).collect();
        let stamp = format_timestamp(&ts);
        for (si, &(x, y)) in sites.iter().enumerate() {
            let off = si as f64 - 1.0;
            let local = |rng: &mut ChaCha8Rng, s: f64| -> f64 {
                let n: f64 = rand_distr::StandardNormal.sample(rng);
                s * n
            };
            let t2m = 283.0 + 7.0 * season + 4.0 * diurnal + 1.5 * z[0] + 0.5 * off + local(rng, 0.3);
            let u10 = 3.0 * z[1] + 1.0 + local(rng, 0.4);
            let v10 = 3.0 * z[2] + local(rng, 0.4);
            let blh = (900.0 + 450.0 * diurnal + 150.0 * season + 200.0 * z[3] + 30.0 * off + local(rng, 20.0))
                .clamp(100.0, 2500.0);
            let vals = [
                (MetVariable::U100, 1.4 * u10 + local(rng, 0.3)),
                (MetVariable::U10, u10),
                (MetVariable::V100, 1.4 * v10 + local(rng, 0.3)),
                (MetVariable::V10, v10),
                (MetVariable::Dewpoint2m, t2m - 3.0 - (1.0 + z[4]).abs()),
                (MetVariable::Temperature2m, t2m),
                (MetVariable::BoundaryLayerHeight, blh),
                (MetVariable::DownwardUv, (diurnal.max(0.0) * (1.2 + season) * 1.0e5).max(0.0)),
                (MetVariable::WindGust10m, 1.6 * u10.hypot(v10) + local(rng, 0.5).abs()),
                (MetVariable::SurfacePressure, 101_325.0 + 800.0 * z[5] + local(rng, 20.0)),
                (MetVariable::TotalColumnRainWater, (z[4] - 1.0).max(0.0) * 0.2),
            ];
            for (var, v) in vals {
                writeln!(out, "{},{x},{y},{stamp},{v}", var.as_str()).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

fn write_remote(path: &Path, area: &StudyArea, urban: &dyn Fn(f64, f64) -> f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["variable", "cell_id", "month", "value"])?;
    for &var in RemoteVariable::ALL {
        for month in 1..=12u32 {
            let winter = (2.0 * PI * (month as f64 - 1.0) / 12.0).cos();
            for c in area.cells() {
                let u = urban(c.centroid_x, c.centroid_y);
                let v = match var {
                    RemoteVariable::No2 => (0.15 + 0.6 * u * (1.0 + 0.3 * winter) + 0.03 * rng.random::<f64>()).min(1.0),
                    RemoteVariable::Co => 0.03 + 0.01 * u + 0.002 * rng.random::<f64>(),
                    RemoteVariable::Hcho => 1e-4 * (1.0 - 0.5 * winter) + 1e-5 * rng.random::<f64>(),
                    RemoteVariable::O3 => 0.12 - 0.01 * winter + 0.002 * rng.random::<f64>(),
                    RemoteVariable::AerosolIndex => -1.0 + 0.5 * u + 0.2 * rng.random::<f64>(),
                };
                out.write_record([var.as_str().to_string(), c.cell_id.to_string(), month.to_string(), v.to_string()])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn make_emissions(
    area: &StudyArea,
    roads: &crate::ingest::RoadFeatures,
    urban: &dyn Fn(f64, f64) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<(EmissionScaling, EmissionsInventory)> {
    let n_sectors = crate::ingest::SNAP_SECTORS;
    let mut hour = Vec::with_capacity(n_sectors);
    for s in 1..=n_sectors {
        let mut t = [0.0; crate::ingest::emissions::WEEK_HOURS];
        for (wh, slot) in t.iter_mut().enumerate() {
            let (dow, h) = (wh / 24, (wh % 24) as f64);
            let bump = |c: f64, wd: f64| (-(h - c).powi(2) / (2.0 * wd * wd)).exp();
            *slot = if s == 7 {
                0.2 + if dow < 5 { bump(8.0, 1.3) + bump(17.0, 1.6) } else { 0.6 * bump(13.0, 3.0) }
            } else {
                1.0 + 0.2 * bump(12.0, 4.0)
            };
        }
        hour.push(t);
    }
    let month: Vec<Vec<[f64; 12]>> = EmissionSpecies::ALL
        .iter()
        .map(|_| {
            (1..=n_sectors)
                .map(|s| {
                    std::array::from_fn(|m| {
                        let winter = (2.0 * PI * m as f64 / 12.0).cos();
                        if s == 2 { 1.0 + 0.6 * winter } else { 1.0 + 0.1 * winter }
                    })
                })
                .collect()
        })
        .collect();
    let scaling = EmissionScaling::new(hour, month)?;
    let mut inv = EmissionsInventory::new(area.len(), scaling.clone());
    for c in area.cells() {
        let motor: f64 = HighwayType::MOTOR.iter().map(|&t| roads.length(c.cell_id, t)).sum();
        let u = urban(c.centroid_x, c.centroid_y);
        for &sp in EmissionSpecies::ALL {
            for s in 1..=n_sectors {
                let v = if sp == EmissionSpecies::Nox && s == 7 {
                    (motor / (2.0 * area.cell_size())).min(1.5) + 0.05 * u
                } else {
                    u * rng.random_range(0.5..1.5)
                };
                inv.set_annual(sp, s, c.cell_id, v)?;
            }
        }
    }
    Ok((scaling, inv))
}

fn make_land_use(area: &StudyArea, urban: &dyn Fn(f64, f64) -> f64, rng: &mut ChaCha8Rng) -> Result<LandUseProfile> {
    let mut lu = LandUseProfile::new(area);
    let total = lu.pixels_per_cell();
    for c in area.cells() {
        let built = (total as f64 * 0.9 * urban(c.centroid_x, c.centroid_y)).round() as u32;
        let rest = total - built;
        let wts: Vec<f64> = (1..LAND_USE_CLASSES).map(|_| rng.random::<f64>().powi(2)).collect();
        let sum: f64 = wts.iter().sum();
        let mut counts = [0u32; LAND_USE_CLASSES];
        counts[0] = built;
        let mut assigned = 0;
        for (i, wt) in wts.iter().enumerate() {
            let k = (rest as f64 * wt / sum).floor() as u32;
            counts[i + 1] = k;
            assigned += k;
        }
        counts[1] += rest - assigned;
        lu.set(c.cell_id, counts)?;
    }
    Ok(lu)
}

fn place_stations(
    spec: &WorldSpec,
    area: &StudyArea,
    urban: &dyn Fn(f64, f64) -> f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StationSite>> {
    let (ox, oy) = spec.origin;
    let w = spec.cols as f64 * spec.cell_size;
    let h = spec.rows as f64 * spec.cell_size;
    let n = spec.n_stations();
    let n_normal = n - spec.adversarial;
    let mut used = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for (ci, &count) in spec.stations_per_class.iter().enumerate() {
        let class = EnvironmentClass::ALL[ci];
        // urbanity band for the class
        let (lo, hi) = match class {
            EnvironmentClass::UrbanBackground | EnvironmentClass::UrbanTraffic | EnvironmentClass::UrbanIndustrial => {
                (0.5, 1.01)
            }
            EnvironmentClass::SuburbanBackground | EnvironmentClass::SuburbanIndustrial => (0.15, 0.6),
            EnvironmentClass::RuralBackground => (0.0, 0.2),
        };
        for _ in 0..count {
            let adversarial = k >= n_normal;
            let mut tries = 0;
            let site = loop {
                tries += 1;
                let (x, y) = if adversarial {
                    (ox + rng.random_range(0.82..0.98) * w, oy + rng.random_range(0.82..0.98) * h)
                } else {
                    (ox + rng.random_range(0.02..0.72) * w, oy + rng.random_range(0.02..0.72) * h)
                };
                let u = urban(x, y);
                let ok_band = adversarial || tries > 500 || (lo..hi).contains(&u);
                let (cell, _) = area.snap_to_centroid(x, y)?;
                if ok_band && !used.contains(&cell) {
                    used.insert(cell);
                    break StationSite::locate(format!("ST{:02}", k + 1), format!("Synthetic {}", k + 1), class, x, y, area)?;
                }
                if tries > 5000 {
                    return Err(Error::invalid("could not place stations on distinct cells"));
                }
            };
            out.push(site);
            k += 1;
        }
    }
    Ok(out)
}

fn write_manifest(
    path: &Path,
    spec: &WorldSpec,
    g: &GeneratingFunction,
    stations: &[StationSite],
    levels: &[(String, f64)],
) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "# synthetic world");
    let _ = writeln!(s, "seed = {}", spec.seed);
    let _ = writeln!(s, "grid = {}x{} cells of {} m, origin {},{}", spec.rows, spec.cols, spec.cell_size, spec.origin.0, spec.origin.1);
    let _ = writeln!(s, "span = [{}, {})", format_timestamp(&spec.start), format_timestamp(&spec.end));
    let _ = writeln!(s, "pollutant = NO2");
    for (f, w) in Family::ALL.iter().zip(spec.weights) {
        let _ = writeln!(s, "weight.{} = {w}", f.as_str());
    }
    let _ = writeln!(s, "intercept = {}", spec.intercept);
    let _ = writeln!(s, "{}", g.describe());
    let _ = writeln!(s, "value = max(0, g + e), e ~ N(0, {})", spec.noise_sigma);
    let _ = writeln!(s, "adversarial value = max(0, level - (g - {}) + e)", spec.intercept);
    let _ = writeln!(s, "missing_rate = {}", spec.missing_rate);
    for st in stations {
        let tag = match levels.iter().find(|l| l.0 == st.station_id) {
            Some((_, l)) => format!(" adversarial level {l}"),
            None => String::new(),
        };
        let _ = writeln!(s, "station {} {} cell {}{tag}", st.station_id, st.environment_class, st.snapped_cell);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn write_recipe(path: &Path, years: &BTreeSet<i32>) -> Result<()> {
    let y: Vec<i32> = years.iter().copied().collect();
    // spans shorter than three calendar years get no recipe
    let [train, valid, test, ..] = y.as_slice() else {
        return Ok(());
    };
    let text = format!(
        "input_dir = .\npollutants = NO2\nfamilies = All\ntrain_years = {train}\nvalidation_years = {valid}\n\
         test_years = {test}\nsearch_preset = desk\nn_configs = 4\nlearning_rate = 0.05..0.3\nmax_trees = 400\n\
         seed = 7\nloov = true\nloov_folds = 5\nloov_reuse_config = true\n"
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
