use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::temporal::{temporal_features, Timestamp};
use super::{check_columns, field, open_csv, parse_at, record_error, DayKind, HighwayType, TravelMode};
use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};

/// Tolerance on the sum of a 24-hour travel profile.
pub const PROFILE_SUM_TOLERANCE: f64 = 1e-9;

pub type Profile24 = [f64; 24];

/// Mean daily flow per meter of road, by region, road type and mode.
#[derive(Debug, Clone, Default)]
pub struct TrafficMeans {
    means: BTreeMap<String, HashMap<(HighwayType, TravelMode), f64>>,
}

impl TrafficMeans {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        region: &str,
        ty: HighwayType,
        mode: TravelMode,
        mean_flow_per_meter: f64,
    ) -> Result<()> {
        if !ty.carries_motor_traffic() {
            return Err(Error::invalid(format!(
                "road type {ty} carries no motor traffic and cannot have a traffic mean"
            )));
        }
        if !(mean_flow_per_meter >= 0.0 && mean_flow_per_meter.is_finite()) {
            return Err(Error::invalid(format!(
                "traffic mean must be a non-negative number, got {mean_flow_per_meter}"
            )));
        }
        self.means
            .entry(region.to_string())
            .or_default()
            .insert((ty, mode), mean_flow_per_meter);
        Ok(())
    }

    pub fn has_region(&self, region: &str) -> bool {
        self.means.contains_key(region)
    }

    pub fn regions(&self) -> impl Iterator<Item = &str> {
        self.means.keys().map(String::as_str)
    }

    pub fn get(&self, region: &str, ty: HighwayType, mode: TravelMode) -> Option<f64> {
        self.means.get(region)?.get(&(ty, mode)).copied()
    }

    /// Reads `region_id,highway_type,mode,mean_flow_per_meter`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let mut out = TrafficMeans::new();
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(path, &rec, 4)?;
            let region = field(path, &rec, 0)?.to_string();
            out.insert(
                &region,
                parse_at(path, &rec, 1)?,
                parse_at(path, &rec, 2)?,
                parse_at(path, &rec, 3)?,
            )
            .map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["region_id", "highway_type", "mode", "mean_flow_per_meter"])?;
        for (region, m) in &self.means {
            let mut entries: Vec<_> = m.iter().collect();
            entries.sort_by_key(|(k, _)| **k);
            for ((ty, mode), v) in entries {
                w.write_record([region.as_str(), ty.as_str(), mode.as_str(), &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Daily per-mode traffic score of one cell: the sum over motor road types
/// of clipped length times mean flow per meter. Missing means count as zero.
pub fn traffic_grid_score(
    lengths: &[f64],
    region: &str,
    means: &TrafficMeans,
) -> Result<[f64; 5]> {
    if lengths.len() != HighwayType::ALL.len() {
        return Err(Error::invalid(format!(
            "expected {} road lengths, got {}",
            HighwayType::ALL.len(),
            lengths.len()
        )));
    }
    let region_means = means
        .means
        .get(region)
        .ok_or_else(|| Error::invalid(format!("unknown traffic region {region:?}")))?;
    let mut score = [0.0; 5];
    for &mode in TravelMode::ALL {
        let mut s = 0.0;
        for ty in HighwayType::MOTOR {
            let len = lengths[ty.index()];
            if len == 0.0 {
                continue;
            }
            s += len * region_means.get(&(ty, mode)).copied().unwrap_or(0.0);
        }
        score[mode.index()] = s;
    }
    Ok(score)
}

/// Share of a daily total falling in the timestamp's hour.
pub fn temporal_distribute(daily_score: f64, profile: &Profile24, ts: &Timestamp) -> f64 {
    let (hour, ..) = temporal_features(ts);
    daily_score * profile[hour as usize]
}

/// Cell to region assignment.
#[derive(Debug, Clone, Default)]
pub struct RegionMap {
    regions: Vec<Option<String>>,
}

impl RegionMap {
    pub fn new(area: &StudyArea) -> Self {
        RegionMap {
            regions: vec![None; area.len()],
        }
    }

    pub fn assign(&mut self, cell: CellId, region: impl Into<String>) -> Result<()> {
        let slot = self
            .regions
            .get_mut(cell as usize)
            .ok_or(Error::UnknownCell(cell))?;
        *slot = Some(region.into());
        Ok(())
    }

    pub fn region(&self, cell: CellId) -> Result<&str> {
        self.regions
            .get(cell as usize)
            .and_then(|r| r.as_deref())
            .ok_or_else(|| Error::invalid(format!("cell {cell} has no region assignment")))
    }

    /// Reads `cell_id,region_id`.
    pub fn load(path: &Path, area: &StudyArea) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let mut out = RegionMap::new(area);
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(path, &rec, 2)?;
            let cell: CellId = parse_at(path, &rec, 0)?;
            out.assign(cell, field(path, &rec, 1)?)
                .map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell_id", "region_id"])?;
        for (cell, r) in self.regions.iter().enumerate() {
            if let Some(r) = r {
                w.write_record([cell.to_string().as_str(), r.as_str()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Normalized hourly travel shares by region, day kind and mode.
#[derive(Debug, Clone, Default)]
pub struct TravelProfiles {
    profiles: BTreeMap<(String, DayKind, TravelMode), Profile24>,
}

impl TravelProfiles {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a profile; it must be non-negative and sum to one.
    pub fn insert(
        &mut self,
        region: &str,
        day: DayKind,
        mode: TravelMode,
        profile: Profile24,
    ) -> Result<()> {
        if profile.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "travel profile {region}/{day}/{mode} has negative or non-finite weights"
            )));
        }
        let sum: f64 = profile.iter().sum();
        if (sum - 1.0).abs() > PROFILE_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "travel profile {region}/{day}/{mode} sums to {sum}, not 1"
            )));
        }
        self.profiles.insert((region.to_string(), day, mode), profile);
        Ok(())
    }

    pub fn get(&self, region: &str, day: DayKind, mode: TravelMode) -> Option<&Profile24> {
        self.profiles.get(&(region.to_string(), day, mode))
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Reads `region_id,day_kind,mode,h00,...,h23`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let mut out = TravelProfiles::new();
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(path, &rec, 27)?;
            let mut p = [0.0; 24];
            for (h, slot) in p.iter_mut().enumerate() {
                *slot = parse_at(path, &rec, 3 + h)?;
            }
            out.insert(
                field(path, &rec, 0)?,
                parse_at(path, &rec, 1)?,
                parse_at(path, &rec, 2)?,
                p,
            )
            .map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["region_id".to_string(), "day_kind".into(), "mode".into()];
        header.extend((0..24).map(|h| format!("h{h:02}")));
        w.write_record(&header)?;
        for ((region, day, mode), p) in &self.profiles {
            let mut row = vec![region.clone(), day.as_str().into(), mode.as_str().into()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::temporal::parse_timestamp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lengths(pairs: &[(HighwayType, f64)]) -> Vec<f64> {
        let mut l = vec![0.0; 14];
        for &(t, v) in pairs {
            l[t.index()] = v;
        }
        l
    }

    #[test]
    fn hand_summed_score() {
        let mut means = TrafficMeans::new();
        means.insert("r1", HighwayType::Residential, TravelMode::CarTaxi, 0.002).unwrap();
        means.insert("r1", HighwayType::Motorway, TravelMode::CarTaxi, 0.05).unwrap();
        let l = lengths(&[(HighwayType::Residential, 1000.0), (HighwayType::Motorway, 500.0)]);
        let s = traffic_grid_score(&l, "r1", &means).unwrap();
        assert!((s[TravelMode::CarTaxi.index()] - 27.0).abs() < 1e-12);
        assert_eq!(s[TravelMode::Hgv.index()], 0.0);

        let doubled: Vec<f64> = l.iter().map(|v| v * 2.0).collect();
        let s2 = traffic_grid_score(&doubled, "r1", &means).unwrap();
        for m in 0..5 {
            assert!((s2[m] - 2.0 * s[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn no_roads_scores_zero_and_unknown_region_fails() {
        let mut means = TrafficMeans::new();
        means.insert("r1", HighwayType::Primary, TravelMode::Hgv, 0.3).unwrap();
        assert_eq!(traffic_grid_score(&[0.0; 14], "r1", &means).unwrap(), [0.0; 5]);
        assert!(traffic_grid_score(&[0.0; 14], "nowhere", &means).is_err());
    }

    #[test]
    fn non_motor_types_cannot_carry_means() {
        let mut means = TrafficMeans::new();
        assert!(means.insert("r", HighwayType::Footway, TravelMode::Bicycle, 0.1).is_err());
        assert!(means.insert("r", HighwayType::Primary, TravelMode::Bicycle, -0.1).is_err());
    }

    #[test]
    fn distribution_cases() {
        let day = parse_timestamp("2018-03-05T00:00Z").unwrap();
        let uniform = [1.0 / 24.0; 24];
        for h in 0..24 {
            let ts = day + chrono::Duration::hours(h);
            assert!((temporal_distribute(24.0, &uniform, &ts) - 1.0).abs() < 1e-12);
        }
        let mut delta = [0.0; 24];
        delta[8] = 1.0;
        for h in 0..24 {
            let ts = day + chrono::Duration::hours(h);
            let expected = if h == 8 { 55.5 } else { 0.0 };
            assert_eq!(temporal_distribute(55.5, &delta, &ts), expected);
        }
    }

    #[test]
    fn distribution_conserves_daily_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let day = parse_timestamp("2017-06-10T00:00Z").unwrap();
        for _ in 0..100 {
            let raw: Vec<f64> = (0..24).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mut p = [0.0; 24];
            for (slot, v) in p.iter_mut().zip(&raw) {
                *slot = v / total;
            }
            let daily = rng.random_range(0.0..1e4);
            let sum: f64 = (0..24)
                .map(|h| temporal_distribute(daily, &p, &(day + chrono::Duration::hours(h))))
                .sum();
            assert!((sum - daily).abs() <= 1e-9 * daily.max(1.0));
        }
    }

    #[test]
    fn unnormalized_profiles_are_rejected() {
        let mut tp = TravelProfiles::new();
        assert!(tp.insert("r", DayKind::Weekday, TravelMode::CarTaxi, [0.05; 24]).is_err());
        let mut bad = [1.0 / 24.0; 24];
        bad[0] = -bad[0];
        assert!(tp.insert("r", DayKind::Weekday, TravelMode::CarTaxi, bad).is_err());
        assert!(tp.insert("r", DayKind::Weekday, TravelMode::CarTaxi, [1.0 / 24.0; 24]).is_ok());
    }
}
