//! Accuracy metrics, peak-event error and threshold exceedance analysis.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};
use crate::ingest::temporal::format_timestamp;
use crate::ingest::{Pollutant, Timestamp};

/// Coefficient of determination of `pred` against `actual`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::invalid(format!("{} predictions for {} actuals", pred.len(), actual.len())));
    }
    if actual.len() < 2 {
        return Err(Error::invalid("R² needs at least two values"));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("R² of constant actuals".into()));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Signed percentage by which the model misses the measured peak.
pub fn peak_distance_pct(measured_peak: f64, prediction: f64) -> f64 {
    (measured_peak - prediction) / measured_peak * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakReport {
    pub station_id: String,
    pub pollutant: Pollutant,
    pub measured_peak: f64,
    pub peak_timestamp: Timestamp,
    pub model_prediction_at_peak: f64,
    pub peak_distance_pct: f64,
}

impl PeakReport {
    pub fn recompute(&self) -> f64 {
        peak_distance_pct(self.measured_peak, self.model_prediction_at_peak)
    }
}

/// Locates the largest measurement (earliest on ties) and compares the
/// prediction at that hour.
pub fn peak_distance(
    station_id: &str,
    pollutant: Pollutant,
    measured: &[(Timestamp, f64)],
    predicted: &BTreeMap<Timestamp, f64>,
) -> Result<PeakReport> {
    let mut peak: Option<(Timestamp, f64)> = None;
    for &(ts, v) in measured {
        if !v.is_finite() {
            continue;
        }
        match peak {
            Some((pt, pv)) if v < pv || (v == pv && ts >= pt) => {}
            _ => peak = Some((ts, v)),
        }
    }
    let (ts, v) = peak.ok_or_else(|| Error::invalid(format!("station {station_id} has no finite measurement")))?;
    if v == 0.0 {
        return Err(Error::Undefined(format!("station {station_id} peaks at zero")));
    }
    let p = *predicted.get(&ts).ok_or_else(|| {
        Error::DataGap(vec![format!("no prediction for station {station_id} at peak {}", format_timestamp(&ts))])
    })?;
    Ok(PeakReport {
        station_id: station_id.to_string(),
        pollutant,
        measured_peak: v,
        peak_timestamp: ts,
        model_prediction_at_peak: p,
        peak_distance_pct: peak_distance_pct(v, p),
    })
}

pub fn mean_peak_distance(reports: &[PeakReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::invalid("no peak reports to average"));
    }
    Ok(reports.iter().map(|r| r.peak_distance_pct).sum::<f64>() / reports.len() as f64)
}

/// Values strictly above `threshold`; NaN never counts.
pub fn exceedance_count(values: &[f64], threshold: f64) -> usize {
    values.iter().filter(|&&v| v > threshold).count()
}

/// Trailing 24-hour means of an hourly series. The first 23 hours, and any
/// window containing a NaN, are undefined.
pub fn running_mean_24h(values: &[f64]) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| {
            if i < 23 {
                return None;
            }
            let w = &values[i - 23..=i];
            if w.iter().any(|v| v.is_nan()) {
                return None;
            }
            Some(w.iter().sum::<f64>() / 24.0)
        })
        .collect()
}

/// As [`running_mean_24h`], checking that `timestamps` step by one hour.
pub fn running_mean_24h_at(timestamps: &[Timestamp], values: &[f64]) -> Result<Vec<Option<f64>>> {
    if timestamps.len() != values.len() {
        return Err(Error::invalid("timestamps and values differ in length"));
    }
    for w in timestamps.windows(2) {
        if w[1] - w[0] != Duration::hours(1) {
            return Err(Error::invalid(format!(
                "series is not hourly and ordered at {}",
                format_timestamp(&w[1])
            )));
        }
    }
    Ok(running_mean_24h(values))
}

pub fn hours_in_year(year: i32) -> usize {
    let leap = NaiveDate::from_ymd_opt(year, 2, 29).is_some();
    if leap {
        8784
    } else {
        8760
    }
}

/// Per-cell count of hours above a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceMap {
    pub threshold: f64,
    pub hours_in_period: usize,
    pub counts: Vec<(CellId, usize)>,
}

impl ExceedanceMap {
    /// Counts over one hourly series per cell, in parallel over cells.
    pub fn from_series(threshold: f64, series: &[(CellId, Vec<f64>)]) -> Result<Self> {
        let hours = series.first().map_or(0, |s| s.1.len());
        if series.iter().any(|s| s.1.len() != hours) {
            return Err(Error::invalid("cell series differ in length"));
        }
        let counts = series.par_iter().map(|(c, v)| (*c, exceedance_count(v, threshold))).collect();
        Ok(ExceedanceMap {
            threshold,
            hours_in_period: hours,
            counts,
        })
    }

    pub fn max_count(&self) -> usize {
        self.counts.iter().map(|c| c.1).max().unwrap_or(0)
    }

    /// `cell_id,count`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell_id", "count"])?;
        for (c, n) in &self.counts {
            w.write_record([c.to_string(), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Binary greyscale raster, north up, `round(255 * count / max)`;
    /// cells outside the mask are black.
    pub fn pgm_bytes(&self, area: &StudyArea) -> Result<Vec<u8>> {
        let (rows, cols) = area.dims();
        let mut pixels = vec![0u8; rows as usize * cols as usize];
        let max = self.max_count();
        for &(cell, count) in &self.counts {
            let c = area.cell(cell)?;
            let v = if max == 0 {
                0
            } else {
                (255.0 * count as f64 / max as f64).round() as u8
            };
            let r = (rows - 1 - c.row) as usize;
            pixels[r * cols as usize + c.col as usize] = v;
        }
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        out.extend(pixels);
        Ok(out)
    }

    pub fn write_pgm(&self, path: &Path, area: &StudyArea) -> Result<()> {
        let bytes = self.pgm_bytes(area)?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// Share of cells with at least one exceedance.
pub fn exceedance_share(map: &ExceedanceMap) -> Result<f64> {
    if map.counts.is_empty() {
        return Err(Error::invalid("empty exceedance map"));
    }
    Ok(map.counts.iter().filter(|c| c.1 >= 1).count() as f64 / map.counts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::temporal::{hourly_range, parse_timestamp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // SS_res = 4 + 0 + 4 = 8, SS_tot = 2 → 1 - 4 = -3.
        assert_eq!(r_squared(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), -3.0);
        assert!(matches!(r_squared(&[1.0, 2.0], &[5.0, 5.0]), Err(Error::Undefined(_))));
        assert!(r_squared(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn r_squared_degrades_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let actual: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() * 50.0).collect();
        let unit: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut prev = f64::INFINITY;
        for scale in [0.0, 5.0, 10.0, 20.0, 40.0] {
            let pred: Vec<f64> = actual.iter().zip(&unit).map(|(a, u)| 0.9 * a + 2.0 + scale * u).collect();
            let r = r_squared(&pred, &actual).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn series(values: &[f64]) -> Vec<(Timestamp, f64)> {
        hourly_range(ts("2018-01-01T00:00:00Z"), ts("2019-01-01T00:00:00Z"))
            .zip(values.iter().copied())
            .collect()
    }

    #[test]
    fn peak_examples() {
        let m = series(&[10.0, 100.0, 30.0, 100.0]);
        let pred: BTreeMap<Timestamp, f64> = m.iter().map(|&(t, _)| (t, 50.0)).collect();
        let r = peak_distance("s", Pollutant::No2, &m, &pred).unwrap();
        assert_eq!(r.peak_timestamp, m[1].0);
        assert_eq!(r.peak_distance_pct, 50.0);
        assert_eq!(r.recompute(), r.peak_distance_pct);

        let exact: BTreeMap<Timestamp, f64> = m.iter().map(|&(t, v)| (t, v)).collect();
        assert_eq!(peak_distance("s", Pollutant::No2, &m, &exact).unwrap().peak_distance_pct, 0.0);

        let mut missing = pred.clone();
        missing.remove(&m[1].0);
        assert!(peak_distance("s", Pollutant::No2, &m, &missing).unwrap_err().is_data_gap());
        assert!(peak_distance("s", Pollutant::No2, &[], &pred).is_err());
    }

    #[test]
    fn leominster_inversion() {
        // Inverting the percentage definition: p = peak·(1 - d/100).
        let peak: f64 = 80.2;
        let d = 42.5;
        let p = peak * (1.0 - d / 100.0);
        assert!((p - 46.115).abs() < 1e-9);
        let m = series(&[12.0, peak, 40.0]);
        let pred: BTreeMap<Timestamp, f64> = m.iter().map(|&(t, _)| (t, p)).collect();
        let r = peak_distance("leominster", Pollutant::No2, &m, &pred).unwrap();
        assert!((r.peak_distance_pct - 42.5).abs() < 1e-9);
    }

    #[test]
    fn peak_distance_is_antisymmetric() {
        assert_eq!(peak_distance_pct(60.0, 75.0), -peak_distance_pct(60.0, 45.0));
    }

    #[test]
    fn mean_peak_examples() {
        let mk = |d: f64| PeakReport {
            station_id: "s".into(),
            pollutant: Pollutant::No2,
            measured_peak: 1.0,
            peak_timestamp: ts("2018-01-01T00:00:00Z"),
            model_prediction_at_peak: 1.0 - d / 100.0,
            peak_distance_pct: d,
        };
        assert_eq!(mean_peak_distance(&[mk(10.0)]).unwrap(), 10.0);
        assert_eq!(mean_peak_distance(&[mk(20.0), mk(-20.0)]).unwrap(), 0.0);
        let five = [12.5, -3.0, 40.0, 7.25, 0.5];
        let reports: Vec<PeakReport> = five.iter().map(|&d| mk(d)).collect();
        // Hand sum: 12.5 - 3 + 40 + 7.25 + 0.5 = 57.25.
        assert!((mean_peak_distance(&reports).unwrap() - 57.25 / 5.0).abs() < 1e-12);
        assert!(mean_peak_distance(&[]).is_err());
    }

    #[test]
    fn exceedance_examples() {
        let v = [9.0, 11.0, 26.0, 41.0, 300.0];
        assert_eq!(exceedance_count(&v, 25.0), 3);
        assert_eq!(exceedance_count(&v, 200.0), 1);
        assert_eq!(exceedance_count(&[25.0], 25.0), 0);
        let year: Vec<f64> = hourly_range(ts("2018-01-01T00:00:00Z"), ts("2019-01-01T00:00:00Z")).map(|_| 11.0).collect();
        assert_eq!(year.len(), hours_in_year(2018));
        assert_eq!(exceedance_count(&year, 10.0), 8760);
        let mut prev = usize::MAX;
        for t in [0.0, 10.0, 25.0, 40.0, 200.0, 1000.0] {
            let c = exceedance_count(&v, t);
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn running_mean_examples() {
        let c = running_mean_24h(&[4.5; 30]);
        assert!(c[..23].iter().all(Option::is_none));
        assert!(c[23..].iter().all(|v| *v == Some(4.5)));

        let mut steps = vec![1.0; 24];
        steps.extend([0.0; 24]);
        let r = running_mean_24h(&steps);
        assert_eq!(r[23], Some(1.0));
        assert_eq!(r[35], Some(0.5));
        assert_eq!(r[47], Some(0.0));

        let mut gap = vec![2.0; 50];
        gap[30] = f64::NAN;
        let r = running_mean_24h(&gap);
        assert_eq!(r[29], Some(2.0));
        assert!(r[30..=49].iter().take(20).all(Option::is_none));
        assert_eq!(r[49], None);
    }

    #[test]
    fn running_mean_bounds_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 80.0).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 13.0).collect();
        let a = running_mean_24h(&v);
        let b = running_mean_24h(&shifted);
        for i in 23..200 {
            let w = &v[i - 23..=i];
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let m = a[i].unwrap();
            assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
            assert!((b[i].unwrap() - (m + 13.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn running_mean_rejects_unordered() {
        let t: Vec<Timestamp> = hourly_range(ts("2018-01-01T00:00:00Z"), ts("2018-01-02T02:00:00Z")).collect();
        let v = vec![1.0; t.len()];
        assert!(running_mean_24h_at(&t, &v).is_ok());
        let mut bad = t.clone();
        bad.swap(3, 4);
        assert!(running_mean_24h_at(&bad, &v).is_err());
    }

    #[test]
    fn shares_by_cell_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let series: Vec<(CellId, Vec<f64>)> = (0..1000u32)
            .map(|c| {
                let level: f64 = if c == 0 { 250.0 } else { rng.random::<f64>() * 60.0 + 5.0 };
                let v: Vec<f64> = (0..48).map(|h| level * (0.7 + 0.3 * ((h as f64) / 7.0).sin().abs())).collect();
                (c, v)
            })
            .collect();
        for t in [10.0, 25.0, 40.0, 200.0] {
            let map = ExceedanceMap::from_series(t, &series).unwrap();
            let brute = series.iter().filter(|(_, v)| v.iter().any(|&x| x > t)).count() as f64 / 1000.0;
            assert_eq!(exceedance_share(&map).unwrap(), brute);
            assert!(map.counts.iter().all(|c| c.1 <= map.hours_in_period));
        }
        let top = ExceedanceMap::from_series(200.0, &series).unwrap();
        assert_eq!(top.counts.iter().filter(|c| c.1 >= 1).count(), 1);
        let all = ExceedanceMap::from_series(0.0, &series).unwrap();
        assert_eq!(exceedance_share(&all).unwrap(), 1.0);
        let none = ExceedanceMap::from_series(1e9, &series).unwrap();
        assert_eq!(exceedance_share(&none).unwrap(), 0.0);
    }

    #[test]
    fn pgm_raster_values() {
        let area = StudyArea::rectangle((0.0, 0.0), 1000.0, 2, 2).unwrap();
        let map = ExceedanceMap {
            threshold: 10.0,
            hours_in_period: 10,
            counts: vec![(0, 0), (1, 3), (2, 10), (3, 5)],
        };
        let bytes = map.pgm_bytes(&area).unwrap();
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        let cell = |id: CellId| {
            let c = area.cell(id).unwrap();
            px[((1 - c.row) * 2 + c.col) as usize]
        };
        assert_eq!(cell(0), 0);
        assert_eq!(cell(1), 77); // round(76.5)
        assert_eq!(cell(2), 255);
        assert_eq!(cell(3), 128); // round(127.5)
    }
}
