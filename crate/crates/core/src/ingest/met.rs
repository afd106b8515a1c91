//! Meteorology: scattered reanalysis samples interpolated onto centroids by
//! inverse-distance weighting.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::temporal::{parse_timestamp, require_whole_hour, Timestamp};
use super::{check_columns, field, open_csv, parse_at, record_error, MetVariable};
use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};

/// Distance below which a centroid takes a sample's value verbatim.
pub const IDW_SNAP_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdwParams {
    pub power: f64,
    pub k_neighbors: usize,
}

impl Default for IdwParams {
    fn default() -> Self {
        IdwParams {
            power: 2.0,
            k_neighbors: 8,
        }
    }
}

/// Normalized interpolation weights of the `k` nearest sample points for one
/// target location. Ties in distance resolve to the lower sample index.
pub fn idw_weights(points: &[(f64, f64)], target: (f64, f64), params: IdwParams) -> Result<Vec<(usize, f64)>> {
    if points.is_empty() {
        return Err(Error::invalid("IDW needs at least one sample"));
    }
    if !(params.power > 0.0) || params.k_neighbors == 0 {
        return Err(Error::invalid("IDW power must be positive and k at least 1"));
    }
    let mut dist: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.0 - target.0).hypot(p.1 - target.1), i))
        .collect();
    dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    dist.truncate(params.k_neighbors);

    if dist[0].0 < IDW_SNAP_DISTANCE {
        return Ok(vec![(dist[0].1, 1.0)]);
    }
    let raw: Vec<(usize, f64)> = dist
        .iter()
        .map(|&(d, i)| (i, 1.0 / d.powf(params.power)))
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    Ok(raw.into_iter().map(|(i, w)| (i, w / total)).collect())
}

fn apply_weights(weights: &[(usize, f64)], values: &[f64]) -> f64 {
    if let [(i, _)] = weights {
        return values[*i];
    }
    weights.iter().map(|&(i, w)| w * values[i]).sum()
}

/// Interpolates one timestamp's samples `(x, y, value)` at every centroid.
pub fn idw_interpolate(
    samples: &[(f64, f64, f64)],
    centroids: &[(f64, f64)],
    params: IdwParams,
) -> Result<Vec<f64>> {
    let points: Vec<(f64, f64)> = samples.iter().map(|s| (s.0, s.1)).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.2).collect();
    centroids
        .iter()
        .map(|&c| Ok(apply_weights(&idw_weights(&points, c, params)?, &values)))
        .collect()
}

#[derive(Debug, Clone)]
struct Layout {
    weights: Vec<Vec<(usize, f64)>>,
}

/// Hourly samples of one variable, interpolated lazily per cell.
///
/// Timestamps sharing the same set of sample locations share one set of
/// precomputed per-cell weights.
#[derive(Debug, Clone)]
pub struct MetField {
    variable: MetVariable,
    layouts: Vec<Layout>,
    series: HashMap<Timestamp, (usize, Vec<f64>)>,
}

impl MetField {
    /// Builds the field from `(x, y, timestamp, value)` samples.
    pub fn build(
        variable: MetVariable,
        samples: &[(f64, f64, Timestamp, f64)],
        area: &StudyArea,
        params: IdwParams,
    ) -> Result<Self> {
        let mut by_ts: BTreeMap<Timestamp, Vec<(f64, f64, f64)>> = BTreeMap::new();
        for &(x, y, ts, v) in samples {
            if !(x.is_finite() && y.is_finite() && v.is_finite()) {
                return Err(Error::invalid(format!("non-finite {variable} sample at {ts}")));
            }
            by_ts.entry(ts).or_default().push((x, y, v));
        }

        let centroids: Vec<(f64, f64)> = area
            .cells()
            .iter()
            .map(|c| (c.centroid_x, c.centroid_y))
            .collect();
        let mut layout_ids: HashMap<Vec<(u64, u64)>, usize> = HashMap::new();
        let mut layouts = Vec::new();
        let mut series = HashMap::with_capacity(by_ts.len());
        for (ts, mut pts) in by_ts {
            pts.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite"));
            let key: Vec<(u64, u64)> = pts.iter().map(|p| (p.0.to_bits(), p.1.to_bits())).collect();
            let id = match layout_ids.get(&key) {
                Some(&id) => id,
                None => {
                    let points: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.1)).collect();
                    let weights = centroids
                        .iter()
                        .map(|&c| idw_weights(&points, c, params))
                        .collect::<Result<Vec<_>>>()?;
                    layouts.push(Layout { weights });
                    layout_ids.insert(key, layouts.len() - 1);
                    layouts.len() - 1
                }
            };
            series.insert(ts, (id, pts.iter().map(|p| p.2).collect()));
        }
        Ok(MetField {
            variable,
            layouts,
            series,
        })
    }

    pub fn variable(&self) -> MetVariable {
        self.variable
    }

    pub fn value(&self, cell: CellId, ts: &Timestamp) -> Option<f64> {
        let (layout, values) = self.series.get(ts)?;
        let weights = self.layouts[*layout].weights.get(cell as usize)?;
        Some(apply_weights(weights, values))
    }

    pub fn n_timestamps(&self) -> usize {
        self.series.len()
    }
}

/// One sample row of the meteorology file.
pub type MetSample = (MetVariable, f64, f64, Timestamp, f64);

/// Reads `variable,x,y,timestamp,value`.
pub fn load_met_samples(path: &Path) -> Result<Vec<MetSample>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_columns(path, &rec, 5)?;
        let ts = parse_timestamp(field(path, &rec, 3)?).map_err(|e| record_error(path, &rec, e))?;
        require_whole_hour(&ts).map_err(|e| record_error(path, &rec, e))?;
        out.push((
            parse_at(path, &rec, 0)?,
            parse_at(path, &rec, 1)?,
            parse_at(path, &rec, 2)?,
            ts,
            parse_at(path, &rec, 4)?,
        ));
    }
    Ok(out)
}

/// Builds one field per variable. Every variable must have samples.
pub fn build_met_fields(
    samples: &[MetSample],
    area: &StudyArea,
    params: IdwParams,
) -> Result<Vec<MetField>> {
    let mut grouped: Vec<Vec<(f64, f64, Timestamp, f64)>> = vec![Vec::new(); MetVariable::ALL.len()];
    for &(var, x, y, ts, v) in samples {
        grouped[var.index()].push((x, y, ts, v));
    }
    MetVariable::ALL
        .iter()
        .zip(grouped)
        .map(|(&var, s)| {
            if s.is_empty() {
                return Err(Error::invalid(format!("no meteorology samples for {var}")));
            }
            MetField::build(var, &s, area, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: IdwParams = IdwParams {
        power: 2.0,
        k_neighbors: 8,
    };

    #[test]
    fn single_sample_everywhere() {
        let out = idw_interpolate(&[(3.0, 4.0, 12.5)], &[(0.0, 0.0), (100.0, -7.0)], P).unwrap();
        assert_eq!(out, vec![12.5, 12.5]);
    }

    #[test]
    fn exact_at_sample_locations() {
        let samples = [(0.0, 0.0, 1.0), (10.0, 0.0, 2.0), (0.0, 10.0, 3.7)];
        let out = idw_interpolate(&samples, &[(10.0, 0.0), (0.0, 10.0)], P).unwrap();
        assert_eq!(out, vec![2.0, 3.7]);
    }

    #[test]
    fn equidistant_pair() {
        let out = idw_interpolate(&[(-5.0, 0.0, 10.0), (5.0, 0.0, 20.0)], &[(0.0, 3.0)], P).unwrap();
        assert_eq!(out, vec![15.0]);
    }

    #[test]
    fn rejects_empty_samples() {
        assert!(idw_interpolate(&[], &[(0.0, 0.0)], P).is_err());
    }

    #[test]
    fn uses_only_k_nearest() {
        let samples = [(1.0, 0.0, 1.0), (2.0, 0.0, 1.0), (100.0, 0.0, 1000.0)];
        let p = IdwParams {
            power: 2.0,
            k_neighbors: 2,
        };
        assert_eq!(idw_interpolate(&samples, &[(0.0, 0.0)], p).unwrap(), vec![1.0]);
    }

    #[test]
    fn field_matches_direct_interpolation() {
        let area = StudyArea::rectangle((0.0, 0.0), 1000.0, 3, 3).unwrap();
        let t0 = parse_timestamp("2018-01-01T00:00Z").unwrap();
        let t1 = parse_timestamp("2018-01-01T01:00Z").unwrap();
        let pts = [(0.0, 0.0), (3000.0, 0.0), (0.0, 3000.0), (3000.0, 3000.0)];
        let mut samples = Vec::new();
        for (i, p) in pts.iter().enumerate() {
            samples.push((p.0, p.1, t0, i as f64));
            samples.push((p.0, p.1, t1, 10.0 * i as f64));
        }
        let field = MetField::build(MetVariable::Temperature2m, &samples, &area, P).unwrap();
        assert_eq!(field.layouts.len(), 1);
        let centroids: Vec<_> = area.cells().iter().map(|c| (c.centroid_x, c.centroid_y)).collect();
        let direct: Vec<(f64, f64, f64)> = pts.iter().enumerate().map(|(i, p)| (p.0, p.1, 10.0 * i as f64)).collect();
        let expected = idw_interpolate(&direct, &centroids, P).unwrap();
        for c in area.cells() {
            assert_eq!(field.value(c.cell_id, &t1).unwrap(), expected[c.cell_id as usize]);
        }
        assert!(field.value(0, &(t1 + chrono::Duration::hours(1))).is_none());
    }

    proptest! {
        #[test]
        fn output_within_sample_range(
            samples in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4, -50.0f64..50.0), 1..20),
            targets in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..10),
        ) {
            let lo = samples.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
            for v in idw_interpolate(&samples, &targets, P).unwrap() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
