use std::collections::BTreeMap;
use std::path::Path;

use super::{check_columns, field, open_csv, parse_at, record_error, HighwayType};
use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};

/// Distance reported for a road type absent from the whole network.
pub const ROAD_DISTANCE_SENTINEL: f64 = 1.0e6;

/// Elements per cell: a distance and a length for each of the 14 types.
pub const ROAD_FEATURES: usize = 28;

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub segment_id: String,
    pub highway_type: HighwayType,
    pub polyline: Vec<(f64, f64)>,
}

impl RoadSegment {
    pub fn new(
        segment_id: impl Into<String>,
        highway_type: HighwayType,
        polyline: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let seg = RoadSegment {
            segment_id: segment_id.into(),
            highway_type,
            polyline,
        };
        if seg.polyline.len() < 2 {
            return Err(Error::invalid(format!(
                "road {} needs at least two points",
                seg.segment_id
            )));
        }
        if seg.polyline.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid(format!("road {} has non-finite coordinates", seg.segment_id)));
        }
        if !(seg.length() > 0.0) {
            return Err(Error::invalid(format!("road {} has zero length", seg.segment_id)));
        }
        Ok(seg)
    }

    pub fn length(&self) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum()
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| point_segment_distance((x, y), w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_wkt(&self) -> String {
        let coords: Vec<String> = self
            .polyline
            .iter()
            .map(|(x, y)| format!("{x} {y}"))
            .collect();
        format!("LINESTRING ({})", coords.join(", "))
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.0 - a.0).hypot(p.1 - a.1);
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    (p.0 - (a.0 + t * dx)).hypot(p.1 - (a.1 + t * dy))
}

/// Parses `LINESTRING (x y, x y, ...)`.
pub fn parse_wkt_linestring(s: &str) -> Result<Vec<(f64, f64)>> {
    let s = s.trim();
    let upper = s.to_ascii_uppercase();
    let rest = upper
        .strip_prefix("LINESTRING")
        .ok_or_else(|| Error::invalid(format!("not a WKT LINESTRING: {s:?}")))?;
    let body = rest.trim();
    let inner = body
        .strip_prefix('(')
        .and_then(|b| b.strip_suffix(')'))
        .ok_or_else(|| Error::invalid(format!("malformed LINESTRING: {s:?}")))?;
    inner
        .split(',')
        .map(|pair| {
            let mut it = pair.split_whitespace();
            let x = it.next().and_then(|v| v.parse::<f64>().ok());
            let y = it.next().and_then(|v| v.parse::<f64>().ok());
            match (x, y, it.next()) {
                (Some(x), Some(y), None) => Ok((x, y)),
                _ => Err(Error::invalid(format!("bad coordinate pair {pair:?}"))),
            }
        })
        .collect()
}

/// Splits one straight piece into per-cell lengths by cutting it at every
/// grid line it crosses. Pieces are attributed to the half-open cell that
/// contains their midpoint, so the lengths partition the piece exactly.
fn clip_piece(area: &StudyArea, a: (f64, f64), b: (f64, f64), mut emit: impl FnMut(CellId, f64)) {
    let (ox, oy) = area.origin();
    let s = area.cell_size();
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return;
    }
    let mut ts = vec![0.0, 1.0];
    for (p0, d, o) in [(a.0, dx, ox), (a.1, dy, oy)] {
        if d == 0.0 {
            continue;
        }
        let k0 = ((p0 - o) / s).floor() as i64;
        let k1 = ((p0 + d - o) / s).floor() as i64;
        let (lo, hi) = if k0 <= k1 { (k0, k1) } else { (k1, k0) };
        for k in lo..=hi + 1 {
            let t = (o + k as f64 * s - p0) / d;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
    for w in ts.windows(2) {
        let dt = w[1] - w[0];
        if dt <= 0.0 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let (mx, my) = (a.0 + tm * dx, a.1 + tm * dy);
        if let Ok(cell) = area.cell_lookup(mx, my) {
            emit(cell, dt * len);
        }
    }
}

/// Length of `segment` falling in each masked cell.
pub fn clipped_lengths(area: &StudyArea, segment: &RoadSegment) -> BTreeMap<CellId, f64> {
    let mut out = BTreeMap::new();
    for w in segment.polyline.windows(2) {
        clip_piece(area, w[0], w[1], |cell, l| *out.entry(cell).or_insert(0.0) += l);
    }
    out
}

/// Per-cell transport-infrastructure features.
///
/// Layout per cell: 14 nearest-road distances (one per [`HighwayType`], in
/// declaration order) followed by 14 total clipped lengths.
#[derive(Debug, Clone)]
pub struct RoadFeatures {
    values: Vec<[f64; ROAD_FEATURES]>,
}

impl RoadFeatures {
    pub fn cell(&self, id: CellId) -> &[f64; ROAD_FEATURES] {
        &self.values[id as usize]
    }

    pub fn distance(&self, id: CellId, ty: HighwayType) -> f64 {
        self.values[id as usize][ty.index()]
    }

    pub fn length(&self, id: CellId, ty: HighwayType) -> f64 {
        self.values[id as usize][HighwayType::ALL.len() + ty.index()]
    }

    /// Lengths of the 14 types in declaration order.
    pub fn lengths(&self, id: CellId) -> &[f64] {
        &self.values[id as usize][HighwayType::ALL.len()..]
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }
}

pub fn road_structural_features(area: &StudyArea, segments: &[RoadSegment]) -> RoadFeatures {
    let n_types = HighwayType::ALL.len();
    let mut values = vec![[0.0; ROAD_FEATURES]; area.len()];
    for v in values.iter_mut() {
        v[..n_types].fill(ROAD_DISTANCE_SENTINEL);
    }

    let mut by_type: Vec<Vec<&RoadSegment>> = vec![Vec::new(); n_types];
    for seg in segments {
        by_type[seg.highway_type.index()].push(seg);
        for w in seg.polyline.windows(2) {
            clip_piece(area, w[0], w[1], |cell, l| {
                values[cell as usize][n_types + seg.highway_type.index()] += l;
            });
        }
    }

    for cell in area.cells() {
        let v = &mut values[cell.cell_id as usize];
        for (t, segs) in by_type.iter().enumerate() {
            if let Some(d) = segs
                .iter()
                .map(|s| s.distance_to(cell.centroid_x, cell.centroid_y))
                .reduce(f64::min)
            {
                v[t] = d;
            }
        }
    }
    RoadFeatures { values }
}

/// Reads `segment_id,highway_type,wkt_linestring`.
pub fn load_roads(path: &Path) -> Result<Vec<RoadSegment>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_columns(path, &rec, 3)?;
        let polyline =
            parse_wkt_linestring(field(path, &rec, 2)?).map_err(|e| record_error(path, &rec, e))?;
        let seg = RoadSegment::new(field(path, &rec, 0)?, parse_at(path, &rec, 1)?, polyline)
            .map_err(|e| record_error(path, &rec, e))?;
        out.push(seg);
    }
    Ok(out)
}

pub fn write_roads(path: &Path, roads: &[RoadSegment]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["segment_id", "highway_type", "wkt_linestring"])?;
    for r in roads {
        w.write_record([r.segment_id.as_str(), r.highway_type.as_str(), &r.to_wkt()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
