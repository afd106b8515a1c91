//! Grid-wide concentration maps and gap-filled station series.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gbdt::{inverse_transform, Ensemble};
use crate::grid::{CellId, StationSite, StudyArea};
use crate::ingest::temporal::{format_timestamp, hourly_range};
use crate::ingest::{Family, FeatureStore, Measurement, Pollutant, Timestamp, N_FEATURES};

pub const DEFAULT_BATCH_ROWS: usize = 65_536;

/// Store column index for each model input, plus the families the model reads.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub indices: Vec<usize>,
    pub families: Vec<Family>,
}

impl ColumnMap {
    /// Matches model columns to store columns by family and name. Models
    /// without column names must take the full store row.
    pub fn new(model: &Ensemble, store: &FeatureStore) -> Result<ColumnMap> {
        let store_cols = store.columns();
        if model.columns.is_empty() {
            if model.n_features() != store_cols.len() {
                return Err(Error::invalid(format!(
                    "unnamed model has {} features, store rows have {}",
                    model.n_features(),
                    store_cols.len()
                )));
            }
            return Ok(ColumnMap {
                indices: (0..store_cols.len()).collect(),
                families: Family::ALL.to_vec(),
            });
        }
        let pos: BTreeMap<(Family, &str), usize> = store_cols
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.family, c.name.as_str()), i))
            .collect();
        let mut indices = Vec::with_capacity(model.columns.len());
        for c in &model.columns {
            let i = pos
                .get(&(c.family, c.name.as_str()))
                .ok_or_else(|| Error::invalid(format!("model column {}:{} not in feature store", c.family, c.name)))?;
            indices.push(*i);
        }
        let mut families: Vec<Family> = model.columns.iter().map(|c| c.family).collect();
        families.sort();
        families.dedup();
        Ok(ColumnMap { indices, families })
    }

    fn project(&self, full: &[f64], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(&self.indices) {
            *o = full[i];
        }
    }

    /// Only gaps in families the model reads matter.
    fn relevant(&self, missing: &[Family]) -> bool {
        missing.iter().any(|f| self.families.contains(f))
    }
}

/// Predicted concentrations for every `(cell, timestamp)`, cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMap {
    pub pollutant: Option<Pollutant>,
    pub cells: Vec<CellId>,
    pub timestamps: Vec<Timestamp>,
    /// `values[c * timestamps.len() + t]`.
    pub values: Vec<f64>,
}

impl ConcentrationMap {
    pub fn value(&self, cell_index: usize, t_index: usize) -> f64 {
        self.values[cell_index * self.timestamps.len() + t_index]
    }

    /// Hourly series of each cell.
    pub fn series(&self) -> Vec<(CellId, Vec<f64>)> {
        let nt = self.timestamps.len();
        self.cells
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, self.values[i * nt..(i + 1) * nt].to_vec()))
            .collect()
    }

    /// `cell_id,timestamp,value`, cells outermost.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let ts: Vec<String> = self.timestamps.iter().map(format_timestamp).collect();
        let io = |e| Error::io(path, e);
        writeln!(w, "cell_id,timestamp,value").map_err(io)?;
        for (i, c) in self.cells.iter().enumerate() {
            for (j, t) in ts.iter().enumerate() {
                writeln!(w, "{c},{t},{}", self.value(i, j)).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Greyscale raster of one timestamp, north up, scaled so the largest
    /// value is 255. Cells outside the map are black.
    pub fn pgm_bytes(&self, area: &StudyArea, t_index: usize) -> Result<Vec<u8>> {
        if t_index >= self.timestamps.len() {
            return Err(Error::invalid("timestamp index out of range"));
        }
        let (rows, cols) = area.dims();
        let mut pixels = vec![0u8; rows as usize * cols as usize];
        let max = (0..self.cells.len()).map(|i| self.value(i, t_index)).fold(0.0, f64::max);
        for (i, &cell) in self.cells.iter().enumerate() {
            let c = area.cell(cell)?;
            let v = if max > 0.0 { (255.0 * self.value(i, t_index) / max).round() as u8 } else { 0 };
            pixels[(rows - 1 - c.row) as usize * cols as usize + c.col as usize] = v;
        }
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        out.extend(pixels);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub rows: usize,
    pub seconds: f64,
    pub rows_per_sec: f64,
}

/// Predicts every `(cell, timestamp)` on `pool`. Work is split into blocks
/// of whole cells of about `batch_rows` rows each; output does not depend
/// on the pool size.
pub fn grid_predict(
    model: &Ensemble,
    store: &FeatureStore,
    cells: &[CellId],
    timestamps: &[Timestamp],
    pool: &rayon::ThreadPool,
    batch_rows: usize,
) -> Result<(ConcentrationMap, Throughput)> {
    let map = ColumnMap::new(model, store)?;
    let nt = timestamps.len();
    let cells_per_block = (batch_rows.max(1) / nt.max(1)).max(1);
    let started = Instant::now();

    let blocks: Vec<std::result::Result<Vec<f64>, Vec<String>>> = pool.install(|| {
        cells
            .par_chunks(cells_per_block)
            .map(|block| {
                let mut full = vec![0.0; N_FEATURES];
                let mut row = vec![0.0; map.indices.len()];
                let mut out = Vec::with_capacity(block.len() * nt);
                let mut gaps = Vec::new();
                for &cell in block {
                    for ts in timestamps {
                        if let Err(missing) = store.fill_row(cell, ts, &mut full) {
                            if map.relevant(&missing) {
                                gaps.push(crate::ingest::store::gap_message(cell, ts, &missing));
                                out.push(f64::NAN);
                                continue;
                            }
                        }
                        map.project(&full, &mut row);
                        out.push(inverse_transform(model.predict_log_row(&row)));
                    }
                }
                if gaps.is_empty() {
                    Ok(out)
                } else {
                    Err(gaps)
                }
            })
            .collect()
    });

    let mut values = Vec::with_capacity(cells.len() * nt);
    let mut gaps = Vec::new();
    for b in blocks {
        match b {
            Ok(v) => values.extend(v),
            Err(g) => gaps.extend(g),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::DataGap(gaps));
    }
    let seconds = started.elapsed().as_secs_f64();
    let rows = values.len();
    Ok((
        ConcentrationMap {
            pollutant: None,
            cells: cells.to_vec(),
            timestamps: timestamps.to_vec(),
            values,
        },
        Throughput {
            rows,
            seconds,
            rows_per_sec: if seconds > 0.0 { rows as f64 / seconds } else { f64::INFINITY },
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Measured,
    Predicted,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Measured => "measured",
            Source::Predicted => "predicted",
        }
    }
}

/// One station's hourly series with model values in the gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSeries {
    pub station_id: String,
    pub pollutant: Pollutant,
    pub points: Vec<(Timestamp, f64, Source)>,
}

impl AugmentedSeries {
    pub fn count(&self, source: Source) -> usize {
        self.points.iter().filter(|p| p.2 == source).count()
    }

    /// `timestamp,value,source`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["timestamp", "value", "source"])?;
        for (t, v, s) in &self.points {
            w.write_record([format_timestamp(t), v.to_string(), s.as_str().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Hourly series over `[start, end)` at the station's snapped cell.
/// Measured hours are copied unchanged; the rest are predicted.
pub fn fill_gaps(
    station: &StationSite,
    pollutant: Pollutant,
    measurements: &[Measurement],
    model: &Ensemble,
    store: &FeatureStore,
    start: Timestamp,
    end: Timestamp,
) -> Result<AugmentedSeries> {
    if end <= start {
        return Err(Error::invalid("empty time span"));
    }
    let map = ColumnMap::new(model, store)?;
    let mut measured: BTreeMap<Timestamp, f64> = BTreeMap::new();
    for m in measurements {
        if m.station_id == station.station_id && m.pollutant == pollutant && m.timestamp >= start && m.timestamp < end {
            measured.entry(m.timestamp).or_insert(m.value);
        }
    }
    let mut full = vec![0.0; N_FEATURES];
    let mut row = vec![0.0; map.indices.len()];
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for ts in hourly_range(start, end) {
        if let Some(&v) = measured.get(&ts) {
            points.push((ts, v, Source::Measured));
            continue;
        }
        if let Err(missing) = store.fill_row(station.snapped_cell, &ts, &mut full) {
            if map.relevant(&missing) {
                gaps.push(crate::ingest::store::gap_message(station.snapped_cell, &ts, &missing));
                continue;
            }
        }
        map.project(&full, &mut row);
        points.push((ts, inverse_transform(model.predict_log_row(&row)), Source::Predicted));
    }
    if !gaps.is_empty() {
        return Err(Error::DataGap(gaps));
    }
    Ok(AugmentedSeries {
        station_id: station.station_id.clone(),
        pollutant,
        points,
    })
}
