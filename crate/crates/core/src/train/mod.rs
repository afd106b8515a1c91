//! Experiment protocol: temporal splits, randomized hyperparameter
//! search, refitting, station leave-out validation and family subsets.

mod fit;
mod loov;
mod recipe;
mod report;
mod search;
mod split;
mod subset;

pub use fit::{final_fit, FinalFit};
pub use loov::{fold_assignment, loov_experiment, LoovResult, LoovSummary, StationScore};
pub use recipe::Recipe;
pub use report::{run_experiment, write_reports, ExperimentReport};
pub use search::{random_search, Param, SearchResult, SearchSpace, Trial};
pub use split::{temporal_split, SplitSpec};
pub use subset::FamilySelection;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::r_squared;
use crate::gbdt::{log_transform, Ensemble, RowMatrix};
use crate::grid::StationSite;
use crate::ingest::{FeatureMatrix, FeatureStore, Measurement, Pollutant, Timestamp};

/// Feature rows with their targets and originating station.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRows {
    pub matrix: FeatureMatrix,
    pub targets: Vec<f64>,
    /// Index into `station_ids` per row.
    pub station: Vec<u32>,
    /// Sorted station ids.
    pub station_ids: Vec<String>,
}

impl LabeledRows {
    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn timestamp(&self, i: usize) -> Timestamp {
        self.matrix.keys[i].1
    }

    pub fn x(&self) -> Result<RowMatrix<'_>> {
        RowMatrix::new(&self.matrix.values, self.matrix.n_cols())
    }

    /// `(station, timestamp)` identity of row `i`.
    pub fn row_key(&self, i: usize) -> (u32, Timestamp) {
        (self.station[i], self.timestamp(i))
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledRows {
        let n = self.matrix.n_cols();
        let mut matrix = FeatureMatrix::new(self.matrix.columns.clone());
        matrix.values.reserve(indices.len() * n);
        for &i in indices {
            matrix.push_row(self.matrix.keys[i], self.matrix.row(i));
        }
        LabeledRows {
            matrix,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            station: indices.iter().map(|&i| self.station[i]).collect(),
            station_ids: self.station_ids.clone(),
        }
    }

    pub fn select_columns(&self, indices: &[usize]) -> LabeledRows {
        LabeledRows {
            matrix: self.matrix.select_columns(indices),
            targets: self.targets.clone(),
            station: self.station.clone(),
            station_ids: self.station_ids.clone(),
        }
    }

    /// Row indices of each station, by station index.
    pub fn rows_by_station(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &s) in self.station.iter().enumerate() {
            out.entry(s).or_default().push(i);
        }
        out
    }
}

/// Feature rows at each station's snapped cell for every measurement of
/// `pollutant`.
pub fn build_labeled_rows(
    store: &FeatureStore,
    stations: &[StationSite],
    measurements: &[Measurement],
    pollutant: Pollutant,
) -> Result<LabeledRows> {
    let mut station_ids: Vec<String> = stations.iter().map(|s| s.station_id.clone()).collect();
    station_ids.sort();
    station_ids.dedup();
    let index: BTreeMap<&str, u32> = station_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
    let cells: BTreeMap<&str, u32> = stations.iter().map(|s| (s.station_id.as_str(), s.snapped_cell)).collect();

    let mut keys = Vec::new();
    let mut targets = Vec::new();
    let mut station = Vec::new();
    for m in measurements.iter().filter(|m| m.pollutant == pollutant) {
        let cell = *cells
            .get(m.station_id.as_str())
            .ok_or_else(|| Error::invalid(format!("measurement for unknown station {}", m.station_id)))?;
        keys.push((cell, m.timestamp));
        targets.push(m.value);
        station.push(index[m.station_id.as_str()]);
    }
    let matrix = store.assemble_keys(&keys)?;
    Ok(LabeledRows {
        matrix,
        targets,
        station,
        station_ids,
    })
}

/// Accuracy of a model on a set of rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub n: usize,
    /// R² in concentration space; `None` when undefined.
    pub r2: Option<f64>,
    /// MSE between log-space predictions and log-transformed targets.
    pub mse_log: f64,
}

pub fn score(model: &Ensemble, rows: &LabeledRows) -> Result<Scores> {
    let x = rows.x()?;
    let pred = model.predict_par(x)?;
    let mut se = 0.0;
    for (i, y) in rows.targets.iter().enumerate() {
        let d = model.predict_log_row(x.row(i)) - log_transform(*y)?;
        se += d * d;
    }
    Ok(Scores {
        n: rows.n_rows(),
        r2: r_squared(&pred, &rows.targets).ok(),
        mse_log: if rows.n_rows() == 0 { f64::NAN } else { se / rows.n_rows() as f64 },
    })
}

/// Settings shared by every experiment of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub split: SplitSpec,
    pub space: SearchSpace,
    pub n_configs: usize,
    pub seed: u64,
    pub run_loov: bool,
    pub loov_folds: usize,
    /// Reuse the all-station winner in every fold instead of searching again.
    pub loov_reuse_config: bool,
}

impl Protocol {
    pub fn new(split: SplitSpec, space: SearchSpace) -> Self {
        Protocol {
            split,
            space,
            n_configs: 40,
            seed: 0,
            run_loov: true,
            loov_folds: 5,
            loov_reuse_config: false,
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::ingest::{feature_schema, FeatureColumn};
    use chrono::{Duration, NaiveDate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rows for `n_stations` stations over the given years, every 7 hours,
    /// with target `5 + 3·x0 + 2·[x1 > 0.5]` plus a station offset.
    pub fn synthetic_rows(n_stations: usize, years: std::ops::RangeInclusive<i32>, seed: u64) -> LabeledRows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<FeatureColumn> = feature_schema().into_iter().take(4).collect();
        let mut matrix = FeatureMatrix::new(columns);
        let mut targets = Vec::new();
        let mut station = Vec::new();
        let start = NaiveDate::from_ymd_opt(*years.start(), 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let end = NaiveDate::from_ymd_opt(*years.end() + 1, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        for s in 0..n_stations {
            let mut t = start + Duration::hours(s as i64);
            while t < end {
                let x0: f64 = rng.random_range(0.0..10.0);
                let x1: f64 = rng.random();
                let row = [x0, x1, rng.random(), s as f64];
                let y = 5.0 + 3.0 * x0 + 2.0 * if x1 > 0.5 { 1.0 } else { 0.0 } + rng.random::<f64>() * 0.2;
                matrix.push_row((s as u32, t), &row);
                targets.push(y);
                station.push(s as u32);
                t += Duration::hours(7);
            }
        }
        LabeledRows {
            matrix,
            targets,
            station,
            station_ids: (0..n_stations).map(|s| format!("st{s:02}")).collect(),
        }
    }
}
