//! Python bindings.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use synthstation::gbdt::{self, Ensemble, RowMatrix, TrainConfig};
use synthstation::grid::CellId;
use synthstation::ingest::store::{load_inputs, LoadedInputs};
use synthstation::ingest::temporal::{format_timestamp, hourly_range};
use synthstation::ingest::{feature_schema, parse_timestamp, Pollutant, Timestamp};
use synthstation::train::{build_labeled_rows, run_experiment, write_reports, Recipe};
use synthstation::world::WorldSpec;
use synthstation::Error;

create_exception!(synthstation_py, DataGapError, PyException);

fn py_err(e: Error) -> PyErr {
    if e.is_data_gap() {
        DataGapError::new_err(e.to_string())
    } else if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyOSError::new_err(e.to_string())
    }
}

fn ts(s: &str) -> PyResult<Timestamp> {
    parse_timestamp(s).map_err(py_err)
}

fn flatten(rows: &[Vec<f64>]) -> PyResult<(Vec<f64>, usize)> {
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    Ok((rows.concat(), n_cols))
}

/// Loaded input directory.
#[pyclass(name = "Inputs")]
struct PyInputs {
    inner: LoadedInputs,
}

#[pymethods]
impl PyInputs {
    #[staticmethod]
    fn load(py: Python<'_>, dir: PathBuf) -> PyResult<Self> {
        let inner = py.detach(|| load_inputs(&dir)).map_err(py_err)?;
        Ok(PyInputs { inner })
    }

    #[getter]
    fn station_ids(&self) -> Vec<String> {
        self.inner.stations.iter().map(|s| s.station_id.clone()).collect()
    }

    #[getter]
    fn n_measurements(&self) -> usize {
        self.inner.measurements.kept.len()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.area().len()
    }

    /// Full 152-value feature row of a cell at an hour.
    fn row(&self, cell: CellId, timestamp: &str) -> PyResult<Vec<f64>> {
        self.inner.store.row(cell, &ts(timestamp)?).map_err(py_err)
    }

    /// `(rows, targets, station_ids)` for every measurement of `pollutant`.
    #[pyo3(signature = (pollutant = "NO2"))]
    fn labeled_rows(&self, pollutant: &str) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<String>)> {
        let p: Pollutant = pollutant.parse().map_err(py_err)?;
        let r = build_labeled_rows(&self.inner.store, &self.inner.stations, &self.inner.measurements.kept, p)
            .map_err(py_err)?;
        let rows = (0..r.n_rows()).map(|i| r.matrix.row(i).to_vec()).collect();
        let ids = r.station.iter().map(|&s| r.station_ids[s as usize].clone()).collect();
        Ok((rows, r.targets, ids))
    }
}

/// Boosted tree ensemble.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Ensemble,
}

#[pymethods]
impl PyModel {
    /// Fits on concentrations `y` (log-transformed internally).
    #[staticmethod]
    #[pyo3(signature = (x, y, x_valid, y_valid, num_leaves=31, min_data_in_leaf=20, l2_lambda=1.0,
                        learning_rate=0.1, max_trees=1000, early_stopping_rounds=30, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        x_valid: Vec<Vec<f64>>,
        y_valid: Vec<f64>,
        num_leaves: usize,
        min_data_in_leaf: usize,
        l2_lambda: f64,
        learning_rate: f64,
        max_trees: usize,
        early_stopping_rounds: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let (xv, nc) = flatten(&x)?;
        let (vv, vc) = flatten(&x_valid)?;
        let cfg = TrainConfig {
            num_leaves,
            min_data_in_leaf,
            l2_lambda,
            learning_rate,
            max_trees,
            early_stopping_rounds,
            seed,
            ..TrainConfig::default()
        };
        let inner = py
            .detach(|| {
                gbdt::fit(
                    RowMatrix::new(&xv, nc)?,
                    &y,
                    RowMatrix::new(&vv, vc)?,
                    &y_valid,
                    &cfg,
                )
            })
            .map_err(py_err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: Ensemble::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    /// Concentrations for each row.
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let (v, nc) = flatten(&x)?;
        self.inner.predict(RowMatrix::new(&v, nc).map_err(py_err)?).map_err(py_err)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.best_iteration
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns.iter().map(|c| c.name.clone()).collect()
    }
}

/// Writes a synthetic input directory; returns its summary.
#[pyfunction]
#[pyo3(signature = (dir, seed=42, rows=20, cols=20, stations_per_class=2, adversarial=1,
                    start="2016-07-01", end="2018-07-01"))]
#[allow(clippy::too_many_arguments)]
fn generate_world<'py>(
    py: Python<'py>,
    dir: PathBuf,
    seed: u64,
    rows: u32,
    cols: u32,
    stations_per_class: usize,
    adversarial: usize,
    start: &str,
    end: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = WorldSpec {
        rows,
        cols,
        start: ts(start)?,
        end: ts(end)?,
        stations_per_class: [stations_per_class; 6],
        adversarial,
        seed,
        ..WorldSpec::default()
    };
    let s = py.detach(|| synthstation::world::generate_world(&spec, &dir)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("stations", s.stations)?;
    d.set_item("adversarial", s.adversarial)?;
    d.set_item("n_measurements", s.n_measurements)?;
    Ok(d)
}

/// Runs every experiment of a recipe and writes the report CSVs to
/// `out_dir`. Returns `(pollutant, subset, test_r2, loov_median)` rows.
#[pyfunction]
#[pyo3(signature = (recipe, out_dir, seed=None))]
fn run_recipe(
    py: Python<'_>,
    recipe: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
) -> PyResult<Vec<(String, String, Option<f64>, Option<f64>)>> {
    py.detach(|| {
        let mut r = Recipe::load(&recipe)?;
        if let Some(s) = seed {
            r.protocol.seed = s;
        }
        let inputs = load_inputs(&r.input_dir)?;
        let mut reports = Vec::new();
        for &p in &r.pollutants {
            let rows = build_labeled_rows(&inputs.store, &inputs.stations, &inputs.measurements.kept, p)?;
            for sel in &r.subsets {
                reports.push(run_experiment(&rows, p, sel, &r.protocol)?);
            }
        }
        write_reports(&reports, &out_dir)?;
        Ok(reports
            .iter()
            .map(|r| {
                let med = r.loov.as_ref().and_then(|l| l.summary.as_ref()).map(|s| s.median);
                (r.pollutant.to_string(), r.subset.clone(), r.test.r2, med)
            })
            .collect())
    })
    .map_err(py_err)
}

/// Predicts every cell over `[start, end)`; returns `(cells, timestamps, values)`
/// with values cell-major.
#[pyfunction]
#[pyo3(signature = (inputs, model, start, end, workers=1))]
fn predict_grid(
    py: Python<'_>,
    inputs: &PyInputs,
    model: &PyModel,
    start: &str,
    end: &str,
    workers: usize,
) -> PyResult<(Vec<CellId>, Vec<String>, Vec<f64>)> {
    let times: Vec<Timestamp> = hourly_range(ts(start)?, ts(end)?).collect();
    let cells: Vec<CellId> = inputs.inner.area().cells().iter().map(|c| c.cell_id).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (map, _) = py
        .detach(|| {
            synthstation::predict::grid_predict(
                &model.inner,
                &inputs.inner.store,
                &cells,
                &times,
                &pool,
                synthstation::predict::DEFAULT_BATCH_ROWS,
            )
        })
        .map_err(py_err)?;
    Ok((map.cells, map.timestamps.iter().map(format_timestamp).collect(), map.values))
}

/// Hourly series at a station with model values in unmeasured hours;
/// `(timestamp, value, source)` triples.
#[pyfunction]
#[pyo3(signature = (inputs, model, station, start, end, pollutant="NO2"))]
fn fill_gaps(
    inputs: &PyInputs,
    model: &PyModel,
    station: &str,
    start: &str,
    end: &str,
    pollutant: &str,
) -> PyResult<Vec<(String, f64, String)>> {
    let site = inputs
        .inner
        .stations
        .iter()
        .find(|s| s.station_id == station)
        .ok_or_else(|| PyValueError::new_err(format!("unknown station {station}")))?;
    let p: Pollutant = pollutant.parse().map_err(py_err)?;
    let s = synthstation::predict::fill_gaps(
        site,
        p,
        &inputs.inner.measurements.kept,
        &model.inner,
        &inputs.inner.store,
        ts(start)?,
        ts(end)?,
    )
    .map_err(py_err)?;
    Ok(s.points
        .iter()
        .map(|(t, v, src)| (format_timestamp(t), *v, src.as_str().to_string()))
        .collect())
}

/// `(family, name)` of every feature column, in order.
#[pyfunction]
fn feature_columns() -> Vec<(String, String)> {
    feature_schema()
        .into_iter()
        .map(|c| (c.family.as_str().to_string(), c.name))
        .collect()
}

#[pyfunction]
fn r_squared(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    synthstation::eval::r_squared(&pred, &actual).map_err(py_err)
}

#[pyfunction]
fn peak_distance_pct(measured_peak: f64, prediction: f64) -> f64 {
    synthstation::eval::peak_distance_pct(measured_peak, prediction)
}

#[pyfunction]
fn exceedance_count(values: Vec<f64>, threshold: f64) -> usize {
    synthstation::eval::exceedance_count(&values, threshold)
}

#[pymodule]
fn synthstation_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInputs>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_world, m)?)?;
    m.add_function(wrap_pyfunction!(run_recipe, m)?)?;
    m.add_function(wrap_pyfunction!(predict_grid, m)?)?;
    m.add_function(wrap_pyfunction!(fill_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(feature_columns, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(peak_distance_pct, m)?)?;
    m.add_function(wrap_pyfunction!(exceedance_count, m)?)?;
    m.add("DataGapError", m.py().get_type::<DataGapError>())?;
    Ok(())
}
