use chrono::NaiveDate;
use synthstation::gbdt::{fit, RowMatrix, TrainConfig};
use synthstation::ingest::store::{load_inputs, LoadedInputs};
use synthstation::ingest::{Pollutant, Timestamp};
use synthstation::predict::{fill_gaps, grid_predict, ColumnMap, Source};
use synthstation::train::build_labeled_rows;
use synthstation::world::{generate_world, WorldSpec};

fn ts(y: i32, m: u32, d: u32) -> Timestamp {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn world(start: Timestamp, end: Timestamp) -> (tempfile::TempDir, LoadedInputs) {
    let dir = tempfile::tempdir().unwrap();
    let spec = WorldSpec {
        rows: 6,
        cols: 6,
        start,
        end,
        stations_per_class: [1, 1, 0, 0, 0, 1],
        adversarial: 0,
        missing_rate: 0.0,
        ..WorldSpec::default()
    };
    generate_world(&spec, dir.path()).unwrap();
    let inputs = load_inputs(dir.path()).unwrap();
    (dir, inputs)
}

fn model(inputs: &LoadedInputs) -> synthstation::gbdt::Ensemble {
    let rows = build_labeled_rows(&inputs.store, &inputs.stations, &inputs.measurements.kept, Pollutant::No2).unwrap();
    let x = rows.x().unwrap();
    let cfg = TrainConfig {
        num_leaves: 8,
        max_trees: 20,
        ..TrainConfig::default()
    };
    fit(x, &rows.targets, x, &rows.targets, &cfg)
        .unwrap()
        .with_columns(rows.matrix.columns.clone())
        .unwrap()
}

#[test]
fn backdated_series_counts() {
    let (_dir, inputs) = world(ts(2014, 1, 1), ts(2015, 7, 1));
    let m = model(&inputs);
    let st = &inputs.stations[0];
    let online = ts(2015, 3, 1);
    let kept: Vec<_> = inputs
        .measurements
        .kept
        .iter()
        .filter(|x| x.station_id == st.station_id && x.timestamp >= online)
        .cloned()
        .collect();
    let before = kept.clone();
    let s = fill_gaps(st, Pollutant::No2, &kept, &m, &inputs.store, ts(2014, 1, 1), ts(2015, 7, 1)).unwrap();
    // 2014 has 365 days, Jan + Feb 2015 are 59; Mar-Jun 2015 are 31+30+31+30
    assert_eq!(s.count(Source::Predicted), (365 + 59) * 24);
    assert_eq!(s.count(Source::Measured), 122 * 24);
    assert_eq!(s.points.len(), 546 * 24);
    assert!(s.points.windows(2).all(|w| (w[1].0 - w[0].0).num_hours() == 1));
    assert!(s.points.iter().all(|p| (p.2 == Source::Measured) == (p.0 >= online)));
    for (p, m) in s.points.iter().filter(|p| p.2 == Source::Measured).zip(&kept) {
        assert_eq!((p.0, p.1.to_bits()), (m.timestamp, m.value.to_bits()));
    }
    assert_eq!(kept, before);
    assert!(s.points.iter().all(|p| p.1 >= 0.0));
}

#[test]
fn complete_and_empty_series() {
    let (_dir, inputs) = world(ts(2016, 12, 30), ts(2017, 1, 3));
    let m = model(&inputs);
    let st = &inputs.stations[1];
    let all: Vec<_> = inputs.measurements.kept.iter().filter(|x| x.station_id == st.station_id).cloned().collect();
    let s = fill_gaps(st, Pollutant::No2, &all, &m, &inputs.store, ts(2016, 12, 30), ts(2017, 1, 3)).unwrap();
    assert_eq!(s.count(Source::Measured), all.len());
    assert_eq!(s.count(Source::Predicted), 0);
    let s = fill_gaps(st, Pollutant::No2, &[], &m, &inputs.store, ts(2016, 12, 30), ts(2017, 1, 3)).unwrap();
    assert_eq!(s.count(Source::Predicted), 4 * 24);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    s.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("timestamp,value,source\n"));
    assert_eq!(text.lines().count(), 97);
}

#[test]
fn span_outside_features_is_a_gap() {
    let (_dir, inputs) = world(ts(2016, 12, 30), ts(2017, 1, 3));
    let m = model(&inputs);
    let st = &inputs.stations[0];
    let err = fill_gaps(st, Pollutant::No2, &[], &m, &inputs.store, ts(2017, 1, 2), ts(2017, 1, 5)).unwrap_err();
    assert!(err.is_data_gap());
    let cells: Vec<u32> = (0..4).collect();
    let times = [ts(2017, 2, 1)];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert!(grid_predict(&m, &inputs.store, &cells, &times, &pool, 1024).unwrap_err().is_data_gap());
}

#[test]
fn grid_matches_single_row_prediction() {
    let (_dir, inputs) = world(ts(2016, 12, 30), ts(2017, 1, 3));
    let m = model(&inputs);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t = ts(2017, 1, 1) + chrono::Duration::hours(8);
    let (map, thr) = grid_predict(&m, &inputs.store, &[7], &[t], &pool, 65_536).unwrap();
    let row = inputs.store.row(7, &t).unwrap();
    let cm = ColumnMap::new(&m, &inputs.store).unwrap();
    let x: Vec<f64> = cm.indices.iter().map(|&i| row[i]).collect();
    assert_eq!(map.values, vec![m.predict(RowMatrix::new(&x, x.len()).unwrap()).unwrap()[0]]);
    assert_eq!(thr.rows, 1);

    // the same cell twice gives the same feature rows and the same outputs
    let (map, _) = grid_predict(&m, &inputs.store, &[3, 3], &[t], &pool, 65_536).unwrap();
    assert_eq!(map.values[0].to_bits(), map.values[1].to_bits());
}

#[test]
fn worker_count_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = WorldSpec {
        start: ts(2017, 3, 1),
        end: ts(2017, 3, 2),
        stations_per_class: [1, 1, 1, 0, 0, 1],
        adversarial: 0,
        ..WorldSpec::default()
    };
    generate_world(&spec, dir.path()).unwrap();
    let inputs = load_inputs(dir.path()).unwrap();
    let m = model(&inputs);
    let cells: Vec<u32> = (0..400).collect();
    let times: Vec<Timestamp> = (0..24).map(|h| ts(2017, 3, 1) + chrono::Duration::hours(h)).collect();
    let mut outputs = Vec::new();
    for (workers, batch) in [(1, 65_536), (4, 65_536), (4, 100), (3, 7)] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        let (map, thr) = grid_predict(&m, &inputs.store, &cells, &times, &pool, batch).unwrap();
        assert_eq!(thr.rows, 9600);
        let path = dir.path().join(format!("map_{workers}_{batch}.csv"));
        map.write_csv(&path).unwrap();
        outputs.push(std::fs::read(&path).unwrap());
        assert!(map.values.iter().all(|v| *v >= 0.0));
        let pgm = map.pgm_bytes(inputs.area(), 0).unwrap();
        assert!(pgm.starts_with(b"P5\n20 20\n255\n"));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    let text = String::from_utf8(outputs.pop().unwrap()).unwrap();
    assert!(text.starts_with("cell_id,timestamp,value\n0,2017-03-01T00:00:00Z,"));
}
