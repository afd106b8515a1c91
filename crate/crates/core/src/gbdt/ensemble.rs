use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::goss::goss_sample;
use super::transform::{inverse_transform, log_transform};
use super::tree::{grow_tree, Tree};
use super::{BinMapper, BinnedData, RowMatrix, TrainConfig};
use crate::error::{Error, Result};
use crate::ingest::{schema_hash, FeatureColumn};

/// Rows per parallel prediction chunk.
const PREDICT_CHUNK: usize = 1024;

/// A fitted boosting model. Predictions use `trees[..best_iteration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    /// Initial log-space prediction.
    pub base_score: f64,
    pub best_iteration: usize,
    pub mapper: BinMapper,
    pub config: TrainConfig,
    /// Named schema, or empty when fitted on an anonymous matrix.
    pub columns: Vec<FeatureColumn>,
    /// Log-space train MSE after `k` trees, `k = 0..=trees.len()`.
    pub train_loss: Vec<f64>,
    /// Log-space validation MSE after `k` trees.
    pub valid_loss: Vec<f64>,
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

fn log_targets(y: &[f64]) -> Result<Vec<f64>> {
    y.iter().map(|&v| log_transform(v)).collect()
}

/// Fits on raw (µg/m³) targets, early-stopping on `valid`.
pub fn fit(
    train_x: RowMatrix<'_>,
    train_y: &[f64],
    valid_x: RowMatrix<'_>,
    valid_y: &[f64],
    config: &TrainConfig,
) -> Result<Ensemble> {
    config.validate()?;
    if train_x.n_rows() == 0 || valid_x.n_rows() == 0 {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let data = BinnedData::new(train_x, config.max_bin)?;
    fit_binned(&data, train_y, valid_x, valid_y, config)
}

/// As [`fit`], reusing an already binned training matrix.
pub fn fit_binned(
    data: &BinnedData,
    train_y: &[f64],
    valid_x: RowMatrix<'_>,
    valid_y: &[f64],
    config: &TrainConfig,
) -> Result<Ensemble> {
    config.validate()?;
    let n = data.n_rows();
    if n == 0 || valid_x.n_rows() == 0 {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if train_y.len() != n || valid_y.len() != valid_x.n_rows() {
        return Err(Error::invalid("target length does not match the feature rows"));
    }
    if valid_x.n_cols() != data.n_cols() {
        return Err(Error::invalid(format!(
            "validation rows have {} columns, training rows {}",
            valid_x.n_cols(),
            data.n_cols()
        )));
    }
    if valid_x.values().iter().any(|v| v.is_infinite()) {
        return Err(Error::invalid("validation features contain infinite values"));
    }
    let y = log_targets(train_y)?;
    let yv = log_targets(valid_y)?;
    let base = y.iter().sum::<f64>() / n as f64;
    let lr = config.learning_rate;

    let mut pred = vec![base; n];
    let mut pred_v = vec![base; yv.len()];
    let mut train_loss = vec![mse(&pred, &y)];
    let mut valid_loss = vec![mse(&pred_v, &yv)];
    let mut best = (valid_loss[0], 0usize);
    let mut trees = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ones = vec![1.0; n];
    let all: Vec<usize> = (0..n).collect();

    for t in 0..config.max_trees {
        let grad: Vec<f64> = pred.iter().zip(&y).map(|(p, y)| p - y).collect();
        let tree = if config.uses_goss() {
            let (rows, weights) = goss_sample(&grad, config.goss_top_rate, config.goss_other_rate, &mut rng);
            let g: Vec<f64> = rows.iter().map(|&i| grad[i]).collect();
            grow_tree(data, &rows, &g, &ones[..rows.len()], &weights, config)
        } else {
            grow_tree(data, &all, &grad, &ones, &ones, config)
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += lr * tree.predict_binned(data.row(i), &data.mapper);
        }
        for (i, p) in pred_v.iter_mut().enumerate() {
            *p += lr * tree.predict(valid_x.row(i));
        }
        trees.push(tree);
        train_loss.push(mse(&pred, &y));
        let v = mse(&pred_v, &yv);
        valid_loss.push(v);
        if v < best.0 {
            best = (v, t + 1);
        } else if t + 1 - best.1 >= config.early_stopping_rounds {
            break;
        }
    }

    Ok(Ensemble {
        trees,
        learning_rate: lr,
        base_score: base,
        best_iteration: best.1,
        mapper: data.mapper.clone(),
        config: config.clone(),
        columns: Vec::new(),
        train_loss,
        valid_loss,
    })
}

impl Ensemble {
    pub fn n_features(&self) -> usize {
        self.mapper.n_features()
    }

    pub fn with_columns(mut self, columns: Vec<FeatureColumn>) -> Result<Self> {
        if columns.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "{} column names for a model of {} features",
                columns.len(),
                self.n_features()
            )));
        }
        self.columns = columns;
        Ok(self)
    }

    pub fn schema_hash(&self) -> String {
        schema_hash(&self.columns)
    }

    /// Log-space prediction for one row.
    pub fn predict_log_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.base_score;
        for tree in &self.trees[..self.best_iteration] {
            acc += self.learning_rate * tree.predict(row);
        }
        acc
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row.len())?;
        Ok(inverse_transform(self.predict_log_row(row)))
    }

    fn check_width(&self, n_cols: usize) -> Result<()> {
        if n_cols != self.n_features() {
            return Err(Error::invalid(format!(
                "schema mismatch: rows have {n_cols} features, model expects {}",
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Concentrations for every row, evaluated sequentially.
    pub fn predict(&self, x: RowMatrix<'_>) -> Result<Vec<f64>> {
        self.check_width(x.n_cols())?;
        Ok((0..x.n_rows()).map(|i| inverse_transform(self.predict_log_row(x.row(i)))).collect())
    }

    /// As [`Ensemble::predict`], spread over the current rayon pool.
    pub fn predict_par(&self, x: RowMatrix<'_>) -> Result<Vec<f64>> {
        self.check_width(x.n_cols())?;
        let n_cols = x.n_cols();
        let mut out = vec![0.0; x.n_rows()];
        out.par_chunks_mut(PREDICT_CHUNK)
            .zip(x.values().par_chunks(PREDICT_CHUNK * n_cols))
            .for_each(|(o, rows)| {
                for (v, row) in o.iter_mut().zip(rows.chunks(n_cols)) {
                    *v = inverse_transform(self.predict_log_row(row));
                }
            });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn r2(pred: &[f64], y: &[f64]) -> f64 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|t| (t - mean).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    fn linear_data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut x = Vec::with_capacity(n * 3);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = rng.random_range(0.0..10.0);
            let x2: f64 = rng.random();
            let x3: f64 = rng.random();
            x.extend([x1, x2, x3]);
            let v = 3.0 * x1 + 2.0 * if x2 > 0.5 { 1.0 } else { 0.0 } + noise.sample(&mut rng);
            y.push(v.max(0.0));
        }
        (x, y)
    }

    #[test]
    fn learns_synthetic_linear_target() {
        let (xt, yt) = linear_data(4000, 1);
        let (xv, yv) = linear_data(1000, 2);
        let (xs, ys) = linear_data(1000, 3);
        let cfg = TrainConfig { seed: 5, ..Default::default() };
        let m = fit(RowMatrix::new(&xt, 3).unwrap(), &yt, RowMatrix::new(&xv, 3).unwrap(), &yv, &cfg).unwrap();
        let pred = m.predict(RowMatrix::new(&xs, 3).unwrap()).unwrap();
        let score = r2(&pred, &ys);
        assert!(score >= 0.95, "held-out R2 {score}");
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let y = vec![12.5; 200];
        let m = fit(RowMatrix::new(&x, 1).unwrap(), &y, RowMatrix::new(&x, 1).unwrap(), &y, &TrainConfig::default()).unwrap();
        for v in m.predict(RowMatrix::new(&x, 1).unwrap()).unwrap() {
            assert!((v - 12.5).abs() < 1e-9);
        }
    }

    #[test]
    fn full_gradient_train_loss_never_increases() {
        let x: Vec<f64> = (0..400).map(|i| (i % 40) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| [3.0, 10.0, 1.0, 25.0][(*v as usize) / 10]).collect();
        let cfg = TrainConfig {
            min_data_in_leaf: 5,
            max_trees: 200,
            early_stopping_rounds: 200,
            ..TrainConfig::default().full_gradient()
        };
        let m = fit(RowMatrix::new(&x, 1).unwrap(), &y, RowMatrix::new(&x, 1).unwrap(), &y, &cfg).unwrap();
        for w in m.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(*m.train_loss.last().unwrap() < 1e-6);
    }

    #[test]
    fn goss_with_full_rate_matches_full_gradient() {
        let (x, y) = linear_data(600, 9);
        let a = TrainConfig { goss_top_rate: 1.0, goss_other_rate: 0.0, seed: 3, max_trees: 40, ..Default::default() };
        let xm = RowMatrix::new(&x, 3).unwrap();
        let m1 = fit(xm, &y, xm, &y, &a).unwrap();
        let m2 = fit(xm, &y, xm, &y, &TrainConfig { seed: 99, ..a.clone() }).unwrap();
        assert_eq!(m1.trees, m2.trees);
    }

    #[test]
    fn empty_ensemble_predicts_base() {
        let x = [1.0, 2.0];
        let y = [4.0, 9.0];
        let xm = RowMatrix::new(&x, 1).unwrap();
        let mut m = fit(xm, &y, xm, &y, &TrainConfig { min_data_in_leaf: 1, ..Default::default() }).unwrap();
        m.best_iteration = 0;
        let base = inverse_transform(m.base_score);
        assert_eq!(m.predict(xm).unwrap(), vec![base, base]);
    }

    #[test]
    fn stump_gives_two_outputs() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v < 50.0 { 2.0 } else { 9.0 }).collect();
        let xm = RowMatrix::new(&x, 1).unwrap();
        let cfg = TrainConfig { num_leaves: 2, ..TrainConfig::default().full_gradient() };
        let mut m = fit(xm, &y, xm, &y, &cfg).unwrap();
        m.best_iteration = 1;
        let mut out = m.predict(xm).unwrap();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn parallel_prediction_is_bitwise_sequential() {
        let (x, y) = linear_data(2000, 4);
        let xm = RowMatrix::new(&x, 3).unwrap();
        let m = fit(xm, &y, xm, &y, &TrainConfig { max_trees: 50, ..Default::default() }).unwrap();
        let (probe, _) = linear_data(10_000, 8);
        let pm = RowMatrix::new(&probe, 3).unwrap();
        let seq = m.predict(pm).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par = pool.install(|| m.predict_par(pm)).unwrap();
        assert!(seq.iter().zip(&par).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(seq.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn errors() {
        let x = [1.0, 2.0];
        let xm = RowMatrix::new(&x, 1).unwrap();
        let empty = RowMatrix::new(&[], 1).unwrap();
        let cfg = TrainConfig::default();
        assert!(fit(empty, &[], xm, &[1.0, 2.0], &cfg).is_err());
        assert!(fit(xm, &[1.0, 2.0], empty, &[], &cfg).is_err());
        let inf = [1.0, f64::INFINITY];
        assert!(fit(RowMatrix::new(&inf, 1).unwrap(), &[1.0, 2.0], xm, &[1.0, 2.0], &cfg).is_err());
        assert!(fit(xm, &[1.0, -2.0], xm, &[1.0, 2.0], &cfg).is_err());
        let m = fit(xm, &[1.0, 2.0], xm, &[1.0, 2.0], &TrainConfig { min_data_in_leaf: 1, ..cfg }).unwrap();
        assert!(m.predict(RowMatrix::new(&[1.0, 2.0], 2).unwrap()).is_err());
    }

    #[test]
    fn leaves_meet_floor_under_goss() {
        let (x, y) = linear_data(3000, 11);
        let xm = RowMatrix::new(&x, 3).unwrap();
        let cfg = TrainConfig { min_data_in_leaf: 25, max_trees: 30, ..Default::default() };
        let m = fit(xm, &y, xm, &y, &cfg).unwrap();
        for t in &m.trees {
            assert!(t.leaves().all(|(_, c)| c >= 25));
        }
    }
}
