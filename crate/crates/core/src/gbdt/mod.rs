//! Histogram gradient-boosted regression trees.
//!
//! Features are discretized into at most `max_bin` ordered bins, trees grow
//! leaf-wise (best gain first) with L2-regularized leaf values and a
//! minimum leaf population, each round may train on a gradient-based
//! one-side sample, and boosting stops early once the validation loss has
//! not improved for a fixed number of rounds. Targets are modelled in log
//! space, `ln(y + 1e-7)`, so inverse-transformed predictions are never
//! negative.

mod bins;
mod ensemble;
mod goss;
mod histogram;
mod io;
mod transform;
mod tree;

pub use bins::{BinMapper, BinnedData};
pub use ensemble::{fit, fit_binned, Ensemble};
pub use goss::goss_sample;
pub use histogram::{best_split, BinStat, Histogram, SplitCandidate, SplitParams};
pub use io::{read_model, write_model};
pub use transform::{inverse_transform, log_transform, LOG_EPSILON};
pub use tree::{grow_tree, Node, Tree};

use crate::error::{Error, Result};

/// Hyperparameters of one boosting run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_bin: usize,
    pub early_stopping_rounds: usize,
    /// GOSS share of largest-gradient rows kept (`a`).
    pub goss_top_rate: f64,
    /// GOSS share of rows sampled from the remainder (`b`).
    pub goss_other_rate: f64,
    pub max_trees: usize,
    pub min_split_gain: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_leaves: 31,
            min_data_in_leaf: 20,
            l2_lambda: 1.0,
            learning_rate: 0.1,
            max_bin: 255,
            early_stopping_rounds: 30,
            goss_top_rate: 0.2,
            goss_other_rate: 0.1,
            max_trees: 1000,
            min_split_gain: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Plain gradient boosting on every row (GOSS with `a = 1`, `b = 0`).
    pub fn full_gradient(mut self) -> Self {
        self.goss_top_rate = 1.0;
        self.goss_other_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.goss_top_rate;
        let b = self.goss_other_rate;
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::invalid(format!("goss_top_rate must be in (0, 1], got {a}")));
        }
        if !(b >= 0.0 && b <= 1.0 - a + 1e-12) {
            return Err(Error::invalid(format!(
                "goss_other_rate must be in [0, 1 - goss_top_rate], got {b}"
            )));
        }
        if self.num_leaves < 2 {
            return Err(Error::invalid("num_leaves must be at least 2"));
        }
        if self.min_data_in_leaf < 1 {
            return Err(Error::invalid("min_data_in_leaf must be at least 1"));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::invalid("l2_lambda must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(2..=255).contains(&self.max_bin) {
            return Err(Error::invalid("max_bin must be within 2..=255"));
        }
        if self.max_trees == 0 || self.early_stopping_rounds == 0 {
            return Err(Error::invalid("max_trees and early_stopping_rounds must be positive"));
        }
        if !(self.min_split_gain >= 0.0) {
            return Err(Error::invalid("min_split_gain must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn uses_goss(&self) -> bool {
        self.goss_top_rate < 1.0
    }

    pub(crate) fn split_params(&self) -> SplitParams {
        SplitParams {
            l2_lambda: self.l2_lambda,
            min_data_in_leaf: self.min_data_in_leaf,
            min_split_gain: self.min_split_gain,
        }
    }
}

/// Row-major view of a feature matrix.
#[derive(Debug, Clone, Copy)]
pub struct RowMatrix<'a> {
    values: &'a [f64],
    n_cols: usize,
}

impl<'a> RowMatrix<'a> {
    pub fn new(values: &'a [f64], n_cols: usize) -> Result<Self> {
        if n_cols == 0 || !values.len().is_multiple_of(n_cols) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of {n_cols} columns",
                values.len()
            )));
        }
        Ok(RowMatrix { values, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::default().full_gradient().validate().is_ok());
        let bad = [
            TrainConfig { goss_top_rate: 0.0, ..Default::default() },
            TrainConfig { goss_top_rate: 0.8, goss_other_rate: 0.3, ..Default::default() },
            TrainConfig { num_leaves: 1, ..Default::default() },
            TrainConfig { min_data_in_leaf: 0, ..Default::default() },
            TrainConfig { l2_lambda: -1.0, ..Default::default() },
            TrainConfig { max_bin: 256, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn row_matrix_shape() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = RowMatrix::new(&v, 3).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
        assert!(RowMatrix::new(&v, 4).is_err());
    }
}
