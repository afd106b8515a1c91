use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::LabeledRows;
use crate::error::{Error, Result};
use crate::gbdt::{fit_binned, BinnedData, Ensemble, TrainConfig};

/// Sampling rule for one hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Choices(Vec<f64>),
    /// Uniform over integers in `[lo, hi]`.
    IntUniform { lo: i64, hi: i64 },
    /// `exp(U(ln lo, ln hi))`.
    LogUniform { lo: f64, hi: f64 },
}

impl Param {
    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            Param::Choices(v) => !v.is_empty() && v.iter().all(|x| x.is_finite()),
            Param::IntUniform { lo, hi } => lo <= hi,
            Param::LogUniform { lo, hi } => *lo > 0.0 && lo <= hi && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("empty or malformed range for {name}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Param::Choices(v) => v[rng.random_range(0..v.len())],
            Param::IntUniform { lo, hi } => rng.random_range(*lo..=*hi) as f64,
            Param::LogUniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(lo.ln()..hi.ln()).exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub num_leaves: Param,
    pub min_data_in_leaf: Param,
    pub l2_lambda: Param,
    pub learning_rate: Param,
    /// Values for everything not searched.
    pub base: TrainConfig,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            num_leaves: Param::IntUniform { lo: 1000, hi: 4095 },
            min_data_in_leaf: Param::IntUniform { lo: 20, hi: 200 },
            l2_lambda: Param::LogUniform { lo: 1e-3, hi: 10.0 },
            learning_rate: Param::LogUniform { lo: 0.01, hi: 0.3 },
            base: TrainConfig::default(),
        }
    }
}

impl SearchSpace {
    /// Smaller trees for laptop-sized runs.
    pub fn desk() -> Self {
        SearchSpace {
            num_leaves: Param::IntUniform { lo: 8, hi: 63 },
            min_data_in_leaf: Param::IntUniform { lo: 10, hi: 100 },
            ..SearchSpace::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.num_leaves.validate("num_leaves")?;
        self.min_data_in_leaf.validate("min_data_in_leaf")?;
        self.l2_lambda.validate("l2_lambda")?;
        self.learning_rate.validate("learning_rate")?;
        let leaves_ok = match &self.num_leaves {
            Param::Choices(v) => v.iter().all(|&x| x >= 2.0),
            Param::IntUniform { lo, .. } => *lo >= 2,
            Param::LogUniform { lo, .. } => *lo >= 2.0,
        };
        if !leaves_ok {
            return Err(Error::invalid("num_leaves must be at least 2"));
        }
        self.base.validate()
    }

    /// `n` configs drawn sequentially from one stream; trial `i` trains with seed `seed + i`.
    pub fn sample_configs(&self, n: usize, seed: u64) -> Vec<TrainConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| TrainConfig {
                num_leaves: self.num_leaves.sample(&mut rng).round() as usize,
                min_data_in_leaf: self.min_data_in_leaf.sample(&mut rng).round().max(1.0) as usize,
                l2_lambda: self.l2_lambda.sample(&mut rng),
                learning_rate: self.learning_rate.sample(&mut rng),
                seed: seed.wrapping_add(i as u64),
                ..self.base.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
    /// Validation MSE in log space at the best iteration.
    pub valid_mse: Option<f64>,
    pub n_trees: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_index: usize,
    pub best_config: TrainConfig,
    pub best_model: Ensemble,
    pub trials: Vec<Trial>,
}

/// Fits `n_configs` sampled configs on `train`, picks the lowest validation MSE.
pub fn random_search(
    space: &SearchSpace,
    n_configs: usize,
    seed: u64,
    train: &LabeledRows,
    valid: &LabeledRows,
) -> Result<SearchResult> {
    if n_configs == 0 {
        return Err(Error::invalid("n_configs must be at least 1"));
    }
    space.validate()?;
    let configs = space.sample_configs(n_configs, seed);
    let binned = BinnedData::new(train.x()?, space.base.max_bin)?;
    let vx = valid.x()?;

    let fitted: Vec<(Trial, Option<Ensemble>)> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| match fit_binned(&binned, &train.targets, vx, &valid.targets, &config) {
            Ok(model) => {
                let mse = model.valid_loss.get(model.best_iteration).copied();
                let trial = Trial {
                    index,
                    config,
                    valid_mse: mse,
                    n_trees: model.best_iteration,
                    error: None,
                };
                (trial, Some(model))
            }
            Err(e) => (
                Trial {
                    index,
                    config,
                    valid_mse: None,
                    n_trees: 0,
                    error: Some(e.to_string()),
                },
                None,
            ),
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (t, _) in &fitted {
        if let Some(m) = t.valid_mse {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((t.index, m));
            }
        }
    }
    let Some((best_index, _)) = best else {
        let first = fitted.iter().find_map(|(t, _)| t.error.clone()).unwrap_or_default();
        return Err(Error::invalid(format!("every search trial failed: {first}")));
    };
    let mut trials = Vec::with_capacity(fitted.len());
    let mut best_model = None;
    for (t, m) in fitted {
        if t.index == best_index {
            best_model = m;
        }
        trials.push(t);
    }
    Ok(SearchResult {
        best_index,
        best_config: trials[best_index].config.clone(),
        best_model: best_model.expect("winner has a model"),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::testutil::synthetic_rows;
    use crate::train::{temporal_split, SplitSpec};

    fn small_space() -> SearchSpace {
        SearchSpace {
            num_leaves: Param::IntUniform { lo: 4, hi: 15 },
            min_data_in_leaf: Param::Choices(vec![5.0, 10.0]),
            base: TrainConfig {
                max_trees: 60,
                ..TrainConfig::default()
            },
            ..SearchSpace::default()
        }
    }

    fn data() -> (LabeledRows, LabeledRows) {
        let rows = synthetic_rows(2, 2016..=2018, 3);
        let (tr, va, _) = temporal_split(&rows, &SplitSpec::new([2016], [2017], [2018]).unwrap()).unwrap();
        (tr, va)
    }

    #[test]
    fn single_config_wins() {
        let (tr, va) = data();
        let r = random_search(&small_space(), 1, 7, &tr, &va).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best_config, r.trials[0].config);
    }

    #[test]
    fn heavily_regularized_configs_lose() {
        let (tr, va) = data();
        let space = SearchSpace {
            l2_lambda: Param::Choices(vec![1e12, 1e12, 1.0, 1e12]),
            ..small_space()
        };
        let r = random_search(&space, 8, 11, &tr, &va).unwrap();
        assert!(r.trials.iter().any(|t| t.config.l2_lambda == 1.0));
        assert_eq!(r.best_config.l2_lambda, 1.0);
        // λ = 1e12 leaves every leaf near zero, so those models stay at the base score.
        for t in r.trials.iter().filter(|t| t.config.l2_lambda == 1e12) {
            assert!(t.valid_mse.unwrap() > r.trials[r.best_index].valid_mse.unwrap());
        }
    }

    #[test]
    fn same_seed_same_trials() {
        let (tr, va) = data();
        let a = random_search(&small_space(), 3, 5, &tr, &va).unwrap();
        let b = random_search(&small_space(), 3, 5, &tr, &va).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.best_index, b.best_index);
        assert_eq!(a.best_model.trees, b.best_model.trees);
    }

    #[test]
    fn invalid_inputs() {
        let (tr, va) = data();
        assert!(random_search(&small_space(), 0, 1, &tr, &va).is_err());
        let bad = SearchSpace {
            learning_rate: Param::LogUniform { lo: 0.5, hi: 0.1 },
            ..small_space()
        };
        assert!(random_search(&bad, 2, 1, &tr, &va).is_err());
    }

    #[test]
    fn samples_stay_in_range() {
        let s = SearchSpace::default();
        for c in s.sample_configs(200, 9) {
            assert!((1000..=4095).contains(&c.num_leaves));
            assert!((1e-3..=10.0).contains(&c.l2_lambda));
            assert!((0.01..=0.3).contains(&c.learning_rate));
        }
    }
}
