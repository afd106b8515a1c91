use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{final_fit, random_search, score, temporal_split, LabeledRows, Protocol};
use crate::error::{Error, Result};
use crate::gbdt::TrainConfig;

/// Fold of each station (by position in the sorted id list): round-robin.
pub fn fold_assignment(n_stations: usize, k: usize) -> Vec<usize> {
    (0..n_stations).map(|i| i % k.max(1)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationScore {
    pub station_id: String,
    pub fold: usize,
    pub n: usize,
    pub r2: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoovSummary {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub median: f64,
    pub n_scored: usize,
}

impl LoovSummary {
    pub fn from_scores(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        Some(LoovSummary {
            max: s[n - 1],
            min: s[0],
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            n_scored: n,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoovResult {
    pub k: usize,
    pub scores: Vec<StationScore>,
    /// Config used per fold.
    pub fold_configs: Vec<TrainConfig>,
    pub summary: Option<LoovSummary>,
}

/// Station-level k-fold validation. With `reuse` set every fold trains that
/// config; otherwise each fold runs its own search.
pub fn loov_experiment(rows: &LabeledRows, protocol: &Protocol, reuse: Option<&TrainConfig>) -> Result<LoovResult> {
    let k = protocol.loov_folds;
    let present: BTreeSet<u32> = rows.station.iter().copied().collect();
    let stations: Vec<u32> = present.into_iter().collect();
    if k < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if stations.len() < k {
        return Err(Error::invalid(format!("{} stations for {k} folds", stations.len())));
    }
    let folds = fold_assignment(stations.len(), k);
    let by_station = rows.rows_by_station();

    let per_fold: Vec<Result<(TrainConfig, Vec<StationScore>)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let held: Vec<u32> = stations.iter().zip(&folds).filter(|(_, &g)| g == f).map(|(&s, _)| s).collect();
            let retained: Vec<usize> = (0..rows.n_rows()).filter(|&i| !held.contains(&rows.station[i])).collect();
            let train_rows = rows.subset(&retained);
            assert!(train_rows.station.iter().all(|s| !held.contains(s)), "held-out station leaked into training");
            let (tr, va, te) = temporal_split(&train_rows, &protocol.split)?;
            drop(train_rows);
            let config = match reuse {
                Some(c) => c.clone(),
                None => {
                    let seed = protocol.seed.wrapping_add(1_000 * (f as u64 + 1));
                    random_search(&protocol.space, protocol.n_configs, seed, &tr, &va)?.best_config
                }
            };
            let model = final_fit(&config, &tr, &va, &te)?.model;
            let mut out = Vec::new();
            for s in held {
                let idx = &by_station[&s];
                let station_id = rows.station_ids[s as usize].clone();
                let (r2, skipped) = if idx.len() < 2 {
                    (None, Some("fewer than 2 observations".to_string()))
                } else {
                    match score(&model, &rows.subset(idx))?.r2 {
                        Some(r) => (Some(r), None),
                        None => (None, Some("constant series".to_string())),
                    }
                };
                out.push(StationScore {
                    station_id,
                    fold: f,
                    n: idx.len(),
                    r2,
                    skipped,
                });
            }
            Ok((config, out))
        })
        .collect();

    let mut scores = Vec::new();
    let mut fold_configs = Vec::new();
    for r in per_fold {
        let (c, s) = r?;
        fold_configs.push(c);
        scores.extend(s);
    }
    scores.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let defined: Vec<f64> = scores.iter().filter_map(|s| s.r2).collect();
    Ok(LoovResult {
        k,
        summary: LoovSummary::from_scores(&defined),
        scores,
        fold_configs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::testutil::synthetic_rows;
    use crate::train::{Param, SearchSpace, SplitSpec};

    #[test]
    fn folds_cover_every_station_once() {
        for n in 5..30 {
            let f = fold_assignment(n, 5);
            assert_eq!(f.len(), n);
            for g in 0..5 {
                assert!(f.contains(&g));
            }
        }
    }

    #[test]
    fn summary_statistics() {
        let s = LoovSummary::from_scores(&[0.5, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(s.max, 0.9);
        assert_eq!(s.min, -0.2);
        assert!((s.mean - 0.325).abs() < 1e-12);
        assert!((s.median - 0.3).abs() < 1e-12);
        assert_eq!(LoovSummary::from_scores(&[0.1, 0.4, 0.2]).unwrap().median, 0.2);
        assert!(LoovSummary::from_scores(&[]).is_none());
    }

    fn protocol() -> Protocol {
        let space = SearchSpace {
            num_leaves: Param::Choices(vec![8.0]),
            min_data_in_leaf: Param::Choices(vec![5.0]),
            l2_lambda: Param::Choices(vec![1.0]),
            learning_rate: Param::Choices(vec![0.1]),
            base: TrainConfig {
                max_trees: 150,
                ..TrainConfig::default()
            },
        };
        Protocol {
            n_configs: 1,
            ..Protocol::new(SplitSpec::new([2016], [2017], [2018]).unwrap(), space)
        }
    }

    #[test]
    fn too_few_stations() {
        let rows = synthetic_rows(3, 2016..=2018, 1);
        assert!(loov_experiment(&rows, &protocol(), None).is_err());
    }

    #[test]
    fn shared_signal_generalizes() {
        let rows = synthetic_rows(5, 2016..=2018, 2);
        let r = loov_experiment(&rows, &protocol(), None).unwrap();
        assert_eq!(r.scores.len(), 5);
        let s = r.summary.unwrap();
        assert!(s.median > 0.8, "{s:?}");
    }
}
