use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{
    final_fit, loov_experiment, random_search, score, temporal_split, FamilySelection, LabeledRows, LoovResult, Protocol,
    Scores, Trial,
};
use crate::error::{Error, Result};
use crate::gbdt::{Ensemble, TrainConfig};
use crate::ingest::{schema_hash, Family, FeatureColumn, Pollutant};

/// Everything one (pollutant, family selection) run produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub pollutant: Pollutant,
    pub subset: String,
    pub families: Vec<Family>,
    pub columns: Vec<FeatureColumn>,
    pub schema_hash: String,
    pub rows: [usize; 3],
    pub trials: Vec<Trial>,
    pub best_index: usize,
    pub config: TrainConfig,
    /// Train and validation scores come from the winning search model.
    pub train: Scores,
    pub valid: Scores,
    /// Test score of the refit model.
    pub test: Scores,
    pub loov: Option<LoovResult>,
    pub model: Ensemble,
}

/// Search, refit and (optionally) station validation on one family selection.
pub fn run_experiment(
    rows: &LabeledRows,
    pollutant: Pollutant,
    selection: &FamilySelection,
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    let cols = selection.column_indices(&rows.matrix.columns)?;
    let owned;
    let rows = if cols.len() == rows.matrix.n_cols() {
        rows
    } else {
        owned = rows.select_columns(&cols);
        &owned
    };
    let (tr, va, te) = temporal_split(rows, &protocol.split)?;
    let seen: BTreeSet<_> = (0..tr.n_rows())
        .map(|i| tr.row_key(i))
        .chain((0..va.n_rows()).map(|i| va.row_key(i)))
        .collect();
    if (0..te.n_rows()).any(|i| seen.contains(&te.row_key(i))) {
        return Err(Error::invalid("test rows overlap training rows"));
    }
    drop(seen);

    let search = random_search(&protocol.space, protocol.n_configs, protocol.seed, &tr, &va)?;
    let search_model = search.best_model.with_columns(rows.matrix.columns.clone())?;
    let train = score(&search_model, &tr)?;
    let valid = score(&search_model, &va)?;
    let fitted = final_fit(&search.best_config, &tr, &va, &te)?;
    drop((tr, va, te));

    let loov = if protocol.run_loov {
        let reuse = protocol.loov_reuse_config.then_some(&search.best_config);
        Some(loov_experiment(rows, protocol, reuse)?)
    } else {
        None
    };
    let columns = rows.matrix.columns.clone();
    Ok(ExperimentReport {
        pollutant,
        subset: selection.label(),
        families: selection.families(),
        schema_hash: schema_hash(&columns),
        rows: [train.n, valid.n, fitted.test.n],
        columns,
        trials: search.trials,
        best_index: search.best_index,
        config: search.best_config,
        train,
        valid,
        test: fitted.test,
        loov,
        model: fitted.model,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `experiment.csv`, `scores.csv`, `trials.csv`, `loov.csv` and
/// `loov_summary.csv` into `dir`. Returns the written paths.
pub fn write_reports(reports: &[ExperimentReport], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };

    let id = |r: &ExperimentReport| vec![r.pollutant.to_string(), r.subset.clone()];

    write(
        "experiment.csv",
        &[
            "pollutant",
            "subset",
            "families",
            "n_columns",
            "schema_hash",
            "train_rows",
            "validation_rows",
            "test_rows",
            "chosen_trial",
            "num_leaves",
            "min_data_in_leaf",
            "l2_lambda",
            "learning_rate",
            "seed",
            "n_trees",
        ],
        reports
            .iter()
            .map(|r| {
                let mut v = id(r);
                v.extend([
                    r.families.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+"),
                    r.columns.len().to_string(),
                    r.schema_hash.clone(),
                    r.rows[0].to_string(),
                    r.rows[1].to_string(),
                    r.rows[2].to_string(),
                    r.best_index.to_string(),
                    r.config.num_leaves.to_string(),
                    r.config.min_data_in_leaf.to_string(),
                    r.config.l2_lambda.to_string(),
                    r.config.learning_rate.to_string(),
                    r.config.seed.to_string(),
                    r.model.best_iteration.to_string(),
                ]);
                v
            })
            .collect(),
    )?;

    write(
        "scores.csv",
        &[
            "pollutant",
            "subset",
            "train_r2",
            "validation_r2",
            "test_r2",
            "train_mse_log",
            "validation_mse_log",
            "test_mse_log",
        ],
        reports
            .iter()
            .map(|r| {
                let mut v = id(r);
                v.extend([
                    opt(r.train.r2),
                    opt(r.valid.r2),
                    opt(r.test.r2),
                    r.train.mse_log.to_string(),
                    r.valid.mse_log.to_string(),
                    r.test.mse_log.to_string(),
                ]);
                v
            })
            .collect(),
    )?;

    let mut trial_rows = Vec::new();
    for r in reports {
        for t in &r.trials {
            let mut v = id(r);
            v.extend([
                t.index.to_string(),
                t.config.num_leaves.to_string(),
                t.config.min_data_in_leaf.to_string(),
                t.config.l2_lambda.to_string(),
                t.config.learning_rate.to_string(),
                t.config.seed.to_string(),
                opt(t.valid_mse),
                t.n_trees.to_string(),
                (t.index == r.best_index).to_string(),
                t.error.clone().unwrap_or_default(),
            ]);
            trial_rows.push(v);
        }
    }
    write(
        "trials.csv",
        &[
            "pollutant",
            "subset",
            "trial",
            "num_leaves",
            "min_data_in_leaf",
            "l2_lambda",
            "learning_rate",
            "seed",
            "validation_mse_log",
            "n_trees",
            "chosen",
            "error",
        ],
        trial_rows,
    )?;

    let mut loov_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for r in reports {
        let Some(l) = &r.loov else { continue };
        for s in &l.scores {
            let mut v = id(r);
            v.extend([
                s.station_id.clone(),
                s.fold.to_string(),
                s.n.to_string(),
                opt(s.r2),
                s.skipped.clone().unwrap_or_default(),
            ]);
            loov_rows.push(v);
        }
        let mut v = id(r);
        match &l.summary {
            Some(s) => v.extend([
                s.max.to_string(),
                s.min.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.n_scored.to_string(),
            ]),
            None => v.extend(["", "", "", "", "0"].map(String::from)),
        }
        summary_rows.push(v);
    }
    write(
        "loov.csv",
        &["pollutant", "subset", "station_id", "fold", "n", "r2", "skipped"],
        loov_rows,
    )?;
    write(
        "loov_summary.csv",
        &["pollutant", "subset", "max", "min", "mean", "median", "n_scored"],
        summary_rows,
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::testutil::synthetic_rows;
    use crate::train::{Param, SearchSpace, SplitSpec};

    fn protocol() -> Protocol {
        let space = SearchSpace {
            num_leaves: Param::IntUniform { lo: 4, hi: 12 },
            min_data_in_leaf: Param::Choices(vec![5.0]),
            base: TrainConfig {
                max_trees: 80,
                ..TrainConfig::default()
            },
            ..SearchSpace::default()
        };
        Protocol {
            n_configs: 2,
            ..Protocol::new(SplitSpec::new([2016], [2017], [2018]).unwrap(), space)
        }
    }

    #[test]
    fn runs_end_to_end_and_is_repeatable() {
        let rows = synthetic_rows(5, 2016..=2018, 6);
        let sel: FamilySelection = "transport_structural".parse().unwrap();
        let a = run_experiment(&rows, Pollutant::No2, &sel, &protocol()).unwrap();
        assert_eq!(a.columns.len(), 4);
        assert!(a.test.r2.unwrap() > 0.9);
        assert_eq!(a.loov.as_ref().unwrap().scores.len(), 5);

        let dir = tempfile::tempdir().unwrap();
        let files = write_reports(std::slice::from_ref(&a), dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let b = run_experiment(&rows, Pollutant::No2, &sel, &protocol()).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_reports(&[b], dir2.path()).unwrap();
        for f in &files {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(dir2.path().join(name)).unwrap());
        }
        let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 3);
    }

    #[test]
    fn selection_without_columns() {
        let rows = synthetic_rows(5, 2016..=2018, 6);
        assert!(run_experiment(&rows, Pollutant::No2, &FamilySelection::Global, &protocol()).is_err());
    }
}
