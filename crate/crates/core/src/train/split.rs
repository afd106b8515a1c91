use std::collections::BTreeSet;

use chrono::Datelike;

use super::LabeledRows;
use crate::error::{Error, Result};

/// Calendar years assigned to training, validation and testing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_years: BTreeSet<i32>,
    pub validation_years: BTreeSet<i32>,
    pub test_years: BTreeSet<i32>,
}

impl SplitSpec {
    pub fn new(
        train: impl IntoIterator<Item = i32>,
        valid: impl IntoIterator<Item = i32>,
        test: impl IntoIterator<Item = i32>,
    ) -> Result<Self> {
        let s = SplitSpec {
            train_years: train.into_iter().collect(),
            validation_years: valid.into_iter().collect(),
            test_years: test.into_iter().collect(),
        };
        if s.train_years.is_empty() || s.validation_years.is_empty() || s.test_years.is_empty() {
            return Err(Error::invalid("every split needs at least one year"));
        }
        let disjoint = s.train_years.is_disjoint(&s.validation_years)
            && s.train_years.is_disjoint(&s.test_years)
            && s.validation_years.is_disjoint(&s.test_years);
        if !disjoint {
            return Err(Error::invalid("split years must not overlap"));
        }
        Ok(s)
    }

    /// Row indices of each split, in row order. Rows in other years are dropped.
    pub fn indices(&self, rows: &LabeledRows) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..rows.n_rows() {
            let y = rows.timestamp(i).year();
            if self.train_years.contains(&y) {
                tr.push(i);
            } else if self.validation_years.contains(&y) {
                va.push(i);
            } else if self.test_years.contains(&y) {
                te.push(i);
            }
        }
        (tr, va, te)
    }
}

/// Partitions rows by calendar year.
pub fn temporal_split(rows: &LabeledRows, spec: &SplitSpec) -> Result<(LabeledRows, LabeledRows, LabeledRows)> {
    let (tr, va, te) = spec.indices(rows);
    for (name, idx) in [("training", &tr), ("validation", &va), ("test", &te)] {
        if idx.is_empty() {
            return Err(Error::invalid(format!("{name} split is empty")));
        }
    }
    Ok((rows.subset(&tr), rows.subset(&va), rows.subset(&te)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{feature_schema, FeatureMatrix};
    use crate::train::testutil::synthetic_rows;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> SplitSpec {
        SplitSpec::new(2014..=2016, [2017], [2018]).unwrap()
    }

    fn rows_at(dates: &[(i32, u32, u32)]) -> LabeledRows {
        let mut m = FeatureMatrix::new(feature_schema().into_iter().take(1).collect());
        for &(y, mo, d) in dates {
            m.push_row((0, NaiveDate::from_ymd_opt(y, mo, d).unwrap().and_hms_opt(0, 0, 0).unwrap()), &[1.0]);
        }
        LabeledRows {
            matrix: m,
            targets: vec![1.0; dates.len()],
            station: vec![0; dates.len()],
            station_ids: vec!["s".into()],
        }
    }

    #[test]
    fn one_row_per_year() {
        let rows = rows_at(&[(2014, 3, 1), (2015, 3, 1), (2016, 3, 1), (2017, 3, 1), (2018, 3, 1)]);
        let (a, b, c) = temporal_split(&rows, &spec()).unwrap();
        assert_eq!((a.n_rows(), b.n_rows(), c.n_rows()), (3, 1, 1));
    }

    #[test]
    fn empty_split_is_an_error() {
        let rows = rows_at(&[(2017, 1, 1), (2017, 6, 1)]);
        assert!(temporal_split(&rows, &spec()).is_err());
    }

    #[test]
    fn counts_are_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dates: Vec<(i32, u32, u32)> = (0..10_000)
            .map(|_| (rng.random_range(2014..=2018), rng.random_range(1..=12), rng.random_range(1..=28)))
            .collect();
        let rows = rows_at(&dates);
        let (a, b, c) = temporal_split(&rows, &spec()).unwrap();
        assert_eq!(a.n_rows() + b.n_rows() + c.n_rows(), 10_000);
    }

    #[test]
    fn spec_validation() {
        assert!(SplitSpec::new([2014], [2014], [2015]).is_err());
        assert!(SplitSpec::new(Vec::<i32>::new(), [2014], [2015]).is_err());
    }

    #[test]
    fn splits_share_no_keys() {
        let rows = synthetic_rows(3, 2014..=2018, 2);
        let (tr, va, te) = spec().indices(&rows);
        let key = |i: &usize| rows.row_key(*i);
        let a: BTreeSet<_> = tr.iter().map(key).collect();
        let b: BTreeSet<_> = va.iter().map(key).collect();
        let c: BTreeSet<_> = te.iter().map(key).collect();
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    }
}
