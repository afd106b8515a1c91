use std::path::Path;

use chrono::Datelike;

use super::temporal::Timestamp;
use super::{check_columns, open_csv, parse_at, record_error, RemoteVariable};
use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};

/// A pre-gridded satellite sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemoteSample {
    pub variable: RemoteVariable,
    pub cell_id: CellId,
    pub month: u32,
    pub value: f64,
}

/// Complete monthly maps per variable. Any timestamp reads the map for its
/// calendar month, whatever the year.
#[derive(Debug, Clone)]
pub struct RemoteComposite {
    // [variable][month - 1][cell]
    maps: Vec<Vec<Vec<f64>>>,
}

impl RemoteComposite {
    pub fn value(&self, variable: RemoteVariable, cell: CellId, ts: &Timestamp) -> Option<f64> {
        self.monthly(variable, cell, ts.month())
    }

    pub fn monthly(&self, variable: RemoteVariable, cell: CellId, month: u32) -> Option<f64> {
        if !(1..=12).contains(&month) {
            return None;
        }
        self.maps[variable.index()][(month - 1) as usize]
            .get(cell as usize)
            .copied()
    }
}

/// Fills missing cells with the mean of their present 8-neighbours,
/// repeating until every cell has a value. Each pass reads only values
/// known before the pass began.
pub fn fill_missing_cells(area: &StudyArea, values: &mut [Option<f64>]) -> Result<()> {
    assert_eq!(values.len(), area.len());
    if values.iter().all(Option::is_none) {
        return Err(Error::invalid("cannot gap-fill a map with no values"));
    }
    let neighbors: Vec<Vec<CellId>> = area.cells().iter().map(|c| area.neighbors8(c.cell_id)).collect();
    loop {
        let missing: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_none()).collect();
        if missing.is_empty() {
            return Ok(());
        }
        let fills: Vec<(usize, f64)> = missing
            .iter()
            .filter_map(|&i| {
                let present: Vec<f64> = neighbors[i]
                    .iter()
                    .filter_map(|&n| values[n as usize])
                    .collect();
                (!present.is_empty()).then(|| (i, present.iter().sum::<f64>() / present.len() as f64))
            })
            .collect();
        if fills.is_empty() {
            return Err(Error::invalid(format!(
                "{} cells are disconnected from every observed cell",
                missing.len()
            )));
        }
        for (i, v) in fills {
            values[i] = Some(v);
        }
    }
}

pub fn monthly_composite(samples: &[RemoteSample], area: &StudyArea) -> Result<RemoteComposite> {
    let n = area.len();
    let n_vars = RemoteVariable::ALL.len();
    let mut sums = vec![vec![vec![(0.0, 0usize); n]; 12]; n_vars];
    for s in samples {
        if !(1..=12).contains(&s.month) {
            return Err(Error::invalid(format!("month {} out of range", s.month)));
        }
        if s.cell_id as usize >= n {
            return Err(Error::UnknownCell(s.cell_id));
        }
        if !s.value.is_finite() {
            return Err(Error::invalid(format!("non-finite {} sample", s.variable)));
        }
        let slot = &mut sums[s.variable.index()][(s.month - 1) as usize][s.cell_id as usize];
        slot.0 += s.value;
        slot.1 += 1;
    }

    let mut maps = Vec::with_capacity(n_vars);
    for (var, months) in RemoteVariable::ALL.iter().zip(sums) {
        let mut var_maps = Vec::with_capacity(12);
        for (m, cells) in months.into_iter().enumerate() {
            let mut values: Vec<Option<f64>> = cells
                .into_iter()
                .map(|(s, c)| (c > 0).then(|| s / c as f64))
                .collect();
            if values.iter().all(Option::is_none) {
                return Err(Error::invalid(format!(
                    "no {var} samples anywhere for month {}",
                    m + 1
                )));
            }
            fill_missing_cells(area, &mut values)?;
            var_maps.push(values.into_iter().map(|v| v.expect("filled")).collect());
        }
        maps.push(var_maps);
    }
    Ok(RemoteComposite { maps })
}

/// Reads `variable,cell_id,month,value`.
pub fn load_remote_samples(path: &Path) -> Result<Vec<RemoteSample>> {
    let mut rdr = open_csv(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        check_columns(path, &rec, 4)?;
        let month: u32 = parse_at(path, &rec, 2)?;
        if !(1..=12).contains(&month) {
            return Err(record_error(path, &rec, format!("month {month} out of range")));
        }
        out.push(RemoteSample {
            variable: parse_at(path, &rec, 0)?,
            cell_id: parse_at(path, &rec, 1)?,
            month,
            value: parse_at(path, &rec, 3)?,
        });
    }
    Ok(out)
}
