use std::path::Path;

use chrono::Datelike;

use super::temporal::{week_hour, Timestamp};
use super::{check_columns, open_csv, parse_at, record_error, EmissionSpecies, SNAP_SECTORS};
use crate::error::{Error, Result};
use crate::grid::CellId;

pub const WEEK_HOURS: usize = 168;

/// Temporal scaling tables, renormalized to mean 1 at construction: per
/// sector across the 168 week-hours, and per species and sector across the
/// 12 months.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionScaling {
    hour_factor: Vec<[f64; WEEK_HOURS]>,
    month_factor: Vec<[f64; 12]>,
}

fn normalize_mean<const N: usize>(table: &mut [f64; N], what: &str) -> Result<()> {
    if table.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!("{what}: factors must be finite and non-negative")));
    }
    let mean = table.iter().sum::<f64>() / N as f64;
    if !(mean > 0.0) {
        return Err(Error::invalid(format!("{what}: factors are all zero")));
    }
    for v in table.iter_mut() {
        *v /= mean;
    }
    Ok(())
}

impl EmissionScaling {
    /// `hour_factor[sector - 1][week_hour]` and
    /// `month_factor[species][sector - 1][month - 1]`.
    pub fn new(
        mut hour_factor: Vec<[f64; WEEK_HOURS]>,
        mut month_factor: Vec<Vec<[f64; 12]>>,
    ) -> Result<Self> {
        if hour_factor.len() != SNAP_SECTORS {
            return Err(Error::invalid(format!(
                "expected {SNAP_SECTORS} week-hour tables, got {}",
                hour_factor.len()
            )));
        }
        if month_factor.len() != EmissionSpecies::ALL.len()
            || month_factor.iter().any(|s| s.len() != SNAP_SECTORS)
        {
            return Err(Error::invalid("month tables must cover 7 species x 11 sectors"));
        }
        for (s, t) in hour_factor.iter_mut().enumerate() {
            normalize_mean(t, &format!("week-hour factors for sector {}", s + 1))?;
        }
        for (sp, sectors) in EmissionSpecies::ALL.iter().zip(month_factor.iter_mut()) {
            for (s, t) in sectors.iter_mut().enumerate() {
                normalize_mean(t, &format!("month factors for {sp} sector {}", s + 1))?;
            }
        }
        Ok(EmissionScaling {
            hour_factor,
            month_factor: month_factor.into_iter().flatten().collect(),
        })
    }

    /// All factors equal to one.
    pub fn flat() -> Self {
        EmissionScaling {
            hour_factor: vec![[1.0; WEEK_HOURS]; SNAP_SECTORS],
            month_factor: vec![[1.0; 12]; SNAP_SECTORS * EmissionSpecies::ALL.len()],
        }
    }

    pub fn factor(&self, species: EmissionSpecies, sector: usize, ts: &Timestamp) -> f64 {
        let s = sector - 1;
        self.hour_factor[s][week_hour(ts)]
            * self.month_factor[species.index() * SNAP_SECTORS + s][(ts.month() - 1) as usize]
    }

    pub fn hour_table(&self, sector: usize) -> &[f64; WEEK_HOURS] {
        &self.hour_factor[sector - 1]
    }

    pub fn month_table(&self, species: EmissionSpecies, sector: usize) -> &[f64; 12] {
        &self.month_factor[species.index() * SNAP_SECTORS + sector - 1]
    }

    /// Reads `snap_sector,week_hour,factor` and `species,snap_sector,month,factor`.
    /// Every table entry must be present.
    pub fn load(hour_path: &Path, month_path: &Path) -> Result<Self> {
        let mut hours = vec![[f64::NAN; WEEK_HOURS]; SNAP_SECTORS];
        let mut rdr = open_csv(hour_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(hour_path, &rec, 3)?;
            let sector: usize = parse_at(hour_path, &rec, 0)?;
            let wh: usize = parse_at(hour_path, &rec, 1)?;
            if !(1..=SNAP_SECTORS).contains(&sector) || wh >= WEEK_HOURS {
                return Err(record_error(hour_path, &rec, "sector or week hour out of range"));
            }
            hours[sector - 1][wh] = parse_at(hour_path, &rec, 2)?;
        }
        let mut months = vec![vec![[f64::NAN; 12]; SNAP_SECTORS]; EmissionSpecies::ALL.len()];
        let mut rdr = open_csv(month_path)?;
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(month_path, &rec, 4)?;
            let species: EmissionSpecies = parse_at(month_path, &rec, 0)?;
            let sector: usize = parse_at(month_path, &rec, 1)?;
            let month: usize = parse_at(month_path, &rec, 2)?;
            if !(1..=SNAP_SECTORS).contains(&sector) || !(1..=12).contains(&month) {
                return Err(record_error(month_path, &rec, "sector or month out of range"));
            }
            months[species.index()][sector - 1][month - 1] = parse_at(month_path, &rec, 3)?;
        }
        for (s, t) in hours.iter().enumerate() {
            if let Some(wh) = t.iter().position(|v| v.is_nan()) {
                return Err(Error::invalid(format!(
                    "{}: missing factor for sector {} week hour {wh}",
                    hour_path.display(),
                    s + 1
                )));
            }
        }
        for (sp, sectors) in EmissionSpecies::ALL.iter().zip(&months) {
            for (s, t) in sectors.iter().enumerate() {
                if let Some(m) = t.iter().position(|v| v.is_nan()) {
                    return Err(Error::invalid(format!(
                        "{}: missing factor for {sp} sector {} month {}",
                        month_path.display(),
                        s + 1,
                        m + 1
                    )));
                }
            }
        }
        Self::new(hours, months)
    }

    pub fn save(&self, hour_path: &Path, month_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(hour_path)?;
        w.write_record(["snap_sector", "week_hour", "factor"])?;
        for (s, t) in self.hour_factor.iter().enumerate() {
            for (wh, v) in t.iter().enumerate() {
                w.write_record([(s + 1).to_string(), wh.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(hour_path, e))?;
        let mut w = csv::Writer::from_path(month_path)?;
        w.write_record(["species", "snap_sector", "month", "factor"])?;
        for &sp in EmissionSpecies::ALL {
            for s in 1..=SNAP_SECTORS {
                for (m, v) in self.month_table(sp, s).iter().enumerate() {
                    w.write_record([sp.as_str().to_string(), s.to_string(), (m + 1).to_string(), v.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(month_path, e))
    }
}

/// Annual emissions per species, sector and cell, with temporal scaling.
/// Species/sector layers absent from the inventory emit zero.
#[derive(Debug, Clone)]
pub struct EmissionsInventory {
    n_cells: usize,
    layers: Vec<Option<Vec<f64>>>,
    scaling: EmissionScaling,
}

fn layer_index(species: EmissionSpecies, sector: usize) -> usize {
    species.index() * SNAP_SECTORS + sector - 1
}

impl EmissionsInventory {
    pub fn new(n_cells: usize, scaling: EmissionScaling) -> Self {
        EmissionsInventory {
            n_cells,
            layers: vec![None; EmissionSpecies::ALL.len() * SNAP_SECTORS],
            scaling,
        }
    }

    pub fn set_annual(
        &mut self,
        species: EmissionSpecies,
        sector: usize,
        cell: CellId,
        annual: f64,
    ) -> Result<()> {
        if !(1..=SNAP_SECTORS).contains(&sector) {
            return Err(Error::invalid(format!("SNAP sector {sector} out of range 1..=11")));
        }
        if cell as usize >= self.n_cells {
            return Err(Error::UnknownCell(cell));
        }
        if !(annual >= 0.0 && annual.is_finite()) {
            return Err(Error::invalid(format!("annual emission must be non-negative, got {annual}")));
        }
        let n = self.n_cells;
        self.layers[layer_index(species, sector)].get_or_insert_with(|| vec![0.0; n])[cell as usize] = annual;
        Ok(())
    }

    pub fn annual(&self, species: EmissionSpecies, sector: usize, cell: CellId) -> f64 {
        self.layers[layer_index(species, sector)]
            .as_ref()
            .map_or(0.0, |l| l[cell as usize])
    }

    pub fn scaling(&self) -> &EmissionScaling {
        &self.scaling
    }

    pub fn has_layer(&self, species: EmissionSpecies, sector: usize) -> bool {
        self.layers[layer_index(species, sector)].is_some()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Instantaneous value for one cell.
    pub fn value(&self, species: EmissionSpecies, sector: usize, cell: CellId, ts: &Timestamp) -> f64 {
        match &self.layers[layer_index(species, sector)] {
            None => 0.0,
            Some(l) => l[cell as usize] * self.scaling.factor(species, sector, ts),
        }
    }

    /// Reads `species,snap_sector,cell_id,annual_value`.
    pub fn load(path: &Path, n_cells: usize, scaling: EmissionScaling) -> Result<Self> {
        let mut inv = EmissionsInventory::new(n_cells, scaling);
        let mut rdr = open_csv(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(path, &rec, 4)?;
            inv.set_annual(
                parse_at(path, &rec, 0)?,
                parse_at(path, &rec, 1)?,
                parse_at(path, &rec, 2)?,
                parse_at(path, &rec, 3)?,
            )
            .map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(inv)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["species", "snap_sector", "cell_id", "annual_value"])?;
        for &sp in EmissionSpecies::ALL {
            for s in 1..=SNAP_SECTORS {
                if let Some(layer) = &self.layers[layer_index(sp, s)] {
                    for (cell, v) in layer.iter().enumerate() {
                        w.write_record([sp.as_str().to_string(), s.to_string(), cell.to_string(), v.to_string()])?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-cell instantaneous emissions of one species and sector at `ts`.
pub fn scale_emissions(
    inventory: &EmissionsInventory,
    species: EmissionSpecies,
    sector: usize,
    ts: &Timestamp,
) -> Result<Vec<f64>> {
    if !(1..=SNAP_SECTORS).contains(&sector) {
        return Err(Error::invalid(format!("SNAP sector {sector} out of range 1..=11")));
    }
    Ok((0..inventory.n_cells as CellId)
        .map(|c| inventory.value(species, sector, c, ts))
        .collect())
}
