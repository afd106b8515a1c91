use std::path::Path;

use super::{open_csv, parse_at, record_error};
use crate::error::{Error, Result};
use crate::grid::{CellId, StudyArea};

pub const LAND_USE_CLASSES: usize = 22;

/// Land-cover raster resolution in meters.
pub const LAND_USE_PIXEL_SIZE: f64 = 25.0;

/// Per-cell pixel counts for each land-cover class.
#[derive(Debug, Clone)]
pub struct LandUseProfile {
    counts: Vec<Option<[u32; LAND_USE_CLASSES]>>,
    pixels_per_cell: u32,
}

/// Pixels of the land-cover raster inside one grid cell.
pub fn pixels_per_cell(cell_size: f64) -> u32 {
    let side = (cell_size / LAND_USE_PIXEL_SIZE).round();
    (side * side) as u32
}

impl LandUseProfile {
    pub fn new(area: &StudyArea) -> Self {
        LandUseProfile {
            counts: vec![None; area.len()],
            pixels_per_cell: pixels_per_cell(area.cell_size()),
        }
    }

    pub fn pixels_per_cell(&self) -> u32 {
        self.pixels_per_cell
    }

    pub fn set(&mut self, cell: CellId, counts: [u32; LAND_USE_CLASSES]) -> Result<()> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != self.pixels_per_cell as u64 {
            return Err(Error::invalid(format!(
                "cell {cell}: land-use counts sum to {total}, expected {}",
                self.pixels_per_cell
            )));
        }
        let slot = self.counts.get_mut(cell as usize).ok_or(Error::UnknownCell(cell))?;
        *slot = Some(counts);
        Ok(())
    }

    pub fn get(&self, cell: CellId) -> Option<&[u32; LAND_USE_CLASSES]> {
        self.counts.get(cell as usize)?.as_ref()
    }

    /// Reads `cell_id,class_00,...,class_21`.
    pub fn load(path: &Path, area: &StudyArea) -> Result<Self> {
        let mut out = LandUseProfile::new(area);
        let mut rdr = open_csv(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            super::check_columns(path, &rec, 1 + LAND_USE_CLASSES)?;
            let cell: CellId = parse_at(path, &rec, 0)?;
            let mut counts = [0u32; LAND_USE_CLASSES];
            for (i, c) in counts.iter_mut().enumerate() {
                *c = parse_at(path, &rec, i + 1)?;
            }
            out.set(cell, counts).map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cell_id".to_string()];
        header.extend((0..LAND_USE_CLASSES).map(|i| format!("class_{i:02}")));
        w.write_record(&header)?;
        for (cell, counts) in self.counts.iter().enumerate() {
            if let Some(counts) = counts {
                let mut row = vec![cell.to_string()];
                row.extend(counts.iter().map(u32::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
