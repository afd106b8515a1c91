//! Eulerian grid framework.
//!
//! Every dataset is projected onto a regular grid of square cells in planar
//! meters. Cells are half-open intervals `[k*s, (k+1)*s)` on both axes, so a
//! point belongs to exactly one cell. Only cells present in the land mask are
//! part of the study area; lookups anywhere else fail.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type CellId = u32;

/// Default cell edge length in meters.
pub const DEFAULT_CELL_SIZE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub cell_id: CellId,
    pub row: u32,
    pub col: u32,
    pub centroid_x: f64,
    pub centroid_y: f64,
}

#[derive(Debug, Clone)]
pub struct StudyArea {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    cells: Vec<GridCell>,
    by_index: HashMap<(u32, u32), CellId>,
    n_rows: u32,
    n_cols: u32,
}

impl StudyArea {
    /// Builds the study area. Cell ids are assigned in ascending `(row, col)`
    /// order, so identical masks always produce identical ids.
    pub fn new(
        origin: (f64, f64),
        cell_size: f64,
        mask: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::invalid("origin must be finite"));
        }
        let mask: BTreeSet<(u32, u32)> = mask.into_iter().collect();
        if mask.is_empty() {
            return Err(Error::invalid("study area mask is empty"));
        }

        let mut cells = Vec::with_capacity(mask.len());
        let mut by_index = HashMap::with_capacity(mask.len());
        let (mut n_rows, mut n_cols) = (0, 0);
        for (id, &(row, col)) in mask.iter().enumerate() {
            let cell_id = id as CellId;
            cells.push(GridCell {
                cell_id,
                row,
                col,
                centroid_x: origin.0 + (col as f64 + 0.5) * cell_size,
                centroid_y: origin.1 + (row as f64 + 0.5) * cell_size,
            });
            by_index.insert((row, col), cell_id);
            n_rows = n_rows.max(row + 1);
            n_cols = n_cols.max(col + 1);
        }

        Ok(StudyArea {
            origin_x: origin.0,
            origin_y: origin.1,
            cell_size,
            cells,
            by_index,
            n_rows,
            n_cols,
        })
    }

    /// A fully populated `rows x cols` rectangle.
    pub fn rectangle(origin: (f64, f64), cell_size: f64, rows: u32, cols: u32) -> Result<Self> {
        let mask = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c)));
        Self::new(origin, cell_size, mask)
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Number of rows and columns of the mask's bounding box.
    pub fn dims(&self) -> (u32, u32) {
        (self.n_rows, self.n_cols)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn cell(&self, id: CellId) -> Result<&GridCell> {
        self.cells.get(id as usize).ok_or(Error::UnknownCell(id))
    }

    pub fn cell_at(&self, row: u32, col: u32) -> Option<CellId> {
        self.by_index.get(&(row, col)).copied()
    }

    /// Row/column of the (possibly unmasked) cell containing `(x, y)`, or
    /// `None` when the point falls left of or below the origin.
    pub fn grid_index(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let col = ((x - self.origin_x) / self.cell_size).floor();
        let row = ((y - self.origin_y) / self.cell_size).floor();
        if !(col >= 0.0 && row >= 0.0) || col > u32::MAX as f64 || row > u32::MAX as f64 {
            return None;
        }
        Some((row as u32, col as u32))
    }

    /// Floor-division lookup of the cell containing `(x, y)`.
    pub fn cell_lookup(&self, x: f64, y: f64) -> Result<CellId> {
        self.grid_index(x, y)
            .and_then(|(row, col)| self.cell_at(row, col))
            .ok_or(Error::OutOfArea { x, y })
    }

    /// Containing cell of a point and its planar distance to that cell's
    /// centroid.
    pub fn snap_to_centroid(&self, x: f64, y: f64) -> Result<(CellId, f64)> {
        let id = self.cell_lookup(x, y)?;
        let cell = &self.cells[id as usize];
        let distance = (x - cell.centroid_x).hypot(y - cell.centroid_y);
        Ok((id, distance))
    }

    /// Upper bound on any abstraction distance for this grid.
    pub fn max_abstraction_distance(&self) -> f64 {
        self.cell_size * std::f64::consts::SQRT_2 / 2.0
    }

    /// Ids of the masked 8-neighbours of a cell, in ascending id order.
    pub fn neighbors8(&self, id: CellId) -> Vec<CellId> {
        let cell = &self.cells[id as usize];
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, c) = (cell.row as i64 + dr, cell.col as i64 + dc);
                if r < 0 || c < 0 {
                    continue;
                }
                if let Some(n) = self.cell_at(r as u32, c as u32) {
                    out.push(n);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Writes the study-area definition file.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "origin_x,origin_y,cell_size")?;
        writeln!(w, "{},{},{}", self.origin_x, self.origin_y, self.cell_size)?;
        writeln!(w, "row,col")?;
        for c in &self.cells {
            writeln!(w, "{},{}", c.row, c.col)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a study-area definition: a line `origin_x,origin_y,cell_size`
    /// followed by one `row,col` line per masked cell. Literal header lines
    /// naming the columns are skipped.
    pub fn read_from(r: impl BufRead, source: &str) -> Result<Self> {
        let mut origin_line: Option<(f64, f64, f64)> = None;
        let mut mask = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            let line = line.trim();
            if line.is_empty() || line == "origin_x,origin_y,cell_size" || line == "row,col" {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |message: String| Error::Parse {
                path: source.to_string(),
                line: lineno,
                message,
            };
            match origin_line {
                None => {
                    if parts.len() != 3 {
                        return Err(bad(format!("expected origin_x,origin_y,cell_size, got {line:?}")));
                    }
                    let v: Vec<f64> = parts
                        .iter()
                        .map(|p| parse_field(p))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(bad)?;
                    origin_line = Some((v[0], v[1], v[2]));
                }
                Some(_) => {
                    if parts.len() != 2 {
                        return Err(bad(format!("expected row,col, got {line:?}")));
                    }
                    let row: u32 = parse_field(parts[0]).map_err(bad)?;
                    let col: u32 = parse_field(parts[1]).map_err(bad)?;
                    mask.push((row, col));
                }
            }
        }
        let (ox, oy, size) = origin_line.ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: 0,
            message: "missing origin line".into(),
        })?;
        StudyArea::new((ox, oy), size, mask)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), &path.display().to_string())
    }
}

fn parse_field<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

/// Monitoring-station environment classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnvironmentClass {
    UrbanBackground,
    UrbanTraffic,
    UrbanIndustrial,
    SuburbanBackground,
    SuburbanIndustrial,
    RuralBackground,
}

impl EnvironmentClass {
    pub const ALL: [EnvironmentClass; 6] = [
        EnvironmentClass::UrbanBackground,
        EnvironmentClass::UrbanTraffic,
        EnvironmentClass::UrbanIndustrial,
        EnvironmentClass::SuburbanBackground,
        EnvironmentClass::SuburbanIndustrial,
        EnvironmentClass::RuralBackground,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvironmentClass::UrbanBackground => "UrbanBackground",
            EnvironmentClass::UrbanTraffic => "UrbanTraffic",
            EnvironmentClass::UrbanIndustrial => "UrbanIndustrial",
            EnvironmentClass::SuburbanBackground => "SuburbanBackground",
            EnvironmentClass::SuburbanIndustrial => "SuburbanIndustrial",
            EnvironmentClass::RuralBackground => "RuralBackground",
        }
    }
}

impl fmt::Display for EnvironmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvironmentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        EnvironmentClass::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::invalid(format!("unknown environment class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSite {
    pub station_id: String,
    pub name: String,
    pub environment_class: EnvironmentClass,
    pub true_x: f64,
    pub true_y: f64,
    pub snapped_cell: CellId,
    pub abstraction_distance_m: f64,
}

impl StationSite {
    /// Places a station at its closest grid centroid.
    pub fn locate(
        station_id: impl Into<String>,
        name: impl Into<String>,
        environment_class: EnvironmentClass,
        x: f64,
        y: f64,
        area: &StudyArea,
    ) -> Result<Self> {
        let (snapped_cell, abstraction_distance_m) = area.snap_to_centroid(x, y)?;
        Ok(StationSite {
            station_id: station_id.into(),
            name: name.into(),
            environment_class,
            true_x: x,
            true_y: y,
            snapped_cell,
            abstraction_distance_m,
        })
    }
}
