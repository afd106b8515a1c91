use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::{normalize_label, FeatureColumn, Family};

/// Which dataset families a model may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilySelection {
    All,
    /// Temporal, meteorology and remote sensing.
    Global,
    /// Road structure, land use, meteorology and temporal.
    Forecasting,
    Families(BTreeSet<Family>),
}

impl FamilySelection {
    pub fn families(&self) -> Vec<Family> {
        let keep: BTreeSet<Family> = match self {
            FamilySelection::All => Family::ALL.into_iter().collect(),
            FamilySelection::Global => [Family::Temporal, Family::Meteorology, Family::RemoteSensing].into(),
            FamilySelection::Forecasting => [
                Family::TransportStructural,
                Family::LandUse,
                Family::Meteorology,
                Family::Temporal,
            ]
            .into(),
            FamilySelection::Families(s) => s.clone(),
        };
        Family::ALL.into_iter().filter(|f| keep.contains(f)).collect()
    }

    pub fn label(&self) -> String {
        match self {
            FamilySelection::All => "All".into(),
            FamilySelection::Global => "Global".into(),
            FamilySelection::Forecasting => "Forecasting".into(),
            FamilySelection::Families(_) => self.families().iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+"),
        }
    }

    /// Indices of the selected columns, in their original order.
    pub fn column_indices(&self, columns: &[FeatureColumn]) -> Result<Vec<usize>> {
        let fams = self.families();
        if fams.is_empty() {
            return Err(Error::invalid("family selection is empty"));
        }
        let idx: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| fams.contains(&c.family))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::invalid(format!("no columns for selection {}", self.label())));
        }
        Ok(idx)
    }
}

impl fmt::Display for FamilySelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for FamilySelection {
    type Err = Error;

    /// A preset name or a `,`/`+` separated list of family names.
    fn from_str(s: &str) -> Result<Self> {
        match normalize_label(s).as_str() {
            "all" => return Ok(FamilySelection::All),
            "global" => return Ok(FamilySelection::Global),
            "forecasting" => return Ok(FamilySelection::Forecasting),
            _ => {}
        }
        let fams = s
            .split([',', '+'])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(Family::from_str)
            .collect::<Result<BTreeSet<_>>>()?;
        if fams.is_empty() {
            return Err(Error::invalid("family selection is empty"));
        }
        Ok(FamilySelection::Families(fams))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::feature_schema;

    fn width(sel: &str) -> usize {
        sel.parse::<FamilySelection>().unwrap().column_indices(&feature_schema()).unwrap().len()
    }

    #[test]
    fn preset_widths() {
        assert_eq!(width("All"), 152);
        assert_eq!(width("temporal"), 4);
        assert_eq!(width("Global"), 4 + 11 + 5);
        assert_eq!(width("Forecasting"), 28 + 22 + 11 + 4);
        assert_eq!(width("meteorology,temporal"), 15);
    }

    #[test]
    fn order_is_preserved() {
        let idx = FamilySelection::Global.column_indices(&feature_schema()).unwrap();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_or_unknown() {
        assert!("".parse::<FamilySelection>().is_err());
        assert!("weather".parse::<FamilySelection>().is_err());
        assert!(FamilySelection::Families(BTreeSet::new()).column_indices(&feature_schema()).is_err());
    }
}
