use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{FamilySelection, Param, Protocol, SearchSpace, SplitSpec};
use crate::error::{Error, Result};
use crate::ingest::Pollutant;

/// A parsed experiment recipe (`key = value` lines, `#` comments).
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub input_dir: PathBuf,
    pub pollutants: Vec<Pollutant>,
    pub subsets: Vec<FamilySelection>,
    pub protocol: Protocol,
}

const KEYS: &[&str] = &[
    "input_dir",
    "pollutants",
    "families",
    "train_years",
    "validation_years",
    "test_years",
    "n_configs",
    "seed",
    "loov",
    "loov_folds",
    "loov_reuse_config",
    "search_preset",
    "num_leaves",
    "min_data_in_leaf",
    "l2_lambda",
    "learning_rate",
    "max_trees",
    "early_stopping_rounds",
    "max_bin",
    "goss_top_rate",
    "goss_other_rate",
    "min_split_gain",
];

impl Recipe {
    pub fn load(path: &Path) -> Result<Recipe> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Recipe::parse(&text, base, &path.display().to_string())
    }

    /// `input_dir` is resolved against `base_dir` when relative.
    pub fn parse(text: &str, base_dir: &Path, source: &str) -> Result<Recipe> {
        let perr = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(i + 1, format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(perr(i + 1, format!("unknown key {k:?}")));
            }
            if kv.insert(k, (i + 1, v)).is_some() {
                return Err(perr(i + 1, format!("duplicate key {k:?}")));
            }
        }
        let get = |k: &str| kv.get(k).copied();
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let wrap = |line: usize| move |m: String| perr(line, m);

        let Some((line, dir)) = get("input_dir") else {
            return Err(perr(0, "missing input_dir".into()));
        };
        if dir.is_empty() {
            return Err(perr(line, "empty input_dir".into()));
        }
        let input_dir = base_dir.join(dir);

        let pollutants = match get("pollutants") {
            None => vec![Pollutant::No2],
            Some((line, v)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Pollutant>().map_err(|e| perr(line, e.to_string())))
                .collect::<Result<Vec<_>>>()?,
        };
        if pollutants.is_empty() {
            return Err(perr(get("pollutants").map_or(0, |p| p.0), "no pollutants".into()));
        }
        let subsets = match get("families") {
            None => vec![FamilySelection::All],
            Some((line, v)) => v
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<FamilySelection>().map_err(|e| perr(line, e.to_string())))
                .collect::<Result<Vec<_>>>()?,
        };
        if subsets.is_empty() {
            return Err(perr(get("families").map_or(0, |p| p.0), "no family selections".into()));
        }

        let years = |key: &str, default: &[i32]| -> Result<Vec<i32>> {
            match get(key) {
                None => Ok(default.to_vec()),
                Some((line, v)) => parse_years(v).map_err(wrap(line)),
            }
        };
        let split = SplitSpec::new(
            years("train_years", &[2014, 2015, 2016])?,
            years("validation_years", &[2017])?,
            years("test_years", &[2018])?,
        )
        .map_err(|e| perr(get("train_years").map_or(0, |p| p.0), e.to_string()))?;

        let mut space = match get("search_preset") {
            None => SearchSpace::default(),
            Some((_, "default")) => SearchSpace::default(),
            Some((_, "desk")) => SearchSpace::desk(),
            Some((line, v)) => return Err(perr(line, format!("unknown search_preset {v:?}"))),
        };
        for (key, int, slot) in [
            ("num_leaves", true, &mut space.num_leaves),
            ("min_data_in_leaf", true, &mut space.min_data_in_leaf),
            ("l2_lambda", false, &mut space.l2_lambda),
            ("learning_rate", false, &mut space.learning_rate),
        ] {
            if let Some((line, v)) = get(key) {
                *slot = parse_param(v, int).map_err(wrap(line))?;
                slot.validate(key).map_err(|e| perr(line, e.to_string()))?;
            }
        }
        let b = &mut space.base;
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some((line, v)) = get($key) {
                    $field = num($key, v).map_err(wrap(line))?;
                }
            };
        }
        set!("max_trees", b.max_trees);
        set!("early_stopping_rounds", b.early_stopping_rounds);
        set!("max_bin", b.max_bin);
        set!("goss_top_rate", b.goss_top_rate);
        set!("goss_other_rate", b.goss_other_rate);
        set!("min_split_gain", b.min_split_gain);
        space.base.validate().map_err(|e| perr(0, e.to_string()))?;

        let mut protocol = Protocol::new(split, space);
        set!("n_configs", protocol.n_configs);
        set!("seed", protocol.seed);
        set!("loov", protocol.run_loov);
        set!("loov_folds", protocol.loov_folds);
        set!("loov_reuse_config", protocol.loov_reuse_config);
        if protocol.n_configs == 0 {
            return Err(perr(get("n_configs").map_or(0, |p| p.0), "n_configs must be at least 1".into()));
        }
        Ok(Recipe {
            input_dir,
            pollutants,
            subsets,
            protocol,
        })
    }
}

/// `2014-2016`, `2017`, or comma-separated mixes of both.
fn parse_years(v: &str) -> std::result::Result<Vec<i32>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || format!("bad year list {v:?}");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (i32, i32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

/// `lo..hi` is a range (integer-uniform or log-uniform), otherwise a choice list.
fn parse_param(v: &str, int: bool) -> std::result::Result<Param, String> {
    let bad = || format!("bad search range {v:?}");
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (a.trim(), b.trim());
        return Ok(if int {
            Param::IntUniform {
                lo: a.parse().map_err(|_| bad())?,
                hi: b.parse().map_err(|_| bad())?,
            }
        } else {
            Param::LogUniform {
                lo: a.parse().map_err(|_| bad())?,
                hi: b.parse().map_err(|_| bad())?,
            }
        });
    }
    let vals = v
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Param::Choices(vals))
}
