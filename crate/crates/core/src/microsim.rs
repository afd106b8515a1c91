//! Synthetic regional populations by iterative proportional fitting, and
//! the hourly travel profiles they imply.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::traffic::Profile24;
use crate::ingest::{check_columns, field, open_csv, parse_at, record_error, DayKind, TravelMode, TravelProfiles};

/// Hour-by-hour travel mode for one day; `None` when not travelling.
pub type DayDiary = [Option<TravelMode>; 24];

#[derive(Debug, Clone, PartialEq)]
pub struct Respondent {
    pub id: String,
    /// One category per survey dimension.
    pub attributes: Vec<String>,
    pub diary: BTreeMap<DayKind, DayDiary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveySeed {
    pub dimensions: Vec<String>,
    pub respondents: Vec<Respondent>,
}

/// Target counts: region → dimension → category → count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarginalConstraints {
    pub regions: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpfOptions {
    pub max_iters: usize,
    /// Largest relative marginal error accepted as converged.
    pub tol: f64,
}

impl Default for IpfOptions {
    fn default() -> Self {
        IpfOptions {
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpfFit {
    pub region: String,
    /// One weight per respondent, in seed order.
    pub weights: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Maximum relative marginal error before fitting and after each sweep.
    pub error_history: Vec<f64>,
    /// Pearson correlation of fitted against target marginals.
    pub pearson: Option<f64>,
}

impl IpfFit {
    pub fn max_error(&self) -> f64 {
        *self.error_history.last().expect("history starts with the initial error")
    }
}

impl SurveySeed {
    pub fn new(dimensions: Vec<String>, respondents: Vec<Respondent>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for r in &respondents {
            if r.attributes.len() != dimensions.len() {
                return Err(Error::invalid(format!(
                    "respondent {} has {} attributes, expected {}",
                    r.id,
                    r.attributes.len(),
                    dimensions.len()
                )));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate respondent {}", r.id)));
            }
        }
        Ok(SurveySeed { dimensions, respondents })
    }

    fn dimension(&self, name: &str) -> Result<usize> {
        self.dimensions
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| Error::invalid(format!("unknown survey dimension {name:?}")))
    }

    /// Reads `respondent_id,<dim>...` and `respondent_id,day_kind,hour,mode`.
    /// An empty mode or `none` means the respondent is not travelling.
    pub fn load(survey: &Path, diary: &Path) -> Result<Self> {
        let mut rdr = open_csv(survey)?;
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::invalid(format!("{}: survey needs at least one attribute", survey.display())));
        }
        let dimensions: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut respondents = Vec::new();
        let mut index = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(survey, &rec, header.len())?;
            let id = field(survey, &rec, 0)?.to_string();
            index.insert(id.clone(), respondents.len());
            respondents.push(Respondent {
                id,
                attributes: rec.iter().skip(1).map(str::to_string).collect(),
                diary: BTreeMap::new(),
            });
        }

        let mut seen: BTreeMap<(usize, DayKind), u32> = BTreeMap::new();
        let mut rdr = open_csv(diary)?;
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(diary, &rec, 4)?;
            let id = field(diary, &rec, 0)?;
            let &r = index
                .get(id)
                .ok_or_else(|| record_error(diary, &rec, format!("unknown respondent {id:?}")))?;
            let day: DayKind = parse_at(diary, &rec, 1)?;
            let hour: usize = parse_at(diary, &rec, 2)?;
            if hour > 23 {
                return Err(record_error(diary, &rec, format!("hour {hour} out of range")));
            }
            let raw = field(diary, &rec, 3)?;
            let mode = if raw.is_empty() || raw.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(raw.parse::<TravelMode>().map_err(|e| record_error(diary, &rec, e))?)
            };
            let slot = seen.entry((r, day)).or_insert(0);
            if *slot & (1 << hour) != 0 {
                return Err(record_error(diary, &rec, format!("hour {hour} listed twice")));
            }
            *slot |= 1 << hour;
            respondents[r].diary.entry(day).or_insert([None; 24])[hour] = mode;
        }
        for ((r, day), mask) in seen {
            if mask != (1 << 24) - 1 {
                return Err(Error::invalid(format!(
                    "{}: diary of respondent {} for {day} does not cover all 24 hours",
                    diary.display(),
                    respondents[r].id
                )));
            }
        }
        SurveySeed::new(dimensions, respondents)
    }

    pub fn save(&self, survey: &Path, diary: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(survey)?;
        let mut header = vec!["respondent_id".to_string()];
        header.extend(self.dimensions.iter().cloned());
        w.write_record(&header)?;
        for r in &self.respondents {
            let mut row = vec![r.id.clone()];
            row.extend(r.attributes.iter().cloned());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(survey, e))?;

        let mut w = csv::Writer::from_path(diary)?;
        w.write_record(["respondent_id", "day_kind", "hour", "mode"])?;
        for r in &self.respondents {
            for (day, hours) in &r.diary {
                for (h, mode) in hours.iter().enumerate() {
                    let m = mode.map_or("none", |m| m.as_str());
                    w.write_record([r.id.as_str(), day.as_str(), &h.to_string(), m])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(diary, e))
    }
}

impl MarginalConstraints {
    pub fn set(&mut self, region: &str, dimension: &str, category: &str, target: f64) -> Result<()> {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::invalid(format!(
                "target for {region}/{dimension}/{category} must be a non-negative count"
            )));
        }
        self.regions
            .entry(region.to_string())
            .or_default()
            .entry(dimension.to_string())
            .or_default()
            .insert(category.to_string(), target);
        Ok(())
    }

    /// Reads `region_id,dimension,category,target_count`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut out = MarginalConstraints::default();
        let mut rdr = open_csv(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            check_columns(path, &rec, 4)?;
            let target: f64 = parse_at(path, &rec, 3)?;
            out.set(field(path, &rec, 0)?, field(path, &rec, 1)?, field(path, &rec, 2)?, target)
                .map_err(|e| record_error(path, &rec, e))?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["region_id", "dimension", "category", "target_count"])?;
        for (region, dims) in &self.regions {
            for (dim, cats) in dims {
                for (cat, t) in cats {
                    w.write_record([region.as_str(), dim, cat, &t.to_string()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

struct DimTargets {
    targets: Vec<f64>,
    /// Category index of each respondent, `None` when the category has no target.
    member: Vec<Option<usize>>,
}

fn weighted_totals(d: &DimTargets, weights: &[f64]) -> Vec<f64> {
    let mut totals = vec![0.0; d.targets.len()];
    for (w, m) in weights.iter().zip(&d.member) {
        if let Some(c) = m {
            totals[*c] += w;
        }
    }
    totals
}

fn max_relative_error(dims: &[DimTargets], weights: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for d in dims {
        let totals = weighted_totals(d, weights);
        for (f, t) in totals.iter().zip(&d.targets) {
            worst = worst.max((f - t).abs() / if *t > 0.0 { *t } else { 1.0 });
        }
        // Respondents outside every targeted category must carry no weight.
        let stray: f64 = weights.iter().zip(&d.member).filter(|(_, m)| m.is_none()).map(|(w, _)| *w).sum();
        worst = worst.max(stray);
    }
    worst
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Classic IPF for one region: each sweep rescales the weights so every
/// constrained dimension in turn matches its targets exactly.
pub fn ipf_fit(seed: &SurveySeed, constraints: &MarginalConstraints, region: &str, opts: &IpfOptions) -> Result<IpfFit> {
    let dims_in = constraints
        .regions
        .get(region)
        .ok_or_else(|| Error::invalid(format!("no marginals for region {region:?}")))?;
    if seed.respondents.is_empty() {
        return Err(Error::Unfittable("survey seed has no respondents".into()));
    }

    let mut dims = Vec::new();
    let mut total: Option<f64> = None;
    for (name, cats) in dims_in {
        let column = seed.dimension(name)?;
        let categories: Vec<String> = cats.keys().cloned().collect();
        let targets: Vec<f64> = cats.values().copied().collect();
        let member: Vec<Option<usize>> = seed
            .respondents
            .iter()
            .map(|r| categories.iter().position(|c| *c == r.attributes[column]))
            .collect();
        for (c, (cat, t)) in categories.iter().zip(&targets).enumerate() {
            if *t > 0.0 && !member.contains(&Some(c)) {
                return Err(Error::Unfittable(format!(
                    "region {region}: category {name}={cat} has no respondents in the seed"
                )));
            }
        }
        let sum: f64 = targets.iter().sum();
        match total {
            Some(t0) if (sum - t0).abs() > 1e-9 * t0.abs().max(1.0) => {
                return Err(Error::invalid(format!(
                    "region {region}: dimension {name} totals {sum}, other dimensions {t0}"
                )))
            }
            _ => total = Some(sum),
        }
        dims.push(DimTargets {
            targets,
            member,
        });
    }

    let mut weights = vec![1.0; seed.respondents.len()];
    let mut history = vec![max_relative_error(&dims, &weights)];
    let mut sweeps = 0;
    while history[sweeps] >= opts.tol && sweeps < opts.max_iters {
        for d in &dims {
            let totals = weighted_totals(d, &weights);
            for (w, m) in weights.iter_mut().zip(&d.member) {
                *w = match m {
                    Some(c) if totals[*c] > 0.0 => *w * d.targets[*c] / totals[*c],
                    _ => 0.0,
                };
            }
        }
        sweeps += 1;
        history.push(max_relative_error(&dims, &weights));
    }

    let mut fitted = Vec::new();
    let mut wanted = Vec::new();
    for d in &dims {
        fitted.extend(weighted_totals(d, &weights));
        wanted.extend(d.targets.iter().copied());
    }
    Ok(IpfFit {
        region: region.to_string(),
        converged: history[sweeps] < opts.tol,
        weights,
        sweeps,
        error_history: history,
        pearson: pearson(&fitted, &wanted),
    })
}

/// Fits every region independently on the current rayon pool.
pub fn ipf_fit_all(seed: &SurveySeed, constraints: &MarginalConstraints, opts: &IpfOptions) -> Result<BTreeMap<String, IpfFit>> {
    let regions: Vec<&String> = constraints.regions.keys().collect();
    let fits: Vec<Result<IpfFit>> = regions.par_iter().map(|r| ipf_fit(seed, constraints, r, opts)).collect();
    let mut out = BTreeMap::new();
    for fit in fits {
        let fit = fit?;
        out.insert(fit.region.clone(), fit);
    }
    Ok(out)
}

/// Normalized hourly profiles per mode; modes nobody uses are listed
/// separately instead of getting a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProfiles {
    pub profiles: BTreeMap<TravelMode, Profile24>,
    pub zero_modes: Vec<TravelMode>,
}

/// Weighted share of each hour in the travel of each mode.
pub fn travel_profile_from_weights(seed: &SurveySeed, weights: &[f64], day: DayKind) -> Result<ModeProfiles> {
    if weights.len() != seed.respondents.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} respondents",
            weights.len(),
            seed.respondents.len()
        )));
    }
    let mut counts = [[0.0f64; 24]; 5];
    for (r, w) in seed.respondents.iter().zip(weights) {
        if let Some(diary) = r.diary.get(&day) {
            for (h, mode) in diary.iter().enumerate() {
                if let Some(m) = mode {
                    counts[m.index()][h] += w;
                }
            }
        }
    }
    let mut out = ModeProfiles {
        profiles: BTreeMap::new(),
        zero_modes: Vec::new(),
    };
    for &mode in TravelMode::ALL {
        let c = counts[mode.index()];
        let sum: f64 = c.iter().sum();
        if sum > 0.0 {
            out.profiles.insert(mode, c.map(|v| v / sum));
        } else {
            out.zero_modes.push(mode);
        }
    }
    Ok(out)
}

/// Profiles for every fitted region and day kind. Modes without any
/// weighted travel fall back to a flat profile and are reported as
/// `(region, day, mode)`.
pub fn build_travel_profiles(
    seed: &SurveySeed,
    fits: &BTreeMap<String, IpfFit>,
) -> Result<(TravelProfiles, Vec<(String, DayKind, TravelMode)>)> {
    let mut out = TravelProfiles::new();
    let mut flat = Vec::new();
    for (region, fit) in fits {
        for &day in DayKind::ALL {
            let p = travel_profile_from_weights(seed, &fit.weights, day)?;
            for (mode, profile) in &p.profiles {
                out.insert(region, day, *mode, *profile)?;
            }
            for mode in p.zero_modes {
                out.insert(region, day, mode, [1.0 / 24.0; 24])?;
                flat.push((region.clone(), day, mode));
            }
        }
    }
    Ok((out, flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn respondent(id: &str, attrs: &[&str]) -> Respondent {
        Respondent {
            id: id.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            diary: BTreeMap::new(),
        }
    }

    fn two_by_two() -> (SurveySeed, MarginalConstraints) {
        let seed = SurveySeed::new(
            vec!["age".into(), "sex".into()],
            vec![
                respondent("a", &["young", "f"]),
                respondent("b", &["young", "m"]),
                respondent("c", &["old", "f"]),
                respondent("d", &["old", "m"]),
            ],
        )
        .unwrap();
        let mut m = MarginalConstraints::default();
        m.set("r", "age", "young", 3.0).unwrap();
        m.set("r", "age", "old", 1.0).unwrap();
        m.set("r", "sex", "f", 2.0).unwrap();
        m.set("r", "sex", "m", 2.0).unwrap();
        (seed, m)
    }

    /// Plain nested-loop IPF on a 2x2 table, run to 1e-10.
    fn brute_force_2x2(seed: [[f64; 2]; 2], rows: [f64; 2], cols: [f64; 2]) -> [[f64; 2]; 2] {
        let mut t = seed;
        for _ in 0..10_000 {
            for i in 0..2 {
                let s = t[i][0] + t[i][1];
                for j in 0..2 {
                    t[i][j] *= rows[i] / s;
                }
            }
            for j in 0..2 {
                let s = t[0][j] + t[1][j];
                for i in 0..2 {
                    t[i][j] *= cols[j] / s;
                }
            }
            let err = (0..2).map(|i| (t[i][0] + t[i][1] - rows[i]).abs()).fold(0.0, f64::max);
            if err < 1e-10 {
                break;
            }
        }
        t
    }

    #[test]
    fn two_by_two_matches_oracle() {
        let (seed, m) = two_by_two();
        let fit = ipf_fit(&seed, &m, "r", &IpfOptions { tol: 1e-10, ..Default::default() }).unwrap();
        let oracle = brute_force_2x2([[1.0, 1.0], [1.0, 1.0]], [3.0, 1.0], [2.0, 2.0]);
        let expect = [oracle[0][0], oracle[0][1], oracle[1][0], oracle[1][1]];
        for (w, e) in fit.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-9, "{w} vs {e}");
        }
        for (w, e) in fit.weights.iter().zip([1.5, 1.5, 0.5, 0.5]) {
            assert!((w - e).abs() < 1e-9);
        }
        assert!(fit.converged);
        assert!((fit.pearson.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_dimension_closed_form() {
        let seed = SurveySeed::new(
            vec!["band".into()],
            vec![respondent("1", &["x"]), respondent("2", &["x"]), respondent("3", &["y"])],
        )
        .unwrap();
        let mut m = MarginalConstraints::default();
        m.set("r", "band", "x", 10.0).unwrap();
        m.set("r", "band", "y", 4.0).unwrap();
        let fit = ipf_fit(&seed, &m, "r", &IpfOptions::default()).unwrap();
        assert_eq!(fit.sweeps, 1);
        assert_eq!(fit.weights, vec![5.0, 5.0, 4.0]);
    }

    #[test]
    fn matching_seed_is_a_fixed_point() {
        let (seed, _) = two_by_two();
        let mut m = MarginalConstraints::default();
        for (d, c) in [("age", "young"), ("age", "old"), ("sex", "f"), ("sex", "m")] {
            m.set("r", d, c, 2.0).unwrap();
        }
        let fit = ipf_fit(&seed, &m, "r", &IpfOptions::default()).unwrap();
        assert_eq!(fit.weights, vec![1.0; 4]);
    }

    #[test]
    fn unsupported_category_is_unfittable() {
        let (seed, mut m) = two_by_two();
        m.set("r", "age", "ancient", 0.0).unwrap();
        assert!(ipf_fit(&seed, &m, "r", &IpfOptions::default()).is_ok());
        m.set("r", "age", "ancient", 1.0).unwrap();
        m.set("r", "sex", "m", 3.0).unwrap();
        assert!(matches!(ipf_fit(&seed, &m, "r", &IpfOptions::default()), Err(Error::Unfittable(_))));
    }

    #[test]
    fn inconsistent_marginals_rejected() {
        let (seed, mut m) = two_by_two();
        m.set("r", "sex", "m", 5.0).unwrap();
        assert!(matches!(ipf_fit(&seed, &m, "r", &IpfOptions::default()), Err(Error::Invalid(_))));
    }

    #[test]
    fn error_decreases_between_sweeps() {
        let cats = [["a", "p", "u"], ["b", "q", "u"], ["a", "q", "v"], ["c", "p", "v"], ["b", "p", "u"], ["c", "q", "u"], ["a", "p", "v"]];
        let resp: Vec<Respondent> = cats.iter().enumerate().map(|(i, c)| respondent(&i.to_string(), c)).collect();
        let seed = SurveySeed::new(vec!["x".into(), "y".into(), "z".into()], resp).unwrap();
        let mut m = MarginalConstraints::default();
        for (d, c, t) in [("x", "a", 50.0), ("x", "b", 30.0), ("x", "c", 20.0), ("y", "p", 65.0), ("y", "q", 35.0), ("z", "u", 45.0), ("z", "v", 55.0)] {
            m.set("r", d, c, t).unwrap();
        }
        let fit = ipf_fit(&seed, &m, "r", &IpfOptions::default()).unwrap();
        assert!(fit.converged);
        for w in fit.error_history[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.error_history);
        }
        let d = &seed.dimensions;
        for (dim, cats) in &m.regions["r"] {
            let col = d.iter().position(|x| x == dim).unwrap();
            for (cat, t) in cats {
                let got: f64 = seed.respondents.iter().zip(&fit.weights).filter(|(r, _)| &r.attributes[col] == cat).map(|(_, w)| w).sum();
                assert!((got - t).abs() / t < 1e-6);
            }
        }
    }

    fn diary_with(mode: TravelMode, hours: &[usize]) -> DayDiary {
        let mut d = [None; 24];
        for &h in hours {
            d[h] = Some(mode);
        }
        d
    }

    #[test]
    fn delta_profile() {
        let mut r = respondent("1", &["x"]);
        r.diary.insert(DayKind::Weekday, diary_with(TravelMode::CarTaxi, &[8]));
        let seed = SurveySeed::new(vec!["band".into()], vec![r]).unwrap();
        let p = travel_profile_from_weights(&seed, &[3.0], DayKind::Weekday).unwrap();
        let car = p.profiles[&TravelMode::CarTaxi];
        assert_eq!(car[8], 1.0);
        assert_eq!(car.iter().sum::<f64>(), 1.0);
        assert_eq!(p.zero_modes.len(), 4);
    }

    #[test]
    fn uniform_diary_gives_flat_profile() {
        let mut r = respondent("1", &["x"]);
        r.diary.insert(DayKind::Sunday, [Some(TravelMode::Bicycle); 24]);
        let seed = SurveySeed::new(vec!["band".into()], vec![r]).unwrap();
        let p = travel_profile_from_weights(&seed, &[1.0], DayKind::Sunday).unwrap();
        for v in p.profiles[&TravelMode::Bicycle] {
            assert!((v - 1.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_histogram_and_scale_invariance() {
        let mut a = respondent("a", &["x"]);
        a.diary.insert(DayKind::Weekday, diary_with(TravelMode::BusCoach, &[7, 8]));
        let mut b = respondent("b", &["x"]);
        b.diary.insert(DayKind::Weekday, diary_with(TravelMode::BusCoach, &[8, 17]));
        let mut c = respondent("c", &["x"]);
        c.diary.insert(DayKind::Weekday, diary_with(TravelMode::BusCoach, &[17]));
        let seed = SurveySeed::new(vec!["band".into()], vec![a, b, c]).unwrap();
        let w = [2.0, 1.0, 0.5];
        // Hand-computed: hour 7: 2, hour 8: 2 + 1, hour 17: 1 + 0.5; total 6.5.
        let p = travel_profile_from_weights(&seed, &w, DayKind::Weekday).unwrap();
        let bus = p.profiles[&TravelMode::BusCoach];
        assert!((bus[7] - 2.0 / 6.5).abs() < 1e-15);
        assert!((bus[8] - 3.0 / 6.5).abs() < 1e-15);
        assert!((bus[17] - 1.5 / 6.5).abs() < 1e-15);
        let scaled = travel_profile_from_weights(&seed, &w.map(|v| v * 7.0), DayKind::Weekday).unwrap();
        for (x, y) in bus.iter().zip(&scaled.profiles[&TravelMode::BusCoach]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(travel_profile_from_weights(&seed, &[1.0], DayKind::Weekday).is_err());
    }

    #[test]
    fn files_round_trip() {
        let (mut seed, m) = two_by_two();
        seed.respondents[0].diary.insert(DayKind::Saturday, diary_with(TravelMode::Hgv, &[3, 4]));
        let dir = tempfile::tempdir().unwrap();
        let (s, d, mp) = (dir.path().join("s.csv"), dir.path().join("d.csv"), dir.path().join("m.csv"));
        seed.save(&s, &d).unwrap();
        m.save(&mp).unwrap();
        assert_eq!(SurveySeed::load(&s, &d).unwrap(), seed);
        assert_eq!(MarginalConstraints::load(&mp).unwrap(), m);

        let fits = ipf_fit_all(&seed, &m, &IpfOptions::default()).unwrap();
        let (profiles, flat) = build_travel_profiles(&seed, &fits).unwrap();
        assert_eq!(profiles.len(), 15);
        assert_eq!(flat.len(), 14);
        assert_eq!(profiles.get("r", DayKind::Saturday, TravelMode::Hgv).unwrap()[3], 0.5);
    }

    #[test]
    fn partial_diary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = dir.path().join("s.csv");
        let d = dir.path().join("d.csv");
        std::fs::write(&s, "respondent_id,band\n1,x\n").unwrap();
        std::fs::write(&d, "respondent_id,day_kind,hour,mode\n1,weekday,0,bicycle\n").unwrap();
        assert!(SurveySeed::load(&s, &d).is_err());
    }
}
