//! Rank correlation between features and targets, and hierarchical
//! clustering of the feature columns.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gbdt::RowMatrix;
use crate::grid::EnvironmentClass;

/// 1-based ranks, ties sharing the mean of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("ranks of NaN"));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ over the pairs where both values are present.
///
/// Returns `Ok(None)` when either ranked series is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("series lengths differ: {} and {}", x.len(), y.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Undefined(format!("{} complete pairs, need at least 2", xs.len())));
    }
    Ok(pearson(&mid_ranks(&xs), &mid_ranks(&ys)))
}

/// Feature rows and target series observed at one station.
#[derive(Debug, Clone, Copy)]
pub struct StationSeries<'a> {
    pub station_id: &'a str,
    pub class: EnvironmentClass,
    pub features: RowMatrix<'a>,
    pub targets: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationCorrelation {
    pub station_id: String,
    pub class: EnvironmentClass,
    pub rho: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub features: Vec<String>,
    /// Sorted by station id.
    pub stations: Vec<StationCorrelation>,
    pub overall_mean: Vec<Option<f64>>,
    pub class_means: BTreeMap<EnvironmentClass, Vec<Option<f64>>>,
    /// Stations whose ρ was undefined, per feature.
    pub excluded: Vec<usize>,
}

fn mean_defined<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-station Spearman ρ of every feature with the target, plus overall
/// and per-class means over stations where ρ is defined.
pub fn correlation_report(features: &[String], stations: &[StationSeries<'_>]) -> Result<CorrelationReport> {
    let p = features.len();
    let mut sorted: Vec<&StationSeries> = stations.iter().collect();
    sorted.sort_by(|a, b| a.station_id.cmp(b.station_id));
    let mut rows = Vec::with_capacity(sorted.len());
    for s in sorted {
        if s.features.n_cols() != p || s.features.n_rows() != s.targets.len() {
            return Err(Error::invalid(format!("station {} has mismatched feature rows", s.station_id)));
        }
        let rho: Vec<Option<f64>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let col: Vec<f64> = (0..s.features.n_rows()).map(|i| s.features.row(i)[j]).collect();
                spearman(&col, s.targets).ok().flatten()
            })
            .collect();
        rows.push(StationCorrelation {
            station_id: s.station_id.to_string(),
            class: s.class,
            rho,
        });
    }
    if !rows.iter().any(|r| r.rho.iter().any(Option::is_some)) {
        return Err(Error::Undefined("no station has a defined correlation".into()));
    }

    let overall_mean = (0..p).map(|j| mean_defined(rows.iter().map(|r| &r.rho[j]))).collect();
    let excluded = (0..p).map(|j| rows.iter().filter(|r| r.rho[j].is_none()).count()).collect();
    let mut class_means = BTreeMap::new();
    for class in EnvironmentClass::ALL {
        let members: Vec<&StationCorrelation> = rows.iter().filter(|r| r.class == class).collect();
        if !members.is_empty() {
            class_means.insert(class, (0..p).map(|j| mean_defined(members.iter().map(|r| &r.rho[j]))).collect());
        }
    }
    Ok(CorrelationReport {
        features: features.to_vec(),
        stations: rows,
        overall_mean,
        class_means,
        excluded,
    })
}

impl CorrelationReport {
    /// The `k` largest and `k` smallest defined overall means, as
    /// `(feature, ρ)` ordered from the extreme inwards.
    pub fn top_k(&self, k: usize) -> (Vec<(String, f64)>, Vec<(String, f64)>) {
        let mut defined: Vec<(usize, f64)> = self.overall_mean.iter().enumerate().filter_map(|(j, v)| v.map(|v| (j, v))).collect();
        defined.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        let name = |(j, v): &(usize, f64)| (self.features[*j].clone(), *v);
        let positive = defined.iter().take(k).map(name).collect();
        defined.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then(a.0.cmp(&b.0)));
        let negative = defined.iter().take(k).map(name).collect();
        (positive, negative)
    }

    /// `feature,overall_mean_rho,<class>...,n_excluded`; undefined means are empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["feature".to_string(), "overall_mean_rho".to_string()];
        header.extend(self.class_means.keys().map(|c| format!("mean_rho_{c}")));
        header.push("n_excluded".into());
        w.write_record(&header)?;
        for (j, f) in self.features.iter().enumerate() {
            let mut row = vec![f.clone(), fmt(&self.overall_mean[j])];
            row.extend(self.class_means.values().map(|m| fmt(&m[j])));
            row.push(self.excluded[j].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Symmetric `1 - ρ` matrix between feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissimilarity {
    n: usize,
    values: Vec<f64>,
    /// Pairs `(i, j)`, `i < j`, whose ρ was undefined and were set to 2.
    pub undefined: Vec<(usize, usize)>,
}

impl Dissimilarity {
    pub fn from_matrix(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid("dissimilarity matrix must be square"));
        }
        for i in 0..n {
            for j in 0..n {
                if values[i * n + j] != values[j * n + i] {
                    return Err(Error::invalid("dissimilarity matrix must be symmetric"));
                }
            }
        }
        Ok(Dissimilarity {
            n,
            values,
            undefined: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Pairwise `d = 1 - ρ` over the columns of `x`.
pub fn feature_dissimilarity(x: RowMatrix<'_>) -> Result<Dissimilarity> {
    let p = x.n_cols();
    if p < 2 {
        return Err(Error::invalid("need at least two feature columns"));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| (0..x.n_rows()).map(|i| x.row(i)[j]).collect()).collect();
    let ranks: Vec<Option<Vec<f64>>> = cols
        .par_iter()
        .map(|c| (!c.iter().any(|v| v.is_nan())).then(|| mid_ranks(c)))
        .collect();
    let upper: Vec<Vec<(usize, Option<f64>)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..p)
                .map(|j| {
                    let rho = match (&ranks[i], &ranks[j]) {
                        (Some(a), Some(b)) if a.len() >= 2 => pearson(a, b),
                        _ => spearman(&cols[i], &cols[j]).ok().flatten(),
                    };
                    (j, rho)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; p * p];
    let mut undefined = Vec::new();
    for (i, row) in upper.into_iter().enumerate() {
        for (j, rho) in row {
            let d = match rho {
                Some(r) => 1.0 - r,
                None => {
                    undefined.push((i, j));
                    2.0
                }
            };
            values[i * p + j] = d;
            values[j * p + i] = d;
        }
    }
    Ok(Dissimilarity {
        n: p,
        values,
        undefined,
    })
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step
/// `s` gets id `n + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub step: usize,
    pub node_a: usize,
    pub node_b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// Average-linkage agglomeration. Ties merge the pair with the lowest
/// cluster ids.
pub fn average_linkage(d: &Dissimilarity) -> Dendrogram {
    let n = d.len();
    let mut active: Vec<(usize, usize)> = (0..n).map(|i| (i, 1)).collect();
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).collect()).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                if dist[a][b] < best.0 {
                    best = (dist[a][b], a, b);
                }
            }
        }
        let (distance, a, b) = best;
        let (id_a, size_a) = active[a];
        let (id_b, size_b) = active[b];
        let size = size_a + size_b;
        let merged: Vec<f64> = (0..active.len())
            .map(|k| (size_a as f64 * dist[a][k] + size_b as f64 * dist[b][k]) / size as f64)
            .collect();
        for k in 0..active.len() {
            dist[a][k] = merged[k];
            dist[k][a] = merged[k];
        }
        dist[a][a] = 0.0;
        active[a] = (n + step, size);
        active.remove(b);
        dist.remove(b);
        for row in &mut dist {
            row.remove(b);
        }
        merges.push(Merge {
            step,
            node_a: id_a.min(id_b),
            node_b: id_a.max(id_b),
            distance,
            size,
        });
    }
    Dendrogram { n_leaves: n, merges }
}

impl Dendrogram {
    /// Cluster label per leaf after applying every merge with
    /// `distance <= threshold`. Labels are numbered by smallest member.
    pub fn cut(&self, threshold: f64) -> Vec<usize> {
        let n = self.n_leaves;
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges {
            if m.distance <= threshold {
                let new = n + m.step;
                let ra = root(&mut parent, m.node_a);
                let rb = root(&mut parent, m.node_b);
                parent[ra] = new;
                parent[rb] = new;
            }
        }
        let mut labels = vec![usize::MAX; n];
        let mut by_root: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, label) in labels.iter_mut().enumerate() {
            let r = root(&mut parent, i);
            let next = by_root.len();
            *label = *by_root.entry(r).or_insert(next);
        }
        labels
    }

    /// `step,node_a,node_b,distance`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "node_a", "node_b", "distance"])?;
        for m in &self.merges {
            w.write_record([m.step.to_string(), m.node_a.to_string(), m.node_b.to_string(), m.distance.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Cluster labels of every feature at `threshold`.
pub fn hierarchical_cluster(d: &Dissimilarity, threshold: f64) -> Vec<usize> {
    average_linkage(d).cut(threshold)
}

/// Clustering of the informative feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClustering {
    /// Column indices that entered the clustering.
    pub included: Vec<usize>,
    /// Columns left out because they carry no variation.
    pub excluded: Vec<usize>,
    pub dissimilarity: Dissimilarity,
    pub dendrogram: Dendrogram,
}

impl FeatureClustering {
    /// Clusters every column of `x` that is not constant (ignoring
    /// missing values).
    pub fn build(x: RowMatrix<'_>) -> Result<Self> {
        let (mut included, mut excluded) = (Vec::new(), Vec::new());
        for j in 0..x.n_cols() {
            let mut seen: Option<f64> = None;
            let mut varies = false;
            for i in 0..x.n_rows() {
                let v = x.row(i)[j];
                if v.is_nan() {
                    continue;
                }
                match seen {
                    None => seen = Some(v),
                    Some(s) if s != v => {
                        varies = true;
                        break;
                    }
                    _ => {}
                }
            }
            if varies {
                included.push(j);
            } else {
                excluded.push(j);
            }
        }
        let mut sub = Vec::with_capacity(x.n_rows() * included.len());
        for i in 0..x.n_rows() {
            let row = x.row(i);
            sub.extend(included.iter().map(|&j| row[j]));
        }
        let dissimilarity = feature_dissimilarity(RowMatrix::new(&sub, included.len().max(1))?)?;
        let dendrogram = average_linkage(&dissimilarity);
        Ok(FeatureClustering {
            included,
            excluded,
            dissimilarity,
            dendrogram,
        })
    }

    /// `(column index, cluster label)` for the included columns.
    pub fn clusters(&self, threshold: f64) -> Vec<(usize, usize)> {
        self.included.iter().copied().zip(self.dendrogram.cut(threshold)).collect()
    }

    pub fn n_clusters(&self, threshold: f64) -> usize {
        self.dendrogram.cut(threshold).into_iter().max().map_or(0, |m| m + 1)
    }
}
