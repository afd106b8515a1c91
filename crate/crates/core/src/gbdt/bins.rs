use super::RowMatrix;
use crate::error::{Error, Result};

/// Rows sampled when choosing bin boundaries.
const BIN_CONSTRUCT_SAMPLE: usize = 200_000;

/// Per-feature bin boundaries.
///
/// A feature with cut points `c_0 < c_1 < ... < c_{k-1}` has `k + 1` value
/// bins: value `x` falls in the first bin `i` with `x <= c_i`, or in bin `k`
/// when it exceeds every cut. NaN goes to a separate missing bin with index
/// `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    cuts: Vec<Vec<f64>>,
    max_bin: usize,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn feature_cuts(mut values: Vec<f64>, max_bin: usize) -> Vec<f64> {
    values.retain(|v| !v.is_nan());
    if values.is_empty() {
        return Vec::new();
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("NaN removed"));
    let mut distinct: Vec<f64> = Vec::new();
    let mut cum: Vec<usize> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if distinct.last() == Some(&v) {
            *cum.last_mut().expect("non-empty") = i + 1;
        } else {
            distinct.push(v);
            cum.push(i + 1);
        }
    }
    if distinct.len() <= max_bin {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }

    let n = values.len() as f64;
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bin - 1);
    let mut i = 0;
    for k in 1..max_bin {
        let target = k as f64 * n / max_bin as f64;
        while i + 1 < distinct.len() && (cum[i] as f64) < target {
            i += 1;
        }
        if i + 1 >= distinct.len() {
            break;
        }
        let c = midpoint(distinct[i], distinct[i + 1]);
        if cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    cuts
}

impl BinMapper {
    /// Quantile boundaries per feature; features with at most `max_bin`
    /// distinct values get one bin per value.
    pub fn fit(x: RowMatrix<'_>, max_bin: usize) -> Result<Self> {
        if x.n_rows() == 0 {
            return Err(Error::invalid("cannot bin an empty matrix"));
        }
        if !(2..=255).contains(&max_bin) {
            return Err(Error::invalid("max_bin must be within 2..=255"));
        }
        let stride = x.n_rows().div_ceil(BIN_CONSTRUCT_SAMPLE);
        let cuts = (0..x.n_cols())
            .map(|j| {
                let col: Vec<f64> = (0..x.n_rows()).step_by(stride).map(|i| x.row(i)[j]).collect();
                feature_cuts(col, max_bin)
            })
            .collect();
        Ok(BinMapper { cuts, max_bin })
    }

    pub fn from_cuts(cuts: Vec<Vec<f64>>, max_bin: usize) -> Result<Self> {
        for c in &cuts {
            if c.len() >= max_bin || c.windows(2).any(|w| !(w[0] < w[1])) || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("bin cuts must be finite, strictly increasing and fewer than max_bin"));
            }
        }
        Ok(BinMapper { cuts, max_bin })
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn max_bin(&self) -> usize {
        self.max_bin
    }

    /// Number of value bins (excluding the missing bin).
    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }

    pub fn missing_bin(&self, feature: usize) -> usize {
        self.n_bins(feature)
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        &self.cuts[feature]
    }

    pub fn bin(&self, feature: usize, x: f64) -> usize {
        if x.is_nan() {
            return self.missing_bin(feature);
        }
        self.cuts[feature].partition_point(|&c| c < x)
    }

    /// Largest raw value mapped to `bin` or below.
    pub fn threshold_value(&self, feature: usize, bin: usize) -> f64 {
        self.cuts[feature].get(bin).copied().unwrap_or(f64::INFINITY)
    }
}

/// Row-major binned training matrix.
#[derive(Debug, Clone)]
pub struct BinnedData {
    pub mapper: BinMapper,
    bins: Vec<u8>,
    n_rows: usize,
    n_cols: usize,
}

impl BinnedData {
    pub fn new(x: RowMatrix<'_>, max_bin: usize) -> Result<Self> {
        if x.values().iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("feature matrix contains infinite values"));
        }
        let mapper = BinMapper::fit(x, max_bin)?;
        Ok(Self::with_mapper(x, mapper))
    }

    pub fn with_mapper(x: RowMatrix<'_>, mapper: BinMapper) -> Self {
        let n_cols = x.n_cols();
        let mut bins = Vec::with_capacity(x.n_rows() * n_cols);
        for i in 0..x.n_rows() {
            let row = x.row(i);
            bins.extend(row.iter().enumerate().map(|(j, &v)| mapper.bin(j, v) as u8));
        }
        BinnedData {
            mapper,
            bins,
            n_rows: x.n_rows(),
            n_cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.bins[i * self.n_cols..(i + 1) * self.n_cols]
    }
}
