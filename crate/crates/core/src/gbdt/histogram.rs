use std::sync::Arc;

use super::BinnedData;

/// Gradient, hessian and row count accumulated over one bin.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStat {
    pub g: f64,
    pub h: f64,
    pub count: u32,
}

impl BinStat {
    #[inline]
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.count += 1;
    }

    pub fn plus(self, o: BinStat) -> BinStat {
        BinStat {
            g: self.g + o.g,
            h: self.h + o.h,
            count: self.count + o.count,
        }
    }

    pub fn minus(self, o: BinStat) -> BinStat {
        BinStat {
            g: self.g - o.g,
            h: self.h - o.h,
            count: self.count - o.count,
        }
    }
}

/// Per-feature bin statistics. Each feature's slice ends with its missing bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    offsets: Arc<[usize]>,
    stats: Vec<BinStat>,
}

impl Histogram {
    /// Slice boundaries for every feature of `data`.
    pub fn layout(data: &BinnedData) -> Arc<[usize]> {
        let mut offsets = Vec::with_capacity(data.n_cols() + 1);
        let mut at = 0;
        offsets.push(0);
        for f in 0..data.n_cols() {
            at += data.mapper.n_bins(f) + 1;
            offsets.push(at);
        }
        offsets.into()
    }

    /// Accumulates `grad[p]`, `hess[p]` of data row `rows[p]` for every
    /// position `p` in `positions`.
    pub fn build(
        layout: &Arc<[usize]>,
        data: &BinnedData,
        rows: &[usize],
        positions: &[u32],
        grad: &[f64],
        hess: &[f64],
    ) -> Histogram {
        let mut stats = vec![BinStat::default(); *layout.last().expect("layout has a sentinel")];
        let offs = &layout[..layout.len() - 1];
        for &p in positions {
            let p = p as usize;
            let (g, h) = (grad[p], hess[p]);
            let bins = data.row(rows[p]);
            for (&off, &b) in offs.iter().zip(bins) {
                stats[off + b as usize].add(g, h);
            }
        }
        Histogram {
            offsets: layout.clone(),
            stats,
        }
    }

    /// Histogram of the sibling given the parent and one child.
    pub fn subtract(parent: &Histogram, child: &Histogram) -> Histogram {
        let stats = parent.stats.iter().zip(&child.stats).map(|(p, c)| p.minus(*c)).collect();
        Histogram {
            offsets: parent.offsets.clone(),
            stats,
        }
    }

    pub fn n_features(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Value bins followed by the missing bin.
    pub fn feature(&self, f: usize) -> &[BinStat] {
        &self.stats[self.offsets[f]..self.offsets[f + 1]]
    }

    pub fn stats(&self) -> &[BinStat] {
        &self.stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub l2_lambda: f64,
    pub min_data_in_leaf: usize,
    pub min_split_gain: f64,
}

/// Rows with bin `<= bin` go left; missing values follow `default_left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub bin: usize,
    pub gain: f64,
    pub default_left: bool,
    pub left: BinStat,
    pub right: BinStat,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

/// Best feasible split of a node whose rows sum to `total`.
pub fn best_split(hist: &Histogram, total: BinStat, params: &SplitParams) -> Option<SplitCandidate> {
    let lambda = params.l2_lambda;
    let min_count = params.min_data_in_leaf as u32;
    if total.count < 2 * min_count {
        return None;
    }
    let parent = score(total.g, total.h, lambda);
    let mut best: Option<SplitCandidate> = None;
    for f in 0..hist.n_features() {
        let stats = hist.feature(f);
        let n_bins = stats.len() - 1;
        let missing = stats[n_bins];
        let non_missing = stats[..n_bins].iter().fold(BinStat::default(), |a, s| a.plus(*s));
        let mut left_nm = BinStat::default();
        for (t, s) in stats[..n_bins - 1].iter().enumerate() {
            left_nm = left_nm.plus(*s);
            let right_nm = non_missing.minus(left_nm);
            let default_left = left_nm.h >= right_nm.h;
            let (left, right) = if default_left {
                (left_nm.plus(missing), right_nm)
            } else {
                (left_nm, right_nm.plus(missing))
            };
            if left.count < min_count || right.count < min_count {
                continue;
            }
            let gain = score(left.g, left.h, lambda) + score(right.g, right.h, lambda) - parent;
            if !(gain > params.min_split_gain) {
                continue;
            }
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature: f,
                    bin: t,
                    gain,
                    default_left,
                    left,
                    right,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::RowMatrix;

    fn setup(values: &[f64], n_cols: usize) -> (BinnedData, Arc<[usize]>) {
        let data = BinnedData::new(RowMatrix::new(values, n_cols).unwrap(), 255).unwrap();
        let layout = Histogram::layout(&data);
        (data, layout)
    }

    fn params(lambda: f64, min_data: usize) -> SplitParams {
        SplitParams {
            l2_lambda: lambda,
            min_data_in_leaf: min_data,
            min_split_gain: 0.0,
        }
    }

    fn node(data: &BinnedData, layout: &Arc<[usize]>, grad: &[f64]) -> (Histogram, BinStat) {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        let pos: Vec<u32> = (0..data.n_rows() as u32).collect();
        let hess = vec![1.0; grad.len()];
        let hist = Histogram::build(layout, data, &rows, &pos, grad, &hess);
        let total = BinStat {
            g: grad.iter().sum(),
            h: hess.iter().sum(),
            count: grad.len() as u32,
        };
        (hist, total)
    }

    #[test]
    fn two_sample_gain() {
        // Exhaustive oracle: targets 0 and 1, base prediction 0.5, so the
        // gradients are +0.5 and -0.5. The only split separates them:
        // 0.25/1 + 0.25/1 - 0/2 = 0.5.
        let (data, layout) = setup(&[1.0, 2.0], 1);
        let (hist, total) = node(&data, &layout, &[0.5, -0.5]);
        let s = best_split(&hist, total, &params(0.0, 1)).unwrap();
        assert_eq!((s.feature, s.bin), (0, 0));
        assert!((s.gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_targets_have_no_split() {
        let (data, layout) = setup(&[1.0, 2.0, 3.0, 4.0], 1);
        let (hist, total) = node(&data, &layout, &[0.0; 4]);
        assert!(best_split(&hist, total, &params(0.0, 1)).is_none());
    }

    #[test]
    fn huge_lambda_suppresses_splits() {
        let (data, layout) = setup(&[1.0, 2.0, 3.0, 4.0], 1);
        let (hist, total) = node(&data, &layout, &[1.0, 1.0, -1.0, -1.0]);
        let p = SplitParams {
            min_split_gain: 1e-6,
            ..params(1e12, 1)
        };
        assert!(best_split(&hist, total, &p).is_none());
    }

    #[test]
    fn constant_feature_never_splits() {
        let (data, layout) = setup(&[5.0, 5.0, 5.0, 5.0], 1);
        let (hist, total) = node(&data, &layout, &[1.0, -1.0, 2.0, -2.0]);
        assert!(best_split(&hist, total, &params(0.0, 1)).is_none());
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Two identical columns give identical gains.
        let (data, layout) = setup(&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0], 2);
        let (hist, total) = node(&data, &layout, &[1.0, 1.0, -1.0, -1.0]);
        let s = best_split(&hist, total, &params(0.0, 1)).unwrap();
        assert_eq!((s.feature, s.bin), (0, 1));
    }

    #[test]
    fn min_data_is_respected() {
        let (data, layout) = setup(&[1.0, 2.0, 3.0, 4.0, 5.0], 1);
        let (hist, total) = node(&data, &layout, &[5.0, -1.0, -1.0, -1.0, -1.0]);
        let s = best_split(&hist, total, &params(0.0, 2)).unwrap();
        assert!(s.left.count >= 2 && s.right.count >= 2);
        assert!(best_split(&hist, total, &params(0.0, 3)).is_none());
    }

    #[test]
    fn missing_values_follow_heavier_side() {
        let nan = f64::NAN;
        let (data, layout) = setup(&[1.0, 2.0, 3.0, 4.0, 5.0, nan], 1);
        let (hist, total) = node(&data, &layout, &[-1.0, -1.0, -1.0, 2.0, 2.0, -1.0]);
        let s = best_split(&hist, total, &params(0.0, 1)).unwrap();
        assert_eq!(s.bin, 2);
        assert!(s.default_left);
        assert_eq!(s.left.count, 4);
    }

    #[test]
    fn subtraction_conserves_parent() {
        let values: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let (data, layout) = setup(&values, 2);
        let n = data.n_rows();
        let rows: Vec<usize> = (0..n).collect();
        let grad: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let hess = vec![1.0; n];
        let all: Vec<u32> = (0..n as u32).collect();
        let (left, right): (Vec<u32>, Vec<u32>) = all.iter().partition(|&&p| p % 3 == 0);
        let parent = Histogram::build(&layout, &data, &rows, &all, &grad, &hess);
        let l = Histogram::build(&layout, &data, &rows, &left, &grad, &hess);
        let r = Histogram::build(&layout, &data, &rows, &right, &grad, &hess);
        let sibling = Histogram::subtract(&parent, &l);
        for ((p, a), (b, s)) in parent.stats().iter().zip(l.stats()).zip(r.stats().iter().zip(sibling.stats())) {
            assert_eq!(a.count + b.count, p.count);
            assert!((a.g + b.g - p.g).abs() < 1e-9);
            assert!((a.h + b.h - p.h).abs() < 1e-9);
            assert_eq!(s.count, b.count);
            assert!((s.g - b.g).abs() < 1e-9);
        }
    }
}
