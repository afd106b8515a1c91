use std::sync::Arc;

use super::histogram::{best_split, BinStat, Histogram, SplitCandidate};
use super::{BinMapper, BinnedData, TrainConfig};

/// Histogram memory kept alive across the frontier before falling back to
/// rebuilding children from scratch.
const HISTOGRAM_BUDGET_BYTES: usize = 512 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows in bins `<= bin` go left.
        bin: usize,
        /// Raw-value form of `bin`: `x <= threshold` goes left.
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
        count: u32,
    },
    Leaf {
        value: f64,
        count: u32,
    },
}

/// A regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, count: u32) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value, count }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    let go_left = if x.is_nan() { *default_left } else { x <= *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_binned(&self, bins: &[u8], mapper: &BinMapper) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    bin,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let b = bins[*feature] as usize;
                    let go_left = if b == mapper.missing_bin(*feature) {
                        *default_left
                    } else {
                        b <= *bin
                    };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// `(value, count)` of every leaf in node order.
    pub fn leaves(&self) -> impl Iterator<Item = (f64, u32)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, count } => Some((*value, *count)),
            Node::Split { .. } => None,
        })
    }
}

struct Frontier {
    node: usize,
    positions: Vec<u32>,
    hist: Option<Histogram>,
    sum: BinStat,
    split: Option<SplitCandidate>,
}

/// Leaf-wise growth on the sampled rows.
///
/// `rows[p]` is the data row at sample position `p`, with gradient
/// `grad[p]`, hessian `hess[p]` and sample weight `weights[p]`.
pub fn grow_tree(
    data: &BinnedData,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    weights: &[f64],
    config: &TrainConfig,
) -> Tree {
    let wg: Vec<f64> = grad.iter().zip(weights).map(|(g, w)| g * w).collect();
    let wh: Vec<f64> = hess.iter().zip(weights).map(|(h, w)| h * w).collect();
    let params = config.split_params();
    let layout: Arc<[usize]> = Histogram::layout(data);
    let hist_bytes = layout.last().copied().unwrap_or(0) * std::mem::size_of::<BinStat>();
    let max_kept = (HISTOGRAM_BUDGET_BYTES / hist_bytes.max(1)).max(2);
    let splittable = |count: u32| count as usize >= 2 * config.min_data_in_leaf;

    let all: Vec<u32> = (0..rows.len() as u32).collect();
    let mut sum = BinStat::default();
    for p in 0..rows.len() {
        sum.g += wg[p];
        sum.h += wh[p];
    }
    sum.count = rows.len() as u32;

    let mut nodes = vec![Node::Leaf { value: 0.0, count: sum.count }];
    let mut frontier: Vec<Frontier> = Vec::new();
    {
        let hist = splittable(sum.count).then(|| Histogram::build(&layout, data, rows, &all, &wg, &wh));
        let split = hist.as_ref().and_then(|h| best_split(h, sum, &params));
        frontier.push(Frontier {
            node: 0,
            positions: all,
            hist,
            sum,
            split,
        });
    }

    while frontier.len() < config.num_leaves {
        let pick = frontier
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.split.map(|s| (i, s.gain, f.node)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite gains").then(b.2.cmp(&a.2)));
        let Some((idx, _, _)) = pick else { break };
        let leaf = frontier.swap_remove(idx);
        let s = leaf.split.expect("picked leaf has a split");

        let missing = data.mapper.missing_bin(s.feature);
        let (left_pos, right_pos): (Vec<u32>, Vec<u32>) = leaf.positions.iter().partition(|&&p| {
            let b = data.row(rows[p as usize])[s.feature] as usize;
            if b == missing {
                s.default_left
            } else {
                b <= s.bin
            }
        });
        debug_assert_eq!(left_pos.len() as u32, s.left.count);

        let left_node = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, count: s.left.count });
        nodes.push(Node::Leaf { value: 0.0, count: s.right.count });
        nodes[leaf.node] = Node::Split {
            feature: s.feature,
            bin: s.bin,
            threshold: data.mapper.threshold_value(s.feature, s.bin),
            default_left: s.default_left,
            left: left_node,
            right: left_node + 1,
            count: leaf.sum.count,
        };

        let need_left = splittable(s.left.count);
        let need_right = splittable(s.right.count);
        let build = |pos: &[u32]| Histogram::build(&layout, data, rows, pos, &wg, &wh);
        let (hl, hr) = match (&leaf.hist, need_left, need_right) {
            (_, false, false) => (None, None),
            (Some(parent), true, true) => {
                if left_pos.len() <= right_pos.len() {
                    let l = build(&left_pos);
                    let r = Histogram::subtract(parent, &l);
                    (Some(l), Some(r))
                } else {
                    let r = build(&right_pos);
                    let l = Histogram::subtract(parent, &r);
                    (Some(l), Some(r))
                }
            }
            _ => (need_left.then(|| build(&left_pos)), need_right.then(|| build(&right_pos))),
        };
        drop(leaf.hist);

        let keep = frontier.len() + 2 <= max_kept;
        for (node, positions, hist, sum) in [(left_node, left_pos, hl, s.left), (left_node + 1, right_pos, hr, s.right)] {
            let split = hist.as_ref().and_then(|h| best_split(h, sum, &params));
            frontier.push(Frontier {
                node,
                positions,
                hist: if keep && split.is_some() { hist } else { None },
                sum,
                split,
            });
        }
    }

    for f in frontier {
        let value = -f.sum.g / (f.sum.h + config.l2_lambda);
        nodes[f.node] = Node::Leaf {
            value: if value.is_finite() { value } else { 0.0 },
            count: f.sum.count,
        };
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::RowMatrix;

    fn fit_one(values: &[f64], n_cols: usize, targets: &[f64], config: &TrainConfig) -> (BinnedData, Tree) {
        let data = BinnedData::new(RowMatrix::new(values, n_cols).unwrap(), 255).unwrap();
        let n = data.n_rows();
        let rows: Vec<usize> = (0..n).collect();
        // Prediction 0, so the gradient is -y.
        let grad: Vec<f64> = targets.iter().map(|y| -y).collect();
        let tree = grow_tree(&data, &rows, &grad, &vec![1.0; n], &vec![1.0; n], config);
        (data, tree)
    }

    fn cfg(num_leaves: usize, lambda: f64, min_data: usize) -> TrainConfig {
        TrainConfig {
            num_leaves,
            l2_lambda: lambda,
            min_data_in_leaf: min_data,
            min_split_gain: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_leaf_is_mean_residual() {
        let y = [1.0, 4.0, 2.5, -0.5];
        let x = [0.0; 4];
        let (_, tree) = fit_one(&x, 1, &y, &cfg(8, 0.0, 1));
        assert_eq!(tree.nodes.len(), 1);
        let mean = y.iter().sum::<f64>() / 4.0;
        assert!((tree.predict(&[0.0]) - mean).abs() < 1e-12);
    }

    #[test]
    fn stump_uses_global_best_split() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 13.0 { 1.0 } else { 5.0 }).collect();
        let (_, tree) = fit_one(&x, 1, &y, &cfg(2, 0.0, 1));
        assert_eq!(tree.n_leaves(), 2);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert!(*threshold > 12.0 && *threshold < 13.0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn four_plateaus_are_reproduced() {
        // Piecewise-constant oracle: with lambda 0 each leaf holds one
        // plateau, so its value is the plateau mean.
        let levels = [2.0, -1.0, 7.5, 3.25];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let v = i as f64 / 200.0;
            x.push(v);
            x.push(((i * 7919) % 200) as f64);
            y.push(levels[(v * 4.0) as usize]);
        }
        let (_, tree) = fit_one(&x, 2, &y, &cfg(4, 0.0, 5));
        assert_eq!(tree.n_leaves(), 4);
        for i in 0..200 {
            let row = &x[2 * i..2 * i + 2];
            assert!((tree.predict(row) - y[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn leaves_respect_min_data() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 31) % 97) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.1).sin()).collect();
        for min_data in [1, 7, 40] {
            let (_, tree) = fit_one(&x, 1, &y, &cfg(64, 0.0, min_data));
            assert!(tree.leaves().all(|(_, c)| c as usize >= min_data));
        }
    }

    #[test]
    fn binned_and_raw_prediction_agree() {
        let mut x: Vec<f64> = (0..300).map(|i| ((i * 13) % 50) as f64 * 0.3).collect();
        for i in (0..300).step_by(17) {
            x[i] = f64::NAN;
        }
        let y: Vec<f64> = (0..150).map(|i| (i as f64).cos()).collect();
        let (data, tree) = fit_one(&x, 2, &y, &cfg(16, 1.0, 3));
        for i in 0..150 {
            assert_eq!(tree.predict(&x[2 * i..2 * i + 2]), tree.predict_binned(data.row(i), &data.mapper));
        }
    }
}
