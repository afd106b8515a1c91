use rand::seq::index::sample;
use rand::Rng;

/// Gradient-based one-side sample.
///
/// Keeps the `ceil(a * n)` rows with the largest `|g|` (ties to the lower
/// index) at weight 1 and draws `ceil(b * n)` of the remaining rows
/// uniformly without replacement at weight `(1 - a) / b`. Returned indices
/// are sorted ascending, with weights aligned to them.
pub fn goss_sample<R: Rng + ?Sized>(gradients: &[f64], a: f64, b: f64, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
    let n = gradients.len();
    if a >= 1.0 || n == 0 {
        return ((0..n).collect(), vec![1.0; n]);
    }
    let top_n = ((a * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        gradients[j]
            .abs()
            .partial_cmp(&gradients[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let rest = &order[top_n..];
    let other_n = ((b * n as f64 - 1e-9).ceil().max(0.0) as usize).min(rest.len());

    let mut picked: Vec<(usize, f64)> = order[..top_n].iter().map(|&i| (i, 1.0)).collect();
    if other_n > 0 {
        let w = (1.0 - a) / b;
        picked.extend(sample(rng, rest.len(), other_n).into_iter().map(|k| (rest[k], w)));
    }
    picked.sort_by_key(|p| p.0);
    picked.into_iter().unzip()
}
