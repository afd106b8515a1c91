use super::{score, LabeledRows, Scores};
use crate::error::{Error, Result};
use crate::gbdt::{fit, Ensemble, TrainConfig};

/// Share of the combined train+valid rows held back (chronologically last)
/// as the early-stopping set during the refit.
pub const REFIT_STOPPING_SHARE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FinalFit {
    pub model: Ensemble,
    pub fit_rows: usize,
    pub stopping_rows: usize,
    pub test: Scores,
}

/// Refits `config` on `train ∪ valid` and scores it on `test`.
pub fn final_fit(config: &TrainConfig, train: &LabeledRows, valid: &LabeledRows, test: &LabeledRows) -> Result<FinalFit> {
    if test.n_rows() == 0 {
        return Err(Error::invalid("test set is empty"));
    }
    let mut order: Vec<(usize, usize)> = (0..train.n_rows())
        .map(|i| (0, i))
        .chain((0..valid.n_rows()).map(|i| (1, i)))
        .collect();
    let n = order.len();
    if n < 2 {
        return Err(Error::invalid("need at least two rows to refit"));
    }
    let part = |&(p, _): &(usize, usize)| if p == 0 { train } else { valid };
    // stable: ties keep train before valid and original row order
    order.sort_by_key(|k| {
        let (p, i) = *k;
        (part(k).timestamp(i), p, i)
    });
    let n_stop = ((n as f64 * REFIT_STOPPING_SHARE).ceil() as usize).clamp(1, n - 1);
    let (head, tail) = order.split_at(n - n_stop);

    let cols = train.matrix.n_cols();
    let gather = |keys: &[(usize, usize)]| {
        let mut x = Vec::with_capacity(keys.len() * cols);
        let mut y = Vec::with_capacity(keys.len());
        for k in keys {
            let src = part(k);
            x.extend_from_slice(src.matrix.row(k.1));
            y.push(src.targets[k.1]);
        }
        (x, y)
    };
    let (fx, fy) = gather(head);
    let (sx, sy) = gather(tail);
    let model = fit(
        crate::gbdt::RowMatrix::new(&fx, cols)?,
        &fy,
        crate::gbdt::RowMatrix::new(&sx, cols)?,
        &sy,
        config,
    )?
    .with_columns(train.matrix.columns.clone())?;
    let test = score(&model, test)?;
    Ok(FinalFit {
        model,
        fit_rows: head.len(),
        stopping_rows: tail.len(),
        test,
    })
}
