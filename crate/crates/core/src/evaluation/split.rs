//! Train/test splits over the cells of an interaction matrix.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;

use crate::data::{InteractionMatrix, TestRecord};
use crate::error::Result;

/// Cells used for training (unlisted cells read 0) and cells held out for
/// scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: InteractionMatrix,
    pub test: Vec<TestRecord>,
}

fn take_fraction<R: Rng>(rng: &mut R, cells: &[usize], frac: f64) -> Vec<usize> {
    let n = ((frac * cells.len() as f64).round() as usize).min(cells.len());
    let mut picked: Vec<usize> = index::sample(rng, cells.len(), n).into_iter().map(|p| cells[p]).collect();
    picked.sort_unstable();
    picked
}

/// Chooses `frac` of `cells` (flat indices), separately among positives and
/// zeros so both keep their share.
pub fn stratified_sample<R: Rng>(rng: &mut R, y: &InteractionMatrix, cells: &[usize], frac: f64) -> Vec<usize> {
    let n_cols = y.n_cols();
    let (pos, neg): (Vec<usize>, Vec<usize>) = cells.iter().partition(|&&c| y.get(c / n_cols, c % n_cols) == 1);
    let mut out = take_fraction(rng, &pos, frac);
    out.extend(take_fraction(rng, &neg, frac));
    out.sort_unstable();
    out
}

/// Holds out `oob_frac` of all cells (stratified), then keeps the labels of
/// a `rho` share of the remaining cells for training and zeroes the rest.
///
/// When `data` already carries a test set, that set is the held-out part and
/// `oob_frac` is ignored.
pub fn protocol_split<R: Rng>(rng: &mut R, data: &InteractionMatrix, oob_frac: f64, rho: f64) -> Result<Split> {
    let (n_rows, n_cols) = data.shape();
    let total = n_rows * n_cols;
    let mut held = vec![false; total];
    let test: Vec<TestRecord> = if data.test_set().is_empty() {
        let all: Vec<usize> = (0..total).collect();
        stratified_sample(rng, data, &all, oob_frac)
            .into_iter()
            .map(|c| {
                held[c] = true;
                TestRecord {
                    row: c / n_cols,
                    col: c % n_cols,
                    label: data.get(c / n_cols, c % n_cols),
                }
            })
            .collect()
    } else {
        for r in data.test_set() {
            held[r.row * n_cols + r.col] = true;
        }
        data.test_set().to_vec()
    };
    let visible: Vec<usize> = (0..total).filter(|&c| !held[c]).collect();
    let exposed = if rho >= 1.0 {
        visible
    } else {
        take_fraction(rng, &visible, rho)
    };
    let mut labels = Array2::<u8>::zeros((n_rows, n_cols));
    for c in exposed {
        labels[[c / n_cols, c % n_cols]] = data.get(c / n_cols, c % n_cols);
    }
    let train = InteractionMatrix::from_dense(labels)?;
    Ok(Split { train, test })
}

/// Moves a stratified `frac` of the training positives and zeros into a
/// validation set.
pub fn validation_split<R: Rng>(rng: &mut R, train: &InteractionMatrix, exclude: &[TestRecord], frac: f64) -> Result<Split> {
    let (n_rows, n_cols) = train.shape();
    let mut excluded = vec![false; n_rows * n_cols];
    for r in exclude {
        excluded[r.row * n_cols + r.col] = true;
    }
    let candidates: Vec<usize> = (0..n_rows * n_cols).filter(|&c| !excluded[c]).collect();
    let picked = stratified_sample(rng, train, &candidates, frac);
    let mut labels = train.labels().clone();
    let test = picked
        .into_iter()
        .map(|c| {
            let (i, j) = (c / n_cols, c % n_cols);
            labels[[i, j]] = 0;
            TestRecord { row: i, col: j, label: train.get(i, j) }
        })
        .collect();
    Ok(Split {
        train: InteractionMatrix::from_dense(labels)?,
        test,
    })
}
