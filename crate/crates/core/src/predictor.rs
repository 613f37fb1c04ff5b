//! Predictions, rankings of unobserved cells, and selected features.

use std::cmp::Ordering;
use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, LatentFactors, SideFeatures};
use crate::error::{Error, Result};
use crate::optimizer::compute_m;
use crate::scalar::{l2_norm, Scalar};

/// Logit `u_iᵀ A Bᵀ v_j` of a single cell.
pub fn predict_logit<F: Scalar>(
    i: usize,
    j: usize,
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    factors: &LatentFactors<F>,
) -> Result<F> {
    if i >= u.n_entities() || j >= v.n_entities() {
        return Err(Error::Dimension(format!(
            "cell ({i}, {j}) outside {}×{}",
            u.n_entities(),
            v.n_entities()
        )));
    }
    if u.n_features() != factors.a.nrows() || v.n_features() != factors.b.nrows() {
        return Err(Error::Dimension("factor shapes do not match the side features".into()));
    }
    let ua = u.matrix().row(i).dot(&factors.a);
    let vb = v.matrix().row(j).dot(&factors.b);
    Ok(ua.dot(&vb))
}

/// `σ(u_iᵀ A Bᵀ v_j)`.
pub fn predict_proba<F: Scalar>(
    i: usize,
    j: usize,
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    factors: &LatentFactors<F>,
) -> Result<F> {
    predict_logit(i, j, u, v, factors).map(Scalar::sigmoid)
}

/// Full logit matrix `M`.
pub fn logits<F: Scalar>(u: &SideFeatures<F>, v: &SideFeatures<F>, factors: &LatentFactors<F>) -> Result<Array2<F>> {
    compute_m(u, &factors.a, &factors.b, v)
}

/// Full probability matrix `σ(M)`.
pub fn probabilities<F: Scalar>(
    u: &SideFeatures<F>,
    v: &SideFeatures<F>,
    factors: &LatentFactors<F>,
) -> Result<Array2<F>> {
    Ok(logits(u, v, factors)?.mapv_into(Scalar::sigmoid))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCell {
    pub row: usize,
    pub col: usize,
    pub probability: f64,
}

/// Cells sorted by probability, descending; ties by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRanking {
    pub entries: Vec<RankedCell>,
    pub restricted_to_zeros: bool,
}

impl PredictionRanking {
    /// Writes `rank,row_id,col_id,probability` with 1-based ranks and ids.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "row_id", "col_id", "probability"])?;
        for (rank, e) in self.entries.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                (e.row + 1).to_string(),
                (e.col + 1).to_string(),
                e.probability.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ranking_order(a: &RankedCell, b: &RankedCell) -> Ordering {
    b.probability
        .total_cmp(&a.probability)
        .then(a.row.cmp(&b.row))
        .then(a.col.cmp(&b.col))
}

/// Ranks every cell, or only training zeros when `only_zeros` is set, and
/// keeps the first `top_k`.
pub fn rank_cells<F: Scalar>(
    probs: &Array2<F>,
    y: &InteractionMatrix,
    top_k: usize,
    only_zeros: bool,
) -> Result<PredictionRanking> {
    if probs.dim() != y.shape() {
        return Err(Error::Dimension(format!(
            "probability matrix {:?} vs labels {:?}",
            probs.dim(),
            y.shape()
        )));
    }
    let mut entries: Vec<RankedCell> = probs
        .indexed_iter()
        .filter(|((i, j), _)| !only_zeros || y.get(*i, *j) == 0)
        .map(|((row, col), p)| RankedCell {
            row,
            col,
            probability: p.to_f64_lossy(),
        })
        .collect();
    let k = top_k.min(entries.len());
    if k < entries.len() && k > 0 {
        entries.select_nth_unstable_by(k - 1, ranking_order);
    }
    entries.truncate(k);
    entries.sort_by(ranking_order);
    Ok(PredictionRanking {
        entries,
        restricted_to_zeros: only_zeros,
    })
}

/// Top `top_k` cells whose training label is 0.
pub fn rank_new_associations<F: Scalar>(
    probs: &Array2<F>,
    y: &InteractionMatrix,
    top_k: usize,
) -> Result<PredictionRanking> {
    rank_cells(probs, y, top_k, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeature {
    pub index: usize,
    pub name: Option<String>,
    pub norm: f64,
    /// True for columns of an appended identity block.
    pub identity: bool,
}

/// Rows with strictly positive norm, sorted by norm descending (ties by index).
pub fn selected_features<F: Scalar>(factor: &Array2<F>, names: Option<&[String]>) -> Vec<SelectedFeature> {
    selected_features_with_block(factor, names, None)
}

/// As [`selected_features`], marking rows at or beyond `identity_from` as
/// identity columns.
pub fn selected_features_with_block<F: Scalar>(
    factor: &Array2<F>,
    names: Option<&[String]>,
    identity_from: Option<usize>,
) -> Vec<SelectedFeature> {
    let mut out: Vec<SelectedFeature> = factor
        .axis_iter(Axis(0))
        .enumerate()
        .filter_map(|(index, row)| {
            let norm = l2_norm(row).to_f64_lossy();
            (norm > 0.0).then(|| SelectedFeature {
                index,
                name: names.and_then(|n| n.get(index).cloned()),
                norm,
                identity: identity_from.is_some_and(|d| index >= d),
            })
        })
        .collect();
    out.sort_by(|a, b| b.norm.total_cmp(&a.norm).then(a.index.cmp(&b.index)));
    out
}

/// Selected features of one side, using the side's names and augmentation.
pub fn selected_for_side<F: Scalar>(factor: &Array2<F>, side: &SideFeatures<F>) -> Vec<SelectedFeature> {
    let block = side.is_augmented().then(|| side.original_d());
    selected_features_with_block(factor, side.feature_names(), block)
}

/// Number of selected non-identity features.
pub fn side_feature_count(selected: &[SelectedFeature]) -> usize {
    selected.iter().filter(|s| !s.identity).count()
}
