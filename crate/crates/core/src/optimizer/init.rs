//! Starting values for `A` and `B`.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Problem;
use crate::data::LatentFactors;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// RNG stream reserved for initialization (see `synth` for the others).
pub const INIT_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// I.i.d. standard normal entries scaled by `1/√r`.
    #[default]
    RandomNormal,
    /// Rank-`r` SVD `Y ≈ P Σ Qᵀ` lifted through least squares:
    /// `U A ≈ P Σ^½`, `V B ≈ Q Σ^½`.
    TruncatedSvd,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-normal" => Ok(Self::RandomNormal),
            "truncated-svd" => Ok(Self::TruncatedSvd),
            other => Err(Error::Validation(format!("unknown init strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RandomNormal => "random-normal",
            Self::TruncatedSvd => "truncated-svd",
        })
    }
}

pub fn init_factors<F: Scalar>(
    strategy: InitStrategy,
    problem: &Problem<'_, F>,
    r: usize,
    seed: u64,
) -> Result<LatentFactors<F>> {
    let d1 = problem.u.n_features();
    let d2 = problem.v.n_features();
    if r == 0 || r > d1.min(d2) {
        return Err(Error::Dimension(format!(
            "rank r = {r} must lie in 1..={} (d1 = {d1}, d2 = {d2})",
            d1.min(d2)
        )));
    }
    match strategy {
        InitStrategy::RandomNormal => Ok(random_normal(d1, d2, r, seed)),
        InitStrategy::TruncatedSvd => truncated_svd(problem, r),
    }
}

fn random_normal<F: Scalar>(d1: usize, d2: usize, r: usize, seed: u64) -> LatentFactors<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let scale = 1.0 / (r as f64).sqrt();
    let mut draw = |rows: usize| {
        Array2::from_shape_simple_fn((rows, r), || {
            let x: f64 = StandardNormal.sample(&mut rng);
            F::lit(x * scale)
        })
    };
    let a = draw(d1);
    let b = draw(d2);
    LatentFactors { a, b }
}

fn to_dmatrix<F: Scalar>(m: &Array2<F>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]].to_f64_lossy())
}

fn from_dmatrix<F: Scalar>(m: &DMatrix<f64>) -> Array2<F> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| F::lit(m[(i, j)]))
}

fn truncated_svd<F: Scalar>(problem: &Problem<'_, F>, r: usize) -> Result<LatentFactors<F>> {
    let (n_rows, n_cols) = problem.y.shape();
    if r > n_rows.min(n_cols) {
        return Err(Error::Dimension(format!(
            "rank r = {r} exceeds min(I, J) = {}",
            n_rows.min(n_cols)
        )));
    }
    let y = DMatrix::from_fn(n_rows, n_cols, |i, j| f64::from(problem.y.get(i, j)));
    let svd = y.svd(true, true);
    let p = svd.u.as_ref().expect("left singular vectors requested");
    let qt = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut left = DMatrix::zeros(n_rows, r);
    let mut right = DMatrix::zeros(n_cols, r);
    for (c, &idx) in order.iter().take(r).enumerate() {
        let s = svd.singular_values[idx].sqrt();
        left.set_column(c, &(p.column(idx) * s));
        right.set_column(c, &(qt.row(idx).transpose() * s));
    }

    let a = least_squares(&to_dmatrix(problem.u.matrix()), &left)?;
    let b = least_squares(&to_dmatrix(problem.v.matrix()), &right)?;
    LatentFactors::new(from_dmatrix(&a), from_dmatrix(&b))
}

/// Minimum-norm least-squares solution of `X W ≈ T`.
fn least_squares(x: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let eps = f64::EPSILON * x.nrows().max(x.ncols()) as f64 * svd.singular_values.max();
    svd.solve(target, eps)
        .map_err(|e| Error::Validation(format!("least-squares lift failed: {e}")))
}
