//! Core data types shared by the solver, the generator and the evaluation
//! harness.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A held-out cell together with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TestRecord {
    pub row: usize,
    pub col: usize,
    pub label: u8,
}

/// Binary `I × J` interaction matrix.
///
/// `labels` is the training view: any cell that is held out or was never
/// observed reads as 0. Known positives are additionally kept as a sorted
/// index set.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    labels: Array2<u8>,
    positives: Vec<(usize, usize)>,
    test_set: Vec<TestRecord>,
}

impl InteractionMatrix {
    /// Builds a matrix from a dense 0/1 array.
    pub fn from_dense(labels: Array2<u8>) -> Result<Self> {
        let mut positives = Vec::new();
        for ((i, j), &v) in labels.indexed_iter() {
            match v {
                0 => {}
                1 => positives.push((i, j)),
                other => {
                    return Err(Error::Validation(format!(
                        "label at ({i}, {j}) is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(Self {
            labels,
            positives,
            test_set: Vec::new(),
        })
    }

    /// Builds an `n_rows × n_cols` matrix from 0-based positive coordinates.
    pub fn from_positives(
        n_rows: usize,
        n_cols: usize,
        positives: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut labels = Array2::zeros((n_rows, n_cols));
        for (i, j) in positives {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Validation(format!(
                    "positive ({i}, {j}) outside {n_rows}×{n_cols} grid"
                )));
            }
            labels[[i, j]] = 1;
        }
        Self::from_dense(labels)
    }

    /// Attaches a held-out test set. Test cells must be in bounds, pairwise
    /// distinct and read as 0 in the training view.
    pub fn with_test_set(mut self, mut test_set: Vec<TestRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(test_set.len());
        for rec in &test_set {
            if rec.row >= self.n_rows() || rec.col >= self.n_cols() {
                return Err(Error::Validation(format!(
                    "test cell ({}, {}) outside {}×{} grid",
                    rec.row,
                    rec.col,
                    self.n_rows(),
                    self.n_cols()
                )));
            }
            if rec.label > 1 {
                return Err(Error::Validation(format!(
                    "test cell ({}, {}) has label {}",
                    rec.row, rec.col, rec.label
                )));
            }
            if !seen.insert((rec.row, rec.col)) {
                return Err(Error::Validation(format!(
                    "test cell ({}, {}) listed twice",
                    rec.row, rec.col
                )));
            }
            if self.labels[[rec.row, rec.col]] != 0 {
                return Err(Error::Validation(format!(
                    "test cell ({}, {}) is a training positive; held-out cells must be masked",
                    rec.row, rec.col
                )));
            }
        }
        test_set.sort_unstable();
        self.test_set = test_set;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.labels.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Training label (0 for masked or held-out cells).
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[[i, j]]
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    /// Sorted 0-based coordinates of the training positives.
    pub fn positives(&self) -> &[(usize, usize)] {
        &self.positives
    }

    pub fn test_set(&self) -> &[TestRecord] {
        &self.test_set
    }

    pub fn n_positives(&self) -> usize {
        self.positives.len()
    }

    /// Same training labels without a test set.
    pub fn without_test_set(&self) -> Self {
        Self {
            labels: self.labels.clone(),
            positives: self.positives.clone(),
            test_set: Vec::new(),
        }
    }
}

/// Row or column side features (`U` is `I × d1`, `V` is `J × d2`).
#[derive(Debug, Clone, PartialEq)]
pub struct SideFeatures<F> {
    matrix: Array2<F>,
    feature_names: Option<Vec<String>>,
    /// Number of columns before identity augmentation, if augmented.
    augmented_from: Option<usize>,
}

impl<F: Scalar> SideFeatures<F> {
    pub fn new(matrix: Array2<F>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if let Some((idx, _)) = matrix.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (i, j) = (idx / matrix.ncols().max(1), idx % matrix.ncols().max(1));
            return Err(Error::Validation(format!(
                "side feature at ({i}, {j}) is not finite"
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != matrix.ncols() {
                return Err(Error::Dimension(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    matrix.ncols()
                )));
            }
        }
        Ok(Self {
            matrix,
            feature_names,
            augmented_from: None,
        })
    }

    /// Appends an `n × n` identity block, giving `[X | I]`.
    pub fn augment(self) -> Self {
        if self.augmented_from.is_some() {
            return self;
        }
        let (n, d) = self.matrix.dim();
        let mut m = Array2::zeros((n, d + n));
        m.slice_mut(ndarray::s![.., ..d]).assign(&self.matrix);
        for i in 0..n {
            m[[i, d + i]] = F::one();
        }
        let feature_names = self.feature_names.map(|mut names| {
            names.extend((0..n).map(|i| format!("identity_{i}")));
            names
        });
        Self {
            matrix: m,
            feature_names,
            augmented_from: Some(d),
        }
    }

    /// Marks an already-materialized `[X | I]` matrix as augmented after
    /// checking the trailing identity block.
    pub fn mark_augmented(mut self, original_d: usize) -> Result<Self> {
        let (n, d) = self.matrix.dim();
        if d != original_d + n {
            return Err(Error::Dimension(format!(
                "augmented width {d} != {original_d} + {n}"
            )));
        }
        for i in 0..n {
            for k in 0..n {
                let want = if i == k { F::one() } else { F::zero() };
                if self.matrix[[i, original_d + k]] != want {
                    return Err(Error::Validation(
                        "trailing block is not the identity".into(),
                    ));
                }
            }
        }
        self.augmented_from = Some(original_d);
        Ok(self)
    }

    pub fn matrix(&self) -> &Array2<F> {
        &self.matrix
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented_from.is_some()
    }

    /// Width of the original features (equals [`Self::n_features`] when not augmented).
    pub fn original_d(&self) -> usize {
        self.augmented_from.unwrap_or(self.matrix.ncols())
    }

    pub fn n_entities(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    /// Features whose column is identically zero; their gradient is always
    /// zero so they can never be selected.
    pub fn never_selectable(&self) -> Vec<usize> {
        self.matrix
            .axis_iter(Axis(1))
            .enumerate()
            .filter(|(_, col)| col.iter().all(|v| *v == F::zero()))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Projection matrices `A` (`d1 × r`) and `B` (`d2 × r`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors<F> {
    pub a: Array2<F>,
    pub b: Array2<F>,
}

impl<F: Scalar> LatentFactors<F> {
    pub fn new(a: Array2<F>, b: Array2<F>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "A has {} columns but B has {}",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("latent factors contain non-finite values".into()));
        }
        Ok(Self { a, b })
    }

    pub fn zeros(d1: usize, d2: usize, r: usize) -> Self {
        Self {
            a: Array2::zeros((d1, r)),
            b: Array2::zeros((d2, r)),
        }
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    /// Indices of rows of `A` that are not the exact zero vector.
    pub fn active_rows_a(&self) -> Vec<usize> {
        active_rows(&self.a)
    }

    pub fn active_rows_b(&self) -> Vec<usize> {
        active_rows(&self.b)
    }
}

pub(crate) fn active_rows<F: Scalar>(m: &Array2<F>) -> Vec<usize> {
    m.axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row_is_nonzero(*row))
        .map(|(k, _)| k)
        .collect()
}

pub(crate) fn row_is_nonzero<F: Scalar>(row: ArrayView1<F>) -> bool {
    row.iter().any(|v| *v != F::zero())
}

/// Hyperparameters of the likelihood, priors and optimizer schedule.
///
/// Fields ending in `_a` belong to the row-feature side (`A`), `_b` to the
/// column-feature side (`B`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Confidence weight on positive labels (≥ 1).
    pub xi: f64,
    pub lambda0_a: f64,
    pub lambda1_a: f64,
    pub lambda0_b: f64,
    pub lambda1_b: f64,
    /// Beta prior shapes; `None` means `1 / r`.
    pub alpha_a: Option<f64>,
    pub beta_a: f64,
    pub alpha_b: Option<f64>,
    pub beta_b: f64,
    pub r: usize,
    pub eta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Initial value of every conditional mixing expectation.
    pub theta_init: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            xi: 10.0,
            lambda0_a: 5.0,
            lambda1_a: 1.0,
            lambda0_b: 5.0,
            lambda1_b: 1.0,
            alpha_a: None,
            beta_a: 1.0,
            alpha_b: None,
            beta_b: 1.0,
            r: 25,
            eta: 1e-4,
            max_iters: 500,
            tol: 1e-6,
            seed: 0,
            theta_init: 0.5,
        }
    }
}

impl HyperParams {
    pub fn alpha_a(&self) -> f64 {
        self.alpha_a.unwrap_or(1.0 / self.r as f64)
    }

    pub fn alpha_b(&self) -> f64 {
        self.alpha_b.unwrap_or(1.0 / self.r as f64)
    }

    /// Sets the spike scale on both sides.
    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0_a = lambda0;
        self.lambda0_b = lambda0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if !(self.xi >= 1.0 && self.xi.is_finite()) {
            return Err(Error::Validation(format!("xi must be ≥ 1, got {}", self.xi)));
        }
        for (name, v) in [
            ("lambda0_a", self.lambda0_a),
            ("lambda1_a", self.lambda1_a),
            ("lambda0_b", self.lambda0_b),
            ("lambda1_b", self.lambda1_b),
            ("alpha_a", self.alpha_a()),
            ("beta_a", self.beta_a),
            ("alpha_b", self.alpha_b()),
            ("beta_b", self.beta_b),
            ("eta", self.eta),
        ] {
            positive(name, v)?;
        }
        if self.lambda0_a < self.lambda1_a || self.lambda0_b < self.lambda1_b {
            return Err(Error::Validation(
                "spike scale lambda0 must be at least the slab scale lambda1".into(),
            ));
        }
        if self.r == 0 {
            return Err(Error::Validation("latent dimension r must be ≥ 1".into()));
        }
        if !(self.theta_init > 0.0 && self.theta_init < 1.0) {
            return Err(Error::Validation(format!(
                "theta_init must lie in (0, 1), got {}",
                self.theta_init
            )));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Validation("tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_positives_are_collected() {
        let y = InteractionMatrix::from_dense(array![[0u8, 1], [1, 0]]).unwrap();
        assert_eq!(y.positives(), &[(0, 1), (1, 0)]);
        assert_eq!(y.shape(), (2, 2));
    }

    #[test]
    fn non_binary_label_is_rejected() {
        let err = InteractionMatrix::from_dense(array![[0u8, 2]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn test_set_must_be_masked_and_distinct() {
        let y = InteractionMatrix::from_positives(2, 2, [(0, 0)]).unwrap();
        let dup = vec![
            TestRecord { row: 1, col: 1, label: 1 },
            TestRecord { row: 1, col: 1, label: 0 },
        ];
        assert!(y.clone().with_test_set(dup).is_err());
        let leak = vec![TestRecord { row: 0, col: 0, label: 1 }];
        assert!(y.clone().with_test_set(leak).is_err());
        let oob = vec![TestRecord { row: 2, col: 0, label: 1 }];
        assert!(y.clone().with_test_set(oob).is_err());
        let ok = vec![TestRecord { row: 1, col: 0, label: 1 }];
        let y = y.with_test_set(ok).unwrap();
        assert_eq!(y.get(1, 0), 0);
        assert_eq!(y.test_set().len(), 1);
    }

    #[test]
    fn augmentation_appends_identity() {
        let sf = SideFeatures::new(array![[1.0, 2.0], [3.0, 4.0]], None).unwrap().augment();
        assert_eq!(
            sf.matrix(),
            &array![[1.0, 2.0, 1.0, 0.0], [3.0, 4.0, 0.0, 1.0]]
        );
        assert!(sf.is_augmented());
        assert_eq!(sf.original_d(), 2);
        assert_eq!(sf.n_features(), 4);
        let again = sf.clone().augment();
        assert_eq!(again, sf);
    }

    #[test]
    fn non_finite_features_are_rejected() {
        assert!(SideFeatures::new(array![[1.0, f64::NAN]], None).is_err());
    }

    #[test]
    fn zero_columns_are_never_selectable() {
        let sf = SideFeatures::new(array![[1.0, 0.0], [2.0, 0.0]], None).unwrap();
        assert_eq!(sf.never_selectable(), vec![1]);
    }

    #[test]
    fn default_hyperparams_follow_recommendations() {
        let h = HyperParams::default();
        assert_eq!(h.xi, 10.0);
        assert_eq!(h.eta, 1e-4);
        assert_eq!(h.lambda1_a, 1.0);
        assert_eq!(h.lambda1_b, 1.0);
        assert_eq!(h.alpha_a(), 1.0 / 25.0);
        assert_eq!(h.beta_b, 1.0);
        assert_eq!(h.theta_init, 0.5);
        h.validate().unwrap();
    }

    #[test]
    fn hyperparam_invariants() {
        let h = HyperParams { xi: 0.5, ..HyperParams::default() };
        assert!(h.validate().is_err());
        let h = HyperParams { lambda0_a: 0.5, ..HyperParams::default() };
        assert!(h.validate().is_err());
    }
}
