//! Synthetic data with a known sparse truth.
//!
//! `U` and `V` are i.i.d. normal, the true `A` and `B` carry a scaled
//! identity in their top `r_true × r_true` block and zeros below, labels are
//! Bernoulli draws from `σ(U A Bᵀ Vᵀ)`, and a masking step hides most cells.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed`, using a separate
//! stream per stage so that changing the masking parameters leaves the
//! features and labels untouched.

use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SideFeatures, TestRecord};
use crate::error::{Error, Result};
use crate::io::{save_interactions, save_matrix_csv, save_side_features, save_test_set, InteractionFormat};
use crate::optimizer::compute_m;
use crate::scalar::Scalar;

pub const RNG_ALGORITHM: &str = "ChaCha8Rng";
pub const FEATURE_STREAM: u64 = 1;
pub const LABEL_STREAM: u64 = 2;
pub const MASK_STREAM: u64 = 3;
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub d1: usize,
    pub d2: usize,
    pub r_true: usize,
    /// Standard deviation of each side-feature entry.
    pub feature_sd: f64,
    /// Multiplier on the identity block of the true factors.
    pub signal_scale: f64,
    pub observe_frac: f64,
    /// Fraction of observed zeros moved into the test set.
    pub zero_mix_frac: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_rows: 800,
            n_cols: 1600,
            d1: 100,
            d2: 100,
            r_true: 25,
            feature_sd: 0.005f64.sqrt(),
            signal_scale: 1.0,
            observe_frac: 0.01,
            zero_mix_frac: 0.5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Validation("dimensions must be positive".into()));
        }
        if self.r_true == 0 || self.r_true > self.d1.min(self.d2) {
            return Err(Error::Validation(format!(
                "r_true = {} must lie in 1..=min(d1, d2) = {}",
                self.r_true,
                self.d1.min(self.d2)
            )));
        }
        if !(self.feature_sd >= 0.0 && self.feature_sd.is_finite()) {
            return Err(Error::Validation("feature_sd must be finite and ≥ 0".into()));
        }
        if !self.signal_scale.is_finite() {
            return Err(Error::Validation("signal_scale must be finite".into()));
        }
        if !(self.observe_frac > 0.0 && self.observe_frac <= 1.0) {
            return Err(Error::Validation(format!("observe_frac must lie in (0, 1], got {}", self.observe_frac)));
        }
        if !(0.0..=1.0).contains(&self.zero_mix_frac) {
            return Err(Error::Validation(format!("zero_mix_frac must lie in [0, 1], got {}", self.zero_mix_frac)));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub u: SideFeatures<f64>,
    pub v: SideFeatures<f64>,
    pub a_true: Array2<f64>,
    pub b_true: Array2<f64>,
    pub p_true: Array2<f64>,
    pub y_full: InteractionMatrix,
}

fn sparse_truth(d: usize, r: usize, scale: f64) -> Array2<f64> {
    let mut m = Array2::zeros((d, r));
    for k in 0..r {
        m[[k, k]] = scale;
    }
    m
}

pub fn generate_truth(cfg: &SimConfig) -> Result<SimTruth> {
    cfg.validate()?;
    let mut rng = cfg.rng(FEATURE_STREAM);
    let normal = Normal::new(0.0, cfg.feature_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let u = Array2::from_shape_simple_fn((cfg.n_rows, cfg.d1), || normal.sample(&mut rng));
    let v = Array2::from_shape_simple_fn((cfg.n_cols, cfg.d2), || normal.sample(&mut rng));
    let u = SideFeatures::new(u, None)?;
    let v = SideFeatures::new(v, None)?;
    let a_true = sparse_truth(cfg.d1, cfg.r_true, cfg.signal_scale);
    let b_true = sparse_truth(cfg.d2, cfg.r_true, cfg.signal_scale);
    let p_true = compute_m(&u, &a_true, &b_true, &v)?.mapv_into(Scalar::sigmoid);

    let mut rng = cfg.rng(LABEL_STREAM);
    let labels = p_true.mapv(|p| u8::from(rng.random::<f64>() < p));
    let y_full = InteractionMatrix::from_dense(labels)?;
    Ok(SimTruth {
        u,
        v,
        a_true,
        b_true,
        p_true,
        y_full,
    })
}

/// Hides all but `⌊observe_frac·I·J⌋` uniformly chosen cells and moves a
/// `zero_mix_frac` share of the observed zeros into the test set as well.
/// The returned matrix carries the test set; every test cell reads 0.
pub fn apply_masking(y_full: &InteractionMatrix, cfg: &SimConfig) -> Result<InteractionMatrix> {
    cfg.validate()?;
    let (n_rows, n_cols) = y_full.shape();
    let total = n_rows * n_cols;
    let n_obs = ((cfg.observe_frac * total as f64).floor() as usize).min(total);
    let mut rng = cfg.rng(MASK_STREAM);

    let mut observed = vec![false; total];
    let mut picks = index::sample(&mut rng, total, n_obs).into_vec();
    picks.sort_unstable();
    for &c in &picks {
        observed[c] = true;
    }
    let observed_zeros: Vec<usize> = picks
        .iter()
        .copied()
        .filter(|&c| y_full.get(c / n_cols, c % n_cols) == 0)
        .collect();
    let n_mix = (cfg.zero_mix_frac * observed_zeros.len() as f64).floor() as usize;
    for pos in index::sample(&mut rng, observed_zeros.len(), n_mix) {
        observed[observed_zeros[pos]] = false;
    }

    let mut labels = Array2::<u8>::zeros((n_rows, n_cols));
    let mut test = Vec::with_capacity(total - n_obs + n_mix);
    for (c, &obs) in observed.iter().enumerate() {
        let (i, j) = (c / n_cols, c % n_cols);
        if obs {
            labels[[i, j]] = y_full.get(i, j);
        } else {
            test.push(TestRecord {
                row: i,
                col: j,
                label: y_full.get(i, j),
            });
        }
    }
    InteractionMatrix::from_dense(labels)?.with_test_set(test)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamManifest {
    pub algorithm: String,
    pub features: u64,
    pub labels: u64,
    pub masking: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimManifest {
    pub format_version: u32,
    pub config: SimConfig,
    pub rng: StreamManifest,
    pub files: Vec<String>,
    pub n_train_positives: usize,
    pub n_test: usize,
    pub n_test_positives: usize,
    pub mean_p_true: f64,
}

pub const U_FILE: &str = "U.csv";
pub const V_FILE: &str = "V.csv";
pub const Y_TRAIN_FILE: &str = "Y_train.mtx";
pub const TEST_FILE: &str = "test_set.csv";
pub const Y_FULL_FILE: &str = "Y_full.mtx";
pub const A_TRUE_FILE: &str = "A_true.csv";
pub const B_TRUE_FILE: &str = "B_true.csv";
pub const SIM_MANIFEST_FILE: &str = "simulation.json";

/// Writes the training bundle and the truth files into `dir`.
pub fn write_bundle(dir: &Path, cfg: &SimConfig, truth: &SimTruth, train: &InteractionMatrix) -> Result<SimManifest> {
    std::fs::create_dir_all(dir)?;
    save_side_features(&dir.join(U_FILE), &truth.u)?;
    save_side_features(&dir.join(V_FILE), &truth.v)?;
    save_interactions(&dir.join(Y_TRAIN_FILE), train, InteractionFormat::MatrixMarket)?;
    save_test_set(&dir.join(TEST_FILE), train.test_set())?;
    save_interactions(&dir.join(Y_FULL_FILE), &truth.y_full, InteractionFormat::MatrixMarket)?;
    save_matrix_csv(&dir.join(A_TRUE_FILE), &truth.a_true, None)?;
    save_matrix_csv(&dir.join(B_TRUE_FILE), &truth.b_true, None)?;
    let manifest = SimManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        config: cfg.clone(),
        rng: StreamManifest {
            algorithm: RNG_ALGORITHM.into(),
            features: FEATURE_STREAM,
            labels: LABEL_STREAM,
            masking: MASK_STREAM,
        },
        files: [U_FILE, V_FILE, Y_TRAIN_FILE, TEST_FILE, Y_FULL_FILE, A_TRUE_FILE, B_TRUE_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        n_train_positives: train.n_positives(),
        n_test: train.test_set().len(),
        n_test_positives: train.test_set().iter().filter(|r| r.label == 1).count(),
        mean_p_true: truth.p_true.mean().unwrap_or(f64::NAN),
    };
    std::fs::write(dir.join(SIM_MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n_rows: 4,
            n_cols: 4,
            d1: 3,
            d2: 3,
            r_true: 2,
            observe_frac: 0.25,
            zero_mix_frac: 0.0,
            seed: 11,
            ..SimConfig::default()
        }
    }

    #[test]
    fn identity_block() {
        let t = generate_truth(&SimConfig { n_rows: 30, n_cols: 30, ..SimConfig::default() }).unwrap();
        for k in 0..100 {
            for c in 0..25 {
                assert_eq!(t.a_true[[k, c]], if k == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_sd_gives_half() {
        let t = generate_truth(&SimConfig { feature_sd: 0.0, ..small() }).unwrap();
        assert!(t.p_true.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn four_by_four_masking() {
        let cfg = small();
        let t = generate_truth(&cfg).unwrap();
        let m1 = apply_masking(&t.y_full, &cfg).unwrap();
        let m2 = apply_masking(&t.y_full, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.test_set().len(), 12);
    }

    #[test]
    fn full_observation_is_identity() {
        let cfg = SimConfig { observe_frac: 1.0, ..small() };
        let t = generate_truth(&cfg).unwrap();
        let m = apply_masking(&t.y_full, &cfg).unwrap();
        assert!(m.test_set().is_empty());
        assert_eq!(m.labels(), t.y_full.labels());
    }
}
