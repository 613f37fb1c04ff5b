//! Sparse inductive matrix completion with spike-and-slab group lasso priors.
//!
//! Binary interaction matrices `Y` (rows × columns) are modelled through side
//! features `U` (rows × d1) and `V` (columns × d2) and a pair of projection
//! matrices `A` (d1 × r) and `B` (d2 × r):
//!
//! ```text
//! P(y_ij = 1) = sigmoid(u_i' A B' v_j)
//! ```
//!
//! Each row of `A` and `B` carries a two-component (spike and slab) group
//! Laplace prior with a beta hyperprior on the mixing weight. The posterior
//! mode is found by coordinate ascent over rows with accelerated proximal
//! gradient steps whose thresholding produces rows that are exactly zero, so
//! the surviving rows identify the side features that matter.
//!
//! The numerical core is generic over the floating point type through
//! [`Scalar`]; [`f64`] aliases for the common types live at the crate root.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod model_file;
pub mod optimizer;
pub mod predictor;
pub mod scalar;
pub mod ssgl;
pub mod synth;

pub use data::{HyperParams, InteractionMatrix, LatentFactors, SideFeatures, TestRecord};
pub use error::{Error, Result};
pub use optimizer::{fit, FitOutcome, FitState, InitStrategy, Problem};
pub use scalar::Scalar;
pub use ssgl::SsglSide;

/// Double precision side features.
pub type SideFeatures64 = SideFeatures<f64>;
/// Single precision side features.
pub type SideFeatures32 = SideFeatures<f32>;
/// Double precision latent factors.
pub type LatentFactors64 = LatentFactors<f64>;
/// Single precision latent factors.
pub type LatentFactors32 = LatentFactors<f32>;
/// Double precision fit state.
pub type FitState64 = FitState<f64>;
/// Single precision fit state.
pub type FitState32 = FitState<f32>;
/// Double precision SSGL side parameters.
pub type SsglSide64 = SsglSide<f64>;
