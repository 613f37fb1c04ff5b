//! Spike-and-slab group lasso machinery for a single row of a factor matrix.
//!
//! A row `x ∈ R^r` has prior `(1-θ) Ψ(x | λ0) + θ Ψ(x | λ1)` with the
//! unnormalized group Laplace density `Ψ(x | λ) = λ^r exp(-λ ‖x‖₂)`. The
//! normalizing constant depends only on `r` and cancels everywhere below.
//! All mixture ratios are evaluated in log space: `λ0^r` overflows long before
//! the values used in practice (λ0 up to 1e4, r up to a few hundred).

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::{l2_norm, Scalar};

/// Spike/slab inverse scales and group dimension for one side of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsglSide<F> {
    lambda0: F,
    lambda1: F,
    r: usize,
}

impl<F: Scalar> SsglSide<F> {
    pub fn new(lambda0: F, lambda1: F, r: usize) -> Result<Self> {
        if !(lambda1 > F::zero() && lambda1.is_finite() && lambda0.is_finite()) {
            return Err(Error::Domain(format!(
                "slab scale must be positive and finite, got {lambda1}"
            )));
        }
        if lambda0 < lambda1 {
            return Err(Error::Domain(format!(
                "spike scale {lambda0} is smaller than slab scale {lambda1}"
            )));
        }
        if r == 0 {
            return Err(Error::Domain("group dimension must be ≥ 1".into()));
        }
        Ok(Self { lambda0, lambda1, r })
    }

    pub fn lambda0(&self) -> F {
        self.lambda0
    }

    pub fn lambda1(&self) -> F {
        self.lambda1
    }

    pub fn r(&self) -> usize {
        self.r
    }
}

/// Mixing proportion θ, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MixingWeight<F>(F);

impl<F: Scalar> MixingWeight<F> {
    pub fn new(theta: F) -> Result<Self> {
        if theta > F::zero() && theta < F::one() {
            Ok(Self(theta))
        } else {
            Err(Error::Domain(format!("mixing weight {theta} outside (0, 1)")))
        }
    }

    pub fn get(self) -> F {
        self.0
    }
}

/// `log p⋆(x)`: log posterior probability that a row with norm `norm_x`
/// came from the slab.
pub fn log_p_star<F: Scalar>(norm_x: F, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    (-spike_log_odds(norm_x, theta, side).softplus()).min(F::zero())
}

/// `log[(1-θ)Ψ(x|λ0) / θΨ(x|λ1)]`, formed directly so the `x` term is not
/// lost to cancellation between two large log-densities.
fn spike_log_odds<F: Scalar>(norm_x: F, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    let r = F::from_usize(side.r).expect("r fits in scalar");
    let prior = (F::one() - theta.0).ln() - theta.0.ln();
    prior + r * (side.lambda0.ln() - side.lambda1.ln()) - (side.lambda0 - side.lambda1) * norm_x
}

/// `p⋆(x) = θΨ(x|λ1) / [(1-θ)Ψ(x|λ0) + θΨ(x|λ1)]`.
pub fn p_star<F: Scalar>(norm_x: F, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    (-spike_log_odds(norm_x, theta, side)).sigmoid()
}

/// Adaptive penalty weight `λ⋆ = λ1 p⋆ + λ0 (1 - p⋆)`.
pub fn lambda_star<F: Scalar>(norm_x: F, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    let q = spike_log_odds(norm_x, theta, side).sigmoid();
    (side.lambda1 + (side.lambda0 - side.lambda1) * q).min(side.lambda0)
}

/// `g(x) = [λ⋆(x) - λ1]² + (2/η) log p⋆(x)`; `-∞` when `p⋆` underflows to 0.
pub fn g_value<F: Scalar>(norm_x: F, theta: MixingWeight<F>, side: &SsglSide<F>, eta: F) -> F {
    let d = lambda_star(norm_x, theta, side) - side.lambda1;
    d * d + F::lit(2.0) / eta * log_p_star(norm_x, theta, side)
}

/// Selection threshold on `‖z‖₂`: rows whose gradient-step point falls at or
/// below it are set exactly to zero.
pub fn threshold_upper<F: Scalar>(theta: MixingWeight<F>, side: &SsglSide<F>, eta: F) -> F {
    let zero = F::zero();
    if g_value(zero, theta, side, eta) > zero {
        let neg_log_p0 = -log_p_star(zero, theta, side);
        (F::lit(2.0) * eta * neg_log_p0).sqrt() + eta * side.lambda1
    } else {
        eta * lambda_star(zero, theta, side)
    }
}

/// Lower bound on the exact threshold, defined only when
/// `λ0 - λ1 > 2/√η` and `g(0) > 0`. Evaluated at the largest admissible
/// slack `d`, so it is the most conservative bound. Diagnostic only.
pub fn threshold_lower<F: Scalar>(theta: MixingWeight<F>, side: &SsglSide<F>, eta: F) -> Option<F> {
    let zero = F::zero();
    let two = F::lit(2.0);
    let gap = side.lambda0 - side.lambda1;
    if !(gap > two / eta.sqrt() && g_value(zero, theta, side, eta) > zero) {
        return None;
    }
    let t = F::one() / (eta * gap) - (two / eta).sqrt();
    let d_max = two / eta - t * t;
    let neg_log_p0 = -log_p_star(zero, theta, side);
    let radicand = (two * eta * neg_log_p0 - eta * eta * d_max).max(zero);
    Some(radicand.sqrt() + eta * side.lambda1)
}

/// Refined proximal update.
///
/// Returns the exact zero vector when `‖z‖₂ ≤ Δᵁ`, otherwise the group
/// soft-threshold `(1 - η ω / ‖z‖₂)₊ z` with `ω = λ⋆(‖prev_row‖₂)`.
pub fn prox_refined<F: Scalar>(
    z: ArrayView1<F>,
    prev_row: ArrayView1<F>,
    theta: MixingWeight<F>,
    side: &SsglSide<F>,
    eta: F,
) -> Array1<F> {
    let threshold = threshold_upper(theta, side, eta);
    let omega = lambda_star(l2_norm(prev_row), theta, side);
    shrink(z, threshold, eta * omega)
}

/// Hard threshold at `threshold`, then shrink the norm by `amount`.
pub(crate) fn shrink<F: Scalar>(z: ArrayView1<F>, threshold: F, amount: F) -> Array1<F> {
    let norm = l2_norm(z);
    if norm.partial_cmp(&threshold) != Some(std::cmp::Ordering::Greater) {
        return Array1::zeros(z.len());
    }
    let scale = F::one() - amount / norm;
    if scale <= F::zero() {
        Array1::zeros(z.len())
    } else {
        z.mapv(|v| v * scale)
    }
}

/// Centered log prior `pen(x) = log π(x)/π(0) = -λ1‖x‖₂ + log[p⋆(0)/p⋆(x)]`.
pub fn pen_value<F: Scalar>(row: ArrayView1<F>, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    pen_value_from_norm(l2_norm(row), theta, side)
}

pub fn pen_value_from_norm<F: Scalar>(norm: F, theta: MixingWeight<F>, side: &SsglSide<F>) -> F {
    if norm == F::zero() {
        return F::zero();
    }
    -side.lambda1 * norm + log_p_star(F::zero(), theta, side) - log_p_star(norm, theta, side)
}
