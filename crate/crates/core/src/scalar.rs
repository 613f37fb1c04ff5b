use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type of every matrix in the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `log(1 + exp(x))` without overflow.
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic function evaluated without overflow for large `|x|`.
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// Applies [`Scalar::sigmoid`] to every element. The built-in float
    /// types use a SIMD exponential that may differ from the scalar one in
    /// the last bit.
    fn sigmoid_in_place(xs: &mut [Self]) {
        for x in xs {
            *x = x.sigmoid();
        }
    }

    /// Human-readable name used in serialized headers.
    fn type_name() -> &'static str;
}

macro_rules! simd_sigmoid {
    ($xs:expr, $vec:ty, $lanes:expr) => {{
        let mut chunks = $xs.chunks_exact_mut($lanes);
        for c in &mut chunks {
            let x = <$vec>::from(<[_; $lanes]>::try_from(&*c).expect("full chunk"));
            let e = (-x.abs()).exp();
            let d = <$vec>::ONE / (<$vec>::ONE + e);
            let s = x.simd_ge(<$vec>::ZERO).select(d, e * d);
            c.copy_from_slice(&s.to_array());
        }
        for x in chunks.into_remainder() {
            *x = x.sigmoid();
        }
    }};
}

impl Scalar for f32 {
    fn sigmoid_in_place(xs: &mut [Self]) {
        simd_sigmoid!(xs, wide::f32x8, 8)
    }

    fn type_name() -> &'static str {
        "f32"
    }
}

impl Scalar for f64 {
    fn sigmoid_in_place(xs: &mut [Self]) {
        simd_sigmoid!(xs, wide::f64x4, 4)
    }

    fn type_name() -> &'static str {
        "f64"
    }
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn l2_norm<F: Scalar>(x: ndarray::ArrayView1<F>) -> F {
    x.iter().map(|&v| v * v).sum::<F>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(1000.0f64.sigmoid(), 1.0);
        assert_eq!((-1000.0f64).sigmoid(), 0.0);
        assert!((120.0f64.sigmoid() - 1.0).abs() < 1e-15);
        assert_eq!(0.0f32.sigmoid(), 0.5);
    }

    #[test]
    fn batched_sigmoid_matches_scalar() {
        let xs: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.37).chain([800.0, -800.0]).collect();
        let mut ys = xs.clone();
        f64::sigmoid_in_place(&mut ys);
        for (x, y) in xs.iter().zip(&ys) {
            assert!((x.sigmoid() - y).abs() <= 4.0 * f64::EPSILON * x.sigmoid(), "{x}");
        }
        let mut nan = [f64::NAN; 5];
        f64::sigmoid_in_place(&mut nan);
        assert!(nan.iter().all(|v| v.is_nan()));
        let xs32: Vec<f32> = (-50..=50).map(|i| i as f32 * 0.9).collect();
        let mut ys32 = xs32.clone();
        f32::sigmoid_in_place(&mut ys32);
        for (x, y) in xs32.iter().zip(&ys32) {
            assert!((x.sigmoid() - y).abs() <= 8.0 * f32::EPSILON * x.sigmoid(), "{x}");
        }
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-30.0f64, -2.0, 0.0, 0.5, 3.0, 30.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((x.softplus() - naive).abs() < 1e-12);
        }
        assert_eq!(1000.0f64.softplus(), 1000.0);
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert!((log_add_exp(0.0f64, 0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert!((log_add_exp(1000.0f64, 1000.0) - (1000.0 + 2.0f64.ln())).abs() < 1e-12);
    }
}
