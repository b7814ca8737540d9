use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar the decoders, enumerators and regressions run on.
///
/// Implemented for every type meeting the bounds, in practice `f32` and `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// `ln(Σ exp(x_i))` without overflow; `-inf` for an empty or all `-inf` input.
pub(crate) fn log_sum_exp<T: Scalar>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_sum() {
        let xs = [0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        assert!((log_sum_exp(xs.iter().copied()) - 0.0).abs() < 1e-15);
        let empty: [f64; 0] = [];
        assert_eq!(log_sum_exp(empty.iter().copied()), f64::NEG_INFINITY);
        let f: [f32; 2] = [-1000.0, -1000.0];
        assert!((log_sum_exp(f.iter().copied()) - (-1000.0 + 2f32.ln())).abs() < 1e-3);
    }
}
