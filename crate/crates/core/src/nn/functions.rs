//! Scalar activations and losses shared by the graph and by plain
//! evaluation code.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Logistic function, evaluated on the branch that never overflows.
///
/// The result is kept strictly inside (0, 1) even where the exact value
/// rounds to an endpoint.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    y.max(T::min_positive_value()).min(T::one() - T::epsilon() / T::lit(2.0))
}

/// Clamp applied to probabilities before taking logarithms.
#[inline]
pub fn prob_clamp<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon())
}

/// Binary cross entropy `-[b ln a + (1 - b) ln(1 - a)]`.
pub fn bce_loss<T: Scalar>(a: T, b: T) -> Result<T> {
    let unit = |v: T| v >= T::zero() && v <= T::one();
    if !unit(a) || !unit(b) {
        return Err(Error::InvalidArgument(format!("bce expects prediction and target in [0, 1], got a={a}, b={b}")));
    }
    Ok(bce_unchecked(a, b))
}

#[inline]
pub(crate) fn bce_unchecked<T: Scalar>(a: T, b: T) -> T {
    let eps = prob_clamp::<T>();
    let a = a.max(eps).min(T::one() - eps);
    -(b * a.ln() + (T::one() - b) * (T::one() - a).ln())
}

/// Mean of squared differences over all entries.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    pred.check_same_shape(target)?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of empty tensors".into()));
    }
    let s = pred.data().iter().zip(target.data()).fold(T::zero(), |acc, (&p, &t)| acc + (p - t) * (p - t));
    Ok(s / T::lit(pred.len() as f64))
}
