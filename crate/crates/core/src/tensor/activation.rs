use super::{Real, Tensor};
use crate::error::{Error, Result};

fn check_slope<T: Real>(slope: T) -> Result<()> {
    if !(slope > T::zero() && slope < T::one()) {
        return Err(Error::invalid(format!("leaky relu slope must lie in (0, 1), got {slope}")));
    }
    Ok(())
}

pub fn leaky_relu_forward<T: Real>(x: &Tensor<T>, slope: T) -> Result<Tensor<T>> {
    check_slope(slope)?;
    Ok(x.map(|v| if v >= T::zero() { v } else { slope * v }))
}

/// The derivative at exactly zero is taken as 1.
pub fn leaky_relu_backward<T: Real>(x: &Tensor<T>, slope: T, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    check_slope(slope)?;
    grad_out.expect_shape("leaky_relu_backward", x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v >= T::zero() { g } else { slope * g })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Backward of [`sigmoid`] given its output `y`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape("sigmoid_backward", y.shape())?;
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| g * p * (T::one() - p))
        .collect();
    Tensor::from_vec(y.shape(), data)
}
