use crate::error::Result;
use crate::nn::tensor::{Real, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { slope * v })
}

/// Logistic function, clamped so the result stays strictly inside (0, 1)
/// even where the exact value rounds to 0 or 1.
pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / (T::one() + T::one());
    x.map(|v| {
        let s = if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        };
        s.max(lo).min(hi)
    })
}

pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    gate(x, grad_out, "relu backward", |v| {
        if v > T::zero() {
            T::one()
        } else {
            T::zero()
        }
    })
}

pub fn leaky_relu_backward<T: Real>(
    x: &Tensor<T>,
    slope: T,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    gate(x, grad_out, "leaky_relu backward", |v| {
        if v > T::zero() {
            T::one()
        } else {
            slope
        }
    })
}

/// Takes the forward *output* `y`, since σ' = y(1 − y).
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    gate(y, grad_out, "sigmoid backward", |s| s * (T::one() - s))
}

fn gate<T: Real>(
    x: &Tensor<T>,
    g: &Tensor<T>,
    op: &'static str,
    d: impl Fn(T) -> T,
) -> Result<Tensor<T>> {
    g.expect_shape(op, x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &gv)| d(v) * gv)
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}
