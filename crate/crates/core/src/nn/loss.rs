use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
}

impl LossKind {
    pub fn value<T: Real>(self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
        match self {
            LossKind::Mse => mse_loss(pred, target),
            LossKind::Mae => mae_loss(pred, target),
        }
    }

    pub fn grad<T: Real>(self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            LossKind::Mse => mse_grad(pred, target),
            LossKind::Mae => mae_grad(pred, target),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected mse or mae)"
            ))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        })
    }
}

fn mean_of<T: Real>(
    op: &'static str,
    pred: &Tensor<T>,
    target: &Tensor<T>,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    target.expect_shape(op, pred.shape())?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| f(p.to_f64().unwrap() - t.to_f64().unwrap()))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean squared error over all elements, accumulated in f64.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    mean_of("mse", pred, target, |d| d * d)
}

pub fn mae_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    mean_of("mae", pred, target, f64::abs)
}

/// `2·(pred − target) / N`
pub fn mse_grad<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    target.expect_shape("mse grad", pred.shape())?;
    let k = T::of(2.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| k * (p - t))
        .collect();
    Tensor::new(pred.shape().to_vec(), data)
}

/// `sign(pred − target) / N`, with zero at equality.
pub fn mae_grad<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    target.expect_shape("mae grad", pred.shape())?;
    let k = T::of(1.0 / pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if p > t {
                k
            } else if p < t {
                -k
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::new(pred.shape().to_vec(), data)
}
