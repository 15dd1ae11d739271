use crate::error::{Error, Result};
use crate::nn::activation::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, sigmoid_backward,
};
use crate::nn::conv::{
    conv2d_backward, conv2d_forward, conv_output_extent, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose_output_extent, ConvParams,
};
use crate::nn::linear::{linear_backward, linear_forward, LinearParams};
use crate::nn::pool::{maxpool2d_backward, maxpool2d_forward};
use crate::nn::tensor::{Real, Tensor};

/// One differentiable stage of a sequential network.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T = f32> {
    Conv(ConvParams<T>),
    ConvTranspose(ConvParams<T>),
    MaxPool { window: usize },
    Linear(LinearParams<T>),
    Relu,
    LeakyRelu { slope: T },
    Sigmoid,
    Flatten,
    Unflatten { shape: Vec<usize> },
}

/// Whatever the backward pass of a layer needs from its forward pass.
#[derive(Clone, Debug)]
enum Saved<T> {
    Input(Tensor<T>),
    Output,
    Argmax {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Shape(Vec<usize>),
}

/// A forward value together with what is needed to pull a cotangent back
/// through the layer that produced it.
#[derive(Clone, Debug)]
pub struct GradPair<T = f32> {
    pub value: Tensor<T>,
    saved: Saved<T>,
}

/// Cotangents of one layer: with respect to its input, and to each of its
/// parameter tensors in [`Layer::params`] order.
#[derive(Clone, Debug)]
pub struct LayerGrads<T = f32> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
}

impl<T: Real> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "Conv2d",
            Layer::ConvTranspose(_) => "ConvTranspose2d",
            Layer::MaxPool { .. } => "MaxPool2d",
            Layer::Linear(_) => "Linear",
            Layer::Relu => "ReLU",
            Layer::LeakyRelu { .. } => "LeakyReLU",
            Layer::Sigmoid => "Sigmoid",
            Layer::Flatten => "Flatten",
            Layer::Unflatten { .. } => "Unflatten",
        }
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, Layer::Relu | Layer::LeakyRelu { .. } | Layer::Sigmoid)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(p) | Layer::ConvTranspose(p) => vec![&p.kernels, &p.bias],
            Layer::Linear(p) => vec![&p.weight, &p.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(p) | Layer::ConvTranspose(p) => vec![&mut p.kernels, &mut p.bias],
            Layer::Linear(p) => vec![&mut p.weight, &mut p.bias],
            _ => Vec::new(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Shape this layer produces for a given input shape, without running it.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |op: &'static str, ch: usize| -> Result<(usize, usize)> {
            if input.len() != 3 || input[0] != ch {
                return Err(Error::dim(op, format!("[{ch}, H, W]"), input));
            }
            Ok((input[1], input[2]))
        };
        match self {
            Layer::Conv(p) => {
                let s = p.kernels.shape();
                let (h, w) = spatial("conv2d", s[1])?;
                Ok(vec![
                    s[0],
                    conv_output_extent(h, s[2], p.padding, p.stride)?,
                    conv_output_extent(w, s[2], p.padding, p.stride)?,
                ])
            }
            Layer::ConvTranspose(p) => {
                let s = p.kernels.shape();
                let (h, w) = spatial("conv_transpose2d", s[0])?;
                Ok(vec![
                    s[1],
                    conv_transpose_output_extent(h, s[2], p.padding, p.stride)?,
                    conv_transpose_output_extent(w, s[2], p.padding, p.stride)?,
                ])
            }
            Layer::MaxPool { window } => {
                if *window == 0
                    || input.len() != 3
                    || input[1] % window != 0
                    || input[2] % window != 0
                {
                    return Err(Error::shape(
                        "maxpool2d",
                        format!("{input:?} is not divisible by window {window}"),
                    ));
                }
                Ok(vec![input[0], input[1] / window, input[2] / window])
            }
            Layer::Linear(p) => {
                if input != [p.in_features()] {
                    return Err(Error::dim("linear", [p.in_features()], input));
                }
                Ok(vec![p.out_features()])
            }
            Layer::Relu | Layer::LeakyRelu { .. } | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Unflatten { shape } => {
                if input.iter().product::<usize>() != shape.iter().product::<usize>() {
                    return Err(Error::dim("unflatten", shape, input));
                }
                Ok(shape.clone())
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(p) => conv2d_forward(x, p),
            Layer::ConvTranspose(p) => conv_transpose2d_forward(x, p),
            Layer::MaxPool { window } => Ok(maxpool2d_forward(x, *window)?.value),
            Layer::Linear(p) => linear_forward(x, p),
            Layer::Relu => Ok(relu(x)),
            Layer::LeakyRelu { slope } => Ok(leaky_relu(x, *slope)),
            Layer::Sigmoid => Ok(sigmoid(x)),
            Layer::Flatten => x.clone().reshape(&[x.len()]),
            Layer::Unflatten { shape } => x.clone().reshape(shape),
        }
    }

    /// Forward pass that keeps what [`Layer::backward`] needs.
    pub fn forward_pair(&self, x: &Tensor<T>) -> Result<GradPair<T>> {
        let (value, saved) = match self {
            Layer::MaxPool { window } => {
                let pooled = maxpool2d_forward(x, *window)?;
                let saved = Saved::Argmax {
                    input_shape: x.shape().to_vec(),
                    argmax: pooled.argmax,
                };
                (pooled.value, saved)
            }
            Layer::Sigmoid => (sigmoid(x), Saved::Output),
            Layer::Flatten | Layer::Unflatten { .. } => {
                (self.forward(x)?, Saved::Shape(x.shape().to_vec()))
            }
            _ => (self.forward(x)?, Saved::Input(x.clone())),
        };
        Ok(GradPair { value, saved })
    }

    /// Vector-Jacobian product through this layer.
    pub fn backward(&self, pair: &GradPair<T>, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        grad_out.expect_shape("backward", pair.value.shape())?;
        let no_params = |input| LayerGrads {
            input,
            params: Vec::new(),
        };
        match (self, &pair.saved) {
            (Layer::Conv(p), Saved::Input(x)) => {
                let g = conv2d_backward(x, p, grad_out)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.kernels, g.bias],
                })
            }
            (Layer::ConvTranspose(p), Saved::Input(x)) => {
                let g = conv_transpose2d_backward(x, p, grad_out)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.kernels, g.bias],
                })
            }
            (Layer::Linear(p), Saved::Input(x)) => {
                let g = linear_backward(x, p, grad_out)?;
                Ok(LayerGrads {
                    input: g.input,
                    params: vec![g.weight, g.bias],
                })
            }
            (
                Layer::MaxPool { .. },
                Saved::Argmax {
                    input_shape,
                    argmax,
                },
            ) => Ok(no_params(maxpool2d_backward(
                input_shape,
                argmax,
                grad_out,
            )?)),
            (Layer::Relu, Saved::Input(x)) => Ok(no_params(relu_backward(x, grad_out)?)),
            (Layer::LeakyRelu { slope }, Saved::Input(x)) => {
                Ok(no_params(leaky_relu_backward(x, *slope, grad_out)?))
            }
            (Layer::Sigmoid, Saved::Output) => {
                Ok(no_params(sigmoid_backward(&pair.value, grad_out)?))
            }
            (Layer::Flatten | Layer::Unflatten { .. }, Saved::Shape(shape)) => {
                Ok(no_params(grad_out.clone().reshape(shape)?))
            }
            _ => Err(Error::shape(
                "backward",
                format!(
                    "cached forward state does not belong to a {} layer",
                    self.name()
                ),
            )),
        }
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        let conv = |p: &ConvParams<T>| ConvParams {
            kernels: p.kernels.cast(),
            bias: p.bias.cast(),
            padding: p.padding,
            stride: p.stride,
        };
        match self {
            Layer::Conv(p) => Layer::Conv(conv(p)),
            Layer::ConvTranspose(p) => Layer::ConvTranspose(conv(p)),
            Layer::MaxPool { window } => Layer::MaxPool { window: *window },
            Layer::Linear(p) => Layer::Linear(LinearParams {
                weight: p.weight.cast(),
                bias: p.bias.cast(),
            }),
            Layer::Relu => Layer::Relu,
            Layer::LeakyRelu { slope } => Layer::LeakyRelu {
                slope: U::of(slope.to_f64().unwrap()),
            },
            Layer::Sigmoid => Layer::Sigmoid,
            Layer::Flatten => Layer::Flatten,
            Layer::Unflatten { shape } => Layer::Unflatten {
                shape: shape.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_mismatched_cotangent() {
        let layer = Layer::<f32>::Relu;
        let pair = layer.forward_pair(&Tensor::zeros(&[3])).unwrap();
        assert!(layer.backward(&pair, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let pair = Layer::<f32>::Sigmoid
            .forward_pair(&Tensor::zeros(&[3]))
            .unwrap();
        let linear = Layer::Linear(LinearParams::zeros(3, 3));
        assert!(linear.backward(&pair, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn output_shape_matches_forward() {
        let layers: Vec<Layer<f32>> = vec![
            Layer::Conv(ConvParams::conv(1, 2, 3, 1, 1).unwrap()),
            Layer::MaxPool { window: 2 },
            Layer::Flatten,
            Layer::Unflatten {
                shape: vec![2, 3, 3],
            },
            Layer::ConvTranspose(ConvParams::transpose(2, 1, 2, 0, 2).unwrap()),
        ];
        let mut x = Tensor::zeros(&[1, 6, 6]);
        for l in &layers {
            let predicted = l.output_shape(x.shape()).unwrap();
            x = l.forward(&x).unwrap();
            assert_eq!(predicted, x.shape());
        }
    }
}
