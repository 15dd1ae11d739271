use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Weight `[out, in]` and bias `[out]` of a fully connected layer, `y = x·Aᵀ + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LinearParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        weight.expect_rank("linear", 2)?;
        bias.expect_shape("linear bias", &[weight.shape()[0]])?;
        Ok(Self { weight, bias })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[n_out, n_in]),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != [self.in_features()] {
            return Err(Error::dim("linear", [self.in_features()], x.shape()));
        }
        Ok(())
    }
}

pub fn linear_forward<T: Real>(x: &Tensor<T>, p: &LinearParams<T>) -> Result<Tensor<T>> {
    p.check_input(x)?;
    let n_in = p.in_features();
    let w = p.weight.data();
    let xs = x.data();
    let out = p
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let row = &w[i * n_in..(i + 1) * n_in];
            row.iter().zip(xs).fold(b, |acc, (&a, &v)| acc + a * v)
        })
        .collect();
    Ok(Tensor::vector(out))
}

pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    p: &LinearParams<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    p.check_input(x)?;
    grad_out.expect_shape("linear backward", &[p.out_features()])?;
    let (n_in, n_out) = (p.in_features(), p.out_features());
    let w = p.weight.data();
    let g = grad_out.data();
    let xs = x.data();

    let mut input = vec![T::zero(); n_in];
    let mut weight = vec![T::zero(); n_out * n_in];
    for i in 0..n_out {
        let gi = g[i];
        let row = &w[i * n_in..(i + 1) * n_in];
        for (acc, &a) in input.iter_mut().zip(row) {
            *acc = *acc + a * gi;
        }
        for (dw, &v) in weight[i * n_in..(i + 1) * n_in].iter_mut().zip(xs) {
            *dw = gi * v;
        }
    }
    Ok(LinearGrads {
        input: Tensor::vector(input),
        weight: Tensor::new(vec![n_out, n_in], weight)?,
        bias: grad_out.clone(),
    })
}
