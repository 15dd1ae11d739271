use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

/// Output of a max-pool pass: pooled values and, per output cell, the flat
/// index of the input element that won.
#[derive(Clone, Debug)]
pub struct Pooled<T = f32> {
    pub value: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Non-overlapping max pooling with window == stride. Ties go to the first
/// element in row-major scan order.
pub fn maxpool2d_forward<T: Real>(x: &Tensor<T>, window: usize) -> Result<Pooled<T>> {
    x.expect_rank("maxpool2d", 3)?;
    let (ch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::shape(
            "maxpool2d",
            format!("{h}x{w} input is not divisible by window {window}"),
        ));
    }
    let (oh, ow) = (h / window, w / window);
    let xs = x.data();
    let mut value = Vec::with_capacity(ch * oh * ow);
    let mut argmax = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (c * h + oy * window) * w + ox * window;
                for dy in 0..window {
                    let row = (c * h + oy * window + dy) * w + ox * window;
                    for i in row..row + window {
                        if xs[i] > xs[best] {
                            best = i;
                        }
                    }
                }
                value.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        value: Tensor::new(vec![ch, oh, ow], value)?,
        argmax,
    })
}

/// Routes each output cotangent to the recorded argmax element only.
pub fn maxpool2d_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::dim(
            "maxpool2d backward",
            argmax.len(),
            grad_out.shape(),
        ));
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] = d[i] + g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_four() {
        let x = Tensor::<f32>::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = maxpool2d_forward(&x, 2).unwrap();
        assert_eq!(p.value.shape(), &[1, 1, 1]);
        assert_eq!(p.value.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);
    }

    #[test]
    fn constant_image_shrinks() {
        let x = Tensor::<f32>::full(&[2, 6, 6], 0.25);
        let p = maxpool2d_forward(&x, 3).unwrap();
        assert_eq!(p.value.shape(), &[2, 2, 2]);
        assert!(p.value.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn ties_go_to_first_in_scan_order() {
        let x = Tensor::<f32>::new(vec![1, 2, 2], vec![1.0, 5.0, 5.0, 5.0]).unwrap();
        let p = maxpool2d_forward(&x, 2).unwrap();
        assert_eq!(p.argmax, vec![1]);
        let g = maxpool2d_backward(x.shape(), &p.argmax, &Tensor::full(&[1, 1, 1], 2.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn encoder_pool_chain() {
        let mut shape = vec![4usize, 300, 300];
        let mut expected = Vec::new();
        for (ch, win) in [(4, 2), (8, 2), (16, 3), (32, 5)] {
            shape[0] = ch;
            let x = Tensor::<f32>::zeros(&shape);
            shape = maxpool2d_forward(&x, win).unwrap().value.shape().to_vec();
            expected.push(shape.clone());
        }
        assert_eq!(
            expected,
            vec![
                vec![4, 150, 150],
                vec![8, 75, 75],
                vec![16, 25, 25],
                vec![32, 5, 5]
            ]
        );
    }

    #[test]
    fn non_divisible_extent_is_an_error() {
        let x = Tensor::<f32>::zeros(&[1, 5, 4]);
        assert!(matches!(maxpool2d_forward(&x, 2), Err(Error::Shape { .. })));
    }
}
