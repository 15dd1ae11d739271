mod common;

use common::*;

use cishmap::nn::{
    conv2d_forward, conv_output_extent, conv_transpose2d_forward, conv_transpose_output_extent,
    mse_grad, ConvParams, Layer, Real, Tensor,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_below(errors: &[(&str, f64)], tol: f64) {
    for (name, err) in errors {
        assert!(*err < tol, "{name}: relative error {err:e}");
    }
}

#[test]
fn layer_gradients_match_finite_differences_f32() {
    let errors = layer_errors::<f32>(1e-3);
    assert_eq!(errors.len(), 7);
    assert_below(&errors, 1e-3);
}

#[test]
fn layer_gradients_match_finite_differences_f64() {
    assert_below(&layer_errors::<f64>(1e-5), 1e-6);
}

#[test]
fn loss_gradients_match_finite_differences() {
    assert_below(&loss_errors::<f32>(1e-3), 1e-3);
    assert_below(&loss_errors::<f64>(1e-5), 1e-6);
}

#[test]
fn mse_gradient_closed_form() {
    let pred = Tensor::<f64>::vector(vec![0.0, 0.5, 2.0]);
    let target = Tensor::vector(vec![1.0, 0.5, -1.0]);
    let g = mse_grad(&pred, &target).unwrap();
    let expected = [2.0 * -1.0 / 3.0, 0.0, 2.0 * 3.0 / 3.0];
    for (a, b) in g.data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn zero_bias<T: Real>(p: &mut ConvParams<T>) {
    p.bias = Tensor::zeros(p.bias.shape());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_and_transpose_are_adjoint(
        cin in 1usize..4, cout in 1usize..4, k in 1usize..5, stride in 1usize..4,
        extra_h in 0usize..6, extra_w in 0usize..6, seed in any::<u64>(), pad_frac in 0.0f64..1.0,
    ) {
        let pad = ((k as f64) * pad_frac) as usize;
        let pad = pad.min(k - 1);
        // Input extents for which the transpose maps the conv output back
        // onto exactly the same extent.
        let h = k + stride * extra_h - 2 * pad.min((k + stride * extra_h) / 2);
        let w = k + stride * extra_w - 2 * pad.min((k + stride * extra_w) / 2);
        prop_assume!(h >= 1 && w >= 1 && h + 2 * pad >= k && w + 2 * pad >= k);
        prop_assume!((h + 2 * pad - k) % stride == 0 && (w + 2 * pad - k) % stride == 0);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fwd = ConvParams::<f64>::conv(cin, cout, k, pad, stride).unwrap();
        fwd.kernels = uniform(fwd.kernels.shape(), -1.0, 1.0, &mut rng);
        zero_bias(&mut fwd);
        let mut adj = ConvParams::<f64>::transpose(cout, cin, k, pad, stride).unwrap();
        adj.kernels = fwd.kernels.clone();
        zero_bias(&mut adj);

        let x: Tensor<f64> = uniform(&[cin, h, w], -1.0, 1.0, &mut rng);
        let y = conv2d_forward(&x, &fwd).unwrap();
        let u: Tensor<f64> = uniform(y.shape(), -1.0, 1.0, &mut rng);
        let back = conv_transpose2d_forward(&u, &adj).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        let lhs = y.dot(&u).unwrap();
        let rhs = x.dot(&back).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(rhs.abs()).max(1e-12), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn shape_laws(
        c in 1usize..3, h in 1usize..12, w in 1usize..12, k in 1usize..5,
        pad in 0usize..3, stride in 1usize..4, window in 1usize..4,
    ) {
        let x = Tensor::<f32>::zeros(&[c, h, w]);
        let conv = ConvParams::<f32>::conv(c, 2, k, pad, stride).unwrap();
        match conv2d_forward(&x, &conv) {
            Ok(y) => {
                prop_assert!(h + 2 * pad >= k && w + 2 * pad >= k);
                prop_assert_eq!(y.shape(), &[2, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1][..]);
                prop_assert_eq!(conv_output_extent(h, k, pad, stride).unwrap(), y.shape()[1]);
            }
            Err(_) => prop_assert!(h + 2 * pad < k || w + 2 * pad < k),
        }

        let tconv = ConvParams::<f32>::transpose(c, 2, k, pad, stride).unwrap();
        let full_h = (h - 1) * stride + k;
        let full_w = (w - 1) * stride + k;
        match conv_transpose2d_forward(&x, &tconv) {
            Ok(y) => {
                prop_assert_eq!(y.shape(), &[2, full_h - 2 * pad, full_w - 2 * pad][..]);
                prop_assert_eq!(conv_transpose_output_extent(h, k, pad, stride).unwrap(), y.shape()[1]);
            }
            Err(_) => prop_assert!(full_h <= 2 * pad || full_w <= 2 * pad),
        }

        let pool = Layer::<f32>::MaxPool { window };
        match pool.forward(&x) {
            Ok(y) => prop_assert_eq!(y.shape(), &[c, h / window, w / window][..]),
            Err(_) => prop_assert!(h % window != 0 || w % window != 0),
        }
    }

    #[test]
    fn sigmoid_is_open_and_leaky_is_injective(a in -50.0f32..50.0, b in -50.0f32..50.0, slope in 0.001f32..1.0) {
        let s = Layer::<f32>::Sigmoid.forward(&Tensor::vector(vec![a])).unwrap().data()[0];
        prop_assert!(s > 0.0 && s < 1.0);
        let leaky = Layer::LeakyRelu { slope };
        let ya = leaky.forward(&Tensor::vector(vec![a])).unwrap().data()[0];
        let yb = leaky.forward(&Tensor::vector(vec![b])).unwrap().data()[0];
        if a < b {
            prop_assert!(ya < yb);
        }
    }
}

#[test]
fn sigmoid_output_stays_inside_unit_interval_in_f64() {
    let x = Tensor::<f64>::vector(vec![-30.0, -5.0, 0.0, 5.0, 30.0]);
    let y = Layer::Sigmoid.forward(&x).unwrap();
    assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(y.data()[2], 0.5);
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (layer, x) in instances::<f32>(&mut rng) {
        let a = layer.forward(&x).unwrap();
        let b = layer.forward(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn maxpool_gradient_goes_to_first_maximum_only() {
    let layer = Layer::<f32>::MaxPool { window: 2 };
    let x = Tensor::new(vec![1, 2, 2], vec![3.0, 3.0, 1.0, 3.0]).unwrap();
    let pair = layer.forward_pair(&x).unwrap();
    let g = layer
        .backward(&pair, &Tensor::new(vec![1, 1, 1], vec![5.0]).unwrap())
        .unwrap();
    assert_eq!(g.input.data(), &[5.0, 0.0, 0.0, 0.0]);
}
