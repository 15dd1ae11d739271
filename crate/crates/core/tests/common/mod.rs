//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use cishmap::fcm::Matrix;
use cishmap::nn::{
    mae_grad, mae_loss, mse_grad, mse_loss, ConvParams, Layer, LinearParams, Real, Tensor,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 20;

pub fn uniform<T: Real>(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(lo..hi)))
}

/// Values whose magnitude stays at least `gap` away from zero, so a finite
/// difference step never crosses a ReLU kink.
pub fn away_from_zero<T: Real>(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(gap..1.0);
        T::of(if rng.gen_bool(0.5) { m } else { -m })
    })
}

/// Distinct values on a 0.01 grid in random order: every pooling window has a
/// unique maximum that a small step cannot overtake.
pub fn distinct<T: Real>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    Tensor::new(
        shape.to_vec(),
        v.into_iter()
            .map(|i| T::of(i as f64 * 0.01 - 0.3))
            .collect(),
    )
    .unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn to_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64().unwrap()).collect()
}

pub fn nudge<T: Real>(layer: &Layer<T>, k: usize, i: usize, delta: T) -> Layer<T> {
    let mut l = layer.clone();
    let mut params = l.params_mut();
    let v = &mut params[k].data_mut()[i];
    *v = *v + delta;
    drop(params);
    l
}

/// Relative error between the analytic and central-difference gradients of
/// `<layer(x), u>`, taken over the input and all parameter entries together.
pub fn layer_check<T: Real>(layer: &Layer<T>, x: &Tensor<T>, h: f64, rng: &mut impl Rng) -> f64 {
    let y = layer.forward(x).unwrap();
    let u: Tensor<T> = uniform(y.shape(), -1.0, 1.0, rng);
    let objective = |l: &Layer<T>, x: &Tensor<T>| l.forward(x).unwrap().dot(&u).unwrap();

    let pair = layer.forward_pair(x).unwrap();
    let grads = layer.backward(&pair, &u).unwrap();
    let hh = T::of(h);

    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] = xp.data()[i] + hh;
        xm.data_mut()[i] = xm.data()[i] - hh;
        numeric.push((objective(layer, &xp) - objective(layer, &xm)) / (2.0 * h));
    }
    let mut analytic = to_f64(&grads.input);

    assert_eq!(grads.params.len(), layer.params().len());
    for (k, g) in grads.params.iter().enumerate() {
        analytic.extend(to_f64(g));
        for i in 0..g.len() {
            let (lp, lm) = (nudge(layer, k, i, hh), nudge(layer, k, i, -hh));
            numeric.push((objective(&lp, x) - objective(&lm, x)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric)
}

pub fn random_conv<T: Real>(transpose: bool, rng: &mut impl Rng) -> (Layer<T>, Vec<usize>) {
    let cin = rng.gen_range(1..4);
    let cout = rng.gen_range(1..4);
    let k = rng.gen_range(1..4);
    let stride = rng.gen_range(1..3);
    let pad = rng.gen_range(0..k);
    let mut p = if transpose {
        ConvParams::transpose(cin, cout, k, pad, stride).unwrap()
    } else {
        ConvParams::conv(cin, cout, k, pad, stride).unwrap()
    };
    p.kernels = uniform(p.kernels.shape(), -1.0, 1.0, rng);
    p.bias = uniform(p.bias.shape(), -0.5, 0.5, rng);
    let lo = if transpose { 2 } else { k };
    let side = rng.gen_range(lo.max(2)..7);
    let layer = if transpose {
        Layer::ConvTranspose(p)
    } else {
        Layer::Conv(p)
    };
    (layer, vec![cin, side, side + 1])
}

/// Builds one random instance of each layer type together with an input.
pub fn instances<T: Real>(rng: &mut impl Rng) -> Vec<(Layer<T>, Tensor<T>)> {
    let mut out = Vec::new();

    let (n_in, n_out) = (rng.gen_range(1..9), rng.gen_range(1..9));
    let lin = LinearParams::new(
        uniform(&[n_out, n_in], -1.0, 1.0, rng),
        uniform(&[n_out], -1.0, 1.0, rng),
    )
    .unwrap();
    out.push((Layer::Linear(lin), uniform(&[n_in], -1.0, 1.0, rng)));

    for transpose in [false, true] {
        let (layer, shape) = random_conv(transpose, rng);
        let x = uniform(&shape, -1.0, 1.0, rng);
        out.push((layer, x));
    }

    let window = rng.gen_range(1..4);
    let c = rng.gen_range(1..3);
    out.push((
        Layer::MaxPool { window },
        distinct(&[c, window * 2, window * 3], rng),
    ));

    let shape = [rng.gen_range(1..4), rng.gen_range(1..5)];
    out.push((Layer::Relu, away_from_zero(&shape, 0.05, rng)));
    out.push((
        Layer::LeakyRelu {
            slope: T::of(rng.gen_range(0.01..0.5)),
        },
        away_from_zero(&shape, 0.05, rng),
    ));
    out.push((Layer::Sigmoid, uniform(&shape, -4.0, 4.0, rng)));
    out
}

/// Worst relative error per layer type over [`SEEDS`] random instances.
pub fn layer_errors<T: Real>(h: f64) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, x) in instances::<T>(&mut rng) {
            let err = layer_check(&layer, &x, h, &mut rng);
            match worst.iter_mut().find(|(n, _)| *n == layer.name()) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((layer.name(), err)),
            }
        }
    }
    worst
}

pub type LossFn<T> = fn(&Tensor<T>, &Tensor<T>) -> cishmap::Result<f64>;
pub type GradFn<T> = fn(&Tensor<T>, &Tensor<T>) -> cishmap::Result<Tensor<T>>;

/// Worst relative error of a loss gradient over [`SEEDS`] random instances.
pub fn loss_error<T: Real>(loss: LossFn<T>, grad: GradFn<T>, h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let shape = [rng.gen_range(1..4), rng.gen_range(1..6)];
        let target: Tensor<T> = uniform(&shape, 0.0, 1.0, &mut rng);
        // Keep pred - target away from the MAE kink.
        let offset: Tensor<T> = away_from_zero(&shape, 0.05, &mut rng);
        let mut pred = target.clone();
        pred.add_assign(&offset).unwrap();

        let analytic = to_f64(&grad(&pred, &target).unwrap());
        let numeric: Vec<f64> = (0..pred.len())
            .map(|i| {
                let (mut p, mut m) = (pred.clone(), pred.clone());
                p.data_mut()[i] = p.data()[i] + T::of(h);
                m.data_mut()[i] = m.data()[i] - T::of(h);
                (loss(&p, &target).unwrap() - loss(&m, &target).unwrap()) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub fn loss_errors<T: Real>(h: f64) -> [(&'static str, f64); 2] {
    [
        ("mse", loss_error::<T>(mse_loss, mse_grad, h)),
        ("mae", loss_error::<T>(mae_loss, mae_grad, h)),
    ]
}

/// Textbook fuzzy c-means on nested vectors, run for a fixed number of sweeps.
pub fn naive_fcm(
    x: &[Vec<f64>],
    mut u: Vec<Vec<f64>>,
    m: f64,
    sweeps: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, c, d) = (x.len(), u[0].len(), x[0].len());
    let mut v = vec![vec![0.0; d]; c];
    for _ in 0..sweeps {
        for j in 0..c {
            let mut den = 0.0;
            let mut num = vec![0.0; d];
            for i in 0..n {
                let w = u[i][j].powf(m);
                den += w;
                for k in 0..d {
                    num[k] += w * x[i][k];
                }
            }
            v[j] = num.iter().map(|a| a / den).collect();
        }
        for i in 0..n {
            let dist: Vec<f64> = v
                .iter()
                .map(|vj| {
                    vj.iter()
                        .zip(&x[i])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            for j in 0..c {
                let mut s = 0.0;
                for k in 0..c {
                    s += (dist[j] / dist[k]).powf(2.0 / (m - 1.0));
                }
                u[i][j] = 1.0 / s;
            }
        }
    }
    (v, u)
}

pub fn random_points(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
        .collect()
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Brute-force triangle threshold: perpendicular distance in floating point
/// for every bin, scanning the whole range.
pub fn triangle_oracle(h: &[u64; 256]) -> u8 {
    let nonzero: Vec<usize> = (0..256).filter(|&b| h[b] > 0).collect();
    let (lo, hi) = (nonzero[0], *nonzero.last().unwrap());
    let max = *h.iter().max().unwrap();
    let peak = (0..256).find(|&b| h[b] == max).unwrap();
    if lo == hi {
        return lo as u8;
    }
    let tail = if peak - lo > hi - peak { lo } else { hi };
    let (x1, y1, x2, y2) = (peak as f64, h[peak] as f64, tail as f64, h[tail] as f64);
    let norm = ((y2 - y1).powi(2) + (x2 - x1).powi(2)).sqrt();
    let mut best = (0usize, f64::NEG_INFINITY);
    for b in 0..256 {
        if b < tail.min(peak) || b > tail.max(peak) {
            continue;
        }
        let d = ((y2 - y1) * b as f64 - (x2 - x1) * h[b] as f64 + x2 * y1 - y2 * x1).abs() / norm;
        if d > best.1 {
            best = (b, d);
        }
    }
    best.0 as u8
}
