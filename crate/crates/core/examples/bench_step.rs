use std::time::Instant;

use cishmap::model::{random_tile, ArchSpec, Autoencoder};
use cishmap::nn::{LossKind, Tensor};
use rand::SeedableRng;

fn main() {
    let side: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().unwrap())
        .unwrap_or(300);
    let arch = ArchSpec::reduced(side).unwrap();
    let model = Autoencoder::<f32>::build(&arch, 1).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let tile = random_tile::<f32>(&model.input_shape, &mut rng);
    let t = Instant::now();
    let n = 5;
    for _ in 0..n {
        model.loss_and_grads(&tile, LossKind::Mse).unwrap();
    }
    println!(
        "{side}: {:.2} ms per sample fwd+bwd, {} params",
        t.elapsed().as_secs_f64() * 1e3 / n as f64,
        model.parameter_count()
    );
    let mut x = tile.clone();
    for layer in model.layers() {
        let t = Instant::now();
        let pair = layer.forward_pair(&x).unwrap();
        let f = t.elapsed();
        let g = Tensor::full(pair.value.shape(), 0.1f32);
        let t = Instant::now();
        layer.backward(&pair, &g).unwrap();
        println!(
            "{:>16} {:?} fwd {:?} bwd {:?}",
            layer.name(),
            pair.value.shape(),
            f,
            t.elapsed()
        );
        x = pair.value;
    }
}
