use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::arch::ArchSpec;
use crate::nn::{ConvParams, GradPair, Layer, LinearParams, LossKind, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Encoder,
    Decoder,
}

/// A named group of layers. Reshape-only blocks (flatten, unflatten) are
/// carried for shape bookkeeping but do not count toward network depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T = f32> {
    pub name: String,
    pub side: Side,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Block<T> {
    pub fn is_counted(&self) -> bool {
        !self
            .layers
            .iter()
            .all(|l| matches!(l, Layer::Flatten | Layer::Unflatten { .. }))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut layers = self.layers.iter();
        let first = layers.next().expect("blocks are never empty");
        let mut y = first.forward(x)?;
        for l in layers {
            y = l.forward(&y)?;
        }
        Ok(y)
    }
}

/// Sequential convolutional autoencoder with a low-dimensional bottleneck.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<T = f32> {
    pub input_shape: Vec<usize>,
    pub blocks: Vec<Block<T>>,
}

/// Forward activations kept for one backward pass.
pub struct Trace<T> {
    pairs: Vec<GradPair<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.pairs.last().expect("trace is never empty").value
    }
}

impl<T: Real> Autoencoder<T> {
    /// Builds the network for `arch` with seeded initialization: Kaiming
    /// uniform for layers feeding (Leaky)ReLU, Xavier uniform for the final
    /// sigmoid layer, zero biases. Every parameterized layer draws from its
    /// own ChaCha stream, so adding a layer does not perturb the others.
    pub fn build(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let slope = T::of(arch.leaky_slope);
        let side = arch.input_side;
        let input_shape = vec![arch.channels[0], side, side];
        let mut blocks = Vec::new();
        let mut push = |name: String, side: Side, layers: Vec<Layer<T>>| {
            blocks.push(Block { name, side, layers })
        };

        let pad = arch.kernel / 2;
        for (i, (ch, &pool)) in arch.channels.windows(2).zip(&arch.pools).enumerate() {
            push(
                format!("conv{}", i + 1),
                Side::Encoder,
                vec![
                    Layer::Conv(ConvParams::conv(ch[0], ch[1], arch.kernel, pad, 1)?),
                    Layer::Relu,
                    Layer::MaxPool { window: pool },
                ],
            );
        }
        push("flatten".into(), Side::Encoder, vec![Layer::Flatten]);

        let flat = arch.flat_size();
        let mut widths = vec![flat];
        widths.extend(&arch.linear);
        for (i, w) in widths.windows(2).enumerate() {
            push(
                format!("enc_linear{}", i + 1),
                Side::Encoder,
                vec![
                    Layer::Linear(LinearParams::zeros(w[0], w[1])),
                    Layer::LeakyRelu { slope },
                ],
            );
        }
        let n_linear = widths.len() - 1;
        for (i, w) in widths.windows(2).rev().enumerate() {
            let last_overall = !arch.is_convolutional() && i + 1 == n_linear;
            let act = if last_overall {
                Layer::Sigmoid
            } else {
                Layer::LeakyRelu { slope }
            };
            push(
                format!("dec_linear{}", i + 1),
                Side::Decoder,
                vec![Layer::Linear(LinearParams::zeros(w[1], w[0])), act],
            );
        }
        let feature_shape = if arch.is_convolutional() {
            arch.feature_shape()
        } else {
            input_shape.clone()
        };
        push(
            "unflatten".into(),
            Side::Decoder,
            vec![Layer::Unflatten {
                shape: feature_shape,
            }],
        );
        let n_conv = arch.pools.len();
        for (i, (ch, &pool)) in arch
            .channels
            .windows(2)
            .rev()
            .zip(arch.pools.iter().rev())
            .enumerate()
        {
            let act = if i + 1 == n_conv {
                Layer::Sigmoid
            } else {
                Layer::Relu
            };
            push(
                format!("tconv{}", i + 1),
                Side::Decoder,
                vec![
                    Layer::ConvTranspose(ConvParams::transpose(ch[1], ch[0], pool, 0, pool)?),
                    act,
                ],
            );
        }

        let mut model = Self {
            input_shape,
            blocks,
        };
        model.initialize(seed);
        model.validate()?;
        Ok(model)
    }

    fn initialize(&mut self, seed: u64) {
        let mut stream = 0u64;
        for block in &mut self.blocks {
            let sigmoid_follows = block.layers.iter().any(|l| matches!(l, Layer::Sigmoid));
            for layer in &mut block.layers {
                let (fan_in, fan_out) = match layer {
                    Layer::Conv(p) => {
                        let s = p.kernels.shape();
                        (s[1] * s[2] * s[3], s[0] * s[2] * s[3])
                    }
                    Layer::ConvTranspose(p) => {
                        // Taps reaching one output pixel from each input channel.
                        let s = p.kernels.shape();
                        let taps = p.kernel_size().div_ceil(p.stride).pow(2);
                        (s[0] * taps, s[1] * taps)
                    }
                    Layer::Linear(p) => (p.in_features(), p.out_features()),
                    _ => continue,
                };
                let bound = if sigmoid_follows {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                stream += 1;
                let mut params = layer.params_mut();
                for v in params[0].data_mut() {
                    *v = T::of(rng.gen_range(-bound..bound));
                }
                for v in params[1].data_mut() {
                    *v = T::zero();
                }
            }
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.blocks.iter().flat_map(|b| &b.layers)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.blocks
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut())
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.parameter_count()).sum()
    }

    pub fn counted_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_counted()).count()
    }

    /// Index of the first decoder block; everything before it is the encoder.
    pub fn bottleneck(&self) -> usize {
        self.blocks
            .iter()
            .position(|b| b.side == Side::Decoder)
            .unwrap_or(self.blocks.len())
    }

    /// Output shape of every block, in order, for a canonical input.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            for l in &b.layers {
                shape = l.output_shape(&shape)?;
            }
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Checks that the blocks form an encoder followed by a decoder that
    /// maps a rank-1 code back to the input shape.
    pub fn validate(&self) -> Result<()> {
        let trace = self.shape_trace()?;
        let split = self.bottleneck();
        let bad = |m: String| Err(Error::shape("autoencoder", m));
        if split == 0 || split == self.blocks.len() {
            return bad("needs both encoder and decoder blocks".into());
        }
        if self.blocks[split..].iter().any(|b| b.side != Side::Decoder) {
            return bad("encoder and decoder blocks are interleaved".into());
        }
        if trace[split - 1].len() != 1 {
            return bad(format!("code shape {:?} is not a vector", trace[split - 1]));
        }
        if trace.last() != Some(&self.input_shape) {
            return bad(format!(
                "output {:?} differs from input {:?}",
                trace.last(),
                self.input_shape
            ));
        }
        Ok(())
    }

    pub fn code_size(&self) -> usize {
        self.shape_trace().expect("validated at build")[self.bottleneck() - 1][0]
    }

    fn run_blocks(&self, range: std::ops::Range<usize>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.clone();
        for b in &self.blocks[range] {
            y = b.forward(&y)?;
            if !y.all_finite() {
                return Err(Error::NumericFault {
                    block: b.name.clone(),
                });
            }
        }
        Ok(y)
    }

    pub fn encode(&self, tile: &Tensor<T>) -> Result<Tensor<T>> {
        tile.expect_shape("encode", &self.input_shape)?;
        self.run_blocks(0..self.bottleneck(), tile)
    }

    pub fn decode(&self, code: &Tensor<T>) -> Result<Tensor<T>> {
        code.expect_shape("decode", &[self.code_size()])?;
        self.run_blocks(self.bottleneck()..self.blocks.len(), code)
    }

    pub fn reconstruct(&self, tile: &Tensor<T>) -> Result<Tensor<T>> {
        tile.expect_shape("reconstruct", &self.input_shape)?;
        self.run_blocks(0..self.blocks.len(), tile)
    }

    /// Full forward pass keeping every layer's saved state.
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<Trace<T>> {
        x.expect_shape("forward", &self.input_shape)?;
        let mut pairs: Vec<GradPair<T>> = Vec::new();
        for b in &self.blocks {
            for l in &b.layers {
                let input = pairs.last().map_or(x, |p| &p.value);
                pairs.push(l.forward_pair(input)?);
            }
            if !pairs.last().unwrap().value.all_finite() {
                return Err(Error::NumericFault {
                    block: b.name.clone(),
                });
            }
        }
        Ok(Trace { pairs })
    }

    /// Parameter gradients, in [`Autoencoder::params`] order, for an output
    /// cotangent.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let layers: Vec<&Layer<T>> = self.layers().collect();
        let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); layers.len()];
        let mut g = grad_out.clone();
        for (i, layer) in layers.iter().enumerate().rev() {
            let grads = layer.backward(&trace.pairs[i], &g)?;
            per_layer[i] = grads.params;
            g = grads.input;
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Reconstruction loss of one tile and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        tile: &Tensor<T>,
        loss: LossKind,
    ) -> Result<(f64, Vec<Tensor<T>>)> {
        let trace = self.forward_trace(tile)?;
        let value = loss.value(trace.output(), tile)?;
        let g = loss.grad(trace.output(), tile)?;
        Ok((value, self.backward(&trace, &g)?))
    }

    pub fn cast<U: Real>(&self) -> Autoencoder<U> {
        Autoencoder {
            input_shape: self.input_shape.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    name: b.name.clone(),
                    side: b.side,
                    layers: b.layers.iter().map(|l| l.cast()).collect(),
                })
                .collect(),
        }
    }
}

/// Fraction of units in one activation layer whose local derivative was
/// exactly zero on every probe tile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeadUnits {
    pub block: String,
    pub activation: &'static str,
    pub units: usize,
    pub dead: usize,
    pub fraction: f64,
}

impl<T: Real> Autoencoder<T> {
    pub fn dead_unit_report(&self, tiles: &[Tensor<T>]) -> Result<Vec<DeadUnits>> {
        if tiles.is_empty() {
            return Err(Error::Empty("dead-unit probe needs at least one tile"));
        }
        let mut alive: Vec<Vec<bool>> = Vec::new();
        for tile in tiles {
            tile.expect_shape("dead_unit_report", &self.input_shape)?;
            let mut x = tile.clone();
            let mut slot = 0;
            for layer in self.layers() {
                let y = layer.forward(&x)?;
                if layer.is_activation() {
                    if alive.len() <= slot {
                        alive.push(vec![false; y.len()]);
                    }
                    for (a, &v) in alive[slot].iter_mut().zip(x.data()) {
                        // ReLU has zero derivative for v <= 0; LeakyReLU and
                        // sigmoid never do.
                        *a |= !matches!(layer, Layer::Relu) || v > T::zero();
                    }
                    slot += 1;
                }
                x = y;
            }
        }
        let mut report = Vec::new();
        let mut slot = 0;
        for b in &self.blocks {
            for l in b.layers.iter().filter(|l| l.is_activation()) {
                let units = alive[slot].len();
                let dead = alive[slot].iter().filter(|&&a| !a).count();
                report.push(DeadUnits {
                    block: b.name.clone(),
                    activation: l.name(),
                    units,
                    dead,
                    fraction: dead as f64 / units as f64,
                });
                slot += 1;
            }
        }
        Ok(report)
    }
}

/// Draws a random tile in `[0, 1]` for probing and tests.
pub fn random_tile<T: Real>(shape: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.gen::<f64>()))
}
