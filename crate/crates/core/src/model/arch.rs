use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters that fix the layer layout of an autoencoder.
///
/// The encoder runs one `Conv(k, pad 1) + ReLU + MaxPool(pool)` block per
/// entry of `pools`, then `Linear + LeakyReLU` blocks down to the last entry
/// of `linear`. The decoder mirrors it: linear blocks back up to the flatten
/// size, then one transpose convolution per pool with kernel == stride ==
/// that pool size, so each one exactly undoes the matching downsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_side: usize,
    /// Channel counts from the input through every conv block, e.g. `[1, 4, 8, 16, 32]`.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pools: Vec<usize>,
    /// Widths of the encoder's linear blocks after flattening; the last one is the code size.
    pub linear: Vec<usize>,
    pub leaky_slope: f64,
}

impl ArchSpec {
    /// 300×300 single-channel tiles, four conv blocks (1→4→8→16→32, pools
    /// 2, 2, 3, 5), linear 800→100→25→2.
    pub fn standard() -> Self {
        Self {
            input_side: 300,
            channels: vec![1, 4, 8, 16, 32],
            kernel: 3,
            pools: vec![2, 2, 3, 5],
            linear: vec![100, 25, 2],
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Same block structure on a smaller tile. Pools are chosen so the side
    /// divides evenly; sides 64 and 30 are the usual desk-scale choices.
    pub fn reduced(side: usize) -> Result<Self> {
        let pools = match side {
            300 => vec![2, 2, 3, 5],
            64 => vec![2, 2, 2, 2],
            32 => vec![2, 2, 2, 2],
            30 => vec![2, 3, 5, 1],
            16 => vec![2, 2, 2, 1],
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "no pool plan for side {side}; build an ArchSpec by hand"
                )))
            }
        };
        let spec = Self {
            input_side: side,
            pools,
            ..Self::standard()
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear-only variant: the convolutional blocks are removed and the
    /// flattened tile feeds the linear stack directly.
    pub fn without_convolution(&self) -> Self {
        Self {
            channels: vec![self.channels[0]],
            pools: Vec::new(),
            ..self.clone()
        }
    }

    /// Shallow baseline with two conv and two linear blocks per side. The
    /// widths here are a guess at a smaller network, not a published layout.
    pub fn shallow(side: usize) -> Result<Self> {
        let pools = match side {
            300 => vec![5, 5],
            64 => vec![4, 4],
            30 => vec![3, 5],
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "no shallow plan for side {side}"
                )))
            }
        };
        let spec = Self {
            input_side: side,
            channels: vec![1, 4, 8],
            kernel: 3,
            pools,
            linear: vec![25, 2],
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn is_convolutional(&self) -> bool {
        !self.pools.is_empty()
    }

    pub fn code_size(&self) -> usize {
        *self
            .linear
            .last()
            .expect("validated arch has linear blocks")
    }

    /// Shape right before flattening.
    pub fn feature_shape(&self) -> Vec<usize> {
        let side = self.input_side / self.pools.iter().product::<usize>();
        vec![*self.channels.last().unwrap(), side, side]
    }

    pub fn flat_size(&self) -> usize {
        self.feature_shape().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.channels.len() != self.pools.len() + 1 {
            return bad(format!(
                "{} channel entries for {} conv blocks",
                self.channels.len(),
                self.pools.len()
            ));
        }
        if self.input_side == 0 || self.kernel == 0 || self.kernel % 2 == 0 {
            return bad("input side must be positive and kernel odd".into());
        }
        if self
            .channels
            .iter()
            .chain(&self.pools)
            .chain(&self.linear)
            .any(|&v| v == 0)
        {
            return bad("zero channel, pool or width".into());
        }
        let reduction: usize = self.pools.iter().product();
        if self.input_side % reduction != 0 {
            return bad(format!(
                "side {} is not divisible by pooling factor {reduction}",
                self.input_side
            ));
        }
        if self.linear.is_empty() {
            return bad("at least one linear block is required".into());
        }
        if !(self.leaky_slope > 0.0) {
            return bad("leaky slope must be positive".into());
        }
        Ok(())
    }
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self::standard()
    }
}
