//! Binary model container.
//!
//! ```text
//! "CAE1"  u16 version
//! u8 input rank, u32 dims...
//! u16 block count
//!   per block: u8 side, u8 name length, name bytes, u8 layer count
//!     per layer: u8 type id, then
//!       conv / tconv: u32 x4 kernel dims, u32 padding, u32 stride
//!       maxpool:      u32 window
//!       linear:       u32 out, u32 in
//!       leaky relu:   f32 slope
//!       unflatten:    u8 rank, u32 dims...
//! parameter blobs, f32 little-endian, in table order (weights then bias)
//! ```
//! All integers are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::network::{Autoencoder, Block, Side};
use crate::nn::{ConvParams, Layer, LinearParams, Tensor};

pub const MAGIC: &[u8; 4] = b"CAE1";
pub const VERSION: u16 = 1;

const CONV: u8 = 1;
const TCONV: u8 = 2;
const MAXPOOL: u8 = 3;
const LINEAR: u8 = 4;
const RELU: u8 = 5;
const LEAKY: u8 = 6;
const SIGMOID: u8 = 7;
const FLATTEN: u8 = 8;
const UNFLATTEN: u8 = 9;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_dims(out: &mut Vec<u8>, dims: &[usize]) {
    out.push(dims.len() as u8);
    for &d in dims {
        put_u32(out, d);
    }
}

/// Everything before the parameter blobs.
pub fn encode_header(model: &Autoencoder<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_dims(&mut out, &model.input_shape);
    out.extend_from_slice(&(model.blocks.len() as u16).to_le_bytes());
    for block in &model.blocks {
        out.push(match block.side {
            Side::Encoder => 0,
            Side::Decoder => 1,
        });
        out.push(block.name.len() as u8);
        out.extend_from_slice(block.name.as_bytes());
        out.push(block.layers.len() as u8);
        for layer in &block.layers {
            match layer {
                Layer::Conv(p) | Layer::ConvTranspose(p) => {
                    out.push(if matches!(layer, Layer::Conv(_)) {
                        CONV
                    } else {
                        TCONV
                    });
                    for &d in p.kernels.shape() {
                        put_u32(&mut out, d);
                    }
                    put_u32(&mut out, p.padding);
                    put_u32(&mut out, p.stride);
                }
                Layer::MaxPool { window } => {
                    out.push(MAXPOOL);
                    put_u32(&mut out, *window);
                }
                Layer::Linear(p) => {
                    out.push(LINEAR);
                    put_u32(&mut out, p.out_features());
                    put_u32(&mut out, p.in_features());
                }
                Layer::Relu => out.push(RELU),
                Layer::LeakyRelu { slope } => {
                    out.push(LEAKY);
                    out.extend_from_slice(&slope.to_le_bytes());
                }
                Layer::Sigmoid => out.push(SIGMOID),
                Layer::Flatten => out.push(FLATTEN),
                Layer::Unflatten { shape } => {
                    out.push(UNFLATTEN);
                    put_dims(&mut out, shape);
                }
            }
        }
    }
    out
}

pub fn to_bytes(model: &Autoencoder<f32>) -> Vec<u8> {
    let mut out = encode_header(model);
    out.reserve(4 * model.parameter_count());
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_model(model: &Autoencoder<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Autoencoder<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Fails unless `count` f32 values could still follow, before anything
    /// that size is allocated.
    fn room_for(&self, count: Option<usize>) -> Result<()> {
        match count.and_then(|c| c.checked_mul(4)) {
            Some(n) if n <= self.buf.len() - self.pos => Ok(()),
            _ => Err(Error::ModelFormat(
                "parameter table larger than the file".into(),
            )),
        }
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u8()? as usize;
        (0..rank).map(|_| self.u32()).collect()
    }

    fn fill(&mut self, t: &mut Tensor<f32>) -> Result<()> {
        let raw = self.take(4 * t.len())?;
        for (v, b) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
        Ok(())
    }
}

fn table_error(detail: impl Into<String>) -> Error {
    Error::ModelFormat(format!("inconsistent layer table: {}", detail.into()))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Autoencoder<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::ModelFormat(
            "bad magic, not a CAE1 model file".into(),
        ));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {version} (expected {VERSION})"
        )));
    }
    let input_shape = r.dims()?;
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(table_error(format!("input shape {input_shape:?}")));
    }
    let n_blocks = r.u16()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let side = match r.u8()? {
            0 => Side::Encoder,
            1 => Side::Decoder,
            s => return Err(table_error(format!("unknown side tag {s}"))),
        };
        let name_len = r.u8()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| table_error("block name is not UTF-8"))?;
        let n_layers = r.u8()? as usize;
        if n_layers == 0 {
            return Err(table_error(format!("block {name} has no layers")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let layer = match r.u8()? {
                id @ (CONV | TCONV) => {
                    let k = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
                    let (padding, stride) = (r.u32()?, r.u32()?);
                    r.room_for(k.iter().try_fold(1usize, |a, &d| a.checked_mul(d)))?;
                    if k[2] != k[3] {
                        return Err(table_error(format!("non-square kernel {k:?}")));
                    }
                    if id == CONV {
                        Layer::Conv(
                            ConvParams::conv(k[1], k[0], k[2], padding, stride)
                                .map_err(|e| table_error(e.to_string()))?,
                        )
                    } else {
                        Layer::ConvTranspose(
                            ConvParams::transpose(k[0], k[1], k[2], padding, stride)
                                .map_err(|e| table_error(e.to_string()))?,
                        )
                    }
                }
                MAXPOOL => Layer::MaxPool { window: r.u32()? },
                LINEAR => {
                    let (n_out, n_in) = (r.u32()?, r.u32()?);
                    r.room_for(n_out.checked_mul(n_in))?;
                    if n_out == 0 || n_in == 0 {
                        return Err(table_error("zero-width linear layer"));
                    }
                    Layer::Linear(LinearParams::zeros(n_in, n_out))
                }
                RELU => Layer::Relu,
                LEAKY => Layer::LeakyRelu { slope: r.f32()? },
                SIGMOID => Layer::Sigmoid,
                FLATTEN => Layer::Flatten,
                UNFLATTEN => Layer::Unflatten { shape: r.dims()? },
                id => return Err(table_error(format!("unknown layer type {id}"))),
            };
            layers.push(layer);
        }
        blocks.push(Block { name, side, layers });
    }
    let mut model = Autoencoder {
        input_shape,
        blocks,
    };
    model.validate().map_err(|e| table_error(e.to_string()))?;

    for p in model.params_mut() {
        r.fill(p)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after parameters",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}
