//! 2-D convolution and transpose convolution on `[channels, height, width]`
//! tensors.
//!
//! Convolution is cross-correlation (no kernel flip) with zero padding. The
//! transpose convolution is its exact adjoint: for the same kernel tensor,
//! `<conv(x), u> == <x, conv_transpose(u)>` whenever the extents line up. To
//! make that hold without re-indexing, convolution kernels are laid out
//! `[out_ch, in_ch, k, k]` and transpose-convolution kernels `[in_ch, out_ch, k, k]`.

use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: usize,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvParams<T> {
    /// Zero-initialized convolution parameters, kernels `[out_ch, in_ch, k, k]`.
    pub fn conv(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        padding: usize,
        stride: usize,
    ) -> Result<Self> {
        Self::build(&[out_ch, in_ch, k, k], out_ch, padding, stride)
    }

    /// Zero-initialized transpose-convolution parameters, kernels `[in_ch, out_ch, k, k]`.
    pub fn transpose(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        padding: usize,
        stride: usize,
    ) -> Result<Self> {
        Self::build(&[in_ch, out_ch, k, k], out_ch, padding, stride)
    }

    fn build(shape: &[usize], out_ch: usize, padding: usize, stride: usize) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) || stride == 0 {
            return Err(Error::shape(
                "conv params",
                format!("kernel {shape:?}, stride {stride}: extents and stride must be positive"),
            ));
        }
        Ok(Self {
            kernels: Tensor::zeros(shape),
            bias: Tensor::zeros(&[out_ch]),
            padding,
            stride,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn dims(&self) -> (usize, usize, usize) {
        let s = self.kernels.shape();
        (s[0], s[1], s[2])
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        self.kernels.expect_rank(op, 4)?;
        let s = self.kernels.shape();
        if s[2] != s[3] {
            return Err(Error::shape(op, format!("non-square kernel {s:?}")));
        }
        if self.stride == 0 {
            return Err(Error::shape(op, "stride must be at least 1"));
        }
        Ok(())
    }
}

/// `floor((n + 2·pad − k) / stride) + 1`.
pub fn conv_output_extent(n: usize, k: usize, padding: usize, stride: usize) -> Result<usize> {
    let padded = n + 2 * padding;
    if stride == 0 || k == 0 || padded < k {
        return Err(Error::shape(
            "conv2d",
            format!("input extent {n} with padding {padding} cannot fit kernel {k}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// `(n − 1)·stride + k − 2·pad`.
pub fn conv_transpose_output_extent(
    n: usize,
    k: usize,
    padding: usize,
    stride: usize,
) -> Result<usize> {
    let full = (n.max(1) - 1) * stride + k;
    if n == 0 || stride == 0 || full <= 2 * padding {
        return Err(Error::shape(
            "conv_transpose2d",
            format!(
                "input extent {n}, kernel {k}, stride {stride}, padding {padding} gives no output"
            ),
        ));
    }
    Ok(full - 2 * padding)
}

/// Range of output columns `o` for which `o·stride + tap − pad` lands in `[0, n_in)`.
fn valid_range(
    n_in: usize,
    n_out: usize,
    tap: usize,
    padding: usize,
    stride: usize,
) -> std::ops::Range<usize> {
    let (n_in, tap, padding, stride) = (n_in as i64, tap as i64, padding as i64, stride as i64);
    let lo = if padding > tap {
        (padding - tap + stride - 1) / stride
    } else {
        0
    };
    let top = n_in - 1 + padding - tap;
    if top < 0 {
        return 0..0;
    }
    let hi = (top / stride + 1).min(n_out as i64);
    if lo >= hi {
        0..0
    } else {
        lo as usize..hi as usize
    }
}

fn input_dims<T: Real>(op: &'static str, x: &Tensor<T>, channels: usize) -> Result<(usize, usize)> {
    x.expect_rank(op, 3)?;
    let s = x.shape();
    if s[0] != channels {
        return Err(Error::dim(op, format!("[{channels}, H, W]"), s));
    }
    Ok((s[1], s[2]))
}

/// Shared index walk of convolution. For every (channel pair, tap, row) the
/// correlation touches, calls `f(big, small, n, kernel_index)`: `n` output
/// columns starting at flat index `small` pair with input columns
/// `big, big + stride, ...`.
///
/// `big` is the correlated (padded) side and `small` the strided side; the
/// kernel index addresses `[small_ch, big_ch, ky, kx]`, which is
/// `[out, in, k, k]` for convolution and `[in, out, k, k]` for its transpose.
fn for_each_row(
    big: (usize, usize, usize),
    small: (usize, usize, usize),
    k: usize,
    padding: usize,
    stride: usize,
    mut f: impl FnMut(usize, usize, usize, usize),
) {
    let (big_ch, bh, bw) = big;
    let (small_ch, sh, sw) = small;
    for sc in 0..small_ch {
        for bc in 0..big_ch {
            for ky in 0..k {
                let rows = valid_range(bh, sh, ky, padding, stride);
                for kx in 0..k {
                    let kidx = ((sc * big_ch + bc) * k + ky) * k + kx;
                    let cols = valid_range(bw, sw, kx, padding, stride);
                    if cols.is_empty() {
                        continue;
                    }
                    let bx = cols.start * stride + kx - padding;
                    for sy in rows.clone() {
                        let by = sy * stride + ky - padding;
                        f(
                            (bc * bh + by) * bw + bx,
                            (sc * sh + sy) * sw + cols.start,
                            cols.len(),
                            kidx,
                        );
                    }
                }
            }
        }
    }
}

/// `small[j] += w · big[j·stride]`
#[inline]
fn gather_axpy<T: Real>(small: &mut [T], big: &[T], w: T, stride: usize) {
    if stride == 1 {
        for (d, &v) in small.iter_mut().zip(big) {
            *d = *d + w * v;
        }
    } else {
        for (d, &v) in small.iter_mut().zip(big.iter().step_by(stride)) {
            *d = *d + w * v;
        }
    }
}

/// `big[j·stride] += w · small[j]`
#[inline]
fn scatter_axpy<T: Real>(big: &mut [T], small: &[T], w: T, stride: usize) {
    if stride == 1 {
        for (d, &v) in big.iter_mut().zip(small) {
            *d = *d + w * v;
        }
    } else {
        for (d, &v) in big.iter_mut().step_by(stride).zip(small) {
            *d = *d + w * v;
        }
    }
}

/// `Σ_j small[j] · big[j·stride]`
#[inline]
fn strided_dot<T: Real>(small: &[T], big: &[T], stride: usize) -> T {
    if stride == 1 {
        // Fixed lane split keeps the summation order deterministic.
        const LANES: usize = 8;
        let n = small.len().min(big.len());
        let (a, b) = (&small[..n], &big[..n]);
        let mut acc = [T::zero(); LANES];
        let mut ca = a.chunks_exact(LANES);
        let mut cb = b.chunks_exact(LANES);
        for (xa, xb) in (&mut ca).zip(&mut cb) {
            for l in 0..LANES {
                acc[l] = acc[l] + xa[l] * xb[l];
            }
        }
        let tail = ca
            .remainder()
            .iter()
            .zip(cb.remainder())
            .fold(T::zero(), |s, (&x, &y)| s + x * y);
        acc.iter().fold(tail, |s, &v| s + v)
    } else {
        small
            .iter()
            .zip(big.iter().step_by(stride))
            .fold(T::zero(), |a, (&x, &y)| a + x * y)
    }
}

/// Slice of `n` elements spaced `stride` apart starting at `start`.
#[inline]
fn span(start: usize, n: usize, stride: usize) -> std::ops::Range<usize> {
    start..start + (n - 1) * stride + 1
}

pub fn conv2d_forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.validate("conv2d")?;
    let (out_ch, in_ch, k) = p.dims();
    let (h, w) = input_dims("conv2d", x, in_ch)?;
    let oh = conv_output_extent(h, k, p.padding, p.stride)?;
    let ow = conv_output_extent(w, k, p.padding, p.stride)?;

    let plane = oh * ow;
    let mut out = vec![T::zero(); out_ch * plane];
    for (oc, chunk) in out.chunks_mut(plane).enumerate() {
        chunk.fill(p.bias.data()[oc]);
    }
    let (xs, ks, s) = (x.data(), p.kernels.data(), p.stride);
    for_each_row(
        (in_ch, h, w),
        (out_ch, oh, ow),
        k,
        p.padding,
        s,
        |b, o, n, t| {
            gather_axpy(&mut out[o..o + n], &xs[span(b, n, s)], ks[t], s);
        },
    );
    Tensor::new(vec![out_ch, oh, ow], out)
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    p.validate("conv2d backward")?;
    let (out_ch, in_ch, k) = p.dims();
    let (h, w) = input_dims("conv2d backward", x, in_ch)?;
    let oh = conv_output_extent(h, k, p.padding, p.stride)?;
    let ow = conv_output_extent(w, k, p.padding, p.stride)?;
    grad_out.expect_shape("conv2d backward", &[out_ch, oh, ow])?;

    let (xs, ks, g, s) = (x.data(), p.kernels.data(), grad_out.data(), p.stride);
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); p.kernels.len()];
    for_each_row(
        (in_ch, h, w),
        (out_ch, oh, ow),
        k,
        p.padding,
        s,
        |b, o, n, t| {
            let (go, big) = (&g[o..o + n], span(b, n, s));
            scatter_axpy(&mut gx[big.clone()], go, ks[t], s);
            gk[t] = gk[t] + strided_dot(go, &xs[big], s);
        },
    );
    Ok(ConvGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        kernels: Tensor::new(p.kernels.shape().to_vec(), gk)?,
        bias: channel_sums(grad_out),
    })
}

pub fn conv_transpose2d_forward<T: Real>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.validate("conv_transpose2d")?;
    let (in_ch, out_ch, k) = p.dims();
    let (h, w) = input_dims("conv_transpose2d", x, in_ch)?;
    let oh = conv_transpose_output_extent(h, k, p.padding, p.stride)?;
    let ow = conv_transpose_output_extent(w, k, p.padding, p.stride)?;

    let plane = oh * ow;
    let mut out = vec![T::zero(); out_ch * plane];
    for (oc, chunk) in out.chunks_mut(plane).enumerate() {
        chunk.fill(p.bias.data()[oc]);
    }
    let (xs, ks, s) = (x.data(), p.kernels.data(), p.stride);
    // The output plays the padded role, the input the strided one.
    for_each_row(
        (out_ch, oh, ow),
        (in_ch, h, w),
        k,
        p.padding,
        s,
        |b, i, n, t| {
            scatter_axpy(&mut out[span(b, n, s)], &xs[i..i + n], ks[t], s);
        },
    );
    Tensor::new(vec![out_ch, oh, ow], out)
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    p.validate("conv_transpose2d backward")?;
    let (in_ch, out_ch, k) = p.dims();
    let (h, w) = input_dims("conv_transpose2d backward", x, in_ch)?;
    let oh = conv_transpose_output_extent(h, k, p.padding, p.stride)?;
    let ow = conv_transpose_output_extent(w, k, p.padding, p.stride)?;
    grad_out.expect_shape("conv_transpose2d backward", &[out_ch, oh, ow])?;

    let (xs, ks, g, s) = (x.data(), p.kernels.data(), grad_out.data(), p.stride);
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); p.kernels.len()];
    for_each_row(
        (out_ch, oh, ow),
        (in_ch, h, w),
        k,
        p.padding,
        s,
        |b, i, n, t| {
            let big = &g[span(b, n, s)];
            gather_axpy(&mut gx[i..i + n], big, ks[t], s);
            gk[t] = gk[t] + strided_dot(&xs[i..i + n], big, s);
        },
    );
    Ok(ConvGrads {
        input: Tensor::new(x.shape().to_vec(), gx)?,
        kernels: Tensor::new(p.kernels.shape().to_vec(), gk)?,
        bias: channel_sums(grad_out),
    })
}

fn channel_sums<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let ch = t.shape()[0];
    let plane = t.len() / ch;
    Tensor::vector(
        t.data()
            .chunks(plane)
            .map(|c| c.iter().fold(T::zero(), |a, &b| a + b))
            .collect(),
    )
}
