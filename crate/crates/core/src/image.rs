//! Grayscale rasters and binary masks with a physical pixel scale.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Intensities in `[0, 1]`, row-major, with a pixel scale in µm/px.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub scale: f64,
}

/// `true` marks tissue.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub scale: f64,
}

fn check_dims(width: usize, height: usize, len: usize, scale: f64) -> Result<()> {
    if width == 0 || height == 0 || width * height != len {
        return Err(Error::dim("raster", format!("{width}x{height}"), len));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pixel scale must be positive, got {scale}"
        )));
    }
    Ok(())
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, scale: f64) -> Result<Self> {
        check_dims(width, height, pixels.len(), scale)?;
        Ok(Self {
            width,
            height,
            pixels,
            scale,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32, scale: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], scale)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// 256-bin histogram of the intensities quantized to 8 bits.
    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &v in &self.pixels {
            h[quantize(v) as usize] += 1;
        }
        h
    }

    /// Box-filter downscale by an integer factor; edge blocks average only
    /// the pixels they contain.
    pub fn downscale(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument(
                "downscale factor must be at least 1".into(),
            ));
        }
        let (w, h) = (self.width.div_ceil(factor), self.height.div_ceil(factor));
        let mut sums = vec![0f64; w * h];
        let mut counts = vec![0u32; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y / factor) * w + x / factor;
                sums[i] += self.get(x, y) as f64;
                counts[i] += 1;
            }
        }
        let pixels = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (s / c as f64) as f32)
            .collect();
        Self::new(w, h, pixels, self.scale * factor as f64)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self.pixels.iter().map(|&v| quantize(v)).collect();
        let img: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
                .expect("buffer size matches");
        img.save(path.as_ref())?;
        Ok(())
    }

    /// Reads an 8-bit grayscale or RGB PNG; RGB is converted by luminance.
    pub fn load_png(path: impl AsRef<Path>, scale: f64) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(b) => to_grayscale(b.as_raw(), 1, w, h, scale),
            DynamicImage::ImageRgb8(b) => to_grayscale(b.as_raw(), 3, w, h, scale),
            other => Err(Error::InvalidArgument(format!(
                "{}: unsupported pixel format {:?} (expected 8-bit gray or RGB)",
                path.as_ref().display(),
                other.color()
            ))),
        }
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Interleaved 8-bit samples to `[0, 1]` intensities. Three channels are
/// combined as `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(
    data: &[u8],
    channels: usize,
    width: usize,
    height: usize,
    scale: f64,
) -> Result<GrayImage> {
    let pixels: Vec<f32> = match channels {
        1 => data.iter().map(|&v| v as f32 / 255.0).collect(),
        3 => data
            .chunks_exact(3)
            .map(|p| {
                ((0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0) as f32
            })
            .collect(),
        n => {
            return Err(Error::InvalidArgument(format!(
                "unsupported channel count {n} (expected 1 or 3)"
            )))
        }
    };
    if data.len() != width * height * channels {
        return Err(Error::dim(
            "to_grayscale",
            width * height * channels,
            data.len(),
        ));
    }
    GrayImage::new(width, height, pixels, scale)
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>, scale: f64) -> Result<Self> {
        check_dims(width, height, bits.len(), scale)?;
        Ok(Self {
            width,
            height,
            bits,
            scale,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool, scale: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], scale)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        scale: f64,
        f: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, bits, scale)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        if !self.same_dims(other) {
            return Err(Error::dim(
                "mask intersect",
                (self.width, self.height),
                (other.width, other.height),
            ));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Mask::new(self.width, self.height, bits, self.scale)
    }

    /// Nearest-neighbour resize to exactly `width × height`.
    pub fn resize_nearest(&self, width: usize, height: usize, scale: f64) -> Result<Mask> {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Mask::from_fn(width, height, scale, |x, y| {
            let mx = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let my = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(mx, my)
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img: ImageBuffer<Luma<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
                .expect("buffer size matches");
        img.save(path.as_ref())?;
        Ok(())
    }

    /// Any nonzero gray level counts as tissue.
    pub fn load_png(path: impl AsRef<Path>, scale: f64) -> Result<Self> {
        let img = image::open(path.as_ref())?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Mask::new(w, h, img.as_raw().iter().map(|&v| v > 0).collect(), scale)
    }
}
