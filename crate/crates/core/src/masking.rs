//! Tissue masks from a downscaled slide: blur, triangle threshold, hole
//! filling, and reconstruction from an eroded seed, then upscaled back to the
//! slide resolution.

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, GrayImage, Mask};

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian with radius `ceil(3σ)` and clamp-to-edge borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width, img.height);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;

    let mut horizontal = vec![0f64; w * h];
    horizontal
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                *out = k
                    .iter()
                    .enumerate()
                    .map(|(i, &kv)| kv * img.get(clamp(x as i64 + i as i64 - r, w), y) as f64)
                    .sum();
            }
        });
    let mut pixels = vec![0f32; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let v: f64 = k
                .iter()
                .enumerate()
                .map(|(i, &kv)| kv * horizontal[clamp(y as i64 + i as i64 - r, h) * w + x])
                .sum();
            *out = v as f32;
        }
    });
    GrayImage::new(w, h, pixels, img.scale)
}

/// Zack's triangle method. The chord runs from the histogram peak to the
/// farthest nonempty bin on the longer tail; the bin between them farthest
/// from the chord is returned. Ties go to the lower bin.
pub fn triangle_threshold(hist: &[u64; 256]) -> Result<u8> {
    let lo = hist
        .iter()
        .position(|&c| c > 0)
        .ok_or(Error::Empty("histogram"))?;
    let hi = hist.iter().rposition(|&c| c > 0).expect("nonempty");
    let peak = (0..256).fold(0, |best, b| if hist[b] > hist[best] { b } else { best });
    if lo == hi {
        return Ok(lo as u8);
    }
    let tail = if peak - lo > hi - peak { lo } else { hi };
    let (px, py) = (peak as i128, hist[peak] as i128);
    let (tx, ty) = (tail as i128, hist[tail] as i128);
    let (from, to) = (tail.min(peak), tail.max(peak));
    let mut best = (from, -1i128);
    for b in from..=to {
        // Twice the triangle area; proportional to the distance from the chord.
        let cross = ((py - ty) * (b as i128 - tx) - (px - tx) * (hist[b] as i128 - ty)).abs();
        if cross > best.1 {
            best = (b, cross);
        }
    }
    Ok(best.0 as u8)
}

const NEIGHBOURS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Breadth-first 4-connected flood over pixels where `open` holds, starting
/// from `starts`. Returns the visited set.
fn flood(
    width: usize,
    height: usize,
    starts: impl Iterator<Item = usize>,
    open: impl Fn(usize) -> bool,
) -> Vec<bool> {
    let mut seen = vec![false; width * height];
    let mut queue = VecDeque::new();
    for i in starts {
        if open(i) && !seen[i] {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % width) as i64, (i / width) as i64);
        for (dx, dy) in NEIGHBOURS {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                continue;
            }
            let j = ny as usize * width + nx as usize;
            if !seen[j] && open(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Background regions that cannot reach the border become tissue.
pub fn fill_holes(mask: &Mask) -> Mask {
    let (w, h) = (mask.width, mask.height);
    let border = (0..w)
        .flat_map(|x| [x, (h - 1) * w + x])
        .chain((0..h).flat_map(|y| [y * w, y * w + w - 1]));
    let outside = flood(w, h, border, |i| !mask.bits[i]);
    let bits = outside.into_iter().map(|o| !o).collect();
    Mask::new(w, h, bits, mask.scale).expect("dimensions preserved")
}

/// Binary erosion by a disk of the given radius; pixels outside the image
/// count as background.
pub fn erode(mask: &Mask, radius: usize) -> Result<Mask> {
    if radius == 0 {
        return Err(Error::InvalidArgument(
            "erosion radius must be at least 1".into(),
        ));
    }
    let (w, h) = (mask.width, mask.height);
    let r = radius as i64;
    // Per row, prefix counts of background pixels.
    let prefix: Vec<Vec<u32>> = (0..h)
        .map(|y| {
            let mut p = vec![0u32; w + 1];
            for x in 0..w {
                p[x + 1] = p[x] + u32::from(!mask.get(x, y));
            }
            p
        })
        .collect();
    let half: Vec<i64> = (-r..=r)
        .map(|dy| ((r * r - dy * dy) as f64).sqrt().floor() as i64)
        .collect();

    let mut bits = vec![false; w * h];
    bits.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = (-r..=r).zip(&half).all(|(dy, &hw)| {
                let yy = y as i64 + dy;
                let (x0, x1) = (x as i64 - hw, x as i64 + hw);
                if yy < 0 || yy >= h as i64 || x0 < 0 || x1 >= w as i64 {
                    return false;
                }
                let p = &prefix[yy as usize];
                p[x1 as usize + 1] == p[x0 as usize]
            });
        }
    });
    Mask::new(w, h, bits, mask.scale)
}

/// Morphological reconstruction: the union of the 4-connected components of
/// `mask` that touch `seed`.
pub fn reconstruct(seed: &Mask, mask: &Mask) -> Result<Mask> {
    let seed = seed.intersect(mask)?;
    let starts = seed
        .bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i);
    let bits = flood(mask.width, mask.height, starts, |i| mask.bits[i]);
    Mask::new(mask.width, mask.height, bits, mask.scale)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub downscale: usize,
    /// In downscaled pixels.
    pub blur_sigma: f64,
    /// In downscaled pixels.
    pub seed_radius: usize,
    /// Treat the bright side of the threshold as tissue.
    pub invert: bool,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            downscale: 8,
            blur_sigma: 2.0,
            seed_radius: 20,
            invert: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MaskResult {
    /// Full-resolution mask.
    pub mask: Mask,
    pub threshold_bin: u8,
}

/// JSON record written next to a mask PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub scale_um_per_px: f64,
    pub downscale_factor: usize,
    pub threshold_bin: u8,
    pub parameters: MaskParams,
}

pub fn build_mask(slide: &GrayImage, params: &MaskParams) -> Result<MaskResult> {
    let small = slide.downscale(params.downscale)?;
    let blurred = gaussian_blur(&small, params.blur_sigma)?;
    let threshold_bin = triangle_threshold(&blurred.histogram())?;
    let raw: Vec<bool> = blurred
        .pixels
        .iter()
        .map(|&v| {
            let q = quantize(v);
            if params.invert {
                q > threshold_bin
            } else {
                q < threshold_bin
            }
        })
        .collect();
    let raw = Mask::new(small.width, small.height, raw, small.scale)?;
    let filled = fill_holes(&raw);
    let seed = erode(&filled, params.seed_radius)?;
    let kept = reconstruct(&seed, &filled)?;
    if kept.count() == 0 {
        return Err(Error::NoTissue);
    }
    log::debug!(
        "mask: threshold bin {threshold_bin}, {} of {} downscaled pixels kept",
        kept.count(),
        kept.bits.len()
    );
    Ok(MaskResult {
        mask: kept.resize_nearest(slide.width, slide.height, slide.scale)?,
        threshold_bin,
    })
}

/// Writes `<stem>.png` and `<stem>.json`.
pub fn write_mask(result: &MaskResult, params: &MaskParams, png: &Path) -> Result<()> {
    result.mask.save_png(png)?;
    let sidecar = MaskSidecar {
        scale_um_per_px: result.mask.scale,
        downscale_factor: params.downscale,
        threshold_bin: result.threshold_bin,
        parameters: params.clone(),
    };
    let json = png.with_extension("json");
    std::fs::write(&json, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&json, e))
}
