//! Synthetic brightfield data: tiles with sparse or dense dark blobs, and a
//! whole slide with a tissue section, a hole, a stray speck, and two staining
//! regions of known extent.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, Mask};
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlobClass {
    Sparse,
    Dense,
}

impl BlobClass {
    pub fn label(self) -> usize {
        match self {
            BlobClass::Sparse => 0,
            BlobClass::Dense => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobStyle {
    pub background: f64,
    pub noise: f64,
    /// Fractional darkening at a blob centre.
    pub depth: f64,
    /// Blob radius (Gaussian σ) at 0.5 µm/px; scaled with the tile side.
    pub sigma: f64,
    /// Approximate area fraction covered by blobs, per class.
    pub sparse_coverage: f64,
    pub dense_coverage: f64,
}

impl Default for BlobStyle {
    fn default() -> Self {
        Self {
            background: 0.92,
            noise: 0.02,
            depth: 0.45,
            sigma: 6.0,
            sparse_coverage: 0.03,
            dense_coverage: 0.30,
        }
    }
}

impl BlobStyle {
    fn sigma_for(&self, side: usize) -> f64 {
        (self.sigma * side as f64 / 300.0).max(1.5)
    }

    fn coverage(&self, class: BlobClass) -> f64 {
        match class {
            BlobClass::Sparse => self.sparse_coverage,
            BlobClass::Dense => self.dense_coverage,
        }
    }
}

/// Darkens `pixels` (row-major, `width` wide) multiplicatively with Gaussian
/// blobs placed uniformly over `[x0, x1) × [y0, y1)`.
fn stamp_blobs(
    pixels: &mut [f32],
    width: usize,
    region: (usize, usize, usize, usize),
    count: usize,
    sigma: f64,
    depth: f64,
    rng: &mut impl Rng,
) {
    let height = pixels.len() / width;
    let (x0, y0, x1, y1) = region;
    let reach = (3.0 * sigma).ceil() as i64;
    for _ in 0..count {
        let cx = rng.gen_range(x0 as f64..x1 as f64);
        let cy = rng.gen_range(y0 as f64..y1 as f64);
        let (ix, iy) = (cx as i64, cy as i64);
        for y in (iy - reach).max(0)..(iy + reach + 1).min(height as i64) {
            for x in (ix - reach).max(0)..(ix + reach + 1).min(width as i64) {
                let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                let k = 1.0 - depth * (-d2 / (2.0 * sigma * sigma)).exp();
                let p = &mut pixels[y as usize * width + x as usize];
                *p = (*p as f64 * k) as f32;
            }
        }
    }
}

fn blob_count(area: f64, coverage: f64, sigma: f64, rng: &mut impl Rng) -> usize {
    let footprint = std::f64::consts::PI * (2.0 * sigma).powi(2);
    let mean = coverage * area / footprint;
    (mean * rng.gen_range(0.8..1.2)).round().max(1.0) as usize
}

/// One `[1, side, side]` tile of the given class, values in `[0, 1]`.
pub fn blob_tile(
    class: BlobClass,
    side: usize,
    style: &BlobStyle,
    rng: &mut impl Rng,
) -> Tensor<f32> {
    let mut px: Vec<f32> = (0..side * side)
        .map(|_| {
            (style.background + rng.gen_range(-style.noise..=style.noise)).clamp(0.0, 1.0) as f32
        })
        .collect();
    let sigma = style.sigma_for(side);
    let n = blob_count((side * side) as f64, style.coverage(class), sigma, rng);
    stamp_blobs(
        &mut px,
        side,
        (0, 0, side, side),
        n,
        sigma,
        style.depth,
        rng,
    );
    Tensor::new(vec![1, side, side], px).expect("shape matches")
}

/// `count` tiles alternating sparse and dense, with their class labels.
pub fn blob_tile_set(count: usize, side: usize, seed: u64) -> (Vec<Tensor<f32>>, Vec<BlobClass>) {
    let style = BlobStyle::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let class = if i % 2 == 0 {
                BlobClass::Sparse
            } else {
                BlobClass::Dense
            };
            (blob_tile(class, side, &style, &mut rng), class)
        })
        .unzip()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Ellipse semi-axes as fractions of the slide extent.
    pub semi_axes: (f64, f64),
    pub tissue_level: f64,
    pub hole_radius_frac: f64,
    pub speck_radius: f64,
    pub style: BlobStyle,
    /// Pixel scale in µm/px.
    pub scale: f64,
}

impl Default for SlideSpec {
    fn default() -> Self {
        Self {
            width: 1200,
            height: 900,
            seed: 7,
            semi_axes: (0.34, 0.38),
            tissue_level: 0.62,
            hole_radius_frac: 0.12,
            speck_radius: 10.0,
            style: BlobStyle::default(),
            scale: 0.5,
        }
    }
}

/// A generated slide plus the ground truth it was drawn from.
#[derive(Clone, Debug)]
pub struct SyntheticSlide {
    pub image: GrayImage,
    /// Tissue ellipse including its interior hole.
    pub tissue: Mask,
    pub hole: Mask,
    pub speck: Mask,
    /// Per pixel: `Some(class)` inside tissue, `None` elsewhere. The left half
    /// of the ellipse carries sparse staining, the right half dense.
    pub regions: Vec<Option<BlobClass>>,
}

impl SlideSpec {
    pub fn ellipse(&self) -> (f64, f64, f64, f64) {
        let cx = self.width as f64 * 0.42;
        let cy = self.height as f64 * 0.5;
        (
            cx,
            cy,
            self.semi_axes.0 * self.width as f64,
            self.semi_axes.1 * self.height as f64,
        )
    }

    pub fn generate(&self) -> SyntheticSlide {
        let (w, h) = (self.width, self.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (cx, cy, ax, ay) = self.ellipse();
        let hole_r = self.hole_radius_frac * ax.min(ay);
        let (hx, hy) = (cx - 0.25 * ax, cy - 0.2 * ay);
        // Far corner, well outside the ellipse.
        let (sx, sy) = (w as f64 * 0.93, h as f64 * 0.1);

        let bg = self.style.background;
        let mut px = vec![0f32; w * h];
        let mut tissue = vec![false; w * h];
        let mut hole = vec![false; w * h];
        let mut speck = vec![false; w * h];
        let mut regions = vec![None; w * h];
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                let i = y * w + x;
                let in_ellipse = ((fx - cx) / ax).powi(2) + ((fy - cy) / ay).powi(2) <= 1.0;
                let in_hole = in_ellipse && (fx - hx).hypot(fy - hy) <= hole_r;
                let in_speck = (fx - sx).hypot(fy - sy) <= self.speck_radius;
                let noise = rng.gen_range(-self.style.noise..=self.style.noise);
                let level = if in_ellipse && !in_hole {
                    self.tissue_level
                } else if in_speck {
                    self.tissue_level * 0.8
                } else {
                    bg
                };
                px[i] = (level + noise).clamp(0.0, 1.0) as f32;
                tissue[i] = in_ellipse;
                hole[i] = in_hole;
                speck[i] = in_speck;
                if in_ellipse {
                    regions[i] = Some(if fx < cx {
                        BlobClass::Sparse
                    } else {
                        BlobClass::Dense
                    });
                }
            }
        }

        // Staining blobs, restricted to the half of the ellipse they belong to.
        let sigma = self.style.sigma;
        let half_area = std::f64::consts::PI * ax * ay / 2.0;
        for class in [BlobClass::Sparse, BlobClass::Dense] {
            let n = blob_count(half_area, self.style.coverage(class), sigma, &mut rng);
            let (x0, x1) = match class {
                BlobClass::Sparse => (cx - ax, cx),
                BlobClass::Dense => (cx, cx + ax),
            };
            let mut stain = vec![1f32; w * h];
            stamp_blobs(
                &mut stain,
                w,
                (
                    x0.max(0.0) as usize,
                    (cy - ay).max(0.0) as usize,
                    x1 as usize,
                    (cy + ay) as usize,
                ),
                n,
                sigma,
                self.style.depth,
                &mut rng,
            );
            for i in 0..w * h {
                if regions[i] == Some(class) && !hole[i] {
                    px[i] *= stain[i];
                }
            }
        }

        let mk = |bits| Mask::new(w, h, bits, self.scale).expect("dimensions match");
        SyntheticSlide {
            image: GrayImage::new(w, h, px, self.scale).expect("dimensions match"),
            tissue: mk(tissue),
            hole: mk(hole),
            speck: mk(speck),
            regions,
        }
    }
}
