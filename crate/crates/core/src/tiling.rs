//! Overlapping square tiles restricted to tissue.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Mask};
use crate::nn::Tensor;

pub const TILE_MAGIC: &[u8; 4] = b"CTIL";
pub const TILE_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tile_side: usize,
    pub stride: usize,
    pub min_tissue_fraction: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            tile_side: 300,
            stride: 150,
            min_tissue_fraction: 0.25,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride > self.tile_side {
            return Err(Error::InvalidArgument(format!(
                "stride must be in 1..={}, got {}",
                self.tile_side, self.stride
            )));
        }
        if !(0.0..=1.0).contains(&self.min_tissue_fraction) {
            return Err(Error::InvalidArgument(format!(
                "min_tissue_fraction must be in [0, 1], got {}",
                self.min_tissue_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub x: usize,
    pub y: usize,
    /// `[1, side, side]`.
    pub pixels: Tensor<f32>,
    pub tissue_fraction: f64,
}

/// One line of the tile manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub id: usize,
    pub x: usize,
    pub y: usize,
    pub tissue_fraction: f64,
}

/// Top-left corners in row-major order; empty when the slide is smaller than
/// one tile.
pub fn enumerate_positions(
    width: usize,
    height: usize,
    spec: &TileSpec,
) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    let side = spec.tile_side;
    if width < side || height < side {
        log::warn!("slide {width}x{height} is smaller than one {side}px tile; no positions");
        return Ok(Vec::new());
    }
    let xs: Vec<usize> = (0..=width - side).step_by(spec.stride).collect();
    Ok((0..=height - side)
        .step_by(spec.stride)
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect())
}

/// Summed-area table of the mask, `(w+1) × (h+1)`.
fn integral(mask: &Mask) -> Vec<u64> {
    let w = mask.width + 1;
    let mut s = vec![0u64; w * (mask.height + 1)];
    for y in 0..mask.height {
        let mut row = 0u64;
        for x in 0..mask.width {
            row += u64::from(mask.get(x, y));
            s[(y + 1) * w + x + 1] = s[y * w + x + 1] + row;
        }
    }
    s
}

/// Keeps positions whose tissue fraction is positive and at least the
/// configured minimum.
pub fn extract_tiles(slide: &GrayImage, mask: &Mask, spec: &TileSpec) -> Result<Vec<Tile>> {
    if (slide.width, slide.height) != (mask.width, mask.height) {
        return Err(Error::dim(
            "extract_tiles",
            (slide.width, slide.height),
            (mask.width, mask.height),
        ));
    }
    let positions = enumerate_positions(slide.width, slide.height, spec)?;
    let side = spec.tile_side;
    let sat = integral(mask);
    let sw = mask.width + 1;
    let area = (side * side) as f64;
    let tiles = positions
        .par_iter()
        .filter_map(|&(x, y)| {
            let at = |xx: usize, yy: usize| sat[yy * sw + xx];
            let inside = at(x + side, y + side) + at(x, y) - at(x + side, y) - at(x, y + side);
            let fraction = inside as f64 / area;
            if inside == 0 || fraction < spec.min_tissue_fraction {
                return None;
            }
            let mut px = Vec::with_capacity(side * side);
            for row in y..y + side {
                px.extend_from_slice(
                    &slide.pixels[row * slide.width + x..row * slide.width + x + side],
                );
            }
            Some(Tile {
                x,
                y,
                pixels: Tensor::new(vec![1, side, side], px).expect("tile shape"),
                tissue_fraction: fraction,
            })
        })
        .collect();
    Ok(tiles)
}

/// Writes the JSON-lines manifest and the packed pixel file.
pub fn write_tiles(tiles: &[Tile], manifest: &Path, pixels: &Path) -> Result<()> {
    let side = tiles.first().map_or(0, |t| t.pixels.shape()[1]);
    let mut m = BufWriter::new(File::create(manifest).map_err(|e| Error::io(manifest, e))?);
    for (id, t) in tiles.iter().enumerate() {
        let rec = TileRecord {
            id,
            x: t.x,
            y: t.y,
            tissue_fraction: t.tissue_fraction,
        };
        serde_json::to_writer(&mut m, &rec)?;
        m.write_all(b"\n").map_err(|e| Error::io(manifest, e))?;
    }
    m.flush().map_err(|e| Error::io(manifest, e))?;

    let mut p = BufWriter::new(File::create(pixels).map_err(|e| Error::io(pixels, e))?);
    let mut header = Vec::with_capacity(14);
    header.extend_from_slice(TILE_MAGIC);
    header.extend_from_slice(&TILE_VERSION.to_le_bytes());
    header.extend_from_slice(&(tiles.len() as u32).to_le_bytes());
    header.extend_from_slice(&(side as u32).to_le_bytes());
    p.write_all(&header).map_err(|e| Error::io(pixels, e))?;
    for t in tiles {
        if t.pixels.shape() != [1, side, side] {
            return Err(Error::dim("write_tiles", [1, side, side], t.pixels.shape()));
        }
        for v in t.pixels.data() {
            p.write_all(&v.to_le_bytes())
                .map_err(|e| Error::io(pixels, e))?;
        }
    }
    p.flush().map_err(|e| Error::io(pixels, e))
}

pub fn read_tiles(manifest: &Path, pixels: &Path) -> Result<Vec<Tile>> {
    let records: Vec<TileRecord> =
        BufReader::new(File::open(manifest).map_err(|e| Error::io(manifest, e))?)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| {
                Ok(serde_json::from_str(
                    &l.map_err(|e| Error::io(manifest, e))?,
                )?)
            })
            .collect::<Result<_>>()?;

    let mut bytes = Vec::new();
    File::open(pixels)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(pixels, e))?;
    if bytes.len() < 14 || &bytes[..4] != TILE_MAGIC {
        return Err(Error::TileFormat("missing CTIL header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TILE_VERSION {
        return Err(Error::TileFormat(format!(
            "unsupported tile file version {version}"
        )));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let side = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if count != records.len() {
        return Err(Error::TileFormat(format!(
            "manifest lists {} tiles, pixel file holds {count}",
            records.len()
        )));
    }
    let per = side * side;
    if bytes.len() != 14 + 4 * per * count {
        return Err(Error::TileFormat(format!(
            "pixel file is {} bytes, expected {}",
            bytes.len(),
            14 + 4 * per * count
        )));
    }
    let body = &bytes[14..];
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.id != i {
                return Err(Error::TileFormat(format!(
                    "manifest line {i} has id {}",
                    r.id
                )));
            }
            let px = body[i * per * 4..(i + 1) * per * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Tile {
                x: r.x,
                y: r.y,
                pixels: Tensor::new(vec![1, side, side], px)?,
                tissue_fraction: r.tissue_fraction,
            })
        })
        .collect()
}
