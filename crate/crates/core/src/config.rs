//! Flat `key = value` pipeline configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default; unknown keys are an error. The resolved form lists every key in
//! a fixed order so two runs with the same settings hash identically.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fcm::FcmConfig;
use crate::masking::MaskParams;
use crate::model::{ArchSpec, TrainConfig};
use crate::nn::LossKind;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::render::Palette;
use crate::tiling::TileSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mask: MaskParams,
    /// Pixel scale of the input slide, µm/px.
    pub scale: f64,
    pub tile: TileSpec,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: OptimizerKind,
    /// `None` uses the optimizer's own default.
    pub lr: Option<f64>,
    pub loss: LossKind,
    pub seed: u64,
    pub fcm_c: usize,
    pub fcm_m: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
    pub palette: String,
    pub slide: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let fcm = FcmConfig::default();
        Self {
            mask: MaskParams::default(),
            scale: 0.5,
            tile: TileSpec::default(),
            epochs: train.epochs,
            batch: train.batch_size,
            optimizer: train.optimizer.kind,
            lr: None,
            loss: train.loss,
            seed: train.seed,
            fcm_c: fcm.c,
            fcm_m: fcm.m,
            fcm_tol: fcm.tol,
            fcm_max_iter: fcm.max_iter,
            palette: "default".into(),
            slide: None,
            out: None,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "mask.downscale",
    "mask.sigma",
    "mask.erosion_radius",
    "mask.invert",
    "mask.scale",
    "tile.side",
    "tile.stride",
    "tile.min_tissue_fraction",
    "train.epochs",
    "train.batch",
    "train.optimizer",
    "train.lr",
    "train.loss",
    "train.seed",
    "fcm.c",
    "fcm.m",
    "fcm.tol",
    "fcm.max_iter",
    "render.palette",
    "paths.slide",
    "paths.out",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mask.downscale" => self.mask.downscale = parse(key, v)?,
            "mask.sigma" => self.mask.blur_sigma = parse(key, v)?,
            "mask.erosion_radius" => self.mask.seed_radius = parse(key, v)?,
            "mask.invert" => self.mask.invert = parse(key, v)?,
            "mask.scale" => self.scale = parse(key, v)?,
            "tile.side" => self.tile.tile_side = parse(key, v)?,
            "tile.stride" => self.tile.stride = parse(key, v)?,
            "tile.min_tissue_fraction" => self.tile.min_tissue_fraction = parse(key, v)?,
            "train.epochs" => self.epochs = parse(key, v)?,
            "train.batch" => self.batch = parse(key, v)?,
            "train.optimizer" => self.optimizer = v.parse()?,
            "train.lr" => {
                self.lr = if v == "default" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "train.loss" => self.loss = v.parse()?,
            "train.seed" => self.seed = parse(key, v)?,
            "fcm.c" => self.fcm_c = parse(key, v)?,
            "fcm.m" => self.fcm_m = parse(key, v)?,
            "fcm.tol" => self.fcm_tol = parse(key, v)?,
            "fcm.max_iter" => self.fcm_max_iter = parse(key, v)?,
            "render.palette" => {
                v.parse::<Palette>()?;
                self.palette = v.to_string();
            }
            "paths.slide" => self.slide = (!v.is_empty()).then(|| PathBuf::from(v)),
            "paths.out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(Error::UnknownConfigKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        };
        Ok(match key {
            "mask.downscale" => self.mask.downscale.to_string(),
            "mask.sigma" => self.mask.blur_sigma.to_string(),
            "mask.erosion_radius" => self.mask.seed_radius.to_string(),
            "mask.invert" => self.mask.invert.to_string(),
            "mask.scale" => self.scale.to_string(),
            "tile.side" => self.tile.tile_side.to_string(),
            "tile.stride" => self.tile.stride.to_string(),
            "tile.min_tissue_fraction" => self.tile.min_tissue_fraction.to_string(),
            "train.epochs" => self.epochs.to_string(),
            "train.batch" => self.batch.to_string(),
            "train.optimizer" => self.optimizer.to_string(),
            "train.lr" => self.lr.map_or("default".into(), |v| v.to_string()),
            "train.loss" => self.loss.to_string(),
            "train.seed" => self.seed.to_string(),
            "fcm.c" => self.fcm_c.to_string(),
            "fcm.m" => self.fcm_m.to_string(),
            "fcm.tol" => self.fcm_tol.to_string(),
            "fcm.max_iter" => self.fcm_max_iter.to_string(),
            "render.palette" => self.palette.clone(),
            "paths.slide" => path(&self.slide),
            "paths.out" => path(&self.out),
            other => return Err(Error::UnknownConfigKey(other.to_string())),
        })
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    n + 1
                ))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides, e.g. from repeated `--set` flags.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {p:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.tile.validate()?;
        self.train_config().validate()?;
        self.fcm_config().validate()?;
        self.arch()?;
        if self.mask.downscale == 0 || self.mask.seed_radius == 0 || !(self.mask.blur_sigma > 0.0) {
            return Err(Error::Config(
                "mask.downscale, mask.erosion_radius and mask.sigma must be positive".into(),
            ));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config(format!(
                "mask.scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut opt = OptimizerConfig::defaults(self.optimizer);
        if let Some(lr) = self.lr {
            opt = opt.with_lr(lr);
        }
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            optimizer: opt,
            loss: self.loss,
            seed: self.seed,
        }
    }

    pub fn fcm_config(&self) -> FcmConfig {
        FcmConfig {
            c: self.fcm_c,
            m: self.fcm_m,
            tol: self.fcm_tol,
            max_iter: self.fcm_max_iter,
            seed: self.seed,
        }
    }

    pub fn palette(&self) -> Result<Palette> {
        self.palette.parse()
    }

    /// Full-size architecture for 300 px tiles, the reduced pool plan otherwise.
    pub fn arch(&self) -> Result<ArchSpec> {
        arch_for_side(self.tile.tile_side)
    }
}

pub fn arch_for_side(side: usize) -> Result<ArchSpec> {
    if side == 300 {
        Ok(ArchSpec::standard())
    } else {
        ArchSpec::reduced(side)
    }
}
