//! On-disk pipeline stages. Each stage reads the previous stage's files and
//! writes its own into an output directory, so any stage can be rerun alone.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{arch_for_side, PipelineConfig};
use crate::error::{Error, Result};
use crate::fcm::{fcm_fit, read_memberships, write_memberships, FcmResult, FcmSummary, Matrix};
use crate::image::{GrayImage, Mask};
use crate::masking::{build_mask, write_mask, MaskResult};
use crate::model::{describe_model, load_model, save_model, train_with, Autoencoder};
use crate::nn::Tensor;
use crate::render::{render_classmap, render_loss_curve, render_scatter, ClassMap, Placement};
use crate::tiling::{extract_tiles, read_tiles, write_tiles, Tile};

pub const CONFIG_FILE: &str = "config.txt";
pub const MASK_PNG: &str = "mask.png";
pub const TILES_MANIFEST: &str = "tiles.jsonl";
pub const TILES_BIN: &str = "tiles.bin";
pub const MODEL_FILE: &str = "model.cae";
pub const MODEL_DOT: &str = "model.dot";
pub const LOSS_CSV: &str = "loss.csv";
pub const LOSS_SVG: &str = "loss.svg";
pub const LATENTS_CSV: &str = "latents.csv";
pub const MEMBERSHIPS_CSV: &str = "memberships.csv";
pub const CLUSTERS_JSON: &str = "clusters.json";
pub const CLASSMAP_PNG: &str = "classmap.png";
pub const SCATTER_SVG: &str = "scatter.svg";

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Collects stage timings and written files for the run manifest.
#[derive(Debug, Default)]
pub struct RunLog {
    pub timings: Vec<Timing>,
    pub outputs: Vec<PathBuf>,
}

impl RunLog {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        log::info!("stage {stage}: start");
        let out = f(self)?;
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("stage {stage}: done in {seconds:.2}s");
        self.timings.push(Timing {
            stage: stage.to_string(),
            seconds,
        });
        Ok(out)
    }

    pub fn wrote(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    config_sha256: String,
    timings: &'a [Timing],
    outputs: Vec<String>,
}

/// Writes the resolved config and `manifest.<subcommand>.json` into `out`.
pub fn write_run_files(
    out: &Path,
    subcommand: &str,
    cfg: &PipelineConfig,
    log: &RunLog,
) -> Result<()> {
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        seed: cfg.seed,
        config_sha256: cfg.sha256(),
        timings: &log.timings,
        outputs: log
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    let path = out.join(format!("manifest.{subcommand}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn load_slide(path: &Path, cfg: &PipelineConfig) -> Result<GrayImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    GrayImage::load_png(path, cfg.scale)
}

pub fn mask_stage(
    slide: &GrayImage,
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<MaskResult> {
    let result = build_mask(slide, &cfg.mask)?;
    let png = out.join(MASK_PNG);
    write_mask(&result, &cfg.mask, &png)?;
    log.wrote(&png);
    log.wrote(png.with_extension("json"));
    Ok(result)
}

pub fn tile_stage(
    slide: &GrayImage,
    mask: &Mask,
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<Vec<Tile>> {
    let tiles = extract_tiles(slide, mask, &cfg.tile)?;
    if tiles.is_empty() {
        return Err(Error::Empty("no tile passed the tissue threshold"));
    }
    log::info!("{} tiles of side {}", tiles.len(), cfg.tile.tile_side);
    let (m, b) = (out.join(TILES_MANIFEST), out.join(TILES_BIN));
    write_tiles(&tiles, &m, &b)?;
    log.wrote(m);
    log.wrote(b);
    Ok(tiles)
}

pub fn load_tiles(dir: &Path) -> Result<Vec<Tile>> {
    read_tiles(&dir.join(TILES_MANIFEST), &dir.join(TILES_BIN))
}

pub fn tile_side(tiles: &[Tile]) -> Result<usize> {
    tiles
        .first()
        .map(|t| t.pixels.shape()[1])
        .ok_or(Error::Empty("tile set"))
}

pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in history.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec[1].parse().map_err(|e| {
                Error::InvalidArgument(format!("{}: bad loss {:?}: {e}", path.display(), &rec[1]))
            })
        })
        .collect()
}

/// Writes `epoch,<label>,…` for several histories of possibly unequal length.
pub fn write_histories(path: &Path, series: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string()];
    header.extend(series.iter().map(|(l, _)| l.clone()));
    w.write_record(&header)?;
    let n = series.iter().map(|(_, h)| h.len()).max().unwrap_or(0);
    for e in 0..n {
        let mut rec = vec![(e + 1).to_string()];
        rec.extend(
            series
                .iter()
                .map(|(_, h)| h.get(e).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_svg(path: &Path, svg: &str, log: &mut RunLog) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    log.wrote(path);
    Ok(())
}

pub fn pixels(tiles: &[Tile]) -> Vec<Tensor<f32>> {
    tiles.iter().map(|t| t.pixels.clone()).collect()
}

pub fn train_stage(
    tiles: &[Tile],
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<(Autoencoder<f32>, Vec<f64>)> {
    let arch = arch_for_side(tile_side(tiles)?)?;
    let mut model = Autoencoder::<f32>::build(&arch, cfg.seed)?;
    let data = pixels(tiles);
    let history = train_with(&mut model, &data, &cfg.train_config(), |e, l| {
        log::info!("epoch {:>3}  loss {l:.6}", e + 1)
    })?;
    let (mp, dot, csvp) = (
        out.join(MODEL_FILE),
        out.join(MODEL_DOT),
        out.join(LOSS_CSV),
    );
    save_model(&model, &mp)?;
    std::fs::write(&dot, describe_model(&model)).map_err(|e| Error::io(&dot, e))?;
    write_history(&csvp, &history)?;
    log.wrote(mp);
    log.wrote(dot);
    log.wrote(csvp);
    if history.len() >= 2 {
        write_svg(&out.join(LOSS_SVG), &render_loss_curve(&history)?, log)?;
    }
    Ok((model, history))
}

/// One row of the latent CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub tile_id: usize,
    pub x: usize,
    pub y: usize,
    pub z: Vec<f32>,
}

pub fn encode_tiles(model: &Autoencoder<f32>, tiles: &[Tile]) -> Result<Vec<Latent>> {
    tiles
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(Latent {
                tile_id: i,
                x: t.x,
                y: t.y,
                z: model.encode(&t.pixels)?.into_data(),
            })
        })
        .collect()
}

pub fn write_latents(path: &Path, latents: &[Latent]) -> Result<()> {
    let dim = latents.first().map_or(2, |l| l.z.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["tile_id".to_string(), "x".into(), "y".into()];
    header.extend((1..=dim).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for l in latents {
        let mut rec = vec![l.tile_id.to_string(), l.x.to_string(), l.y.to_string()];
        rec.extend(l.z.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_latents(path: &Path) -> Result<Vec<Latent>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len().saturating_sub(3);
    if dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: no latent columns",
            path.display()
        )));
    }
    let bad = |s: &str| Error::InvalidArgument(format!("{}: bad field {s:?}", path.display()));
    r.records()
        .map(|rec| {
            let rec = rec?;
            let int = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(&rec[i]));
            Ok(Latent {
                tile_id: int(0)?,
                x: int(1)?,
                y: int(2)?,
                z: (3..3 + dim)
                    .map(|i| rec[i].parse::<f32>().map_err(|_| bad(&rec[i])))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn latent_matrix(latents: &[Latent]) -> Result<Matrix> {
    Matrix::from_rows(
        &latents
            .iter()
            .map(|l| l.z.iter().map(|&v| v as f64).collect())
            .collect::<Vec<_>>(),
    )
}

pub fn encode_stage(
    model: &Autoencoder<f32>,
    tiles: &[Tile],
    out: &Path,
    log: &mut RunLog,
) -> Result<Vec<Latent>> {
    let latents = encode_tiles(model, tiles)?;
    let p = out.join(LATENTS_CSV);
    write_latents(&p, &latents)?;
    log.wrote(p);
    Ok(latents)
}

pub fn cluster_stage(
    latents: &[Latent],
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<FcmResult> {
    let fcm_cfg = cfg.fcm_config();
    let result = fcm_fit(&latent_matrix(latents)?, &fcm_cfg)?;
    let ids: Vec<usize> = latents.iter().map(|l| l.tile_id).collect();
    let (u, j) = (out.join(MEMBERSHIPS_CSV), out.join(CLUSTERS_JSON));
    write_memberships(&u, &ids, &result.memberships)?;
    std::fs::write(
        &j,
        serde_json::to_string_pretty(&FcmSummary::new(&result, &fcm_cfg))?,
    )
    .map_err(|e| Error::io(&j, e))?;
    log.wrote(u);
    log.wrote(j);
    Ok(result)
}

pub fn read_clusters(path: &Path) -> Result<FcmSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Class map and scatter plot from on-disk or in-memory results.
#[allow(clippy::too_many_arguments)]
pub fn render_stage(
    slide_dims: (usize, usize),
    side: usize,
    latents: &[Latent],
    memberships: &Matrix,
    centroids: Option<&Matrix>,
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<ClassMap> {
    let palette = cfg.palette()?;
    let placements: Vec<Placement> = latents
        .iter()
        .map(|l| Placement {
            x: l.x,
            y: l.y,
            side,
        })
        .collect();
    let map = render_classmap(slide_dims.0, slide_dims.1, &placements, memberships)?;
    let png = out.join(CLASSMAP_PNG);
    map.save_png(&palette, &png)?;
    log.wrote(png);
    let z = latent_matrix(latents)?;
    write_svg(
        &out.join(SCATTER_SVG),
        &render_scatter(&z, memberships, centroids, &palette)?,
        log,
    )?;
    Ok(map)
}

/// Everything `pipeline` produces, kept in memory for callers that want it.
pub struct PipelineOutput {
    pub mask: Mask,
    pub tiles: Vec<Tile>,
    pub history: Vec<f64>,
    pub latents: Vec<Latent>,
    pub clusters: FcmResult,
    pub classmap: ClassMap,
}

/// mask → tile → train → encode → cluster → render, all into `out`.
pub fn run_pipeline(
    slide_path: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    ensure_dir(out)?;
    let slide = log.time("load", |_| load_slide(slide_path, cfg))?;
    let mask = log.time("mask", |l| mask_stage(&slide, cfg, out, l))?.mask;
    let tiles = log.time("tile", |l| tile_stage(&slide, &mask, cfg, out, l))?;
    let (model, history) = log.time("train", |l| train_stage(&tiles, cfg, out, l))?;
    let latents = log.time("encode", |l| encode_stage(&model, &tiles, out, l))?;
    let clusters = log.time("cluster", |l| cluster_stage(&latents, cfg, out, l))?;
    let side = cfg.tile.tile_side;
    let classmap = log.time("render", |l| {
        render_stage(
            (slide.width, slide.height),
            side,
            &latents,
            &clusters.memberships,
            Some(&clusters.centroids),
            cfg,
            out,
            l,
        )
    })?;
    Ok(PipelineOutput {
        mask,
        tiles,
        history,
        latents,
        clusters,
        classmap,
    })
}

/// Loads a saved model and checks it against a tile side.
pub fn load_model_for(path: &Path, side: usize) -> Result<Autoencoder<f32>> {
    let model = load_model(path)?;
    if model.input_shape != [1, side, side] {
        return Err(Error::dim(
            "model input",
            [1, side, side],
            &model.input_shape,
        ));
    }
    Ok(model)
}

pub fn read_memberships_file(path: &Path) -> Result<Matrix> {
    Ok(read_memberships(path)?.1)
}
