//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::{arch_for_side, PipelineConfig};
use crate::fcm::{fpc_sweep, write_sweep, Matrix};
use crate::image::{GrayImage, Mask};
use crate::model::{train, Autoencoder};
use crate::nn::LossKind;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::pipeline::*;
use crate::render::{render_lines, render_loss_curves};
use crate::synthetic::{BlobClass, SlideSpec};

#[derive(Parser, Debug)]
#[command(
    name = "cishmap",
    version,
    about = "Unsupervised tile features and fuzzy class maps for brightfield slides"
)]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config key; repeatable. Applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Shorthand for `--set train.seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutDir {
    /// Output directory (created if missing). Falls back to `paths.out`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SlideArg {
    /// Slide PNG (8-bit gray or RGB). Falls back to `paths.slide`.
    #[arg(long, value_name = "PNG")]
    pub slide: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a tissue mask (mask.png + mask.json).
    Mask {
        #[command(flatten)]
        slide: SlideArg,
        #[command(flatten)]
        out: OutDir,
    },
    /// Cut tissue tiles (tiles.jsonl + tiles.bin).
    Tile {
        #[command(flatten)]
        slide: SlideArg,
        /// Mask PNG from `mask`.
        #[arg(long, value_name = "PNG")]
        mask: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train the autoencoder (model.cae, model.dot, loss.csv, loss.svg).
    Train {
        /// Directory holding tiles.jsonl and tiles.bin.
        #[arg(long, value_name = "DIR")]
        tiles: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Encode tiles to latent codes (latents.csv).
    Encode {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "DIR")]
        tiles: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Fuzzy c-means on latent codes (memberships.csv + clusters.json).
    Cluster {
        #[arg(long, value_name = "CSV")]
        latents: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Class map, latent scatter and, if given, the loss curve.
    Render {
        #[command(flatten)]
        slide: SlideArg,
        #[arg(long, value_name = "CSV")]
        latents: PathBuf,
        #[arg(long, value_name = "CSV")]
        memberships: PathBuf,
        /// clusters.json from `cluster`, for centroid markers.
        #[arg(long, value_name = "JSON")]
        clusters: Option<PathBuf>,
        /// loss.csv from `train`.
        #[arg(long, value_name = "CSV")]
        loss: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// mask → tile → train → encode → cluster → render.
    Pipeline {
        #[command(flatten)]
        slide: SlideArg,
        #[command(flatten)]
        out: OutDir,
    },
    /// Partition coefficient for each cluster count in a range (sweep.csv, sweep.svg).
    SweepC {
        #[arg(long, value_name = "CSV")]
        latents: PathBuf,
        #[arg(long, default_value_t = 2)]
        from: usize,
        #[arg(long, default_value_t = 10)]
        to: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train once per optimizer from the same initial weights (optimizers.csv/.svg).
    CompareOptimizers {
        #[arg(long, value_name = "DIR")]
        tiles: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train with MSE and with MAE (losses.csv/.svg, losses.json).
    CompareLoss {
        #[arg(long, value_name = "DIR")]
        tiles: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train the linear-only variant (ablation.csv/.svg).
    AblateNoconv {
        #[arg(long, value_name = "DIR")]
        tiles: PathBuf,
        /// Also train the convolutional model for comparison.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Write a synthetic slide with ground truth.
    #[command(hide = true)]
    GenSynthetic {
        #[arg(long, default_value_t = 1200)]
        width: usize,
        #[arg(long, default_value_t = 900)]
        height: usize,
        #[arg(long, default_value_t = 7)]
        slide_seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Mask { .. } => "mask",
            Command::Tile { .. } => "tile",
            Command::Train { .. } => "train",
            Command::Encode { .. } => "encode",
            Command::Cluster { .. } => "cluster",
            Command::Render { .. } => "render",
            Command::Pipeline { .. } => "pipeline",
            Command::SweepC { .. } => "sweep-c",
            Command::CompareOptimizers { .. } => "compare-optimizers",
            Command::CompareLoss { .. } => "compare-loss",
            Command::AblateNoconv { .. } => "ablate-noconv",
            Command::GenSynthetic { .. } => "gen-synthetic",
        }
    }

    fn out(&self) -> &OutDir {
        match self {
            Command::Mask { out, .. }
            | Command::Tile { out, .. }
            | Command::Train { out, .. }
            | Command::Encode { out, .. }
            | Command::Cluster { out, .. }
            | Command::Render { out, .. }
            | Command::Pipeline { out, .. }
            | Command::SweepC { out, .. }
            | Command::CompareOptimizers { out, .. }
            | Command::CompareLoss { out, .. }
            | Command::AblateNoconv { out, .. }
            | Command::GenSynthetic { out, .. } => out,
        }
    }

    fn slide(&self) -> Option<&SlideArg> {
        match self {
            Command::Mask { slide, .. }
            | Command::Tile { slide, .. }
            | Command::Render { slide, .. }
            | Command::Pipeline { slide, .. } => Some(slide),
            _ => None,
        }
    }
}

/// Config file, then `--set` pairs, then dedicated flags.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)
            .with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.command.out().out {
        cfg.out = Some(out.clone());
    }
    if let Some(slide) = cli.command.slide().and_then(|s| s.slide.clone()) {
        cfg.slide = Some(slide);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_slide(cfg: &PipelineConfig) -> anyhow::Result<PathBuf> {
    match &cfg.slide {
        Some(p) => Ok(p.clone()),
        None => bail!("no slide given (use --slide or paths.slide)"),
    }
}

fn slide_dims(path: &Path) -> anyhow::Result<(usize, usize)> {
    let (w, h) =
        image::image_dimensions(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((w as usize, h as usize))
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    let out = match &cfg.out {
        Some(p) => p.clone(),
        None => bail!("no output directory given (use --out or paths.out)"),
    };
    ensure_dir(&out)?;
    let name = cli.command.name();
    let mut log = RunLog::default();

    match &cli.command {
        Command::Mask { .. } => {
            let slide = load_slide(&require_slide(&cfg)?, &cfg).context("loading slide")?;
            log.time("mask", |l| mask_stage(&slide, &cfg, &out, l))
                .context("stage mask")?;
        }
        Command::Tile { mask, .. } => {
            let slide = load_slide(&require_slide(&cfg)?, &cfg).context("loading slide")?;
            let mask = Mask::load_png(mask, cfg.scale)
                .with_context(|| format!("loading mask {}", mask.display()))?;
            log.time("tile", |l| tile_stage(&slide, &mask, &cfg, &out, l))
                .context("stage tile")?;
        }
        Command::Train { tiles, .. } => {
            let tiles = load_tiles(tiles).context("loading tiles")?;
            log.time("train", |l| train_stage(&tiles, &cfg, &out, l))
                .context("stage train")?;
        }
        Command::Encode { model, tiles, .. } => {
            let tiles = load_tiles(tiles).context("loading tiles")?;
            let model = load_model_for(model, tile_side(&tiles)?).context("loading model")?;
            log.time("encode", |l| encode_stage(&model, &tiles, &out, l))
                .context("stage encode")?;
        }
        Command::Cluster { latents, .. } => {
            let latents = read_latents(latents).context("loading latents")?;
            log.time("cluster", |l| cluster_stage(&latents, &cfg, &out, l))
                .context("stage cluster")?;
        }
        Command::Render {
            latents,
            memberships,
            clusters,
            loss,
            ..
        } => {
            let dims = slide_dims(&require_slide(&cfg)?)?;
            let latents = read_latents(latents).context("loading latents")?;
            let u = read_memberships_file(memberships).context("loading memberships")?;
            let centroids = match clusters {
                Some(p) => Some(Matrix::from_rows(
                    &read_clusters(p).context("loading clusters")?.centroids,
                )?),
                None => None,
            };
            log.time("render", |l| {
                render_stage(
                    dims,
                    cfg.tile.tile_side,
                    &latents,
                    &u,
                    centroids.as_ref(),
                    &cfg,
                    &out,
                    l,
                )?;
                if let Some(p) = loss {
                    let h = read_history(p)?;
                    write_svg(
                        &out.join(LOSS_SVG),
                        &crate::render::render_loss_curve(&h)?,
                        l,
                    )?;
                }
                Ok(())
            })
            .context("stage render")?;
        }
        Command::Pipeline { .. } => {
            run_pipeline(&require_slide(&cfg)?, &cfg, &out, &mut log)?;
        }
        Command::SweepC {
            latents, from, to, ..
        } => {
            let latents = read_latents(latents).context("loading latents")?;
            log.time("sweep", |l| {
                let rows = fpc_sweep(&latent_matrix(&latents)?, *from, *to, &cfg.fcm_config())?;
                let p = out.join("sweep.csv");
                write_sweep(&p, &rows)?;
                l.wrote(p);
                if rows.len() >= 2 {
                    let series = vec![("fpc".to_string(), rows.iter().map(|r| r.1).collect())];
                    write_svg(
                        &out.join("sweep.svg"),
                        &render_lines(&series, *from as f64, "clusters", "FPC")?,
                        l,
                    )?;
                }
                Ok(())
            })
            .context("sweep-c")?;
        }
        Command::CompareOptimizers { tiles, .. } => {
            let tiles = load_tiles(tiles).context("loading tiles")?;
            let data = pixels(&tiles);
            let arch = arch_for_side(tile_side(&tiles)?)?;
            let mut series = Vec::new();
            for kind in OptimizerKind::ALL {
                let h = log.time(&format!("train-{kind}"), |_| {
                    let mut model = Autoencoder::<f32>::build(&arch, cfg.seed)?;
                    let mut tc = cfg.train_config();
                    tc.optimizer = OptimizerConfig::defaults(kind);
                    train(&mut model, &data, &tc)
                })?;
                println!(
                    "{kind:<9} final loss {:.6}",
                    h.last().copied().unwrap_or(f64::NAN)
                );
                series.push((kind.to_string(), h));
            }
            write_comparison(&out, "optimizers", &series, &mut log)?;
        }
        Command::CompareLoss { tiles, .. } => {
            let tiles = load_tiles(tiles).context("loading tiles")?;
            let data = pixels(&tiles);
            let arch = arch_for_side(tile_side(&tiles)?)?;
            let mut series = Vec::new();
            let mut summary = serde_json::Map::new();
            for loss in [LossKind::Mse, LossKind::Mae] {
                let (model, h) = log.time(&format!("train-{loss}"), |_| {
                    let mut model = Autoencoder::<f32>::build(&arch, cfg.seed)?;
                    let tc = crate::model::TrainConfig {
                        loss,
                        ..cfg.train_config()
                    };
                    let h = train(&mut model, &data, &tc)?;
                    Ok((model, h))
                })?;
                // Both models scored on the same reconstruction metric.
                let (mut mse, mut mae) = (0.0, 0.0);
                for t in &data {
                    let r = model.reconstruct(t)?;
                    mse += LossKind::Mse.value(&r, t)?;
                    mae += LossKind::Mae.value(&r, t)?;
                }
                let n = data.len() as f64;
                println!(
                    "trained on {loss}: reconstruction mse {:.6}, mae {:.6}",
                    mse / n,
                    mae / n
                );
                summary.insert(
                    loss.to_string(),
                    serde_json::json!({ "final_training_loss": h.last(), "reconstruction_mse": mse / n, "reconstruction_mae": mae / n }),
                );
                series.push((loss.to_string(), h));
            }
            write_comparison(&out, "losses", &series, &mut log)?;
            let p = out.join("losses.json");
            std::fs::write(&p, serde_json::to_string_pretty(&summary)?)?;
            log.wrote(p);
        }
        Command::AblateNoconv {
            tiles, baseline, ..
        } => {
            let tiles = load_tiles(tiles).context("loading tiles")?;
            let data = pixels(&tiles);
            let arch = arch_for_side(tile_side(&tiles)?)?;
            let mut variants = vec![("noconv".to_string(), arch.without_convolution())];
            if *baseline {
                variants.push(("conv".to_string(), arch));
            }
            let mut series = Vec::new();
            for (label, a) in variants {
                let h = log.time(&format!("train-{label}"), |_| {
                    let mut model = Autoencoder::<f32>::build(&a, cfg.seed)?;
                    train(&mut model, &data, &cfg.train_config())
                })?;
                println!(
                    "{label:<7} final loss {:.6}",
                    h.last().copied().unwrap_or(f64::NAN)
                );
                series.push((label, h));
            }
            write_comparison(&out, "ablation", &series, &mut log)?;
        }
        Command::GenSynthetic {
            width,
            height,
            slide_seed,
            ..
        } => {
            let spec = SlideSpec {
                width: *width,
                height: *height,
                seed: *slide_seed,
                scale: cfg.scale,
                ..SlideSpec::default()
            };
            log.time("generate", |l| write_synthetic(&spec, &out, l))?;
        }
    }

    write_run_files(&out, name, &cfg, &log)?;
    Ok(())
}

fn write_comparison(
    out: &Path,
    stem: &str,
    series: &[(String, Vec<f64>)],
    log: &mut RunLog,
) -> anyhow::Result<()> {
    let csv = out.join(format!("{stem}.csv"));
    write_histories(&csv, series)?;
    log.wrote(csv);
    if series.iter().all(|(_, h)| h.len() >= 2) {
        write_svg(
            &out.join(format!("{stem}.svg")),
            &render_loss_curves(series)?,
            log,
        )?;
    }
    Ok(())
}

/// `slide.png`, `regions.png` (0 outside tissue, 128 sparse, 255 dense) and
/// `truth.json`.
pub fn write_synthetic(spec: &SlideSpec, out: &Path, log: &mut RunLog) -> crate::Result<()> {
    let s = spec.generate();
    let slide = out.join("slide.png");
    s.image.save_png(&slide)?;
    let regions: Vec<f32> = s
        .regions
        .iter()
        .map(|r| match r {
            None => 0.0,
            Some(BlobClass::Sparse) => 128.0 / 255.0,
            Some(BlobClass::Dense) => 1.0,
        })
        .collect();
    let rp = out.join("regions.png");
    GrayImage::new(spec.width, spec.height, regions, spec.scale)?.save_png(&rp)?;
    let tp = out.join("truth.json");
    std::fs::write(&tp, serde_json::to_string_pretty(spec)?)
        .map_err(|e| crate::Error::io(&tp, e))?;
    log.wrote(slide);
    log.wrote(rp);
    log.wrote(tp);
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
