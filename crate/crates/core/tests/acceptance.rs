//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, even when an earlier one fails.
//!
//! Set `CISHMAP_ACCEPTANCE_FULL=1` to also run the 300×300 learning check.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cishmap::config::PipelineConfig;
use cishmap::fcm::{fcm_fit_from, fpc, fpc_sweep, initial_partition, FcmConfig, Matrix};
use cishmap::image::{GrayImage, Mask};
use cishmap::masking::{build_mask, triangle_threshold, MaskParams};
use cishmap::model::io::to_bytes;
use cishmap::model::{
    load_model, random_tile, save_model, train, ArchSpec, Autoencoder, TrainConfig,
};
use cishmap::pipeline::{run_pipeline, RunLog};
use cishmap::synthetic::{blob_tile_set, SlideSpec};
use cishmap::tiling::{enumerate_positions, extract_tiles, TileSpec};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn require(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradients() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    let f32_errs: Vec<_> = layer_errors::<f32>(1e-3)
        .into_iter()
        .chain(loss_errors::<f32>(1e-3))
        .collect();
    let f64_errs: Vec<_> = layer_errors::<f64>(1e-5)
        .into_iter()
        .chain(loss_errors::<f64>(1e-5))
        .collect();
    for ((name, e32), (_, e64)) in f32_errs.iter().zip(&f64_errs) {
        ok &= *e32 < 1e-3 && *e64 < 1e-6;
        lines.push(format!("{name} {e32:.1e}/{e64:.1e}"));
    }
    ok &= f32_errs.len() == 9;
    require(
        ok,
        format!("{SEEDS} seeds, f32/f64 worst rel err: {}", lines.join(", ")),
    )
}

fn architecture() -> Check {
    let m = Autoencoder::<f32>::build(&ArchSpec::standard(), 0).map_err(|e| e.to_string())?;
    let trace = m.shape_trace().map_err(|e| e.to_string())?;
    let want: Vec<Vec<usize>> = vec![
        vec![4, 150, 150],
        vec![8, 75, 75],
        vec![16, 25, 25],
        vec![32, 5, 5],
        vec![800],
        vec![100],
        vec![25],
        vec![2],
        vec![25],
        vec![100],
        vec![800],
        vec![32, 5, 5],
        vec![16, 25, 25],
        vec![8, 75, 75],
        vec![4, 150, 150],
        vec![1, 300, 300],
    ];
    let ok = m.input_shape == [1, 300, 300] && trace == want && m.counted_blocks() == 14;
    require(
        ok,
        format!(
            "{} counted blocks, output {:?}",
            m.counted_blocks(),
            trace.last().unwrap()
        ),
    )
}

/// Trains on two-class blob tiles and classifies the codes by nearest class centroid.
fn learning(side: usize, budget: Duration) -> Check {
    let t0 = Instant::now();
    let (tiles, classes) = blob_tile_set(200, side, 11);
    let arch = if side == 300 {
        ArchSpec::standard()
    } else {
        ArchSpec::reduced(side).map_err(|e| e.to_string())?
    };
    let mut model = Autoencoder::<f32>::build(&arch, 0).map_err(|e| e.to_string())?;
    let history = train(&mut model, &tiles, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let codes: Vec<[f64; 2]> = tiles
        .iter()
        .map(|t| {
            let z = model.encode(t).unwrap();
            [z.data()[0] as f64, z.data()[1] as f64]
        })
        .collect();
    let mut centroid = [[0.0; 2]; 2];
    let mut count = [0.0; 2];
    for (z, c) in codes.iter().zip(&classes) {
        let l = c.label();
        centroid[l][0] += z[0];
        centroid[l][1] += z[1];
        count[l] += 1.0;
    }
    for l in 0..2 {
        centroid[l] = [centroid[l][0] / count[l], centroid[l][1] / count[l]];
    }
    let dist =
        |z: &[f64; 2], l: usize| (z[0] - centroid[l][0]).powi(2) + (z[1] - centroid[l][1]).powi(2);
    let correct = codes
        .iter()
        .zip(&classes)
        .filter(|(z, c)| (if dist(z, 0) <= dist(z, 1) { 0 } else { 1 }) == c.label())
        .count();
    let accuracy = correct as f64 / codes.len() as f64;
    let (first, last) = (history[0], *history.last().unwrap());
    let elapsed = t0.elapsed();
    require(
        last < first / 5.0 && accuracy >= 0.9 && elapsed < budget,
        format!(
            "{side}x{side}: loss {first:.5} -> {last:.5} (x{:.1}), accuracy {accuracy:.3}, {:.0}s (budget {}s)",
            first / last,
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    )
}

fn fcm_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for c in [2, 3, 7] {
        for m in [1.25, 1.8, 1.99] {
            let x = random_points(50, &mut rng);
            let cfg = FcmConfig {
                c,
                m,
                seed: rng.gen(),
                ..FcmConfig::default()
            };
            let u0 = initial_partition(50, c, cfg.seed);
            let fit = fcm_fit_from(&Matrix::from_rows(&x).unwrap(), u0.clone(), &cfg)
                .map_err(|e| e.to_string())?;
            let (v, u) = naive_fcm(&x, rows(&u0), m, fit.iterations);
            for i in 0..50 {
                for j in 0..c {
                    worst = worst.max((fit.memberships.get(i, j) - u[i][j]).abs());
                }
            }
            for j in 0..c {
                for k in 0..2 {
                    worst = worst.max((fit.centroids.get(j, k) - v[j][k]).abs());
                }
            }
        }
    }
    require(
        worst < 1e-6,
        format!("max abs difference {worst:.1e} over c in {{2,3,7}}, m in {{1.25,1.8,1.99}}"),
    )
}

fn fpc_bounds() -> Check {
    let mut exact = true;
    for c in [2usize, 3, 7] {
        let uniform = Matrix::new(6, c, vec![1.0 / c as f64; 6 * c]).unwrap();
        let mut hard = Matrix::zeros(6, c);
        for i in 0..6 {
            hard.row_mut(i)[i % c] = 1.0;
        }
        exact &= (fpc(&uniform) - 1.0 / c as f64).abs() < 1e-12 && (fpc(&hard) - 1.0).abs() < 1e-12;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let line: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen_range(0.0..10.0)]).collect();
    let sweep = fpc_sweep(
        &Matrix::from_rows(&line).unwrap(),
        2,
        7,
        &FcmConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let (f2, f7) = (sweep[0].1, sweep[5].1);
    require(
        exact && f2 > f7,
        format!("hard/uniform exact: {exact}, FPC(2) {f2:.4} > FPC(7) {f7:.4}"),
    )
}

fn mask_behaviour() -> Check {
    let synth = SlideSpec::default().generate();
    let mask = build_mask(&synth.image, &MaskParams::default())
        .map_err(|e| e.to_string())?
        .mask;
    let cover = synth.tissue.intersect(&mask).unwrap().count() as f64 / synth.tissue.count() as f64;
    let hole = synth.hole.intersect(&mask).unwrap().count() as f64 / synth.hole.count() as f64;
    let speck = synth.speck.intersect(&mask).unwrap().count();
    require(
        cover >= 0.99 && hole >= 0.99 && speck == 0,
        format!(
            "ellipse covered {:.2}%, hole {:.2}%, speck pixels {speck}",
            cover * 100.0,
            hole * 100.0
        ),
    )
}

fn tiling() -> Check {
    let spec = |min| TileSpec {
        tile_side: 300,
        stride: 150,
        min_tissue_fraction: min,
    };
    let positions = enumerate_positions(600, 600, &spec(0.5)).map_err(|e| e.to_string())?;
    let slide = GrayImage::filled(600, 600, 0.5, 0.5).unwrap();
    let left = Mask::from_fn(600, 600, 0.5, |x, _| x < 300).unwrap();
    let kept = extract_tiles(&slide, &left, &spec(0.5)).map_err(|e| e.to_string())?;
    require(
        positions.len() == 9 && kept.len() == 6,
        format!(
            "{} positions, {} tiles kept on left-half tissue",
            positions.len(),
            kept.len()
        ),
    )
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SlideSpec {
        width: 600,
        height: 450,
        ..SlideSpec::default()
    };
    let slide = dir.path().join("slide.png");
    spec.generate()
        .image
        .save_png(&slide)
        .map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.apply_text("tile.side = 64\ntile.stride = 32\nmask.erosion_radius = 8\ntrain.seed = 3\n")
        .map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    for run in ["a", "b"] {
        run_pipeline(&slide, &cfg, &dir.path().join(run), &mut RunLog::default())
            .map_err(|e| e.to_string())?;
    }
    let mut same = Vec::new();
    for f in ["latents.csv", "memberships.csv", "model.cae"] {
        let a = std::fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("b").join(f)).map_err(|e| e.to_string())?;
        same.push((f, a == b, a.len()));
    }
    require(
        same.iter().all(|s| s.1),
        format!(
            "{} ({:.0}s for two runs)",
            same.iter()
                .map(|(f, eq, n)| format!(
                    "{f} {} ({n} B)",
                    if *eq { "identical" } else { "DIFFERS" }
                ))
                .collect::<Vec<_>>()
                .join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn triangle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut matches = 0;
    for _ in 0..100 {
        let mut h = [0u64; 256];
        let bg = rng.gen_range(140..250usize);
        let dark = rng.gen_range(10..130usize);
        for _ in 0..rng.gen_range(100..4000) {
            let b = if rng.gen_bool(0.65) {
                (bg as i64 + rng.gen_range(-10..=10)).clamp(0, 255)
            } else {
                (dark as i64 + rng.gen_range(-45..=45)).clamp(0, 255)
            };
            h[b as usize] += 1;
        }
        if triangle_threshold(&h).map_err(|e| e.to_string())? == triangle_oracle(&h) {
            matches += 1;
        }
    }
    require(
        matches == 100,
        format!("{matches}/100 histograms match the exhaustive oracle"),
    )
}

fn persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut identical = 0;
    for i in 0..10 {
        let arch = if i % 5 == 0 {
            ArchSpec::standard()
        } else {
            ArchSpec::reduced([16, 30, 32, 64][i % 4]).unwrap()
        };
        let model = Autoencoder::<f32>::build(&arch, rng.gen()).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{i}.cae"));
        save_model(&model, &path).map_err(|e| e.to_string())?;
        let loaded = load_model(&path).map_err(|e| e.to_string())?;
        let tile = random_tile(&model.input_shape, &mut rng);
        let a = model.encode(&tile).map_err(|e| e.to_string())?;
        let b = loaded.encode(&tile).map_err(|e| e.to_string())?;
        let same_bits = a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        if same_bits && to_bytes(&loaded) == to_bytes(&model) {
            identical += 1;
        }
    }
    require(
        identical == 10,
        format!("{identical}/10 models encode bit-identically after reload"),
    )
}

fn ablation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let exe = env!("CARGO_BIN_EXE_cishmap");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(exe)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!(
                "cishmap {args:?}: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ))
        }
    };
    let ds = d.to_str().unwrap();
    let small = [
        "--set",
        "tile.side=32",
        "--set",
        "tile.stride=32",
        "--set",
        "mask.erosion_radius=4",
    ];
    run(&[
        "gen-synthetic",
        "--width",
        "320",
        "--height",
        "240",
        "--out",
        ds,
    ])?;
    let slide = d.join("slide.png");
    let mask = d.join("mask.png");
    run(&[
        &["mask", "--slide", slide.to_str().unwrap(), "--out", ds][..],
        &small,
    ]
    .concat())?;
    run(&[
        &[
            "tile",
            "--slide",
            slide.to_str().unwrap(),
            "--mask",
            mask.to_str().unwrap(),
            "--out",
            ds,
        ][..],
        &small,
    ]
    .concat())?;
    run(&[
        &[
            "ablate-noconv",
            "--tiles",
            ds,
            "--out",
            ds,
            "--set",
            "train.epochs=20",
        ][..],
        &small,
    ]
    .concat())?;
    let csv = std::fs::read_to_string(d.join("ablation.csv")).map_err(|e| e.to_string())?;
    let svg = std::fs::read_to_string(d.join("ablation.svg")).map_err(|e| e.to_string())?;
    let epochs = csv.lines().count() - 1;
    require(
        epochs == 20 && svg.contains("<polyline"),
        format!(
            "linear-only model trained, ablation.csv has {epochs} epochs, ablation.svg has a curve"
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let full = std::env::var("CISHMAP_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 gradient correctness", Box::new(gradients)),
        ("2 architecture fidelity", Box::new(architecture)),
        (
            "3 desk-scale learning (64x64)",
            Box::new(|| learning(64, Duration::from_secs(120))),
        ),
        ("4 FCM oracle equivalence", Box::new(fcm_oracle)),
        ("5 FPC bounds and trend", Box::new(fpc_bounds)),
        ("6 mask pipeline behaviour", Box::new(mask_behaviour)),
        ("7 tiling arithmetic", Box::new(tiling)),
        ("8 end-to-end determinism", Box::new(determinism)),
        ("9 triangle threshold oracle", Box::new(triangle)),
        ("10 model persistence", Box::new(persistence)),
        ("11 ablation harness", Box::new(ablation)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    if full {
        match learning(300, Duration::from_secs(30 * 60)) {
            Ok(d) => println!("PASS  criterion 3 desk-scale learning (300x300): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion 3 desk-scale learning (300x300): {d}");
            }
        }
    } else {
        println!("SKIP  criterion 3 desk-scale learning (300x300): set CISHMAP_ACCEPTANCE_FULL=1");
    }
    println!(
        "acceptance: {} of {} checks passed",
        criteria.len() - failed.min(criteria.len()),
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
