mod common;

use common::*;

use cishmap::fcm::{
    fcm_fit, fcm_fit_from, fpc, fpc_sweep, initial_partition, read_memberships, update_centroids,
    update_memberships, write_memberships, write_sweep, FcmConfig, Matrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn fit_matches_naive_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
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
            let pts = Matrix::from_rows(&x).unwrap();
            let fit = fcm_fit_from(&pts, u0.clone(), &cfg).unwrap();
            let (v, u) = naive_fcm(&x, rows(&u0), m, fit.iterations);
            for i in 0..50 {
                for j in 0..c {
                    assert!(
                        (fit.memberships.get(i, j) - u[i][j]).abs() < 1e-6,
                        "c={c} m={m}"
                    );
                }
            }
            for j in 0..c {
                for k in 0..2 {
                    assert!(
                        (fit.centroids.get(j, k) - v[j][k]).abs() < 1e-6,
                        "c={c} m={m}"
                    );
                }
            }
        }
    }
}

#[test]
fn centroids_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = random_points(12, &mut rng);
    let u0 = initial_partition(12, 4, 3);
    let v = update_centroids(&Matrix::from_rows(&x).unwrap(), &u0, 1.6).unwrap();
    for j in 0..4 {
        for k in 0..2 {
            let num: f64 = (0..12).map(|i| u0.get(i, j).powf(1.6) * x[i][k]).sum();
            let den: f64 = (0..12).map(|i| u0.get(i, j).powf(1.6)).sum();
            assert!((v.get(j, k) - num / den).abs() < 1e-12);
        }
    }
}

#[test]
fn partitions_stay_row_stochastic_and_fpc_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for c in 2..=8 {
        let x = Matrix::from_rows(&random_points(40, &mut rng)).unwrap();
        let r = fcm_fit(
            &x,
            &FcmConfig {
                c,
                ..FcmConfig::default()
            },
        )
        .unwrap();
        for i in 0..40 {
            let row = r.memberships.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert!(r.fpc >= 1.0 / c as f64 - 1e-12 && r.fpc <= 1.0 + 1e-12);
        assert!(r.centroids.data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn separated_blobs_get_confident_memberships() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut x = Vec::new();
    for i in 0..60 {
        let cx = if i % 2 == 0 { 0.0 } else { 5.0 };
        x.push(vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
    }
    let r = fcm_fit(
        &Matrix::from_rows(&x).unwrap(),
        &FcmConfig {
            c: 2,
            ..FcmConfig::default()
        },
    )
    .unwrap();
    let label0 = r.memberships.argmax_row(0);
    for i in 0..60 {
        let j = r.memberships.argmax_row(i);
        assert_eq!(j == label0, i % 2 == 0);
        assert!(r.memberships.get(i, j) > 0.9, "point {i}");
    }
}

#[test]
fn permuted_start_permutes_result() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = Matrix::from_rows(&random_points(30, &mut rng)).unwrap();
    let cfg = FcmConfig {
        c: 3,
        ..FcmConfig::default()
    };
    let u0 = initial_partition(30, 3, 5);
    let perm = [2usize, 0, 1];
    let mut permuted = Matrix::zeros(30, 3);
    for i in 0..30 {
        for j in 0..3 {
            permuted.row_mut(i)[perm[j]] = u0.get(i, j);
        }
    }
    let a = fcm_fit_from(&x, u0, &cfg).unwrap();
    let b = fcm_fit_from(&x, permuted, &cfg).unwrap();
    assert_eq!(a.iterations, b.iterations);
    for i in 0..30 {
        for j in 0..3 {
            assert!((a.memberships.get(i, j) - b.memberships.get(i, perm[j])).abs() < 1e-9);
        }
    }
}

#[test]
fn converged_state_is_nearly_fixed() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = Matrix::from_rows(&random_points(50, &mut rng)).unwrap();
    let cfg = FcmConfig {
        c: 4,
        max_iter: 1000,
        ..FcmConfig::default()
    };
    let r = fcm_fit(&x, &cfg).unwrap();
    assert!(r.iterations < cfg.max_iter);
    let v = update_centroids(&x, &r.memberships, cfg.m).unwrap();
    let u = update_memberships(&x, &v, cfg.m).unwrap();
    assert!(u.max_abs_diff(&r.memberships) < cfg.tol);
}

#[test]
fn fpc_exact_limits() {
    for c in [2usize, 3, 7] {
        let uniform = Matrix::new(5, c, vec![1.0 / c as f64; 5 * c]).unwrap();
        assert!((fpc(&uniform) - 1.0 / c as f64).abs() < 1e-12);
        let mut hard = Matrix::zeros(5, c);
        for i in 0..5 {
            hard.row_mut(i)[i % c] = 1.0;
        }
        assert!((fpc(&hard) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fpc_falls_with_more_clusters_on_a_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let x: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let t: f64 = rng.gen_range(0.0..10.0);
            vec![t, 0.5 * t + rng.gen_range(-0.1..0.1)]
        })
        .collect();
    let sweep = fpc_sweep(&Matrix::from_rows(&x).unwrap(), 2, 7, &FcmConfig::default()).unwrap();
    assert_eq!(sweep.len(), 6);
    assert!(sweep[0].1 > sweep[5].1, "{sweep:?}");
}

#[test]
fn csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = Matrix::from_rows(&random_points(10, &mut rng)).unwrap();
    let r = fcm_fit(
        &x,
        &FcmConfig {
            c: 3,
            ..FcmConfig::default()
        },
    )
    .unwrap();
    let ids: Vec<usize> = (100..110).collect();
    let p = dir.path().join("u.csv");
    write_memberships(&p, &ids, &r.memberships).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("tile_id,u_1,u_2,u_3,argmax_class\n"));
    let (ids2, u2) = read_memberships(&p).unwrap();
    assert_eq!(ids2, ids);
    assert_eq!(u2, r.memberships);

    let s = dir.path().join("sweep.csv");
    write_sweep(&s, &fpc_sweep(&x, 2, 10, &FcmConfig::default()).unwrap()).unwrap();
    assert_eq!(std::fs::read_to_string(&s).unwrap().lines().count(), 10);
}
