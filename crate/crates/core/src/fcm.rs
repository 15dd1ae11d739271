//! Fuzzy c-means on low-dimensional points, with the partition coefficient.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `rows × cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim("matrix", format!("{rows}x{cols}"), data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dim("matrix rows", cols, bad.len()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Column of the largest entry in row `i`; ties go to the lowest column.
    pub fn argmax_row(&self, i: usize) -> usize {
        argmax(self.row(i))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |best, j| if v[j] > v[best] { j } else { best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub c: usize,
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            c: 7,
            m: 1.8,
            tol: 1e-5,
            max_iter: 300,
            seed: 0,
        }
    }
}

impl FcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 clusters, got {}",
                self.c
            )));
        }
        if !(self.m > 1.0 && self.m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "fuzziness m must exceed 1, got {}",
                self.m
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcmResult {
    /// `c × d`.
    pub centroids: Matrix,
    /// `n × c`, rows sum to one.
    pub memberships: Matrix,
    pub iterations: usize,
    pub fpc: f64,
}

/// `c_j = Σ_i u_ij^m x_i / Σ_i u_ij^m`, summed in point order.
pub fn update_centroids(points: &Matrix, u: &Matrix, m: f64) -> Result<Matrix> {
    if points.rows() != u.rows() || points.rows() == 0 {
        return Err(Error::dim("update_centroids", points.rows(), u.rows()));
    }
    let (c, d) = (u.cols(), points.cols());
    let mut num = Matrix::zeros(c, d);
    let mut den = vec![0.0; c];
    for i in 0..points.rows() {
        let x = points.row(i);
        for j in 0..c {
            let w = u.get(i, j).powf(m);
            den[j] += w;
            for (acc, &xv) in num.row_mut(j).iter_mut().zip(x) {
                *acc += w * xv;
            }
        }
    }
    for (j, &s) in den.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::DegenerateCluster(j));
        }
        num.row_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    Ok(num)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `u_ij = 1 / Σ_k (d_ij / d_ik)^(2/(m−1))`. A point sitting on one or more
/// centroids splits its membership equally among them.
pub fn update_memberships(points: &Matrix, centroids: &Matrix, m: f64) -> Result<Matrix> {
    if points.cols() != centroids.cols() {
        return Err(Error::dim(
            "update_memberships",
            centroids.cols(),
            points.cols(),
        ));
    }
    let c = centroids.rows();
    let p = 2.0 / (m - 1.0);
    let mut u = Matrix::zeros(points.rows(), c);
    u.data.par_chunks_mut(c).enumerate().for_each(|(i, row)| {
        let x = points.row(i);
        let d: Vec<f64> = (0..c).map(|j| distance(x, centroids.row(j))).collect();
        let zeros = d.iter().filter(|&&v| v == 0.0).count();
        if zeros > 0 {
            for (out, &dv) in row.iter_mut().zip(&d) {
                *out = if dv == 0.0 { 1.0 / zeros as f64 } else { 0.0 };
            }
            return;
        }
        for (j, out) in row.iter_mut().enumerate() {
            let s: f64 = d.iter().map(|&dk| (d[j] / dk).powf(p)).sum();
            *out = 1.0 / s;
        }
    });
    Ok(u)
}

/// Mean squared membership.
pub fn fpc(u: &Matrix) -> f64 {
    u.data.iter().map(|v| v * v).sum::<f64>() / u.rows() as f64
}

/// Seeded uniform entries, each row normalized to sum to one.
pub fn initial_partition(n: usize, c: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Matrix::zeros(n, c);
    for i in 0..n {
        let row = u.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.gen_range(f64::EPSILON..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    u
}

pub fn fcm_fit(points: &Matrix, config: &FcmConfig) -> Result<FcmResult> {
    config.validate()?;
    fcm_fit_from(
        points,
        initial_partition(points.rows(), config.c, config.seed),
        config,
    )
}

/// Alternates centroid and membership updates from a given partition until
/// the largest membership change drops below `tol`.
pub fn fcm_fit_from(points: &Matrix, initial: Matrix, config: &FcmConfig) -> Result<FcmResult> {
    config.validate()?;
    let n = points.rows();
    if n < config.c {
        return Err(Error::InvalidArgument(format!(
            "{n} points cannot fill {} clusters",
            config.c
        )));
    }
    if initial.rows() != n || initial.cols() != config.c {
        return Err(Error::dim(
            "fcm initial partition",
            format!("{n}x{}", config.c),
            format!("{}x{}", initial.rows(), initial.cols()),
        ));
    }
    let mut u = initial;
    let mut centroids = Matrix::zeros(config.c, points.cols());
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        centroids = update_centroids(points, &u, config.m)?;
        let next = update_memberships(points, &centroids, config.m)?;
        let delta = next.max_abs_diff(&u);
        u = next;
        if delta < config.tol {
            break;
        }
    }
    log::debug!(
        "fcm c={} m={} stopped after {iterations} iterations",
        config.c,
        config.m
    );
    Ok(FcmResult {
        fpc: fpc(&u),
        centroids,
        memberships: u,
        iterations,
    })
}

/// One fit per cluster count in `from..=to`, returning `(c, fpc)`.
pub fn fpc_sweep(
    points: &Matrix,
    from: usize,
    to: usize,
    base: &FcmConfig,
) -> Result<Vec<(usize, f64)>> {
    if from > to {
        return Err(Error::InvalidArgument(format!(
            "empty sweep range {from}..={to}"
        )));
    }
    (from..=to)
        .map(|c| {
            let cfg = FcmConfig { c, ..base.clone() };
            Ok((c, fcm_fit(points, &cfg)?.fpc))
        })
        .collect()
}

/// JSON summary of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcmSummary {
    pub config: FcmConfig,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    pub fpc: f64,
}

impl FcmSummary {
    pub fn new(result: &FcmResult, config: &FcmConfig) -> Self {
        Self {
            config: config.clone(),
            centroids: (0..result.centroids.rows())
                .map(|j| result.centroids.row(j).to_vec())
                .collect(),
            iterations: result.iterations,
            fpc: result.fpc,
        }
    }
}

/// `tile_id,u_1,…,u_c,argmax_class`, classes numbered from one.
pub fn write_memberships(path: &Path, ids: &[usize], u: &Matrix) -> Result<()> {
    if ids.len() != u.rows() {
        return Err(Error::dim("write_memberships", u.rows(), ids.len()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["tile_id".to_string()];
    header.extend((1..=u.cols()).map(|j| format!("u_{j}")));
    header.push("argmax_class".into());
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(u.row(i).iter().map(|v| v.to_string()));
        rec.push((u.argmax_row(i) + 1).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads back a memberships CSV as `(tile ids, U)`.
pub fn read_memberships(path: &Path) -> Result<(Vec<usize>, Matrix)> {
    let mut r = csv::Reader::from_path(path)?;
    let c = r.headers()?.len().saturating_sub(2);
    if c < 1 {
        return Err(Error::InvalidArgument(format!(
            "{}: no membership columns",
            path.display()
        )));
    }
    let (mut ids, mut data) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| {
                Error::InvalidArgument(format!("{}: bad number {s:?}: {e}", path.display()))
            })
        };
        ids.push(parse(&rec[0])? as usize);
        for j in 0..c {
            data.push(parse(&rec[j + 1])?);
        }
    }
    let n = ids.len();
    Ok((ids, Matrix::new(n, c, data)?))
}

pub fn write_sweep(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["c", "fpc"])?;
    for (c, f) in rows {
        w.write_record([c.to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
