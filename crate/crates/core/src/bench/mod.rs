//! Synthetic Gaussian benchmark, analytic ground truth and the KSG baseline.

mod kdtree;

use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mind::{mutual_information, MiOptions};
use crate::rng::{stream_id, Stream};
use crate::special::digamma;

use kdtree::KdTree;

/// Above this many rows the KSG neighbour search uses a kd-tree.
pub const KSG_BRUTE_FORCE_MAX_N: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairConfig {
    /// Number of `(x_i, y_i)` pairs.
    pub d: usize,
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
}

impl GaussianPairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::TooFewRows { needed: 2, got: self.n });
        }
        Ok(())
    }
}

/// `n` rows of `d` independent standard bivariate normal pairs with correlation `rho`.
pub fn gen_gaussian_pairs(config: &GaussianPairConfig) -> Result<(Array2<f64>, Array2<f64>)> {
    config.validate()?;
    let GaussianPairConfig { d, rho, n, seed } = *config;
    let mut rng = Stream::new(seed, stream_id(&[0x6761_7573, d as u64]));
    let c = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, d));
    for r in 0..n {
        for i in 0..d {
            let a = rng.normal();
            let b = rng.normal();
            x[[r, i]] = a;
            y[[r, i]] = rho * a + c * b;
        }
    }
    Ok((x, y))
}

/// `-(d/2) ln(1 - rho^2)`.
pub fn true_gaussian_mi(d: usize, rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("|rho| must be < 1, got {rho}")));
    }
    Ok(-0.5 * d as f64 * (-rho * rho).ln_1p())
}

/// Spearman correlation of a bivariate normal with Pearson correlation `rho`.
pub fn spearman_from_pearson(rho: f64) -> f64 {
    6.0 / std::f64::consts::PI * (rho / 2.0).asin()
}

/// Kraskov–Stögbauer–Grassberger estimator (first variant, max norm).
pub fn ksg_mi(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, neighbors: usize) -> Result<f64> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.nrows() });
    }
    if neighbors == 0 || n <= neighbors {
        return Err(Error::InvalidParameter(format!(
            "need n > neighbors >= 1 (n = {n}, neighbors = {neighbors})"
        )));
    }
    let (x, y) = (x.as_standard_layout(), y.as_standard_layout());
    let (x, y) = (x.view(), y.view());
    let counts = if n > KSG_BRUTE_FORCE_MAX_N {
        ksg_counts_tree(x, y, neighbors)?
    } else {
        ksg_counts_brute(x, y, neighbors)?
    };
    let mean: f64 = counts
        .iter()
        .map(|&(nx, ny)| digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0))
        .sum::<f64>()
        / n as f64;
    Ok(digamma(neighbors as f64) + digamma(n as f64) - mean)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn row<'a>(m: &'a ArrayView2<'_, f64>, i: usize) -> &'a [f64] {
    let d = m.ncols();
    &m.as_slice().expect("standard layout")[i * d..(i + 1) * d]
}

pub(crate) fn ksg_counts_brute(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    let n = x.nrows();
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        best.clear();
        let (xi, yi) = (row(&x, i), row(&y, i));
        for j in 0..n {
            dx[j] = max_abs_diff(xi, row(&x, j));
            dy[j] = max_abs_diff(yi, row(&y, j));
            if j == i {
                continue;
            }
            let dz = dx[j].max(dy[j]);
            if best.len() < k || dz < best[k - 1] {
                let pos = best.partition_point(|&b| b <= dz);
                best.insert(pos, dz);
                best.truncate(k);
            }
        }
        let eps = best[k - 1];
        if eps == 0.0 {
            return Err(Error::DuplicatePoints(i));
        }
        let nx = (0..n).filter(|&j| j != i && dx[j] < eps).count();
        let ny = (0..n).filter(|&j| j != i && dy[j] < eps).count();
        out.push((nx, ny));
    }
    Ok(out)
}

pub(crate) fn ksg_counts_tree(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    k: usize,
) -> Result<Vec<(usize, usize)>> {
    let n = x.nrows();
    let (dx, dy) = (x.ncols(), y.ncols());
    let mut joint = Vec::with_capacity(n * (dx + dy));
    for i in 0..n {
        joint.extend_from_slice(row(&x, i));
        joint.extend_from_slice(row(&y, i));
    }
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice().expect("standard layout");
    let tz = KdTree::new(&joint, dx + dy);
    let tx = KdTree::new(xs, dx);
    let ty = KdTree::new(ys, dy);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let eps = tz.kth_distance(&joint[i * (dx + dy)..(i + 1) * (dx + dy)], k, i);
        if eps == 0.0 {
            return Err(Error::DuplicatePoints(i));
        }
        out.push((
            tx.count_within(row(&x, i), eps, i),
            ty.count_within(row(&y, i), eps, i),
        ));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Mind,
    Ksg,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mind" => Ok(Estimator::Mind),
            "ksg" => Ok(Estimator::Ksg),
            other => Err(Error::InvalidParameter(format!("unknown estimator `{other}`"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Mind => "mind",
            Estimator::Ksg => "ksg",
        })
    }
}

/// One line of the benchmark CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub estimator: Estimator,
    pub d: usize,
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
    pub estimate: f64,
    pub truth: f64,
    pub abs_error: f64,
    pub wall_ms: f64,
}

/// Runs each estimator on one generated batch.
pub fn run_gaussian(
    config: &GaussianPairConfig,
    estimators: &[Estimator],
    mi: &MiOptions,
    ksg_neighbors: usize,
) -> Result<Vec<BenchRow>> {
    let (x, y) = gen_gaussian_pairs(config)?;
    let truth = true_gaussian_mi(config.d, config.rho)?;
    let mut rows = Vec::with_capacity(estimators.len());
    for &est in estimators {
        let start = Instant::now();
        let estimate = match est {
            Estimator::Mind => {
                let opts = MiOptions {
                    solver: mi.solver.clone().with_seed(config.seed),
                    ..mi.clone()
                };
                mutual_information(x.view(), y.view(), &opts)?.mi_nats
            }
            Estimator::Ksg => ksg_mi(x.view(), y.view(), ksg_neighbors)?,
        };
        rows.push(BenchRow {
            estimator: est,
            d: config.d,
            rho: config.rho,
            n: config.n,
            seed: config.seed,
            estimate,
            truth,
            abs_error: (estimate - truth).abs(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(rows)
}

/// Pearson correlation of two columns.
pub fn pearson(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Column `i` of `x` next to column `i` of `y`.
pub fn pair_columns(x: &Array2<f64>, y: &Array2<f64>, i: usize) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), 2));
    out.slice_mut(s![.., 0]).assign(&x.column(i));
    out.slice_mut(s![.., 1]).assign(&y.column(i));
    out
}
