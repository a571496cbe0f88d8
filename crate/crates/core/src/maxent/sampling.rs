//! Point sets used to approximate integrals over the unit cube.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::rng::{stream_id, Halton, Stream};
use crate::special::{normal_cdf, normal_quantile};
use crate::statistics::StatisticsSpec;

/// How cube points are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Tensor Gauss–Legendre for `d <= 2`, Halton for `d <= 4`,
    /// Gaussian-copula importance sampling for larger specs with cross
    /// terms, plain uniform otherwise.
    #[default]
    Auto,
    Uniform,
    Halton,
    /// Composite tensor Gauss–Legendre rule.
    Grid,
    /// Defensive mixture of a Gaussian copula fitted to the targets and the
    /// uniform density.
    Gaussian,
}

/// Fraction of mixture points drawn from the uniform component.
const DEFENSIVE_WEIGHT: f64 = 0.125;
const EIGEN_FLOOR: f64 = 1e-3;
const SHRINKAGE: f64 = 0.05;

#[derive(Clone, Debug)]
pub(crate) enum Proposal {
    Uniform,
    Halton,
    Grid,
    Gaussian(GaussianCopula),
}

impl Proposal {
    pub fn resolve(sampler: Sampler, spec: &StatisticsSpec, alpha: &[f64]) -> Self {
        let d = spec.d();
        match sampler {
            Sampler::Uniform => Proposal::Uniform,
            Sampler::Halton => Proposal::Halton,
            Sampler::Grid => Proposal::Grid,
            Sampler::Auto if d <= 2 => Proposal::Grid,
            Sampler::Gaussian => Proposal::Gaussian(GaussianCopula::fit(spec, alpha)),
            Sampler::Auto if d <= 4 => Proposal::Halton,
            Sampler::Auto if spec.cross_terms().iter().any(|t| pair_of(t).is_some()) => {
                Proposal::Gaussian(GaussianCopula::fit(spec, alpha))
            }
            Sampler::Auto => Proposal::Uniform,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Proposal::Uniform => "uniform",
            Proposal::Halton => "halton",
            Proposal::Grid => "gauss_legendre",
            Proposal::Gaussian(_) => "gaussian_mixture",
        }
    }

    /// Deterministic rules get no sample-average bias check.
    pub fn is_quasi_random(&self) -> bool {
        matches!(self, Proposal::Halton | Proposal::Grid)
    }

    /// Independent point set for checking a solution.
    pub fn validation_points(&self, d: usize, n: usize, seed: u64, stage: u64) -> PointSet {
        match self {
            Proposal::Grid => Proposal::Halton.points(d, n, seed, stage, 1),
            p => p.points(d, n, seed, stage, 1),
        }
    }

    /// `n` points for the given stage and role; deterministic in all arguments.
    pub fn points(&self, d: usize, n: usize, seed: u64, stage: u64, role: u64) -> PointSet {
        if let Proposal::Grid = self {
            return tensor_gauss_legendre(d, n);
        }
        let id = stream_id(&[stage, role]);
        let mut u = vec![0.0; n * d];
        let mut log_w = vec![0.0; n];
        match self {
            Proposal::Uniform => {
                let mut s = Stream::new(seed, id);
                for x in u.iter_mut() {
                    *x = s.open_uniform();
                }
            }
            Proposal::Grid => unreachable!(),
            Proposal::Halton => {
                let h = Halton::new(d, seed, id);
                for (i, row) in u.chunks_exact_mut(d).enumerate() {
                    h.point(i as u64, row);
                }
            }
            Proposal::Gaussian(g) => {
                let mut s = Stream::new(seed, id);
                let mut z = vec![0.0; d];
                let mut e = vec![0.0; d];
                for (i, (row, lw)) in u.chunks_exact_mut(d).zip(log_w.iter_mut()).enumerate() {
                    if i % 8 == 7 {
                        for (x, zz) in row.iter_mut().zip(z.iter_mut()) {
                            *x = s.open_uniform();
                            *zz = normal_quantile(*x);
                        }
                    } else {
                        for v in e.iter_mut() {
                            *v = s.normal();
                        }
                        for (r, zz) in z.iter_mut().enumerate() {
                            *zz = (0..=r).map(|c| g.chol[(r, c)] * e[c]).sum();
                        }
                        for (x, &zz) in row.iter_mut().zip(&z) {
                            *x = normal_cdf(zz).clamp(1e-300, 1.0);
                        }
                    }
                    *lw = -g.log_mixture_density(&z);
                }
            }
        }
        PointSet { d, n, u, log_w }
    }
}

/// Nodes per panel of the composite rule.
const GAUSS_NODES: usize = 16;

/// Gauss–Legendre nodes and weights on `[0, 1]` (Golub–Welsch).
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v * v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Composite product rule with roughly `n` points (at least `n`).
fn tensor_gauss_legendre(d: usize, n: usize) -> PointSet {
    let per_dim = (n as f64).powf(1.0 / d as f64).ceil() as usize;
    let m = GAUSS_NODES.min(per_dim.max(1));
    let panels = per_dim.div_ceil(m).max(1);
    let (x, w) = gauss_legendre(m);
    let h = 1.0 / panels as f64;
    let mut nodes = Vec::with_capacity(panels * m);
    let mut weights = Vec::with_capacity(panels * m);
    for p in 0..panels {
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push((p as f64 + xi) * h);
            weights.push(wi * h);
        }
    }
    let k = nodes.len();
    let total = k.pow(d as u32);
    let mut u = Vec::with_capacity(total * d);
    let mut log_w = Vec::with_capacity(total);
    let ln_total = (total as f64).ln();
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let mut lw = ln_total;
        for &i in &idx {
            u.push(nodes[i]);
            lw += weights[i].ln();
        }
        log_w.push(lw);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    PointSet {
        d,
        n: total,
        u,
        log_w,
    }
}

fn pair_of(t: &crate::statistics::Term) -> Option<(usize, usize)> {
    match t.exponents.as_slice() {
        [(i, 1), (j, 1)] => Some((*i, *j)),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub(crate) struct GaussianCopula {
    chol: DMatrix<f64>,
    /// `R^{-1} - I`.
    precision_excess: DMatrix<f64>,
    log_det: f64,
}

impl GaussianCopula {
    /// Correlation from the Spearman values implied by the `u_i u_j` targets.
    pub fn fit(spec: &StatisticsSpec, alpha: &[f64]) -> Self {
        let d = spec.d();
        let mut r = DMatrix::<f64>::identity(d, d);
        let offset = spec.q() - spec.cross_terms().len();
        for (k, t) in spec.cross_terms().iter().enumerate() {
            if let Some((i, j)) = pair_of(t) {
                let rho_s = (12.0 * alpha[offset + k] - 3.0).clamp(-1.0, 1.0);
                let rho = 2.0 * (std::f64::consts::PI * rho_s / 6.0).sin();
                r[(i, j)] = rho;
                r[(j, i)] = rho;
            }
        }
        let eig = SymmetricEigen::new(r);
        let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let scale: Vec<f64> = (0..d).map(|i| 1.0 / r[(i, i)].sqrt()).collect();
        for i in 0..d {
            for j in 0..d {
                r[(i, j)] *= scale[i] * scale[j] * (1.0 - SHRINKAGE);
            }
            r[(i, i)] = 1.0;
        }
        let chol = r.clone().cholesky().expect("projected correlation is positive definite");
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        Self {
            chol: chol.l(),
            precision_excess: inv - DMatrix::identity(d, d),
            log_det,
        }
    }

    /// `ln((1 - eps) c_R(u) + eps)` with `z = Phi^{-1}(u)`.
    fn log_mixture_density(&self, z: &[f64]) -> f64 {
        let d = z.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.precision_excess[(i, j)] * z[j];
            }
            quad += z[i] * row;
        }
        let log_c = -0.5 * self.log_det - 0.5 * quad;
        let a = (1.0 - DEFENSIVE_WEIGHT).ln() + log_c;
        let b = DEFENSIVE_WEIGHT.ln();
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Cube points with log importance weights (zero for uniform and Halton points).
#[derive(Clone, Debug)]
pub(crate) struct PointSet {
    pub d: usize,
    pub n: usize,
    pub u: Vec<f64>,
    pub log_w: Vec<f64>,
}

impl PointSet {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.u[i * self.d..(i + 1) * self.d]
    }
}
