//! Brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use mind_core::statistics::StatisticsSpec;
use nalgebra::{DMatrix, DVector};

/// Trapezoid rule on `[0, 1]` with `m` nodes.
pub fn trapezoid(m: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / (m - 1) as f64;
    let x = (0..m).map(|i| i as f64 * h).collect();
    let w = (0..m)
        .map(|i| if i == 0 || i == m - 1 { 0.5 * h } else { h })
        .collect();
    (x, w)
}

/// Tensor trapezoid grid over the cube: points and weights.
pub fn cube_grid(d: usize, m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (x, w) = trapezoid(m);
    let mut pts = vec![Vec::new()];
    let mut wts = vec![1.0];
    for _ in 0..d {
        let mut np = Vec::with_capacity(pts.len() * m);
        let mut nw = Vec::with_capacity(pts.len() * m);
        for (p, pw) in pts.iter().zip(&wts) {
            for (xi, wi) in x.iter().zip(&w) {
                let mut q = p.clone();
                q.push(*xi);
                np.push(q);
                nw.push(pw * wi);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

pub struct GridSolution {
    pub theta: Vec<f64>,
    pub entropy: f64,
    /// Density values `exp(theta^T phi)` on the grid.
    pub density: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Maximum-entropy density by damped Newton on a dense trapezoid grid.
pub fn grid_maxent(spec: &StatisticsSpec, alpha: &[f64], m: usize) -> GridSolution {
    let (points, weights) = cube_grid(spec.d(), m);
    let q = spec.q();
    let phi: Vec<f64> = points.iter().flat_map(|u| spec.evaluate(u).unwrap()).collect();
    let a = DVector::from_column_slice(alpha);
    let dot = |row: usize, t: &[f64]| -> f64 {
        phi[row * q..(row + 1) * q].iter().zip(t).map(|(f, t)| f * t).sum()
    };
    let value = |t: &DVector<f64>| -> f64 {
        let z: f64 = (0..weights.len()).map(|i| weights[i] * dot(i, t.as_slice()).exp()).sum();
        z - t.dot(&a)
    };
    let mut theta = DVector::<f64>::zeros(q);
    for _ in 0..200 {
        let mut g = -a.clone();
        let mut h = DMatrix::<f64>::zeros(q, q);
        for i in 0..weights.len() {
            let f = &phi[i * q..(i + 1) * q];
            let e = weights[i] * dot(i, theta.as_slice()).exp();
            for r in 0..q {
                g[r] += f[r] * e;
                for c in 0..=r {
                    h[(r, c)] += f[r] * f[c] * e;
                }
            }
        }
        for r in 0..q {
            for c in 0..r {
                h[(c, r)] = h[(r, c)];
            }
        }
        if g.amax() < 1e-10 {
            break;
        }
        let step = h.cholesky().expect("grid Hessian is positive definite").solve(&(-&g));
        let f0 = value(&theta);
        let mut t = 1.0;
        while value(&(&theta + &step * t)) > f0 + 1e-4 * t * g.dot(&step) && t > 1e-12 {
            t *= 0.5;
        }
        theta += &step * t;
        if step.amax() * t < 1e-12 {
            break;
        }
    }
    let density = (0..weights.len()).map(|i| dot(i, theta.as_slice()).exp()).collect();
    GridSolution {
        entropy: -theta.dot(&a),
        theta: theta.as_slice().to_vec(),
        density,
        points,
        weights,
    }
}

/// Raw moments `E[u^j]`, `j = 0..=k`, of a Beta(a, b) variable.
pub fn beta_moments(a: f64, b: f64, k: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut m = 1.0;
    for j in 0..k {
        let j = j as f64;
        m *= (a + j) / (a + b + j);
        out.push(m);
    }
    out
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

use mind_core::bench::{gen_gaussian_pairs, GaussianPairConfig};
use mind_core::rng::Stream;
use mind_core::{dual_representation, estimate_constraints, moment_spec, polynomial_spec, ConstraintVector};
use ndarray::concatenate;
use ndarray::Axis;

pub struct Problem {
    pub label: String,
    pub spec: StatisticsSpec,
    pub alpha: ConstraintVector,
}

/// Five 1-D moment problems with Beta targets and five 2-D degree-2
/// problems whose targets come from Gaussian-copula rank samples.
pub fn random_feasible_problems(seed: u64) -> Vec<Problem> {
    let mut rng = Stream::new(seed, 0x0ac1e);
    let mut out = Vec::new();
    for i in 0..5 {
        let a = 1.5 + 2.5 * rng.uniform();
        let b = 1.5 + 2.5 * rng.uniform();
        let k = 2 + (i % 2) as u32;
        let spec = moment_spec(1, k).unwrap();
        let alpha = ConstraintVector::new(&spec, beta_moments(a, b, k)).unwrap();
        out.push(Problem {
            label: format!("d=1 k={k} beta({a:.2}, {b:.2})"),
            spec,
            alpha,
        });
    }
    for i in 0..5 {
        let rho = -0.7 + 1.4 * rng.uniform();
        let cfg = GaussianPairConfig { d: 1, rho, n: 2000, seed: seed * 100 + i };
        let (x, y) = gen_gaussian_pairs(&cfg).unwrap();
        let xy = concatenate(Axis(1), &[x.view(), y.view()]).unwrap();
        let sample = dual_representation(xy.view()).unwrap();
        let spec = polynomial_spec(2, 2, 2).unwrap();
        let alpha = estimate_constraints(&sample, &spec).unwrap();
        out.push(Problem {
            label: format!("d=2 gaussian rho={rho:.3}"),
            spec,
            alpha,
        });
    }
    out
}

/// Grid resolution per axis for the brute-force oracle.
pub fn oracle_resolution(d: usize) -> usize {
    if d == 1 {
        20_001
    } else {
        400
    }
}
