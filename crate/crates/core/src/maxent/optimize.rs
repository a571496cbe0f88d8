//! Sample-average minimization of `-theta^T alpha + integral of exp(theta^T phi)`.
//!
//! Each stage fixes one point set and minimizes the resulting smooth convex
//! surrogate to high accuracy. A fresh validation set then checks the
//! partition function; the point count doubles until the check passes.

use nalgebra::DMatrix;

use super::basis::Basis;
use super::sampling::{PointSet, Proposal};
use super::{MaxEntSolution, Method, SolveDiagnostics, SolverOptions};
use crate::error::{Error, Result};
use crate::statistics::StatisticsSpec;

const CHUNK: usize = 256;
const OVERFLOW_EXPONENT: f64 = 700.0;
const MAX_EXPONENT_JUMP: f64 = 30.0;
const LBFGS_MEMORY: usize = 12;
const ARMIJO: f64 = 1e-4;

#[derive(Clone, Debug)]
pub(crate) struct Eval {
    pub f: f64,
    pub z: f64,
    pub grad: Vec<f64>,
    pub hess: Option<DMatrix<f64>>,
    pub max_s: f64,
    /// Kish effective sample size over `n`.
    pub ess: f64,
}

impl Eval {
    /// Moves `theta_0` so that the partition estimate is exactly 1. This is
    /// the exact minimizer along the constant direction.
    fn normalize(&mut self, theta: &mut [f64], alpha: &[f64]) {
        let shift = self.z.ln();
        theta[0] -= shift;
        for (g, a) in self.grad.iter_mut().zip(alpha) {
            *g = (*g + a) / self.z - a;
        }
        if let Some(h) = self.hess.as_mut() {
            *h /= self.z;
        }
        self.f = 1.0 - dot(theta, alpha);
        self.max_s -= shift;
        self.z = 1.0;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Objective, gradient and optionally Hessian of the sample-average surrogate.
pub(crate) fn evaluate(
    basis: &Basis,
    pts: &PointSet,
    theta: &[f64],
    alpha: &[f64],
    orthonormal: bool,
    want_hess: bool,
) -> Result<Eval> {
    let q = basis.q();
    let mut scratch = vec![0.0; basis.scratch_len()];
    let mut feats = vec![0.0; CHUNK * q];
    let mut s = [0.0; CHUNK];
    let mut m = f64::NEG_INFINITY;
    let (mut acc_z, mut acc_z2) = (0.0, 0.0);
    let mut acc_g = vec![0.0; q];
    let mut acc_h = if want_hess { Some(DMatrix::<f64>::zeros(q, q)) } else { None };
    let mut block = if want_hess { Some(DMatrix::<f64>::zeros(q, CHUNK)) } else { None };

    let mut start = 0;
    while start < pts.n {
        let len = CHUNK.min(pts.n - start);
        let mut cm = f64::NEG_INFINITY;
        for i in 0..len {
            let f = &mut feats[i * q..(i + 1) * q];
            basis.features(pts.row(start + i), orthonormal, &mut scratch, f);
            s[i] = dot(theta, f) + pts.log_w[start + i];
            cm = cm.max(s[i]);
        }
        if !cm.is_finite() {
            return Err(Error::Overflow(cm));
        }
        if cm > m {
            let r = if m.is_finite() { (m - cm).exp() } else { 0.0 };
            acc_z *= r;
            acc_z2 *= r * r;
            acc_g.iter_mut().for_each(|g| *g *= r);
            if let Some(h) = acc_h.as_mut() {
                *h *= r;
            }
            m = cm;
        }
        for i in 0..len {
            let e = (s[i] - m).exp();
            s[i] = e;
            acc_z += e;
            acc_z2 += e * e;
            let f = &feats[i * q..(i + 1) * q];
            for (g, x) in acc_g.iter_mut().zip(f) {
                *g += e * x;
            }
        }
        if let (Some(h), Some(b)) = (acc_h.as_mut(), block.as_mut()) {
            if len < CHUNK {
                b.fill(0.0);
            }
            for i in 0..len {
                let w = s[i].sqrt();
                let f = &feats[i * q..(i + 1) * q];
                for (dst, x) in b.column_mut(i).iter_mut().zip(f) {
                    *dst = w * x;
                }
            }
            let bt = b.transpose();
            h.gemm(1.0, b, &bt, 1.0);
        }
        start += len;
    }
    if m > OVERFLOW_EXPONENT {
        return Err(Error::Overflow(m));
    }
    let scale = m.exp() / pts.n as f64;
    let z = acc_z * scale;
    let grad: Vec<f64> = acc_g.iter().zip(alpha).map(|(g, a)| g * scale - a).collect();
    let hess = acc_h.map(|h| h * scale);
    Ok(Eval {
        f: z - dot(theta, alpha),
        z,
        grad,
        hess,
        max_s: m,
        ess: acc_z * acc_z / (pts.n as f64 * acc_z2),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum InnerStatus {
    Converged,
    Stalled,
    IterationLimit,
}

struct Inner<'a> {
    basis: &'a Basis,
    pts: &'a PointSet,
    alpha: &'a [f64],
    tol: f64,
    theta_bound: f64,
    max_iters: usize,
}

impl Inner<'_> {
    fn eval(&self, theta: &[f64], hess: bool) -> Result<Eval> {
        evaluate(self.basis, self.pts, theta, self.alpha, true, hess)
    }

    fn check_bound(&self, theta: &[f64]) -> Result<()> {
        let norm = inf_norm(&self.basis.theta_to_raw(theta));
        if norm > self.theta_bound || !norm.is_finite() {
            return Err(Error::Diverged { norm });
        }
        Ok(())
    }

    /// Backtracking Armijo search; also rejects steps that blow up the largest exponent.
    fn line_search(
        &self,
        theta: &[f64],
        cur: &Eval,
        dir: &[f64],
        hess_at_unit: bool,
    ) -> Result<Option<(Vec<f64>, Eval)>> {
        let slope = dot(&cur.grad, dir);
        if !(slope < 0.0) {
            return Ok(None);
        }
        let mut t = 1.0;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(dir).map(|(a, b)| a + t * b).collect();
            let want_hess = hess_at_unit && t == 1.0;
            match self.eval(&trial, want_hess) {
                Ok(e)
                    if e.max_s - cur.max_s <= MAX_EXPONENT_JUMP
                        && e.f <= cur.f + ARMIJO * t * slope =>
                {
                    return Ok(Some((trial, e)));
                }
                Ok(_) | Err(Error::Overflow(_)) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    fn newton(&self, theta: &mut Vec<f64>, iterations: &mut usize) -> Result<InnerStatus> {
        let mut cur = self.eval(theta, true)?;
        cur.normalize(theta, self.alpha);
        loop {
            if inf_norm(&cur.grad) <= self.tol {
                return Ok(InnerStatus::Converged);
            }
            if *iterations >= self.max_iters {
                return Ok(InnerStatus::IterationLimit);
            }
            let h = cur.hess.take().expect("hessian requested");
            let dir = newton_direction(h, &cur.grad);
            let Some((next, mut e)) = self.line_search(theta, &cur, &dir, true)? else {
                return Ok(InnerStatus::Stalled);
            };
            *iterations += 1;
            *theta = next;
            if e.hess.is_none() {
                e = self.eval(theta, true)?;
            }
            e.normalize(theta, self.alpha);
            self.check_bound(theta)?;
            let progress = cur.f - e.f;
            cur = e;
            if progress.abs() <= 1e-15 * cur.f.abs().max(1.0) && inf_norm(&cur.grad) <= 10.0 * self.tol {
                return Ok(InnerStatus::Converged);
            }
        }
    }

    fn lbfgs(&self, theta: &mut Vec<f64>, iterations: &mut usize) -> Result<InnerStatus> {
        let mut cur = self.eval(theta, false)?;
        cur.normalize(theta, self.alpha);
        let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(LBFGS_MEMORY);
        loop {
            if inf_norm(&cur.grad) <= self.tol {
                return Ok(InnerStatus::Converged);
            }
            if *iterations >= self.max_iters {
                return Ok(InnerStatus::IterationLimit);
            }
            let mut dir = two_loop(&mem, &cur.grad);
            if dot(&dir, &cur.grad) >= 0.0 {
                mem.clear();
                dir = cur.grad.iter().map(|g| -g).collect();
            }
            let found = match self.line_search(theta, &cur, &dir, false)? {
                Some(x) => Some(x),
                None if !mem.is_empty() => {
                    mem.clear();
                    let sd: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
                    self.line_search(theta, &cur, &sd, false)?
                }
                None => None,
            };
            let Some((mut next, mut e)) = found else {
                return Ok(InnerStatus::Stalled);
            };
            *iterations += 1;
            e.normalize(&mut next, self.alpha);
            self.check_bound(&next)?;
            let s: Vec<f64> = next.iter().zip(theta.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = e.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                if mem.len() == LBFGS_MEMORY {
                    mem.remove(0);
                }
                mem.push((s, y, 1.0 / sy));
            }
            let progress = cur.f - e.f;
            *theta = next;
            cur = e;
            if progress.abs() <= 1e-16 * cur.f.abs().max(1.0) && inf_norm(&cur.grad) <= 10.0 * self.tol {
                return Ok(InnerStatus::Converged);
            }
        }
    }
}

fn newton_direction(h: DMatrix<f64>, grad: &[f64]) -> Vec<f64> {
    let q = grad.len();
    let g = nalgebra::DVector::from_column_slice(grad);
    let max_diag = (0..q).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        let mut m = h.clone();
        for i in 0..q {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            return (-ch.solve(&g)).as_slice().to_vec();
        }
        ridge = if ridge == 0.0 { 1e-10 * max_diag } else { ridge * 10.0 };
        if ridge > 1e6 * max_diag {
            return grad.iter().map(|x| -x).collect();
        }
    }
}

fn two_loop(mem: &[(Vec<f64>, Vec<f64>, f64)], grad: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = grad.to_vec();
    let mut a = vec![0.0; mem.len()];
    for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
        a[i] = rho * dot(s, &r);
        r.iter_mut().zip(y).for_each(|(x, yy)| *x -= a[i] * yy);
    }
    if let Some((s, y, _)) = mem.last() {
        let gamma = dot(s, y) / dot(y, y);
        r.iter_mut().for_each(|x| *x *= gamma);
    }
    for (i, (s, y, rho)) in mem.iter().enumerate() {
        let b = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(x, ss)| *x += (a[i] - b) * ss);
    }
    r.iter_mut().for_each(|x| *x = -*x);
    r
}

/// Raw-basis residual, partition and effective size of `theta` on a point set.
struct Check {
    residual: Vec<f64>,
    z: f64,
    ess: f64,
}

fn check(basis: &Basis, pts: &PointSet, theta_raw: &[f64], alpha_raw: &[f64]) -> Result<Check> {
    let e = evaluate(basis, pts, theta_raw, alpha_raw, false, false)?;
    Ok(Check {
        residual: e.grad,
        z: e.z,
        ess: e.ess,
    })
}

pub(crate) fn resolve_method(method: Method, q: usize, newton_max_q: usize) -> Method {
    match method {
        Method::Auto if q <= newton_max_q => Method::Newton,
        Method::Auto => Method::Lbfgs,
        m => m,
    }
}

fn initial_batch(opts: &SolverOptions, q: usize) -> usize {
    let want = opts.mc_batch.max(50 * q).next_power_of_two();
    want.min(opts.max_mc_batch).max(opts.mc_batch.min(opts.max_mc_batch))
}

pub(crate) fn solve_staged(
    spec: &StatisticsSpec,
    alpha_raw: &[f64],
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<MaxEntSolution> {
    let basis = Basis::new(spec);
    let q = basis.q();
    let alpha = basis.forward(alpha_raw);
    let proposal = Proposal::resolve(opts.sampler, spec, alpha_raw);
    let mut theta = match warm_start {
        Some(w) => basis.theta_from_raw(w),
        None => vec![0.0; q],
    };
    let method = resolve_method(opts.method, q, opts.newton_max_q);
    if method == Method::Sgd {
        return solve_sgd(spec, &basis, &proposal, alpha_raw, &alpha, opts, theta);
    }

    let mut n = initial_batch(opts, q);
    let mut iterations = 0;
    let mut stage = 0u64;
    loop {
        let pts = proposal.points(spec.d(), n, opts.seed, stage, 0);
        let inner = Inner {
            basis: &basis,
            pts: &pts,
            alpha: &alpha,
            tol: opts.tol_g * 1e-2,
            theta_bound: opts.theta_bound,
            max_iters: opts.max_iters,
        };
        let status = match method {
            Method::Newton => inner.newton(&mut theta, &mut iterations)?,
            _ => inner.lbfgs(&mut theta, &mut iterations)?,
        };
        let theta_raw = basis.theta_to_raw(&theta);
        let train = check(&basis, &pts, &theta_raw, alpha_raw)?;
        let val_pts = proposal.validation_points(spec.d(), n, opts.seed, stage);
        let val = check(&basis, &val_pts, &theta_raw, alpha_raw)?;
        let bias = (!proposal.is_quasi_random()).then(|| q as f64 / (2.0 * n as f64 * train.ess));

        let residual_max = inf_norm(&train.residual);
        let ok = status != InnerStatus::IterationLimit
            && residual_max <= opts.tol_g
            && (val.z - 1.0).abs() <= opts.tol_z
            && bias.map_or(true, |b| b <= opts.tol_h);
        let last = n >= opts.max_mc_batch || status == InnerStatus::IterationLimit;
        if ok || last {
            let solution = MaxEntSolution {
                entropy: -dot(&theta_raw, alpha_raw),
                theta: theta_raw,
                residual: train.residual,
                partition_estimate: val.z,
                iterations,
                mc_samples_per_iter: pts.n,
                seed: opts.seed,
                spec_id: spec.fingerprint(),
                diagnostics: SolveDiagnostics {
                    method,
                    sampler: proposal.name().to_string(),
                    stages: stage as usize + 1,
                    converged: ok,
                    inner_status: format!("{status:?}").to_lowercase(),
                    validation_residual_max: inf_norm(&val.residual),
                    effective_sample_fraction: train.ess,
                    bias_estimate: bias,
                },
            };
            return if ok {
                Ok(solution)
            } else {
                Err(Error::NotConverged(Box::new(solution)))
            };
        }
        n = (2 * n).min(opts.max_mc_batch);
        stage += 1;
    }
}

/// Averaged stochastic gradient descent with a fresh batch per step.
fn solve_sgd(
    spec: &StatisticsSpec,
    basis: &Basis,
    proposal: &Proposal,
    alpha_raw: &[f64],
    alpha: &[f64],
    opts: &SolverOptions,
    mut theta: Vec<f64>,
) -> Result<MaxEntSolution> {
    let n = opts.mc_batch;
    let mut avg = theta.clone();
    let mut count = 0.0;
    let burn_in = (opts.max_iters / 10).max(1);
    let check_every = 250;
    let val_n = (4 * n).min(opts.max_mc_batch.max(n));
    let mut last: Option<(Check, Vec<f64>)> = None;
    let mut iterations = 0;
    for t in 1..=opts.max_iters {
        let pts = proposal.points(spec.d(), n, opts.seed, t as u64, 2);
        let mut e = evaluate(basis, &pts, &theta, alpha, true, false)?;
        e.normalize(&mut theta, alpha);
        let step = opts.sgd_step / (t as f64).sqrt();
        for (th, g) in theta.iter_mut().zip(&e.grad) {
            *th -= step * g;
        }
        let norm = inf_norm(&basis.theta_to_raw(&theta));
        if norm > opts.theta_bound || !norm.is_finite() {
            return Err(Error::Diverged { norm });
        }
        iterations = t;
        if t >= burn_in {
            count += 1.0;
            for (a, th) in avg.iter_mut().zip(&theta) {
                *a += (th - *a) / count;
            }
        } else {
            avg.clone_from(&theta);
        }
        if t % check_every == 0 || t == opts.max_iters {
            let raw = basis.theta_to_raw(&avg);
            let val_pts = proposal.validation_points(spec.d(), val_n, opts.seed, t as u64);
            let c = check(basis, &val_pts, &raw, alpha_raw)?;
            let ok = inf_norm(&c.residual) <= opts.tol_g && (c.z - 1.0).abs() <= opts.tol_z;
            last = Some((c, raw));
            if ok && t >= burn_in {
                break;
            }
        }
    }
    let (c, raw) = last.expect("at least one check");
    let residual_max = inf_norm(&c.residual);
    let ok = residual_max <= opts.tol_g && (c.z - 1.0).abs() <= opts.tol_z;
    let solution = MaxEntSolution {
        entropy: -dot(&raw, alpha_raw),
        theta: raw,
        residual: c.residual,
        partition_estimate: c.z,
        iterations,
        mc_samples_per_iter: n,
        seed: opts.seed,
        spec_id: spec.fingerprint(),
        diagnostics: SolveDiagnostics {
            method: Method::Sgd,
            sampler: proposal.name().to_string(),
            stages: 1,
            converged: ok,
            inner_status: if ok { "converged" } else { "iterationlimit" }.to_string(),
            validation_residual_max: residual_max,
            effective_sample_fraction: c.ess,
            bias_estimate: None,
        },
    };
    if ok {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}
