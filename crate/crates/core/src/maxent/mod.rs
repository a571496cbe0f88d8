//! Maximum-entropy densities on the unit cube under moment constraints.
//!
//! The maximizer has the form `exp(theta^T phi(u))`; `theta` minimizes the
//! convex program `-theta^T alpha + integral of exp(theta^T phi)`, and the
//! entropy of the maximizer is `-theta^T alpha`.

mod basis;
mod optimize;
mod sampling;

use serde::{Deserialize, Serialize};

use crate::copula::ConstraintVector;
use crate::error::{Error, Result};
use crate::statistics::StatisticsSpec;

pub use sampling::Sampler;

use basis::Basis;
use sampling::Proposal;

/// Inner optimization method.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Newton up to `newton_max_q` parameters, L-BFGS above.
    #[default]
    Auto,
    Newton,
    Lbfgs,
    /// Averaged SGD, step `sgd_step / sqrt(t)`, fresh batch per step.
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Max absolute constraint residual at convergence.
    pub tol_g: f64,
    /// Max distance of the validation partition estimate from 1.
    pub tol_z: f64,
    /// Max estimated sample-average entropy bias (random point sets only).
    pub tol_h: f64,
    pub max_iters: usize,
    /// Smallest point count per stage.
    pub mc_batch: usize,
    pub max_mc_batch: usize,
    pub method: Method,
    pub sampler: Sampler,
    pub newton_max_q: usize,
    pub sgd_step: f64,
    pub theta_bound: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_g: 1e-3,
            tol_z: 1e-2,
            tol_h: 1e-2,
            max_iters: 5000,
            mc_batch: 4096,
            max_mc_batch: 1 << 18,
            method: Method::Auto,
            sampler: Sampler::Auto,
            newton_max_q: 512,
            sgd_step: 0.5,
            theta_bound: 1e3,
            seed: 42,
        }
    }
}

impl SolverOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tol_g", self.tol_g)?;
        positive("tol_z", self.tol_z)?;
        positive("tol_h", self.tol_h)?;
        positive("sgd_step", self.sgd_step)?;
        positive("theta_bound", self.theta_bound)?;
        if self.mc_batch == 0 || self.max_mc_batch < self.mc_batch {
            return Err(Error::InvalidParameter(
                "need 0 < mc_batch <= max_mc_batch".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Method actually used after resolving `Auto`.
    pub method: Method,
    pub sampler: String,
    pub stages: usize,
    pub converged: bool,
    pub inner_status: String,
    /// Residual of the final `theta` on an independent point set.
    pub validation_residual_max: f64,
    pub effective_sample_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_estimate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntSolution {
    /// Natural parameters in the spec's monomial basis.
    pub theta: Vec<f64>,
    /// `-theta^T alpha`, nats.
    pub entropy: f64,
    /// Model expectation minus target on the final point set.
    pub residual: Vec<f64>,
    /// Partition estimate on an independent validation set.
    pub partition_estimate: f64,
    pub iterations: usize,
    pub mc_samples_per_iter: usize,
    pub seed: u64,
    pub spec_id: u64,
    pub diagnostics: SolveDiagnostics,
}

/// Compact JSON form of a solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub theta: Vec<f64>,
    pub entropy: f64,
    pub residual_max: f64,
    pub partition: f64,
    pub iterations: usize,
    pub seed: u64,
    pub spec_fingerprint: String,
    pub diagnostics: SolveDiagnostics,
}

impl MaxEntSolution {
    pub fn residual_max(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            theta: self.theta.clone(),
            entropy: self.entropy,
            residual_max: self.residual_max(),
            partition: self.partition_estimate,
            iterations: self.iterations,
            seed: self.seed,
            spec_fingerprint: format!("{:016x}", self.spec_id),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Point rule for [`objective`] and [`gradient`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McRule {
    Uniform,
    Halton,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub rule: McRule,
}

impl McConfig {
    pub fn uniform(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            rule: McRule::Uniform,
        }
    }
}

fn check_dims(theta: &[f64], alpha: &ConstraintVector, spec: &StatisticsSpec) -> Result<()> {
    for got in [theta.len(), alpha.len()] {
        if got != spec.q() {
            return Err(Error::DimensionMismatch {
                expected: spec.q(),
                got,
            });
        }
    }
    Ok(())
}

fn mc_value(
    theta: &[f64],
    alpha: &ConstraintVector,
    spec: &StatisticsSpec,
    mc: &McConfig,
) -> Result<optimize::Eval> {
    check_dims(theta, alpha, spec)?;
    if mc.samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let proposal = match mc.rule {
        McRule::Uniform => Proposal::Uniform,
        McRule::Halton => Proposal::Halton,
    };
    let pts = proposal.points(spec.d(), mc.samples, mc.seed, 0, 0);
    optimize::evaluate(&Basis::new(spec), &pts, theta, alpha.values(), false, false)
}

/// `-theta^T alpha + Z(theta)` with `Z` estimated on the configured points.
pub fn objective(
    theta: &[f64],
    alpha: &ConstraintVector,
    spec: &StatisticsSpec,
    mc: &McConfig,
) -> Result<f64> {
    Ok(mc_value(theta, alpha, spec, mc)?.f)
}

/// Estimate of `integral phi exp(theta^T phi) - alpha`.
pub fn gradient(
    theta: &[f64],
    alpha: &ConstraintVector,
    spec: &StatisticsSpec,
    mc: &McConfig,
) -> Result<Vec<f64>> {
    Ok(mc_value(theta, alpha, spec, mc)?.grad)
}

/// Minimizes the convex dual; `warm_start` is a `theta` in the spec's basis.
///
/// Returns [`Error::NotConverged`] with the last iterate when the point
/// budget or iteration limit runs out first.
pub fn solve(
    spec: &StatisticsSpec,
    alpha: &ConstraintVector,
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<MaxEntSolution> {
    opts.validate()?;
    if !alpha.matches(spec) {
        return Err(Error::DimensionMismatch {
            expected: spec.q(),
            got: alpha.len(),
        });
    }
    if let Some(w) = warm_start {
        if w.len() != spec.q() {
            return Err(Error::DimensionMismatch {
                expected: spec.q(),
                got: w.len(),
            });
        }
    }
    optimize::solve_staged(spec, alpha.values(), opts, warm_start)
}

/// `theta^T phi(u)`.
pub fn log_density(theta: &[f64], spec: &StatisticsSpec, u: &[f64]) -> Result<f64> {
    if theta.len() != spec.q() {
        return Err(Error::DimensionMismatch {
            expected: spec.q(),
            got: theta.len(),
        });
    }
    Ok(optimize::dot(theta, &spec.evaluate(u)?))
}

/// Self-normalized estimate of `E[g(u)]` under the density `exp(theta^T phi)`.
pub fn expectation<G: Fn(&[f64]) -> f64>(
    theta: &[f64],
    spec: &StatisticsSpec,
    g: G,
    mc: &McConfig,
) -> Result<f64> {
    if theta.len() != spec.q() {
        return Err(Error::DimensionMismatch {
            expected: spec.q(),
            got: theta.len(),
        });
    }
    let proposal = match mc.rule {
        McRule::Uniform => Proposal::Uniform,
        McRule::Halton => Proposal::Halton,
    };
    let pts = proposal.points(spec.d(), mc.samples.max(1), mc.seed, 0, 0);
    let mut phi = vec![0.0; spec.q()];
    let mut s = Vec::with_capacity(pts.n);
    for i in 0..pts.n {
        spec.evaluate_into(pts.row(i), &mut phi);
        s.push(optimize::dot(theta, &phi));
    }
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, si) in s.iter().enumerate() {
        let w = (si - m).exp();
        num += w * g(pts.row(i));
        den += w;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::{moment_spec, polynomial_spec, StatisticsSpec, Term};

    /// theta_1 with 1/(1 - e^-t) - 1/t = m, by bisection.
    fn exp_mean_inverse(m: f64) -> f64 {
        let mean = |t: f64| 1.0 / (1.0 - (-t).exp()) - 1.0 / t;
        let (mut lo, mut hi) = (1e-9, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean(mid) < m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn linear_spec() -> StatisticsSpec {
        moment_spec(1, 1).unwrap()
    }

    #[test]
    fn objective_at_zero_is_one() {
        let spec = polynomial_spec(2, 2, 2).unwrap();
        let alpha = ConstraintVector::uniform(&spec);
        let v = objective(&vec![0.0; spec.q()], &alpha, &spec, &McConfig::uniform(100, 1)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_one_dimensional_partition() {
        let spec = linear_spec();
        let theta = [-(std::f64::consts::E - 1.0).ln(), 1.0];
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.6]).unwrap();
        let mc = McConfig::uniform(1_000_000, 7);
        let f = objective(&theta, &alpha, &spec, &mc).unwrap();
        let z = f + theta[0] + 0.6 * theta[1];
        assert!((z - 1.0).abs() < 5e-3, "{z}");
        let exact = (1f64.exp() - 1.0) / 1.0;
        let raw = objective(&[0.0, 1.0], &alpha, &spec, &mc).unwrap() + 0.6;
        assert!((raw / exact - 1.0).abs() < 5e-3);
    }

    #[test]
    fn gradient_vanishes_at_uniform_targets() {
        let spec = moment_spec(1, 2).unwrap();
        let alpha = ConstraintVector::uniform(&spec);
        let g = gradient(&[0.0; 3], &alpha, &spec, &McConfig::uniform(1 << 20, 3)).unwrap();
        assert!(g.iter().all(|x| x.abs() < 2e-3), "{g:?}");
    }

    #[test]
    fn finite_difference_gradient() {
        let spec = polynomial_spec(2, 2, 2).unwrap();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.5, 0.33, 0.5, 0.33, 0.3]).unwrap();
        let theta = vec![-0.3, 0.4, -0.2, 0.1, 0.5, 0.8];
        let mc = McConfig::uniform(20_000, 11);
        let g = gradient(&theta, &alpha, &spec, &mc).unwrap();
        let h = 1e-4;
        for i in 0..spec.q() {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (objective(&a, &alpha, &spec, &mc).unwrap()
                - objective(&b, &alpha, &spec, &mc).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-3, "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn uniform_targets_give_zero_theta() {
        let spec = polynomial_spec(2, 2, 2).unwrap();
        let sol = solve(&spec, &ConstraintVector::uniform(&spec), &SolverOptions::default(), None).unwrap();
        assert!(sol.theta.iter().all(|t| t.abs() <= 1e-3), "{:?}", sol.theta);
        assert!(sol.entropy.abs() <= 1e-6);
    }

    #[test]
    fn one_dimensional_oracle() {
        let spec = linear_spec();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.6]).unwrap();
        let sol = solve(&spec, &alpha, &SolverOptions::default(), None).unwrap();
        let t1 = exp_mean_inverse(0.6);
        let t0 = -((t1.exp() - 1.0) / t1).ln();
        assert!((t1 - 1.23).abs() < 1e-3);
        assert!((sol.theta[1] - t1).abs() < 0.01, "{:?}", sol.theta);
        assert!((sol.theta[0] - t0).abs() < 0.01);
        assert!((sol.entropy - (-t0 - 0.6 * t1)).abs() < 2e-3);
        assert!(sol.residual_max() <= 1e-3);
        assert!((sol.partition_estimate - 1.0).abs() <= 5e-3);
        // increasing density
        let lo = log_density(&sol.theta, &spec, &[0.1]).unwrap();
        let hi = log_density(&sol.theta, &spec, &[0.9]).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn solve_is_deterministic_and_warm_start_is_fast() {
        let spec = polynomial_spec(2, 2, 2).unwrap();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.5, 0.333, 0.5, 0.333, 0.29]).unwrap();
        let opts = SolverOptions::default();
        let a = solve(&spec, &alpha, &opts, None).unwrap();
        let b = solve(&spec, &alpha, &opts, None).unwrap();
        assert_eq!(a, b);
        let w = solve(&spec, &alpha, &opts, Some(&a.theta)).unwrap();
        assert!(w.iterations <= 5, "{}", w.iterations);
    }

    #[test]
    fn infeasible_targets_are_reported() {
        // E[u^2] < E[u]^2 is impossible.
        let spec = moment_spec(1, 2).unwrap();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.5, 0.2]).unwrap();
        let err = solve(&spec, &alpha, &SolverOptions::default(), None).unwrap_err();
        assert!(err.is_solver_failure(), "{err}");
    }

    #[test]
    fn overflow_is_signalled() {
        let spec = linear_spec();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.5]).unwrap();
        let err = objective(&[0.0, 5000.0], &alpha, &spec, &McConfig::uniform(64, 1)).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
    }

    #[test]
    fn every_method_reaches_the_same_optimum() {
        let spec = StatisticsSpec::from_terms(2, 1, vec![Term::product(0, 1)]).unwrap();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.5, 0.5, 0.3]).unwrap();
        let base = SolverOptions::default();
        let newton = solve(&spec, &alpha, &SolverOptions { method: Method::Newton, ..base.clone() }, None).unwrap();
        let lbfgs = solve(&spec, &alpha, &SolverOptions { method: Method::Lbfgs, ..base.clone() }, None).unwrap();
        assert!((newton.entropy - lbfgs.entropy).abs() < 1e-4);
        let sgd = solve(
            &spec,
            &alpha,
            &SolverOptions { method: Method::Sgd, max_iters: 20_000, ..base },
            None,
        );
        let sgd = match sgd {
            Ok(s) => s,
            Err(Error::NotConverged(s)) => *s,
            Err(e) => panic!("{e}"),
        };
        assert!((sgd.entropy - newton.entropy).abs() < 1e-2, "{} vs {}", sgd.entropy, newton.entropy);
    }

    #[test]
    fn solution_summary_serializes() {
        let spec = linear_spec();
        let alpha = ConstraintVector::new(&spec, vec![1.0, 0.55]).unwrap();
        let sol = solve(&spec, &alpha, &SolverOptions::default(), None).unwrap();
        let v = serde_json::to_value(sol.summary()).unwrap();
        for key in ["theta", "entropy", "residual_max", "partition", "iterations", "seed", "spec_fingerprint"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
