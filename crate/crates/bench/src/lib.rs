//! Fixed workloads shared by the criterion benches.

use mind_core::bench::{gen_gaussian_pairs, GaussianPairConfig};
use mind_core::{dual_representation, estimate_constraints, polynomial_spec, ConstraintVector, StatisticsSpec};
use ndarray::{concatenate, Array2, Axis};

/// Gaussian pair data together with the joint degree-2 problem it induces.
pub struct Workload {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub joint: Array2<f64>,
    pub spec: StatisticsSpec,
    pub alpha: ConstraintVector,
}

impl Workload {
    pub fn gaussian(d: usize, rho: f64, n: usize, seed: u64) -> Self {
        let (x, y) = gen_gaussian_pairs(&GaussianPairConfig { d, rho, n, seed }).expect("valid config");
        let joint = concatenate(Axis(1), &[x.view(), y.view()]).expect("aligned rows");
        let spec = polynomial_spec(2 * d, 2, 2).expect("degree 2");
        let sample = dual_representation(joint.view()).expect("finite data");
        let alpha = estimate_constraints(&sample, &spec).expect("matching spec");
        Self { x, y, joint, spec, alpha }
    }
}
