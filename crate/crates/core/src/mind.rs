//! Mutual information from three copula entropies.
//!
//! `I(x; y) = h(u_x) + h(u_y) - h(u_x, u_y)`, each entropy being the
//! maximum entropy compatible with rank-estimated polynomial moments. The
//! joint family contains both marginal families, so the joint entropy can
//! never exceed their sum at exact optima.

use ndarray::{concatenate, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::copula::{dual_representation, estimate_constraints, CopulaSample};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::maxent::{expectation, solve, McConfig, McRule, MaxEntSolution, SolverOptions};
use crate::statistics::{
    augment, cross_products, nest, polynomial_spec, AugmentationDescriptor, ColumnOrigin,
    NestBlock, StatisticsSpec, Term,
};

pub const DEFAULT_WARM_START_TOLERANCE: f64 = 5e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiOptions {
    /// Marginal moment order.
    pub k: u32,
    /// Polynomial degree of the cross terms.
    pub degree: u32,
    pub augment_x: Vec<AugmentationDescriptor>,
    pub augment_y: Vec<AugmentationDescriptor>,
    /// Largest between-block residual of the product model for which the
    /// joint solve is skipped.
    pub warm_start_tolerance: f64,
    pub solver: SolverOptions,
    /// Use the last iterate of a solve that ran out of budget instead of failing.
    pub accept_unconverged: bool,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self {
            k: 2,
            degree: 2,
            augment_x: Vec::new(),
            augment_y: Vec::new(),
            warm_start_tolerance: DEFAULT_WARM_START_TOLERANCE,
            solver: SolverOptions::default(),
            accept_unconverged: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub d: usize,
    pub k: u32,
    pub q: usize,
    pub fingerprint: String,
}

impl From<&StatisticsSpec> for SpecSummary {
    fn from(s: &StatisticsSpec) -> Self {
        Self {
            d: s.d(),
            k: s.k(),
            q: s.q(),
            fingerprint: format!("{:016x}", s.fingerprint()),
        }
    }
}

/// Diagnostics of one entropy solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub role: String,
    pub entropy: f64,
    pub skipped: bool,
    pub converged: bool,
    pub residual_max: f64,
    pub partition: f64,
    pub iterations: usize,
    pub mc_samples: usize,
    pub method: String,
    pub sampler: String,
    pub seed: u64,
}

impl SolveReport {
    fn from_solution(role: &str, s: &MaxEntSolution) -> Self {
        Self {
            role: role.to_string(),
            entropy: s.entropy,
            skipped: false,
            converged: s.diagnostics.converged,
            residual_max: s.residual_max(),
            partition: s.partition_estimate,
            iterations: s.iterations,
            mc_samples: s.mc_samples_per_iter,
            method: format!("{:?}", s.diagnostics.method).to_lowercase(),
            sampler: s.diagnostics.sampler.clone(),
            seed: s.seed,
        }
    }

    fn skipped(role: &str, entropy: f64, seed: u64) -> Self {
        Self {
            role: role.to_string(),
            entropy,
            skipped: true,
            converged: true,
            residual_max: 0.0,
            partition: 1.0,
            iterations: 0,
            mc_samples: 0,
            method: "none".into(),
            sampler: "none".into(),
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub mi_nats: f64,
    pub mi_raw: f64,
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub n: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub spec_x: SpecSummary,
    pub spec_y: SpecSummary,
    pub spec_xy: SpecSummary,
    /// Max constraint-norm used by the non-negativity tolerance.
    pub alpha_l1: f64,
    pub between_residual_max: f64,
    pub joint_solve_skipped: bool,
    pub converged: bool,
    pub solves: Vec<SolveReport>,
    pub warnings: Vec<String>,
    pub seed: u64,
}

/// Disjoint coordinate blocks and the terms linking them.
///
/// With `shared` coordinates the blocks are conditionally independent given
/// them and the entropy is `sum h(w, v_i) - (B - 1) h(w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Vec<usize>>,
    #[serde(default)]
    pub shared: Vec<usize>,
    pub between_terms: Vec<Term>,
    pub warm_start_tolerance: f64,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, between_terms: Vec<Term>) -> Self {
        Self {
            blocks,
            shared: Vec::new(),
            between_terms,
            warm_start_tolerance: DEFAULT_WARM_START_TOLERANCE,
        }
    }

    /// Blocks `v_i` that only interact through the `shared` coordinates.
    pub fn conditional(shared: Vec<usize>, blocks: Vec<Vec<usize>>) -> Self {
        Self {
            blocks,
            shared,
            between_terms: Vec::new(),
            warm_start_tolerance: DEFAULT_WARM_START_TOLERANCE,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let mut owner = vec![usize::MAX; d];
        let all = self.blocks.iter().enumerate().chain(std::iter::once((usize::MAX - 1, &self.shared)));
        for (b, coords) in all {
            for &c in coords {
                if c >= d {
                    return Err(Error::InvalidParameter(format!(
                        "block coordinate {c} outside dimension {d}"
                    )));
                }
                if owner[c] != usize::MAX {
                    return Err(Error::OverlappingBlocks(c));
                }
                owner[c] = b;
            }
        }
        if let Some(c) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidParameter(format!(
                "coordinate {c} belongs to no block"
            )));
        }
        if self.blocks.is_empty() || self.blocks.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("blocks must be non-empty".into()));
        }
        if !self.shared.is_empty() && !self.between_terms.is_empty() {
            return Err(Error::InvalidParameter(
                "between terms are not used with shared coordinates".into(),
            ));
        }
        for t in &self.between_terms {
            let mut bs: Vec<usize> = t
                .coords()
                .map(|c| owner.get(c).copied().unwrap_or(usize::MAX))
                .collect();
            bs.sort_unstable();
            bs.dedup();
            if bs.len() < 2 || bs.contains(&usize::MAX) {
                return Err(Error::InvalidParameter(format!(
                    "between term {t} must span at least two blocks"
                )));
            }
        }
        if !(self.warm_start_tolerance >= 0.0) {
            return Err(Error::InvalidParameter(
                "warm_start_tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Result of [`blockwise_entropy`].
#[derive(Clone, Debug, PartialEq)]
pub struct BlockwiseEntropy {
    pub entropy: f64,
    pub block_entropies: Vec<f64>,
    pub block_solutions: Vec<MaxEntSolution>,
    /// Max `|E_product[gamma] - alpha_gamma|` over the between terms.
    pub between_residual_max: f64,
    pub full_solve_skipped: bool,
    pub joint: Option<MaxEntSolution>,
    pub joint_spec: Option<StatisticsSpec>,
    /// Entropy of the shared coordinates, for conditional partitions.
    pub shared_entropy: Option<f64>,
}

fn run_solve(
    spec: &StatisticsSpec,
    sample: &CopulaSample,
    opts: &SolverOptions,
    seed: u64,
    warm: Option<&[f64]>,
    accept_unconverged: bool,
) -> Result<MaxEntSolution> {
    let alpha = estimate_constraints(sample, spec)?;
    let opts = opts.clone().with_seed(seed);
    match solve(spec, &alpha, &opts, warm) {
        Err(Error::NotConverged(s)) if accept_unconverged => Ok(*s),
        r => r,
    }
}

/// Rank-transforms `data`, estimates the constraints and solves.
pub fn copula_entropy(
    data: ArrayView2<'_, f64>,
    spec: &StatisticsSpec,
    opts: &SolverOptions,
) -> Result<(f64, MaxEntSolution)> {
    let sample = dual_representation(data)?;
    let sol = run_solve(spec, &sample, opts, opts.seed, None, false)?;
    Ok((sol.entropy, sol))
}

/// Expectation of `term` under the product of the block models.
fn product_expectation(
    term: &Term,
    blocks: &[Vec<usize>],
    specs: &[StatisticsSpec],
    alphas: &[Vec<f64>],
    solutions: &[MaxEntSolution],
    seed: u64,
) -> Result<f64> {
    let mut value = 1.0;
    for (b, coords) in blocks.iter().enumerate() {
        let local: Vec<(usize, u32)> = term
            .exponents
            .iter()
            .filter_map(|&(c, p)| coords.iter().position(|&x| x == c).map(|l| (l, p)))
            .collect();
        if local.is_empty() {
            continue;
        }
        let part = Term::monomial(&local);
        value *= match specs[b].index_of(&part) {
            // matched by the block solve up to its tolerance
            Some(i) => alphas[b][i],
            None => expectation(
                &solutions[b].theta,
                &specs[b],
                |u| part.evaluate(u),
                &McConfig {
                    samples: 1 << 16,
                    seed,
                    rule: McRule::Halton,
                },
            )?,
        };
    }
    Ok(value)
}

fn blockwise_on_sample(
    sample: &CopulaSample,
    partition: &BlockPartition,
    specs: Vec<StatisticsSpec>,
    opts: &SolverOptions,
    accept_unconverged: bool,
) -> Result<BlockwiseEntropy> {
    let nb = partition.blocks.len();
    let mut solutions = Vec::with_capacity(nb);
    let mut alphas = Vec::with_capacity(nb);
    for (b, (coords, spec)) in partition.blocks.iter().zip(&specs).enumerate() {
        let sub = sample.columns(coords);
        alphas.push(estimate_constraints(&sub, spec)?.values().to_vec());
        solutions.push(run_solve(spec, &sub, opts, opts.seed + b as u64, None, accept_unconverged)?);
    }
    let block_entropies: Vec<f64> = solutions.iter().map(|s| s.entropy).collect();
    let sum: f64 = block_entropies.iter().sum();

    let nested: Vec<NestBlock<'_>> = partition
        .blocks
        .iter()
        .zip(&specs)
        .map(|(c, s)| NestBlock::new(s, c.clone()))
        .collect();
    let joint_spec = nest(&nested, &partition.between_terms)?;
    let joint_alpha = estimate_constraints(sample, &joint_spec)?;

    let mut between_residual_max: f64 = 0.0;
    for &ti in &joint_spec.layout().between {
        let t = &joint_spec.terms()[ti];
        let e = product_expectation(t, &partition.blocks, &specs, &alphas, &solutions, opts.seed)?;
        between_residual_max = between_residual_max.max((e - joint_alpha.values()[ti]).abs());
    }

    if between_residual_max <= partition.warm_start_tolerance {
        return Ok(BlockwiseEntropy {
            entropy: sum,
            block_entropies,
            block_solutions: solutions,
            between_residual_max,
            full_solve_skipped: true,
            joint: None,
            joint_spec: Some(joint_spec),
            shared_entropy: None,
        });
    }

    // product of the block densities, between parameters at zero
    let mut warm = vec![0.0; joint_spec.q()];
    for ((coords, spec), sol) in partition.blocks.iter().zip(&specs).zip(&solutions) {
        for (t, th) in spec.terms().iter().zip(&sol.theta) {
            let j = joint_spec
                .index_of(&t.remap(coords))
                .expect("nested spec holds every block term");
            warm[j] += th;
        }
    }
    let joint = run_solve(
        &joint_spec,
        sample,
        opts,
        opts.seed + nb as u64,
        Some(&warm),
        accept_unconverged,
    )?;
    Ok(BlockwiseEntropy {
        entropy: joint.entropy,
        block_entropies,
        block_solutions: solutions,
        between_residual_max,
        full_solve_skipped: false,
        joint: Some(joint),
        joint_spec: Some(joint_spec),
        shared_entropy: None,
    })
}

/// Joint copula entropy assembled from block problems.
///
/// `builder` receives the data coordinates of a block and returns its spec.
pub fn blockwise_entropy<F>(
    data: ArrayView2<'_, f64>,
    partition: &BlockPartition,
    builder: F,
    opts: &SolverOptions,
) -> Result<BlockwiseEntropy>
where
    F: Fn(&[usize]) -> Result<StatisticsSpec>,
{
    partition.validate(data.ncols())?;
    let sample = dual_representation(data)?;
    if partition.shared.is_empty() {
        let specs = partition
            .blocks
            .iter()
            .map(|c| builder(c))
            .collect::<Result<Vec<_>>>()?;
        return blockwise_on_sample(&sample, partition, specs, opts, false);
    }

    let w = &partition.shared;
    let nb = partition.blocks.len();
    let mut block_entropies = Vec::with_capacity(nb);
    let mut block_solutions = Vec::with_capacity(nb);
    for (b, v) in partition.blocks.iter().enumerate() {
        let coords: Vec<usize> = w.iter().chain(v).copied().collect();
        let spec = builder(&coords)?;
        let sol = run_solve(&spec, &sample.columns(&coords), opts, opts.seed + b as u64, None, false)?;
        block_entropies.push(sol.entropy);
        block_solutions.push(sol);
    }
    let spec_w = builder(w)?;
    let h_w = run_solve(&spec_w, &sample.columns(w), opts, opts.seed + nb as u64, None, false)?.entropy;
    let entropy = block_entropies.iter().sum::<f64>() - (nb as f64 - 1.0) * h_w;
    Ok(BlockwiseEntropy {
        entropy,
        block_entropies,
        block_solutions,
        between_residual_max: 0.0,
        full_solve_skipped: true,
        joint: None,
        joint_spec: None,
        shared_entropy: Some(h_w),
    })
}

fn origins_of(origins: &[ColumnOrigin]) -> Vec<Option<AugmentationDescriptor>> {
    origins.iter().map(|o| o.descriptor().cloned()).collect()
}

/// Estimates `I(x; y)` in nats. Rows of `x` and `y` must be aligned.
pub fn mutual_information(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    opts: &MiOptions,
) -> Result<MIEstimate> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    let n = x.nrows();
    let (xa, ox) = augment(x, &opts.augment_x)?;
    let (ya, oy) = augment(y, &opts.augment_y)?;
    let (dx, dy) = (xa.ncols(), ya.ncols());
    let spec_x = polynomial_spec(dx, opts.k, opts.degree)?.with_origins(&origins_of(&ox))?;
    let spec_y = polynomial_spec(dy, opts.k, opts.degree)?.with_origins(&origins_of(&oy))?;

    let joint = concatenate(Axis(1), &[xa.view(), ya.view()])
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let sample = dual_representation(joint.view())?;
    let xs: Vec<usize> = (0..dx).collect();
    let ys: Vec<usize> = (dx..dx + dy).collect();
    let partition = BlockPartition {
        between_terms: cross_products(&xs, &ys),
        blocks: vec![xs, ys],
        shared: Vec::new(),
        warm_start_tolerance: opts.warm_start_tolerance,
    };
    let res = blockwise_on_sample(
        &sample,
        &partition,
        vec![spec_x.clone(), spec_y.clone()],
        &opts.solver,
        opts.accept_unconverged,
    )?;
    let joint_spec = res.joint_spec.as_ref().expect("disjoint partition builds a joint spec");
    let alpha_l1 = estimate_constraints(&sample, joint_spec)?.l1_norm();

    let (h_x, h_y, h_xy) = (res.block_entropies[0], res.block_entropies[1], res.entropy);
    let mi_raw = h_x + h_y - h_xy;
    let mut solves = vec![
        SolveReport::from_solution("x", &res.block_solutions[0]),
        SolveReport::from_solution("y", &res.block_solutions[1]),
    ];
    solves.push(match &res.joint {
        Some(j) => SolveReport::from_solution("xy", j),
        None => SolveReport::skipped("xy", h_xy, opts.solver.seed + 2),
    });
    let mut warnings = Vec::new();
    if n < 10 * dx.max(dy) {
        warnings.push(format!(
            "n = {n} is small for {dx} x-coordinates and {dy} y-coordinates"
        ));
    }
    let converged = solves.iter().all(|s| s.converged);
    Ok(MIEstimate {
        mi_nats: mi_raw.max(0.0),
        mi_raw,
        h_x,
        h_y,
        h_xy,
        n,
        d_x: dx,
        d_y: dy,
        spec_x: (&spec_x).into(),
        spec_y: (&spec_y).into(),
        spec_xy: joint_spec.into(),
        alpha_l1,
        between_residual_max: res.between_residual_max,
        joint_solve_skipped: res.full_solve_skipped,
        converged,
        solves,
        warnings,
        seed: opts.solver.seed,
    })
}

/// Mutual information between column groups of an ingested table.
///
/// Categorical columns are already ordinal codes, so they enter through
/// their ranks like any other column. An empty `features` list means every
/// non-target column.
pub fn mixed_type_mi<S: AsRef<str>>(
    dataset: &Dataset,
    targets: &[S],
    features: &[S],
    opts: &MiOptions,
) -> Result<MIEstimate> {
    if targets.is_empty() {
        return Err(Error::InvalidParameter("at least one target column is required".into()));
    }
    let y = dataset.select(targets)?;
    let x = if features.is_empty() {
        let rest = dataset.other_columns(targets);
        if rest.is_empty() {
            return Err(Error::InvalidParameter("no feature columns left".into()));
        }
        dataset.select(&rest)?
    } else {
        dataset.select(features)?
    };
    mutual_information(x.view(), y.view(), opts)
}
