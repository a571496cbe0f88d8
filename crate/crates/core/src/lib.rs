//! Mutual information between random vectors through maximum-entropy copulas.
//!
//! The pipeline: ranks turn the data into copula-uniform points, a family of
//! polynomial statistics is averaged over those points, and the entropy of the
//! maximum-entropy density matching those averages is computed for `x`, `y`
//! and `(x, y)`. Their difference is the mutual information estimate.

pub mod bench;
pub mod bounds;
pub mod copula;
pub mod dataset;
pub mod error;
pub mod maxent;
pub mod mind;
pub mod rng;
pub mod special;
pub mod statistics;

pub use copula::{dual_representation, estimate_constraints, ranks, ConstraintVector, CopulaSample};
pub use dataset::{load_table, ColumnKind, ColumnSpec, Dataset, LoadOptions};
pub use error::{Error, Result};
pub use maxent::{solve, MaxEntSolution, Method, Sampler, SolverOptions};
pub use mind::{
    blockwise_entropy, copula_entropy, mixed_type_mi, mutual_information, BlockPartition,
    MIEstimate, MiOptions,
};
pub use statistics::{
    augment, moment_spec, nest, polynomial_spec, AugmentationDescriptor, AugmentationKind, Term,
    TermKind, StatisticsSpec,
};
