//! Rank transform and rank-based constraint estimates.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statistics::StatisticsSpec;

/// Column-wise ranks in `1..=n`; ties keep row order.
pub fn ranks(matrix: ArrayView2<'_, f64>) -> Result<Array2<u32>> {
    let (n, d) = matrix.dim();
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let mut out = Array2::zeros((n, d));
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for (col, values) in matrix.axis_iter(Axis(1)).enumerate() {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        order.clear();
        order.extend(0..n);
        // stable: equal values stay in row order
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        for (r, &row) in order.iter().enumerate() {
            out[[row, col]] = r as u32 + 1;
        }
    }
    Ok(out)
}

/// Copula-uniform points `rank / (n + 1)`, stored as ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct CopulaSample {
    ranks: Array2<u32>,
}

impl CopulaSample {
    pub fn from_ranks(ranks: Array2<u32>) -> Self {
        Self { ranks }
    }

    pub fn n(&self) -> usize {
        self.ranks.nrows()
    }

    pub fn d(&self) -> usize {
        self.ranks.ncols()
    }

    pub fn ranks(&self) -> &Array2<u32> {
        &self.ranks
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.ranks[[row, col]] as f64 / (self.n() as f64 + 1.0)
    }

    /// Writes row `row` into `out`.
    pub fn row_into(&self, row: usize, out: &mut [f64]) {
        let m = self.n() as f64 + 1.0;
        for (o, &r) in out.iter_mut().zip(self.ranks.row(row)) {
            *o = r as f64 / m;
        }
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let m = self.n() as f64 + 1.0;
        self.ranks.mapv(|r| r as f64 / m)
    }

    /// Sub-sample made of the given columns, in order.
    pub fn columns(&self, cols: &[usize]) -> CopulaSample {
        Self {
            ranks: self.ranks.select(Axis(1), cols),
        }
    }
}

/// Rank-transforms every column of `matrix` onto the open unit cube.
pub fn dual_representation(matrix: ArrayView2<'_, f64>) -> Result<CopulaSample> {
    if matrix.nrows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: matrix.nrows(),
        });
    }
    if matrix.ncols() == 0 {
        return Err(Error::InvalidParameter("matrix has no columns".into()));
    }
    Ok(CopulaSample {
        ranks: ranks(matrix)?,
    })
}

/// Target vector `alpha` aligned with one spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVector {
    values: Vec<f64>,
    spec_id: u64,
}

impl ConstraintVector {
    /// Wraps user-supplied targets; the first entry must be exactly 1.
    pub fn new(spec: &StatisticsSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.q() {
            return Err(Error::DimensionMismatch {
                expected: spec.q(),
                got: values.len(),
            });
        }
        if values[0] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "first constraint must be 1, got {}",
                values[0]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "constraint {i} is not finite"
            )));
        }
        Ok(Self {
            values,
            spec_id: spec.fingerprint(),
        })
    }

    /// Targets of the independence copula.
    pub fn uniform(spec: &StatisticsSpec) -> Self {
        Self {
            values: spec.uniform_targets(),
            spec_id: spec.fingerprint(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec_id(&self) -> u64 {
        self.spec_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn matches(&self, spec: &StatisticsSpec) -> bool {
        self.spec_id == spec.fingerprint() && self.values.len() == spec.q()
    }

    /// Entries at the given indices, re-keyed to `spec`.
    pub fn project(&self, spec: &StatisticsSpec, indices: &[usize]) -> Result<Self> {
        Self::new(spec, indices.iter().map(|&i| self.values[i]).collect())
    }
}

/// Empirical mean of the statistics over the dual points.
pub fn estimate_constraints(sample: &CopulaSample, spec: &StatisticsSpec) -> Result<ConstraintVector> {
    if sample.d() != spec.d() {
        return Err(Error::DimensionMismatch {
            expected: spec.d(),
            got: sample.d(),
        });
    }
    let q = spec.q();
    let mut sum = vec![0.0; q];
    let mut u = vec![0.0; spec.d()];
    let mut phi = vec![0.0; q];
    for row in 0..sample.n() {
        sample.row_into(row, &mut u);
        spec.evaluate_into(&u, &mut phi);
        for (s, p) in sum.iter_mut().zip(&phi) {
            *s += p;
        }
    }
    let n = sample.n() as f64;
    let mut values: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    values[0] = 1.0;
    Ok(ConstraintVector {
        values,
        spec_id: spec.fingerprint(),
    })
}
