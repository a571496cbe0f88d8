//! Constraint-function families over the unit cube.
//!
//! A [`StatisticsSpec`] is an ordered list of monomial terms in the copula
//! coordinates `u_1..u_d`. The layout is fixed:
//!
//! 1. the constant `1`,
//! 2. marginal moments `u_i^j` for each coordinate `i` and power `j = 1..=k`,
//! 3. cross terms in lexicographic order, terms touching an augmented
//!    coordinate last.
//!
//! Distinct monomials are linearly independent functions on the cube, so
//! rejecting duplicates is enough to keep the family free of redundancy.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported marginal moment order.
pub const MAX_MOMENT_ORDER: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Constant,
    Monomial,
    Augmented,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationKind {
    /// `|x - mu|`; `mu` defaults to the column median.
    AbsDeviation { mu: Option<f64> },
    /// `max(|x - mu| - epsilon, 0)`.
    EpsilonInsensitive { mu: Option<f64>, epsilon: f64 },
    /// `x - floor(x / period) * period`.
    Periodic { period: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationDescriptor {
    /// Source column of the input matrix.
    pub column: usize,
    #[serde(flatten)]
    pub kind: AugmentationKind,
}

impl AugmentationDescriptor {
    pub fn abs_deviation(column: usize, mu: Option<f64>) -> Self {
        Self {
            column,
            kind: AugmentationKind::AbsDeviation { mu },
        }
    }

    pub fn epsilon_insensitive(column: usize, mu: Option<f64>, epsilon: f64) -> Self {
        Self {
            column,
            kind: AugmentationKind::EpsilonInsensitive { mu, epsilon },
        }
    }

    pub fn periodic(column: usize, period: f64) -> Self {
        Self {
            column,
            kind: AugmentationKind::Periodic { period },
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.column >= d {
            return Err(Error::InvalidParameter(format!(
                "augmentation references column {} of a {d}-column matrix",
                self.column
            )));
        }
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        match self.kind {
            AugmentationKind::AbsDeviation { mu } => {
                if mu.is_some_and(|m| !m.is_finite()) {
                    return bad("abs_deviation: mu must be finite");
                }
            }
            AugmentationKind::EpsilonInsensitive { mu, epsilon } => {
                if mu.is_some_and(|m| !m.is_finite()) {
                    return bad("epsilon_insensitive: mu must be finite");
                }
                if !(epsilon >= 0.0) || !epsilon.is_finite() {
                    return bad("epsilon_insensitive: epsilon must be finite and >= 0");
                }
            }
            AugmentationKind::Periodic { period } => {
                if !(period > 0.0) || !period.is_finite() {
                    return bad("periodic: period must be finite and > 0");
                }
            }
        }
        Ok(())
    }

    /// Same descriptor with a default `mu` replaced by the median of `column`.
    fn resolve(&self, column: &[f64]) -> Self {
        let kind = match self.kind {
            AugmentationKind::AbsDeviation { mu } => AugmentationKind::AbsDeviation {
                mu: Some(mu.unwrap_or_else(|| median(column))),
            },
            AugmentationKind::EpsilonInsensitive { mu, epsilon } => {
                AugmentationKind::EpsilonInsensitive {
                    mu: Some(mu.unwrap_or_else(|| median(column))),
                    epsilon,
                }
            }
            ref p @ AugmentationKind::Periodic { .. } => p.clone(),
        };
        Self {
            column: self.column,
            kind,
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self.kind {
            AugmentationKind::AbsDeviation { mu } => (x - mu.unwrap_or(0.0)).abs(),
            AugmentationKind::EpsilonInsensitive { mu, epsilon } => {
                ((x - mu.unwrap_or(0.0)).abs() - epsilon).max(0.0)
            }
            AugmentationKind::Periodic { period } => x - (x / period).floor() * period,
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Where a column of an augmented matrix came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnOrigin {
    Input(usize),
    /// Derived column; `mu` is already resolved.
    Derived(AugmentationDescriptor),
}

impl ColumnOrigin {
    pub fn descriptor(&self) -> Option<&AugmentationDescriptor> {
        match self {
            ColumnOrigin::Input(_) => None,
            ColumnOrigin::Derived(d) => Some(d),
        }
    }
}

/// Appends one derived column per descriptor.
pub fn augment(
    data: ArrayView2<'_, f64>,
    descriptors: &[AugmentationDescriptor],
) -> Result<(Array2<f64>, Vec<ColumnOrigin>)> {
    let d = data.ncols();
    for desc in descriptors {
        desc.validate(d)?;
    }
    let mut out = Array2::zeros((data.nrows(), d + descriptors.len()));
    out.slice_mut(ndarray::s![.., ..d]).assign(&data);
    let mut origins: Vec<ColumnOrigin> = (0..d).map(ColumnOrigin::Input).collect();
    for (a, desc) in descriptors.iter().enumerate() {
        let src = data.column(desc.column).to_vec();
        let resolved = desc.resolve(&src);
        for (dst, &x) in out.column_mut(d + a).iter_mut().zip(&src) {
            *dst = resolved.apply(x);
        }
        origins.push(ColumnOrigin::Derived(resolved));
    }
    Ok((out, origins))
}

/// One monomial `prod_c u_c^{p_c}` of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    /// `(coordinate, power)` pairs, sorted by coordinate, powers >= 1.
    pub exponents: Vec<(usize, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<AugmentationDescriptor>,
}

impl Term {
    pub fn constant() -> Self {
        Self {
            kind: TermKind::Constant,
            exponents: Vec::new(),
            source: None,
        }
    }

    /// Monomial from `(coordinate, power)` factors; repeated coordinates are
    /// merged and zero powers dropped.
    pub fn monomial(factors: &[(usize, u32)]) -> Self {
        let mut exps: Vec<(usize, u32)> = Vec::with_capacity(factors.len());
        let mut sorted = factors.to_vec();
        sorted.sort_unstable();
        for (c, p) in sorted {
            if p == 0 {
                continue;
            }
            match exps.last_mut() {
                Some((lc, lp)) if *lc == c => *lp += p,
                _ => exps.push((c, p)),
            }
        }
        let kind = if exps.is_empty() {
            TermKind::Constant
        } else {
            TermKind::Monomial
        };
        Self {
            kind,
            exponents: exps,
            source: None,
        }
    }

    /// The cross term `u_i * u_j`.
    pub fn product(i: usize, j: usize) -> Self {
        Self::monomial(&[(i, 1), (j, 1)])
    }

    pub fn power(i: usize, p: u32) -> Self {
        Self::monomial(&[(i, p)])
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().map(|&(_, p)| p).sum()
    }

    pub fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        self.exponents.iter().map(|&(c, _)| c)
    }

    pub fn is_marginal(&self) -> bool {
        self.exponents.len() == 1
    }

    pub fn evaluate(&self, u: &[f64]) -> f64 {
        self.exponents
            .iter()
            .map(|&(c, p)| u[c].powi(p as i32))
            .product()
    }

    /// Integral of the term over the unit cube.
    pub fn uniform_mean(&self) -> f64 {
        self.exponents
            .iter()
            .map(|&(_, p)| 1.0 / (p as f64 + 1.0))
            .product()
    }

    /// Same term with coordinate `c` renamed to `map[c]`.
    pub fn remap(&self, map: &[usize]) -> Self {
        let mut t = Term::monomial(
            &self
                .exponents
                .iter()
                .map(|&(c, p)| (map[c], p))
                .collect::<Vec<_>>(),
        );
        t.kind = self.kind;
        t.source = self.source.clone();
        t
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        for (i, &(c, p)) in self.exponents.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "u{}", c + 1)?;
            if p > 1 {
                write!(f, "^{p}")?;
            }
        }
        Ok(())
    }
}

fn canonical_cmp(a: &Term, b: &Term) -> Ordering {
    let aug = |t: &Term| t.kind == TermKind::Augmented;
    aug(a)
        .cmp(&aug(b))
        .then_with(|| a.exponents.cmp(&b.exponents))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub coords: Vec<usize>,
    /// Indices of the non-constant terms that only touch `coords`.
    pub terms: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub blocks: Vec<Block>,
    /// Indices of terms spanning more than one block.
    pub between: Vec<usize>,
}

/// An ordered, validated family of constraint functions.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticsSpec {
    d: usize,
    k: u32,
    origins: Vec<Option<AugmentationDescriptor>>,
    terms: Vec<Term>,
    layout: BlockLayout,
}

/// Serialized form of a spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub d: usize,
    pub k: u32,
    pub q: usize,
    pub fingerprint: String,
    pub terms: Vec<TermEntry>,
    pub layout: BlockLayout,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub augmented_coordinates: Vec<(usize, AugmentationDescriptor)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub label: String,
    #[serde(flatten)]
    pub term: Term,
    /// Value of the term's expectation under the independence copula.
    pub uniform_target: f64,
}

impl StatisticsSpec {
    fn build(
        d: usize,
        k: u32,
        origins: Vec<Option<AugmentationDescriptor>>,
        cross: Vec<Term>,
        block_coords: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if k == 0 || k > MAX_MOMENT_ORDER {
            return Err(Error::InvalidParameter(format!(
                "moment order k must be in 1..={MAX_MOMENT_ORDER}, got {k}"
            )));
        }
        debug_assert_eq!(origins.len(), d);

        let tag = |mut t: Term| -> Term {
            if t.exponents.is_empty() {
                t.kind = TermKind::Constant;
                t.source = None;
                return t;
            }
            let src = t.coords().find_map(|c| origins[c].clone());
            t.kind = if src.is_some() {
                TermKind::Augmented
            } else {
                TermKind::Monomial
            };
            t.source = src;
            t
        };

        let mut terms = vec![Term::constant()];
        for i in 0..d {
            for j in 1..=k {
                terms.push(tag(Term::power(i, j)));
            }
        }
        let mut seen: HashSet<Vec<(usize, u32)>> =
            terms.iter().map(|t| t.exponents.clone()).collect();
        let mut extra = Vec::with_capacity(cross.len());
        for t in cross {
            if let Some(c) = t.coords().find(|&c| c >= d) {
                return Err(Error::InvalidParameter(format!(
                    "term {t} references coordinate {} of a {d}-dimensional spec",
                    c + 1
                )));
            }
            if t.exponents.is_empty() || !seen.insert(t.exponents.clone()) {
                return Err(Error::DuplicateTerm(t.to_string()));
            }
            extra.push(tag(t));
        }
        extra.sort_by(canonical_cmp);
        terms.extend(extra);

        let block_of = {
            let mut b = vec![usize::MAX; d];
            for (bi, coords) in block_coords.iter().enumerate() {
                for &c in coords {
                    b[c] = bi;
                }
            }
            b
        };
        let mut blocks: Vec<Block> = block_coords
            .into_iter()
            .map(|coords| Block {
                coords,
                terms: Vec::new(),
            })
            .collect();
        let mut between = Vec::new();
        for (ti, t) in terms.iter().enumerate().skip(1) {
            let mut owners = t.coords().map(|c| block_of[c]);
            let first = owners.next().expect("non-constant term");
            if owners.all(|b| b == first) {
                blocks[first].terms.push(ti);
            } else {
                between.push(ti);
            }
        }

        Ok(Self {
            d,
            k,
            origins,
            terms,
            layout: BlockLayout { blocks, between },
        })
    }

    /// Generic constructor: constant, the `k` marginal moments of every
    /// coordinate, plus the given cross terms.
    pub fn from_terms(d: usize, k: u32, cross: Vec<Term>) -> Result<Self> {
        Self::build(d, k, vec![None; d], cross, vec![(0..d).collect()])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Number of terms, including the constant.
    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn origins(&self) -> &[Option<AugmentationDescriptor>] {
        &self.origins
    }

    /// Non-constant, non-moment terms.
    pub fn cross_terms(&self) -> &[Term] {
        &self.terms[1 + self.d * self.k as usize..]
    }

    /// Index of the term with exactly these exponents.
    pub fn index_of(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t.exponents == term.exponents)
    }

    /// Expectations of every term under the independence copula; the
    /// moment entries are `1/(1+j)`.
    pub fn uniform_targets(&self) -> Vec<f64> {
        self.terms.iter().map(Term::uniform_mean).collect()
    }

    /// Evaluates every term at `u`, which must lie in the closed unit cube.
    pub fn evaluate(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: u.len(),
            });
        }
        if let Some((coord, &value)) = u
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfCube { coord, value });
        }
        let mut out = vec![0.0; self.q()];
        self.evaluate_into(u, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a caller-provided buffer of length `q`.
    pub fn evaluate_into(&self, u: &[f64], out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.evaluate(u);
        }
    }

    /// True when every term of `block` (re-indexed through `coord_map`)
    /// also appears in `self`.
    pub fn contains_terms_of(&self, block: &StatisticsSpec, coord_map: &[usize]) -> bool {
        let own: HashSet<&Vec<(usize, u32)>> = self.terms.iter().map(|t| &t.exponents).collect();
        block
            .terms
            .iter()
            .all(|t| own.contains(&t.remap(coord_map).exponents))
    }

    /// Stable 64-bit FNV-1a hash of the term list.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.d as u64);
        eat(self.k as u64);
        for t in &self.terms {
            eat(0xFFFF_FFFF);
            for &(c, p) in &t.exponents {
                eat(c as u64);
                eat(p as u64);
            }
        }
        h
    }

    /// Marks coordinates as augmentation-derived; affected terms become
    /// [`TermKind::Augmented`] and move behind the plain cross terms.
    pub fn with_origins(&self, origins: &[Option<AugmentationDescriptor>]) -> Result<Self> {
        if origins.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: origins.len(),
            });
        }
        Self::build(
            self.d,
            self.k,
            origins.to_vec(),
            self.cross_terms().to_vec(),
            self.layout.blocks.iter().map(|b| b.coords.clone()).collect(),
        )
    }

    pub fn to_document(&self) -> SpecDocument {
        SpecDocument {
            d: self.d,
            k: self.k,
            q: self.q(),
            fingerprint: format!("{:016x}", self.fingerprint()),
            terms: self
                .terms
                .iter()
                .map(|t| TermEntry {
                    label: t.to_string(),
                    term: t.clone(),
                    uniform_target: t.uniform_mean(),
                })
                .collect(),
            layout: self.layout.clone(),
            augmented_coordinates: self
                .origins
                .iter()
                .enumerate()
                .filter_map(|(c, o)| o.clone().map(|o| (c, o)))
                .collect(),
        }
    }

    /// Rebuilds and re-validates a spec from its serialized form.
    pub fn from_document(doc: &SpecDocument) -> Result<Self> {
        let mut origins = vec![None; doc.d];
        for (c, o) in &doc.augmented_coordinates {
            if *c >= doc.d {
                return Err(Error::InvalidParameter(format!(
                    "augmented coordinate {c} out of range"
                )));
            }
            origins[*c] = Some(o.clone());
        }
        let moments = 1 + doc.d * doc.k as usize;
        if doc.terms.len() < moments {
            return Err(Error::InvalidParameter(
                "document lists fewer terms than the moment block".into(),
            ));
        }
        let cross = doc.terms[moments..]
            .iter()
            .map(|e| Term::monomial(&e.term.exponents))
            .collect();
        let spec = Self::build(
            doc.d,
            doc.k,
            origins,
            cross,
            doc.layout.blocks.iter().map(|b| b.coords.clone()).collect(),
        )?;
        if format!("{:016x}", spec.fingerprint()) != doc.fingerprint {
            return Err(Error::InvalidParameter(
                "spec document fingerprint does not match its terms".into(),
            ));
        }
        Ok(spec)
    }
}

/// Constant plus the first `k` moments of each of `d` coordinates.
pub fn moment_spec(d: usize, k: u32) -> Result<StatisticsSpec> {
    StatisticsSpec::from_terms(d, k, Vec::new())
}

/// [`moment_spec`] plus every pairwise product `u_i u_j`, `i < j`.
pub fn polynomial_spec(d: usize, k: u32, degree: u32) -> Result<StatisticsSpec> {
    if degree != 2 {
        return Err(Error::UnsupportedDegree(degree));
    }
    let mut cross = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            cross.push(Term::product(i, j));
        }
    }
    StatisticsSpec::from_terms(d, k, cross)
}

/// A block spec together with the joint coordinates its local coordinates map to.
#[derive(Clone, Debug)]
pub struct NestBlock<'a> {
    pub spec: &'a StatisticsSpec,
    pub coords: Vec<usize>,
}

impl<'a> NestBlock<'a> {
    pub fn new(spec: &'a StatisticsSpec, coords: Vec<usize>) -> Self {
        Self { spec, coords }
    }

    /// Blocks laid out one after another starting at coordinate 0.
    pub fn consecutive(specs: &[&'a StatisticsSpec]) -> Vec<Self> {
        let mut offset = 0;
        specs
            .iter()
            .map(|s| {
                let b = Self::new(s, (offset..offset + s.d()).collect());
                offset += s.d();
                b
            })
            .collect()
    }
}

/// Joint spec holding every block term plus between-block terms.
///
/// Blocks must partition the joint coordinates and share one moment order.
/// Each between term has to touch at least two blocks.
pub fn nest(blocks: &[NestBlock<'_>], between: &[Term]) -> Result<StatisticsSpec> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::InvalidParameter("nest needs at least one block".into()))?;
    let k = first.spec.k();
    let d: usize = blocks.iter().map(|b| b.coords.len()).sum();
    let mut owner = vec![usize::MAX; d];
    for (bi, b) in blocks.iter().enumerate() {
        if b.coords.len() != b.spec.d() {
            return Err(Error::DimensionMismatch {
                expected: b.spec.d(),
                got: b.coords.len(),
            });
        }
        if b.spec.k() != k {
            return Err(Error::InvalidParameter(format!(
                "blocks use different moment orders ({} and {k})",
                b.spec.k()
            )));
        }
        for &c in &b.coords {
            if c >= d {
                return Err(Error::InvalidParameter(format!(
                    "block coordinate {c} outside the joint dimension {d}"
                )));
            }
            if owner[c] != usize::MAX {
                return Err(Error::OverlappingBlocks(c));
            }
            owner[c] = bi;
        }
    }

    let mut origins = vec![None; d];
    let mut cross = Vec::new();
    for b in blocks {
        for (local, &c) in b.coords.iter().enumerate() {
            origins[c] = b.spec.origins[local].clone();
        }
        cross.extend(b.spec.cross_terms().iter().map(|t| t.remap(&b.coords)));
    }
    for t in between {
        if let Some(c) = t.coords().find(|&c| c >= d) {
            return Err(Error::InvalidParameter(format!(
                "between term {t} references coordinate {} of a {d}-dimensional spec",
                c + 1
            )));
        }
        let mut owners: Vec<usize> = t.coords().map(|c| owner[c]).collect();
        owners.dedup();
        if owners.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "between term {t} lies inside a single block"
            )));
        }
        cross.push(Term::monomial(&t.exponents));
    }
    StatisticsSpec::build(
        d,
        k,
        origins,
        cross,
        blocks.iter().map(|b| b.coords.clone()).collect(),
    )
}

/// All products `u_i u_j` with `i` in `left` and `j` in `right`.
pub fn cross_products(left: &[usize], right: &[usize]) -> Vec<Term> {
    left.iter()
        .flat_map(|&i| right.iter().map(move |&j| Term::product(i, j)))
        .collect()
}

/// Evaluates the spec on every row of a matrix of cube points.
pub fn evaluate_rows(spec: &StatisticsSpec, points: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((points.nrows(), spec.q()));
    for (row, mut dst) in points.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let u = row.to_vec();
        spec.evaluate_into(&u, dst.as_slice_mut().expect("standard layout"));
    }
    out
}
