//! Orthonormal reparametrization of a monomial family.
//!
//! Each term `prod u_c^{p_c}` is paired with the tensor product of shifted
//! Legendre polynomials of the same multi-degree. When every lower monomial
//! of the expansion is part of the family, both span the same space and the
//! map is triangular; otherwise the raw monomial is kept for that term.

use std::collections::HashMap;

use crate::statistics::StatisticsSpec;

/// Highest single-coordinate power that gets a Legendre partner.
const MAX_ORTHO_POWER: u32 = 12;

#[derive(Clone, Debug)]
pub(crate) struct Basis {
    d: usize,
    width: usize,
    terms: Vec<Vec<(usize, u32)>>,
    ortho: Vec<bool>,
    /// `phi'_t = sum rows[t] (s, a) * phi_s`.
    rows: Vec<Vec<(usize, f64)>>,
    /// Off-diagonal column entries `(t, a)` of the same matrix.
    cols: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
    /// Terms ordered by decreasing total degree.
    by_degree: Vec<usize>,
    legendre: Vec<Vec<f64>>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Monomial coefficients of the orthonormal shifted Legendre polynomial of degree `n`.
fn legendre_coefficients(n: u32) -> Vec<f64> {
    let norm = (2.0 * n as f64 + 1.0).sqrt();
    (0..=n)
        .map(|k| {
            let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
            norm * sign * binomial(n, k) * binomial(n + k, k)
        })
        .collect()
}

impl Basis {
    pub fn new(spec: &StatisticsSpec) -> Self {
        let terms: Vec<Vec<(usize, u32)>> =
            spec.terms().iter().map(|t| t.exponents.clone()).collect();
        let max_power = terms
            .iter()
            .flat_map(|t| t.iter().map(|&(_, p)| p))
            .max()
            .unwrap_or(0);
        let legendre: Vec<Vec<f64>> = (0..=max_power.min(MAX_ORTHO_POWER))
            .map(legendre_coefficients)
            .collect();
        let index: HashMap<&[(usize, u32)], usize> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_slice(), i))
            .collect();

        let q = terms.len();
        let mut rows = Vec::with_capacity(q);
        let mut ortho = Vec::with_capacity(q);
        for (ti, t) in terms.iter().enumerate() {
            match expand(t, &legendre, &index) {
                Some(row) => {
                    rows.push(row);
                    ortho.push(true);
                }
                None => {
                    rows.push(vec![(ti, 1.0)]);
                    ortho.push(false);
                }
            }
        }
        let mut cols = vec![Vec::new(); q];
        let mut diag = vec![0.0; q];
        for (t, row) in rows.iter().enumerate() {
            for &(s, a) in row {
                if s == t {
                    diag[t] = a;
                } else {
                    cols[s].push((t, a));
                }
            }
        }
        let mut by_degree: Vec<usize> = (0..q).collect();
        let degree = |t: usize| terms[t].iter().map(|&(_, p)| p).sum::<u32>();
        by_degree.sort_by_key(|&t| std::cmp::Reverse(degree(t)));

        Self {
            d: spec.d(),
            width: max_power as usize + 1,
            terms,
            ortho,
            rows,
            cols,
            diag,
            by_degree,
            legendre,
        }
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    /// Scratch length needed by [`Basis::features`].
    pub fn scratch_len(&self) -> usize {
        2 * self.d * self.width
    }

    /// Orthonormal features at `u` (raw monomials when `orthonormal` is false).
    pub fn features(&self, u: &[f64], orthonormal: bool, scratch: &mut [f64], out: &mut [f64]) {
        let w = self.width;
        let (pow, leg) = scratch.split_at_mut(self.d * w);
        for (c, &x) in u.iter().enumerate() {
            let p = &mut pow[c * w..(c + 1) * w];
            p[0] = 1.0;
            for j in 1..w {
                p[j] = p[j - 1] * x;
            }
            if orthonormal {
                let l = &mut leg[c * w..(c + 1) * w];
                for (n, coef) in self.legendre.iter().enumerate() {
                    // Horner
                    let mut v = 0.0;
                    for &a in coef.iter().rev() {
                        v = v * x + a;
                    }
                    l[n] = v;
                }
            }
        }
        for (t, (o, term)) in out.iter_mut().zip(&self.terms).enumerate() {
            let table: &[f64] = if orthonormal && self.ortho[t] { leg } else { pow };
            let mut v = 1.0;
            for &(c, p) in term {
                v *= table[c * w + p as usize];
            }
            *o = v;
        }
    }

    /// `A x`: maps raw expectations to orthonormal ones.
    pub fn forward(&self, raw: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(s, a)| a * raw[s]).sum())
            .collect()
    }

    /// `A^T theta'`: natural parameters in the raw monomial basis.
    pub fn theta_to_raw(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q()];
        for (t, row) in self.rows.iter().enumerate() {
            for &(s, a) in row {
                out[s] += a * theta[t];
            }
        }
        out
    }

    /// Inverse of [`Basis::theta_to_raw`] by back-substitution.
    pub fn theta_from_raw(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.q()];
        for &s in &self.by_degree {
            let acc: f64 = self.cols[s].iter().map(|&(t, a)| a * out[t]).sum();
            out[s] = (raw[s] - acc) / self.diag[s];
        }
        out
    }
}

fn expand(
    term: &[(usize, u32)],
    legendre: &[Vec<f64>],
    index: &HashMap<&[(usize, u32)], usize>,
) -> Option<Vec<(usize, f64)>> {
    if term.iter().any(|&(_, p)| p as usize >= legendre.len()) {
        return None;
    }
    // Expand prod_c L_{p_c}(u_c) into monomials u^e with e <= p.
    let mut acc: Vec<(Vec<(usize, u32)>, f64)> = vec![(Vec::new(), 1.0)];
    for &(c, p) in term {
        let coef = &legendre[p as usize];
        let mut next = Vec::with_capacity(acc.len() * coef.len());
        for (exps, a) in &acc {
            for (j, &b) in coef.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let mut e = exps.clone();
                if j > 0 {
                    e.push((c, j as u32));
                }
                next.push((e, a * b));
            }
        }
        acc = next;
    }
    let mut row = Vec::with_capacity(acc.len());
    for (e, a) in acc {
        let s = *index.get(e.as_slice())?;
        row.push((s, a));
    }
    Some(row)
}
