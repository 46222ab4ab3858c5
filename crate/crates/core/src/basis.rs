//! Orthogonal polynomial families, total-degree multi-index sets and
//! multivariate basis evaluation.
//!
//! Two germ families are supported: Legendre polynomials for a germ uniform
//! on `[-1, 1]` (density 1/2) and probabilists' Hermite polynomials for a
//! standard normal germ. All evaluation goes through three-term recurrences.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GermKind {
    /// Legendre polynomials, germ ~ U[-1, 1].
    Uniform,
    /// Probabilists' Hermite polynomials, germ ~ N(0, 1).
    Normal,
}

impl GermKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GermKind::Uniform => "uniform",
            GermKind::Normal => "normal",
        }
    }

    /// Draws one germ value.
    pub fn sample<R: rand::Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            GermKind::Uniform => rng.random_range(-1.0..=1.0),
            GermKind::Normal => rng.sample(rand_distr::StandardNormal),
        }
    }

    /// Whether a germ value lies in the support of this family.
    pub fn contains(self, x: f64) -> bool {
        match self {
            GermKind::Uniform => (-1.0..=1.0).contains(&x),
            GermKind::Normal => x.is_finite(),
        }
    }
}

impl std::str::FromStr for GermKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GermKind::Uniform),
            "normal" => Ok(GermKind::Normal),
            other => Err(Error::InvalidInput(format!(
                "unknown germ kind '{other}' (expected 'uniform' or 'normal')"
            ))),
        }
    }
}

/// Evaluates the univariate polynomial of the given order at `x`.
pub fn eval_univariate(kind: GermKind, order: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if order == 0 {
        return prev;
    }
    let mut cur = x;
    for n in 1..order {
        let next = recurrence_step(kind, n, x, cur, prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k]` with the order-`k` polynomial at `x` for `k < out.len()`.
pub fn eval_univariate_all(kind: GermKind, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for n in 1..out.len() - 1 {
        out[n + 1] = recurrence_step(kind, n, x, out[n], out[n - 1]);
    }
}

#[inline]
fn recurrence_step(kind: GermKind, n: usize, x: f64, cur: f64, prev: f64) -> f64 {
    let nf = n as f64;
    match kind {
        // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        GermKind::Uniform => ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0),
        // He_{n+1} = x He_n - n He_{n-1}
        GermKind::Normal => x * cur - nf * prev,
    }
}

/// Squared norm of the order-`order` polynomial under the germ density.
pub fn univariate_norm_sq(kind: GermKind, order: usize) -> f64 {
    match kind {
        GermKind::Uniform => 1.0 / (2.0 * order as f64 + 1.0),
        GermKind::Normal => (1..=order).map(|k| k as f64).product(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }

    pub fn degrees(&self) -> &[usize] {
        &self.0
    }

    /// Concatenation `(self, other)`.
    pub fn concat(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = Vec::with_capacity(self.dim() + other.dim());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        MultiIndex(v)
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Canonical ordering of multi-indices: total degree first, then
/// lexicographically descending so that `10` precedes `01`.
pub fn graded_cmp(a: &MultiIndex, b: &MultiIndex) -> std::cmp::Ordering {
    a.total_degree()
        .cmp(&b.total_degree())
        .then_with(|| b.0.cmp(&a.0))
}

/// binomial(dim + order, order), or `None` on overflow.
pub fn total_degree_count(dim: usize, order: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for k in 1..=order as u128 {
        acc = acc.checked_mul(dim as u128 + k)? / k;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    usize::try_from(acc).ok()
}

/// All multi-indices of total degree `<= order` in `dim` dimensions, in
/// canonical (graded) order.
pub fn total_degree_indices(dim: usize, order: usize) -> Result<Vec<MultiIndex>> {
    if dim == 0 {
        return Err(Error::InvalidInput("basis dimension must be >= 1".into()));
    }
    // Anything beyond a few million terms cannot be regressed anyway.
    const MAX_TERMS: usize = 1 << 24;
    let count = total_degree_count(dim, order)
        .filter(|&c| c <= MAX_TERMS)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "total-degree basis with dim {dim} and order {order} is too large"
            ))
        })?;

    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; dim];
    for degree in 0..=order {
        push_with_degree(&mut out, &mut current, 0, degree);
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

// Emits every index of exactly `remaining` total degree over dims `pos..`,
// largest leading entry first.
fn push_with_degree(out: &mut Vec<MultiIndex>, cur: &mut [usize], pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.to_vec()));
        cur[pos] = 0;
        return;
    }
    for d in (0..=remaining).rev() {
        cur[pos] = d;
        push_with_degree(out, cur, pos + 1, remaining - d);
    }
    cur[pos] = 0;
}

/// A multivariate orthogonal basis: one germ family per dimension and an
/// ordered set of multi-indices with their squared norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasis")]
pub struct BasisSet {
    germ_kinds: Vec<GermKind>,
    indices: Vec<MultiIndex>,
    #[serde(skip)]
    norms_sq: Vec<f64>,
    #[serde(skip)]
    max_degree: Vec<usize>,
}

#[derive(Deserialize)]
struct RawBasis {
    germ_kinds: Vec<GermKind>,
    indices: Vec<MultiIndex>,
}

impl TryFrom<RawBasis> for BasisSet {
    type Error = Error;

    fn try_from(raw: RawBasis) -> Result<Self> {
        BasisSet::new(raw.germ_kinds, raw.indices)
    }
}

impl BasisSet {
    pub fn new(germ_kinds: Vec<GermKind>, indices: Vec<MultiIndex>) -> Result<Self> {
        if germ_kinds.is_empty() {
            return Err(Error::InvalidInput("basis needs at least one germ dimension".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidInput("basis needs at least one term".into()));
        }
        let dim = germ_kinds.len();
        for idx in &indices {
            check_dim("multi-index length", dim, idx.dim())?;
        }
        if !indices[0].is_zero() {
            return Err(Error::InvalidInput(
                "first basis term must be the all-zeros multi-index".into(),
            ));
        }
        let mut seen = std::collections::HashSet::with_capacity(indices.len());
        for idx in &indices {
            if !seen.insert(idx) {
                return Err(Error::InvalidInput(format!("duplicate multi-index {idx}")));
            }
        }
        let mut basis = BasisSet {
            germ_kinds,
            indices,
            norms_sq: Vec::new(),
            max_degree: Vec::new(),
        };
        basis.refresh_cache();
        Ok(basis)
    }

    /// Total-degree basis of the given order.
    pub fn total_degree(germ_kinds: Vec<GermKind>, order: usize) -> Result<Self> {
        let indices = total_degree_indices(germ_kinds.len(), order)?;
        Self::new(germ_kinds, indices)
    }

    fn refresh_cache(&mut self) {
        self.norms_sq = self
            .indices
            .iter()
            .map(|idx| {
                idx.0
                    .iter()
                    .zip(&self.germ_kinds)
                    .map(|(&d, &k)| univariate_norm_sq(k, d))
                    .product()
            })
            .collect();
        self.max_degree = (0..self.germ_kinds.len())
            .map(|d| self.indices.iter().map(|i| i.0[d]).max().unwrap_or(0))
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.germ_kinds.len()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn germ_kinds(&self) -> &[GermKind] {
        &self.germ_kinds
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn norms_sq(&self) -> &[f64] {
        &self.norms_sq
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|i| i == idx)
    }

    /// Values of every basis term at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(point, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("basis evaluation point", self.dim(), point.len())?;
        check_dim("basis output buffer", self.len(), out.len())?;
        let tables: Vec<Vec<f64>> = self
            .germ_kinds
            .iter()
            .zip(point)
            .zip(&self.max_degree)
            .map(|((&kind, &x), &maxd)| {
                let mut t = vec![0.0; maxd + 1];
                eval_univariate_all(kind, x, &mut t);
                t
            })
            .collect();
        for (o, idx) in out.iter_mut().zip(&self.indices) {
            *o = idx
                .0
                .iter()
                .zip(&tables)
                .map(|(&d, t)| t[d])
                .product();
        }
        Ok(())
    }

    /// Design matrix with one row per point.
    pub fn design_matrix(&self, points: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>> {
        let mut m = nalgebra::DMatrix::zeros(points.len(), self.len());
        let mut row = vec![0.0; self.len()];
        for (r, p) in points.iter().enumerate() {
            self.eval_into(p, &mut row)?;
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn legendre_closed(n: usize, x: f64) -> f64 {
        match n {
            0 => 1.0,
            1 => x,
            2 => (3.0 * x * x - 1.0) / 2.0,
            3 => (5.0 * x.powi(3) - 3.0 * x) / 2.0,
            4 => (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0,
            5 => (63.0 * x.powi(5) - 70.0 * x.powi(3) + 15.0 * x) / 8.0,
            _ => unreachable!(),
        }
    }

    fn hermite_closed(n: usize, x: f64) -> f64 {
        match n {
            0 => 1.0,
            1 => x,
            2 => x * x - 1.0,
            3 => x.powi(3) - 3.0 * x,
            4 => x.powi(4) - 6.0 * x * x + 3.0,
            5 => x.powi(5) - 10.0 * x.powi(3) + 15.0 * x,
            _ => unreachable!(),
        }
    }

    #[test]
    fn univariate_examples() {
        assert_eq!(eval_univariate(GermKind::Uniform, 0, 0.7), 1.0);
        assert_eq!(eval_univariate(GermKind::Uniform, 2, 0.0), -0.5);
        assert_eq!(eval_univariate(GermKind::Normal, 3, 1.0), -2.0);
    }

    #[test]
    fn recurrence_matches_closed_forms() {
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            for n in 0..=5 {
                let l = eval_univariate(GermKind::Uniform, n, x);
                let h = eval_univariate(GermKind::Normal, n, x);
                assert!((l - legendre_closed(n, x)).abs() < 1e-12, "P{n}({x})");
                assert!((h - hermite_closed(n, x)).abs() < 1e-12, "He{n}({x})");
            }
        }
    }

    #[test]
    fn norms() {
        assert_eq!(univariate_norm_sq(GermKind::Uniform, 0), 1.0);
        assert_eq!(univariate_norm_sq(GermKind::Normal, 4), 24.0);
        // ∫_{-1}^{1} x² (1/2) dx via composite Simpson.
        let n = 2000;
        let h = 2.0 / n as f64;
        let f = |x: f64| 0.5 * eval_univariate(GermKind::Uniform, 1, x).powi(2);
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        let quad = s * h / 3.0;
        assert!((quad - 1.0 / 3.0).abs() < 1e-12);
        assert!((univariate_norm_sq(GermKind::Uniform, 1) - quad).abs() < 1e-12);
    }

    #[test]
    fn index_ordering() {
        let idx = total_degree_indices(2, 2).unwrap();
        let got: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        assert_eq!(got, ["00", "10", "01", "20", "11", "02"]);
        assert_eq!(total_degree_indices(1, 15).unwrap().len(), 16);
        assert_eq!(total_degree_indices(3, 1).unwrap().len(), 4);
        let mut sorted = idx.clone();
        sorted.sort_by(graded_cmp);
        assert_eq!(sorted, idx);
    }

    #[test]
    fn index_count_is_binomial() {
        fn binom(n: usize, k: usize) -> usize {
            (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
        }
        for dim in 1..=6 {
            for order in 0..=6 {
                let n = total_degree_indices(dim, order).unwrap().len();
                assert_eq!(n, binom(dim + order, order));
            }
        }
    }

    #[test]
    fn oversized_basis_rejected() {
        assert!(total_degree_indices(200, 40).is_err());
        assert!(total_degree_indices(0, 2).is_err());
    }

    #[test]
    fn basis_evaluation() {
        let b = BasisSet::new(
            vec![GermKind::Uniform; 2],
            vec![
                MultiIndex(vec![0, 0]),
                MultiIndex(vec![1, 0]),
                MultiIndex(vec![1, 1]),
            ],
        )
        .unwrap();
        let v = b.eval(&[0.5, -0.3]).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.5);
        assert!((v[2] - (-0.15)).abs() < 1e-15);
        assert!(matches!(b.eval(&[0.5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn basis_rejects_bad_index_sets() {
        let k = vec![GermKind::Normal];
        assert!(BasisSet::new(k.clone(), vec![MultiIndex(vec![1])]).is_err());
        assert!(BasisSet::new(k.clone(), vec![MultiIndex(vec![0]), MultiIndex(vec![0])]).is_err());
        assert!(BasisSet::new(k, vec![MultiIndex(vec![0, 0])]).is_err());
    }

    #[test]
    fn mixed_norms() {
        let b = BasisSet::total_degree(vec![GermKind::Uniform, GermKind::Normal], 2).unwrap();
        let j = b.position(&MultiIndex(vec![1, 1])).unwrap();
        assert!((b.norms_sq()[j] - 1.0 / 3.0).abs() < 1e-15);
        let j = b.position(&MultiIndex(vec![0, 2])).unwrap();
        assert_eq!(b.norms_sq()[j], 2.0);
    }
}
