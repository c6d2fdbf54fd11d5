//! Sparse complex operators on a finite orthonormal basis. Norms, spectral
//! projections and polar factors are computed one connected component at a
//! time, so operators made of many small blocks stay cheap.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::af_algebra::Operator;
use crate::error::{Error, Result};

/// Entries with modulus below this are dropped after every product.
const DROP: f64 = 1e-15;

/// Components up to this size are handled by dense factorizations.
const DENSE_LIMIT: usize = 1500;

const LANCZOS_STEPS: usize = 300;

type Row = Vec<(usize, Complex64)>;

/// Rows are stored sparsely: only nonempty rows, sorted by index, each with
/// entries sorted by column. Every operation costs time proportional to the
/// number of stored entries, not to the dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Op {
    n: usize,
    rows: Vec<(usize, Row)>,
}

fn merge_rows(a: &[(usize, Complex64)], b: &[(usize, Complex64)], sb: f64) -> Row {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let (c, v) = if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            i += 1;
            (a[i - 1].0, a[i - 1].1)
        } else if i == a.len() || b[j].0 < a[i].0 {
            j += 1;
            (b[j - 1].0, b[j - 1].1 * sb)
        } else {
            i += 1;
            j += 1;
            (a[i - 1].0, a[i - 1].1 + b[j - 1].1 * sb)
        };
        if v.norm() > DROP {
            out.push((c, v));
        }
    }
    out
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// A block of an operator: the rows and columns of one connected component.
struct Component {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Op {
    pub fn zeros(n: usize) -> Self {
        Op { n, rows: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Op {
            n,
            rows: (0..n).map(|i| (i, vec![(i, Complex64::new(1.0, 0.0))])).collect(),
        }
    }

    /// Builds an operator from `(row, col, value)` triples; repeated
    /// positions are summed.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut all: Vec<(usize, usize, Complex64)> = entries.into_iter().collect();
        for &(i, j, _) in &all {
            assert!(i < n && j < n, "entry ({i},{j}) outside dimension {n}");
        }
        all.sort_by_key(|e| (e.0, e.1));
        let mut rows: Vec<(usize, Row)> = Vec::new();
        let mut k = 0;
        while k < all.len() {
            let (i, j) = (all[k].0, all[k].1);
            let mut v = Complex64::new(0.0, 0.0);
            while k < all.len() && all[k].0 == i && all[k].1 == j {
                v += all[k].2;
                k += 1;
            }
            if v.norm() <= DROP {
                continue;
            }
            match rows.last_mut() {
                Some((r, row)) if *r == i => row.push((j, v)),
                _ => rows.push((i, vec![(j, v)])),
            }
        }
        Op { n, rows }
    }

    /// The rank-one operator `|a><b|`.
    pub fn unit(n: usize, a: usize, b: usize) -> Self {
        Self::from_entries(n, [(a, b, Complex64::new(1.0, 0.0))])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_entries(
            values.len(),
            values.iter().enumerate().map(|(i, &v)| (i, i, Complex64::new(v, 0.0))),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.1.len()).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        match self.rows.binary_search_by_key(&i, |r| r.0) {
            Ok(k) => &self.rows[k].1,
            Err(_) => &[],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = self.row(i);
        match row.binary_search_by_key(&j, |e| e.0) {
            Ok(k) => row[k].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(i, r)| r.iter().map(move |&(j, v)| (*i, j, v)))
    }

    fn check_dim(&self, o: &Self) {
        assert_eq!(self.n, o.n, "operators of different dimension");
    }

    fn combine(&self, o: &Self, sb: f64) -> Self {
        self.check_dim(o);
        let (a, b) = (&self.rows, &o.rows);
        let mut rows = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let (r, row) = if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                i += 1;
                (a[i - 1].0, a[i - 1].1.clone())
            } else if i == a.len() || b[j].0 < a[i].0 {
                j += 1;
                (b[j - 1].0, merge_rows(&[], &b[j - 1].1, sb))
            } else {
                i += 1;
                j += 1;
                (a[i - 1].0, merge_rows(&a[i - 1].1, &b[j - 1].1, sb))
            };
            if !row.is_empty() {
                rows.push((r, row));
            }
        }
        Op { n: self.n, rows }
    }

    pub fn scale_complex(&self, c: Complex64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|(i, r)| {
                (
                    *i,
                    r.iter()
                        .map(|&(j, v)| (j, v * c))
                        .filter(|e| e.1.norm() > DROP)
                        .collect::<Row>(),
                )
            })
            .filter(|r| !r.1.is_empty())
            .collect();
        Op { n: self.n, rows }
    }

    pub fn multiply(&self, o: &Self) -> Self {
        self.check_dim(o);
        let mut rows = Vec::new();
        let mut buf: Vec<(usize, Complex64)> = Vec::new();
        for (i, row) in &self.rows {
            buf.clear();
            for &(k, a) in row {
                buf.extend(o.row(k).iter().map(|&(j, b)| (j, a * b)));
            }
            buf.sort_by_key(|e| e.0);
            let mut out: Row = Vec::new();
            let mut t = 0;
            while t < buf.len() {
                let j = buf[t].0;
                let mut v = Complex64::new(0.0, 0.0);
                while t < buf.len() && buf[t].0 == j {
                    v += buf[t].1;
                    t += 1;
                }
                if v.norm() > DROP {
                    out.push((j, v));
                }
            }
            if !out.is_empty() {
                rows.push((*i, out));
            }
        }
        Op { n: self.n, rows }
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_entries(self.n, self.entries().map(|(i, j, v)| (j, i, v.conj())))
    }

    /// `W X W*` for the permutation unitary `W e_a = e_{perm[a]}`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        Self::from_entries(self.n, self.entries().map(|(i, j, v)| (perm[i], perm[j], v)))
    }

    pub fn trace(&self) -> Complex64 {
        self.rows.iter().map(|(i, _)| self.get(*i, *i)).sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (i, r) in &self.rows {
            out[*i] = r.iter().map(|&(j, v)| v * x[j]).sum();
        }
        out
    }

    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for (i, j, v) in self.entries() {
            out[j] += v.conj() * x[i];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.entries() {
            m[(i, j)] = v;
        }
        m
    }

    /// Components of the bipartite row/column graph, over the rows and
    /// columns that carry entries.
    fn bipartite_components(&self) -> Vec<Component> {
        let mut rows: Vec<usize> = self.rows.iter().map(|r| r.0).collect();
        let mut cols: Vec<usize> = self.entries().map(|e| e.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let nr = rows.len();
        let mut uf = UnionFind::new(nr + cols.len());
        for (a, (_, row)) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                let b = cols.binary_search(&j).expect("column present");
                uf.union(a, nr + b);
            }
        }
        let labels: Vec<(usize, bool)> = rows
            .iter()
            .map(|&i| (i, true))
            .chain(cols.iter().map(|&j| (j, false)))
            .collect();
        Self::group(&mut uf, &labels)
    }

    /// Components of the graph on all indices joined by nonzero entries;
    /// indices without entries form singleton components.
    fn symmetric_components(&self) -> Vec<Component> {
        let n = self.n;
        let mut uf = UnionFind::new(n);
        for (i, j, _) in self.entries() {
            uf.union(i, j);
        }
        let mut comps = Self::group(&mut uf, &(0..n).map(|i| (i, true)).collect::<Vec<_>>());
        for c in &mut comps {
            c.cols = c.rows.clone();
        }
        comps
    }

    fn group(uf: &mut UnionFind, labels: &[(usize, bool)]) -> Vec<Component> {
        let mut index = std::collections::HashMap::new();
        let mut comps: Vec<Component> = Vec::new();
        for (x, &(id, is_row)) in labels.iter().enumerate() {
            let root = uf.find(x);
            let k = *index.entry(root).or_insert_with(|| {
                comps.push(Component { rows: Vec::new(), cols: Vec::new() });
                comps.len() - 1
            });
            if is_row {
                comps[k].rows.push(id);
            } else {
                comps[k].cols.push(id);
            }
        }
        comps
    }

    fn dense_block(&self, c: &Component) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(c.rows.len(), c.cols.len());
        for (a, &i) in c.rows.iter().enumerate() {
            for &(j, v) in self.row(i) {
                if let Ok(b) = c.cols.binary_search(&j) {
                    m[(a, b)] = v;
                }
            }
        }
        m
    }

    fn scatter(c: &Component, m: &DMatrix<Complex64>, out: &mut Vec<(usize, usize, Complex64)>) {
        for (a, &i) in c.rows.iter().enumerate() {
            for (b, &j) in c.cols.iter().enumerate() {
                let v = m[(a, b)];
                if v.norm() > DROP {
                    out.push((i, j, v));
                }
            }
        }
    }

    /// Largest singular value by Lanczos iteration on `X* X`.
    fn lanczos_norm(&self) -> f64 {
        let n = self.n;
        let steps = LANCZOS_STEPS.min(n);
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(steps);
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05))
            .collect();
        let nv = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        for _ in 0..steps {
            let mut w = self.apply_adjoint(&self.apply(&v));
            let a: f64 = v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
            alpha.push(a);
            basis.push(v.clone());
            for b in &basis {
                let c: Complex64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
            }
            let nb = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if nb < 1e-13 {
                break;
            }
            beta.push(nb);
            v = w.into_iter().map(|x| x / nb).collect();
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j || j + 1 == i {
                beta[i.min(j)]
            } else {
                0.0
            }
        });
        let top = t.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max);
        top.max(0.0).sqrt()
    }

    pub fn op_norm(&self) -> f64 {
        let comps = self.bipartite_components();
        if comps.iter().any(|c| c.rows.len().min(c.cols.len()) > DENSE_LIMIT) {
            return self.lanczos_norm();
        }
        comps
            .iter()
            .map(|c| {
                if c.rows.len() == 1 || c.cols.len() == 1 {
                    // A single row or column: the norm is its Euclidean length.
                    return c
                        .rows
                        .iter()
                        .flat_map(|&i| self.row(i).iter().filter(|e| c.cols.binary_search(&e.0).is_ok()))
                        .map(|e| e.1.norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                }
                let m = self.dense_block(c);
                m.singular_values().iter().cloned().fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn require_dense(c: &Component) -> Result<()> {
        let size = c.rows.len().max(c.cols.len());
        if size > DENSE_LIMIT {
            return Err(Error::Cap {
                what: "operator component size",
                required: size as u128,
                cap: DENSE_LIMIT as u128,
            });
        }
        Ok(())
    }
}

impl Operator for Op {
    fn add(&self, o: &Self) -> Self {
        self.combine(o, 1.0)
    }

    fn sub(&self, o: &Self) -> Self {
        self.combine(o, -1.0)
    }

    fn mul(&self, o: &Self) -> Self {
        self.multiply(o)
    }

    fn scale(&self, c: f64) -> Self {
        self.scale_complex(Complex64::new(c, 0.0))
    }

    fn adjoint(&self) -> Self {
        self.conj_transpose()
    }

    fn one(&self) -> Self {
        Op::identity(self.n)
    }

    fn norm(&self) -> f64 {
        self.op_norm()
    }

    fn rank(&self) -> f64 {
        self.trace().re
    }

    fn spectral_projection(&self, threshold: f64, gap: f64) -> Result<Self> {
        let mut out = Vec::new();
        for c in self.symmetric_components() {
            Self::require_dense(&c)?;
            if c.rows.len() == 1 {
                let i = c.rows[0];
                let lam = self.get(i, i).re;
                if (lam - threshold).abs() < gap {
                    return Err(Error::SpectralGap(lam));
                }
                if lam > threshold {
                    out.push((i, i, Complex64::new(1.0, 0.0)));
                }
                continue;
            }
            let m = self.dense_block(&c);
            let m = (&m + m.adjoint()).scale(0.5);
            let eig = m.symmetric_eigen();
            let mut p = DMatrix::<Complex64>::zeros(c.rows.len(), c.rows.len());
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if (lam - threshold).abs() < gap {
                    return Err(Error::SpectralGap(lam));
                }
                if lam > threshold {
                    let v = eig.eigenvectors.column(k);
                    p += v * v.adjoint();
                }
            }
            Self::scatter(&c, &p, &mut out);
        }
        Ok(Op::from_entries(self.n, out))
    }

    fn polar_unitary(&self) -> Result<Self> {
        let comps = self.bipartite_components();
        let covered: usize = comps.iter().map(|c| c.rows.len()).sum();
        if covered != self.n {
            return Err(Error::Precondition("operator has a zero row; not invertible".into()));
        }
        let mut out = Vec::new();
        for c in comps {
            Self::require_dense(&c)?;
            if c.rows.len() != c.cols.len() {
                return Err(Error::Precondition("operator is not invertible".into()));
            }
            if c.rows.len() == 1 {
                let v = self.get(c.rows[0], c.cols[0]);
                if v.norm() < 1e-12 {
                    return Err(Error::Precondition("operator is not invertible".into()));
                }
                out.push((c.rows[0], c.cols[0], v / v.norm()));
                continue;
            }
            let svd = self.dense_block(&c).svd(true, true);
            if svd.singular_values.iter().any(|&s| s < 1e-12) {
                return Err(Error::Precondition("operator is not invertible".into()));
            }
            let u = svd.u.expect("requested");
            let vt = svd.v_t.expect("requested");
            Self::scatter(&c, &(u * vt), &mut out);
        }
        Ok(Op::from_entries(self.n, out))
    }

    fn polar_partial(&self, cutoff: f64) -> (Self, usize) {
        let mut out = Vec::new();
        let mut kept = 0;
        for c in self.bipartite_components() {
            let svd = self.dense_block(&c).svd(true, true);
            let u = svd.u.expect("requested");
            let vt = svd.v_t.expect("requested");
            let mut w = DMatrix::<Complex64>::zeros(c.rows.len(), c.cols.len());
            for (k, &s) in svd.singular_values.iter().enumerate() {
                if s > cutoff {
                    kept += 1;
                    w += u.column(k) * vt.row(k);
                }
            }
            Self::scatter(&c, &w, &mut out);
        }
        (Op::from_entries(self.n, out), kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::af_algebra::{conjugating_unitary, snap_partial_isometry};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_norm(x: &Op) -> f64 {
        x.to_dense().singular_values().iter().cloned().fold(0.0, f64::max)
    }

    fn sample(n: usize, seed: u64) -> Op {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) as f64) / (1u64 << 31) as f64 - 0.5
        };
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if (i * 7 + j * 3) % 5 == 0 && (i / 4 == j / 4) {
                    entries.push((i, j, c(next(), next())));
                }
            }
        }
        Op::from_entries(n, entries)
    }

    #[test]
    fn arithmetic_matches_dense() {
        let a = sample(12, 1);
        let b = sample(12, 2);
        let prod = a.mul(&b).to_dense();
        assert!((prod - a.to_dense() * b.to_dense()).norm() < 1e-12);
        assert!((a.sub(&b).to_dense() - (a.to_dense() - b.to_dense())).norm() < 1e-12);
        assert!((a.adjoint().to_dense() - a.to_dense().adjoint()).norm() < 1e-14);
        assert!((a.op_norm() - dense_norm(&a)).abs() < 1e-10);
        assert!((a.lanczos_norm() - dense_norm(&a)).abs() < 1e-8);
    }

    #[test]
    fn permutation_and_units() {
        let x = Op::unit(4, 0, 1);
        let y = x.permute(&[1, 2, 3, 0]);
        assert_eq!(y, Op::unit(4, 1, 2));
        assert_eq!(Op::unit(4, 1, 2).mul(&Op::unit(4, 2, 3)), Op::unit(4, 1, 3));
        assert_eq!(Op::identity(3).rank(), 3.0);
        assert_eq!(Op::zeros(3).op_norm(), 0.0);
    }

    #[test]
    fn spectral_and_polar() {
        let t: f64 = 0.1;
        // A rotated rank-one projection in the first two coordinates.
        let (cs, sn) = (t.cos(), t.sin());
        let f = Op::from_entries(
            3,
            [
                (0, 0, c(cs * cs, 0.0)),
                (0, 1, c(cs * sn, 0.0)),
                (1, 0, c(cs * sn, 0.0)),
                (1, 1, c(sn * sn, 0.0)),
            ],
        );
        let p = f.scale(0.9).spectral_projection(0.5, 1e-6).unwrap();
        assert!(p.sub(&f).op_norm() < 1e-12);
        assert!(f.scale(0.5).spectral_projection(0.5, 1e-6).is_err());
        let e = Op::unit(3, 0, 0);
        let u = conjugating_unitary(&e, &f).unwrap();
        assert!(u.adjoint().mul(&e).mul(&u).sub(&f).op_norm() < 1e-12);
        assert!(u.mul(&u.adjoint()).sub(&Op::identity(3)).op_norm() < 1e-12);
        let q = snap_partial_isometry(&Op::unit(3, 2, 0).scale(0.9), &e, &Op::unit(3, 2, 2)).unwrap();
        assert!(q.sub(&Op::unit(3, 2, 0)).op_norm() < 1e-12);
        assert!(Op::unit(3, 0, 1).polar_unitary().is_err());
    }
}
