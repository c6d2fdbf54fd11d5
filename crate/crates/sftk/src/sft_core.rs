//! Transition matrices, edge graphs and canonically ordered paths.
//!
//! Vertices are numbered from 0. Edges are sorted by `(source, target, slot)`
//! and paths are compared lexicographically by their edge ids; every block
//! index in the rest of the crate refers to this order.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionMatrix {
    r: usize,
    entries: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    r: usize,
    entries: Vec<Vec<i64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        let mut entries = Vec::with_capacity(r * r);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {r}",
                    row.len()
                )));
            }
            for &x in row {
                if x < 0 {
                    return Err(Error::InvalidMatrix(format!("negative entry {x}")));
                }
                entries.push(x as u64);
            }
        }
        Ok(TransitionMatrix { r, entries })
    }

    /// Parses `"1,1;1,0"` (rows separated by `;`, entries by `,`).
    pub fn parse_inline(s: &str) -> Result<Self> {
        let rows = s
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<i64>()
                            .map_err(|_| Error::InvalidMatrix(format!("bad entry {x:?}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MatrixJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidMatrix(e.to_string()))?;
        let t = Self::new(m.entries)?;
        if t.r != m.r {
            return Err(Error::InvalidMatrix(format!(
                "declared r = {} but matrix is {}x{}",
                m.r, t.r, t.r
            )));
        }
        Ok(t)
    }

    /// Accepts either the JSON object form or the inline form.
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim_start().starts_with('{') {
            Self::from_json(s)
        } else {
            Self::parse_inline(s)
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(MatrixJson {
            r: self.r,
            entries: self.rows(),
        })
        .expect("matrix serializes")
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.r + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.r)
            .map(|i| (0..self.r).map(|j| self.get(i, j) as i64).collect())
            .collect()
    }

    /// The 1x1 matrix (1), whose shift is a single point.
    pub fn is_trivial(&self) -> bool {
        self.r == 1 && self.entries[0] == 1
    }

    pub fn edge_count(&self) -> u64 {
        self.entries.iter().sum()
    }

    /// `T^k` with arbitrary precision entries.
    pub fn power(&self, k: u32) -> Vec<Vec<BigInt>> {
        let r = self.r;
        let mut acc: Vec<Vec<BigInt>> = (0..r)
            .map(|i| (0..r).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
            .collect();
        for _ in 0..k {
            let mut next = vec![vec![BigInt::zero(); r]; r];
            for (i, row) in acc.iter().enumerate() {
                for (l, a) in row.iter().enumerate() {
                    if a.is_zero() {
                        continue;
                    }
                    for j in 0..r {
                        let t = self.get(l, j);
                        if t != 0 {
                            next[i][j] += a * BigInt::from(t);
                        }
                    }
                }
            }
            acc = next;
        }
        acc
    }
}

impl fmt::Display for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .rows()
            .iter()
            .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub id: u32,
    pub source: usize,
    pub target: usize,
    pub slot: u32,
}

/// A closed integer interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    pub a: i64,
    pub b: i64,
}

impl Interval {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a > b {
            return Err(Error::InvalidInput(format!("interval [{a},{b}] has a > b")));
        }
        Ok(Interval { a, b })
    }

    /// Number of coordinates, which is also the length of the paths living on it.
    pub fn width(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.a <= other.a && other.b <= self.b
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            a: self.a.min(other.a),
            b: self.b.max(other.b),
        }
    }

    pub fn disjoint(&self, other: &Interval) -> bool {
        self.b < other.a || other.b < self.a
    }

    pub fn shifted(&self, d: i64) -> Interval {
        Interval {
            a: self.a + d,
            b: self.b + d,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

/// A path in the edge graph. A path of length zero is a bare vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub start: usize,
    pub edges: Vec<u32>,
}

impl Path {
    pub fn vertex(v: usize) -> Self {
        Path {
            start: v,
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// The edge graph of a transition matrix together with path counting data.
#[derive(Debug, Clone)]
pub struct Sft {
    matrix: TransitionMatrix,
    edges: Vec<Edge>,
    out: Vec<Vec<u32>>,
}

/// Builds the graph with canonically ordered edges.
pub fn build_graph(t: &TransitionMatrix) -> Sft {
    Sft::new(t.clone())
}

impl Sft {
    pub fn new(matrix: TransitionMatrix) -> Self {
        let r = matrix.dim();
        let mut edges = Vec::new();
        let mut out = vec![Vec::new(); r];
        for i in 0..r {
            for j in 0..r {
                for s in 0..matrix.get(i, j) {
                    let id = edges.len() as u32;
                    edges.push(Edge {
                        id,
                        source: i,
                        target: j,
                        slot: s as u32 + 1,
                    });
                    out[i].push(id);
                }
            }
        }
        Sft { matrix, edges, out }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(Self::new(TransitionMatrix::parse(s)?))
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    pub fn r(&self) -> usize {
        self.matrix.dim()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: u32) -> &Edge {
        &self.edges[id as usize]
    }

    /// Edge ids leaving `v`, in increasing order.
    pub fn out_edges(&self, v: usize) -> &[u32] {
        &self.out[v]
    }

    pub fn initial(&self, p: &Path) -> usize {
        p.start
    }

    pub fn terminal(&self, p: &Path) -> usize {
        match p.edges.last() {
            Some(&e) => self.edges[e as usize].target,
            None => p.start,
        }
    }

    pub fn path(&self, edges: Vec<u32>) -> Result<Path> {
        let first = *edges
            .first()
            .ok_or_else(|| Error::InvalidInput("path needs at least one edge".into()))?;
        let start = self
            .edges
            .get(first as usize)
            .ok_or_else(|| Error::InvalidInput(format!("unknown edge {first}")))?
            .source;
        let p = Path { start, edges };
        self.check_path(&p)?;
        Ok(p)
    }

    pub fn check_path(&self, p: &Path) -> Result<()> {
        let mut v = p.start;
        if v >= self.r() {
            return Err(Error::InvalidInput(format!("unknown vertex {v}")));
        }
        for &e in &p.edges {
            let edge = self
                .edges
                .get(e as usize)
                .ok_or_else(|| Error::InvalidInput(format!("unknown edge {e}")))?;
            if edge.source != v {
                return Err(Error::InvalidInput(format!(
                    "edge {e} does not start at vertex {v}"
                )));
            }
            v = edge.target;
        }
        Ok(())
    }

    /// Exact number of paths of length `len` from `i` to `j`, i.e. `T^len(i,j)`.
    pub fn count_paths(&self, i: usize, j: usize, len: u32) -> BigInt {
        self.matrix.power(len)[i][j].clone()
    }

    /// `T^k` as machine integers, for index arithmetic.
    pub fn counts(&self, len: usize) -> Result<Counts> {
        Counts::new(&self.matrix, len)
    }

    /// All paths of length `len` from `i` to `j` in canonical order.
    pub fn enumerate_paths(&self, i: usize, j: usize, len: usize, cap: u64) -> Result<Vec<Path>> {
        let counts = self.counts(len)?;
        let n = counts.get(len, i, j);
        if n > cap as u128 {
            return Err(Error::Cap {
                what: "path enumeration",
                required: n,
                cap: cap as u128,
            });
        }
        let mut out = Vec::with_capacity(n as usize);
        let mut stack = Vec::with_capacity(len);
        self.walk(i, j, len, &counts, &mut stack, &mut out);
        Ok(out)
    }

    fn walk(
        &self,
        v: usize,
        j: usize,
        remaining: usize,
        counts: &Counts,
        stack: &mut Vec<u32>,
        out: &mut Vec<Path>,
    ) {
        if remaining == 0 {
            if v == j {
                let start = match stack.first() {
                    Some(&e) => self.edges[e as usize].source,
                    None => v,
                };
                out.push(Path {
                    start,
                    edges: stack.clone(),
                });
            }
            return;
        }
        for &e in &self.out[v] {
            let t = self.edges[e as usize].target;
            if counts.get(remaining - 1, t, j) == 0 {
                continue;
            }
            stack.push(e);
            self.walk(t, j, remaining - 1, counts, stack, out);
            stack.pop();
        }
    }

    /// Paths of length `len` in canonical order grouped by nothing: every
    /// start and end vertex, sorted by `(initial, terminal, rank)`.
    pub fn all_paths(&self, len: usize, cap: u64) -> Result<Vec<Path>> {
        let counts = self.counts(len)?;
        let total: u128 = (0..self.r())
            .flat_map(|i| (0..self.r()).map(move |j| (i, j)))
            .map(|(i, j)| counts.get(len, i, j))
            .sum();
        if total > cap as u128 {
            return Err(Error::Cap {
                what: "path enumeration",
                required: total,
                cap: cap as u128,
            });
        }
        let mut out = Vec::with_capacity(total as usize);
        for i in 0..self.r() {
            for j in 0..self.r() {
                out.extend(self.enumerate_paths(i, j, len, cap)?);
            }
        }
        Ok(out)
    }

    /// Index of `p` among the paths with the same endpoints and length.
    pub fn path_rank(&self, p: &Path, counts: &Counts) -> u128 {
        let j = self.terminal(p);
        let len = p.len();
        let mut v = p.start;
        let mut rank = 0u128;
        for (pos, &e) in p.edges.iter().enumerate() {
            let rem = len - pos - 1;
            for &f in &self.out[v] {
                if f == e {
                    break;
                }
                rank += counts.get(rem, self.edges[f as usize].target, j);
            }
            v = self.edges[e as usize].target;
        }
        rank
    }

    /// Inverse of [`Sft::path_rank`].
    pub fn path_unrank(&self, i: usize, j: usize, len: usize, mut rank: u128, counts: &Counts) -> Result<Path> {
        if rank >= counts.get(len, i, j) {
            return Err(Error::InvalidInput(format!(
                "rank {rank} out of range for ({i},{j},{len})"
            )));
        }
        let mut v = i;
        let mut edges = Vec::with_capacity(len);
        for pos in 0..len {
            let rem = len - pos - 1;
            let mut chosen = None;
            for &f in &self.out[v] {
                let c = counts.get(rem, self.edges[f as usize].target, j);
                if rank < c {
                    chosen = Some(f);
                    break;
                }
                rank -= c;
            }
            let f = chosen.expect("rank within count");
            edges.push(f);
            v = self.edges[f as usize].target;
        }
        Ok(Path { start: i, edges })
    }

    /// Concatenation `x·y`; requires `t(x) = i(y)`.
    pub fn concat(&self, x: &Path, y: &Path) -> Result<Path> {
        if self.terminal(x) != y.start {
            return Err(Error::InvalidInput("paths do not compose".into()));
        }
        let mut edges = x.edges.clone();
        edges.extend_from_slice(&y.edges);
        Ok(Path {
            start: x.start,
            edges,
        })
    }
}

/// Table of `T^k` for `k = 0..=max` as `u128`, with overflow reported as a cap.
#[derive(Debug, Clone)]
pub struct Counts {
    r: usize,
    powers: Vec<Vec<u128>>,
}

impl Counts {
    pub fn new(t: &TransitionMatrix, max: usize) -> Result<Self> {
        let r = t.dim();
        let mut powers = Vec::with_capacity(max + 1);
        let mut cur = vec![0u128; r * r];
        for i in 0..r {
            cur[i * r + i] = 1;
        }
        powers.push(cur.clone());
        for _ in 0..max {
            let mut next = vec![0u128; r * r];
            for i in 0..r {
                for l in 0..r {
                    let a = cur[i * r + l];
                    if a == 0 {
                        continue;
                    }
                    for j in 0..r {
                        let b = t.get(l, j) as u128;
                        let add = a.checked_mul(b).and_then(|x| x.checked_add(next[i * r + j]));
                        next[i * r + j] = add.ok_or(Error::Cap {
                            what: "path count (u128)",
                            required: u128::MAX,
                            cap: u128::MAX,
                        })?;
                    }
                }
            }
            powers.push(next.clone());
            cur = next;
        }
        Ok(Counts { r, powers })
    }

    pub fn max_len(&self) -> usize {
        self.powers.len() - 1
    }

    pub fn get(&self, len: usize, i: usize, j: usize) -> u128 {
        self.powers[len][i * self.r + j]
    }
}

/// Outcome of the primitivity test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Primitivity {
    Primitive { exponent: u32 },
    NotPrimitive { bound: u32, zero_entry: (usize, usize) },
}

impl Primitivity {
    pub fn is_primitive(&self) -> bool {
        matches!(self, Primitivity::Primitive { .. })
    }
}

/// Least `n` up to the Wielandt bound `r^2 - 2r + 2` with `T^n > 0`.
pub fn is_primitive(t: &TransitionMatrix) -> Primitivity {
    let r = t.dim();
    let bound = (r * r + 2 - 2 * r) as u32;
    let a: Vec<bool> = (0..r * r).map(|k| t.get(k / r, k % r) > 0).collect();
    let mut cur = a.clone();
    for n in 1..=bound {
        if cur.iter().all(|&x| x) {
            return Primitivity::Primitive { exponent: n };
        }
        if n == bound {
            let k = cur.iter().position(|&x| !x).expect("some zero");
            return Primitivity::NotPrimitive {
                bound,
                zero_entry: (k / r, k % r),
            };
        }
        let mut next = vec![false; r * r];
        for i in 0..r {
            for l in 0..r {
                if !cur[i * r + l] {
                    continue;
                }
                for j in 0..r {
                    if a[l * r + j] {
                        next[i * r + j] = true;
                    }
                }
            }
        }
        cur = next;
    }
    unreachable!("loop returns at the bound")
}

/// Checks the standing assumptions for dynamics: primitive and not `(1)`.
pub fn require_dynamics(t: &TransitionMatrix) -> Result<()> {
    if t.is_trivial() {
        return Err(Error::InvalidMatrix("the matrix (1) is excluded".into()));
    }
    match is_primitive(t) {
        Primitivity::Primitive { .. } => Ok(()),
        Primitivity::NotPrimitive { bound, zero_entry } => Err(Error::NotPrimitive(format!(
            "T^{bound} has a zero at {zero_entry:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> Sft {
        Sft::parse("1,1;1,0").unwrap()
    }

    #[test]
    fn graph_sizes() {
        assert_eq!(Sft::parse("2").unwrap().edges().len(), 2);
        assert_eq!(golden().edges().len(), 3);
        assert!(TransitionMatrix::parse("0,-1;1,0").is_err());
        assert!(TransitionMatrix::parse("1,2;3").is_err());
    }

    #[test]
    fn edges_sorted() {
        let s = Sft::parse("0,2;1,1").unwrap();
        let keys: Vec<_> = s.edges().iter().map(|e| (e.source, e.target, e.slot)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys[0], (0, 1, 1));
        assert_eq!(keys[1], (0, 1, 2));
    }

    #[test]
    fn golden_counts() {
        let s = golden();
        assert_eq!(s.count_paths(0, 0, 5), BigInt::from(8));
        assert_eq!(s.count_paths(0, 1, 0), BigInt::zero());
        let p = s.enumerate_paths(0, 0, 2, 100).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p[0] < p[1]);
        let v = s.enumerate_paths(1, 1, 0, 10).unwrap();
        assert_eq!(v, vec![Path::vertex(1)]);
    }

    #[test]
    fn enumeration_cap() {
        let s = Sft::parse("2").unwrap();
        match s.enumerate_paths(0, 0, 10, 100) {
            Err(Error::Cap { required, .. }) => assert_eq!(required, 1024),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_roundtrip() {
        let s = Sft::parse("1,2;1,1").unwrap();
        let c = s.counts(6).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for (k, p) in s.enumerate_paths(i, j, 6, 10_000).unwrap().iter().enumerate() {
                    assert_eq!(s.path_rank(p, &c), k as u128);
                    assert_eq!(&s.path_unrank(i, j, 6, k as u128, &c).unwrap(), p);
                }
            }
        }
    }

    #[test]
    fn primitivity() {
        let t = TransitionMatrix::parse("0,1;1,1").unwrap();
        assert_eq!(is_primitive(&t), Primitivity::Primitive { exponent: 2 });
        let p = TransitionMatrix::parse("0,1;1,0").unwrap();
        assert!(!is_primitive(&p).is_primitive());
        let two = TransitionMatrix::parse("2").unwrap();
        assert_eq!(is_primitive(&two), Primitivity::Primitive { exponent: 1 });
        assert!(require_dynamics(&TransitionMatrix::parse("1").unwrap()).is_err());
    }

    #[test]
    fn inline_and_json_agree() {
        let a = TransitionMatrix::parse("1,1;1,0").unwrap();
        let b = TransitionMatrix::parse(r#"{"r":2,"entries":[[1,1],[1,0]]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "1,1;1,0");
        assert!(TransitionMatrix::parse(r#"{"r":3,"entries":[[1,1],[1,0]]}"#).is_err());
    }
}
