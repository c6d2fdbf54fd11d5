//! Perron data, the measure of maximal entropy and clopen subsets of the path space.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sft_core::{require_dynamics, Interval, Path, Sft, TransitionMatrix};

/// Perron eigenvalue and positive eigenvectors, normalized so that `w v = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronData {
    pub lambda: f64,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// `|w v - 1|` after normalization.
    pub residual: f64,
}

const POWER_TOL: f64 = 1e-15;

fn power_iterate(apply: impl Fn(&[f64]) -> Vec<f64>, r: usize, max_iter: usize) -> Result<(f64, Vec<f64>)> {
    let mut x = vec![1.0; r];
    for it in 0..max_iter {
        let y = apply(&x);
        let s: f64 = y.iter().sum();
        if !(s > 0.0) {
            return Err(Error::NoConvergence(it));
        }
        let y: Vec<f64> = y.iter().map(|a| a / s).collect();
        let diff = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        if diff <= POWER_TOL {
            let tx = apply(&x);
            let lambda = tx.iter().sum::<f64>() / x.iter().sum::<f64>();
            return Ok((lambda, x));
        }
    }
    Err(Error::NoConvergence(max_iter))
}

/// Power iteration from the all-ones vector on `T` and on `T^t`.
pub fn perron_data(t: &TransitionMatrix) -> Result<PerronData> {
    perron_data_with_cap(t, 100_000)
}

pub fn perron_data_with_cap(t: &TransitionMatrix, max_iter: usize) -> Result<PerronData> {
    require_dynamics(t)?;
    let r = t.dim();
    let m: Vec<f64> = (0..r * r).map(|k| t.get(k / r, k % r) as f64).collect();
    let right = |x: &[f64]| -> Vec<f64> {
        (0..r).map(|i| (0..r).map(|j| m[i * r + j] * x[j]).sum()).collect()
    };
    let left = |x: &[f64]| -> Vec<f64> {
        (0..r).map(|j| (0..r).map(|i| x[i] * m[i * r + j]).sum()).collect()
    };
    let (lambda, v) = power_iterate(right, r, max_iter)?;
    let (_, mut w) = power_iterate(left, r, max_iter)?;
    let wv: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
    for x in &mut w {
        *x /= wv;
    }
    let wv: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
    let pd = PerronData {
        lambda,
        v,
        w,
        residual: (wv - 1.0).abs(),
    };
    let tv = right(&pd.v);
    let wt = left(&pd.w);
    let rv = tv.iter().zip(&pd.v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
        / (lambda * pd.v.iter().cloned().fold(0.0, f64::max));
    let rw = wt.iter().zip(&pd.w).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
        / (lambda * pd.w.iter().cloned().fold(0.0, f64::max));
    if rv > 1e-10 || rw > 1e-10 || pd.residual > 1e-12 {
        return Err(Error::NoConvergence(max_iter));
    }
    Ok(pd)
}

impl PerronData {
    /// `μ(cyl(x,k)) = λ^{-|x|} w_{i(x)} v_{t(x)}`.
    pub fn path_measure(&self, len: usize, i: usize, j: usize) -> f64 {
        self.lambda.powi(-(len as i32)) * self.w[i] * self.v[j]
    }

    /// Stationary distribution `π_i = w_i v_i`.
    pub fn stationary(&self) -> Vec<f64> {
        self.w.iter().zip(&self.v).map(|(a, b)| a * b).collect()
    }

    /// Transition probability `p(e) = v_{t(e)} / (λ v_{i(e)})`.
    pub fn transition_probability(&self, sft: &Sft, e: u32) -> f64 {
        let edge = sft.edge(e);
        self.v[edge.target] / (self.lambda * self.v[edge.source])
    }
}

/// The cylinder `cyl(x, k) = { y : y_{i+k} = x_i }`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cylinder {
    pub x: Path,
    pub k: i64,
}

impl Cylinder {
    pub fn new(sft: &Sft, x: Path, k: i64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("cylinder path must have length >= 1".into()));
        }
        sft.check_path(&x)?;
        Ok(Cylinder { x, k })
    }

    pub fn window(&self) -> Interval {
        Interval {
            a: self.k,
            b: self.k + self.x.len() as i64 - 1,
        }
    }
}

pub fn cylinder_measure(sft: &Sft, pd: &PerronData, c: &Cylinder) -> f64 {
    pd.path_measure(c.x.len(), c.x.start, sft.terminal(&c.x))
}

/// A clopen set in normal form: a window and the set of full-window paths.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClopenSet {
    window: Interval,
    members: BTreeSet<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct ClopenJson {
    window: [i64; 2],
    paths: Vec<Vec<u32>>,
}

impl ClopenSet {
    pub fn empty(window: Interval) -> Self {
        ClopenSet {
            window,
            members: BTreeSet::new(),
        }
    }

    pub fn full(sft: &Sft, window: Interval, cap: u64) -> Result<Self> {
        let paths = sft.all_paths(window.width(), cap)?;
        Ok(ClopenSet {
            window,
            members: paths.into_iter().map(|p| p.edges).collect(),
        })
    }

    pub fn from_cylinder(c: &Cylinder) -> Self {
        ClopenSet {
            window: c.window(),
            members: BTreeSet::from([c.x.edges.clone()]),
        }
    }

    pub fn from_paths(sft: &Sft, window: Interval, paths: impl IntoIterator<Item = Vec<u32>>) -> Result<Self> {
        let mut members = BTreeSet::new();
        for p in paths {
            if p.len() != window.width() {
                return Err(Error::InvalidInput(format!(
                    "path of length {} in window of width {}",
                    p.len(),
                    window.width()
                )));
            }
            sft.path(p.clone())?;
            members.insert(p);
        }
        Ok(ClopenSet { window, members })
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn members(&self) -> &BTreeSet<Vec<u32>> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: &[u32]) -> bool {
        self.members.contains(p)
    }

    pub fn paths<'a>(&'a self, sft: &'a Sft) -> impl Iterator<Item = Path> + 'a {
        self.members.iter().map(move |e| Path {
            start: sft.edge(e[0]).source,
            edges: e.clone(),
        })
    }

    /// Replaces every member by all of its extensions to `j`.
    pub fn refine(&self, sft: &Sft, j: Interval, cap: u64) -> Result<Self> {
        if !j.contains(&self.window) {
            return Err(Error::InvalidInput(format!(
                "{} does not contain {}",
                j, self.window
            )));
        }
        if j == self.window {
            return Ok(self.clone());
        }
        let left = (self.window.a - j.a) as usize;
        let right = (j.b - self.window.b) as usize;
        let r = sft.r();
        let counts = sft.counts(left.max(right))?;
        let mut total: u128 = 0;
        for m in &self.members {
            let i = sft.edge(m[0]).source;
            let t = sft.edge(*m.last().expect("nonempty")).target;
            let l: u128 = (0..r).map(|v| counts.get(left, v, i)).sum();
            let rr: u128 = (0..r).map(|v| counts.get(right, t, v)).sum();
            total += l * rr;
        }
        if total > cap as u128 {
            return Err(Error::Cap {
                what: "clopen refinement",
                required: total,
                cap: cap as u128,
            });
        }
        let mut pre: Vec<Vec<Vec<u32>>> = vec![Vec::new(); r];
        let mut post: Vec<Vec<Vec<u32>>> = vec![Vec::new(); r];
        for a in 0..r {
            for b in 0..r {
                for p in sft.enumerate_paths(a, b, left, cap)? {
                    pre[b].push(p.edges);
                }
                for p in sft.enumerate_paths(a, b, right, cap)? {
                    post[a].push(p.edges);
                }
            }
        }
        let mut members = BTreeSet::new();
        for m in &self.members {
            let i = sft.edge(m[0]).source;
            let t = sft.edge(*m.last().expect("nonempty")).target;
            for p in &pre[i] {
                for s in &post[t] {
                    let mut z = Vec::with_capacity(p.len() + m.len() + s.len());
                    z.extend_from_slice(p);
                    z.extend_from_slice(m);
                    z.extend_from_slice(s);
                    members.insert(z);
                }
            }
        }
        Ok(ClopenSet { window: j, members })
    }

    fn aligned(&self, other: &Self, sft: &Sft, cap: u64) -> Result<(Self, Self)> {
        let h = self.window.hull(&other.window);
        Ok((self.refine(sft, h, cap)?, other.refine(sft, h, cap)?))
    }

    pub fn union(&self, other: &Self, sft: &Sft, cap: u64) -> Result<Self> {
        let (a, b) = self.aligned(other, sft, cap)?;
        Ok(ClopenSet {
            window: a.window,
            members: a.members.union(&b.members).cloned().collect(),
        })
    }

    pub fn intersection(&self, other: &Self, sft: &Sft, cap: u64) -> Result<Self> {
        let (a, b) = self.aligned(other, sft, cap)?;
        Ok(ClopenSet {
            window: a.window,
            members: a.members.intersection(&b.members).cloned().collect(),
        })
    }

    pub fn difference(&self, other: &Self, sft: &Sft, cap: u64) -> Result<Self> {
        let (a, b) = self.aligned(other, sft, cap)?;
        Ok(ClopenSet {
            window: a.window,
            members: a.members.difference(&b.members).cloned().collect(),
        })
    }

    pub fn complement(&self, sft: &Sft, cap: u64) -> Result<Self> {
        let full = Self::full(sft, self.window, cap)?;
        Ok(ClopenSet {
            window: self.window,
            members: full.members.difference(&self.members).cloned().collect(),
        })
    }

    /// `σ^n(C)`: the same paths on the window moved by `-n`.
    pub fn shift_by(&self, n: i64) -> Self {
        ClopenSet {
            window: self.window.shifted(-n),
            members: self.members.clone(),
        }
    }

    pub fn set_equal(&self, other: &Self, sft: &Sft, cap: u64) -> Result<bool> {
        let (a, b) = self.aligned(other, sft, cap)?;
        Ok(a.members == b.members)
    }

    pub fn is_disjoint(&self, other: &Self, sft: &Sft, cap: u64) -> Result<bool> {
        Ok(self.intersection(other, sft, cap)?.is_empty())
    }

    pub fn is_subset(&self, other: &Self, sft: &Sft, cap: u64) -> Result<bool> {
        let (a, b) = self.aligned(other, sft, cap)?;
        Ok(a.members.is_subset(&b.members))
    }

    pub fn measure(&self, sft: &Sft, pd: &PerronData) -> f64 {
        let w = self.window.width();
        self.members
            .iter()
            .map(|m| {
                let i = sft.edge(m[0]).source;
                let t = sft.edge(*m.last().expect("nonempty")).target;
                pd.path_measure(w, i, t)
            })
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ClopenJson {
            window: [self.window.a, self.window.b],
            paths: self.members.iter().cloned().collect(),
        })
        .expect("clopen set serializes")
    }

    pub fn from_json(sft: &Sft, v: &serde_json::Value) -> Result<Self> {
        let j: ClopenJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_paths(sft, Interval::new(j.window[0], j.window[1])?, j.paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> Sft {
        Sft::parse("1,1;1,0").unwrap()
    }

    #[test]
    fn perron_examples() {
        let pd = perron_data(&TransitionMatrix::parse("2").unwrap()).unwrap();
        assert!((pd.lambda - 2.0).abs() < 1e-12);
        assert!((pd.v[0] * pd.w[0] - 1.0).abs() < 1e-12);
        let g = perron_data(golden().matrix()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((g.lambda - phi).abs() < 1e-12);
        assert!((g.v[0] / g.v[1] - phi).abs() < 1e-10);
        assert!((g.w[0] / g.w[1] - phi).abs() < 1e-10);
        assert!(perron_data(&TransitionMatrix::parse("2,0;0,3").unwrap()).is_err());
    }

    #[test]
    fn cylinder_measures() {
        let s = golden();
        let pd = perron_data(s.matrix()).unwrap();
        let total: f64 = (0..3u32)
            .map(|e| cylinder_measure(&s, &pd, &Cylinder::new(&s, s.path(vec![e]).unwrap(), 0).unwrap()))
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
        let c0 = Cylinder::new(&s, s.path(vec![0, 1]).unwrap(), 0).unwrap();
        let c7 = Cylinder { k: 7, ..c0.clone() };
        assert_eq!(cylinder_measure(&s, &pd, &c0), cylinder_measure(&s, &pd, &c7));
    }

    #[test]
    fn refine_counts() {
        let s = golden();
        let pd = perron_data(s.matrix()).unwrap();
        // edge 0 is 0->0; t = 0 has row sum 2
        let c = ClopenSet::from_paths(&s, Interval::new(0, 0).unwrap(), [vec![0]]).unwrap();
        let r = c.refine(&s, Interval::new(0, 1).unwrap(), 100).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r.measure(&s, &pd) - c.measure(&s, &pd)).abs() < 1e-12);
        assert_eq!(c.refine(&s, c.window(), 100).unwrap(), c);
    }

    #[test]
    fn boolean_ops() {
        let s = golden();
        let c = ClopenSet::from_paths(&s, Interval::new(0, 1).unwrap(), [vec![0, 1], vec![2, 0]]).unwrap();
        let cc = c.complement(&s, 100).unwrap();
        let full = ClopenSet::full(&s, c.window(), 100).unwrap();
        assert_eq!(c.union(&cc, &s, 100).unwrap(), full);
        assert!(c.is_disjoint(&cc, &s, 100).unwrap());
        let sh = c.shift_by(1);
        assert_eq!(sh.window(), Interval::new(-1, 0).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let s = golden();
        let c = ClopenSet::from_paths(&s, Interval::new(2, 3).unwrap(), [vec![0, 1], vec![2, 0]]).unwrap();
        assert_eq!(ClopenSet::from_json(&s, &c.to_json()).unwrap(), c);
    }
}
