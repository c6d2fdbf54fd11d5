//! The finite-window algebras `H^I`, their embeddings, the shift automorphism,
//! the trace and the image of clopen sets.
//!
//! `H^I` is a direct sum over vertex pairs `(i,j)` of full matrix algebras of
//! size `T^w(i,j)`, `w` the window width; rows and columns of block `(i,j)` are
//! the paths from `i` to `j` of length `w` in canonical order.

mod perturb;

pub use perturb::{
    align_families, conjugating_unitary, orthogonalize_projection, snap_partial_isometry, Operator,
    PROJECTION_TOL,
};

use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measure::{ClopenSet, PerronData};
use crate::sft_core::{Interval, Path, Sft};

/// Largest block side allowed for dense storage.
pub const BLOCK_CAP: u128 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    window: Interval,
    r: usize,
    blocks: Vec<DMatrix<f64>>,
}

fn block_sizes(sft: &Sft, window: Interval) -> Result<Vec<usize>> {
    let w = window.width();
    let counts = sft.counts(w)?;
    let r = sft.r();
    let mut sizes = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            let n = counts.get(w, i, j);
            if n > BLOCK_CAP {
                return Err(Error::Cap {
                    what: "dense block size",
                    required: n,
                    cap: BLOCK_CAP,
                });
            }
            sizes.push(n as usize);
        }
    }
    Ok(sizes)
}

impl AlgebraElement {
    pub fn zero(sft: &Sft, window: Interval) -> Result<Self> {
        let sizes = block_sizes(sft, window)?;
        Ok(AlgebraElement {
            window,
            r: sft.r(),
            blocks: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        })
    }

    pub fn identity(sft: &Sft, window: Interval) -> Result<Self> {
        let sizes = block_sizes(sft, window)?;
        Ok(AlgebraElement {
            window,
            r: sft.r(),
            blocks: sizes.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        })
    }

    /// Element whose block `(i,j)` has entries `f(i, j, row, col)`.
    pub fn from_fn(
        sft: &Sft,
        window: Interval,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut e = Self::zero(sft, window)?;
        let r = e.r;
        for (k, b) in e.blocks.iter_mut().enumerate() {
            let (i, j) = (k / r, k % r);
            for p in 0..b.nrows() {
                for q in 0..b.ncols() {
                    b[(p, q)] = f(i, j, p, q);
                }
            }
        }
        Ok(e)
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[i * self.r + j]
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[i * self.r + j]
    }

    pub fn blocks(&self) -> impl Iterator<Item = ((usize, usize), &DMatrix<f64>)> {
        let r = self.r;
        self.blocks.iter().enumerate().map(move |(k, b)| ((k / r, k % r), b))
    }

    /// Total dimension of the underlying representation.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    fn check_same(&self, o: &Self) {
        assert_eq!(self.window, o.window, "elements live in different windows");
        assert_eq!(self.r, o.r, "elements of different algebras");
    }

    fn zip(&self, o: &Self, f: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>) -> Self {
        self.check_same(o);
        AlgebraElement {
            window: self.window,
            r: self.r,
            blocks: self.blocks.iter().zip(&o.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        AlgebraElement {
            window: self.window,
            r: self.r,
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    /// Matrix unit `E_{x,y}` at the window `[a, a+|x|-1]`.
    pub fn matrix_unit(sft: &Sft, x: &Path, y: &Path, a: i64) -> Result<Self> {
        sft.check_path(x)?;
        sft.check_path(y)?;
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::InvalidInput("matrix unit needs paths of equal positive length".into()));
        }
        let (i, j) = (sft.initial(x), sft.terminal(x));
        if sft.initial(y) != i || sft.terminal(y) != j {
            return Err(Error::InvalidInput("matrix unit endpoints differ".into()));
        }
        let window = Interval::new(a, a + x.len() as i64 - 1)?;
        let counts = sft.counts(x.len())?;
        let mut e = Self::zero(sft, window)?;
        let (p, q) = (sft.path_rank(x, &counts) as usize, sft.path_rank(y, &counts) as usize);
        e.block_mut(i, j)[(p, q)] = 1.0;
        Ok(e)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|a| a * c)
    }

    pub fn adjoint(&self) -> Self {
        self.map(|a| a.transpose())
    }

    pub fn one(&self) -> Self {
        self.map(|a| DMatrix::identity(a.nrows(), a.ncols()))
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        self.check_same(o);
        self.blocks
            .iter()
            .zip(&o.blocks)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }

    /// Operator norm: the largest singular value over all blocks.
    pub fn op_norm(&self) -> f64 {
        self.blocks
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| {
                if b.iter().all(|&x| x == 0.0) {
                    0.0
                } else {
                    b.singular_values().max()
                }
            })
            .fold(0.0, f64::max)
    }

    /// Unnormalized trace, i.e. the sum of block traces.
    pub fn raw_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// The trace from the measure of maximal entropy: `E_{x,x}` has trace `mu(cyl(x))`.
    pub fn trace(&self, pd: &PerronData) -> f64 {
        let scale = pd.lambda.powi(-(self.window.width() as i32));
        self.blocks()
            .map(|((i, j), b)| if b.is_empty() { 0.0 } else { b.trace() * pd.w[i] * pd.v[j] })
            .sum::<f64>()
            * scale
    }

    /// The shift automorphism: same block data at the window moved by -1.
    pub fn shift_auto(&self) -> Self {
        self.shift_by(1)
    }

    /// `alpha^n`: the window moves by `-n`.
    pub fn shift_by(&self, n: i64) -> Self {
        AlgebraElement {
            window: self.window.shifted(-n),
            r: self.r,
            blocks: self.blocks.clone(),
        }
    }

    /// Image under the canonical embedding into `H^target`.
    pub fn embed(&self, sft: &Sft, target: Interval) -> Result<Self> {
        if !target.contains(&self.window) {
            return Err(Error::InvalidInput(format!(
                "cannot embed window {} into {}",
                self.window, target
            )));
        }
        if target == self.window {
            return Ok(self.clone());
        }
        let left = (self.window.a - target.a) as usize;
        let right = (target.b - self.window.b) as usize;
        let w = self.window.width();
        let big = target.width();
        let counts = sft.counts(big)?;
        let mut out = Self::zero(sft, target)?;
        let r = self.r;
        let cap = BLOCK_CAP as u64 * BLOCK_CAP as u64;
        for i in 0..r {
            for j in 0..r {
                let src = self.block(i, j);
                if src.is_empty() {
                    continue;
                }
                let nz: Vec<(usize, usize, f64)> = (0..src.nrows())
                    .flat_map(|p| (0..src.ncols()).map(move |q| (p, q)))
                    .filter_map(|(p, q)| {
                        let x = src[(p, q)];
                        (x != 0.0).then_some((p, q, x))
                    })
                    .collect();
                if nz.is_empty() {
                    continue;
                }
                let mids = sft.enumerate_paths(i, j, w, cap)?;
                for i2 in 0..r {
                    let prefixes = sft.enumerate_paths(i2, i, left, cap)?;
                    if prefixes.is_empty() {
                        continue;
                    }
                    for j2 in 0..r {
                        let suffixes = sft.enumerate_paths(j, j2, right, cap)?;
                        if suffixes.is_empty() {
                            continue;
                        }
                        let dst = out.block_mut(i2, j2);
                        for z in &prefixes {
                            for u in &suffixes {
                                let idx: Vec<usize> = mids
                                    .iter()
                                    .map(|x| {
                                        let mut edges = Vec::with_capacity(big);
                                        edges.extend_from_slice(&z.edges);
                                        edges.extend_from_slice(&x.edges);
                                        edges.extend_from_slice(&u.edges);
                                        let p = Path { start: i2, edges };
                                        sft.path_rank(&p, &counts) as usize
                                    })
                                    .collect();
                                for &(p, q, x) in &nz {
                                    dst[(idx[p], idx[q])] += x;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// The diagonal projection of a clopen set whose window is this algebra's.
    pub fn clopen_to_projection(sft: &Sft, c: &ClopenSet) -> Result<Self> {
        let window = c.window();
        let counts = sft.counts(window.width())?;
        let mut e = Self::zero(sft, window)?;
        for p in c.paths(sft) {
            let (i, j) = (sft.initial(&p), sft.terminal(&p));
            let k = sft.path_rank(&p, &counts) as usize;
            e.block_mut(i, j)[(k, k)] = 1.0;
        }
        Ok(e)
    }

    /// Whether every block is diagonal with entries in {0, 1}.
    pub fn is_diagonal_projection(&self) -> bool {
        self.blocks.iter().all(|b| {
            (0..b.nrows()).all(|p| {
                (0..b.ncols()).all(|q| {
                    let x = b[(p, q)];
                    if p == q {
                        x == 0.0 || x == 1.0
                    } else {
                        x == 0.0
                    }
                })
            })
        })
    }

    /// `{"window":[a,b],"blocks":[{"i":..,"j":..,"n":..,"entries":[..]}]}`, row-major.
    pub fn to_json(&self) -> Value {
        let blocks: Vec<Value> = self
            .blocks()
            .filter(|(_, b)| !b.is_empty())
            .map(|((i, j), b)| {
                let entries: Vec<f64> = (0..b.nrows())
                    .flat_map(|p| (0..b.ncols()).map(move |q| b[(p, q)]))
                    .collect();
                json!({"i": i, "j": j, "n": b.nrows(), "entries": entries})
            })
            .collect();
        json!({"window": [self.window.a, self.window.b], "blocks": blocks})
    }

    pub fn from_json(sft: &Sft, v: &Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("algebra element json: {m}"));
        let w = v
            .get("window")
            .and_then(Value::as_array)
            .filter(|w| w.len() == 2)
            .ok_or_else(|| bad("missing window"))?;
        let a = w[0].as_i64().ok_or_else(|| bad("window bound"))?;
        let b = w[1].as_i64().ok_or_else(|| bad("window bound"))?;
        let mut e = Self::zero(sft, Interval::new(a, b)?)?;
        let blocks = v.get("blocks").and_then(Value::as_array).ok_or_else(|| bad("missing blocks"))?;
        for blk in blocks {
            let i = blk.get("i").and_then(Value::as_u64).ok_or_else(|| bad("block i"))? as usize;
            let j = blk.get("j").and_then(Value::as_u64).ok_or_else(|| bad("block j"))? as usize;
            if i >= e.r || j >= e.r {
                return Err(bad("block index out of range"));
            }
            let n = e.block(i, j).nrows();
            let entries = blk.get("entries").and_then(Value::as_array).ok_or_else(|| bad("entries"))?;
            if entries.len() != n * n {
                return Err(bad("block size does not match path count"));
            }
            let dst = e.block_mut(i, j);
            for (k, x) in entries.iter().enumerate() {
                dst[(k / n, k % n)] = x.as_f64().ok_or_else(|| bad("entry"))?;
            }
        }
        Ok(e)
    }
}

/// Largest violation of `x^2 = x = x*`.
pub fn projection_defect<O: Operator>(x: &O) -> f64 {
    x.mul(x).sub(x).norm().max(x.adjoint().sub(x).norm())
}

/// Partial isometry pairing the diagonal entries of `e` with those of `f`
/// block by block in canonical path order. With `sub` set, `f` may have more
/// entries than `e` in a block and `qq*` is the initial segment of `f`.
pub fn pairing_isometry(e: &AlgebraElement, f: &AlgebraElement, sub: bool) -> Result<AlgebraElement> {
    e.check_same(f);
    if !e.is_diagonal_projection() || !f.is_diagonal_projection() {
        return Err(Error::Precondition("pairing needs diagonal 0/1 projections".into()));
    }
    let mut q = e.map(|b| DMatrix::zeros(b.nrows(), b.ncols()));
    for k in 0..e.blocks.len() {
        let de: Vec<usize> = (0..e.blocks[k].nrows()).filter(|&p| e.blocks[k][(p, p)] == 1.0).collect();
        let df: Vec<usize> = (0..f.blocks[k].nrows()).filter(|&p| f.blocks[k][(p, p)] == 1.0).collect();
        if de.len() > df.len() || (!sub && de.len() != df.len()) {
            return Err(Error::RankMismatch(de.len(), df.len()));
        }
        for (&a, &b) in de.iter().zip(&df) {
            q.blocks[k][(b, a)] = 1.0;
        }
    }
    Ok(q)
}

/// Norms of `[alpha^n(x), y]` for `n` in `-n_max..=n_max`, computed in the hull
/// of the two windows.
pub fn asymptotic_commutators(
    sft: &Sft,
    x: &AlgebraElement,
    y: &AlgebraElement,
    n_max: i64,
) -> Result<Vec<(i64, f64)>> {
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        let xn = x.shift_by(n);
        let hull = xn.window().hull(&y.window());
        let a = xn.embed(sft, hull)?;
        let b = y.embed(sft, hull)?;
        let c = a.mul(&b).sub(&b.mul(&a));
        let norm = if c.is_zero() { 0.0 } else { c.op_norm() };
        out.push((n, norm));
    }
    Ok(out)
}

impl Operator for AlgebraElement {
    fn add(&self, o: &Self) -> Self {
        AlgebraElement::add(self, o)
    }

    fn sub(&self, o: &Self) -> Self {
        AlgebraElement::sub(self, o)
    }

    fn mul(&self, o: &Self) -> Self {
        AlgebraElement::mul(self, o)
    }

    fn scale(&self, c: f64) -> Self {
        AlgebraElement::scale(self, c)
    }

    fn adjoint(&self) -> Self {
        AlgebraElement::adjoint(self)
    }

    fn one(&self) -> Self {
        AlgebraElement::one(self)
    }

    fn norm(&self) -> f64 {
        self.op_norm()
    }

    fn rank(&self) -> f64 {
        self.raw_trace()
    }

    fn spectral_projection(&self, threshold: f64, gap: f64) -> Result<Self> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if b.is_empty() {
                blocks.push(b.clone());
                continue;
            }
            let sym = (b + b.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym);
            let mut out = DMatrix::zeros(b.nrows(), b.ncols());
            for (k, &ev) in eig.eigenvalues.iter().enumerate() {
                if (ev - threshold).abs() < gap {
                    return Err(Error::SpectralGap(ev));
                }
                if ev > threshold {
                    let col = eig.eigenvectors.column(k);
                    out += col * col.transpose();
                }
            }
            blocks.push(out);
        }
        Ok(AlgebraElement {
            window: self.window,
            r: self.r,
            blocks,
        })
    }

    fn polar_unitary(&self) -> Result<Self> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            if b.is_empty() {
                blocks.push(b.clone());
                continue;
            }
            let svd = b.clone().svd(true, true);
            if svd.singular_values.min() < 1e-12 {
                return Err(Error::Precondition("polar decomposition of a singular element".into()));
            }
            blocks.push(svd.u.expect("u") * svd.v_t.expect("v_t"));
        }
        Ok(AlgebraElement {
            window: self.window,
            r: self.r,
            blocks,
        })
    }

    fn polar_partial(&self, cutoff: f64) -> (Self, usize) {
        let mut kept = 0;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut out = DMatrix::zeros(b.nrows(), b.ncols());
            if !b.is_empty() {
                let svd = b.clone().svd(true, true);
                let u = svd.u.expect("u");
                let vt = svd.v_t.expect("v_t");
                for (k, &s) in svd.singular_values.iter().enumerate() {
                    if s > cutoff {
                        out += u.column(k) * vt.row(k);
                        kept += 1;
                    }
                }
            }
            blocks.push(out);
        }
        (
            AlgebraElement {
                window: self.window,
                r: self.r,
                blocks,
            },
            kept,
        )
    }
}
