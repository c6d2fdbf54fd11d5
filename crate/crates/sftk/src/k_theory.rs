//! K-theory of the AF algebra of an SFT in the matrix picture.
//!
//! A class at window `[a,b]` is a rational `r x r` matrix `M`. Pushing it to a
//! larger window `[c,d]` multiplies by `T^(a-c)` on the left and `T^(d-b)` on the
//! right. The unit at a window of width `k` is `T^k`.

use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::config::{Caps, Tolerances};
use crate::error::{Error, Result};
use crate::linalg::{NumberField, QMat, QPoly};
use crate::measure::{perron_data_with_cap, ClopenSet, PerronData};
use crate::sft_core::{is_primitive, Interval, Sft, TransitionMatrix};

/// Largest matrix size for which the Perron degree is computed.
pub const MAX_DEGREE_DIM: usize = 12;

#[derive(Clone, PartialEq, Eq)]
pub struct K0Class {
    pub window: Interval,
    pub rep: QMat,
}

impl fmt::Debug for K0Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "K0Class({} {:?})", self.window, self.rep)
    }
}

impl K0Class {
    pub fn new(window: Interval, rep: QMat) -> Result<Self> {
        if !rep.is_square() {
            return Err(Error::InvalidInput("class representative must be square".into()));
        }
        Ok(K0Class { window, rep })
    }

    pub fn zero(r: usize, window: Interval) -> Self {
        K0Class {
            window,
            rep: QMat::zeros(r, r),
        }
    }

    /// The class of the unit at `window`, namely `T^width`.
    pub fn unit(t: &QMat, window: Interval) -> Self {
        K0Class {
            window,
            rep: t.pow(window.width() as u32),
        }
    }

    pub fn dim(&self) -> usize {
        self.rep.rows()
    }

    /// Representative of the same class at a window containing this one.
    pub fn push(&self, t: &QMat, target: Interval) -> Result<Self> {
        if !target.contains(&self.window) {
            return Err(Error::InvalidInput(format!(
                "cannot push class at {} to {}",
                self.window, target
            )));
        }
        let left = (self.window.a - target.a) as u32;
        let right = (target.b - self.window.b) as u32;
        let rep = &(&t.pow(left) * &self.rep) * &t.pow(right);
        Ok(K0Class { window: target, rep })
    }

    /// Bring both classes to their common hull.
    pub fn align(&self, other: &Self, t: &QMat) -> (Self, Self) {
        let h = self.window.hull(&other.window);
        (
            self.push(t, h).expect("hull contains window"),
            other.push(t, h).expect("hull contains window"),
        )
    }

    pub fn add(&self, other: &Self, t: &QMat) -> Self {
        let (a, b) = self.align(other, t);
        K0Class {
            window: a.window,
            rep: &a.rep + &b.rep,
        }
    }

    pub fn sub(&self, other: &Self, t: &QMat) -> Self {
        let (a, b) = self.align(other, t);
        K0Class {
            window: a.window,
            rep: &a.rep - &b.rep,
        }
    }

    pub fn scale(&self, n: i64) -> Self {
        K0Class {
            window: self.window,
            rep: self.rep.scale(&BigRational::from_integer(BigInt::from(n))),
        }
    }

    /// `{"window":[a,b],"rep":[[[num,den],...],...]}`, rows of `[num,den]` pairs.
    pub fn to_json(&self) -> Value {
        let n = self.dim();
        let rows: Vec<Value> = (0..n)
            .map(|i| {
                Value::Array(
                    (0..n)
                        .map(|j| {
                            let x = self.rep.get(i, j);
                            json!([int_json(x.numer()), int_json(x.denom())])
                        })
                        .collect(),
                )
            })
            .collect();
        json!({"window": [self.window.a, self.window.b], "rep": rows})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("K0 class json: {m}"));
        let w = v
            .get("window")
            .and_then(Value::as_array)
            .filter(|w| w.len() == 2)
            .ok_or_else(|| bad("missing window"))?;
        let a = w[0].as_i64().ok_or_else(|| bad("window bound"))?;
        let b = w[1].as_i64().ok_or_else(|| bad("window bound"))?;
        let rows = v.get("rep").and_then(Value::as_array).ok_or_else(|| bad("missing rep"))?;
        let n = rows.len();
        let mut rep = QMat::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_array().filter(|r| r.len() == n).ok_or_else(|| bad("rep must be square"))?;
            for (j, e) in row.iter().enumerate() {
                let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("entry must be [num,den]"))?;
                let num = parse_int(&pair[0]).ok_or_else(|| bad("numerator"))?;
                let den = parse_int(&pair[1]).ok_or_else(|| bad("denominator"))?;
                if den.is_zero() {
                    return Err(bad("zero denominator"));
                }
                rep.set(i, j, BigRational::new(num, den));
            }
        }
        K0Class::new(Interval::new(a, b)?, rep)
    }
}

fn int_json(x: &BigInt) -> Value {
    match x.to_i64() {
        Some(v) => json!(v),
        None => json!(x.to_string()),
    }
}

fn parse_int(v: &Value) -> Option<BigInt> {
    match v {
        Value::Number(n) => n.as_i64().map(BigInt::from),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Class of a clopen set: every member path `u` contributes the matrix unit at
/// `(i(u), t(u))`.
pub fn class_of_clopen(sft: &Sft, c: &ClopenSet) -> K0Class {
    let r = sft.r();
    let mut counts = vec![0u64; r * r];
    for p in c.members() {
        let i = sft.edge(p[0]).source;
        let j = sft.edge(*p.last().expect("nonempty path")).target;
        counts[i * r + j] += 1;
    }
    let rep = QMat::from_fn(r, r, |i, j| BigRational::from_integer(BigInt::from(counts[i * r + j])));
    K0Class {
        window: c.window(),
        rep,
    }
}

/// `T^s X T^s == 0` with `s = r`, i.e. `X` vanishes in the direct limit.
pub fn vanishes_in_limit(t: &QMat, x: &QMat) -> bool {
    let s = t.pow(t.rows() as u32);
    (&(&s * x) * &s).is_zero()
}

pub fn classes_equal(t: &QMat, g1: &K0Class, g2: &K0Class) -> bool {
    let (a, b) = g1.align(g2, t);
    vanishes_in_limit(t, &(&a.rep - &b.rep))
}

/// The automorphism induced by the shift: same matrix, window moved by -1.
pub fn alpha_star(g: &K0Class) -> K0Class {
    K0Class {
        window: g.window.shifted(-1),
        rep: g.rep.clone(),
    }
}

pub fn is_alpha_fixed(t: &QMat, g: &K0Class) -> bool {
    vanishes_in_limit(t, &(&(t * &g.rep) - &(&g.rep * t)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventualRangeData {
    pub matrix: QMat,
    pub rank: usize,
    /// Rows spanning `Q^s S^s`.
    pub basis: Vec<Vec<BigRational>>,
}

pub fn eventual_range(s: &QMat) -> EventualRangeData {
    let p = s.pow(s.rows() as u32);
    let (rr, pivots) = p.rref();
    let basis = (0..pivots.len())
        .map(|i| (0..rr.cols()).map(|j| rr.get(i, j).clone()).collect())
        .collect();
    EventualRangeData {
        matrix: s.clone(),
        rank: pivots.len(),
        basis,
    }
}

pub fn eventual_rank(s: &QMat) -> usize {
    s.pow(s.rows() as u32).rank()
}

/// Minimal polynomial over `Q` of the root of `p` nearest to `root`.
///
/// Roots of `p` are found numerically; products over subsets containing the
/// target root propose integer factors, and a candidate is accepted only if it
/// divides `p` exactly.
pub fn minimal_polynomial_of_root(p: &QPoly, root: f64) -> Result<QPoly> {
    let deg = p
        .degree()
        .filter(|&d| d >= 1)
        .ok_or_else(|| Error::Factorization("constant polynomial".into()))?;
    if !p.is_integral() || !p.lead().is_one() {
        return Err(Error::Factorization("expected a monic integer polynomial".into()));
    }
    if deg > MAX_DEGREE_DIM {
        return Err(Error::Cap {
            what: "degree of characteristic polynomial",
            required: deg as u128,
            cap: MAX_DEGREE_DIM as u128,
        });
    }
    let roots = numeric_roots(p);
    let target = (0..roots.len())
        .min_by(|&a, &b| {
            let da = (roots[a] - root).norm();
            let db = (roots[b] - root).norm();
            da.total_cmp(&db)
        })
        .expect("at least one root");
    let others: Vec<Complex64> = (0..roots.len()).filter(|&k| k != target).map(|k| roots[k]).collect();
    for size in 0..=others.len() {
        let mut found = None;
        for_each_combination(others.len(), size, &mut |idx| {
            if found.is_some() {
                return;
            }
            let mut poly = vec![Complex64::new(1.0, 0.0)];
            poly = mul_linear(&poly, roots[target]);
            for &k in idx {
                poly = mul_linear(&poly, others[k]);
            }
            if let Some(cand) = round_to_integer_poly(&poly) {
                if p.rem(&cand).is_zero() {
                    found = Some(cand);
                }
            }
        });
        if let Some(f) = found {
            return Ok(f);
        }
    }
    Err(Error::Factorization(format!("no exact factor of {p} found near {root}")))
}

fn numeric_roots(p: &QPoly) -> Vec<Complex64> {
    let n = p.degree().expect("nonconstant");
    if n == 1 {
        return vec![Complex64::new(-p.coeff(0).to_f64().unwrap_or(f64::NAN), 0.0)];
    }
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -p.coeff(i).to_f64().unwrap_or(f64::NAN);
    }
    c.complex_eigenvalues().iter().copied().collect()
}

fn mul_linear(poly: &[Complex64], root: Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
    for (k, &a) in poly.iter().enumerate() {
        out[k + 1] += a;
        out[k] -= a * root;
    }
    out
}

fn round_to_integer_poly(poly: &[Complex64]) -> Option<QPoly> {
    let mut c = Vec::with_capacity(poly.len());
    for z in poly {
        let r = z.re.round();
        let tol = 1e-6 * (1.0 + z.re.abs());
        if (z.re - r).abs() > tol || z.im.abs() > tol || !r.is_finite() || r.abs() > 9.0e15 {
            return None;
        }
        c.push(r as i64);
    }
    Some(QPoly::from_ints(&c))
}

fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Degree of the Perron eigenvalue over `Q`.
pub fn perron_degree(t: &TransitionMatrix) -> Result<usize> {
    Ok(ExactPerron::new(t)?.field.degree())
}

/// `(eventual rank)^2 - deg(lambda)`.
pub fn infinitesimal_rank(t: &TransitionMatrix) -> Result<usize> {
    let k = eventual_rank(&QMat::from_transition(t));
    let d = perron_degree(t)?;
    Ok(k * k - d)
}

/// The Perron eigenvalue and eigenvectors held exactly in `Q(lambda)`.
#[derive(Debug, Clone)]
pub struct ExactPerron {
    pub field: NumberField,
    pub lambda: f64,
    /// Right eigenvector, positive at `lambda`.
    pub v: Vec<QPoly>,
    /// Left eigenvector, positive at `lambda`.
    pub w: Vec<QPoly>,
}

impl ExactPerron {
    pub fn new(t: &TransitionMatrix) -> Result<Self> {
        let pd = perron_data_with_cap(t, Caps::default().power_iterations)?;
        Self::with_perron(t, &pd)
    }

    pub fn with_perron(t: &TransitionMatrix, pd: &PerronData) -> Result<Self> {
        let q = QMat::from_transition(t);
        let cp = QPoly::charpoly(&q);
        let minpoly = minimal_polynomial_of_root(&cp, pd.lambda)?;
        let field = NumberField::new(minpoly)?;
        let orient = |v: Vec<QPoly>| -> Vec<QPoly> {
            let s: f64 = v.iter().map(|c| c.eval_f64(pd.lambda)).sum();
            if s < 0.0 {
                v.iter().map(|c| c.scale(&-BigRational::one())).collect()
            } else {
                v
            }
        };
        let v = orient(field.eigenvector(&q)?);
        let w = orient(field.eigenvector(&q.transpose())?);
        Ok(ExactPerron {
            field,
            lambda: pd.lambda,
            v,
            w,
        })
    }

    /// `w M v` as an element of `Q(lambda)`.
    pub fn pairing(&self, m: &QMat) -> QPoly {
        let mv: Vec<QPoly> = (0..m.rows())
            .map(|i| {
                self.field.sum((0..m.cols()).filter(|&j| !m.get(i, j).is_zero()).map(|j| self.v[j].scale(m.get(i, j))))
            })
            .collect();
        self.field.dot(&self.w, &mv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Zero,
    Positive,
    Negative,
    InfinitesimalOrMixed,
    Undecided,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Zero => "zero",
            Verdict::Positive => "positive",
            Verdict::Negative => "negative",
            Verdict::InfinitesimalOrMixed => "infinitesimal-or-mixed",
            Verdict::Undecided => "undecided",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Order structure of `K_0` for a fixed primitive matrix.
#[derive(Debug, Clone)]
pub struct KTheory {
    t: TransitionMatrix,
    q: QMat,
    pd: PerronData,
    exact: ExactPerron,
    caps: Caps,
    tol: Tolerances,
}

/// Result of the dense fixed class construction.
#[derive(Debug, Clone)]
pub struct DenseFixed {
    pub g: K0Class,
    pub h: K0Class,
    /// Largest `N` with `N h < [1]`.
    pub big_n: i64,
}

impl KTheory {
    pub fn new(t: &TransitionMatrix, caps: &Caps, tol: &Tolerances) -> Result<Self> {
        let prim = is_primitive(t);
        if !prim.is_primitive() {
            return Err(Error::NotPrimitive(format!("{t}")));
        }
        let pd = perron_data_with_cap(t, caps.power_iterations)?;
        let exact = ExactPerron::with_perron(t, &pd)?;
        Ok(KTheory {
            t: t.clone(),
            q: QMat::from_transition(t),
            pd,
            exact,
            caps: caps.clone(),
            tol: tol.clone(),
        })
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.t
    }

    pub fn t(&self) -> &QMat {
        &self.q
    }

    pub fn perron(&self) -> &PerronData {
        &self.pd
    }

    pub fn exact(&self) -> &ExactPerron {
        &self.exact
    }

    pub fn unit(&self, window: Interval) -> K0Class {
        K0Class::unit(&self.q, window)
    }

    pub fn equal(&self, g1: &K0Class, g2: &K0Class) -> bool {
        classes_equal(&self.q, g1, g2)
    }

    pub fn is_alpha_fixed(&self, g: &K0Class) -> bool {
        is_alpha_fixed(&self.q, g)
    }

    pub fn add(&self, a: &K0Class, b: &K0Class) -> K0Class {
        a.add(b, &self.q)
    }

    pub fn sub(&self, a: &K0Class, b: &K0Class) -> K0Class {
        a.sub(b, &self.q)
    }

    /// `w M v` in floating point, with `wv = 1`.
    pub fn float_pairing(&self, m: &QMat) -> (f64, f64) {
        let f = m.to_f64();
        let r = m.rows();
        let mut val = 0.0;
        let mut scale = 0.0;
        for i in 0..r {
            for j in 0..r {
                let x = self.pd.w[i] * f[i * r + j] * self.pd.v[j];
                val += x;
                scale += x.abs();
            }
        }
        (val, scale)
    }

    /// Normalized trace: `w M v / lambda^width`, so the unit has trace one.
    pub fn trace_of_class(&self, g: &K0Class) -> f64 {
        self.float_pairing(&g.rep).0 / self.pd.lambda.powi(g.window.width() as i32)
    }

    /// `w M v == 0` decided exactly in `Q(lambda)`.
    pub fn exact_infinitesimal_test(&self, g: &K0Class) -> bool {
        self.exact.pairing(&g.rep).is_zero()
    }

    /// Smallest `n <= cap` with `T^n M T^n >= 0` entrywise, or with the
    /// negation nonnegative. Returns the sign found.
    pub fn positivity_certificate(&self, m: &QMat) -> Option<(Verdict, u32)> {
        let mut x = m.clone();
        for n in 0..=self.caps.positivity_power {
            if x.is_nonneg() {
                return Some((Verdict::Positive, n));
            }
            if (-&x).is_nonneg() {
                return Some((Verdict::Negative, n));
            }
            x = &(&self.q * &x) * &self.q;
        }
        None
    }

    pub fn is_positive(&self, g: &K0Class) -> Verdict {
        if vanishes_in_limit(&self.q, &g.rep) {
            return Verdict::Zero;
        }
        if self.exact_infinitesimal_test(g) {
            return Verdict::InfinitesimalOrMixed;
        }
        if let Some((v, _)) = self.positivity_certificate(&g.rep) {
            return v;
        }
        let (val, scale) = self.float_pairing(&g.rep);
        if val.abs() > self.tol.undecided * scale.max(f64::MIN_POSITIVE) {
            if val > 0.0 {
                Verdict::Positive
            } else {
                Verdict::Negative
            }
        } else {
            Verdict::Undecided
        }
    }

    /// `a < b` in the strict order.
    pub fn less(&self, a: &K0Class, b: &K0Class) -> Result<bool> {
        match self.is_positive(&self.sub(b, a)) {
            Verdict::Positive => Ok(true),
            Verdict::Undecided => Err(Error::Undecided(format!(
                "order of classes at {} and {} undecided at cap",
                a.window, b.window
            ))),
            _ => Ok(false),
        }
    }

    /// Identity at window `[1,m]` with `m` minimal such that `n g < [1]`.
    pub fn small_fixed_class(&self, n: u64) -> Result<K0Class> {
        if n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        let r = self.q.rows();
        let nn = BigRational::from_integer(BigInt::from(n));
        let id = QMat::identity(r);
        let limit = self.caps.positivity_power.max(self.caps.window);
        for m in 1..=limit {
            let window = Interval::new(1, m as i64)?;
            let g = K0Class::new(window, id.clone())?;
            let diff = K0Class::new(window, &self.q.pow(m) - &id.scale(&nn))?;
            match self.is_positive(&diff) {
                Verdict::Positive => return Ok(g),
                Verdict::Undecided => {
                    return Err(Error::Undecided(format!("positivity of T^{m} - {n} I")));
                }
                _ => {}
            }
        }
        Err(Error::Cap {
            what: "window for small fixed class",
            required: limit as u128 + 1,
            cap: limit as u128,
        })
    }

    /// A fixed class `g` with `m g < [1] < (m+1) g`.
    pub fn dense_fixed_class(&self, m: u64) -> Result<DenseFixed> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be positive".into()));
        }
        let h = self.small_fixed_class(m * (m + 1))?;
        let one = self.unit(h.window);
        let base = (m * (m + 1)) as i64;
        // Start from the trace estimate and walk to the exact boundary.
        let ratio = self.trace_of_class(&one) / self.trace_of_class(&h);
        let mut big_n = (ratio.floor() as i64 - 1).max(base);
        while big_n > base && !self.less(&h.scale(big_n), &one)? {
            big_n -= 1;
        }
        while self.less(&h.scale(big_n + 1), &one)? {
            big_n += 1;
        }
        let k = big_n / m as i64;
        let g = h.scale(k);
        if !self.less(&g.scale(m as i64), &one)? {
            return Err(Error::Verification("m g < [1] failed".into()));
        }
        if !self.less(&one, &g.scale(m as i64 + 1))? {
            return Err(Error::Undecided(
                "[1] < (m+1) g not certified; (N+1) h differs from [1] by an infinitesimal".into(),
            ));
        }
        Ok(DenseFixed { g, h, big_n })
    }
}
