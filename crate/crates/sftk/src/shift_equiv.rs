//! Shift equivalence and strong shift equivalence certificates.
//!
//! A lag `l` shift equivalence from `U` to `V` is a pair of nonnegative integer
//! matrices `R`, `S` with `RS = U^l`, `SR = V^l`, `SU = VS` and `UR = RV`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::k_theory::eventual_rank;
use crate::linalg::QMat;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SeCertificate {
    pub r: Vec<Vec<i64>>,
    pub s: Vec<Vec<i64>>,
    pub lag: u32,
}

fn to_qmat(m: &[Vec<i64>]) -> QMat {
    QMat::from_ints(m)
}

fn mat_json(m: &[Vec<i64>]) -> Value {
    json!(m)
}

fn mat_from_json(v: &Value, what: &str) -> Result<Vec<Vec<i64>>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::InvalidInput(format!("{what} must be a matrix")))?;
    let out: Option<Vec<Vec<i64>>> = rows
        .iter()
        .map(|r| r.as_array().and_then(|r| r.iter().map(Value::as_i64).collect()))
        .collect();
    let out = out.ok_or_else(|| Error::InvalidInput(format!("{what} must contain integers")))?;
    let c = out.first().map_or(0, Vec::len);
    if out.is_empty() || c == 0 || out.iter().any(|r| r.len() != c) {
        return Err(Error::InvalidInput(format!("{what} must be a nonempty rectangular matrix")));
    }
    Ok(out)
}

impl SeCertificate {
    /// `{"R": [[int]], "S": [[int]], "lag": int}`.
    pub fn to_json(&self) -> Value {
        json!({"R": mat_json(&self.r), "S": mat_json(&self.s), "lag": self.lag})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let r = mat_from_json(v.get("R").unwrap_or(&Value::Null), "R")?;
        let s = mat_from_json(v.get("S").unwrap_or(&Value::Null), "S")?;
        let lag = v
            .get("lag")
            .and_then(Value::as_u64)
            .filter(|&l| l >= 1)
            .ok_or_else(|| Error::InvalidInput("lag must be a positive integer".into()))?;
        Ok(SeCertificate { r, s, lag: lag as u32 })
    }
}

/// Outcome of checking one defining equation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquationCheck {
    pub name: &'static str,
    pub holds: bool,
    /// Largest absolute entry of the difference of the two sides.
    pub residual: BigInt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeVerification {
    pub equations: Vec<EquationCheck>,
}

impl SeVerification {
    pub fn holds(&self) -> bool {
        self.equations.iter().all(|e| e.holds)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.equations.iter().filter(|e| !e.holds).map(|e| e.name).collect()
    }
}

fn check(name: &'static str, lhs: &QMat, rhs: &QMat) -> EquationCheck {
    let d = lhs - rhs;
    let residual = d
        .entries()
        .iter()
        .map(|x| x.abs().to_integer())
        .max()
        .unwrap_or_else(BigInt::zero);
    EquationCheck {
        name,
        holds: residual.is_zero(),
        residual,
    }
}

fn require_square(m: &QMat, what: &str) -> Result<()> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::InvalidInput(format!("{what} must be a nonempty square matrix")));
    }
    Ok(())
}

pub fn verify_se(u: &QMat, v: &QMat, cert: &SeCertificate) -> Result<SeVerification> {
    require_square(u, "U")?;
    require_square(v, "V")?;
    let r = to_qmat(&cert.r);
    let s = to_qmat(&cert.s);
    if r.rows() != u.rows() || r.cols() != v.rows() || s.rows() != v.rows() || s.cols() != u.rows() {
        return Err(Error::InvalidInput(format!(
            "certificate shapes R {}x{}, S {}x{} do not fit U {}x{} and V {}x{}",
            r.rows(),
            r.cols(),
            s.rows(),
            s.cols(),
            u.rows(),
            u.rows(),
            v.rows(),
            v.rows()
        )));
    }
    if cert.lag == 0 {
        return Err(Error::InvalidInput("lag must be positive".into()));
    }
    let mut equations = vec![
        check("RS = U^lag", &(&r * &s), &u.pow(cert.lag)),
        check("SR = V^lag", &(&s * &r), &v.pow(cert.lag)),
        check("SU = VS", &(&s * u), &(v * &s)),
        check("UR = RV", &(u * &r), &(&r * v)),
    ];
    let nonneg = cert.r.iter().chain(&cert.s).flatten().all(|&x| x >= 0);
    equations.push(EquationCheck {
        name: "R, S nonnegative",
        holds: nonneg,
        residual: BigInt::zero(),
    });
    Ok(SeVerification { equations })
}

/// One elementary strong shift equivalence `M_(k-1) = R S`, `M_k = S R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SseLink {
    pub r: Vec<Vec<i64>>,
    pub s: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainVerification {
    pub holds: bool,
    /// Index of the first failing link; `links.len()` means the chain does not end at `V`.
    pub failed_link: Option<usize>,
}

pub fn verify_sse_chain(u: &QMat, v: &QMat, links: &[SseLink]) -> Result<ChainVerification> {
    require_square(u, "U")?;
    require_square(v, "V")?;
    let mut cur = u.clone();
    for (k, link) in links.iter().enumerate() {
        let r = to_qmat(&link.r);
        let s = to_qmat(&link.s);
        let fits = r.rows() == cur.rows() && r.cols() == s.rows() && s.cols() == cur.rows();
        let nonneg = link.r.iter().chain(&link.s).flatten().all(|&x| x >= 0);
        if !fits || !nonneg || &r * &s != cur {
            return Ok(ChainVerification {
                holds: false,
                failed_link: Some(k),
            });
        }
        cur = &s * &r;
    }
    if &cur != v {
        return Ok(ChainVerification {
            holds: false,
            failed_link: Some(links.len()),
        });
    }
    Ok(ChainVerification {
        holds: true,
        failed_link: None,
    })
}

/// Affine parametrization of the rational solutions of a linear system by
/// its free coordinates.
struct Solution {
    n: usize,
    pivots: Vec<(usize, usize)>, // (row of rref, pivot column)
    free: Vec<usize>,
    rref: QMat,
}

impl Solution {
    /// Solve `A x = b` where the augmented matrix is `[A | b]`. `None` if inconsistent.
    fn new(aug: &QMat) -> Option<Self> {
        let n = aug.cols() - 1;
        let (rref, piv) = aug.rref();
        if piv.contains(&n) {
            return None;
        }
        let free = (0..n).filter(|c| !piv.contains(c)).collect();
        Some(Solution {
            n,
            pivots: piv.into_iter().enumerate().collect(),
            free,
            rref,
        })
    }

    /// The full vector for given free values, if it is integral and in `[0, bound]`.
    fn complete(&self, free_vals: &[i64], bound: i64) -> Option<Vec<i64>> {
        let mut x = vec![0i64; self.n];
        for (&c, &v) in self.free.iter().zip(free_vals) {
            x[c] = v;
        }
        for &(row, p) in &self.pivots {
            let mut val: BigRational = self.rref.get(row, self.n).clone();
            for (&c, &v) in self.free.iter().zip(free_vals) {
                let coef = self.rref.get(row, c);
                if !coef.is_zero() && v != 0 {
                    val -= coef * BigRational::from_integer(BigInt::from(v));
                }
            }
            if !val.is_integer() {
                return None;
            }
            let iv = val.to_integer().to_i64()?;
            if iv < 0 || iv > bound {
                return None;
            }
            x[p] = iv;
        }
        Some(x)
    }
}

/// Visit every vector in `[0, bound]^k` in lexicographic order.
fn for_each_point(k: usize, bound: i64, f: &mut dyn FnMut(&[i64])) {
    let mut cur = vec![0i64; k];
    loop {
        f(&cur);
        let mut pos = k;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if cur[pos] < bound {
                cur[pos] += 1;
                for c in &mut cur[pos + 1..] {
                    *c = 0;
                }
                break;
            }
        }
    }
}

fn count_points(k: usize, bound: i64) -> u128 {
    (bound as u128 + 1).checked_pow(k as u32).unwrap_or(u128::MAX)
}

fn reshape(x: &[i64], rows: usize, cols: usize) -> Vec<Vec<i64>> {
    (0..rows).map(|i| x[i * cols..(i + 1) * cols].to_vec()).collect()
}

/// Bounds for [`search_se`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    pub max_lag: u32,
    pub max_entry: u32,
    /// Largest number of lattice points visited per enumeration.
    pub max_points: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(SeCertificate),
    /// Not a proof of inequivalence: only the stated bounds were searched.
    NoneWithinBounds,
}

/// Exhaustive search for a shift equivalence within the bounds. Solutions of
/// `UR = RV` are enumerated over their free coordinates with all entries in
/// `[0, max_entry]`; for each `R` the remaining equations are linear in `S`.
/// The lexicographically least certificate at the smallest lag is returned.
pub fn search_se(u: &QMat, v: &QMat, bounds: SearchBounds) -> Result<SearchOutcome> {
    require_square(u, "U")?;
    require_square(v, "V")?;
    let (nu, nv) = (u.rows(), v.rows());
    let bound = bounds.max_entry as i64;
    // UR - RV = 0 as a system in the nu*nv entries of R (row-major).
    let mut sys_r = QMat::zeros(nu * nv, nu * nv + 1);
    for i in 0..nu {
        for j in 0..nv {
            let row = i * nv + j;
            for k in 0..nu {
                let idx = k * nv + j;
                let val = sys_r.get(row, idx) + u.get(i, k);
                sys_r.set(row, idx, val);
            }
            for k in 0..nv {
                let idx = i * nv + k;
                let val = sys_r.get(row, idx) - v.get(k, j);
                sys_r.set(row, idx, val);
            }
        }
    }
    let sol_r = Solution::new(&sys_r).expect("homogeneous system is consistent");
    let pts = count_points(sol_r.free.len(), bound);
    if pts > bounds.max_points as u128 {
        return Err(Error::Cap {
            what: "search points for R",
            required: pts,
            cap: bounds.max_points as u128,
        });
    }
    for lag in 1..=bounds.max_lag {
        let ul = u.pow(lag);
        let vl = v.pow(lag);
        let s_bound = bound.max(max_entry(&ul)).max(max_entry(&vl));
        let mut best: Option<SeCertificate> = None;
        let mut err = None;
        for_each_point(sol_r.free.len(), bound, &mut |fv| {
            if err.is_some() {
                return;
            }
            let Some(rv) = sol_r.complete(fv, bound) else {
                return;
            };
            let r = reshape(&rv, nu, nv);
            if let Some(b) = &best {
                if r > b.r {
                    return;
                }
            }
            match solve_s(u, v, &r, &ul, &vl, s_bound, bounds.max_points) {
                Ok(Some(s)) => {
                    let cand = SeCertificate { r, s, lag };
                    if best.as_ref().is_none_or(|b| cand < *b) {
                        best = Some(cand);
                    }
                }
                Ok(None) => {}
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(c) = best {
            return Ok(SearchOutcome::Found(c));
        }
    }
    Ok(SearchOutcome::NoneWithinBounds)
}

fn max_entry(m: &QMat) -> i64 {
    m.entries()
        .iter()
        .map(|x| x.abs().to_integer().to_i64().unwrap_or(i64::MAX))
        .max()
        .unwrap_or(0)
}

/// Least nonnegative integral `S` (entries at most `bound`) with `RS = U^l`,
/// `SR = V^l`, `SU = VS`.
fn solve_s(
    u: &QMat,
    v: &QMat,
    r: &[Vec<i64>],
    ul: &QMat,
    vl: &QMat,
    bound: i64,
    max_points: u64,
) -> Result<Option<Vec<Vec<i64>>>> {
    let (nu, nv) = (u.rows(), v.rows());
    let n = nv * nu; // S is nv x nu, row-major
    let rq = to_qmat(r);
    let eqs = nu * nu + nv * nv + nv * nu;
    let mut sys = QMat::zeros(eqs, n + 1);
    let mut row = 0;
    let add = |sys: &mut QMat, row: usize, idx: usize, c: &BigRational| {
        let val = sys.get(row, idx) + c;
        sys.set(row, idx, val);
    };
    // (RS)_{ij} = sum_k R_ik S_kj
    for i in 0..nu {
        for j in 0..nu {
            for k in 0..nv {
                add(&mut sys, row, k * nu + j, rq.get(i, k));
            }
            sys.set(row, n, ul.get(i, j).clone());
            row += 1;
        }
    }
    // (SR)_{ij} = sum_k S_ik R_kj
    for i in 0..nv {
        for j in 0..nv {
            for k in 0..nu {
                add(&mut sys, row, i * nu + k, rq.get(k, j));
            }
            sys.set(row, n, vl.get(i, j).clone());
            row += 1;
        }
    }
    // (SU - VS)_{ij} = 0
    for i in 0..nv {
        for j in 0..nu {
            for k in 0..nu {
                add(&mut sys, row, i * nu + k, u.get(k, j));
            }
            for k in 0..nv {
                add(&mut sys, row, k * nu + j, &-v.get(i, k).clone());
            }
            row += 1;
        }
    }
    let Some(sol) = Solution::new(&sys) else {
        return Ok(None);
    };
    let pts = count_points(sol.free.len(), bound);
    if pts > max_points as u128 {
        return Err(Error::Cap {
            what: "search points for S",
            required: pts,
            cap: max_points as u128,
        });
    }
    let mut best: Option<Vec<i64>> = None;
    for_each_point(sol.free.len(), bound, &mut |fv| {
        if let Some(x) = sol.complete(fv, bound) {
            if best.as_ref().is_none_or(|b| x < *b) {
                best = Some(x);
            }
        }
    });
    Ok(best.map(|x| reshape(&x, nv, nu)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullShiftVerdict {
    pub eventual_rank: usize,
    /// `Some(n)` when `T` is shift equivalent to the full `n`-shift.
    pub n: Option<BigInt>,
}

/// Shift equivalence to a `1 x 1` matrix `(n)`, decided by eventual rank one.
/// The integer `n` is `tr(T^(s+1)) / tr(T^s)`, exact.
pub fn full_shift_test(t: &QMat) -> Result<FullShiftVerdict> {
    require_square(t, "T")?;
    let k = eventual_rank(t);
    if k != 1 {
        return Ok(FullShiftVerdict { eventual_rank: k, n: None });
    }
    let s = t.rows() as u32;
    let ts = t.pow(s);
    let a = ts.trace();
    let b = (&ts * t).trace();
    if a.is_zero() {
        return Err(Error::Verification("trace of T^s vanishes at eventual rank one".into()));
    }
    let lam = b / a;
    if !lam.is_integer() {
        return Err(Error::Verification(format!("eventual eigenvalue {lam} is not an integer")));
    }
    Ok(FullShiftVerdict {
        eventual_rank: 1,
        n: Some(lam.to_integer()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> QMat {
        QMat::from_ints(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    fn bounds() -> SearchBounds {
        SearchBounds {
            max_lag: 3,
            max_entry: 3,
            max_points: 5_000_000,
        }
    }

    #[test]
    fn verify_examples() {
        let t = m(&[&[1, 1], &[1, 0]]);
        let c = SeCertificate {
            r: vec![vec![1, 1], vec![1, 0]],
            s: vec![vec![1, 0], vec![0, 1]],
            lag: 1,
        };
        assert!(verify_se(&t, &t, &c).unwrap().holds());
        let j = m(&[&[1, 1], &[1, 1]]);
        let two = m(&[&[2]]);
        let c = SeCertificate {
            r: vec![vec![1], vec![1]],
            s: vec![vec![1, 1]],
            lag: 1,
        };
        assert!(verify_se(&j, &two, &c).unwrap().holds());
        let bad = SeCertificate {
            s: vec![vec![1, 2]],
            ..c.clone()
        };
        let ver = verify_se(&j, &two, &bad).unwrap();
        assert!(!ver.holds());
        assert!(ver.failed().contains(&"SR = V^lag"));
        assert!(verify_se(&two, &j, &c).is_err());
    }

    #[test]
    fn power_certificates() {
        let t = m(&[&[1, 1], &[1, 0]]);
        for (a, b) in [(0, 2), (1, 1), (2, 0)] {
            let r = t.pow(a).to_ints().unwrap();
            let s = t.pow(b).to_ints().unwrap();
            let conv = |x: Vec<Vec<BigInt>>| -> Vec<Vec<i64>> {
                x.into_iter().map(|r| r.into_iter().map(|y| y.to_i64().unwrap()).collect()).collect()
            };
            let c = SeCertificate { r: conv(r), s: conv(s), lag: 2 };
            assert!(verify_se(&t, &t, &c).unwrap().holds());
        }
    }

    #[test]
    fn chains() {
        let j = m(&[&[1, 1], &[1, 1]]);
        let two = m(&[&[2]]);
        assert!(verify_sse_chain(&two, &two, &[]).unwrap().holds);
        let link = SseLink {
            r: vec![vec![1], vec![1]],
            s: vec![vec![1, 1]],
        };
        assert!(verify_sse_chain(&j, &two, std::slice::from_ref(&link)).unwrap().holds);
        let back = SseLink {
            r: vec![vec![1, 1]],
            s: vec![vec![1], vec![1]],
        };
        let broken = SseLink {
            r: vec![vec![2, 1]],
            s: vec![vec![1], vec![1]],
        };
        let ok = verify_sse_chain(&j, &j, &[link.clone(), back]).unwrap();
        assert!(ok.holds);
        let bad = verify_sse_chain(&j, &j, &[link, broken]).unwrap();
        assert_eq!(bad.failed_link, Some(1));
    }

    #[test]
    fn searches() {
        let j = m(&[&[1, 1], &[1, 1]]);
        let two = m(&[&[2]]);
        match search_se(&j, &two, bounds()).unwrap() {
            SearchOutcome::Found(c) => {
                assert_eq!(c.lag, 1);
                assert_eq!(c.r, vec![vec![1], vec![1]]);
                assert_eq!(c.s, vec![vec![1, 1]]);
            }
            other => panic!("{other:?}"),
        }
        let t = m(&[&[1, 1], &[1, 0]]);
        match search_se(&t, &t, bounds()).unwrap() {
            SearchOutcome::Found(c) => {
                assert_eq!(c.lag, 1);
                assert!(verify_se(&t, &t, &c).unwrap().holds());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            search_se(&two, &m(&[&[3]]), bounds()).unwrap(),
            SearchOutcome::NoneWithinBounds
        );
    }

    #[test]
    fn full_shifts() {
        let v = full_shift_test(&m(&[&[1, 1], &[1, 1]])).unwrap();
        assert_eq!(v.n, Some(BigInt::from(2)));
        let g = full_shift_test(&m(&[&[1, 1], &[1, 0]])).unwrap();
        assert_eq!((g.eventual_rank, g.n), (2, None));
        assert_eq!(full_shift_test(&m(&[&[5]])).unwrap().n, Some(BigInt::from(5)));
    }

    #[test]
    fn json_roundtrip() {
        let c = SeCertificate {
            r: vec![vec![1], vec![1]],
            s: vec![vec![1, 1]],
            lag: 1,
        };
        assert_eq!(SeCertificate::from_json(&c.to_json()).unwrap(), c);
    }
}
