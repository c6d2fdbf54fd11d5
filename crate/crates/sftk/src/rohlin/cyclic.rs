//! From an exact stack of length `(l-1)(m+2)m` to an approximately cyclic
//! stack of height `m`: the top levels are rotated into the base with
//! weights `(i+1)/l`, and the remainder is carried into `f_0` by `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_stack, StackData};
use crate::af_algebra::{align_families, Operator};
use crate::error::{Error, Result};

/// Tolerance for the algebraic identities, all of which hold exactly in
/// exact arithmetic.
const IDENTITY_TOL: f64 = 1e-9;

/// Number of sampled index quadruples for the matrix-unit law.
pub const UNIT_LAW_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclicReport {
    pub m: usize,
    pub ell: usize,
    pub stack_len: usize,
    /// `||u - 1||` for the unitary aligning `alpha(e_i)` with `e_{i+1}`.
    pub aligning_unitary_defect: f64,
    pub projection_defect: f64,
    /// `max_{j<m-1} ||alpha(f_j) - f_{j+1}||`.
    pub advance_defect: f64,
    /// `||alpha(f_{m-1}) - f_0||`.
    pub cyclic_defect: f64,
    /// `1/l + 1/sqrt(l)`.
    pub cyclic_bound: f64,
    pub within_cyclic_bound: bool,
    /// `2/sqrt(l)`, the approximate-cyclicity level claimed for the stack.
    pub approximate_bound: f64,
    pub within_approximate_bound: bool,
    /// `||rr* - (1 - sum f_j)||`.
    pub r_range_defect: f64,
    /// `max(||(r*r)^2 - r*r||, ||f_0 r*r - r*r||)`.
    pub r_domain_defect: f64,
    /// `rank f_0 - rank r*r`.
    pub r_rank_gap: f64,
    /// Defect of the blockwise formula for `1 - sum f_j` with negative cross
    /// terms.
    pub complement_formula_defect: f64,
    /// The same with positive cross terms.
    pub complement_formula_defect_positive: f64,
    pub unit_law_samples: usize,
    pub unit_law_defect: f64,
}

#[derive(Debug, Clone)]
pub struct CyclicStack<O> {
    pub f: Vec<O>,
    /// Partial isometry with `rr* = 1 - sum f_j` and `r*r <= f_0`.
    pub r: O,
    pub report: CyclicReport,
}

fn require(what: &str, defect: f64) -> Result<()> {
    if defect.is_finite() && defect <= IDENTITY_TOL {
        Ok(())
    } else {
        Err(Error::Verification(format!("{what}: defect {defect:.3e}")))
    }
}

fn proj_defect<O: Operator>(x: &O) -> f64 {
    x.mul(x).sub(x).norm().max(x.adjoint().sub(x).norm())
}

/// Builds `f_0..f_{m-1}` and `r` from an exact stack of length
/// `(l-1)(m+2)m`. Every algebraic identity is re-verified; a failure is an
/// error. The norm bounds are measured and reported.
pub fn build_cyclic_stack<O: Operator>(
    sd: &StackData<O>,
    alpha: impl Fn(&O) -> O,
    m: usize,
    ell: usize,
    seed: u64,
) -> Result<CyclicStack<O>> {
    if ell <= 4 {
        return Err(Error::Precondition(format!("need l > 4, got l = {ell}")));
    }
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    let len = (ell - 1) * (m + 2) * m;
    if sd.len() != len {
        return Err(Error::Precondition(format!(
            "stack has length {}, need (l-1)(m+2)m = {len}",
            sd.len()
        )));
    }
    require("input stack", check_stack(sd, &alpha).max_defect())?;

    let es: Vec<O> = sd.e[..len - 1].iter().map(&alpha).collect();
    let u = align_families(&es, &sd.e[1..])?;
    let one = sd.q.one();
    let aligning_unitary_defect = u.sub(&one).norm();
    let ustar = u.adjoint();
    let beta = |x: &O| ustar.mul(&alpha(x)).mul(&u);

    // t[a] carries e_0 onto e_a; q(a, b) = t[a] t[b]* carries e_b onto e_a.
    let mut t = vec![sd.e[0].clone()];
    let mut s = sd.q.clone();
    for _ in 1..len {
        let next = s.mul(t.last().expect("nonempty"));
        t.push(next);
        s = beta(&s);
    }
    let q = |a: usize, b: usize| t[a].mul(&t[b].adjoint());

    let l = ell as f64;
    let big = |i: usize| ((m + 1) * (ell - 1) + i) * m;
    let weight = |i: usize| (((i + 1) * (ell - 1 - i)) as f64).sqrt() / l;
    let mut f = Vec::with_capacity(m);
    let mut blocks_neg = Vec::new();
    let mut blocks_pos = Vec::new();
    for j in 0..m {
        let mut x = one.scale(0.0);
        for i in 0..ell - 1 {
            let (a, b) = (i * m + j, big(i) + j);
            let (lo, hi) = ((i + 1) as f64 / l, (ell - 1 - i) as f64 / l);
            let cross = q(a, b).add(&q(b, a));
            x = x
                .add(&q(a, a).scale(lo))
                .add(&q(b, b).scale(hi))
                .add(&cross.scale(weight(i)));
            let diag = q(a, a).scale(hi).add(&q(b, b).scale(lo));
            blocks_neg.push(diag.sub(&cross.scale(weight(i))));
            blocks_pos.push(diag.add(&cross.scale(weight(i))));
        }
        for i in ell - 1..(m + 1) * (ell - 1) {
            x = x.add(&q(i * m + j, i * m + j));
        }
        f.push(x);
    }

    let mut rp = one.scale(0.0);
    for j in 0..m {
        for i in 0..ell - 1 {
            let a = (ell + i * m + j - 1) * m;
            rp = rp
                .add(&q(a, i * m + j).scale(((ell - 1 - i) as f64 / l).sqrt()))
                .sub(&q(a, big(i) + j).scale(((i + 1) as f64 / l).sqrt()));
        }
    }
    let head = sd.e[0]
        .scale((1.0 / l).sqrt())
        .add(&q(big(0), 0).scale(((ell - 1) as f64 / l).sqrt()));
    rp = rp.add(&head.mul(&sd.p));
    let r = rp.adjoint();

    let sum_f = f[1..].iter().fold(f[0].clone(), |acc, x| acc.add(x));
    let rest = one.sub(&sum_f);
    let projection_defect = f.iter().map(proj_defect).fold(proj_defect(&sum_f), f64::max);
    require("f_j projections", projection_defect)?;
    let advance_defect = (0..m.saturating_sub(1))
        .map(|j| alpha(&f[j]).sub(&f[j + 1]).norm())
        .fold(0.0, f64::max);
    require("alpha(f_j) = f_(j+1)", advance_defect)?;
    let cyclic_defect = alpha(&f[m - 1]).sub(&f[0]).norm();
    let cyclic_bound = 1.0 / l + 1.0 / l.sqrt();
    let approximate_bound = 2.0 / l.sqrt();

    let rr = r.mul(&r.adjoint());
    let r_range_defect = rr.sub(&rest).norm();
    require("rr* = 1 - sum f_j", r_range_defect)?;
    let dom = r.adjoint().mul(&r);
    let r_domain_defect = proj_defect(&dom).max(f[0].mul(&dom).sub(&dom).norm());
    require("r*r <= f_0", r_domain_defect)?;
    let r_rank_gap = f[0].rank() - dom.rank();

    let pp = sd.p.adjoint().mul(&sd.p);
    let total = |bs: &[O]| bs.iter().fold(pp.clone(), |acc, x| acc.add(x));
    let complement_formula_defect = total(&blocks_neg).sub(&rest).norm();
    require("blockwise complement formula", complement_formula_defect)?;
    let complement_formula_defect_positive = total(&blocks_pos).sub(&rest).norm();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit_law_defect: f64 = 0.0;
    for _ in 0..UNIT_LAW_SAMPLES {
        let (a, b, d) = (rng.random_range(0..len), rng.random_range(0..len), rng.random_range(0..len));
        let c = if rng.random_bool(0.5) { b } else { rng.random_range(0..len) };
        let lhs = q(a, b).mul(&q(c, d));
        let d_ = if b == c { lhs.sub(&q(a, d)).norm() } else { lhs.norm() };
        unit_law_defect = unit_law_defect.max(d_);
    }
    require("matrix-unit law", unit_law_defect)?;

    let report = CyclicReport {
        m,
        ell,
        stack_len: len,
        aligning_unitary_defect,
        projection_defect,
        advance_defect,
        cyclic_defect,
        cyclic_bound,
        within_cyclic_bound: cyclic_defect <= cyclic_bound + IDENTITY_TOL,
        approximate_bound,
        within_approximate_bound: cyclic_defect <= approximate_bound + IDENTITY_TOL,
        r_range_defect,
        r_domain_defect,
        r_rank_gap,
        complement_formula_defect,
        complement_formula_defect_positive,
        unit_law_samples: UNIT_LAW_SAMPLES,
        unit_law_defect,
    };
    Ok(CyclicStack { f, r, report })
}
