//! Refinement of an approximately cyclic stack of height `n l m` into a
//! partition by two towers of heights `m` and `m+1`.
//!
//! The remainder `e = 1 - sum f_i` is moved up the stack by partial
//! isometries `p_k`; averaging `l` of them gives `q_k`, and `e` together with
//! the ranges of the `q_k` spans a copy `D` of the `(mn+1) x (mn+1)`
//! matrices. On `D` the cyclic permutation `u` is replaced by a unitary `v`
//! of order `mn+1`, whose orbit of a rank-one projection is cut into `m+1`
//! levels. The construction needs complex scalars, so it works on the
//! sparse operator model.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::sparse::Op;
use crate::af_algebra::{snap_partial_isometry, Operator};
use crate::error::{Error, Result};

const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub m: usize,
    pub n: usize,
    pub ell: usize,
    pub stack_len: usize,
    /// Rank of `e = 1 - sum f_i`, the size of each matrix unit of `D`.
    pub remainder_rank: f64,
    /// `||alpha(f_last) - f_0||` of the input stack.
    pub input_cyclic_defect: f64,
    /// `max_k max(||q_k* q_k - e||, ||(q_k q_k*)^2 - q_k q_k*||)`.
    pub q_defect: f64,
    pub matrix_unit_defect: f64,
    /// `max_k ||u q_k u* - q_(k+1)||`.
    pub u_action_defect: f64,
    pub u_minus_v: f64,
    pub u_minus_v_bound: f64,
    /// `max_k ||alpha(e_{0,k}) - e_{0,k+1}||`, indices mod `m`.
    pub d0: f64,
    pub d0_bound: f64,
    /// `max_k ||alpha(e_{1,k}) - e_{1,k+1}||`, indices mod `m+1`.
    pub d1: f64,
    pub d1_bound: f64,
    pub partition_defect: f64,
    pub projection_defect: f64,
}

impl RefineReport {
    pub fn within_bounds(&self, slack: f64) -> bool {
        self.d0 <= self.d0_bound + slack
            && self.d1 <= self.d1_bound + slack
            && self.u_minus_v <= self.u_minus_v_bound + slack
    }
}

#[derive(Debug, Clone)]
pub struct RefinedPartition<O> {
    /// `towers[0]` has height `m`, `towers[1]` height `m+1`.
    pub towers: Vec<Vec<O>>,
    pub report: RefineReport,
}

fn proj_defect<O: Operator>(x: &O) -> f64 {
    x.mul(x).sub(x).norm().max(x.adjoint().sub(x).norm())
}

fn require(what: &str, defect: f64) -> Result<()> {
    if defect.is_finite() && defect <= IDENTITY_TOL {
        Ok(())
    } else {
        Err(Error::Verification(format!("{what}: defect {defect:.3e}")))
    }
}

/// The `(mn+1)`-dimensional data: `u` fixing basis vector 0 and cycling the
/// rest, its eigenbasis, `v` with the eigenvalues moved to the
/// `(mn+1)`-th roots of unity in angular order, and the rank-one projection
/// onto the sum of the eigenvectors of `v`.
struct SmallModel {
    u: DMatrix<Complex64>,
    v: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
}

fn small_model(mn: usize) -> SmallModel {
    let d = mn + 1;
    let mut u = DMatrix::zeros(d, d);
    u[(0, 0)] = Complex64::new(1.0, 0.0);
    for k in 0..mn {
        u[((k + 1) % mn + 1, k + 1)] = Complex64::new(1.0, 0.0);
    }
    // Eigenvectors: basis vector 0 with eigenvalue 1, then the Fourier
    // vectors of the cycle with eigenvalues exp(2 pi i j / mn).
    let mut vecs: Vec<(f64, usize, nalgebra::DVector<Complex64>)> = Vec::with_capacity(d);
    let mut e0 = nalgebra::DVector::zeros(d);
    e0[0] = Complex64::new(1.0, 0.0);
    vecs.push((0.0, 0, e0));
    let norm = (mn as f64).sqrt();
    for j in 0..mn {
        let mut x = nalgebra::DVector::zeros(d);
        for k in 0..mn {
            x[k + 1] = Complex64::from_polar(1.0 / norm, -2.0 * PI * (j * k) as f64 / mn as f64);
        }
        vecs.push((2.0 * PI * j as f64 / mn as f64, j + 1, x));
    }
    vecs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut v = DMatrix::zeros(d, d);
    let mut xi = nalgebra::DVector::zeros(d);
    for (t, (_, _, x)) in vecs.iter().enumerate() {
        let z = Complex64::from_polar(1.0, 2.0 * PI * t as f64 / d as f64);
        v += x * x.adjoint() * z;
        xi += x;
    }
    xi /= Complex64::new((d as f64).sqrt(), 0.0);
    let r = &xi * xi.adjoint();
    SmallModel { u, v, r }
}

fn dense_norm(x: &DMatrix<Complex64>) -> f64 {
    x.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Refines the approximately cyclic stack `f_0..f_{nlm-1}` with the partial
/// isometry `r` (`rr* = 1 - sum f_i`, `r*r <= f_0`).
pub fn refine_to_rohlin_partition(
    f: &[Op],
    r: &Op,
    alpha: impl Fn(&Op) -> Op,
    m: usize,
    n: usize,
    ell: usize,
) -> Result<RefinedPartition<Op>> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("m and n must be positive".into()));
    }
    if n % (m + 1) != 1 % (m + 1) {
        return Err(Error::Precondition(format!("need n = 1 mod m+1, got n = {n}, m = {m}")));
    }
    if ell <= 4 {
        return Err(Error::Precondition(format!("need l > 4, got l = {ell}")));
    }
    let len = n * ell * m;
    if f.len() != len {
        return Err(Error::Precondition(format!(
            "stack has length {}, need n l m = {len}",
            f.len()
        )));
    }
    let mn = m * n;
    let one = r.one();
    let sum_f = f[1..].iter().fold(f[0].clone(), |acc, x| acc.add(x));
    let e = one.sub(&sum_f);
    let input_cyclic_defect = alpha(&f[len - 1]).sub(&f[0]).norm();

    let mut p = vec![r.adjoint()];
    for _ in 1..len {
        let a = alpha(p.last().expect("nonempty"));
        let range = a.mul(&a.adjoint());
        p.push(snap_partial_isometry(&a, &e, &range)?);
    }
    let scale = 1.0 / (ell as f64).sqrt();
    let q: Vec<Op> = (0..mn)
        .map(|k| {
            (1..ell)
                .fold(p[k].clone(), |acc, j| acc.add(&p[j * mn + k]))
                .scale(scale)
        })
        .collect();
    let mut q_defect: f64 = 0.0;
    for qk in &q {
        q_defect = q_defect
            .max(qk.adjoint().mul(qk).sub(&e).norm())
            .max(proj_defect(&qk.mul(&qk.adjoint())));
    }
    require("q_k partial isometries", q_defect)?;

    // Matrix units of D: x_0 = e, x_{k+1} = q_k, E_ab = x_a x_b*.
    let x: Vec<Op> = std::iter::once(e.clone()).chain(q.iter().cloned()).collect();
    let xs: Vec<Op> = x.iter().map(|y| y.adjoint()).collect();
    let d = mn + 1;
    let unit = |a: usize, b: usize| x[a].mul(&xs[b]);
    let mut matrix_unit_defect: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let eab = unit(a, b);
            for c in 0..d {
                let prod = eab.mul(&unit(b, c));
                matrix_unit_defect = matrix_unit_defect.max(prod.sub(&unit(a, c)).norm());
                if d > 1 {
                    let other = eab.mul(&unit((b + 1) % d, c));
                    matrix_unit_defect = matrix_unit_defect.max(other.norm());
                }
            }
        }
    }
    require("matrix units of D", matrix_unit_defect)?;
    let lift = |c: &DMatrix<Complex64>| {
        let mut total = one.scale(0.0);
        for a in 0..d {
            let mut inner = one.scale(0.0);
            for b in 0..d {
                if c[(a, b)].norm() > 0.0 {
                    inner = inner.add(&xs[b].scale_complex(c[(a, b)]));
                }
            }
            total = total.add(&x[a].mul(&inner));
        }
        total
    };

    let sm = small_model(mn);
    let u = lift(&sm.u);
    let v = lift(&sm.v);
    let us = u.adjoint();
    let u_action_defect = (0..mn)
        .map(|k| u.mul(&q[k]).mul(&us).sub(&q[(k + 1) % mn]).norm())
        .fold(0.0, f64::max);
    require("u q_k u* = q_(k+1)", u_action_defect)?;
    let u_minus_v = u.sub(&v).norm().max(dense_norm(&(&sm.u - &sm.v)));

    let mut towers: Vec<Vec<Op>> = vec![Vec::with_capacity(m), Vec::with_capacity(m + 1)];
    for k in 0..m {
        let mut y = (1..n * ell).fold(f[k].clone(), |acc, j| acc.add(&f[j * m + k]));
        for j in 0..n {
            let qq = &q[j * m + k];
            y = y.sub(&qq.mul(&qq.adjoint()));
        }
        towers[0].push(y);
    }
    let per = (mn + 1) / (m + 1);
    for k in 0..=m {
        let mut c = DMatrix::<Complex64>::zeros(d, d);
        for j in 0..per {
            let vp = sm.v.pow((j * (m + 1) + k) as u32);
            c += &vp * &sm.r * vp.adjoint();
        }
        towers[1].push(lift(&c));
    }

    let all = towers.iter().flatten();
    let partition_defect = all
        .clone()
        .fold(one.clone(), |acc, y| acc.sub(y))
        .norm();
    let projection_defect = all.map(proj_defect).fold(0.0, f64::max);
    let advance = |t: &[Op]| {
        (0..t.len())
            .map(|k| alpha(&t[k]).sub(&t[(k + 1) % t.len()]).norm())
            .fold(0.0, f64::max)
    };
    let (nf, lf, mnf) = (n as f64, ell as f64, mn as f64);
    let report = RefineReport {
        m,
        n,
        ell,
        stack_len: len,
        remainder_rank: e.rank(),
        input_cyclic_defect,
        q_defect,
        matrix_unit_defect,
        u_action_defect,
        u_minus_v,
        u_minus_v_bound: 2.0 * PI / mnf,
        d0: advance(&towers[0]),
        d0_bound: 7.0 * nf / lf.sqrt(),
        d1: advance(&towers[1]),
        d1_bound: 3.0 * (mnf + 1.0).powi(2) / lf.sqrt() + 4.0 * PI / mnf,
        partition_defect,
        projection_defect,
    };
    Ok(RefinedPartition { towers, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rohlin::{build_cyclic_stack, StackModel};

    fn cyclic(len: usize, ell_p: usize) -> (StackModel, Vec<Op>, Op) {
        let model = StackModel::minimal((ell_p - 1) * (len + 2) * len).unwrap();
        let cs = build_cyclic_stack(&model.stack(), |x| model.alpha(x), len, ell_p, 0).unwrap();
        (model, cs.f, cs.r)
    }

    #[test]
    fn small_model_spectrum() {
        for mn in [1, 3, 4] {
            let sm = small_model(mn);
            let d = mn + 1;
            let id = DMatrix::<Complex64>::identity(d, d);
            assert!(dense_norm(&(sm.v.pow(d as u32) - &id)) < 1e-9);
            assert!(dense_norm(&(&sm.v * sm.v.adjoint() - &id)) < 1e-12);
            assert!(dense_norm(&(&sm.u - &sm.v)) <= 2.0 * PI / d as f64 + 1e-9);
            // The orbit of r under v is a partition of unity.
            let mut total = DMatrix::<Complex64>::zeros(d, d);
            for k in 0..d {
                let vp = sm.v.pow(k as u32);
                total += &vp * &sm.r * vp.adjoint();
            }
            assert!(dense_norm(&(total - id)) < 1e-9);
        }
    }

    #[test]
    fn refines_to_partition() {
        let (m, n, ell) = (2, 1, 5);
        let (model, f, r) = cyclic(n * ell * m, 8);
        let out = refine_to_rohlin_partition(&f, &r, |x| model.alpha(x), m, n, ell).unwrap();
        let rep = &out.report;
        assert_eq!(out.towers[0].len(), m);
        assert_eq!(out.towers[1].len(), m + 1);
        assert!(rep.partition_defect < 1e-9, "{rep:?}");
        assert!(rep.projection_defect < 1e-9, "{rep:?}");
        assert!(rep.u_minus_v <= 2.0 * PI / 3.0 + 1e-9);
        assert!(rep.within_bounds(1e-9), "{rep:?}");
    }

    #[test]
    fn preconditions() {
        let (model, f, r) = cyclic(6, 8);
        let al = |x: &Op| model.alpha(x);
        assert!(matches!(
            refine_to_rohlin_partition(&f, &r, al, 2, 3, 1),
            Err(Error::Precondition(_))
        ));
        assert!(refine_to_rohlin_partition(&f, &r, al, 2, 1, 3).is_err());
        assert!(refine_to_rohlin_partition(&f, &r, al, 2, 1, 5).is_err());
    }
}
