//! Perturbation lemmas for projections, unitaries and partial isometries in a
//! C*-algebra, written against a small operator interface so they apply both
//! to dense window algebras and to sparse operator models.

use crate::error::{Error, Result};

/// Tolerance for accepting an input as a projection.
pub const PROJECTION_TOL: f64 = 1e-9;

/// Gap required between the spectrum and the rounding threshold 1/2.
pub const GAP_GUARD: f64 = 1e-6;

/// Singular values below this are treated as zero by the partial polar factor.
pub const POLAR_CUTOFF: f64 = 1e-6;

pub trait Operator: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn adjoint(&self) -> Self;
    /// The identity of the ambient algebra.
    fn one(&self) -> Self;
    fn norm(&self) -> f64;
    /// Unnormalized trace; equals the rank for a projection.
    fn rank(&self) -> f64;
    /// For self-adjoint `self`, the spectral projection onto eigenvalues above
    /// `threshold`. Fails if an eigenvalue lies within `gap` of the threshold.
    fn spectral_projection(&self, threshold: f64, gap: f64) -> Result<Self>;
    /// Unitary factor `z (z*z)^(-1/2)` of an invertible element.
    fn polar_unitary(&self) -> Result<Self>;
    /// Partial isometry `U V*` built from the singular pairs above `cutoff`,
    /// together with the number of pairs kept.
    fn polar_partial(&self, cutoff: f64) -> (Self, usize);
}

fn proj_defect<O: Operator>(x: &O) -> f64 {
    x.mul(x).sub(x).norm().max(x.adjoint().sub(x).norm())
}

fn require_projection<O: Operator>(x: &O, name: &str) -> Result<()> {
    let d = proj_defect(x);
    if d > PROJECTION_TOL {
        return Err(Error::Precondition(format!("{name} is not a projection (defect {d:.3e})")));
    }
    Ok(())
}

fn rank_of<O: Operator>(x: &O) -> usize {
    x.rank().round().max(0.0) as usize
}

/// Given projections with `||ef|| < 1/4`, a projection `g` orthogonal to `e`
/// with `||f - g|| <= 4||ef||`, obtained by rounding the spectrum of
/// `(1-e) f (1-e)` at 1/2.
pub fn orthogonalize_projection<O: Operator>(e: &O, f: &O) -> Result<O> {
    require_projection(e, "e")?;
    require_projection(f, "f")?;
    let ef = e.mul(f).norm();
    if ef >= 0.25 {
        return Err(Error::Precondition(format!("||ef|| = {ef:.6} is not below 1/4")));
    }
    let c = e.one().sub(e);
    let x = c.mul(f).mul(&c);
    let g = x.spectral_projection(0.5, GAP_GUARD)?;
    // The eigenvectors above 1/2 lie in the range of 1-e; compress to remove
    // rounding residue so that eg vanishes to machine precision.
    Ok(c.mul(&g).mul(&c))
}

/// Given projections with `||e - f|| < 1/2`, a unitary `u` with `u* e u = f`
/// and `||1 - u|| <= 4||e - f||`: the polar part of `z = 2ef - e - f + 1`.
pub fn conjugating_unitary<O: Operator>(e: &O, f: &O) -> Result<O> {
    require_projection(e, "e")?;
    require_projection(f, "f")?;
    let d = e.sub(f).norm();
    if d >= 0.5 {
        return Err(Error::Precondition(format!("||e - f|| = {d:.6} is not below 1/2")));
    }
    let (re, rf) = (rank_of(e), rank_of(f));
    if re != rf {
        return Err(Error::RankMismatch(re, rf));
    }
    let one = e.one();
    let z = e.mul(f).scale(2.0).sub(e).sub(f).add(&one);
    z.polar_unitary()
}

/// Given orthogonal families `e_1..e_n` and `f_1..f_n` with
/// `||e_i - f_i|| < 1/(2n)`, a unitary `u` with `u* e_i u = f_i` for all `i`,
/// built as `sum_i e_i u_i` over the families extended by their complements.
pub fn align_families<O: Operator>(es: &[O], fs: &[O]) -> Result<O> {
    if es.len() != fs.len() {
        return Err(Error::Precondition(format!(
            "families of different lengths {} and {}",
            es.len(),
            fs.len()
        )));
    }
    let n = es.len();
    if n == 0 {
        return Err(Error::Precondition("empty families".into()));
    }
    for fam in [es, fs] {
        for x in fam {
            require_projection(x, "family member")?;
        }
        // A finite sum of projections is a projection exactly when they are
        // pairwise orthogonal.
        let sum = fam[1..].iter().fold(fam[0].clone(), |acc, x| acc.add(x));
        let d = proj_defect(&sum);
        if d > PROJECTION_TOL {
            return Err(Error::Precondition(format!("family not orthogonal ({d:.3e})")));
        }
    }
    let bound = 1.0 / (2.0 * n as f64);
    for (x, y) in es.iter().zip(fs) {
        let d = x.sub(y).norm();
        if d >= bound {
            return Err(Error::Precondition(format!("||e_i - f_i|| = {d:.6} is not below 1/(2n)")));
        }
    }
    let one = es[0].one();
    let e0 = es.iter().fold(one.clone(), |acc, x| acc.sub(x));
    let f0 = fs.iter().fold(one.clone(), |acc, x| acc.sub(x));
    let mut u = e0.mul(&conjugating_unitary(&e0, &f0)?);
    for (x, y) in es.iter().zip(fs) {
        u = u.add(&x.mul(&conjugating_unitary(x, y)?));
    }
    Ok(u)
}

/// Given projections `e`, `f` and `p` with `||p*p - e|| < eps` and
/// `||pp* - f|| < eps` for some `eps < 1/2`, a partial isometry `q` with
/// `q*q = e` and `qq* = f`: the polar part of `f p e`.
pub fn snap_partial_isometry<O: Operator>(p: &O, e: &O, f: &O) -> Result<O> {
    require_projection(e, "e")?;
    require_projection(f, "f")?;
    let d1 = p.adjoint().mul(p).sub(e).norm();
    let d2 = p.mul(&p.adjoint()).sub(f).norm();
    let eps = d1.max(d2);
    if eps >= 0.5 {
        return Err(Error::Precondition(format!("defect {eps:.6} is not below 1/2")));
    }
    let (re, rf) = (rank_of(e), rank_of(f));
    if re != rf {
        return Err(Error::RankMismatch(re, rf));
    }
    let (q, kept) = f.mul(p).mul(e).polar_partial(POLAR_CUTOFF);
    if kept != re {
        return Err(Error::RankMismatch(re, kept));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::af_algebra::AlgebraElement;
    use crate::sft_core::{Interval, Sft, TransitionMatrix};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Sft, Interval) {
        let s = Sft::new(TransitionMatrix::new(vec![vec![1, 1], vec![1, 0]]).unwrap());
        (s, Interval::new(0, 3).unwrap())
    }

    /// A random orthogonal matrix close to the identity, `exp` of a small skew matrix.
    fn near_identity(n: usize, size: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * size);
        let k = &a - a.transpose();
        k.exp()
    }

    fn rotate(x: &AlgebraElement, size: f64, rng: &mut ChaCha8Rng) -> AlgebraElement {
        let mut y = x.clone();
        for i in 0..x.r() {
            for j in 0..x.r() {
                let b = x.block(i, j);
                if b.is_empty() {
                    continue;
                }
                let u = near_identity(b.nrows(), size, rng);
                *y.block_mut(i, j) = &u * b * u.transpose();
            }
        }
        y
    }

    fn diag(s: &Sft, w: Interval, pick: impl Fn(usize, usize, usize) -> bool) -> AlgebraElement {
        AlgebraElement::from_fn(s, w, |i, j, p, q| if p == q && pick(i, j, p) { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn orthogonalize_trivial_and_random() {
        let (s, w) = setup();
        let e = diag(&s, w, |_, _, p| p == 0);
        let f = diag(&s, w, |_, _, p| p == 1);
        let g = orthogonalize_projection(&e, &f).unwrap();
        assert!(g.sub(&f).op_norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f2 = rotate(&f, 0.03, &mut rng);
        let g2 = orthogonalize_projection(&e, &f2).unwrap();
        assert!(e.mul(&g2).op_norm() < 1e-12);
        assert!(g2.sub(&f2).op_norm() <= 4.0 * e.mul(&f2).op_norm() + 1e-9);
        assert!(orthogonalize_projection(&e, &e).is_err());
    }

    #[test]
    fn conjugating() {
        let (s, w) = setup();
        let e = diag(&s, w, |_, _, p| p == 0);
        let u = conjugating_unitary(&e, &e).unwrap();
        assert!(u.sub(&e.one()).op_norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = rotate(&e, 0.05, &mut rng);
        let u = conjugating_unitary(&e, &f).unwrap();
        assert!(u.adjoint().mul(&e).mul(&u).sub(&f).op_norm() < 1e-9);
        assert!(u.sub(&e.one()).op_norm() <= 4.0 * e.sub(&f).op_norm() + 1e-9);
    }

    #[test]
    fn families() {
        let (s, w) = setup();
        let e1 = diag(&s, w, |_, _, p| p == 0);
        let e2 = diag(&s, w, |_, _, p| p == 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = rotate(&e1.one(), 0.02, &mut rng);
        let f1 = v.adjoint().mul(&e1).mul(&v);
        let f2 = v.adjoint().mul(&e2).mul(&v);
        let es = [e1, e2];
        let fs = [f1, f2];
        let u = align_families(&es, &fs).unwrap();
        let eps = es.iter().zip(&fs).map(|(a, b)| a.sub(b).op_norm()).fold(0.0, f64::max);
        for (a, b) in es.iter().zip(&fs) {
            assert!(u.adjoint().mul(a).mul(&u).sub(b).op_norm() < 1e-9);
        }
        assert!(u.sub(&u.one()).op_norm() <= 16.0 * eps + 1e-9);
        assert!(align_families(&es, &fs[..1]).is_err());
    }

    #[test]
    fn snapping() {
        let (s, w) = setup();
        let e = diag(&s, w, |_, _, p| p == 0);
        let f = diag(&s, w, |_, _, p| p == 1);
        let p = AlgebraElement::from_fn(&s, w, |_, _, a, b| if (a, b) == (1, 0) { 1.0 } else { 0.0 }).unwrap();
        // Blocks with a single path have no index 1, so restrict to where both exist.
        let e = e.mul(&p.adjoint().mul(&p));
        let f = f.mul(&p.mul(&p.adjoint()));
        let q = snap_partial_isometry(&p, &e, &f).unwrap();
        assert!(q.sub(&p).op_norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pn = rotate(&p, 0.02, &mut rng);
        let q = snap_partial_isometry(&pn, &e, &f).unwrap();
        assert!(q.adjoint().mul(&q).sub(&e).op_norm() < 1e-9);
        assert!(q.mul(&q.adjoint()).sub(&f).op_norm() < 1e-9);
        let big = e.add(&diag(&s, w, |i, j, p| (i, j) == (0, 0) && p == 2));
        assert!(snap_partial_isometry(&p, &big, &f).is_err());
    }
}
