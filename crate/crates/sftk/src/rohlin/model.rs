//! A finite operator model of an exact stack. Atoms are basis vectors; the
//! shift acts by a permutation of atoms, so `alpha(x) = W x W*`.
//!
//! The model has `fibers` columns of `levels` atoms plus `complements` extra
//! atoms. Inside a column the shift moves an atom one level up. Tops of
//! columns feed either the base of the next column or a complement atom,
//! and each complement atom feeds the base of the next column, mirroring a
//! clopen tower whose top returns partly into its base and partly into the
//! remainder.

use num_complex::Complex64;

use super::StackData;
use super::sparse::Op;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackModel {
    levels: usize,
    fibers: usize,
    complements: usize,
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Item {
    Fiber(usize),
    Complement(usize),
}

impl StackModel {
    /// Requires `1 <= complements < fibers`, which makes `pp*` a proper
    /// subprojection of `e_0`.
    pub fn new(levels: usize, fibers: usize, complements: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidInput("stack length must be positive".into()));
        }
        if complements == 0 || complements >= fibers {
            return Err(Error::InvalidInput(format!(
                "need 1 <= complements < fibers, got {complements} and {fibers}"
            )));
        }
        let dim = fibers * levels + complements;
        let mut order = Vec::with_capacity(fibers + complements);
        let mut c = 0;
        for f in 0..fibers {
            order.push(Item::Fiber(f));
            if c < complements && f >= fibers - complements {
                order.push(Item::Complement(c));
                c += 1;
            }
        }
        let first = |it: Item| match it {
            Item::Fiber(f) => f * levels,
            Item::Complement(c) => fibers * levels + c,
        };
        let last = |it: Item| match it {
            Item::Fiber(f) => f * levels + levels - 1,
            Item::Complement(c) => fibers * levels + c,
        };
        let mut perm = vec![0; dim];
        for f in 0..fibers {
            for k in 0..levels - 1 {
                perm[f * levels + k] = f * levels + k + 1;
            }
        }
        for t in 0..order.len() {
            perm[last(order[t])] = first(order[(t + 1) % order.len()]);
        }
        let mut inverse = vec![0; dim];
        for (a, &b) in perm.iter().enumerate() {
            inverse[b] = a;
        }
        Ok(StackModel {
            levels,
            fibers,
            complements,
            perm,
            inverse,
        })
    }

    /// Two columns and one complement atom.
    pub fn minimal(levels: usize) -> Result<Self> {
        Self::new(levels, 2, 1)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn fibers(&self) -> usize {
        self.fibers
    }

    pub fn complements(&self) -> usize {
        self.complements
    }

    pub fn dim(&self) -> usize {
        self.fibers * self.levels + self.complements
    }

    pub fn alpha(&self, x: &Op) -> Op {
        x.permute(&self.perm)
    }

    pub fn alpha_inv(&self, x: &Op) -> Op {
        x.permute(&self.inverse)
    }

    pub fn alpha_pow(&self, x: &Op, k: i64) -> Op {
        let mut y = x.clone();
        for _ in 0..k.unsigned_abs() {
            y = if k > 0 { self.alpha(&y) } else { self.alpha_inv(&y) };
        }
        y
    }

    fn atom(&self, f: usize, k: usize) -> usize {
        f * self.levels + k
    }

    /// `sum_f |f,a><f,b|`, the level-`b` to level-`a` transfer.
    pub fn transfer(&self, a: usize, b: usize) -> Op {
        let one = Complex64::new(1.0, 0.0);
        Op::from_entries(
            self.dim(),
            (0..self.fibers).map(|f| (self.atom(f, a), self.atom(f, b), one)),
        )
    }

    pub fn level(&self, k: usize) -> Op {
        self.transfer(k, k)
    }

    /// The exact stack: levels, `q` from level 0 to level 1, and `p` from
    /// the complement atoms into the bases of the first columns.
    pub fn stack(&self) -> StackData<Op> {
        let n = self.dim();
        let one = Complex64::new(1.0, 0.0);
        let q = Op::from_entries(
            n,
            (0..self.fibers).map(|f| (self.perm[self.atom(f, 0)], self.atom(f, 0), one)),
        );
        let p = Op::from_entries(
            n,
            (0..self.complements).map(|c| (self.atom(c, 0), self.fibers * self.levels + c, one)),
        );
        StackData {
            e: (0..self.levels).map(|k| self.level(k)).collect(),
            p,
            q,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::af_algebra::Operator;
    use crate::rohlin::check_stack;

    #[test]
    fn permutation_is_a_single_cycle() {
        let m = StackModel::new(5, 3, 2).unwrap();
        let mut seen = vec![false; m.dim()];
        let mut a = 0;
        for _ in 0..m.dim() {
            assert!(!seen[a]);
            seen[a] = true;
            a = m.perm[a];
        }
        assert_eq!(a, 0);
        assert!(StackModel::new(5, 2, 2).is_err());
    }

    #[test]
    fn stack_relations_hold_exactly() {
        let m = StackModel::minimal(6).unwrap();
        let sd = m.stack();
        let c = check_stack(&sd, |x| m.alpha(x));
        assert_eq!(c.max_defect(), 0.0);
        assert!(sd.p.mul(&sd.p.adjoint()).sub(&sd.e[0]).norm() > 0.5);
        let y = m.alpha_pow(&sd.q, 3);
        assert_eq!(m.alpha_pow(&y, -3), sd.q);
    }
}
