//! Towers of clopen sets, stacks of projections, the cyclic-stack
//! construction and the refinement to Rohlin partitions, with certification
//! of every relation by re-multiplication.

pub mod cyclic;
pub mod model;
pub mod pipeline;
pub mod refine;
pub mod sparse;
pub mod stack;
pub mod tower;
pub mod verify;

pub use cyclic::{build_cyclic_stack, CyclicReport, CyclicStack};
pub use model::StackModel;
pub use pipeline::{estimated_parameters, rohlin_pipeline, EstimateBounds, RohlinReport, RohlinRun, CYCLIC_ELL};
pub use refine::{refine_to_rohlin_partition, RefineReport, RefinedPartition};
pub use sparse::Op;
pub use stack::{stack_from_tower, ConcreteStack, ConcreteStackReport, MaterializedStack, PathPairing};
pub use tower::{build_tower, select_subclopen_with_class, shift_disjoint, Tower, TowerReport};
pub use verify::{asymptotic_commutation_check, verify_rohlin_partition, CommutationTable, PartitionVerdict};

use serde::Serialize;

use crate::af_algebra::Operator;
use crate::error::{Error, Result};

/// Projections `e_0..e_{L-1}` advanced by the shift, with `q` carrying `e_0`
/// onto `e_1` and `p` carrying the complement `1 - sum e_i` into `e_0`.
#[derive(Debug, Clone)]
pub struct StackData<O> {
    pub e: Vec<O>,
    pub p: O,
    pub q: O,
}

impl<O: Operator> StackData<O> {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// `1 - sum e_i`.
    pub fn remainder(&self) -> O {
        let one = self.p.one();
        self.e.iter().fold(one, |acc, x| acc.sub(x))
    }
}

/// Operator norms of the defects in the stack relations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StackCheck {
    /// `max ||e_i^2 - e_i||` and `||s^2 - s||` for `s = sum e_i`; the latter
    /// vanishes exactly when the family is orthogonal.
    pub projection: f64,
    pub advance: f64,
    pub q_domain: f64,
    pub q_range: f64,
    pub p_domain: f64,
    /// `||e_0 pp* - pp*||`.
    pub p_range: f64,
    /// Rank of `e_0` minus rank of `pp*`; positive for a proper subprojection.
    pub rank_gap: f64,
}

impl StackCheck {
    pub fn max_defect(&self) -> f64 {
        [
            self.projection,
            self.advance,
            self.q_domain,
            self.q_range,
            self.p_domain,
            self.p_range,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn proj_defect<O: Operator>(x: &O) -> f64 {
    x.mul(x).sub(x).norm().max(x.adjoint().sub(x).norm())
}

pub fn check_stack<O: Operator>(sd: &StackData<O>, alpha: impl Fn(&O) -> O) -> StackCheck {
    let mut c = StackCheck::default();
    if sd.e.is_empty() {
        return c;
    }
    let sum = sd.e[1..].iter().fold(sd.e[0].clone(), |acc, x| acc.add(x));
    c.projection = sd.e.iter().map(proj_defect).fold(proj_defect(&sum), f64::max);
    c.advance = sd
        .e
        .windows(2)
        .map(|w| alpha(&w[0]).sub(&w[1]).norm())
        .fold(0.0, f64::max);
    let e1 = alpha(&sd.e[0]);
    let qs = sd.q.adjoint();
    c.q_domain = qs.mul(&sd.q).sub(&sd.e[0]).norm();
    c.q_range = sd.q.mul(&qs).sub(&e1).norm();
    let pp = sd.p.mul(&sd.p.adjoint());
    c.p_domain = sd.p.adjoint().mul(&sd.p).sub(&sd.remainder()).norm();
    c.p_range = sd.e[0].mul(&pp).sub(&pp).norm();
    c.rank_gap = sd.e[0].rank() - pp.rank();
    c
}

/// Collapses a stack of height `nm` to height `m` by `e_j = sum_i f_{im+j}`.
pub fn collapse_stack<O: Operator>(fs: &[O], m: usize) -> Result<Vec<O>> {
    if m == 0 || fs.is_empty() || !fs.len().is_multiple_of(m) {
        return Err(Error::InvalidInput(format!(
            "stack of length {} does not collapse to height {m}",
            fs.len()
        )));
    }
    Ok((0..m)
        .map(|j| {
            fs.iter()
                .skip(j + m)
                .step_by(m)
                .fold(fs[j].clone(), |acc, x| acc.add(x))
        })
        .collect())
}
