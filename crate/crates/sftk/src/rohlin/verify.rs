//! Measurement of a candidate partition against the Rohlin conditions, and
//! the table of commutators `[alpha^n(x), y]`.

use serde::Serialize;

use crate::af_algebra::{asymptotic_commutators, projection_defect, AlgebraElement, Operator};
use crate::error::Result;
use crate::sft_core::Sft;

/// Tolerance for `sum e_{i,j} = 1`, which the constructions meet exactly up
/// to rounding.
pub const PARTITION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionVerdict {
    pub epsilon: f64,
    pub heights: Vec<usize>,
    /// `||1 - sum e_{i,j}||`.
    pub partition_defect: f64,
    pub projection_defect: f64,
    /// Per tower, `max_j ||alpha(e_{i,j}) - e_{i,j+1}||` with `e_{i,k_i} = e_{i,0}`.
    pub advance: Vec<f64>,
    /// `max ||[x, e_{i,j}]||` over the probe set; zero for an empty set.
    pub commutator: f64,
    pub probes: usize,
    pub verdict: bool,
    /// Names of the clauses that fail.
    pub violated: Vec<String>,
}

impl PartitionVerdict {
    pub fn max_advance(&self) -> f64 {
        self.advance.iter().copied().fold(0.0, f64::max)
    }
}

/// Checks the partition of unity, the cyclic advance in every tower and the
/// commutators with `probes`, all against `epsilon` except the partition
/// condition, which is held to `PARTITION_TOL`. Pure measurement.
pub fn verify_rohlin_partition<O: Operator>(
    towers: &[Vec<O>],
    alpha: impl Fn(&O) -> O,
    epsilon: f64,
    probes: &[O],
) -> PartitionVerdict {
    let mut violated = Vec::new();
    let all: Vec<&O> = towers.iter().flatten().collect();
    let (partition_defect, projection_defect) = match all.first() {
        None => (1.0, 0.0),
        Some(first) => {
            let sum = all[1..].iter().fold((*first).clone(), |acc, x| acc.add(x));
            let pd = first.one().sub(&sum).norm();
            let proj = all.iter().map(|x| projection_defect(*x)).fold(0.0, f64::max);
            (pd, proj)
        }
    };
    if !(partition_defect <= PARTITION_TOL) {
        violated.push(format!("partition of unity: defect {partition_defect:.3e}"));
    }
    if !(projection_defect <= PARTITION_TOL) {
        violated.push(format!("projections: defect {projection_defect:.3e}"));
    }
    let mut advance = Vec::with_capacity(towers.len());
    for (i, tw) in towers.iter().enumerate() {
        let k = tw.len();
        let d = (0..k)
            .map(|j| alpha(&tw[j]).sub(&tw[(j + 1) % k]).norm())
            .fold(0.0, f64::max);
        if !(d < epsilon) {
            violated.push(format!("advance in tower {i}: {d:.6} >= {epsilon}"));
        }
        advance.push(d);
    }
    let mut commutator: f64 = 0.0;
    for x in probes {
        for e in &all {
            commutator = commutator.max(x.mul(e).sub(&e.mul(x)).norm());
        }
    }
    if !probes.is_empty() && !(commutator < epsilon) {
        violated.push(format!("commutator with probe set: {commutator:.6} >= {epsilon}"));
    }
    PartitionVerdict {
        epsilon,
        heights: towers.iter().map(Vec::len).collect(),
        partition_defect,
        projection_defect,
        advance,
        commutator,
        probes: probes.len(),
        verdict: violated.is_empty(),
        violated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutationTable {
    pub rows: Vec<(i64, f64)>,
    /// Largest `|n|` with a nonzero entry, if any.
    pub last_nonzero: Option<i64>,
    /// Width of the hull of the two windows; beyond it the windows of
    /// `alpha^n(x)` and `y` are disjoint.
    pub hull_width: usize,
    /// Every entry with `|n| >= hull_width` is exactly zero.
    pub vanishes_beyond_hull: bool,
}

pub fn asymptotic_commutation_check(
    sft: &Sft,
    x: &AlgebraElement,
    y: &AlgebraElement,
    n_max: i64,
) -> Result<CommutationTable> {
    let rows = asymptotic_commutators(sft, x, y, n_max)?;
    let hull_width = x.window().hull(&y.window()).width();
    let last_nonzero = rows.iter().filter(|r| r.1 != 0.0).map(|r| r.0.abs()).max();
    let vanishes_beyond_hull = rows
        .iter()
        .filter(|r| r.0.unsigned_abs() as usize >= hull_width)
        .all(|r| r.1 == 0.0);
    Ok(CommutationTable {
        rows,
        last_nonzero,
        hull_width,
        vanishes_beyond_hull,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rohlin::{Op, StackModel};
    use crate::sft_core::{Interval, TransitionMatrix};

    /// The orbit of one atom of a model whose shift cycles all atoms: an
    /// exact single-tower partition.
    fn orbit(levels: usize) -> (StackModel, Vec<Op>) {
        let model = StackModel::new(levels, 2, 1).unwrap();
        let dim = model.dim();
        let mut orbit = vec![Op::unit(dim, 0, 0)];
        for _ in 1..dim {
            let next = model.alpha(orbit.last().unwrap());
            orbit.push(next);
        }
        (model, orbit)
    }

    #[test]
    fn detects_injected_fault() {
        let (model, orbit) = orbit(3);
        let towers = vec![orbit.clone()];
        let ok = verify_rohlin_partition(&towers, |x| model.alpha(x), 0.1, &[]);
        assert!(ok.verdict, "{ok:?}");
        assert_eq!(ok.commutator, 0.0);

        let mut bad = orbit;
        bad[1] = bad[1].scale(1.0 - 0.2);
        let v = verify_rohlin_partition(&[bad], |x| model.alpha(x), 0.1, &[]);
        assert!(!v.verdict);
        assert!(v.violated.iter().any(|s| s.starts_with("partition")));
        assert!(v.violated.iter().any(|s| s.starts_with("advance")));
    }

    #[test]
    fn commutator_clause() {
        let (model, orbit) = orbit(3);
        let dim = model.dim();
        let probe = Op::unit(dim, 0, 1).add(&Op::unit(dim, 1, 0));
        let v = verify_rohlin_partition(&[orbit], |x| model.alpha(x), 0.5, &[probe]);
        assert!(!v.verdict);
        assert!(v.violated.iter().any(|s| s.starts_with("commutator")));
    }

    #[test]
    fn commutation_table_cutoff() {
        let sft = Sft::new(TransitionMatrix::new(vec![vec![1, 1], vec![1, 0]]).unwrap());
        let w = Interval::new(0, 2).unwrap();
        let x = AlgebraElement::from_fn(&sft, w, |i, j, p, q| ((i + 2 * j + p + 3 * q) % 3) as f64).unwrap();
        let tab = asymptotic_commutation_check(&sft, &x, &x.adjoint(), 5).unwrap();
        assert!(tab.vanishes_beyond_hull);
        assert!(tab.rows.iter().any(|r| r.0 == 0 && r.1 > 0.0));
        assert!(tab.last_nonzero.unwrap() < 3);
    }
}
