//! Tower, exact stack, cyclic stack and refinement composed into one run,
//! with the parameters taken from the target accuracy and clamped to the
//! caps.
//!
//! The clopen tower and its stack are built and verified on the shift
//! itself. The long stack needed by the cyclic construction is realized on
//! the finite operator model, which satisfies the same relations exactly.

use std::f64::consts::PI;

use serde::Serialize;

use super::cyclic::{build_cyclic_stack, CyclicReport};
use super::model::StackModel;
use super::refine::{refine_to_rohlin_partition, RefineReport, RefinedPartition};
use super::sparse::Op;
use super::stack::{stack_from_tower, ConcreteStackReport};
use super::tower::{build_tower, TowerReport};
use super::verify::{verify_rohlin_partition, PartitionVerdict};
use crate::af_algebra::{AlgebraElement, Operator};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::k_theory::KTheory;
use crate::sft_core::{Interval, Sft, TransitionMatrix};

/// `l` used for the cyclic stack feeding the refinement: the smallest value
/// whose cyclic defect `sqrt(2l-1)/l` is below `1/2`, which the snapping of
/// the moved remainder isometries requires.
pub const CYCLIC_ELL: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateBounds {
    /// `1/l + 1/sqrt(l)` at the cyclic-stack `l`.
    pub cyclic: f64,
    /// `7n/sqrt(l)`.
    pub d0: f64,
    /// `2 pi/(nm)`.
    pub u_minus_v: f64,
    /// `3(mn+1)^2/sqrt(l) + 4 pi/(nm)`.
    pub d1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RohlinReport {
    pub matrix: Vec<Vec<i64>>,
    pub m: usize,
    pub heights: [usize; 2],
    pub epsilon_requested: f64,
    /// Least `n > 8 pi/(m eps)` with `n = 1 mod m+1`.
    pub estimate_n: u64,
    /// Least integer `l > 36 (mn+1)^4 / eps^2` at `estimate_n`.
    pub estimate_ell: f64,
    pub n: usize,
    pub ell: usize,
    pub cyclic_ell: usize,
    /// The parameters were clamped below the values the estimates ask for.
    pub bound_limited: bool,
    pub model_dim: usize,
    pub tower: TowerReport,
    pub stack: ConcreteStackReport,
    pub cyclic: CyclicReport,
    pub refine: RefineReport,
    pub bounds: EstimateBounds,
    pub within_estimates: bool,
    pub cyclic_within_estimate: bool,
    /// Power of the shift applied to the stack to separate its window from
    /// the probe windows.
    pub probe_shift: i64,
    pub stack_window_after_shift: [i64; 2],
    /// Either "measured" or "disjoint windows".
    pub commutator_certificate: String,
    /// Ranks of `e_{i,j}` in the operator model.
    pub element_ranks: Vec<Vec<f64>>,
    /// Smallest accuracy, to three decimals, at which every clause holds.
    pub achieved_epsilon: f64,
    /// The accuracy at which the verdict is given: the requested one if it
    /// is met, otherwise the achieved one.
    pub epsilon: f64,
    pub verification: PartitionVerdict,
    pub meets_requested: bool,
    pub verdict: bool,
}

pub struct RohlinRun {
    pub report: RohlinReport,
    pub model: StackModel,
    pub partition: RefinedPartition<Op>,
}

/// `(n, l)` from the closing estimates of the construction.
pub fn estimated_parameters(m: usize, epsilon: f64) -> (u64, f64) {
    let k = (m + 1) as u64;
    let mut n = (8.0 * PI / (m as f64 * epsilon)).floor() as u64 + 1;
    while n % k != 1 % k {
        n += 1;
    }
    let mn1 = (m as u64 * n + 1) as f64;
    let ell = (36.0 * mn1.powi(4) / (epsilon * epsilon)).floor() + 1.0;
    (n, ell)
}

fn model_levels(m: usize, n: usize, ell: usize) -> usize {
    let len = n * ell * m;
    (CYCLIC_ELL - 1) * (len + 2) * len
}

/// Largest admissible `n`, then largest `l`, not above the estimates and
/// within the caps.
fn choose_parameters(m: usize, estimate_n: u64, estimate_ell: f64, cfg: &RunConfig) -> Option<(usize, usize)> {
    let caps = &cfg.caps;
    let n_max = (estimate_n.min(caps.n as u64)) as usize;
    let ell_max = estimate_ell.min(caps.ell as f64) as usize;
    for n in (1..=n_max).rev().filter(|n| n % (m + 1) == 1 % (m + 1)) {
        for ell in (5..=ell_max).rev() {
            if 2 * model_levels(m, n, ell) < caps.model_dim {
                return Some((n, ell));
            }
        }
    }
    None
}

fn iv(w: Interval) -> [i64; 2] {
    [w.a, w.b]
}

/// Builds and certifies a partition into towers of heights `m` and `m+1`.
/// Probe elements are separated from the stack by a power of the shift;
/// their commutators are measured when the common window is small enough
/// and otherwise vanish because the windows are disjoint.
pub fn rohlin_pipeline(
    t: &TransitionMatrix,
    m: usize,
    epsilon: f64,
    probes: &[AlgebraElement],
    cfg: &RunConfig,
) -> Result<RohlinRun> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::InvalidInput("m must be positive".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let caps = &cfg.caps;
    let kt = KTheory::new(t, caps, &cfg.tol)?;
    let sft = Sft::new(t.clone());

    let (estimate_n, estimate_ell) = estimated_parameters(m, epsilon);
    let (n, ell) = choose_parameters(m, estimate_n, estimate_ell, cfg).ok_or(Error::Cap {
        what: "operator model size",
        required: 2 * model_levels(m, 1, 5) as u128 + 1,
        cap: caps.model_dim as u128,
    })?;
    let bound_limited = (n as u64) < estimate_n || (ell as f64) < estimate_ell;

    let tower = build_tower(&sft, &kt, m, caps)?;
    let stack = stack_from_tower(&sft, &kt, &tower, m, caps)?;

    let len = n * ell * m;
    let model = StackModel::minimal(model_levels(m, n, ell))?;
    let alpha = |x: &Op| model.alpha(x);
    let cs = build_cyclic_stack(&model.stack(), alpha, len, CYCLIC_ELL, cfg.seed)?;
    let partition = refine_to_rohlin_partition(&cs.f, &cs.r, alpha, m, n, ell)?;
    let rr = &partition.report;
    if !rr.within_bounds(cfg.tol.slack) {
        return Err(Error::Verification(format!(
            "measured defects exceed the estimates: d0 {} > {}, d1 {} > {} or |u-v| {} > {}",
            rr.d0, rr.d0_bound, rr.d1, rr.d1_bound, rr.u_minus_v, rr.u_minus_v_bound
        )));
    }

    // Move the stack left of every probe window.
    let sw = stack.window();
    let mut probe_shift = 0i64;
    while probes.iter().any(|x| !sw.shifted(-probe_shift).disjoint(&x.window())) {
        probe_shift += 1;
    }
    let shifted = sw.shifted(-probe_shift);
    let mut commutator = 0.0f64;
    let mut certificate = "disjoint windows";
    if !probes.is_empty() {
        let hull = probes.iter().fold(shifted, |h, x| h.hull(&x.window()));
        if hull.width() <= caps.window as usize {
            if let Some(ms) = stack.to_algebra(&sft, caps)? {
                let gens = ms.e.iter().chain([&ms.q, &ms.p, &ms.remainder]);
                let gens: Vec<AlgebraElement> = gens
                    .map(|g| g.shift_by(probe_shift).embed(&sft, hull))
                    .collect::<Result<_>>()?;
                for x in probes {
                    let x = x.embed(&sft, hull)?;
                    for g in &gens {
                        let c = x.mul(g).sub(&g.mul(&x));
                        commutator = commutator.max(if c.is_zero() { 0.0 } else { c.op_norm() });
                    }
                }
                certificate = "measured";
            }
        }
    }

    let measured = rr.d0.max(rr.d1).max(commutator);
    let achieved_epsilon = (measured * 1000.0).floor() / 1000.0 + 0.001;
    let meets_requested = measured < epsilon;
    let eps = if meets_requested { epsilon } else { achieved_epsilon };
    let mut verification = verify_rohlin_partition(&partition.towers, alpha, eps, &[]);
    verification.probes = probes.len();
    verification.commutator = commutator;
    if !(commutator < eps) {
        verification.verdict = false;
        verification.violated.push(format!("commutator with probe set: {commutator:.6} >= {eps}"));
    }
    let element_ranks = partition
        .towers
        .iter()
        .map(|tw| tw.iter().map(|e| e.rank()).collect())
        .collect();
    let (nf, mf) = (n as f64, m as f64);
    let bounds = EstimateBounds {
        cyclic: cs.report.cyclic_bound,
        d0: rr.d0_bound,
        u_minus_v: 2.0 * PI / (nf * mf),
        d1: rr.d1_bound,
    };
    let report = RohlinReport {
        matrix: t.rows(),
        m,
        heights: [m, m + 1],
        epsilon_requested: epsilon,
        estimate_n,
        estimate_ell,
        n,
        ell,
        cyclic_ell: CYCLIC_ELL,
        bound_limited,
        model_dim: model.dim(),
        tower: tower.report.clone(),
        stack: stack.report.clone(),
        cyclic: cs.report.clone(),
        refine: rr.clone(),
        bounds,
        within_estimates: rr.within_bounds(cfg.tol.slack),
        cyclic_within_estimate: cs.report.within_cyclic_bound,
        probe_shift,
        stack_window_after_shift: iv(shifted),
        commutator_certificate: certificate.to_string(),
        element_ranks,
        achieved_epsilon,
        epsilon: eps,
        verdict: verification.verdict,
        verification,
        meets_requested,
    };
    Ok(RohlinRun { report, model, partition })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_follow_the_estimates() {
        let (n, ell) = estimated_parameters(2, 0.5);
        assert_eq!(n % 3, 1);
        assert!(n as f64 > 8.0 * PI / 1.0);
        assert!(ell > 36.0 * ((2 * n + 1) as f64).powi(4) / 0.25);
        let cfg = RunConfig::default();
        assert_eq!(choose_parameters(2, n, ell, &cfg), Some((1, 9)));
        assert_eq!(choose_parameters(3, 100, 1e9, &cfg), Some((1, 6)));
        let mut small = RunConfig::default();
        small.caps.model_dim = 100;
        assert_eq!(choose_parameters(2, n, ell, &small), None);
    }
}
