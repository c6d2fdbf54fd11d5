//! Exact stacks from towers: the levels `sigma^i(C)`, a pairing `q` of the
//! base with the first level and a pairing `p` of the remainder with a part
//! of the base, all as bijections of cylinder paths. The algebra relations
//! then hold exactly; they are re-checked combinatorially and, for small
//! windows, by multiplying the materialized matrices.

use std::collections::BTreeMap;

use serde::Serialize;

use super::tower::{build_tower, select_subclopen_with_class, Tower};
use crate::af_algebra::{projection_defect, AlgebraElement};
use crate::config::Caps;
use crate::error::{Error, Result};
use crate::k_theory::{class_of_clopen, KTheory};
use crate::linalg::QMat;
use crate::measure::ClopenSet;
use crate::sft_core::{Interval, Sft};

/// Largest total dimension materialized for the algebra cross-check.
const MATERIALIZE_DIM: usize = 1024;

/// A partial isometry given by a bijection of cylinder paths on one window:
/// each pair `(x, y)` contributes the matrix unit carrying `x` to `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPairing {
    pub window: Interval,
    pub pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

fn ends(sft: &Sft, p: &[u32]) -> (usize, usize) {
    (sft.edge(p[0]).source, sft.edge(*p.last().expect("nonempty path")).target)
}

impl PathPairing {
    /// Pairs the members of `dom` and `ran`, which share a window, block by
    /// block in canonical order. With `sub` set, `ran` may have more members
    /// in a block and the leftovers stay unpaired.
    pub fn between(sft: &Sft, dom: &ClopenSet, ran: &ClopenSet, sub: bool) -> Result<Self> {
        if dom.window() != ran.window() {
            return Err(Error::InvalidInput("pairing needs a common window".into()));
        }
        let mut by_block: BTreeMap<(usize, usize), (Vec<&Vec<u32>>, Vec<&Vec<u32>>)> = BTreeMap::new();
        for p in dom.members() {
            by_block.entry(ends(sft, p)).or_default().0.push(p);
        }
        for p in ran.members() {
            by_block.entry(ends(sft, p)).or_default().1.push(p);
        }
        let mut pairs = Vec::with_capacity(dom.len());
        for (d, r) in by_block.values() {
            if d.len() > r.len() || (!sub && d.len() != r.len()) {
                return Err(Error::RankMismatch(d.len(), r.len()));
            }
            pairs.extend(d.iter().zip(r).map(|(x, y)| ((*x).clone(), (*y).clone())));
        }
        Ok(PathPairing { window: dom.window(), pairs })
    }

    pub fn domain(&self, sft: &Sft) -> Result<ClopenSet> {
        ClopenSet::from_paths(sft, self.window, self.pairs.iter().map(|p| p.0.clone()))
    }

    pub fn range(&self, sft: &Sft) -> Result<ClopenSet> {
        ClopenSet::from_paths(sft, self.window, self.pairs.iter().map(|p| p.1.clone()))
    }

    /// Whether every pair stays in one block and no path is used twice.
    pub fn is_partial_bijection(&self, sft: &Sft) -> bool {
        let mut seen_d = std::collections::HashSet::new();
        let mut seen_r = std::collections::HashSet::new();
        self.pairs.iter().all(|(x, y)| {
            x.len() == self.window.width()
                && y.len() == x.len()
                && ends(sft, x) == ends(sft, y)
                && seen_d.insert(x)
                && seen_r.insert(y)
        })
    }

    /// The same operator on a larger window: every pair is extended by all
    /// common prefixes and suffixes.
    pub fn refine(&self, sft: &Sft, j: Interval, cap: u64) -> Result<Self> {
        if !j.contains(&self.window) {
            return Err(Error::InvalidInput(format!("{j} does not contain {}", self.window)));
        }
        let left = (self.window.a - j.a) as usize;
        let right = (j.b - self.window.b) as usize;
        let r = sft.r();
        let mut pre: Vec<Vec<Vec<u32>>> = vec![Vec::new(); r];
        let mut post: Vec<Vec<Vec<u32>>> = vec![Vec::new(); r];
        for a in 0..r {
            for b in 0..r {
                pre[b].extend(sft.enumerate_paths(a, b, left, cap)?.into_iter().map(|p| p.edges));
                post[a].extend(sft.enumerate_paths(a, b, right, cap)?.into_iter().map(|p| p.edges));
            }
        }
        let total: usize = self
            .pairs
            .iter()
            .map(|(x, _)| {
                let (i, t) = ends(sft, x);
                pre[i].len() * post[t].len()
            })
            .sum();
        if total as u64 > cap {
            return Err(Error::Cap {
                what: "pairing refinement",
                required: total as u128,
                cap: cap as u128,
            });
        }
        let glue = |u: &[u32], x: &[u32], v: &[u32]| [u, x, v].concat();
        let mut pairs = Vec::with_capacity(total);
        for (x, y) in &self.pairs {
            let (i, t) = ends(sft, x);
            for u in &pre[i] {
                for v in &post[t] {
                    pairs.push((glue(u, x, v), glue(u, y, v)));
                }
            }
        }
        pairs.sort();
        Ok(PathPairing { window: j, pairs })
    }

    pub fn to_algebra(&self, sft: &Sft) -> Result<AlgebraElement> {
        let counts = sft.counts(self.window.width())?;
        let mut e = AlgebraElement::zero(sft, self.window)?;
        for (x, y) in &self.pairs {
            let (px, py) = (sft.path(x.clone())?, sft.path(y.clone())?);
            let (i, j) = ends(sft, x);
            let (a, b) = (sft.path_rank(&py, &counts) as usize, sft.path_rank(&px, &counts) as usize);
            e.block_mut(i, j)[(a, b)] = 1.0;
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcreteStackReport {
    pub len: usize,
    /// Hull of the level windows.
    pub window: [i64; 2],
    pub q_window: [i64; 2],
    pub p_window: [i64; 2],
    pub level_paths: usize,
    pub remainder_paths: usize,
    /// Paths of the base at the window of `p` left outside the range of `p`.
    pub base_surplus_paths: usize,
    pub levels_disjoint: bool,
    pub advance_exact: bool,
    pub q_exact: bool,
    pub p_exact: bool,
    pub p_proper: bool,
    pub tower_rebuilt: bool,
    /// Largest defect of the stack relations after materializing every
    /// element at a common window; absent when that window is too large.
    pub algebra_defect: Option<f64>,
}

/// Levels `sigma^i(C)` for `i < L`, the remainder `R`, and the pairings
/// `q: C -> sigma(C)` and `p: R -> E` with `E` a proper subset of `C`.
#[derive(Debug, Clone)]
pub struct ConcreteStack {
    pub levels: Vec<ClopenSet>,
    pub remainder: ClopenSet,
    pub q: PathPairing,
    pub p: PathPairing,
    pub report: ConcreteStackReport,
}

/// Smallest extension of `window` on which the pushed `a` and `b` agree.
fn matching_window(t: &QMat, a: &QMat, b: &QMat, window: Interval, caps: &Caps) -> Option<Interval> {
    let max_extra = (caps.clopen_window as usize).checked_sub(window.width())?;
    let mut pows = vec![QMat::identity(t.rows())];
    for total in 0..=max_extra {
        for l in 0..=total {
            let r = total - l;
            while pows.len() <= l.max(r) {
                let next = &pows[pows.len() - 1] * t;
                pows.push(next);
            }
            let pa = &(&pows[l] * a) * &pows[r];
            if pa == &(&pows[l] * b) * &pows[r] {
                return Some(Interval::new(window.a - l as i64, window.b + r as i64).expect("valid"));
            }
        }
    }
    None
}

fn iv(w: Interval) -> [i64; 2] {
    [w.a, w.b]
}

/// The stack `e_i = chi(sigma^i(C))`, `i < len`, of a tower, with `q` and
/// `p` realized as path bijections. The tower is rebuilt at height `len`
/// if its height differs.
pub fn stack_from_tower(sft: &Sft, kt: &KTheory, tower: &Tower, len: usize, caps: &Caps) -> Result<ConcreteStack> {
    let tower_rebuilt = tower.height != len;
    let rebuilt;
    let tower = if tower.height == len {
        tower
    } else {
        rebuilt = build_tower(sft, kt, len, caps)?;
        &rebuilt
    };
    let t = kt.t();
    let cap = caps.paths;
    let raw = tower.levels();
    let hull = raw.iter().fold(raw[0].window(), |h, l| h.hull(&l.window()));
    let base_h = raw[0].refine(sft, hull, cap)?;
    let next_h = tower.base.shift_by(1).refine(sft, hull.hull(&hull.shifted(-1)), cap)?;
    let levels: Vec<ClopenSet> = raw.iter().map(|l| l.refine(sft, hull, cap)).collect::<Result<_>>()?;
    let mut union = ClopenSet::empty(hull);
    let mut total = 0;
    for l in &levels {
        total += l.len();
        union = union.union(l, sft, cap)?;
    }
    let levels_disjoint = union.len() == total;
    let remainder = union.complement(sft, cap)?;

    // q: the base and its image, pushed until the per-block counts agree.
    let qh = next_h.window();
    let base_q = base_h.refine(sft, qh, cap)?;
    let (c0, c1) = (class_of_clopen(sft, &base_q), class_of_clopen(sft, &next_h));
    let qw = matching_window(t, &c0.rep, &c1.rep, qh, caps).ok_or(Error::Cap {
        what: "window matching the base with its shift",
        required: caps.clopen_window as u128 + 1,
        cap: caps.clopen_window as u128,
    })?;
    let (dom, ran) = (base_q.refine(sft, qw, cap)?, next_h.refine(sft, qw, cap)?);
    let q = PathPairing::between(sft, &dom, &ran, false)
        .map_err(|e| Error::Verification(format!("matched counts failed to pair: {e}")))?;

    // p: the remainder into a subset of the base with the same class.
    let target = class_of_clopen(sft, &remainder);
    let e = select_subclopen_with_class(sft, kt, &base_h, &target, caps)?;
    let pw = e.window();
    let rest_p = remainder.refine(sft, pw, cap)?;
    let base_p = base_h.refine(sft, pw, cap)?;
    let p = PathPairing::between(sft, &rest_p, &e, false)
        .map_err(|err| Error::Verification(format!("selected subset failed to pair: {err}")))?;

    let advance_exact = levels
        .windows(2)
        .enumerate()
        .all(|(i, w)| raw[i].shift_by(1).set_equal(&w[1], sft, cap).unwrap_or(false));
    let q_exact = q.is_partial_bijection(sft) && q.domain(sft)? == dom && q.range(sft)? == ran;
    let p_range = p.range(sft)?;
    let p_exact = p.is_partial_bijection(sft) && p.domain(sft)? == rest_p && p_range.is_subset(&base_p, sft, cap)?;
    let base_surplus_paths = base_p.len() - p_range.len().min(base_p.len());
    let p_proper = base_surplus_paths > 0;

    let mut stack = ConcreteStack {
        levels,
        remainder,
        q,
        p,
        report: ConcreteStackReport {
            len,
            window: iv(hull),
            q_window: iv(qw),
            p_window: iv(pw),
            level_paths: base_h.len(),
            remainder_paths: rest_p.len(),
            base_surplus_paths,
            levels_disjoint,
            advance_exact,
            q_exact,
            p_exact,
            p_proper,
            tower_rebuilt,
            algebra_defect: None,
        },
    };
    if !(levels_disjoint && advance_exact && q_exact && p_exact && p_proper) {
        return Err(Error::Verification(format!("concrete stack relations: {:?}", stack.report)));
    }
    stack.report.algebra_defect = stack.algebra_defect(sft, caps)?;
    if let Some(d) = stack.report.algebra_defect {
        if d > 1e-12 {
            return Err(Error::Verification(format!("materialized stack relations: defect {d:.3e}")));
        }
    }
    Ok(stack)
}

impl ConcreteStack {
    /// Common window of all elements.
    pub fn window(&self) -> Interval {
        let h = self.levels[0].window();
        h.hull(&self.q.window).hull(&self.p.window)
    }

    /// Materializes the stack at its common window, or `None` when that
    /// window exceeds the dense caps.
    pub fn to_algebra(&self, sft: &Sft, caps: &Caps) -> Result<Option<MaterializedStack>> {
        let w = self.window();
        if w.width() > caps.window as usize {
            return Ok(None);
        }
        let counts = sft.counts(w.width())?;
        let r = sft.r();
        let dim: u128 = (0..r * r).map(|k| counts.get(w.width(), k / r, k % r)).sum();
        if dim > MATERIALIZE_DIM as u128 {
            return Ok(None);
        }
        let cap = caps.paths;
        let proj = |c: &ClopenSet| AlgebraElement::clopen_to_projection(sft, &c.refine(sft, w, cap)?);
        let e = self.levels.iter().map(proj).collect::<Result<Vec<_>>>()?;
        let remainder = proj(&self.remainder)?;
        let q = self.q.refine(sft, w, cap)?.to_algebra(sft)?;
        let p = self.p.refine(sft, w, cap)?.to_algebra(sft)?;
        Ok(Some(MaterializedStack { e, remainder, q, p }))
    }

    fn algebra_defect(&self, sft: &Sft, caps: &Caps) -> Result<Option<f64>> {
        let Some(ms) = self.to_algebra(sft, caps)? else {
            return Ok(None);
        };
        Ok(Some(ms.defect(sft)?))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "report": self.report,
            "base": self.levels[0].to_json(),
            "remainder": self.remainder.to_json(),
        })
    }
}

/// The stack as dense algebra elements on one window.
#[derive(Debug, Clone)]
pub struct MaterializedStack {
    pub e: Vec<AlgebraElement>,
    pub remainder: AlgebraElement,
    pub q: AlgebraElement,
    pub p: AlgebraElement,
}

impl MaterializedStack {
    /// Largest entrywise defect of the stack relations, with `alpha(e_i)`
    /// compared to `e_{i+1}` on the hull of their windows.
    pub fn defect(&self, sft: &Sft) -> Result<f64> {
        let e0 = &self.e[0];
        let sum = self.e[1..].iter().fold(e0.clone(), |a, x| a.add(x));
        let mut d = projection_defect(&sum).max(sum.add(&self.remainder).max_abs_diff(&e0.one()));
        for x in &self.e {
            d = d.max(projection_defect(x));
        }
        for w in self.e.windows(2) {
            let a = w[0].shift_auto();
            let h = a.window().hull(&w[1].window());
            d = d.max(a.embed(sft, h)?.max_abs_diff(&w[1].embed(sft, h)?));
        }
        let e1 = e0.shift_auto();
        let h = e1.window().hull(&self.q.window());
        let qs = self.q.adjoint();
        d = d.max(qs.mul(&self.q).max_abs_diff(e0));
        d = d.max(self.q.mul(&qs).embed(sft, h)?.max_abs_diff(&e1.embed(sft, h)?));
        let pp = self.p.mul(&self.p.adjoint());
        d = d.max(self.p.adjoint().mul(&self.p).max_abs_diff(&self.remainder));
        d = d.max(e0.mul(&pp).max_abs_diff(&pp));
        Ok(d)
    }
}
