//! Clopen towers `C, sigma(C), ..., sigma^{m-1}(C)` with `[C]` fixed by the
//! shift and `[1] - m[C] < [C]`.
//!
//! `C'` is the set of points whose first occurrence of a seed path `x`,
//! among the starting positions `0..Nm`, is at a position `k = m-1 mod m`.
//! Its translates by `1..m-1` are disjoint from it. A subset `E` of `C'` is
//! then removed so that `[C' \ E]` equals a prescribed fixed class exactly.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Caps;
use crate::error::{Error, Result};
use crate::k_theory::{class_of_clopen, classes_equal, vanishes_in_limit, K0Class, KTheory, Verdict};
use crate::linalg::QMat;
use crate::measure::ClopenSet;
use crate::sft_core::{Interval, Sft};

/// Longest seed path tried by the tower search.
pub const MAX_SEED_LEN: usize = 6;

/// Largest `N` tried by the literal parameter computation.
const LITERAL_N_CAP: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct Tower {
    pub base: ClopenSet,
    pub height: usize,
    pub class: K0Class,
    pub seed: Vec<u32>,
    pub big_n: usize,
    /// The first-occurrence set `C'`, at the window of `base`.
    pub first_occurrence: ClopenSet,
    /// The trimmed part `E = C' \ C`.
    pub trimmed: ClopenSet,
    pub report: TowerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiteralParameters {
    /// `1 - m tau(g)`.
    pub epsilon: f64,
    pub seed: Vec<u32>,
    pub big_n: usize,
    /// Window width `N m + |x| - 1` read by the first-occurrence rule.
    pub window_width: usize,
    pub within_cap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerReport {
    pub m: usize,
    /// `"dense"` when the class comes from the dense fixed class, otherwise
    /// `"identity multiple"`.
    pub class_source: String,
    pub class_trace: f64,
    pub seed: Vec<u32>,
    pub big_n: usize,
    pub window: [i64; 2],
    pub base_paths: usize,
    pub trimmed_paths: usize,
    pub base_measure: f64,
    /// `1 - m mu(C)`.
    pub remainder_measure: f64,
    pub disjoint: bool,
    pub fixed: bool,
    /// Power `n` with `T^n ((m+1)[C] - [1]) T^n >= 0` entrywise.
    pub order_certificate_power: Option<u32>,
    pub literal: LiteralParameters,
}

impl Tower {
    pub fn levels(&self) -> Vec<ClopenSet> {
        (0..self.height).map(|k| self.base.shift_by(k as i64)).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "height": self.height,
            "base": self.base.to_json(),
            "class": self.class.to_json(),
            "report": serde_json::to_value(&self.report).expect("serializable"),
        })
    }
}

fn kmp_table(x: &[u32]) -> Vec<usize> {
    let mut f = vec![0; x.len()];
    let mut k = 0;
    for i in 1..x.len() {
        while k > 0 && x[i] != x[k] {
            k = f[k - 1];
        }
        if x[i] == x[k] {
            k += 1;
        }
        f[i] = k;
    }
    f
}

fn kmp_step(x: &[u32], fail: &[usize], mut k: usize, e: u32) -> usize {
    if k == x.len() {
        k = fail[k - 1];
    }
    while k > 0 && x[k] != e {
        k = fail[k - 1];
    }
    if x[k] == e {
        k + 1
    } else {
        0
    }
}

/// The first-occurrence rule as an automaton over edges. `flag` is 0 before
/// the first occurrence, 1 if it started at a position `= m-1 mod m`, 2
/// otherwise.
struct Rule<'a> {
    x: &'a [u32],
    fail: Vec<usize>,
    m: usize,
    last_start: usize,
}

impl<'a> Rule<'a> {
    fn new(x: &'a [u32], big_n: usize, m: usize) -> Self {
        Rule {
            x,
            fail: kmp_table(x),
            m,
            last_start: big_n * m - 1,
        }
    }

    fn width(&self) -> usize {
        self.last_start + self.x.len()
    }

    /// State after reading edge `e` at position `t`.
    fn step(&self, (k, flag): (usize, u8), t: usize, e: u32) -> (usize, u8) {
        if flag != 0 {
            return (0, flag);
        }
        let k = kmp_step(self.x, &self.fail, k, e);
        if k == self.x.len() {
            let start = t + 1 - self.x.len();
            if start <= self.last_start {
                return (0, if start % self.m == self.m - 1 { 1 } else { 2 });
            }
        }
        (k, 0)
    }
}

/// Class of `C'` at the window `[0, Nm+|x|-2]`, by dynamic programming.
fn first_occurrence_counts(sft: &Sft, rule: &Rule) -> QMat {
    let r = sft.r();
    let xl = rule.x.len();
    let states = xl + 1;
    let idx = |v: usize, k: usize, f: u8| (v * states + k) * 3 + f as usize;
    let mut out = vec![vec![BigInt::zero(); r]; r];
    for i in 0..r {
        let mut cur = vec![BigInt::zero(); r * states * 3];
        cur[idx(i, 0, 0)] = BigInt::from(1);
        for t in 0..rule.width() {
            let mut next = vec![BigInt::zero(); r * states * 3];
            for v in 0..r {
                for k in 0..states {
                    for f in 0..3u8 {
                        let c = &cur[idx(v, k, f)];
                        if c.is_zero() {
                            continue;
                        }
                        for &e in sft.out_edges(v) {
                            let (k2, f2) = rule.step((k, f), t, e);
                            let w = sft.edge(e).target;
                            next[idx(w, k2, f2)] += c;
                        }
                    }
                }
            }
            cur = next;
        }
        for v in 0..r {
            for k in 0..states {
                out[i][v] += &cur[idx(v, k, 1)];
            }
        }
    }
    QMat::from_fn(r, r, |i, j| BigRational::from_integer(out[i][j].clone()))
}

/// The set `C'` itself, enumerated depth first with pruning.
fn first_occurrence_set(sft: &Sft, rule: &Rule, cap: u64) -> Result<ClopenSet> {
    let w = rule.width();
    let mut found: Vec<Vec<u32>> = Vec::new();
    let mut path: Vec<u32> = Vec::with_capacity(w);
    fn dfs(
        sft: &Sft,
        rule: &Rule,
        v: usize,
        state: (usize, u8),
        path: &mut Vec<u32>,
        found: &mut Vec<Vec<u32>>,
        cap: u64,
    ) -> Result<()> {
        let t = path.len();
        if t == rule.width() {
            if state.1 == 1 {
                if found.len() as u64 >= cap {
                    return Err(Error::Cap {
                        what: "first-occurrence set paths",
                        required: found.len() as u128 + 1,
                        cap: cap as u128,
                    });
                }
                found.push(path.clone());
            }
            return Ok(());
        }
        for &e in sft.out_edges(v) {
            let s = rule.step(state, t, e);
            if s.1 == 2 {
                continue;
            }
            path.push(e);
            dfs(sft, rule, sft.edge(e).target, s, path, found, cap)?;
            path.pop();
        }
        Ok(())
    }
    for v in 0..sft.r() {
        dfs(sft, rule, v, (0, 0), &mut path, &mut found, cap)?;
    }
    ClopenSet::from_paths(sft, Interval::new(0, w as i64 - 1)?, found)
}

fn total_count(m: &QMat) -> f64 {
    m.to_f64().iter().sum()
}

/// Smallest extension `[c-a, d+b]` of `window`, of width at most
/// `max_width`, containing the window of `target`, at which the pushed
/// representative of `target` is a nonnegative integer matrix dominated
/// entrywise by the pushed `counts`. Minimizes `a+b`, then `a`.
fn dominating_window(
    t: &QMat,
    counts: &QMat,
    window: Interval,
    target: &K0Class,
    max_width: usize,
    max_paths: u64,
) -> Option<(Interval, QMat, QMat)> {
    let h = window.hull(&target.window);
    let a0 = (window.a - h.a) as usize;
    let b0 = (h.b - window.b) as usize;
    let mut pows = vec![QMat::identity(t.rows())];
    for total in a0 + b0..=max_width.saturating_sub(window.width()) {
        for a in a0..=total - b0 {
            let b = total - a;
            while pows.len() <= a.max(b) {
                let next = &pows[pows.len() - 1] * t;
                pows.push(next);
            }
            let j = Interval::new(window.a - a as i64, window.b + b as i64).expect("valid");
            let c = &(&pows[a] * counts) * &pows[b];
            if total_count(&c) > max_paths as f64 {
                return None;
            }
            let g = target.push(t, j).expect("hull contained");
            if !g.rep.is_integral() || !g.rep.is_nonneg() {
                continue;
            }
            let diff = &c - &g.rep;
            if diff.is_nonneg() {
                return Some((j, c, g.rep));
            }
        }
    }
    None
}

/// A subset `E` of `c` with `[E] = target` exactly. The window of `c` is
/// extended as little as possible until the pushed representative of
/// `target` is an integer matrix below the per-block path counts; within a
/// block, the first paths in canonical order are taken.
pub fn select_subclopen_with_class(
    sft: &Sft,
    kt: &KTheory,
    c: &ClopenSet,
    target: &K0Class,
    caps: &Caps,
) -> Result<ClopenSet> {
    let t = kt.t();
    if vanishes_in_limit(t, &target.rep) {
        return Ok(ClopenSet::empty(c.window()));
    }
    let cls = class_of_clopen(sft, c);
    if classes_equal(t, &cls, target) {
        return Ok(c.clone());
    }
    let Some((j, _, want)) = dominating_window(
        t,
        &cls.rep,
        c.window(),
        target,
        caps.clopen_window as usize,
        caps.paths,
    ) else {
        let deficit = target.sub(&cls, t);
        return Err(Error::Infeasible(format!(
            "no window of width <= {} realizes the class; deficit {:?} at {}",
            caps.clopen_window, deficit.rep, deficit.window
        )));
    };
    let refined = c.refine(sft, j, caps.paths)?;
    let r = sft.r();
    let mut need: Vec<u64> = (0..r * r)
        .map(|k| want.get(k / r, k % r).to_integer().to_u64().expect("small count"))
        .collect();
    let mut chosen = Vec::new();
    for p in refined.members() {
        let i = sft.edge(p[0]).source;
        let jv = sft.edge(*p.last().expect("nonempty")).target;
        if need[i * r + jv] > 0 {
            need[i * r + jv] -= 1;
            chosen.push(p.clone());
        }
    }
    if need.iter().any(|&k| k > 0) {
        return Err(Error::Verification("per-block selection fell short".into()));
    }
    ClopenSet::from_paths(sft, j, chosen)
}

/// Exact test of `C` and `sigma^d(C)` being disjoint, `d >= 1`, without
/// refining to the common window.
pub fn shift_disjoint(sft: &Sft, c: &ClopenSet, d: usize) -> bool {
    let w = c.window().width();
    if d < w {
        let prefixes: HashSet<&[u32]> = c.members().iter().map(|y| &y[..w - d]).collect();
        !c.members().iter().any(|y| prefixes.contains(&y[d..]))
    } else {
        // sigma^d(C) lies strictly to the left; points of both exist iff
        // some end vertex reaches some start vertex in exactly d - w steps.
        let gap = (d - w) as u32;
        let starts: HashSet<usize> = c.members().iter().map(|y| sft.edge(y[0]).source).collect();
        let ends: HashSet<usize> = c
            .members()
            .iter()
            .map(|y| sft.edge(*y.last().expect("nonempty")).target)
            .collect();
        !ends
            .iter()
            .any(|&i| starts.iter().any(|&j| sft.count_paths(i, j, gap).is_positive()))
    }
}

/// Fixed classes `g` with `m g < [1] < (m+1) g` tried by the search: the
/// dense fixed class first, then least multiples `k I` of the identity at
/// windows `[1,w]`.
fn candidate_classes(kt: &KTheory, m: usize, caps: &Caps) -> Result<Vec<(K0Class, &'static str)>> {
    let mut out = vec![(kt.dense_fixed_class(m as u64)?.g, "dense")];
    let r = kt.t().rows();
    for w in 1..=caps.clopen_window as i64 {
        let window = Interval::new(1, w)?;
        let id = K0Class::new(window, QMat::identity(r))?;
        let one = kt.unit(window);
        let ratio = kt.trace_of_class(&one) / kt.trace_of_class(&id);
        let mut k = ((ratio / (m + 1) as f64).floor() as i64).max(1);
        while !kt.less(&one, &id.scale(k * (m as i64 + 1)))? {
            k += 1;
        }
        while k > 1 && kt.less(&one, &id.scale((k - 1) * (m as i64 + 1)))? {
            k -= 1;
        }
        let g = id.scale(k);
        if kt.less(&g.scale(m as i64), &one)? {
            out.push((g, "identity multiple"));
        }
    }
    Ok(out)
}

struct Candidate {
    width: usize,
    seed: Vec<u32>,
    big_n: usize,
}

fn search(sft: &Sft, kt: &KTheory, m: usize, g: &K0Class, caps: &Caps) -> Option<Candidate> {
    let t = kt.t();
    let tau_g = kt.trace_of_class(g);
    let max_w = caps.clopen_window as usize;
    let mut best: Option<Candidate> = None;
    for xl in 1..=MAX_SEED_LEN {
        let Ok(seeds) = sft.all_paths(xl, caps.paths) else {
            break;
        };
        for x in seeds {
            for big_n in 1.. {
                let w = big_n * m + xl - 1;
                if w > max_w || best.as_ref().is_some_and(|b| w > b.width) {
                    break;
                }
                let rule = Rule::new(&x.edges, big_n, m);
                let counts = first_occurrence_counts(sft, &rule);
                let window = Interval::new(0, w as i64 - 1).expect("valid");
                let cls = K0Class::new(window, counts.clone()).expect("square");
                if kt.trace_of_class(&cls) < tau_g - 1e-12 {
                    continue;
                }
                let limit = best.as_ref().map_or(max_w, |b| b.width);
                if let Some((j, _, _)) = dominating_window(t, &counts, window, g, limit, caps.paths) {
                    let better = best.as_ref().is_none_or(|b| j.width() < b.width);
                    if better {
                        best = Some(Candidate {
                            width: j.width(),
                            seed: x.edges.clone(),
                            big_n,
                        });
                    }
                }
            }
        }
    }
    best
}

/// Parameters the proof itself prescribes: `x` with
/// `(m-1) mu(cyl(x)) < eps/2` and `N` with
/// `mu(union_{k<Nm} cyl(x,k)) > 1 - eps/2`.
fn literal_parameters(sft: &Sft, kt: &KTheory, m: usize, g: &K0Class, caps: &Caps) -> LiteralParameters {
    let pd = kt.perron();
    let eps = 1.0 - m as f64 * kt.trace_of_class(g);
    let cyl = |p: &crate::sft_core::Path| pd.path_measure(p.len(), sft.initial(p), sft.terminal(p));
    let mut seed = Vec::new();
    for len in 1..=64 {
        let Ok(paths) = sft.all_paths(len, caps.paths) else {
            break;
        };
        let x = paths
            .into_iter()
            .min_by(|a, b| cyl(a).total_cmp(&cyl(b)))
            .expect("nonempty");
        if (m - 1) as f64 * cyl(&x) < eps / 2.0 {
            seed = x.edges;
            break;
        }
    }
    if seed.is_empty() {
        return LiteralParameters {
            epsilon: eps,
            seed,
            big_n: 0,
            window_width: 0,
            within_cap: false,
        };
    }
    // Probability that an occurrence starts at or before position s.
    let fail = kmp_table(&seed);
    let r = sft.r();
    let states = seed.len() + 1;
    let mut dist = vec![0.0f64; r * states];
    let mut hit = 0.0;
    let mut big_n = 0;
    let stationary = pd.stationary();
    for (v, &s) in stationary.iter().enumerate() {
        dist[v * states] = s;
    }
    for t in 0..LITERAL_N_CAP * m {
        let mut next = vec![0.0f64; r * states];
        for v in 0..r {
            for k in 0..states {
                let p = dist[v * states + k];
                if p == 0.0 {
                    continue;
                }
                for &e in sft.out_edges(v) {
                    let q = p * pd.transition_probability(sft, e);
                    let k2 = kmp_step(&seed, &fail, k, e);
                    if k2 == seed.len() {
                        hit += q;
                    } else {
                        next[sft.edge(e).target * states + k2] += q;
                    }
                }
            }
        }
        dist = next;
        if t + 1 >= seed.len() {
            let start = t + 1 - seed.len();
            if start % m == m - 1 && hit > 1.0 - eps / 2.0 {
                big_n = start / m + 1;
                break;
            }
        }
    }
    let window_width = if big_n > 0 { big_n * m + seed.len() - 1 } else { 0 };
    LiteralParameters {
        epsilon: eps,
        seed,
        big_n,
        window_width,
        within_cap: big_n > 0 && window_width <= caps.clopen_window as usize,
    }
}

/// Builds a tower of height `m` with all three invariants verified exactly.
pub fn build_tower(sft: &Sft, kt: &KTheory, m: usize, caps: &Caps) -> Result<Tower> {
    if m == 0 {
        return Err(Error::InvalidInput("tower height must be positive".into()));
    }
    let t = kt.t();
    let candidates = candidate_classes(kt, m, caps)?;
    let mut chosen: Option<(Candidate, &K0Class, &str)> = None;
    for (g, source) in &candidates {
        if let Some(c) = search(sft, kt, m, g, caps) {
            let better = chosen.as_ref().is_none_or(|(b, _, _)| c.width < b.width);
            if better {
                chosen = Some((c, g, source));
            }
        }
        // The dense fixed class is used whenever it admits a tower.
        if chosen.is_some() && *source == "dense" {
            break;
        }
    }
    let dense = &candidates[0].0;
    let literal = literal_parameters(sft, kt, m, dense, caps);
    let Some((cand, g, source)) = chosen else {
        return Err(Error::Cap {
            what: "tower window",
            required: literal.window_width.max(caps.clopen_window as usize + 1) as u128,
            cap: caps.clopen_window as u128,
        });
    };

    let rule = Rule::new(&cand.seed, cand.big_n, m);
    let cprime = first_occurrence_set(sft, &rule, caps.paths)?;
    let cls = class_of_clopen(sft, &cprime);
    let excess = cls.sub(g, t);
    let trimmed = select_subclopen_with_class(sft, kt, &cprime, &excess, caps)?;
    let cprime = cprime.refine(sft, trimmed.window(), caps.paths)?;
    let base = cprime.difference(&trimmed, sft, caps.paths)?;
    let class = class_of_clopen(sft, &base);
    if !classes_equal(t, &class, g) {
        return Err(Error::Verification("trimmed set misses the target class".into()));
    }

    let disjoint = (1..m).all(|d| shift_disjoint(sft, &base, d));
    let fixed = kt.is_alpha_fixed(&class);
    let diff = class.scale(m as i64 + 1).sub(&kt.unit(class.window), t);
    let order_certificate_power = match kt.positivity_certificate(&diff.rep) {
        Some((Verdict::Positive, n)) if !vanishes_in_limit(t, &diff.rep) => Some(n),
        _ => None,
    };
    if !disjoint || !fixed || order_certificate_power.is_none() {
        return Err(Error::Verification(format!(
            "tower invariants: disjoint {disjoint}, fixed {fixed}, order {}",
            order_certificate_power.is_some()
        )));
    }
    let pd = kt.perron();
    let base_measure = base.measure(sft, pd);
    let report = TowerReport {
        m,
        class_source: source.to_string(),
        class_trace: kt.trace_of_class(g),
        seed: cand.seed.clone(),
        big_n: cand.big_n,
        window: [base.window().a, base.window().b],
        base_paths: base.len(),
        trimmed_paths: trimmed.len(),
        base_measure,
        remainder_measure: 1.0 - m as f64 * base_measure,
        disjoint,
        fixed,
        order_certificate_power,
        literal,
    };
    Ok(Tower {
        base,
        height: m,
        class,
        seed: cand.seed,
        big_n: cand.big_n,
        first_occurrence: cprime,
        trimmed,
        report,
    })
}
