//! End-to-end acceptance checks. Each check prints one PASS or FAIL line;
//! the process exits nonzero if any check fails.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sftk::af_algebra::{
    align_families, conjugating_unitary, orthogonalize_projection, snap_partial_isometry, AlgebraElement, Operator,
};
use sftk::config::RunConfig;
use sftk::k_theory::{class_of_clopen, infinitesimal_rank, vanishes_in_limit, K0Class, KTheory, Verdict};
use sftk::linalg::QMat;
use sftk::measure::{cylinder_measure, perron_data, Cylinder};
use sftk::rohlin::{
    asymptotic_commutation_check, build_cyclic_stack, build_tower, rohlin_pipeline, verify_rohlin_partition,
    StackModel,
};
use sftk::sft_core::{Interval, Path, Sft, TransitionMatrix};
use sftk::shift_equiv::{full_shift_test, search_se, verify_se, SearchBounds, SearchOutcome, SeCertificate};

type Outcome = Result<String, String>;

const SLACK: f64 = 1e-9;

const LEMMAS: [&str; 4] = ["orthogonalize", "conjugate", "align families", "snap"];

fn tm(rows: &[&[i64]]) -> TransitionMatrix {
    TransitionMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn golden() -> TransitionMatrix {
    tm(&[&[1, 1], &[1, 0]])
}

fn iv(a: i64, b: i64) -> Interval {
    Interval::new(a, b).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

/// Plain integer matrix power, independent of the library.
fn naive_power(t: &TransitionMatrix, k: usize) -> Vec<Vec<i64>> {
    let a = t.rows();
    let r = a.len();
    let mut p: Vec<Vec<i64>> = (0..r).map(|i| (0..r).map(|j| (i == j) as i64).collect()).collect();
    for _ in 0..k {
        p = (0..r)
            .map(|i| (0..r).map(|j| (0..r).map(|l| p[i][l] * a[l][j]).sum()).collect())
            .collect();
    }
    p
}

fn path_counts() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for t in [golden(), tm(&[&[0, 1], &[1, 1]])] {
        let sft = Sft::new(t.clone());
        for len in 1..=12 {
            let oracle = naive_power(&t, len);
            for i in 0..2 {
                for j in 0..2 {
                    let paths = sft.enumerate_paths(i, j, len, 1 << 20).map_err(|e| e.to_string())?;
                    for p in &paths {
                        sft.check_path(p).map_err(|e| e.to_string())?;
                        ensure(p.len() == len && sft.initial(p) == i && sft.terminal(p) == j, || {
                            format!("{p:?} is not a path {i}->{j} of length {len}")
                        })?;
                    }
                    let distinct: HashSet<&Path> = paths.iter().collect();
                    ensure(distinct.len() == paths.len(), || format!("duplicate paths at {i},{j},{len}"))?;
                    ensure(paths.len() as i64 == oracle[i][j], || {
                        format!("{t}: {i}->{j} length {len}: {} paths, T^l entry {}", paths.len(), oracle[i][j])
                    })?;
                    checked += 1;
                }
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{checked} (matrix, i, j, l) cases in {:.2?}", start.elapsed()))
}

fn measure_normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    for (t, max_w) in [(golden(), 8), (tm(&[&[2]]), 10)] {
        let sft = Sft::new(t.clone());
        let pd = perron_data(&t).map_err(|e| e.to_string())?;
        for w in 1..=max_w {
            for at in [-3i64, 0, 5] {
                let mut total = 0.0;
                for p in sft.all_paths(w, 1 << 20).map_err(|e| e.to_string())? {
                    total += cylinder_measure(&sft, &pd, &Cylinder::new(&sft, p, at).map_err(|e| e.to_string())?);
                }
                worst = worst.max((total - 1.0).abs());
                ensure((total - 1.0).abs() <= 1e-10, || format!("{t} width {w}: total {total}"))?;
            }
        }
    }
    let full = Sft::new(tm(&[&[2]]));
    let pd = perron_data(full.matrix()).map_err(|e| e.to_string())?;
    for k in 1..=10 {
        for p in full.all_paths(k, 1 << 20).map_err(|e| e.to_string())? {
            let mu = cylinder_measure(&full, &pd, &Cylinder::new(&full, p, 0).map_err(|e| e.to_string())?);
            let exact = 2f64.powi(-(k as i32));
            ensure((mu - exact).abs() <= 1e-12, || format!("2-shift cylinder of length {k}: {mu}"))?;
        }
    }
    Ok(format!("max |sum - 1| = {worst:.1e}"))
}

fn random_element(sft: &Sft, w: Interval, rng: &mut ChaCha8Rng) -> AlgebraElement {
    AlgebraElement::from_fn(sft, w, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// All matrix units with window `w`.
fn units(sft: &Sft, w: Interval) -> Vec<AlgebraElement> {
    let r = sft.r();
    let mut out = Vec::new();
    for i in 0..r {
        for j in 0..r {
            let ps = sft.enumerate_paths(i, j, w.width(), 1 << 16).unwrap();
            for x in &ps {
                for y in &ps {
                    out.push(AlgebraElement::matrix_unit(sft, x, y, w.a).unwrap());
                }
            }
        }
    }
    out
}

fn embedding_functoriality() -> Outcome {
    let sft = Sft::new(golden());
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng.random_range(-3..=3);
        let i = iv(a, a + rng.random_range(0..3));
        let j = iv(i.a - rng.random_range(0..=2), i.b + rng.random_range(0..=2));
        let k = iv(j.a - rng.random_range(0..=2), j.b + rng.random_range(0..=2));
        let x = random_element(&sft, i, &mut rng);
        let y = random_element(&sft, i, &mut rng);
        let direct = x.embed(&sft, k).map_err(|e| e.to_string())?;
        let two = x.embed(&sft, j).and_then(|z| z.embed(&sft, k)).map_err(|e| e.to_string())?;
        let xy = x.mul(&y).embed(&sft, k).map_err(|e| e.to_string())?;
        let prod = direct.mul(&y.embed(&sft, k).map_err(|e| e.to_string())?);
        let d = direct.max_abs_diff(&two).max(xy.max_abs_diff(&prod));
        worst = worst.max(d);
        ensure(d <= 1e-12, || format!("embedding {i} -> {j} -> {k}: defect {d:e}"))?;
    }

    let mut windows = Vec::new();
    for w in 1..=3i64 {
        for a in 0..=(7 - w) {
            windows.push(iv(a, a + w - 1));
        }
    }
    let mut pairs = 0usize;
    for &wi in &windows {
        for &wj in &windows {
            if !wi.disjoint(&wj) {
                continue;
            }
            let hull = wi.hull(&wj);
            let xs: Vec<_> = units(&sft, wi).iter().map(|x| x.embed(&sft, hull).unwrap()).collect();
            let ys: Vec<_> = units(&sft, wj).iter().map(|y| y.embed(&sft, hull).unwrap()).collect();
            for x in &xs {
                for y in &ys {
                    let c = x.mul(y).sub(&y.mul(x));
                    ensure(c.is_zero(), || format!("units at {wi} and {wj} do not commute"))?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("max entry defect {worst:.1e}; {pairs} unit pairs at disjoint windows commute exactly"))
}

fn trace_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in [golden(), tm(&[&[2]]), tm(&[&[0, 1], &[1, 1]])] {
        let sft = Sft::new(t.clone());
        let pd = perron_data(&t).map_err(|e| e.to_string())?;
        for w in 1..=6 {
            let one = AlgebraElement::identity(&sft, iv(-2, w - 3)).map_err(|e| e.to_string())?;
            worst = worst.max((one.trace(&pd) - 1.0).abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let a = rng.random_range(-4..=4);
            let w = iv(a, a + rng.random_range(0..4));
            let x = random_element(&sft, w, &mut rng);
            let tx = x.trace(&pd);
            let n = rng.random_range(-5..=5);
            worst = worst.max((x.shift_by(n).trace(&pd) - tx).abs());
            let big = iv(w.a - rng.random_range(0..3), w.b + rng.random_range(0..3));
            worst = worst.max((x.embed(&sft, big).map_err(|e| e.to_string())?.trace(&pd) - tx).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("trace defect {worst:e}"))?;
    Ok(format!("max trace defect {worst:.1e}"))
}

/// Orthogonal matrix `exp(K)` for a random skew `K` with entries below `size`.
fn near_identity(n: usize, size: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * size);
    (&a - a.transpose()).exp()
}

/// Random orthogonal element of the algebra at `x`'s window, one
/// near-identity factor per block.
fn random_unitary(x: &AlgebraElement, size: f64, rng: &mut ChaCha8Rng) -> AlgebraElement {
    let mut u = x.one();
    for i in 0..x.r() {
        for j in 0..x.r() {
            let n = x.block(i, j).nrows();
            if n > 0 {
                *u.block_mut(i, j) = near_identity(n, size, rng);
            }
        }
    }
    u
}

fn conj(u: &AlgebraElement, x: &AlgebraElement) -> AlgebraElement {
    u.mul(x).mul(&u.adjoint())
}

/// Diagonal projection onto a random subset of basis paths; `taken` marks
/// indices already used so that successive calls give orthogonal projections.
fn random_diag(sft: &Sft, w: Interval, taken: &mut HashSet<(usize, usize, usize)>, rng: &mut ChaCha8Rng) -> AlgebraElement {
    AlgebraElement::from_fn(sft, w, |i, j, p, q| {
        if p == q && !taken.contains(&(i, j, p)) && rng.random_bool(0.35) {
            taken.insert((i, j, p));
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

fn perturbation_lemmas() -> Outcome {
    let sft = Sft::new(golden());
    let w = iv(0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = Vec::new();
    let mut ratios = [0.0f64; 4];
    let mut trials = [0usize; 4];
    let trial = |k: usize, lhs: f64, rhs: f64, v: &mut Vec<String>, r: &mut [f64; 4]| {
        if lhs > rhs + SLACK {
            v.push(format!("{}: {lhs:e} > {rhs:e}", LEMMAS[k]));
        }
        if rhs > 0.0 {
            r[k] = r[k].max(lhs / rhs);
        }
    };

    while trials[0] < 100 {
        let mut taken = HashSet::new();
        let e = random_diag(&sft, w, &mut taken, &mut rng);
        let f0 = random_diag(&sft, w, &mut taken, &mut rng);
        let u = random_unitary(&e, rng.random_range(0.001..0.06), &mut rng);
        let f = conj(&u, &f0);
        let ef = e.mul(&f).op_norm();
        if ef >= 0.25 {
            continue;
        }
        let g = orthogonalize_projection(&e, &f).map_err(|x| x.to_string())?;
        trial(0, g.sub(&f).op_norm(), 4.0 * ef, &mut violations, &mut ratios);
        trial(0, e.mul(&g).op_norm(), 0.0, &mut violations, &mut ratios);
        trials[0] += 1;
    }

    while trials[1] < 100 {
        let e = random_diag(&sft, w, &mut HashSet::new(), &mut rng);
        let u = random_unitary(&e, rng.random_range(0.001..0.06), &mut rng);
        let f = conj(&u, &e);
        let d = e.sub(&f).op_norm();
        if d >= 0.5 {
            continue;
        }
        let v = conjugating_unitary(&e, &f).map_err(|x| x.to_string())?;
        trial(1, v.sub(&v.one()).op_norm(), 4.0 * d, &mut violations, &mut ratios);
        trial(1, v.adjoint().mul(&e).mul(&v).sub(&f).op_norm(), 0.0, &mut violations, &mut ratios);
        trials[1] += 1;
    }

    while trials[2] < 100 {
        let n = rng.random_range(1..=3usize);
        let mut taken = HashSet::new();
        let es: Vec<_> = (0..n).map(|_| random_diag(&sft, w, &mut taken, &mut rng)).collect();
        let u = random_unitary(&es[0], rng.random_range(0.001..0.03), &mut rng);
        let fs: Vec<_> = es.iter().map(|e| conj(&u, e)).collect();
        let eps = es.iter().zip(&fs).map(|(a, b)| a.sub(b).op_norm()).fold(0.0, f64::max);
        if eps >= 1.0 / (2.0 * n as f64) {
            continue;
        }
        let v = align_families(&es, &fs).map_err(|x| x.to_string())?;
        trial(2, v.sub(&v.one()).op_norm(), 8.0 * n as f64 * eps, &mut violations, &mut ratios);
        for (a, b) in es.iter().zip(&fs) {
            trial(2, v.adjoint().mul(a).mul(&v).sub(b).op_norm(), 0.0, &mut violations, &mut ratios);
        }
        trials[2] += 1;
    }

    while trials[3] < 100 {
        // An exact partial isometry pairing random disjoint index sets inside
        // each diagonal block, then perturbed on both sides.
        let mut p0 = AlgebraElement::zero(&sft, w).unwrap();
        for (i, j) in (0..sft.r()).flat_map(|i| (0..sft.r()).map(move |j| (i, j))) {
            let n = p0.block(i, j).nrows();
            let mut idx: Vec<usize> = (0..n).collect();
            for k in (1..n).rev() {
                idx.swap(k, rng.random_range(0..=k));
            }
            let pairs = rng.random_range(0..=n / 2);
            for t in 0..pairs {
                p0.block_mut(i, j)[(idx[2 * t + 1], idx[2 * t])] = 1.0;
            }
        }
        if p0.is_zero() {
            continue;
        }
        let e = p0.adjoint().mul(&p0);
        let f = p0.mul(&p0.adjoint());
        let a = random_unitary(&p0, rng.random_range(0.001..0.04), &mut rng);
        let b = random_unitary(&p0, rng.random_range(0.001..0.04), &mut rng);
        let p = a.mul(&p0).mul(&b.adjoint());
        let eps = p.adjoint().mul(&p).sub(&e).op_norm().max(p.mul(&p.adjoint()).sub(&f).op_norm());
        if eps >= 0.5 {
            continue;
        }
        let q = snap_partial_isometry(&p, &e, &f).map_err(|x| x.to_string())?;
        let d = p.sub(&q).op_norm();
        if !(d < 8.0 * eps + SLACK) {
            violations.push(format!("{}: {d:e} >= 8 * {eps:e}", LEMMAS[3]));
        }
        ratios[3] = ratios[3].max(d / eps.max(f64::MIN_POSITIVE));
        trial(3, q.adjoint().mul(&q).sub(&e).op_norm(), 0.0, &mut violations, &mut ratios);
        trial(3, q.mul(&q.adjoint()).sub(&f).op_norm(), 0.0, &mut violations, &mut ratios);
        trials[3] += 1;
    }

    ensure(violations.is_empty(), || format!("{} violations: {}", violations.len(), violations.join("; ")))?;
    Ok(format!(
        "4 x 100 trials; worst lhs/rhs {:.3} {:.3} {:.3} {:.3}",
        ratios[0], ratios[1], ratios[2], ratios[3]
    ))
}

fn tower_exactness() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let t = golden();
    let sft = Sft::new(t.clone());
    let kt = KTheory::new(&t, &cfg.caps, &cfg.tol).map_err(|e| e.to_string())?;
    let cap = cfg.caps.paths;
    let mut notes = Vec::new();
    for m in 1..=3usize {
        let tw = build_tower(&sft, &kt, m, &cfg.caps).map_err(|e| e.to_string())?;
        let levels = tw.levels();
        for a in 0..m {
            for b in a + 1..m {
                let dis = levels[a].is_disjoint(&levels[b], &sft, cap).map_err(|e| e.to_string())?;
                ensure(dis, || format!("m={m}: levels {a} and {b} intersect"))?;
            }
        }
        let g = class_of_clopen(&sft, &tw.base);
        let g1 = class_of_clopen(&sft, &tw.base.shift_by(1));
        ensure(kt.equal(&g, &g1) && kt.is_alpha_fixed(&g), || format!("m={m}: class is not fixed"))?;
        ensure(kt.equal(&g, &tw.class), || format!("m={m}: reported class differs from [C]"))?;
        // [C] - ([1] - m[C]) = (m+1)[C] - [1] > 0
        let diff = kt.sub(&g.scale(m as i64 + 1), &kt.unit(g.window));
        let cert = kt.positivity_certificate(&diff.rep);
        ensure(matches!(cert, Some((Verdict::Positive, _))), || format!("m={m}: no positivity certificate"))?;
        let power = cert.map(|c| c.1).unwrap_or(0);
        notes.push(format!("m={m} window {} power {power}", tw.base.window()));
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} in {:.2?}", notes.join(", "), start.elapsed()))
}

fn cyclic_stack_bound() -> Outcome {
    let m = 2;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for ell in [9usize, 16, 25] {
        let len = (ell - 1) * (m + 2) * m;
        let model = StackModel::minimal(len).map_err(|e| e.to_string())?;
        let cs = build_cyclic_stack(&model.stack(), |x| model.alpha(x), m, ell, 7).map_err(|e| e.to_string())?;
        let cyc = model.alpha(&cs.f[m - 1]).sub(&cs.f[0]).norm();
        let bound = 1.0 / ell as f64 + 1.0 / (ell as f64).sqrt();
        let one = cs.r.one();
        let rest = cs.f.iter().fold(one, |acc, f| acc.sub(f));
        let rr = cs.r.mul(&cs.r.adjoint());
        let rsr = cs.r.adjoint().mul(&cs.r);
        let range = rr.sub(&rest).norm();
        let dom = rsr.mul(&rsr).sub(&rsr).norm().max(cs.f[0].mul(&rsr).sub(&rsr).norm());
        let unit = cs.report.unit_law_defect;
        let exact = (2.0 * ell as f64 - 1.0).sqrt() / ell as f64;
        lines.push(format!("l={ell}: {cyc:.4} <= {bound:.4}"));
        if !(cyc <= bound + SLACK) {
            failures.push(format!("l={ell}: {cyc:.4} > {bound:.4} (sqrt(2l-1)/l = {exact:.4})"));
        }
        if !(range <= SLACK && dom <= SLACK) {
            failures.push(format!("l={ell}: rr* defect {range:e}, r*r defect {dom:e}"));
        }
        if !(unit <= 1e-10 && cs.report.unit_law_samples >= 100) {
            failures.push(format!("l={ell}: matrix-unit law defect {unit:e}"));
        }
    }
    ensure(failures.is_empty(), || format!("||alpha(f_1) - f_0|| exceeds 1/l + 1/sqrt(l): {}", failures.join(", ")))?;
    Ok(format!("||alpha(f_1) - f_0||: {}", lines.join(", ")))
}

fn default_probe(sft: &Sft) -> AlgebraElement {
    AlgebraElement::from_fn(sft, iv(0, 0), |i, j, p, q| ((i, j, p, q) == (0, 0, 0, 0)) as u8 as f64).unwrap()
}

fn partition_certification() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let mut notes = Vec::new();
    for (t, m) in [(golden(), 2usize), (tm(&[&[2]]), 3)] {
        let sft = Sft::new(t.clone());
        let run = rohlin_pipeline(&t, m, 0.5, &[default_probe(&sft)], &cfg).map_err(|e| e.to_string())?;
        let rep = &run.report;
        let rr = &rep.refine;
        let (n, l, mf) = (rep.n as f64, rep.ell as f64, m as f64);
        let d0_bound = 7.0 * n / l.sqrt();
        let d1_bound = 3.0 * (mf * n + 1.0).powi(2) / l.sqrt() + 4.0 * PI / (n * mf);
        let uv_bound = 2.0 * PI / (n * mf);
        ensure(rr.d0 <= d0_bound + SLACK, || format!("{t}: d0 {} > {d0_bound}", rr.d0))?;
        ensure(rr.d1 <= d1_bound + SLACK, || format!("{t}: d1 {} > {d1_bound}", rr.d1))?;
        ensure(rr.u_minus_v <= uv_bound + SLACK, || format!("{t}: |u-v| {} > {uv_bound}", rr.u_minus_v))?;
        let v = verify_rohlin_partition(&run.partition.towers, |x| run.model.alpha(x), rep.epsilon, &[]);
        ensure(v.partition_defect <= 1e-9, || format!("{t}: partition defect {}", v.partition_defect))?;
        ensure(v.heights == vec![m, m + 1], || format!("{t}: heights {:?}", v.heights))?;
        ensure(v.verdict && rep.verdict, || format!("{t}: verdict false: {:?}", v.violated))?;
        notes.push(format!(
            "{t} m={m}: n={} l={} d0={:.3} d1={:.3} |u-v|={:.3} at eps {}",
            rep.n, rep.ell, rr.d0, rr.d1, rr.u_minus_v, rep.epsilon
        ));
    }
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!("{} in {:.1?}", notes.join("; "), start.elapsed()))
}

fn infinitesimal_dichotomy() -> Outcome {
    let cases: [(TransitionMatrix, usize, Option<i64>); 4] = [
        (tm(&[&[2]]), 0, Some(2)),
        (tm(&[&[3]]), 0, Some(3)),
        (tm(&[&[1, 1], &[1, 1]]), 0, Some(2)),
        (golden(), 2, None),
    ];
    for (t, rank, full) in &cases {
        let got = infinitesimal_rank(t).map_err(|e| e.to_string())?;
        ensure(got == *rank, || format!("{t}: infinitesimal rank {got}, expected {rank}"))?;
        let fs = full_shift_test(&QMat::from_transition(t)).map_err(|e| e.to_string())?;
        let n = fs.n.map(|n| n.to_string().parse::<i64>().unwrap());
        ensure(n == *full, || format!("{t}: full shift verdict {n:?}, expected {full:?}"))?;
    }
    // With v = w = (lambda, 1): w M v = lambda^2 - lambda - 1 = 0.
    let cfg = RunConfig::default();
    let kt = KTheory::new(&golden(), &cfg.caps, &cfg.tol).map_err(|e| e.to_string())?;
    let rep = QMat::from_ints(&[vec![1, -1], vec![0, -1]]);
    let g = K0Class::new(iv(0, 0), rep.clone()).map_err(|e| e.to_string())?;
    ensure(!vanishes_in_limit(kt.t(), &rep), || "trace-zero class vanishes".into())?;
    ensure(kt.exact_infinitesimal_test(&g), || "pairing of the trace-zero class is not exactly zero".into())?;
    ensure(kt.is_positive(&g) == Verdict::InfinitesimalOrMixed, || format!("verdict {}", kt.is_positive(&g)))?;
    Ok("ranks 0, 0, 0, 2; full shifts 2, 3, 2, none; [[1,-1],[0,-1]] infinitesimal".into())
}

fn shift_equivalence() -> Outcome {
    let cfg = RunConfig::default();
    let bounds = SearchBounds {
        max_lag: cfg.caps.lag,
        max_entry: cfg.caps.entry,
        max_points: cfg.caps.search_points,
    };
    let q = |t: TransitionMatrix| QMat::from_transition(&t);
    let roundtrip = |u: &QMat, v: &QMat, c: &SeCertificate| -> Result<(), String> {
        ensure(verify_se(u, v, c).map_err(|e| e.to_string())?.holds(), || "certificate fails".into())?;
        let back = SeCertificate::from_json(&c.to_json()).map_err(|e| e.to_string())?;
        ensure(&back == c, || "JSON round trip changed the certificate".into())?;
        ensure(verify_se(u, v, &back).map_err(|e| e.to_string())?.holds(), || "round trip fails".into())
    };
    let (u, v) = (q(tm(&[&[1, 1], &[1, 1]])), q(tm(&[&[2]])));
    let c = match search_se(&u, &v, bounds).map_err(|e| e.to_string())? {
        SearchOutcome::Found(c) => c,
        SearchOutcome::NoneWithinBounds => return Err("no certificate for [[1,1],[1,1]] ~ (2)".into()),
    };
    ensure(c.lag == 1, || format!("lag {}", c.lag))?;
    roundtrip(&u, &v, &c)?;
    let g = q(golden());
    let s = match search_se(&g, &g, bounds).map_err(|e| e.to_string())? {
        SearchOutcome::Found(c) => c,
        SearchOutcome::NoneWithinBounds => return Err("no self-certificate for the golden mean".into()),
    };
    ensure(s.lag == 1, || format!("self lag {}", s.lag))?;
    roundtrip(&g, &g, &s)?;
    let none = search_se(&q(tm(&[&[2]])), &q(tm(&[&[3]])), bounds).map_err(|e| e.to_string())?;
    ensure(none == SearchOutcome::NoneWithinBounds, || format!("(2) vs (3): {none:?}"))?;
    Ok(format!("R={:?} S={:?}; self R={:?} S={:?}; (2) vs (3) none within bounds", c.r, c.s, s.r, s.s))
}

fn asymptotic_commutation() -> Outcome {
    let mut pairs = 0usize;
    let mut nonzero_at_0 = 0usize;
    for t in [golden(), tm(&[&[0, 1], &[1, 1]])] {
        let sft = Sft::new(t.clone());
        let us = units(&sft, iv(0, 2));
        for x in &us {
            for y in &us {
                let tab = asymptotic_commutation_check(&sft, x, y, 6).map_err(|e| e.to_string())?;
                for &(n, c) in &tab.rows {
                    ensure(n.abs() <= 3 || c == 0.0, || format!("{t}: nonzero commutator {c} at n={n}"))?;
                    if n == 0 && c > 0.0 {
                        nonzero_at_0 += 1;
                    }
                }
                pairs += 1;
            }
        }
    }
    ensure(nonzero_at_0 > 0, || "no nonzero commutator at n = 0".into())?;
    Ok(format!("{pairs} unit pairs, |n| <= 6; {nonzero_at_0} nonzero at n = 0"))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("path counts", path_counts),
        ("measure normalization", measure_normalization),
        ("embedding functoriality", embedding_functoriality),
        ("trace invariance", trace_invariance),
        ("perturbation lemmas", perturbation_lemmas),
        ("tower exactness", tower_exactness),
        ("cyclic stack bound", cyclic_stack_bound),
        ("partition certification", partition_certification),
        ("infinitesimal dichotomy", infinitesimal_dichotomy),
        ("shift equivalence", shift_equivalence),
        ("asymptotic commutation", asymptotic_commutation),
    ];
    let mut failed = 0;
    for (k, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {why}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
