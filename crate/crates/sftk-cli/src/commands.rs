use serde_json::{json, Value};
use sftk::af_algebra::AlgebraElement;
use sftk::config::RunConfig;
use sftk::k_theory::{eventual_rank, infinitesimal_rank, ExactPerron, KTheory};
use sftk::linalg::QMat;
use sftk::measure::{cylinder_measure, perron_data_with_cap, Cylinder};
use sftk::rohlin::{build_cyclic_stack, build_tower, rohlin_pipeline, stack_from_tower, StackModel};
use sftk::sft_core::{is_primitive, Interval, Sft, TransitionMatrix};
use sftk::shift_equiv::{full_shift_test, search_se, SearchBounds, SearchOutcome};
use sftk::{Error, Result};

/// Outcome of a command: the report and the verdict it carries.
pub struct Outcome {
    pub report: Value,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Holds,
    Fails,
    Undecided,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Holds => 0,
            Status::Fails => 1,
            Status::Undecided => 2,
        }
    }
}

/// Named matrices accepted wherever a matrix is expected, besides the
/// inline `"a,b;c,d"` and JSON forms.
pub fn parse_matrix(s: &str) -> Result<TransitionMatrix> {
    let s = s.trim();
    if s == "golden-mean" {
        return TransitionMatrix::new(vec![vec![1, 1], vec![1, 0]]);
    }
    if let Some(n) = s.strip_prefix("full-") {
        let n: i64 = n
            .parse()
            .map_err(|_| Error::InvalidMatrix(format!("bad full shift {s:?}")))?;
        return TransitionMatrix::new(vec![vec![n]]);
    }
    TransitionMatrix::parse(s)
}

pub fn invariants(t: &TransitionMatrix, cfg: &RunConfig) -> Result<Outcome> {
    let prim = is_primitive(t);
    if !prim.is_primitive() {
        return Err(Error::NotPrimitive(serde_json::to_string(&prim).expect("serializes")));
    }
    let pd = perron_data_with_cap(t, cfg.caps.power_iterations)?;
    let ex = ExactPerron::with_perron(t, &pd)?;
    let q = QMat::from_transition(t);
    let fs = full_shift_test(&q)?;
    let minpoly: Vec<String> = ex.field.modulus().coeffs().iter().map(|c| c.to_string()).collect();
    let report = json!({
        "matrix": t.rows(),
        "primitive": true,
        "primitivity": prim,
        "lambda": pd.lambda,
        "minimal_polynomial": minpoly,
        "degree": ex.field.degree(),
        "eventual_rank": eventual_rank(&q),
        "infinitesimal_rank": infinitesimal_rank(t)?,
        "full_shift": fs.n.map_or(json!(false), |n| json!(n.to_string().parse::<u64>().unwrap_or(0))),
    });
    Ok(Outcome { report, status: Status::Holds })
}

fn ktheory(t: &TransitionMatrix, cfg: &RunConfig) -> Result<(Sft, KTheory)> {
    let kt = KTheory::new(t, &cfg.caps, &cfg.tol)?;
    Ok((Sft::new(t.clone()), kt))
}

pub fn tower(t: &TransitionMatrix, m: usize, cfg: &RunConfig) -> Result<Outcome> {
    let (sft, kt) = ktheory(t, cfg)?;
    let tw = build_tower(&sft, &kt, m, &cfg.caps)?;
    let mut report = tw.to_json();
    report["matrix"] = json!(t.rows());
    Ok(Outcome { report, status: Status::Holds })
}

/// The clopen stack of height `m`, and the cyclic stack built from a model
/// stack of length `(l-1)(m+2)m`.
pub fn stack(t: &TransitionMatrix, m: usize, ell: usize, cfg: &RunConfig) -> Result<Outcome> {
    let (sft, kt) = ktheory(t, cfg)?;
    let tw = build_tower(&sft, &kt, m, &cfg.caps)?;
    let st = stack_from_tower(&sft, &kt, &tw, m, &cfg.caps)?;
    if ell <= 4 {
        return Err(Error::Precondition(format!("need l > 4, got l = {ell}")));
    }
    let len = (ell - 1) * (m + 2) * m;
    if 2 * len + 1 > cfg.caps.model_dim {
        return Err(Error::Cap {
            what: "operator model size",
            required: 2 * len as u128 + 1,
            cap: cfg.caps.model_dim as u128,
        });
    }
    let model = StackModel::minimal(len)?;
    let cs = build_cyclic_stack(&model.stack(), |x| model.alpha(x), m, ell, cfg.seed)?;
    let status = if cs.report.within_cyclic_bound { Status::Holds } else { Status::Fails };
    let report = json!({
        "matrix": t.rows(),
        "tower": tw.report,
        "stack": st.report,
        "model_dim": model.dim(),
        "cyclic": cs.report,
    });
    Ok(Outcome { report, status })
}

pub fn rohlin(t: &TransitionMatrix, m: usize, epsilon: f64, cfg: &RunConfig) -> Result<Outcome> {
    // A default probe: the projection onto one cylinder at the origin.
    let sft = Sft::new(t.clone());
    let w = Interval::new(0, 0)?;
    let probe = AlgebraElement::from_fn(&sft, w, |i, j, p, q| if i == 0 && j == 0 && p == 0 && q == 0 { 1.0 } else { 0.0 })?;
    let run = rohlin_pipeline(t, m, epsilon, &[probe], cfg)?;
    let status = if run.report.verdict { Status::Holds } else { Status::Fails };
    let report = serde_json::to_value(&run.report).expect("report serializes");
    Ok(Outcome { report, status })
}

pub fn se(u: &TransitionMatrix, v: &TransitionMatrix, lag: u32, entry: u32, cfg: &RunConfig) -> Result<Outcome> {
    let (qu, qv) = (QMat::from_transition(u), QMat::from_transition(v));
    let bounds = SearchBounds {
        max_lag: lag,
        max_entry: entry,
        max_points: cfg.caps.search_points,
    };
    let out = search_se(&qu, &qv, bounds)?;
    let (certificate, status) = match out {
        SearchOutcome::Found(c) => (c.to_json(), Status::Holds),
        SearchOutcome::NoneWithinBounds => (json!("none within bounds"), Status::Undecided),
    };
    let report = json!({
        "U": u.rows(),
        "V": v.rows(),
        "max_lag": lag,
        "max_entry": entry,
        "certificate": certificate,
    });
    Ok(Outcome { report, status })
}

/// Measure of the cylinder of the edge path `edges` placed at coordinate `at`.
pub fn measure(t: &TransitionMatrix, edges: &[u32], at: i64, cfg: &RunConfig) -> Result<Outcome> {
    let sft = Sft::new(t.clone());
    let pd = perron_data_with_cap(t, cfg.caps.power_iterations)?;
    let path = sft.path(edges.to_vec())?;
    let cyl = Cylinder::new(&sft, path, at)?;
    let w = cyl.window();
    let report = json!({
        "matrix": t.rows(),
        "edges": edges,
        "window": [w.a, w.b],
        "measure": cylinder_measure(&sft, &pd, &cyl),
        "lambda": pd.lambda,
    });
    Ok(Outcome { report, status: Status::Holds })
}
