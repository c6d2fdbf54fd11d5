mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use sftk::config::RunConfig;
use sftk::Error;

use commands::{parse_matrix, Outcome};

/// Shifts of finite type: invariants, towers, stacks, Rohlin partitions and
/// shift equivalence.
#[derive(Parser)]
#[command(name = "sftk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Emit tagged JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with a run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    caps: Option<PathBuf>,
}

/// A matrix given either positionally or with `--matrix`: `"a,b;c,d"`,
/// a JSON object, `golden-mean` or `full-N`.
#[derive(Args)]
struct MatrixArg {
    #[arg(value_name = "MATRIX")]
    positional: Option<String>,
    #[arg(long = "matrix", value_name = "MATRIX")]
    flag: Option<String>,
}

impl MatrixArg {
    fn get(&self) -> Result<&str, Error> {
        self.flag
            .as_deref()
            .or(self.positional.as_deref())
            .ok_or_else(|| Error::InvalidInput("a matrix is required".into()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Primitivity, Perron eigenvalue, ranks and the full-shift test.
    Invariants {
        #[command(flatten)]
        matrix: MatrixArg,
    },
    /// A clopen tower of height m with its exact certificates.
    Tower {
        #[command(flatten)]
        matrix: MatrixArg,
        #[arg(value_name = "M")]
        m_pos: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
    },
    /// The exact stack of a tower and the cyclic stack of parameter l.
    Stack {
        #[command(flatten)]
        matrix: MatrixArg,
        #[arg(value_name = "M")]
        m_pos: Option<usize>,
        #[arg(value_name = "ELL")]
        ell_pos: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        ell: Option<usize>,
    },
    /// A certified Rohlin partition with towers of heights m and m+1.
    Rohlin {
        #[command(flatten)]
        matrix: MatrixArg,
        #[arg(value_name = "M")]
        m_pos: Option<usize>,
        #[arg(value_name = "EPSILON")]
        eps_pos: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Bounded search for a shift equivalence between U and V.
    Se {
        #[arg(value_name = "U")]
        u: String,
        #[arg(value_name = "V")]
        v: String,
        #[arg(long)]
        max_lag: Option<u32>,
        #[arg(long)]
        max_entry: Option<u32>,
    },
    /// Measure of a cylinder given by edge indices.
    Measure {
        #[command(flatten)]
        matrix: MatrixArg,
        /// Comma separated edge indices.
        #[arg(long)]
        cylinder: String,
        /// Coordinate of the first edge.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        at: i64,
    },
}

fn required<T>(a: Option<T>, b: Option<T>, what: &str) -> Result<T, Error> {
    a.or(b).ok_or_else(|| Error::InvalidInput(format!("{what} is required")))
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &common.caps {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &Command, cfg: &RunConfig) -> Result<Outcome, Error> {
    match cmd {
        Command::Invariants { matrix } => commands::invariants(&parse_matrix(matrix.get()?)?, cfg),
        Command::Tower { matrix, m_pos, m } => {
            let t = parse_matrix(matrix.get()?)?;
            commands::tower(&t, required(*m, *m_pos, "m")?, cfg)
        }
        Command::Stack { matrix, m_pos, ell_pos, m, ell } => {
            let t = parse_matrix(matrix.get()?)?;
            commands::stack(&t, required(*m, *m_pos, "m")?, required(*ell, *ell_pos, "ell")?, cfg)
        }
        Command::Rohlin { matrix, m_pos, eps_pos, m, epsilon } => {
            let t = parse_matrix(matrix.get()?)?;
            commands::rohlin(&t, required(*m, *m_pos, "m")?, required(*epsilon, *eps_pos, "epsilon")?, cfg)
        }
        Command::Se { u, v, max_lag, max_entry } => {
            let (u, v) = (parse_matrix(u)?, parse_matrix(v)?);
            let lag = max_lag.unwrap_or(cfg.caps.lag);
            let entry = max_entry.unwrap_or(cfg.caps.entry);
            commands::se(&u, &v, lag, entry, cfg)
        }
        Command::Measure { matrix, cylinder, at } => {
            let t = parse_matrix(matrix.get()?)?;
            let edges = cylinder
                .split(',')
                .map(|x| x.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidInput(format!("bad cylinder {cylinder:?}")))?;
            commands::measure(&t, &edges, *at, cfg)
        }
    }
}

/// Exit code for an error: input problems are 3, resource and decidability
/// limits 2, failed verifications 1.
fn error_code(e: &Error) -> u8 {
    match e {
        Error::InvalidMatrix(_) | Error::InvalidInput(_) | Error::NotPrimitive(_) | Error::Precondition(_) => 3,
        Error::Cap { .. } | Error::Undecided(_) | Error::NoConvergence(_) | Error::SpectralGap(_) => 2,
        Error::RankMismatch(..) | Error::Factorization(_) | Error::Infeasible(_) | Error::Verification(_) => 1,
    }
}

/// Whether every leaf of `v` is a number of one kind: `Some(true)` for
/// floats, `Some(false)` for integers.
fn numeric_kind(v: &Value) -> Option<bool> {
    match v {
        Value::Number(n) => Some(n.is_f64()),
        Value::Array(a) if !a.is_empty() => {
            let first = numeric_kind(&a[0])?;
            a[1..].iter().all(|x| numeric_kind(x) == Some(first)).then_some(first)
        }
        _ => None,
    }
}

/// Replaces every number, or array of numbers of one kind, by
/// `{"value": x, "tag": ...}`: integers are exact, floats carry the
/// tolerance of the computation that produced them.
fn tag_numbers(v: Value, float_tag: &str) -> Value {
    if let Some(is_float) = numeric_kind(&v) {
        let tag = if is_float { float_tag } else { "exact" };
        return json!({"value": v, "tag": tag});
    }
    match v {
        Value::Array(a) => Value::Array(a.into_iter().map(|x| tag_numbers(x, float_tag)).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| (k, tag_numbers(x, float_tag))).collect::<Map<_, _>>()),
        other => other,
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(o) => {
            for (k, x) in o {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object()) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Array(a) if a.len() > 8 => out.push((prefix.to_string(), format!("[{} entries]", a.len()))),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn table(v: &Value) -> String {
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter().map(|(k, x)| format!("{k:<width$}  {x}\n")).collect()
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(s: &str) {
    let _ = std::io::stdout().write_all(s.as_bytes());
}

/// Runs the command line `args` and returns the exit code with the text
/// for stdout. Errors are also reported on stderr.
fn execute<I, T>(args: I) -> (u8, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{}", e.render());
            return (3, String::new());
        }
        Err(e) => return (0, e.render().to_string()),
    };
    let result = load_config(&cli.common).and_then(|cfg| run(&cli.command, &cfg).map(|o| (o, cfg)));
    match result {
        Ok((outcome, cfg)) => {
            let status = format!("{:?}", outcome.status).to_lowercase();
            let code = outcome.status.code() as u8;
            if cli.common.json {
                let tag = format!("float({:e})", cfg.tol.slack);
                let doc = json!({"status": status, "report": outcome.report});
                let text = serde_json::to_string_pretty(&tag_numbers(doc, &tag)).expect("serializes");
                (code, format!("{text}\n"))
            } else {
                (code, format!("{}status  {status}\n", table(&outcome.report)))
            }
        }
        Err(e) => {
            let code = error_code(&e);
            eprintln!("error: {e}");
            let out = if cli.common.json {
                format!("{}\n", json!({"error": e.to_string(), "exit_code": code}))
            } else {
                String::new()
            };
            (code, out)
        }
    }
}

fn main() -> ExitCode {
    let (code, out) = execute(std::env::args_os());
    emit(&out);
    ExitCode::from(code)
}
