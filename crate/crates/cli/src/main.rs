//! Command-line front end. Results go to stdout (or `--out`) as JSON;
//! failures go to stderr as `{code, message, context}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use lindreach::dilation::{dilation_error_curve, log_log_slope};
use lindreach::hormander::{lie_closure, orbit_span_probe, standard_two_local_set, ResourceSet};
use lindreach::linalg::{json::MatrixJson, CMatrix, DensityMatrix};
use lindreach::lindblad::{self, gamma_form, gamma_span_residual, Lindbladian};
use lindreach::reach::{porcupine_check, reach_drive, DriveParams, PorcupineParams, ResourceSetK};
use lindreach::tangent::{
    cone_violation, lift, lift_path, linear_admissible, second_order_witness, PathOptions, PathSample,
    CONE_TOL,
};
use lindreach::transport::{
    execute_plan_trajectory, full_state_transport, plan_diagonal_transport, TransportPlan,
};

#[derive(Parser, Debug)]
#[command(name = "lindreach", version, about = "Controllability analysis for open quantum systems")]
struct Cli {
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate a density under a generator.
    Simulate(SimulateArgs),
    /// Lindbladian realizing a tangent direction at a state.
    Lift(LiftArgs),
    /// Interval-wise lift of a sampled path.
    LiftPath(LiftPathArgs),
    /// Tangent-cone membership with linear and second-order certificates.
    CertifyTangent(LiftArgs),
    /// Greedy alignment descent toward a target.
    Reach(ReachArgs),
    /// Sampled obstruction test around a target.
    Porcupine(PorcupineArgs),
    /// Synthesize a transport plan.
    Plan(PlanArgs),
    /// Execute a transport plan.
    RunPlan(RunPlanArgs),
    /// Lie closure of a control set.
    CheckHormander(HormanderArgs),
    /// Error of the environment dilation against the exact semigroup.
    Dilate(DilateArgs),
    /// Gradient form or span criterion.
    GammaCheck(GammaArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    lindblad: PathBuf,
    #[arg(long)]
    rho: PathBuf,
    #[arg(long)]
    t: f64,
    /// Number of equal intervals for the population CSV.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Write populations over time as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LiftArgs {
    #[arg(long)]
    rho: PathBuf,
    /// Tangent direction (Hermitian, traceless).
    #[arg(long)]
    x: PathBuf,
}

#[derive(Args, Debug)]
struct LiftPathArgs {
    /// PathSample JSON: {"times": [...], "states": [...]}.
    #[arg(long)]
    path: PathBuf,
    #[arg(long, default_value_t = lindreach::tangent::PATH_TOL)]
    path_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    support_tol: f64,
}

#[derive(Args, Debug)]
struct ReachArgs {
    /// Resource set JSON: {"generators": [...], "cone_combinations", "max_total_rate"}.
    #[arg(long = "K", alias = "k")]
    k: PathBuf,
    #[arg(long)]
    rho: PathBuf,
    #[arg(long)]
    sigma: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    target_tol: f64,
    /// Write (t, trace_distance, chosen_generator) as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PorcupineArgs {
    #[arg(long = "K", alias = "k")]
    k: PathBuf,
    #[arg(long)]
    sigma: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1000)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample only diagonal directions.
    #[arg(long)]
    diagonal_only: bool,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Number of qubits (diagonal mode).
    #[arg(long)]
    k: Option<usize>,
    /// Source populations, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Target populations, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Rescale population vectors to sum 1.
    #[arg(long)]
    normalize: bool,
    /// Source density (full-state mode).
    #[arg(long, conflicts_with_all = ["lambda", "mu"])]
    rho: Option<PathBuf>,
    /// Target density (full-state mode).
    #[arg(long, requires = "rho")]
    sigma: Option<PathBuf>,
    /// Certify the two-local control set before emitting unitary steps.
    #[arg(long)]
    hormander_unitaries: bool,
}

#[derive(Args, Debug)]
struct RunPlanArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Initial density.
    #[arg(long, conflicts_with = "lambda")]
    rho: Option<PathBuf>,
    /// Initial populations (diagonal start), comma separated.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    normalize: bool,
    /// Write per-step diagonal populations as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HormanderArgs {
    /// Resource set JSON: {"dim", "elements": [...]}.
    #[arg(long, conflicts_with = "standard")]
    set: Option<PathBuf>,
    /// Use the standard two-local set on this many qubits.
    #[arg(long)]
    standard: Option<usize>,
    #[arg(long, default_value_t = 32)]
    max_depth: usize,
    /// Also run the orbit-span probe for this operator.
    #[arg(long)]
    orbit: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DilateArgs {
    /// Jump operator on the system.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    t: f64,
    /// Trotter step counts, comma separated.
    #[arg(long, default_value = "64,128,256")]
    n: String,
    /// Write (n, error) as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GammaArgs {
    /// Generator whose gradient form is evaluated at (x, y).
    #[arg(long, requires_all = ["x", "y"])]
    lindblad: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    /// Operator tested against span{1, basis}.
    #[arg(long, requires = "basis", conflicts_with = "lindblad")]
    a: Option<PathBuf>,
    /// JSON list of matrices.
    #[arg(long)]
    basis: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation {
        code: String,
        message: String,
        context: Value,
    },
    Internal {
        code: String,
        message: String,
        context: Value,
    },
}

impl Failure {
    fn validation(code: &str, message: impl Into<String>, context: Value) -> Self {
        Failure::Validation {
            code: code.into(),
            message: message.into(),
            context,
        }
    }

    fn report(&self) -> (Value, u8) {
        match self {
            Failure::Validation {
                code,
                message,
                context,
            } => (json!({"code": code, "message": message, "context": context}), 2),
            Failure::Internal {
                code,
                message,
                context,
            } => (json!({"code": code, "message": message, "context": context}), 1),
        }
    }
}

impl From<lindreach::Error> for Failure {
    fn from(e: lindreach::Error) -> Self {
        let context = match &e {
            lindreach::Error::RootSolve { pair, .. } => json!({"pair": pair}),
            lindreach::Error::LedgerViolation { step } => json!({"step": step}),
            lindreach::Error::PathSampleNotInCone { index } => json!({"index": index}),
            _ => json!({}),
        };
        if e.is_internal() {
            Failure::Internal {
                code: e.code().into(),
                message: e.to_string(),
                context,
            }
        } else {
            Failure::Validation {
                code: e.code().into(),
                message: e.to_string(),
                context,
            }
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::validation(
            "io",
            format!("cannot read {}: {e}", path.display()),
            json!({"file": path.display().to_string()}),
        )
    })?;
    serde_json::from_str(&text).map_err(|e| {
        let file = path.display().to_string();
        if e.is_data() {
            Failure::validation(
                "invalid_input",
                e.to_string(),
                json!({"file": file, "line": e.line(), "column": e.column()}),
            )
        } else {
            Failure::validation(
                "malformed_json",
                e.to_string(),
                json!({
                    "file": file,
                    "line": e.line(),
                    "column": e.column(),
                    "byte_offset": byte_offset(&text, e.line(), e.column()),
                }),
            )
        }
    })
}

fn read_matrix(path: &Path) -> CliResult<CMatrix> {
    let m: MatrixJson = read_json(path)?;
    CMatrix::try_from(m).map_err(|e| {
        Failure::validation(e.code(), e.to_string(), json!({"file": path.display().to_string()}))
    })
}

fn read_density(path: &Path) -> CliResult<DensityMatrix> {
    read_json(path)
}

fn parse_distribution(text: &str, name: &str, normalize: bool) -> CliResult<Vec<f64>> {
    let ctx = json!({"argument": name});
    let mut v = Vec::new();
    for (i, part) in text.split(',').enumerate() {
        let x: f64 = part.trim().parse().map_err(|_| {
            Failure::validation(
                "invalid_parameter",
                format!("entry {i} of --{name} is not a number: {part:?}"),
                ctx.clone(),
            )
        })?;
        if !x.is_finite() || x < 0.0 {
            return Err(Failure::validation(
                "invalid_parameter",
                format!("entry {i} of --{name} must be finite and nonnegative"),
                ctx,
            ));
        }
        v.push(x);
    }
    let sum: f64 = v.iter().sum();
    if normalize {
        if sum <= 0.0 {
            return Err(Failure::validation(
                "invalid_parameter",
                format!("--{name} has zero total mass"),
                ctx,
            ));
        }
        v.iter_mut().for_each(|x| *x /= sum);
    } else if (sum - 1.0).abs() > 1e-9 {
        return Err(Failure::validation(
            "invalid_parameter",
            format!("--{name} sums to {sum}; pass --normalize to rescale"),
            ctx,
        ));
    }
    Ok(v)
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::Internal {
        code: "io".into(),
        message: format!("cannot write {}: {e}", path.display()),
        context: json!({"file": path.display().to_string()}),
    })
}

fn csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn population_header(d: usize, first: &str) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((0..d).map(|i| format!("p{i}")))
        .collect()
}

fn populations(rho: &DensityMatrix) -> Vec<String> {
    rho.diagonal().into_iter().map(fmt_float).collect()
}

fn simulate(a: &SimulateArgs) -> CliResult<Value> {
    let l: Lindbladian = read_json(&a.lindblad)?;
    let rho = read_density(&a.rho)?;
    if rho.dim() != l.dim {
        return Err(lindreach::Error::DimensionMismatch(format!(
            "rho has dimension {}, generator acts on {}",
            rho.dim(),
            l.dim
        ))
        .into());
    }
    let out = lindblad::propagate(&l, &rho, a.t)?;
    if let Some(path) = &a.csv {
        let steps = a.steps.max(1);
        let dt = a.t / steps as f64;
        let step = lindblad::propagator(&l, dt)?;
        let mut cur = rho.clone();
        let mut rows = vec![std::iter::once(fmt_float(0.0)).chain(populations(&cur)).collect()];
        for i in 1..=steps {
            cur = lindblad::propagate_with(&step, &cur)?;
            rows.push(
                std::iter::once(fmt_float(dt * i as f64))
                    .chain(populations(&cur))
                    .collect(),
            );
        }
        write_file(path, &csv(&population_header(rho.dim(), "t"), rows))?;
    }
    to_value(&out)
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::Internal {
        code: "serialization".into(),
        message: e.to_string(),
        context: json!({}),
    })
}

fn run_lift(a: &LiftArgs) -> CliResult<Value> {
    let rho = read_density(&a.rho)?;
    let x = read_matrix(&a.x)?;
    to_value(&lift(&rho, &x)?)
}

fn run_lift_path(a: &LiftPathArgs) -> CliResult<Value> {
    let path: PathSample = read_json(&a.path)?;
    path.validate()?;
    let opts = PathOptions {
        path_tol: a.path_tol,
        support_tol: a.support_tol,
    };
    to_value(&lift_path(&path, opts)?)
}

fn certify_tangent(a: &LiftArgs) -> CliResult<Value> {
    let rho = read_density(&a.rho)?;
    let x = read_matrix(&a.x)?;
    let violation = cone_violation(&rho, &x, CONE_TOL)?;
    let in_cone = violation.is_none();
    let linear = if in_cone { linear_admissible(&rho, &x)? } else { None };
    let witness = if in_cone && linear.is_none() {
        Some(second_order_witness(&rho, &x)?)
    } else {
        None
    };
    Ok(json!({
        "in_cone": in_cone,
        "violation": violation,
        "linear_admissible": linear.map(|t| if t.is_finite() { json!(t) } else { json!("infinite") }),
        "second_order_witness": to_value(&witness)?,
    }))
}

fn reach(a: &ReachArgs) -> CliResult<Value> {
    let k: ResourceSetK = read_json(&a.k)?;
    let rho = read_density(&a.rho)?;
    let sigma = read_density(&a.sigma)?;
    let rep = reach_drive(
        &k,
        &rho,
        &sigma,
        DriveParams {
            p: a.p,
            dt: a.dt,
            t_max: a.t_max,
            target_tol: a.target_tol,
        },
    )?;
    if let Some(path) = &a.csv {
        let header: Vec<String> = ["t", "trace_distance", "chosen_generator"].map(String::from).to_vec();
        let rows = rep.steps.iter().map(|s| {
            vec![
                fmt_float(s.t),
                fmt_float(s.trace_distance),
                s.generator.map_or(String::new(), |g| g.to_string()),
            ]
        });
        write_file(path, &csv(&header, rows))?;
    }
    to_value(&rep)
}

fn porcupine(a: &PorcupineArgs) -> CliResult<Value> {
    let k: ResourceSetK = read_json(&a.k)?;
    let sigma = read_density(&a.sigma)?;
    let rep = porcupine_check(
        &k,
        &sigma,
        PorcupineParams {
            epsilon: a.epsilon,
            p: a.p,
            n_samples: a.n_samples,
            seed: a.seed,
            diagonal_only: a.diagonal_only,
        },
    )?;
    to_value(&rep)
}

fn plan(a: &PlanArgs) -> CliResult<Value> {
    if let (Some(rho), Some(sigma)) = (&a.rho, &a.sigma) {
        let rho = read_density(rho)?;
        let sigma = read_density(sigma)?;
        return to_value(&full_state_transport(&rho, &sigma, a.hormander_unitaries)?);
    }
    let (Some(k), Some(lambda), Some(mu)) = (a.k, &a.lambda, &a.mu) else {
        return Err(Failure::validation(
            "invalid_parameter",
            "plan needs --k, --lambda and --mu, or --rho and --sigma",
            json!({}),
        ));
    };
    let lambda = parse_distribution(lambda, "lambda", a.normalize)?;
    let mu = parse_distribution(mu, "mu", a.normalize)?;
    to_value(&plan_diagonal_transport(&lambda, &mu, k)?)
}

fn run_plan(a: &RunPlanArgs) -> CliResult<Value> {
    let plan: TransportPlan = read_json(&a.plan)?;
    let rho = match (&a.rho, &a.lambda) {
        (Some(p), _) => read_density(p)?,
        (None, Some(l)) => DensityMatrix::from_diagonal(&parse_distribution(l, "lambda", a.normalize)?)?,
        (None, None) => {
            return Err(Failure::validation(
                "invalid_parameter",
                "run-plan needs --rho or --lambda",
                json!({}),
            ))
        }
    };
    let traj = execute_plan_trajectory(&plan, &rho)?;
    if let Some(path) = &a.csv {
        let rows = traj
            .iter()
            .enumerate()
            .map(|(i, s)| std::iter::once(i.to_string()).chain(populations(s)).collect());
        write_file(path, &csv(&population_header(plan.dim, "step"), rows))?;
    }
    to_value(traj.last().expect("trajectory holds the input"))
}

fn check_hormander(a: &HormanderArgs) -> CliResult<Value> {
    let set = match (&a.set, a.standard) {
        (Some(p), _) => read_json::<ResourceSet>(p)?,
        (None, Some(k)) => {
            if k == 0 || k > 6 {
                return Err(Failure::validation(
                    "invalid_parameter",
                    format!("--standard must be in 1..=6, got {k}"),
                    json!({"argument": "standard"}),
                ));
            }
            standard_two_local_set(k)
        }
        (None, None) => {
            return Err(Failure::validation(
                "invalid_parameter",
                "check-hormander needs --set or --standard",
                json!({}),
            ))
        }
    };
    let report = lie_closure(&set, a.max_depth)?;
    let mut out = to_value(&report)?;
    if let Some(p) = &a.orbit {
        let op = read_matrix(p)?;
        out["orbit_probe"] = to_value(&orbit_span_probe(&op, a.samples, a.seed)?)?;
    }
    Ok(out)
}

fn dilate(a: &DilateArgs) -> CliResult<Value> {
    let op = read_matrix(&a.a)?;
    let mut ns = Vec::new();
    for part in a.n.split(',') {
        let n: usize = part.trim().parse().map_err(|_| {
            Failure::validation(
                "invalid_parameter",
                format!("--n entry {part:?} is not a positive integer"),
                json!({"argument": "n"}),
            )
        })?;
        ns.push(n);
    }
    let curve = dilation_error_curve(&op, a.t, &ns)?;
    let slope = if curve.len() >= 2 && curve.iter().all(|p| p.error > 0.0) {
        let x: Vec<f64> = curve.iter().map(|p| p.n as f64).collect();
        let y: Vec<f64> = curve.iter().map(|p| p.error).collect();
        Some(log_log_slope(&x, &y)?)
    } else {
        None
    };
    if let Some(path) = &a.csv {
        let header = vec!["n".to_string(), "error".to_string()];
        let rows = curve.iter().map(|p| vec![p.n.to_string(), fmt_float(p.error)]);
        write_file(path, &csv(&header, rows))?;
    }
    Ok(json!({"t": a.t, "points": to_value(&curve)?, "slope": slope}))
}

fn gamma_check(a: &GammaArgs) -> CliResult<Value> {
    if let (Some(l), Some(x), Some(y)) = (&a.lindblad, &a.x, &a.y) {
        let l: Lindbladian = read_json(l)?;
        let x = read_matrix(x)?;
        let y = read_matrix(y)?;
        let g = gamma_form(&l, &x, &y)?;
        return Ok(json!({"gamma": to_value(&MatrixJson::from(&g))?}));
    }
    if let (Some(op), Some(basis)) = (&a.a, &a.basis) {
        let op = read_matrix(op)?;
        let raw: Vec<MatrixJson> = read_json(basis)?;
        let mut mats = Vec::with_capacity(raw.len());
        for m in raw {
            mats.push(CMatrix::try_from(m)?);
        }
        let residual = gamma_span_residual(&op, &mats)?;
        return Ok(json!({"residual": residual, "in_span": residual < 1e-8}));
    }
    Err(Failure::validation(
        "invalid_parameter",
        "gamma-check needs --lindblad/--x/--y or --a/--basis",
        json!({}),
    ))
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("LINDREACH_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::validation(
            "invalid_parameter",
            format!("LINDREACH_THREADS must be a positive integer, got {v:?}"),
            json!({"env": "LINDREACH_THREADS"}),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Internal {
            code: "threads".into(),
            message: e.to_string(),
            context: json!({}),
        })
}

fn dispatch(cli: &Cli) -> CliResult<Value> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Lift(a) => run_lift(a),
        Command::LiftPath(a) => run_lift_path(a),
        Command::CertifyTangent(a) => certify_tangent(a),
        Command::Reach(a) => reach(a),
        Command::Porcupine(a) => porcupine(a),
        Command::Plan(a) => plan(a),
        Command::RunPlan(a) => run_plan(a),
        Command::CheckHormander(a) => check_hormander(a),
        Command::Dilate(a) => dilate(a),
        Command::GammaCheck(a) => gamma_check(a),
    }
}

fn emit_failure(f: &Failure) -> ExitCode {
    let (report, code) = f.report();
    eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let mut message = String::new();
            let _ = write!(message, "{}", e.kind());
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let f = Failure::validation(
                "usage",
                first.trim_start_matches("error: ").to_string(),
                json!({"kind": message}),
            );
            return emit_failure(&f);
        }
    };
    match dispatch(&cli) {
        Ok(value) => {
            let mut text = serde_json::to_string_pretty(&value).expect("serializable value");
            text.push('\n');
            match &cli.out {
                Some(path) => match write_file(path, &text) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(f) => emit_failure(&f),
                },
                None => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
            }
        }
        Err(f) => emit_failure(&f),
    }
}
