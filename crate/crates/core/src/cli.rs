//! Command-line front end.
//!
//! Exit codes: 0 clean run (whatever the verdicts), 1 internal failure,
//! 2 input error, 3 inconsistent data, 4 disagreement between methods or
//! with the oracle.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometric::reduction_geometric_test;
use crate::informativity::{
    consistent_reduction, parse_properties, reduction_test, Property, Verdict,
};
use crate::linalg::{gaussian, Matrix, Tolerances};
use crate::oracle::{cross_validate, ValidateOptions, ValidationReport};
use crate::problem::{
    load_problem, simulate, MatrixSpec, NoisePattern, ProblemFile, SystemStructure,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;
pub const EXIT_DISAGREEMENT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "informativity",
    version,
    about = "Data informativity for structural system properties"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide informativity for the requested properties.
    Check(CheckArgs),
    /// Cross-check verdicts against sampled compatible systems.
    Validate(ValidateArgs),
    /// Generate a problem file from a true system.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Pencil,
    Geometric,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Comma-separated property names, or `all`.
    #[arg(long, default_value = "all")]
    pub properties: String,
    /// Relative rank tolerance; overrides the problem file.
    #[arg(long)]
    pub rank_rtol: Option<f64>,
    /// Width of the marginal band around the unit circle.
    #[arg(long)]
    pub boundary_delta: Option<f64>,
    /// Seed for random sampling points and validation samples.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Write the report here instead of stdout.
    /// Write the problem file here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rank test on the pencil, subspace iteration, or both compared.
    #[arg(long, value_enum, default_value = "pencil")]
    pub method: MethodChoice,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Compatible systems sampled per property.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// True system: A, B, C, D, optional E, F, and optional x0, U, W.
    #[arg(long)]
    pub system: PathBuf,
    /// Number of samples T; required unless the system file fixes U.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Seed for generated x0, U and W.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of generated noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Result of one invocation, with everything that would go to the terminal.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Per-property entry of a check report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub property: Property,
    pub pencil: Option<Verdict>,
    pub geometric: Option<Verdict>,
    /// Present when both methods ran.
    pub agree: Option<bool>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub problem: String,
    pub method: MethodChoice,
    pub pattern: NoisePattern,
    pub tolerances: Tolerances,
    pub results: Vec<CheckEntry>,
    pub disagreements: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateReport {
    pub schema_version: u32,
    pub problem: String,
    pub tolerances: Tolerances,
    pub validation: ValidationReport,
    pub elapsed_ms: f64,
}

/// True system description read by `simulate`.
#[derive(Debug, Clone, Deserialize)]
#[allow(non_snake_case)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub C: Vec<Vec<f64>>,
    pub D: Vec<Vec<f64>>,
    #[serde(default)]
    pub E: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub F: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub U: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub W: Option<Vec<Vec<f64>>>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Inconsistent(_) => EXIT_INCONSISTENT,
            Error::Numerical(_) => EXIT_INTERNAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

/// Parse arguments (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Invocation
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let text = e.render().to_string();
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let (stdout, stderr) = if e.use_stderr() {
                (String::new(), text)
            } else {
                (text, String::new())
            };
            Invocation {
                code,
                stdout,
                stderr,
            }
        }
    }
}

pub fn run(cli: Cli) -> Invocation {
    let outcome = match &cli.command {
        Command::Check(args) => cmd_check(args).and_then(|(text, code)| {
            emit(args.common.output.as_deref(), text).map(|stdout| (stdout, code))
        }),
        Command::Validate(args) => cmd_validate(args).and_then(|(text, code)| {
            emit(args.common.output.as_deref(), text).map(|stdout| (stdout, code))
        }),
        Command::Simulate(args) => cmd_simulate(args)
            .and_then(|text| emit(args.output.as_deref(), text).map(|s| (s, EXIT_OK))),
    };
    match outcome {
        Ok((stdout, code)) => Invocation {
            code,
            stdout,
            stderr: String::new(),
        },
        Err(f) => Invocation {
            code: f.code,
            stdout: String::new(),
            stderr: format!("error: {}\n", f.message),
        },
    }
}

/// Write to `path` if given, otherwise hand the text back for stdout.
fn emit(path: Option<&Path>, text: String) -> Result<String, Failure> {
    match path {
        Some(p) => {
            let mut f = std::fs::File::create(p)
                .map_err(|e| input_error(format!("cannot write {}: {e}", p.display())))?;
            f.write_all(text.as_bytes())
                .map_err(|e| input_error(format!("cannot write {}: {e}", p.display())))?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn load(
    common: &Common,
) -> Result<(SystemStructure, crate::problem::DataSet, Tolerances), Failure> {
    let (sys, data, mut tol) = load_problem(&common.problem)?;
    if let Some(v) = common.rank_rtol {
        tol.rank_rtol = v;
    }
    if let Some(v) = common.boundary_delta {
        tol.boundary_delta = v;
    }
    if let Some(s) = common.seed {
        tol.seed = s;
    }
    tol.validate()?;
    Ok((sys, data, tol))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure {
            code: EXIT_INTERNAL,
            message: format!("serializing report: {e}"),
        })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Decisions only: `informative`, `not informative` and so on.
fn word(v: &Verdict) -> String {
    format!("{:?}", v.informative)
        .chars()
        .flat_map(|c| {
            if c.is_uppercase() {
                vec![' ', c.to_ascii_lowercase()]
            } else {
                vec![c]
            }
        })
        .collect::<String>()
        .trim()
        .to_string()
}

fn cmd_check(args: &CheckArgs) -> Result<(String, i32), Failure> {
    let start = Instant::now();
    let (sys, data, tol) = load(&args.common)?;
    let props = parse_properties(&args.common.properties)?;
    if args.method == MethodChoice::Geometric {
        if let Some(p) = props.iter().find(|p| !p.has_geometric_test()) {
            return Err(input_error(format!(
                "{p} has no geometric test; use --method pencil or both"
            )));
        }
    }
    let red = consistent_reduction(&sys, &data, &tol)?;
    let mut results = Vec::with_capacity(props.len());
    for &prop in &props {
        let t0 = Instant::now();
        // Left-invertibility has only the subspace test; run it once.
        let pencil = match args.method {
            MethodChoice::Geometric => None,
            MethodChoice::Both if prop == Property::LeftInvertibility => None,
            _ => Some(reduction_test(&red, &sys, prop, &tol)?),
        };
        let geometric = match args.method {
            MethodChoice::Pencil => None,
            _ if prop.has_geometric_test() => {
                Some(reduction_geometric_test(&red, &sys, prop, &tol)?)
            }
            _ => None,
        };
        let agree = match (&pencil, &geometric) {
            (Some(a), Some(b)) => Some(a.informative == b.informative),
            _ => None,
        };
        results.push(CheckEntry {
            property: prop,
            pencil,
            geometric,
            agree,
            elapsed_ms: ms(t0),
        });
    }
    let disagreements = results.iter().filter(|r| r.agree == Some(false)).count();
    let report = CheckReport {
        schema_version: SCHEMA_VERSION,
        problem: args.common.problem.display().to_string(),
        method: args.method,
        pattern: red.pattern,
        tolerances: tol,
        results,
        disagreements,
        elapsed_ms: ms(start),
    };
    let code = if disagreements > 0 {
        EXIT_DISAGREEMENT
    } else {
        EXIT_OK
    };
    let text = match args.common.format {
        Format::Json => to_json(&report)?,
        Format::Text => check_text(&report),
    };
    Ok((text, code))
}

fn check_text(report: &CheckReport) -> String {
    let mut out = format!("problem {} ({:?} noise)\n", report.problem, report.pattern);
    for r in &report.results {
        for v in [&r.pencil, &r.geometric].into_iter().flatten() {
            out += &format!(
                "{:<24} {:<16} [{:?}] {}\n",
                r.property.name(),
                word(v),
                v.method,
                v.explanation
            );
        }
        if r.agree == Some(false) {
            out += &format!("{:<24} METHODS DISAGREE\n", r.property.name());
        }
    }
    out
}

fn cmd_validate(args: &ValidateArgs) -> Result<(String, i32), Failure> {
    let start = Instant::now();
    let (sys, data, tol) = load(&args.common)?;
    let props = parse_properties(&args.common.properties)?;
    let opts = ValidateOptions {
        samples: args.samples,
        seed: args.common.seed.unwrap_or(ValidateOptions::default().seed),
        ..ValidateOptions::default()
    };
    let validation = cross_validate(&sys, &data, &props, opts, &tol)?;
    let code = validate_exit_code(&validation);
    let report = ValidateReport {
        schema_version: SCHEMA_VERSION,
        problem: args.common.problem.display().to_string(),
        tolerances: tol,
        validation,
        elapsed_ms: ms(start),
    };
    let text = match args.common.format {
        Format::Json => to_json(&report)?,
        Format::Text => validate_text(&report),
    };
    Ok((text, code))
}

pub fn validate_exit_code(report: &ValidationReport) -> i32 {
    if report.critical > 0 {
        EXIT_DISAGREEMENT
    } else {
        EXIT_OK
    }
}

fn validate_text(report: &ValidateReport) -> String {
    let v = &report.validation;
    let mut out = format!(
        "problem {}: {} samples, seed {}, {} critical\n",
        report.problem, v.samples, v.seed, v.critical
    );
    for r in &v.results {
        out += &format!(
            "{:<24} {:<16} {:<10} {}\n",
            r.property.name(),
            word(&r.verdict),
            format!("{:?}", r.agreement).to_uppercase(),
            r.note
        );
    }
    out
}

fn rows(field: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Matrix, Failure> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r * c == 0 && shape.0 * shape.1 == 0 {
        return Ok(Matrix::zeros(shape.0, shape.1));
    }
    if rows.iter().any(|row| row.len() != c) || (r, c) != shape {
        return Err(input_error(format!(
            "{field} is {r}x{c}, expected {}x{}",
            shape.0, shape.1
        )));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// An omitted noise matrix means no noise enters there.
fn optional(
    field: &str,
    given: Option<&[Vec<f64>]>,
    shape: (usize, usize),
) -> Result<Matrix, Failure> {
    match given {
        Some(r) => rows(field, r, shape),
        None => Ok(Matrix::zeros(shape.0, shape.1)),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let text = std::fs::read_to_string(&args.system)
        .map_err(|e| input_error(format!("cannot read {}: {e}", args.system.display())))?;
    let file: SystemFile = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("invalid system file: {e}")))?;
    let n = file.A.len();
    let m = file.B.first().map_or(0, Vec::len);
    let p = file.C.len();
    let rw = file
        .E
        .as_ref()
        .and_then(|e| e.first().map(Vec::len))
        .or_else(|| file.F.as_ref().and_then(|f| f.first().map(Vec::len)))
        .unwrap_or(0);
    let a = rows("A", &file.A, (n, n))?;
    let sys = SystemStructure::new(
        rows("B", &file.B, (n, m))?,
        rows("C", &file.C, (p, n))?,
        rows("D", &file.D, (p, m))?,
        optional("E", file.E.as_deref(), (n, rw))?,
        optional("F", file.F.as_deref(), (p, rw))?,
    )?;
    let t = match (&file.U, args.horizon) {
        (Some(u), _) if u.first().is_some_and(|r| !r.is_empty()) => u[0].len(),
        (_, Some(t)) => t,
        _ => {
            return Err(input_error(
                "--horizon is required when the system file has no U",
            ))
        }
    };
    if t == 0 {
        return Err(input_error("horizon must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let x0 = match &file.x0 {
        Some(v) if v.len() == n => Matrix::from_column_slice(n, 1, v),
        Some(v) => {
            return Err(input_error(format!(
                "x0 has {} entries, expected {n}",
                v.len()
            )))
        }
        None => gaussian(&mut rng, n, 1),
    };
    let u = match &file.U {
        Some(u) => rows("U", u, (m, t))?,
        None => gaussian(&mut rng, m, t),
    };
    let w = match &file.W {
        Some(w) => rows("W", w, (rw, t))?,
        None => gaussian(&mut rng, rw, t) * args.noise_scale,
    };
    let data = simulate(&a, &sys, &x0, &u, &w)?;
    let mut problem = ProblemFile::from_parts(&sys, &data);
    problem.E = Some(MatrixSpec::from_matrix(&sys.e));
    to_json(&problem)
}
