//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 input, 3 numerical, 4 horizon exhausted,
//! 5 bound unreachable under the chosen policy.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::controlled::{
    design_constant_input, tau_controlled, tau_scalar_constant, InputDesign, MomentEvaluation,
    Policy, ScalarVariant,
};
use crate::error::Error;
use crate::model::{AccuracySpec, BoundReport, ControlledSystem, Matrix, UncontrolledSystem};
use crate::sim::{random_orthogonal, tightness_report, trial_rng, PRNG_ID};
use crate::spectral::eigenvalues_sorted;
use crate::threshold::rate_threshold;
use crate::uncontrolled::{
    confusing_gramian, confusing_schur, expected_llr, tau_gramian, tau_spectral,
};

/// Largest state dimension accepted from the command line.
pub const MAX_DIM: usize = 64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_HORIZON: i32 = 4;
pub const EXIT_UNREACHABLE: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "lti-bounds",
    version,
    about = "Sample-complexity lower bounds for identifying linear systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lower bound on the samples needed to identify x_{t+1} = A x_t + w_t.
    BoundUncontrolled(BoundUncontrolledArgs),
    /// Construct a confusing alternative A' at distance in [2 eps, 3 eps).
    Confuse(ConfuseArgs),
    /// Compare the bounds with the Monte Carlo sample complexity of least squares.
    Verify(VerifyArgs),
    /// Lower bound for x_{t+1} = A x_t + B u_t + w_t under a given input policy.
    BoundControlled(BoundControlledArgs),
    /// Choose the constant input amplitude that minimizes the scalar bound.
    DesignInput(DesignInputArgs),
    /// Tabulate both uncontrolled bounds over a family of systems.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Gramian,
    Spectral,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindChoice {
    Schur,
    Gramian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    Paper,
    Theorem2,
}

impl From<VariantChoice> for ScalarVariant {
    fn from(v: VariantChoice) -> Self {
        match v {
            VariantChoice::Paper => ScalarVariant::Paper,
            VariantChoice::Theorem2 => ScalarVariant::Theorem2,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct StateMatrixArgs {
    /// JSON matrix file {"rows", "cols", "data"} holding A
    #[arg(
        long = "A",
        value_name = "FILE",
        required_unless_present = "a_scalar",
        conflicts_with = "a_scalar"
    )]
    #[serde(rename = "A")]
    pub a_file: Option<PathBuf>,
    /// Scalar A, instead of a file
    #[arg(long = "a", value_name = "REAL", allow_negative_numbers = true)]
    #[serde(rename = "a")]
    pub a_scalar: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct AccuracyArgs {
    /// Accuracy radius in Frobenius norm
    #[arg(long)]
    pub eps: f64,
    /// Failure probability, in (0, 1)
    #[arg(long)]
    pub delta: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct OutputArgs {
    /// Write the report here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundUncontrolledArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub system: StateMatrixArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub accuracy: AccuracyArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodChoice,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ConfuseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub system: StateMatrixArgs,
    /// Accuracy radius in Frobenius norm
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "schur")]
    pub kind: KindChoice,
    /// Horizon for the gramian direction and the reported expected log-likelihood ratio
    #[arg(long = "t", default_value_t = 10)]
    pub t: u64,
    /// Also write A' alone as a matrix file
    #[arg(long, value_name = "FILE")]
    pub matrix_output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub system: StateMatrixArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub accuracy: AccuracyArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Longest horizon simulated
    #[arg(long, default_value_t = 1_000_000)]
    pub tmax: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundControlledArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub system: StateMatrixArgs,
    /// JSON matrix file holding B
    #[arg(
        long = "B",
        value_name = "FILE",
        required_unless_present = "b_scalar",
        conflicts_with = "b_scalar"
    )]
    #[serde(rename = "B")]
    pub b_file: Option<PathBuf>,
    /// Scalar B, instead of a file
    #[arg(long = "b", value_name = "REAL", allow_negative_numbers = true)]
    #[serde(rename = "b")]
    pub b_scalar: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub accuracy: AccuracyArgs,
    /// constant:<u1,u2,..> or feedback:<Kfile>,<c1,c2,..>
    #[arg(long, value_name = "POLICY", allow_hyphen_values = true)]
    pub input: String,
    /// Input-input entry of the scalar closed form: (tau-1) u^2 or tau u^2
    #[arg(long, value_enum, default_value = "theorem2")]
    pub variant: VariantChoice,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DesignInputArgs {
    #[arg(long = "a", allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long = "b", allow_negative_numbers = true)]
    pub b: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub accuracy: AccuracyArgs,
    /// Largest admissible input amplitude
    #[arg(long)]
    pub umax: f64,
    #[arg(long, value_enum, default_value = "theorem2")]
    pub variant: VariantChoice,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// scalar:a0:a1:n or scaled-orthogonal:rho0:rho1:n:d
    #[arg(long, allow_hyphen_values = true)]
    pub family: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub accuracy: AccuracyArgs,
    /// Seed for the random orthogonal factors
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutputArgs,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn field(field: &str, e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: format!("{field}: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Dimension(_)
        | Error::InvalidInput(_)
        | Error::Precondition(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_INPUT,
        Error::Convergence { .. } | Error::Numerical(_) | Error::IterationCap { .. } => {
            EXIT_NUMERICAL
        }
        Error::HorizonExhausted { .. } => EXIT_HORIZON,
        Error::Unreachable { .. } => EXIT_UNREACHABLE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), Failure> {
    match cmd {
        Command::BoundUncontrolled(a) => bound_uncontrolled(a),
        Command::Confuse(a) => confuse(a),
        Command::Verify(a) => verify(a),
        Command::BoundControlled(a) => bound_controlled(a),
        Command::DesignInput(a) => design_input(a),
        Command::Sweep(a) => sweep(a),
    }
}

#[derive(Serialize)]
struct Envelope<'a, F: Serialize, R: Serialize> {
    command: &'a str,
    prng: &'a str,
    flags: &'a F,
    #[serde(flatten)]
    result: R,
}

fn emit<F: Serialize, R: Serialize>(
    command: &str,
    flags: &F,
    out: &OutputArgs,
    default: Format,
    result: R,
    csv: impl FnOnce(&R) -> String,
) -> Result<(), Failure> {
    let text = match out.format.unwrap_or(default) {
        Format::Csv => csv(&result),
        Format::Json => {
            let env = Envelope {
                command,
                prng: PRNG_ID,
                flags,
                result,
            };
            let mut s = serde_json::to_string_pretty(&env).map_err(Error::from)?;
            s.push('\n');
            s
        }
    };
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|e| Failure::field("--output", e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_matrix(path: &Path, flag: &str) -> Result<Matrix, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::field(flag, e.into()))?;
    serde_json::from_str::<Matrix>(&text).map_err(|e| Failure::field(flag, e.into()))
}

fn check_dim(d: usize, flag: &str) -> Result<(), Failure> {
    if d > MAX_DIM {
        return Err(Failure::input(format!(
            "{flag}: dimension {d} exceeds the limit of {MAX_DIM}"
        )));
    }
    Ok(())
}

fn load_state_matrix(args: &StateMatrixArgs) -> Result<Matrix, Failure> {
    let a = match (&args.a_file, args.a_scalar) {
        (Some(path), _) => read_matrix(path, "--A")?,
        (None, Some(a)) => {
            Matrix::from_row_major(1, 1, vec![a]).map_err(|e| Failure::field("--a", e))?
        }
        (None, None) => return Err(Failure::input("one of --A or --a is required")),
    };
    if !a.is_square() {
        return Err(Failure::input(format!(
            "--A: A must be square (got {}x{})",
            a.rows(),
            a.cols()
        )));
    }
    check_dim(a.rows(), "--A")?;
    Ok(a)
}

fn accuracy(args: &AccuracyArgs) -> Result<AccuracySpec, Failure> {
    AccuracySpec::new(args.eps, args.delta).map_err(|e| Failure::field("--eps/--delta", e))
}

fn parse_reals(s: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Failure::input(format!("{flag}: '{v}' is not a finite number")))
        })
        .collect()
}

fn curve_csv(reports: &[BoundReport]) -> String {
    let mut s = String::from("method,t,value\n");
    for r in reports {
        for p in &r.curve {
            let _ = writeln!(s, "{},{},{}", r.method.as_str(), p.t, p.value);
        }
    }
    s
}

#[derive(Serialize)]
struct BoundsResult {
    threshold: f64,
    reports: Vec<BoundReport>,
}

fn bound_uncontrolled(args: &BoundUncontrolledArgs) -> Result<(), Failure> {
    let a = load_state_matrix(&args.system)?;
    let spec = accuracy(&args.accuracy)?;
    let mut reports = Vec::new();
    if matches!(args.method, MethodChoice::Gramian | MethodChoice::Both) {
        reports.push(tau_gramian(&a, &spec)?);
    }
    if matches!(args.method, MethodChoice::Spectral | MethodChoice::Both) {
        reports.push(tau_spectral(&a, &spec)?);
    }
    let result = BoundsResult {
        threshold: rate_threshold(&spec),
        reports,
    };
    emit(
        "bound-uncontrolled",
        args,
        &args.out,
        Format::Json,
        result,
        |r| curve_csv(&r.reports),
    )
}

#[derive(Serialize)]
struct ConfuseResult {
    a_prime: Matrix,
    distance: f64,
    kind: crate::uncontrolled::ConfusingKind,
    min_amplitude: f64,
    t: u64,
    expected_llr: f64,
}

fn confuse(args: &ConfuseArgs) -> Result<(), Failure> {
    let a = load_state_matrix(&args.system)?;
    // Only eps enters the construction.
    let spec = AccuracySpec::new(args.eps, 0.5).map_err(|e| Failure::field("--eps", e))?;
    if args.t == 0 {
        return Err(Failure::input("--t: must be at least 1"));
    }
    let inst = match args.kind {
        KindChoice::Schur => confusing_schur(&a, &spec)?,
        KindChoice::Gramian => {
            confusing_gramian(&a, &spec, args.t).map_err(|e| Failure::field("--t", e))?
        }
    };
    let llr = expected_llr(&a, &inst.a_prime, args.t)?;
    let min_amplitude = eigenvalues_sorted(&a)?.min_amplitude();
    if let Some(path) = &args.matrix_output {
        let mut s = serde_json::to_string(&inst.a_prime).map_err(Error::from)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Failure::field("--matrix-output", e.into()))?;
    }
    let result = ConfuseResult {
        a_prime: inst.a_prime,
        distance: inst.distance,
        kind: inst.kind,
        min_amplitude,
        t: args.t,
        expected_llr: llr,
    };
    emit("confuse", args, &args.out, Format::Json, result, |r| {
        let kind = match r.kind {
            crate::uncontrolled::ConfusingKind::GramianDirection => "gramian_direction",
            crate::uncontrolled::ConfusingKind::SchurSpectral => "schur_spectral",
        };
        format!(
            "distance,kind,min_amplitude,t,expected_llr\n{},{},{},{},{}\n",
            r.distance, kind, r.min_amplitude, r.t, r.expected_llr
        )
    })
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let a = load_state_matrix(&args.system)?;
    let spec = accuracy(&args.accuracy)?;
    if args.trials == 0 {
        return Err(Failure::input("--trials: must be positive"));
    }
    let sys = UncontrolledSystem::new(a)?;
    let report = tightness_report(&sys, &spec, args.trials, args.seed, args.tmax)?;
    emit("verify", args, &args.out, Format::Json, report, |r| {
        let mut s = String::from("t,fraction\n");
        for p in &r.success_curve {
            let _ = writeln!(s, "{},{}", p.t, p.fraction);
        }
        s
    })
}

fn parse_policy(spec: &str, sys: &ControlledSystem) -> Result<Policy, Failure> {
    let (kind, rest) = spec.split_once(':').ok_or_else(|| {
        Failure::input("--input: expected constant:<vec> or feedback:<Kfile>,<cvec>")
    })?;
    let policy = match kind {
        "constant" => Policy::Constant(DVector::from_vec(parse_reals(rest, "--input")?)),
        "feedback" => {
            let (file, c) = match rest.split_once(',') {
                Some((f, c)) => (f, Some(c)),
                None => (rest, None),
            };
            let k = read_matrix(Path::new(file), "--input")?.into_dmatrix();
            let c = match c {
                Some(c) => DVector::from_vec(parse_reals(c, "--input")?),
                None => DVector::zeros(k.nrows()),
            };
            Policy::Feedback { k, c }
        }
        other => {
            return Err(Failure::input(format!(
                "--input: unknown policy '{other}', expected constant or feedback"
            )))
        }
    };
    policy
        .validate(sys)
        .map_err(|e| Failure::field("--input", e))?;
    Ok(policy)
}

#[derive(Serialize)]
struct ClosedForm {
    variant: &'static str,
    tau: u64,
}

#[derive(Serialize)]
struct ControlledResult {
    threshold: f64,
    report: BoundReport,
    closed_form: Option<ClosedForm>,
}

fn bound_controlled(args: &BoundControlledArgs) -> Result<(), Failure> {
    let a = load_state_matrix(&args.system)?;
    let b = match (&args.b_file, args.b_scalar) {
        (Some(path), _) => read_matrix(path, "--B")?,
        (None, Some(b)) => {
            Matrix::from_row_major(1, 1, vec![b]).map_err(|e| Failure::field("--b", e))?
        }
        (None, None) => return Err(Failure::input("one of --B or --b is required")),
    };
    check_dim(b.cols(), "--B")?;
    let sys = ControlledSystem::new(a, b).map_err(|e| Failure::field("--B", e))?;
    let spec = accuracy(&args.accuracy)?;
    let policy = parse_policy(&args.input, &sys)?;
    let report = tau_controlled(&sys, &spec, &policy, MomentEvaluation::Exact)?;
    let closed_form = match &policy {
        Policy::Constant(u) if sys.state_dim() == 1 && sys.input_dim() == 1 => {
            let variant = ScalarVariant::from(args.variant);
            let r =
                tau_scalar_constant(sys.a().get(0, 0), sys.b().get(0, 0), &spec, u[0], variant)?;
            Some(ClosedForm {
                variant: variant.as_str(),
                tau: r.tau,
            })
        }
        _ => None,
    };
    let result = ControlledResult {
        threshold: rate_threshold(&spec),
        report,
        closed_form,
    };
    emit(
        "bound-controlled",
        args,
        &args.out,
        Format::Json,
        result,
        |r| curve_csv(std::slice::from_ref(&r.report)),
    )
}

fn design_input(args: &DesignInputArgs) -> Result<(), Failure> {
    if !(args.a.is_finite() && args.b.is_finite()) {
        return Err(Failure::input("--a/--b: must be finite"));
    }
    let spec = accuracy(&args.accuracy)?;
    let design: InputDesign =
        design_constant_input(args.a, args.b, &spec, args.umax, args.variant.into())
            .map_err(|e| Failure::field("--umax", e))?;
    emit("design-input", args, &args.out, Format::Json, design, |d| {
        let mut s = String::from("u,tau\n");
        for (u, t) in &d.scan {
            match t {
                Some(t) => {
                    let _ = writeln!(s, "{u},{t}");
                }
                None => {
                    let _ = writeln!(s, "{u},");
                }
            }
        }
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Scalar {
        a0: f64,
        a1: f64,
        n: usize,
    },
    ScaledOrthogonal {
        rho0: f64,
        rho1: f64,
        n: usize,
        d: usize,
    },
}

fn parse_family(s: &str) -> Result<Family, Failure> {
    let bad = || {
        Failure::input(format!(
            "--family: malformed '{s}', expected scalar:a0:a1:n or scaled-orthogonal:rho0:rho1:n:d"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    let real = |v: &str| {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(bad)
    };
    let count = |v: &str| v.parse::<usize>().ok().filter(|&n| n >= 1).ok_or_else(bad);
    match parts.as_slice() {
        ["scalar", a0, a1, n] => Ok(Family::Scalar {
            a0: real(a0)?,
            a1: real(a1)?,
            n: count(n)?,
        }),
        ["scaled-orthogonal", r0, r1, n, d] => {
            let d = count(d)?;
            check_dim(d, "--family")?;
            Ok(Family::ScaledOrthogonal {
                rho0: real(r0)?,
                rho1: real(r1)?,
                n: count(n)?,
                d,
            })
        }
        _ => Err(bad()),
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Serialize)]
struct SweepRow {
    param: f64,
    tau_gramian: u64,
    tau_spectral: u64,
    threshold: f64,
}

#[derive(Serialize)]
struct SweepResult {
    rows: Vec<SweepRow>,
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let family = parse_family(&args.family)?;
    let spec = accuracy(&args.accuracy)?;
    let threshold = rate_threshold(&spec);
    let systems: Vec<(f64, Matrix)> = match family {
        Family::Scalar { a0, a1, n } => grid(a0, a1, n)
            .into_iter()
            .map(|a| (a, Matrix::scalar(a)))
            .collect(),
        Family::ScaledOrthogonal { rho0, rho1, n, d } => grid(rho0, rho1, n)
            .into_iter()
            .enumerate()
            .map(|(i, rho)| {
                let mut rng = trial_rng(args.seed, i as u64);
                let o: DMatrix<f64> = random_orthogonal(d, &mut rng);
                Ok((rho, Matrix::from_dmatrix(o * rho)?))
            })
            .collect::<Result<_, Error>>()?,
    };
    let rows = systems
        .iter()
        .map(|(param, a)| {
            Ok(SweepRow {
                param: *param,
                tau_gramian: tau_gramian(a, &spec)?.tau,
                tau_spectral: tau_spectral(a, &spec)?.tau,
                threshold,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    emit(
        "sweep",
        args,
        &args.out,
        Format::Csv,
        SweepResult { rows },
        |r| {
            let mut s = String::from("param,tau_gramian,tau_spectral,threshold\n");
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    row.param, row.tau_gramian, row.tau_spectral, row.threshold
                );
            }
            s
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_parsing() {
        assert_eq!(
            parse_family("scalar:0:1:11").unwrap(),
            Family::Scalar {
                a0: 0.0,
                a1: 1.0,
                n: 11
            }
        );
        assert_eq!(
            parse_family("scaled-orthogonal:0.5:1.1:4:3").unwrap(),
            Family::ScaledOrthogonal {
                rho0: 0.5,
                rho1: 1.1,
                n: 4,
                d: 3
            }
        );
        for bad in [
            "scalar:0:1",
            "scalar:x:1:3",
            "scalar:0:1:0",
            "cubic:0:1:3",
            "scaled-orthogonal:0:1:3:65",
        ] {
            assert_eq!(parse_family(bad).unwrap_err().code, EXIT_INPUT, "{bad}");
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[10], 1.0);
        assert_eq!(grid(0.3, 0.9, 1), vec![0.3]);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::InvalidInput(String::new())), EXIT_INPUT);
        assert_eq!(
            exit_code(&Error::Convergence { residual: 1.0 }),
            EXIT_NUMERICAL
        );
        assert_eq!(
            exit_code(&Error::IterationCap {
                cap: 1,
                threshold: 1.0
            }),
            EXIT_NUMERICAL
        );
        assert_eq!(
            exit_code(&Error::HorizonExhausted {
                horizon: 1,
                final_fraction: 0.0
            }),
            EXIT_HORIZON
        );
        assert_eq!(
            exit_code(&Error::Unreachable { direction: vec![] }),
            EXIT_UNREACHABLE
        );
    }

    #[test]
    fn reals_parsing() {
        assert_eq!(
            parse_reals("1, -2.5,3", "--input").unwrap(),
            vec![1.0, -2.5, 3.0]
        );
        assert!(parse_reals("1,nan", "--input").is_err());
        assert!(parse_reals("", "--input").is_err());
    }
}
