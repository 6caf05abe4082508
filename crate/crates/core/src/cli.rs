//! `fuzzkit` command-line front end.
//!
//! Exit codes: 0 success, 1 model/domain failure, 2 usage or I/O failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::defuzz::DefuzzMethod;
use crate::engine::{EngineError, SystemKind};
use crate::fisdsl::{self, FisModel, ParseError};
use crate::membership::MembershipFunction;
use crate::parallel::{map_ordered, Execution};
use crate::{fmt_real, fmt_sig12};

#[derive(Debug, Parser)]
#[command(
    name = "fuzzkit",
    version,
    about = "Evaluate and inspect fuzzy inference systems"
)]
struct Cli {
    /// Write output to this file instead of standard output.
    #[arg(short, long, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { path: PathBuf },
    /// Evaluate a model at one crisp input point.
    Eval {
        path: PathBuf,
        /// Crisp input, one per input variable.
        #[arg(long = "in", value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        /// Override the model's defuzzification method (mamdani only).
        #[arg(long, value_name = "METHOD")]
        defuzz: Option<String>,
        /// Clamp out-of-range inputs into their universe instead of failing.
        #[arg(long)]
        clamp: bool,
    },
    /// Tabulate the input-output map over one or two swept inputs as CSV.
    Surface {
        path: PathBuf,
        /// Swept input, given once or twice.
        #[arg(
            long = "var",
            value_name = "NAME=LO:STEP:HI",
            allow_hyphen_values = true
        )]
        vars: Vec<String>,
        /// Fixed value for each input that is not swept.
        #[arg(long = "in", value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        #[arg(long, value_name = "METHOD")]
        defuzz: Option<String>,
        #[arg(long)]
        clamp: bool,
        /// Evaluate points on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Print `x<TAB>y` samples of a membership function.
    Mfplot {
        /// Model file holding the term named by --term.
        path: Option<PathBuf>,
        /// Model term as VAR.TERM.
        #[arg(long, value_name = "VAR.TERM")]
        term: Option<String>,
        /// Inline function such as `bell1(-1,3,4)`.
        #[arg(long, value_name = "SPEC", allow_hyphen_values = true)]
        mf: Option<String>,
        /// Sample grid; defaults to the variable's universe for --term.
        #[arg(long, value_name = "LO:STEP:HI", allow_hyphen_values = true)]
        range: Option<String>,
    },
    /// Print the reference figure datasets and a worked Mamdani evaluation.
    Demo,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Domain(String),
    Parse { file: String, error: ParseError },
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Domain(_) | CliError::Parse { .. } => 1,
        }
    }

    fn render(&self) -> String {
        match self {
            CliError::Usage(m) => format!("error: {m}"),
            CliError::Io(m) => format!("error: {m}"),
            CliError::Domain(m) => format!("error: {m}"),
            CliError::Parse { file, error } => {
                format!("{file}:{}:{}: {}", error.line, error.column, error.message)
            }
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Domain(e.to_string())
    }
}

/// Runs the CLI with `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = dispatch(&cli.command).and_then(|text| match &cli.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write output: {e}"))),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.render());
            e.code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<String, CliError> {
    match cmd {
        Command::Validate { path } => {
            let m = load(path)?;
            Ok(format!(
                "ok: {} kind={} inputs={} rules={}\n",
                m.name,
                m.kind,
                m.inputs().len(),
                m.rules().len()
            ))
        }
        Command::Eval {
            path,
            inputs,
            defuzz,
            clamp,
        } => {
            let assigns = inputs
                .iter()
                .map(|s| parse_assign(s))
                .collect::<Result<Vec<_>, _>>()?;
            let method = defuzz.as_deref().map(parse_method).transpose()?;
            let m = load(path)?;
            let crisp = bind_inputs(&m, &assigns, &[])?;
            let y = eval_point(&m, &crisp, method, *clamp)?;
            Ok(format!("{}\n", fmt_sig12(y)))
        }
        Command::Surface {
            path,
            vars,
            inputs,
            defuzz,
            clamp,
            sequential,
        } => {
            if vars.is_empty() || vars.len() > 2 {
                return Err(CliError::Usage(format!(
                    "surface sweeps 1 or 2 variables (got {} --var)",
                    vars.len()
                )));
            }
            let sweeps = vars
                .iter()
                .map(|s| {
                    let (name, spec) = s.split_once('=').ok_or_else(|| {
                        CliError::Usage(format!("--var expects NAME=LO:STEP:HI, got `{s}`"))
                    })?;
                    Ok((
                        name.trim().to_owned(),
                        parse_range(spec).map_err(CliError::Usage)?,
                    ))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let assigns = inputs
                .iter()
                .map(|s| parse_assign(s))
                .collect::<Result<Vec<_>, _>>()?;
            let method = defuzz.as_deref().map(parse_method).transpose()?;
            let exec = if *sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let m = load(path)?;
            surface(&m, &sweeps, &assigns, method, *clamp, exec)
        }
        Command::Mfplot {
            path,
            term,
            mf,
            range,
        } => {
            let grid = range
                .as_deref()
                .map(parse_range)
                .transpose()
                .map_err(CliError::Usage)?;
            let (mf, grid) = match (path, term, mf) {
                (None, None, Some(spec)) => {
                    let grid = grid.ok_or_else(|| CliError::Usage("--mf needs --range".into()))?;
                    let mf = fisdsl::parse_mf_spec(spec).map_err(|e| {
                        CliError::Domain(format!("bad --mf `{spec}`: {}", e.message))
                    })?;
                    (mf, grid)
                }
                (Some(path), Some(term), None) => {
                    let (var, tname) = term.split_once('.').ok_or_else(|| {
                        CliError::Usage(format!("--term expects VAR.TERM, got `{term}`"))
                    })?;
                    let m = load(path)?;
                    let v = m
                        .inputs()
                        .iter()
                        .chain(match m.output() {
                            crate::engine::OutputVariable::Fuzzy(v) => Some(v),
                            _ => None,
                        })
                        .find(|v| v.name() == var)
                        .ok_or_else(|| {
                            CliError::Domain(format!("model has no variable `{var}`"))
                        })?;
                    let mf = *v.term(tname).ok_or_else(|| {
                        CliError::Domain(format!("variable `{var}` has no term `{tname}`"))
                    })?;
                    let grid = grid.unwrap_or_else(|| v.universe().points().collect());
                    (mf, grid)
                }
                _ => {
                    return Err(CliError::Usage(
                        "mfplot takes either --mf SPEC or a model PATH with --term VAR.TERM".into(),
                    ))
                }
            };
            Ok(mf_lines(&mf, &grid))
        }
        Command::Demo => Ok(demo()),
    }
}

fn load(path: &Path) -> Result<FisModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    fisdsl::parse(&text).map_err(|error| CliError::Parse {
        file: path.display().to_string(),
        error,
    })
}

fn parse_method(s: &str) -> Result<DefuzzMethod, CliError> {
    s.parse()
        .map_err(|e: crate::defuzz::UnknownMethod| CliError::Usage(e.to_string()))
}

fn parse_assign(s: &str) -> Result<(String, f64), CliError> {
    let bad = || CliError::Usage(format!("--in expects NAME=VALUE, got `{s}`"));
    let (name, value) = s.split_once('=').ok_or_else(bad)?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    if name.trim().is_empty() || !value.is_finite() {
        return Err(bad());
    }
    Ok((name.trim().to_owned(), value))
}

/// Grid for `lo:step:hi`, inclusive of `hi` when the step divides the span;
/// a final point within 1e-9 of `hi` is snapped to it.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, String> {
    let bad = |why: &str| format!("bad range `{spec}`: {why}");
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, step, hi] = parts.as_slice() else {
        return Err(bad("expected LO:STEP:HI"));
    };
    let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let (Some(lo), Some(step), Some(hi)) = (num(lo), num(step), num(hi)) else {
        return Err(bad("not a number"));
    };
    if step <= 0.0 {
        return Err(bad("step must be > 0"));
    }
    if hi < lo {
        return Err(bad("hi must be >= lo"));
    }
    let count = ((hi - lo) / step + 1e-9).floor() + 1.0;
    if count > 10_000_000.0 {
        return Err(bad("too many points"));
    }
    let count = count as usize;
    let mut pts: Vec<f64> = (0..count).map(|k| lo + k as f64 * step).collect();
    if let Some(last) = pts.last_mut() {
        if (*last - hi).abs() <= 1e-9 {
            *last = hi;
        }
    }
    Ok(pts)
}

fn bind_inputs(
    m: &FisModel,
    assigns: &[(String, f64)],
    swept: &[&str],
) -> Result<Vec<Option<f64>>, CliError> {
    let mut values: Vec<Option<f64>> = vec![None; m.inputs().len()];
    for (name, v) in assigns {
        let i = m
            .rule_base
            .input_index(name)
            .ok_or_else(|| CliError::Usage(format!("model has no input `{name}`")))?;
        if values[i].is_some() || swept.contains(&name.as_str()) {
            return Err(CliError::Usage(format!(
                "input `{name}` given more than once"
            )));
        }
        values[i] = Some(*v);
    }
    for name in swept {
        if m.rule_base.input_index(name).is_none() {
            return Err(CliError::Usage(format!("model has no input `{name}`")));
        }
    }
    for (i, v) in m.inputs().iter().enumerate() {
        if values[i].is_none() && !swept.contains(&v.name()) {
            return Err(CliError::Usage(format!("missing --in {}=VALUE", v.name())));
        }
    }
    Ok(values)
}

fn eval_point(
    m: &FisModel,
    crisp: &[Option<f64>],
    method: Option<DefuzzMethod>,
    clamp: bool,
) -> Result<f64, EngineError> {
    let crisp: Vec<f64> = crisp.iter().map(|v| v.expect("all inputs bound")).collect();
    let crisp = if clamp {
        m.rule_base.clamp_inputs(&crisp)
    } else {
        crisp
    };
    match method {
        Some(method) if m.kind == SystemKind::Sugeno => Err(EngineError::DefuzzOnSugeno { method }),
        Some(method) => m.rule_base.evaluate_with(&crisp, method),
        None => m.rule_base.evaluate(&crisp),
    }
}

fn surface(
    m: &FisModel,
    sweeps: &[(String, Vec<f64>)],
    assigns: &[(String, f64)],
    method: Option<DefuzzMethod>,
    clamp: bool,
    exec: Execution,
) -> Result<String, CliError> {
    if sweeps.len() == 2 && sweeps[0].0 == sweeps[1].0 {
        return Err(CliError::Usage(format!("`{}` swept twice", sweeps[0].0)));
    }
    let swept: Vec<&str> = sweeps.iter().map(|(n, _)| n.as_str()).collect();
    let base = bind_inputs(m, assigns, &swept)?;
    if let (Some(DefuzzMethod::WeightedAverage), SystemKind::Mamdani) = (method, m.kind) {
        if !m.rule_base.is_singleton_system() {
            return Err(EngineError::WeightedAverageNeedsSingletons.into());
        }
    }
    if let (Some(method), SystemKind::Sugeno) = (method, m.kind) {
        return Err(EngineError::DefuzzOnSugeno { method }.into());
    }
    let idx: Vec<usize> = swept
        .iter()
        .map(|n| m.rule_base.input_index(n).expect("checked in bind_inputs"))
        .collect();

    // Row-major: the first swept variable is the outer loop.
    let mut points: Vec<Vec<f64>> = Vec::new();
    match sweeps {
        [(_, xs)] => points.extend(xs.iter().map(|&x| vec![x])),
        [(_, xs), (_, ys)] => {
            for &x in xs {
                points.extend(ys.iter().map(|&y| vec![x, y]));
            }
        }
        _ => unreachable!("1 or 2 sweeps"),
    }
    let results = map_ordered(&points, exec, |coords| {
        let mut crisp = base.clone();
        for (&i, &c) in idx.iter().zip(coords) {
            crisp[i] = Some(c);
        }
        eval_point(m, &crisp, method, clamp).ok()
    });

    let mut out = String::new();
    let _ = writeln!(out, "{},out", swept.join(","));
    let mut failed = 0usize;
    for (coords, y) in points.iter().zip(&results) {
        for c in coords {
            let _ = write!(out, "{},", fmt_real(*c));
        }
        match y {
            Some(y) => {
                let _ = writeln!(out, "{}", fmt_real(*y));
            }
            None => {
                failed += 1;
                out.push_str("nan\n");
            }
        }
    }
    if failed > 0 {
        let _ = writeln!(out, "# failed points: {failed}");
    }
    Ok(out)
}

fn mf_lines(mf: &MembershipFunction, grid: &[f64]) -> String {
    let mut out = String::new();
    for &x in grid {
        let _ = writeln!(out, "{}\t{}", fmt_real(x), fmt_real(mf.eval(x)));
    }
    out
}

/// The six reference datasets: (section, function, range).
pub const FIGURES: [(&str, MembershipFunction, &str); 6] = [
    (
        "fig2",
        MembershipFunction::Bell1 {
            a: -1.0,
            b: 3.0,
            c: 4.0,
        },
        "0:0.1:10",
    ),
    (
        "fig3",
        MembershipFunction::Bell2 {
            a: -1.0,
            b: 3.0,
            c: 4.0,
        },
        "0:0.1:10",
    ),
    (
        "fig4",
        MembershipFunction::Sigmoid { a: 1.0, c: 5.0 },
        "0:0.1:10",
    ),
    (
        "fig5",
        MembershipFunction::Trapeze {
            a: 1.0,
            b: 0.0,
            c: 0.0,
        },
        "0:0.1:10",
    ),
    (
        "fig6",
        MembershipFunction::Trapeze {
            a: 2.0,
            b: 0.0,
            c: 0.0,
        },
        "-10:5:10",
    ),
    (
        "fig7",
        MembershipFunction::Trapeze {
            a: 2.0,
            b: 2.0,
            c: 2.0,
        },
        "0:1:10",
    ),
];

const DEMO_MODEL: &str = "\
system demo kind=mamdani
config and=min implication=clip defuzz=centroid resolution=101
input error range [-10, 10]
  term negative trapeze(20, 0, -10)
  term positive trapeze(20, 0, 10)
output command range [0, 10]
  term low trapeze(4, 0, 2)
  term high trapeze(4, 0, 8)
rule: if error is negative then command is high
rule: if error is positive then command is low
";

const DEMO_INPUT: f64 = -5.0;

fn demo() -> String {
    let mut out = String::new();
    for (name, mf, range) in FIGURES {
        let grid = parse_range(range).expect("static range");
        let _ = writeln!(out, "## {name} {mf} x={range}");
        out.push_str(&mf_lines(&mf, &grid));
        out.push('\n');
    }
    let model = fisdsl::parse(DEMO_MODEL).expect("demo model is valid");
    let rb = &model.rule_base;
    let input = [DEMO_INPUT];
    let _ = writeln!(out, "## pipeline");
    out.push_str(&fisdsl::serialize(&model));
    let _ = writeln!(out, "input error={}", fmt_real(DEMO_INPUT));
    for (term, g) in crate::engine::fuzzify(&rb.inputs()[0], DEMO_INPUT).expect("in range") {
        let _ = writeln!(out, "grade {term}={}", fmt_real(g));
    }
    let alphas = rb.firing_degrees(&input).expect("in range");
    for (i, a) in alphas.iter().enumerate() {
        let _ = writeln!(out, "rule {} alpha={}", i + 1, fmt_real(*a));
    }
    for method in DefuzzMethod::ALL {
        if method == DefuzzMethod::WeightedAverage {
            continue;
        }
        let y = rb.evaluate_with(&input, method).expect("demo rules fire");
        let _ = writeln!(out, "{method}\t{}", fmt_real(y));
    }
    out
}
