//! Refinement studies: configuration, the per-level solve, and table output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::error::{Error, Result};
use crate::forms::{Discretization, FormVariant, ModelParams, ProblemKind};
use crate::mms::{ExactFields, FieldJet, InitialGuess, ManufacturedCase};
use crate::newton::{newton_solve, NewtonOptions, NewtonReport};
use crate::norms::{error_l2_h1, error_l2_h1_pair, error_triple_norm, ErrorReport, LevelErrors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Case {
    DecoupledU,
    DecoupledQ,
    Coupled,
}

impl Case {
    pub fn kind(self) -> ProblemKind {
        match self {
            Case::DecoupledU => ProblemKind::P1,
            Case::DecoupledQ => ProblemKind::P2,
            Case::Coupled => ProblemKind::Coupled,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::DecoupledU => "decoupled_u",
            Case::DecoupledQ => "decoupled_q",
            Case::Coupled => "coupled",
        }
    }

    pub fn from_name(s: &str) -> Option<Case> {
        [Case::DecoupledU, Case::DecoupledQ, Case::Coupled]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Consistent,
    Inconsistent,
}

impl From<FormArg> for FormVariant {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Consistent => FormVariant::Consistent,
            FormArg::Inconsistent => FormVariant::Inconsistent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuessArg {
    HalfExact,
    Exact,
}

impl From<GuessArg> for InitialGuess {
    fn from(g: GuessArg) -> Self {
        match g {
            GuessArg::HalfExact => InitialGuess::HalfExact,
            GuessArg::Exact => InitialGuess::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub case: Case,
    pub deg_u: usize,
    pub deg_q: usize,
    pub n_list: Vec<usize>,
    pub params: ModelParams,
    pub newton: NewtonOptions,
    pub initial_guess: InitialGuess,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    /// Solve refinement levels concurrently, one thread per level.
    pub parallel_levels: bool,
}

impl StudyConfig {
    /// Defaults for a case: `q = 30`, `ε = 5e4` and the inconsistent form for
    /// the coupled system, `q = 0`, `ε = 1` and the consistent form otherwise.
    pub fn new(case: Case) -> Self {
        let mut params = ModelParams::default();
        let (deg_u, deg_q) = match case {
            Case::DecoupledU => (2, 1),
            Case::DecoupledQ => (2, 1),
            Case::Coupled => (3, 2),
        };
        if case == Case::Coupled {
            params.q = 30.0;
            params.epsilon = 5e4;
            params.variant = FormVariant::Inconsistent;
        }
        Self {
            case,
            deg_u,
            deg_q,
            n_list: vec![6, 12, 24, 48],
            params,
            newton: NewtonOptions::default(),
            initial_guess: InitialGuess::HalfExact,
            output_path: None,
            output_format: OutputFormat::Csv,
            parallel_levels: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.deg_u < 2 {
            return bad(format!("deg_u must be >= 2, got {}", self.deg_u));
        }
        if self.deg_q < 1 {
            return bad(format!("deg_q must be >= 1, got {}", self.deg_q));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return bad("n_list must be non-empty with positive entries".into());
        }
        if let Some(w) = self.n_list.windows(2).find(|w| w[1] != 2 * w[0]) {
            return bad(format!("n_list must double at each level, found {} then {}", w[0], w[1]));
        }
        if self.case != Case::Coupled && self.params.q != 0.0 {
            return bad(format!("q must be 0 for the {} case", self.case.name()));
        }
        if !(self.newton.tol_abs > 0.0 && self.newton.tol_rel > 0.0 && self.newton.tol_step > 0.0) || self.newton.max_iter == 0 {
            return bad("Newton tolerances must be positive and max_iter >= 1".into());
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Errors for every completed level, with the study's identity.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub case: Case,
    pub deg_u: usize,
    pub deg_q: usize,
    pub errors: ErrorReport,
}

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(Error),

    #[error("Newton did not converge at N = {n} after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        n: usize,
        iterations: usize,
        residual: f64,
        partial: Box<StudyReport>,
    },

    #[error("N = {n}: {source}")]
    Solve {
        n: usize,
        source: Error,
        partial: Box<StudyReport>,
    },

    #[error(transparent)]
    Output(Error),
}

impl StudyError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StudyError::Config(_) => 3,
            StudyError::NotConverged { .. } | StudyError::Solve { .. } => 2,
            StudyError::Output(_) => 1,
        }
    }

    /// Levels completed before the failure, if any.
    pub fn partial(&self) -> Option<&StudyReport> {
        match self {
            StudyError::NotConverged { partial, .. } | StudyError::Solve { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Outcome of one refinement level.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub errors: LevelErrors,
    pub newton: NewtonReport,
}

/// Builds, solves and measures one level of `config` on an `n × n` mesh.
pub fn solve_level(config: &StudyConfig, n: usize) -> Result<LevelOutcome> {
    let kind = config.case.kind();
    let disc = Discretization::new(n, config.deg_u, config.deg_q, kind)?;
    let mms = ManufacturedCase::new(kind);
    let initial = mms.initial_state(config.initial_guess, &disc.u_map, &disc.q_map);
    let (state, newton) = newton_solve(&disc, initial, &config.params, Some(&mms), &config.newton)?;
    let pick = |f: fn(&ExactFields) -> FieldJet| move |p: [f64; 2]| f(&mms.exact(p));
    let mut errors = LevelErrors {
        n_per_side: n,
        eu_l2: None,
        eu_h1: None,
        eu_triple: None,
        eq_l2: None,
        eq_h1: None,
        newton_iters: newton.iterations,
    };
    if kind.has_u() {
        let u = pick(|e| e.u);
        let (l2, h1) = error_l2_h1(&disc.u_map, &disc.mesh, &state.u, &u)?;
        errors.eu_l2 = Some(l2);
        errors.eu_h1 = Some(h1);
        errors.eu_triple = Some(error_triple_norm(&disc.u_map, &disc.mesh, &state.u, &u)?);
    }
    if kind.has_q() {
        let (q11, q12) = (pick(|e| e.q11), pick(|e| e.q12));
        let (l2, h1) = error_l2_h1_pair(&disc.q_map, &disc.mesh, [&state.q11, &state.q12], [&q11, &q12])?;
        errors.eq_l2 = Some(l2);
        errors.eq_h1 = Some(h1);
    }
    Ok(LevelOutcome { errors, newton })
}

/// Runs every level of the study and writes the table if an output path is set.
///
/// A level whose Newton iteration fails stops the study; the levels before it
/// come back in the error.
pub fn run_study(config: &StudyConfig) -> std::result::Result<StudyReport, StudyError> {
    config.validate().map_err(StudyError::Config)?;
    let outcomes: Vec<Result<LevelOutcome>> = if config.parallel_levels {
        std::thread::scope(|s| {
            let handles: Vec<_> = config
                .n_list
                .iter()
                .map(|&n| s.spawn(move || solve_level(config, n)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("level thread panicked"))
                .collect()
        })
    } else {
        let mut v = Vec::new();
        for &n in &config.n_list {
            let r = solve_level(config, n);
            let stop = !matches!(&r, Ok(o) if o.newton.solved());
            v.push(r);
            if stop {
                break;
            }
        }
        v
    };

    let mut report = StudyReport {
        case: config.case,
        deg_u: config.deg_u,
        deg_q: config.deg_q,
        errors: ErrorReport::default(),
    };
    for (&n, outcome) in config.n_list.iter().zip(outcomes) {
        match outcome {
            Ok(o) if o.newton.solved() => report.errors.levels.push(o.errors),
            Ok(o) => {
                return Err(StudyError::NotConverged {
                    n,
                    iterations: o.newton.iterations,
                    residual: *o.newton.residual_history.last().unwrap(),
                    partial: Box::new(report),
                })
            }
            Err(source) => {
                return Err(StudyError::Solve {
                    n,
                    source,
                    partial: Box::new(report),
                })
            }
        }
    }
    if let Some(path) = &config.output_path {
        write_outputs(&report, path, config.output_format).map_err(StudyError::Output)?;
    }
    Ok(report)
}

const HEADER: [&str; 15] = [
    "case",
    "deg_u",
    "deg_q",
    "N",
    "eq_l2",
    "eq_l2_rate",
    "eq_h1",
    "eq_h1_rate",
    "eu_l2",
    "eu_l2_rate",
    "eu_h1",
    "eu_h1_rate",
    "eu_triple",
    "eu_triple_rate",
    "newton_iters",
];

type Cells = [String; 15];

fn rows(report: &StudyReport, fmt_err: fn(f64) -> String, fmt_rate: fn(f64) -> String) -> Vec<Cells> {
    let levels = &report.errors.levels;
    levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut out: Vec<String> = vec![
                report.case.name().into(),
                report.deg_u.to_string(),
                report.deg_q.to_string(),
                l.n_per_side.to_string(),
            ];
            for (_, col) in crate::norms::COLUMNS {
                out.push(col(l).map(fmt_err).unwrap_or_default());
                out.push(report.errors.order_at(col, i).map(fmt_rate).unwrap_or_default());
            }
            out.push(l.newton_iters.to_string());
            out.try_into().expect("fifteen columns")
        })
        .collect()
}

fn three_digits(v: f64) -> String {
    format!("{v:.2e}")
}

fn two_decimals(v: f64) -> String {
    format!("{v:.2}")
}

/// The table as CSV or markdown, errors to three significant digits and
/// rates to two decimals. Blank cells mark fields the case does not solve
/// for and the rates of the first level.
pub fn emit_table(report: &StudyReport, format: OutputFormat) -> String {
    let body = rows(report, three_digits, two_decimals);
    let mut s = String::new();
    match format {
        OutputFormat::Csv => {
            s.push_str(&HEADER.join(","));
            s.push('\n');
            for r in body {
                s.push_str(&r.join(","));
                s.push('\n');
            }
        }
        OutputFormat::Markdown => {
            let _ = writeln!(s, "| {} |", HEADER.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(HEADER.len()));
            for r in body {
                let _ = writeln!(s, "| {} |", r.join(" | "));
            }
        }
    }
    s
}

/// CSV with every value at full precision; [`parse_full_precision`] reads it back exactly.
pub fn emit_full_precision(report: &StudyReport) -> String {
    // `{:e}` on f64 prints the shortest string that parses back to the same value
    let body = rows(report, |v| format!("{v:e}"), |v| format!("{v:e}"));
    let mut s = HEADER.join(",");
    s.push('\n');
    for r in body {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_full_precision(text: &str) -> Result<StudyReport> {
    let bad = |m: String| Error::InvalidArgument(format!("full-precision table: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
    if header.split(',').ne(HEADER.iter().copied()) {
        return Err(bad("unexpected header".into()));
    }
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(format!("bad number {s:?}")))
        }
    };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(format!("bad integer {s:?}"))) };
    let mut report: Option<StudyReport> = None;
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", HEADER.len(), f.len())));
        }
        let case = Case::from_name(f[0]).ok_or_else(|| bad(format!("unknown case {:?}", f[0])))?;
        let r = report.get_or_insert_with(|| StudyReport {
            case,
            deg_u: 0,
            deg_q: 0,
            errors: ErrorReport::default(),
        });
        r.deg_u = int(f[1])?;
        r.deg_q = int(f[2])?;
        r.errors.levels.push(LevelErrors {
            n_per_side: int(f[3])?,
            eq_l2: opt(f[4])?,
            eq_h1: opt(f[6])?,
            eu_l2: opt(f[8])?,
            eu_h1: opt(f[10])?,
            eu_triple: opt(f[12])?,
            newton_iters: int(f[14])?,
        });
    }
    report.ok_or_else(|| bad("no data rows".into()))
}

/// Sidecar path: `table.csv` becomes `table.full.csv`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.full.csv"))
}

/// Writes the formatted table to `path` and the full-precision CSV next to it.
pub fn write_outputs(report: &StudyReport, path: &Path, format: OutputFormat) -> Result<()> {
    let write = |p: &Path, text: String| {
        std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        })
    };
    write(path, emit_table(report, format))?;
    write(&sidecar_path(path), emit_full_precision(report))
}

/// Command-line interface. Every flag may also be given in a `key=value`
/// file passed with `--config`, using the flag name without dashes as key;
/// flags on the command line take precedence.
#[derive(Debug, Parser)]
#[command(name = "smectic-study", version, about = "Manufactured-solution convergence studies", args_override_self = true)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub case: Option<Case>,
    #[arg(long)]
    pub deg_u: Option<usize>,
    #[arg(long)]
    pub deg_q: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub a1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub a2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub a3: Option<f64>,
    #[arg(long = "B", allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long = "K", allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long = "l", allow_negative_numbers = true)]
    pub l: Option<f64>,
    #[arg(long)]
    pub tol_abs: Option<f64>,
    #[arg(long)]
    pub tol_rel: Option<f64>,
    #[arg(long)]
    pub tol_step: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Newton start: half the exact fields, or their interpolant.
    #[arg(long, value_enum)]
    pub initial_guess: Option<GuessArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Solve all refinement levels at once, one thread each.
    #[arg(long)]
    pub parallel_levels: bool,
    /// `key=value` file supplying any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Cli {
    pub fn into_config(self) -> StudyConfig {
        let mut c = StudyConfig::new(self.case.unwrap_or(Case::DecoupledQ));
        c.deg_u = self.deg_u.unwrap_or(c.deg_u);
        c.deg_q = self.deg_q.unwrap_or(c.deg_q);
        c.n_list = self.n_list.unwrap_or(c.n_list);
        let p = &mut c.params;
        for (dst, src) in [
            (&mut p.q, self.q),
            (&mut p.epsilon, self.epsilon),
            (&mut p.a1, self.a1),
            (&mut p.a2, self.a2),
            (&mut p.a3, self.a3),
            (&mut p.b, self.b),
            (&mut p.k, self.k),
            (&mut p.l, self.l),
        ] {
            *dst = src.unwrap_or(*dst);
        }
        if let Some(f) = self.form {
            p.variant = f.into();
        }
        c.newton.tol_abs = self.tol_abs.unwrap_or(c.newton.tol_abs);
        c.newton.tol_rel = self.tol_rel.unwrap_or(c.newton.tol_rel);
        c.newton.tol_step = self.tol_step.unwrap_or(c.newton.tol_step);
        c.newton.max_iter = self.max_iter.unwrap_or(c.newton.max_iter);
        if let Some(g) = self.initial_guess {
            c.initial_guess = g.into();
        }
        c.output_path = self.out;
        c.output_format = self.format.unwrap_or(OutputFormat::Csv);
        c.parallel_levels = self.parallel_levels;
        c
    }
}

/// Turns `key=value` lines into flags. Blank lines and `#` comments are skipped.
pub fn config_file_args(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            return Err(Error::Config(format!("line {}: nested config files are not supported", no + 1)));
        }
        let v = v.trim();
        if key == "parallel-levels" {
            match v {
                "true" => args.push("--parallel-levels".into()),
                "false" => {}
                _ => return Err(Error::Config(format!("line {}: parallel-levels must be true or false", no + 1))),
            }
            continue;
        }
        args.push(format!("--{key}"));
        args.push(v.to_string());
    }
    Ok(args)
}

fn clap_error(e: clap::Error) -> Error {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        e.exit();
    }
    Error::Config(e.to_string())
}

/// Parses command-line arguments (program name first), merging a `--config`
/// file underneath them, into a validated configuration. `--help` and
/// `--version` print and exit the process.
pub fn config_from_args<I, S>(args: I) -> Result<StudyConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(clap_error)?;
    let cli = match &cli.config {
        None => cli,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            let mut merged = vec![args[0].clone()];
            merged.extend(config_file_args(&text)?);
            merged.extend(args[1..].iter().cloned());
            Cli::try_parse_from(&merged).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
    };
    let config = cli.into_config();
    config.validate()?;
    Ok(config)
}
