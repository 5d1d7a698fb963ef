//! Command-line front end for the `dvf` binary.
//!
//! Verbs fall into three groups: constructions (`tableaux`, `eval`,
//! `character`, `dim`), verification suites that emit a [`VerificationReport`]
//! (`verify-jt`, `verify-red`, `verify-hirota`, `verify-cshift`, `fixtures`,
//! `pole-scan`), and the root solver (`solve-bae`).  Every randomized suite
//! takes `--seed` and `--points`, and identical invocations reproduce their
//! output byte for byte.
//!
//! Exit status: 0 all checks passed, 1 at least one check failed, 2 bad
//! flags or unparseable input files, 3 internal evaluation failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::analytic::{
    psi, sample_context, sample_state, sample_unit_box, BetheState, EvalContext,
};
use crate::bae::{
    appendix_a_fixture, bae_residual, multi_start, pole_scan, BaeError, BaeSystem,
    PoleScanOptions,
};
use crate::diagrams::{
    count_admissible, enumerate_admissible, enumerate_restricted, Alphabet, DiagramError,
    Partition, SkewShape,
};
use crate::dvf::{
    build_from_spec, rectangle, supercharacter, t_row_determinant, t_col_determinant,
    t_tableau_sum, t_tilde, t_tilde_rect, top_term, BuildOptions, CharRoute, DvfError, DvfSpec,
    EigenFunction,
};
use crate::fixtures::{
    appendix_a_t11_reference, appendix_a_vacuum_reference, appendix_b_deformed_reference,
    appendix_b_h_reference, appendix_b_row_reference, appendix_b_top_reference,
    sl21_deformed_reference,
};
use crate::model::{
    kac_dynkin_from_diagram, sample_generic_q, typical_dimension, ModelConfig, ModelError, Rank,
    Site,
};
use crate::report::{fnv1a, CheckRecord, VerificationReport};

/// Environment variable that overrides a verb's default tolerance.  It is
/// read once at startup and, when set, echoed into every emitted report.
pub const TOL_ENV_VAR: &str = "DVF_TOL_OVERRIDE";

// Pinned default tolerances, one per suite family.
const TOL_ROUTE: f64 = 1e-9;
const TOL_REDUCTION: f64 = 1e-10;
const TOL_FUNCTIONAL: f64 = 1e-9;
const TOL_FIXTURE: f64 = 1e-10;
const TOL_RESIDUE: f64 = 1e-8;
const TOL_CHARACTER: f64 = 1e-10;
const TOL_DIMENSION: f64 = 1e-9;
const TOL_SOLVE: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "dvf",
    version,
    about = "Construct and verify transfer-matrix eigenvalue formulas in dressed vacuum form"
)]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for every random sample drawn by the verb.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of random evaluation points per check.
    #[arg(long, global = true, default_value_t = 20)]
    points: usize,
    /// Output format for reports and construction results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Which vacuum dressing the Bethe system uses.
#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Grading {
    /// Restricted vacuum on the distinguished simple-root system.
    Distinguished,
    /// The alternate grading of the rank-(1,0) worked example.
    Alternate,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate admissible fillings of a shape and print them as grids.
    Tableaux(TableauxArgs),
    /// Evaluate a formula specification, or dump its term-by-term expansion.
    Eval(EvalArgs),
    /// Check tableau sum = row determinant = column determinant.
    VerifyJt(VerifyArgs),
    /// Check the deformed family against widened plain shapes at integer c.
    VerifyRed(VerifyRedArgs),
    /// Check the bilinear fusion relation on rectangles with arbitrary roots.
    VerifyHirota(VerifyHirotaArgs),
    /// Check the parameter-shift bilinear relation of the deformed family.
    VerifyCshift(VerifyCshiftArgs),
    /// Evaluate a supercharacter along all three routes and compare.
    Character(CharacterArgs),
    /// Compare the typical dimension formula with the tableau count.
    Dim(DimArgs),
    /// Solve the root equations by damped-Newton multi-start.
    SolveBae(SolveBaeArgs),
    /// Contour-scan a formula's candidate poles at a solved root state.
    PoleScan(PoleScanArgs),
    /// Run a named reference-formula suite.
    Fixtures(FixturesArgs),
}

#[derive(Args)]
struct TableauxArgs {
    /// Rank "r,s" of the underlying superalgebra.
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Shape, as "mu=2,1/lambda=1" or JSON {"mu":[2,1],"lambda":[1]}.
    #[arg(long, value_parser = parse_shape)]
    shape: SkewShape,
    /// Restrict entries to the fermionic letters.
    #[arg(long)]
    restricted: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Model configuration JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Root-state JSON file ({"roots":{"1":[...]}}); vacuum when omitted.
    #[arg(long)]
    roots: Option<PathBuf>,
    /// Formula specification JSON file ({"kind":"plain","mu":[2]} etc.).
    #[arg(long)]
    dvf: PathBuf,
    /// Evaluate at this point (repeatable) instead of random samples.
    #[arg(long = "at", value_parser = parse_complex)]
    at: Vec<Complex64>,
    /// Print the term-by-term expansion instead of sampled values.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Shape under test.
    #[arg(long, value_parser = parse_shape)]
    shape: SkewShape,
}

#[derive(Args)]
struct VerifyRedArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Outer shape mu; default is the (s+1)^(r+1) rectangle.
    #[arg(long, value_parser = parse_partition)]
    mu: Option<Partition>,
    /// Integer deformation parameters to test.
    #[arg(long = "c-list", value_delimiter = ',', default_value = "0,1,2")]
    c_list: Vec<u64>,
}

#[derive(Args)]
struct VerifyHirotaArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Largest rectangle indices a,m to test.
    #[arg(long, default_value_t = 3)]
    max_index: usize,
}

#[derive(Args)]
struct VerifyCshiftArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Outer shape mu; default is the (s+1)^(r+1) rectangle.
    #[arg(long, value_parser = parse_partition)]
    mu: Option<Partition>,
}

#[derive(Args)]
struct CharacterArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Shape of the character.
    #[arg(long, value_parser = parse_shape)]
    shape: SkewShape,
    /// r+1 comma-separated bosonic variable values; sampled when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_complex)]
    x: Vec<Complex64>,
    /// s+1 comma-separated fermionic variable values; sampled when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_complex)]
    y: Vec<Complex64>,
}

#[derive(Args)]
struct DimArgs {
    /// Rank "r,s".
    #[arg(long, value_parser = parse_rank)]
    rank: Rank,
    /// Straight shape mu labeling the representation.
    #[arg(long, value_parser = parse_partition)]
    mu: Partition,
}

#[derive(Args)]
struct SolveBaeArgs {
    /// Model configuration JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Roots per color, comma-separated (one entry per color).
    #[arg(long, value_delimiter = ',')]
    counts: Vec<usize>,
    /// Number of random Newton starts.
    #[arg(long, default_value_t = 64)]
    seeds: usize,
    /// Convergence tolerance on the scaled residual (default 1e-12).
    #[arg(long)]
    tol: Option<f64>,
    /// Newton iteration cap per start.
    #[arg(long, default_value_t = 120)]
    max_iter: usize,
    /// Vacuum dressing convention.
    #[arg(long, value_enum, default_value_t = Grading::Distinguished)]
    grading: Grading,
}

#[derive(Args)]
struct PoleScanArgs {
    /// Model configuration JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Root-state JSON file produced by solve-bae.
    #[arg(long)]
    roots: PathBuf,
    /// Formula specification JSON file.
    #[arg(long)]
    dvf: PathBuf,
    /// Report path; synonym for --out.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Relative residue tolerance (default 1e-8).
    #[arg(long)]
    tol: Option<f64>,
    /// Vacuum dressing convention.
    #[arg(long, value_enum, default_value_t = Grading::Distinguished)]
    grading: Grading,
}

#[derive(Args)]
struct FixturesArgs {
    /// Which reference suite to run.
    #[arg(long, value_enum)]
    name: FixtureName,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FixtureName {
    /// Alternate-grading T^1_1: solve, compare to the reference, scan poles.
    AppendixA,
    /// Rank (0,1) references: row sum, restricted sum, eight-term deformed
    /// sum, top term, and the integer-c determinant identity.
    AppendixB,
    /// Rank (1,0) four-term deformed family against its reference.
    Sl21Deformed,
    /// Rank (1,1) atypical split of the rectangular family at c = -1.
    Sl22Atypical,
}

enum CliError {
    Config(String),
    Internal(String),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DiagramError> for CliError {
    fn from(e: DiagramError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<crate::analytic::EvalError> for CliError {
    fn from(e: crate::analytic::EvalError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<DvfError> for CliError {
    fn from(e: DvfError) -> Self {
        match e {
            DvfError::Eval(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<BaeError> for CliError {
    fn from(e: BaeError) -> Self {
        match e {
            BaeError::ColorMismatch { .. } | BaeError::FixtureRank { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Per-invocation settings shared by every verb.
struct Session {
    seed: u64,
    points: usize,
    format: Format,
    out: Option<PathBuf>,
    tol_env: Option<f64>,
}

impl Session {
    fn tol(&self, default: f64) -> f64 {
        self.tol_env.unwrap_or(default)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Stamps the environment override (if any) and writes the report to
    /// --out or standard output; returns the overall pass flag.  Report
    /// files are always JSON; the stdout rendering honors --format.
    fn emit_report(&self, mut report: VerificationReport) -> Result<bool, CliError> {
        report.tolerance_override = self.tol_env;
        match &self.out {
            Some(path) => {
                write_text(path, &report.to_json())?;
                print_line(&format!(
                    "{}: {} ({}/{} checks passed)",
                    report.suite,
                    if report.overall_pass() { "PASS" } else { "FAIL" },
                    report.summary.passed,
                    report.summary.total
                ));
            }
            None => {
                let body = match self.format {
                    Format::Json => report.to_json(),
                    Format::Text => report.render_text(),
                };
                print_line(&body);
            }
        }
        Ok(report.overall_pass())
    }

    /// Writes non-report output (tableau listings, evaluation results).
    fn emit_text(&self, body: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => write_text(path, body),
            None => {
                print_line(body);
                Ok(())
            }
        }
    }
}

/// Prints to stdout, treating a closed pipe as a normal early exit.
fn print_line(body: &str) {
    let mut stdout = io::stdout().lock();
    if let Err(e) = writeln!(stdout, "{body}") {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
    }
}

/// Parses arguments from the process environment and runs the verb.
pub fn run() -> u8 {
    let cli = Cli::parse();
    let tol_env = match read_tol_override() {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let session = Session {
        seed: cli.common.seed,
        points: cli.common.points.max(1),
        format: cli.common.format,
        out: cli.common.out.clone(),
        tol_env,
    };
    match dispatch(&cli.command, &session) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

fn read_tol_override() -> Result<Option<f64>, String> {
    match std::env::var(TOL_ENV_VAR) {
        Ok(raw) => {
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| format!("{TOL_ENV_VAR} must be a number, got `{raw}`"))?;
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{TOL_ENV_VAR} must be positive and finite"));
            }
            Ok(Some(v))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("{TOL_ENV_VAR}: {e}")),
    }
}

fn dispatch(command: &Command, sess: &Session) -> Result<bool, CliError> {
    match command {
        Command::Tableaux(args) => cmd_tableaux(args, sess),
        Command::Eval(args) => cmd_eval(args, sess),
        Command::VerifyJt(args) => cmd_verify_jt(args, sess),
        Command::VerifyRed(args) => cmd_verify_red(args, sess),
        Command::VerifyHirota(args) => cmd_verify_hirota(args, sess),
        Command::VerifyCshift(args) => cmd_verify_cshift(args, sess),
        Command::Character(args) => cmd_character(args, sess),
        Command::Dim(args) => cmd_dim(args, sess),
        Command::SolveBae(args) => cmd_solve_bae(args, sess),
        Command::PoleScan(args) => cmd_pole_scan(args, sess),
        Command::Fixtures(args) => cmd_fixtures(args, sess),
    }
}

// ---------------------------------------------------------------------------
// constructions

fn cmd_tableaux(args: &TableauxArgs, sess: &Session) -> Result<bool, CliError> {
    let iter = if args.restricted {
        enumerate_restricted(&args.shape, args.rank)
    } else {
        enumerate_admissible(&args.shape, args.rank)
    };
    let grids: Vec<Vec<Vec<usize>>> = iter.map(|t| t.to_grid()).collect();
    let body = match sess.format {
        Format::Json => {
            let doc = json!({ "count": grids.len(), "tableaux": grids });
            serde_json::to_string_pretty(&doc).expect("tableau listing serializes")
        }
        Format::Text => {
            let mut out = String::new();
            for grid in &grids {
                for row in grid {
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&cells.join(" "));
                    out.push('\n');
                }
                out.push('\n');
            }
            out.push_str(&format!("count {}", grids.len()));
            out
        }
    };
    sess.emit_text(&body)?;
    Ok(true)
}

fn cmd_eval(args: &EvalArgs, sess: &Session) -> Result<bool, CliError> {
    let ctx = load_context(&args.config, args.roots.as_deref())?;
    let spec: DvfSpec = serde_json::from_str(&read_text(&args.dvf)?)?;
    let fun = build_from_spec(&spec, &ctx, &BuildOptions::default())?;

    if args.dump {
        let lines = fun.formula_lines();
        let body = match sess.format {
            Format::Json => {
                let doc = json!({ "label": fun.label, "lines": lines });
                serde_json::to_string_pretty(&doc).expect("dump serializes")
            }
            Format::Text => {
                if lines.len() == 1 && lines[0] == "+ 1" {
                    "1".to_string()
                } else {
                    lines.join("\n")
                }
            }
        };
        sess.emit_text(&body)?;
        return Ok(true);
    }

    let mut points = args.at.clone();
    if points.is_empty() {
        let mut rng = sess.rng();
        points = (0..sess.points)
            .map(|_| sample_unit_box(&mut rng) * 2.0)
            .collect();
    }
    let mut values = Vec::with_capacity(points.len());
    for &u in &points {
        values.push((u, fun.eval(u)?));
    }

    let body = match sess.format {
        Format::Json => {
            let doc = json!({
                "label": fun.label,
                "term_count": fun.term_count,
                "c": cjson(fun.c),
                "possibly_atypical": fun.possibly_atypical,
                "values": values
                    .iter()
                    .map(|(u, v)| json!({ "u": cjson(*u), "value": cjson(*v) }))
                    .collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&doc).expect("evaluation serializes")
        }
        Format::Text => {
            let mut out = String::new();
            match fun.term_count {
                Some(n) => out.push_str(&format!("{}: {} terms\n", fun.label, n)),
                None => out.push_str(&format!("{}\n", fun.label)),
            }
            for (u, v) in &values {
                out.push_str(&format!("u = {u}  ->  {v}\n"));
            }
            out.pop();
            out
        }
    };
    sess.emit_text(&body)?;
    Ok(true)
}

fn cmd_character(args: &CharacterArgs, sess: &Session) -> Result<bool, CliError> {
    let rank = args.rank;
    let mut rng = sess.rng();
    let mut sample = |n: usize| -> Vec<Complex64> {
        (0..n).map(|_| sample_unit_box(&mut rng) + 1.5).collect()
    };
    let x = if args.x.is_empty() { sample(rank.r + 1) } else { args.x.clone() };
    let y = if args.y.is_empty() { sample(rank.s + 1) } else { args.y.clone() };

    let tol = sess.tol(TOL_CHARACTER);
    let v_sum = supercharacter(&args.shape, rank, &x, &y, CharRoute::TableauSum)?;
    let v_row = supercharacter(&args.shape, rank, &x, &y, CharRoute::RowDeterminant)?;
    let v_col = supercharacter(&args.shape, rank, &x, &y, CharRoute::ColumnDeterminant)?;

    let mut report = VerificationReport::new(
        format!("supercharacter routes for {}", shape_label(&args.shape)),
        sess.seed,
    );
    let row_err = rel_err(v_row, v_sum);
    let col_err = rel_err(v_col, v_sum);
    report.push(
        CheckRecord::new("row determinant route matches tableau route", tol, row_err < tol)
            .with_max_rel_err(row_err)
            .with_note(format!("value {v_sum}")),
    );
    report.push(
        CheckRecord::new("column determinant route matches tableau route", tol, col_err < tol)
            .with_max_rel_err(col_err),
    );
    sess.emit_report(report)
}

fn cmd_dim(args: &DimArgs, sess: &Session) -> Result<bool, CliError> {
    let rank = args.rank;
    let label = kac_dynkin_from_diagram(rank, &args.mu)?;
    let dim = typical_dimension(rank, &label);
    let count = count_admissible(&SkewShape::straight(args.mu.clone()), rank, Alphabet::Full);
    let typical = args.mu.part(rank.r + 1) >= rank.s + 1;

    let tol = sess.tol(TOL_DIMENSION);
    let mut report = VerificationReport::new(
        format!("dimension cross-check for mu={}", partition_label(&args.mu)),
        sess.seed,
    );
    if typical {
        let err = (dim - Complex64::new(count as f64, 0.0)).norm() / (count.max(1) as f64);
        report.push(
            CheckRecord::new("weight-formula dimension equals tableau count", tol, err < tol)
                .with_max_rel_err(err)
                .with_note(format!("count {count}, formula {:.3}{:+.3}i", dim.re, dim.im)),
        );
    } else {
        report.push(
            CheckRecord::new("shape below the typicality threshold", tol, true).with_note(
                format!("count {count}; dimension formula not applicable, nothing to compare"),
            ),
        );
    }
    sess.emit_report(report)
}

// ---------------------------------------------------------------------------
// verification suites

fn cmd_verify_jt(args: &VerifyArgs, sess: &Session) -> Result<bool, CliError> {
    let tol = sess.tol(TOL_ROUTE);
    let mut rng = sess.rng();
    let mut worst_row = 0.0f64;
    let mut worst_col = 0.0f64;
    for _ in 0..sess.points {
        let ctx = Arc::new(sample_context(args.rank, 2, 2, &mut rng));
        let u = sample_unit_box(&mut rng) * 2.0;
        let sum = t_tableau_sum(&args.shape, &ctx, &BuildOptions::default())?;
        let row = t_row_determinant(&args.shape, &ctx)?;
        let col = t_col_determinant(&args.shape, &ctx)?;
        let vs = sum.eval(u)?;
        worst_row = worst_row.max(rel_err(row.eval(u)?, vs));
        worst_col = worst_col.max(rel_err(col.eval(u)?, vs));
    }

    let mut report = VerificationReport::new(
        format!(
            "route equivalence for {} at rank ({},{})",
            shape_label(&args.shape),
            args.rank.r,
            args.rank.s
        ),
        sess.seed,
    );
    let digest = fnv1a(
        format!("jt|{}|{}|{}", shape_label(&args.shape), args.rank.r, args.rank.s).as_bytes(),
    );
    report.push(
        CheckRecord::new("row determinant matches tableau sum", tol, worst_row < tol)
            .with_max_rel_err(worst_row)
            .with_samples(sess.points)
            .with_digest(digest.clone()),
    );
    report.push(
        CheckRecord::new("column determinant matches tableau sum", tol, worst_col < tol)
            .with_max_rel_err(worst_col)
            .with_samples(sess.points)
            .with_digest(digest),
    );
    sess.emit_report(report)
}

fn cmd_verify_red(args: &VerifyRedArgs, sess: &Session) -> Result<bool, CliError> {
    let rank = args.rank;
    let mu = match &args.mu {
        Some(mu) => mu.clone(),
        None => Partition::new(vec![rank.s + 1; rank.r + 1])?,
    };
    let tol = sess.tol(TOL_REDUCTION);
    let mut rng = sess.rng();
    let mut report = VerificationReport::new(
        format!(
            "integer-parameter reduction for mu={} at rank ({},{})",
            partition_label(&mu),
            rank.r,
            rank.s
        ),
        sess.seed,
    );

    let rect = Partition::new(vec![rank.s + 1; rank.r + 1])?;
    for &c in &args.c_list {
        let widened = widen(&mu, rank, c as usize)?;
        let mut worst = 0.0f64;
        let mut worst_rect = 0.0f64;
        for _ in 0..sess.points {
            let ctx = Arc::new(sample_context(rank, 2, 2, &mut rng));
            let u = sample_unit_box(&mut rng) * 2.0;
            let tilde = t_tilde(&mu, Complex64::new(c as f64, 0.0), &ctx, &BuildOptions::default())?;
            let plain =
                t_tableau_sum(&SkewShape::straight(widened.clone()), &ctx, &BuildOptions::default())?;
            worst = worst.max(rel_err(tilde.eval(u)?, plain.eval(u)?));
            if mu == rect {
                let fam = t_tilde_rect(Complex64::new(c as f64, 0.0), &ctx, &BuildOptions::default())?;
                worst_rect = worst_rect.max(rel_err(fam.eval(u)?, tilde.eval(u)?));
            }
        }
        report.push(
            CheckRecord::new(
                format!("c={c}: deformed sum equals widened plain sum"),
                tol,
                worst < tol,
            )
            .with_max_rel_err(worst)
            .with_samples(sess.points),
        );
        if mu == rect {
            report.push(
                CheckRecord::new(
                    format!("c={c}: rectangular family agrees with the deformed sum"),
                    tol,
                    worst_rect < tol,
                )
                .with_max_rel_err(worst_rect)
                .with_samples(sess.points),
            );
        }
    }
    sess.emit_report(report)
}

fn cmd_verify_hirota(args: &VerifyHirotaArgs, sess: &Session) -> Result<bool, CliError> {
    let rank = args.rank;
    let tol = sess.tol(TOL_FUNCTIONAL);
    let mut rng = sess.rng();
    let mut report = VerificationReport::new(
        format!("bilinear fusion relation at rank ({},{})", rank.r, rank.s),
        sess.seed,
    );
    let opts = BuildOptions::default();

    for a in 1..=args.max_index {
        for m in 1..=args.max_index {
            let mut worst = 0.0f64;
            for _ in 0..sess.points {
                let ctx = Arc::new(sample_context(rank, 2, 2, &mut rng));
                let u = sample_unit_box(&mut rng) * 2.0;
                let t = |aa: usize, mm: usize| -> Result<EigenFunction, CliError> {
                    Ok(t_tableau_sum(&SkewShape::straight(rectangle(aa, mm)), &ctx, &opts)?)
                };
                let center = t(a, m)?;
                let lhs = center.eval(u - 1.0)? * center.eval(u + 1.0)?;
                let rhs = t(a, m - 1)?.eval(u)? * t(a, m + 1)?.eval(u)?
                    + t(a - 1, m)?.eval(u)? * t(a + 1, m)?.eval(u)?;
                worst = worst.max(rel_err(lhs, rhs));
            }
            report.push(
                CheckRecord::new(format!("a={a}, m={m}: shifted product splits"), tol, worst < tol)
                    .with_max_rel_err(worst)
                    .with_samples(sess.points),
            );
        }
    }
    sess.emit_report(report)
}

fn cmd_verify_cshift(args: &VerifyCshiftArgs, sess: &Session) -> Result<bool, CliError> {
    let rank = args.rank;
    let mu = match &args.mu {
        Some(mu) => mu.clone(),
        None => Partition::new(vec![rank.s + 1; rank.r + 1])?,
    };
    let tol = sess.tol(TOL_FUNCTIONAL);
    let mut rng = sess.rng();
    let mut worst = 0.0f64;
    let opts = BuildOptions::default();
    for _ in 0..sess.points {
        let ctx = Arc::new(sample_context(rank, 2, 2, &mut rng));
        let u = sample_unit_box(&mut rng) * 2.0;
        let c = sample_unit_box(&mut rng);
        let d = sample_unit_box(&mut rng);
        let at_c = t_tilde(&mu, c, &ctx, &opts)?;
        let minus = t_tilde(&mu, c - d, &ctx, &opts)?;
        let plus = t_tilde(&mu, c + d, &ctx, &opts)?;
        let lhs = at_c.eval(u - d)? * at_c.eval(u + d)?;
        let rhs = minus.eval(u)? * plus.eval(u)?;
        worst = worst.max(rel_err(lhs, rhs));
    }
    let mut report = VerificationReport::new(
        format!(
            "parameter-shift relation for mu={} at rank ({},{})",
            partition_label(&mu),
            rank.r,
            rank.s
        ),
        sess.seed,
    );
    report.push(
        CheckRecord::new("shifted-argument product equals shifted-parameter product", tol, worst < tol)
            .with_max_rel_err(worst)
            .with_samples(sess.points),
    );
    sess.emit_report(report)
}

// ---------------------------------------------------------------------------
// Bethe system verbs

fn cmd_solve_bae(args: &SolveBaeArgs, sess: &Session) -> Result<bool, CliError> {
    let config = load_config(&args.config)?;
    let sys = build_system(&config, args.grading)?;
    if args.counts.len() != sys.colors() {
        return Err(CliError::Config(format!(
            "--counts needs {} entries, got {}",
            sys.colors(),
            args.counts.len()
        )));
    }
    let tol = args.tol.unwrap_or(sess.tol(TOL_SOLVE));
    let mut rng = sess.rng();
    let states = multi_start(&sys, &args.counts, args.seeds, args.max_iter, tol, &mut rng);
    if states.is_empty() {
        eprintln!("solve-bae: no solutions found ({} starts)", args.seeds);
        return Ok(false);
    }

    let best = &states[0];
    let residual = bae_residual(&sys, best)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let mut doc = best.to_json();
    if let Some(map) = doc.as_object_mut() {
        map.insert("found".into(), json!(states.len()));
        map.insert("max_residual".into(), json!(residual));
        map.insert("seed".into(), json!(sess.seed));
    }
    let body = serde_json::to_string_pretty(&doc).expect("root state serializes");
    match &sess.out {
        Some(path) => {
            write_text(path, &body)?;
            print_line(&format!(
                "solve-bae: {} solution(s), residual {residual:.3e}, roots -> {}",
                states.len(),
                path.display()
            ));
        }
        None => print_line(&body),
    }
    Ok(true)
}

fn cmd_pole_scan(args: &PoleScanArgs, sess: &Session) -> Result<bool, CliError> {
    let config = load_config(&args.config)?;
    let sys = build_system(&config, args.grading)?;
    let roots_doc: serde_json::Value = serde_json::from_str(&read_text(&args.roots)?)?;
    let state = BetheState::from_json(&roots_doc, sys.colors())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let spec: DvfSpec = serde_json::from_str(&read_text(&args.dvf)?)?;
    let ctx = Arc::new(sys.context(state)?);
    let fun = build_from_spec(&spec, &ctx, &BuildOptions::default())?;

    let mut opts = PoleScanOptions::default();
    opts.residue_tol = args.tol.unwrap_or(sess.tol(TOL_RESIDUE));
    let report = pole_scan(&fun, &sys, &opts)?;

    let sess_out = Session {
        out: args.report.clone().or_else(|| sess.out.clone()),
        seed: sess.seed,
        points: sess.points,
        format: sess.format,
        tol_env: sess.tol_env,
    };
    sess_out.emit_report(report)
}

// ---------------------------------------------------------------------------
// fixtures

fn cmd_fixtures(args: &FixturesArgs, sess: &Session) -> Result<bool, CliError> {
    let report = match args.name {
        FixtureName::AppendixA => fixture_appendix_a(sess)?,
        FixtureName::AppendixB => fixture_appendix_b(sess)?,
        FixtureName::Sl21Deformed => fixture_sl21(sess)?,
        FixtureName::Sl22Atypical => fixture_sl22(sess)?,
    };
    sess.emit_report(report)
}

fn fixture_sl21(sess: &Session) -> Result<VerificationReport, CliError> {
    let tol = sess.tol(TOL_FIXTURE);
    let mut rng = sess.rng();
    let rank = Rank::new(1, 0);
    let mut worst = 0.0f64;
    for _ in 0..sess.points {
        let ctx = Arc::new(sample_context(rank, 3, 2, &mut rng));
        let c = sample_unit_box(&mut rng);
        let u = sample_unit_box(&mut rng) * 2.0;
        let fun = t_tilde_rect(c, &ctx, &BuildOptions::default())?;
        let want = sl21_deformed_reference(u, c, &ctx)?;
        worst = worst.max(rel_err(fun.eval(u)?, want));
    }
    let mut report = VerificationReport::new("four-term deformed family", sess.seed);
    report.push(
        CheckRecord::new("rectangular family matches the four-term reference", tol, worst < tol)
            .with_max_rel_err(worst)
            .with_samples(sess.points),
    );
    Ok(report)
}

fn fixture_appendix_b(sess: &Session) -> Result<VerificationReport, CliError> {
    let tol = sess.tol(TOL_FIXTURE);
    let mut rng = sess.rng();
    let rank = Rank::new(0, 1);
    let opts = BuildOptions::default();
    let mut report = VerificationReport::new("rank (0,1) reference formulas", sess.seed);

    let row_shape = SkewShape::straight(Partition::new(vec![2])?);
    let h_shape = Partition::new(vec![1])?;
    let deformed_shape = Partition::new(vec![2, 1])?;

    let mut worst_row = 0.0f64;
    let mut worst_h = 0.0f64;
    let mut worst_def = 0.0f64;
    let mut worst_top = 0.0f64;
    let mut term_counts_ok = true;
    for _ in 0..sess.points {
        let ctx = uniform_context(rank, &mut rng)?;
        let u = sample_unit_box(&mut rng) * 2.0;
        let c = sample_unit_box(&mut rng);

        let row = t_tableau_sum(&row_shape, &ctx, &opts)?;
        term_counts_ok &= row.term_count == Some(4);
        worst_row = worst_row.max(rel_err(row.eval(u)?, appendix_b_row_reference(u, &ctx)?));

        let h = crate::dvf::h_restricted(&h_shape, &ctx, &opts)?;
        term_counts_ok &= h.term_count == Some(2);
        worst_h = worst_h.max(rel_err(h.eval(u)?, appendix_b_h_reference(u, &ctx)?));

        let tilde = t_tilde(&deformed_shape, c, &ctx, &opts)?;
        term_counts_ok &= tilde.term_count == Some(8);
        worst_def =
            worst_def.max(rel_err(tilde.eval(u)?, appendix_b_deformed_reference(u, c, &ctx)?));

        let top = top_term(&deformed_shape, c, &ctx)?;
        worst_top = worst_top.max(rel_err(top.eval(u)?, appendix_b_top_reference(u, c, &ctx)?));
    }
    report.push(
        CheckRecord::new("one-row sum matches the displayed expansion", tol, worst_row < tol)
            .with_max_rel_err(worst_row)
            .with_samples(sess.points),
    );
    report.push(
        CheckRecord::new("restricted one-cell sum matches the displayed expansion", tol, worst_h < tol)
            .with_max_rel_err(worst_h)
            .with_samples(sess.points),
    );
    report.push(
        CheckRecord::new("eight-term deformed sum matches the displayed expansion", tol, worst_def < tol)
            .with_max_rel_err(worst_def)
            .with_samples(sess.points),
    );
    report.push(
        CheckRecord::new("leading product term matches the displayed expansion", tol, worst_top < tol)
            .with_max_rel_err(worst_top)
            .with_samples(sess.points),
    );
    report.push(
        CheckRecord::new("term counts are 4, 2, and 8", tol, term_counts_ok)
            .with_samples(sess.points),
    );

    // Integer parameters: the deformed sum collapses to the widened plain
    // shape, evaluated through its determinant expression.
    for c in 0..=2u32 {
        let mut worst = 0.0f64;
        for _ in 0..sess.points {
            let ctx = uniform_context(rank, &mut rng)?;
            let u = sample_unit_box(&mut rng) * 2.0;
            let tilde = t_tilde(&deformed_shape, Complex64::new(c as f64, 0.0), &ctx, &opts)?;
            let widened = SkewShape::straight(widen(&deformed_shape, rank, c as usize)?);
            let det = t_row_determinant(&widened, &ctx)?;
            worst = worst.max(rel_err(tilde.eval(u)?, det.eval(u)?));
        }
        report.push(
            CheckRecord::new(
                format!("c={c}: deformed sum equals the widened determinant"),
                tol,
                worst < tol,
            )
            .with_max_rel_err(worst)
            .with_samples(sess.points),
        );
    }
    Ok(report)
}

fn fixture_sl22(sess: &Session) -> Result<VerificationReport, CliError> {
    let tol = sess.tol(TOL_FIXTURE);
    let mut rng = sess.rng();
    let rank = Rank::new(1, 1);
    let opts = BuildOptions::default();
    let c = Complex64::new(-1.0, 0.0);
    let col_shape = SkewShape::straight(Partition::new(vec![1, 1])?);
    let row_shape = SkewShape::straight(Partition::new(vec![2])?);

    let mut worst = 0.0f64;
    let mut flagged = true;
    for _ in 0..sess.points {
        let ctx = Arc::new(sample_context(rank, 3, 2, &mut rng));
        let u = sample_unit_box(&mut rng) * 2.0;
        let fun = t_tilde_rect(c, &ctx, &opts)?;
        flagged &= fun.possibly_atypical;
        let col = t_tableau_sum(&col_shape, &ctx, &opts)?;
        let row = t_tableau_sum(&row_shape, &ctx, &opts)?;
        let dress = psi(3, u - 3.0, &ctx)? * psi(3, u - 1.0, &ctx)?;
        let want = col.eval(u)? + dress * row.eval(u)?;
        worst = worst.max(rel_err(fun.eval(u)?, want));
    }
    let mut report = VerificationReport::new("rank (1,1) atypical split", sess.seed);
    report.push(
        CheckRecord::new("parameter -1 is flagged possibly atypical", tol, flagged)
            .with_samples(sess.points),
    );
    report.push(
        CheckRecord::new("family splits into column sum plus dressed row sum", tol, worst < tol)
            .with_max_rel_err(worst)
            .with_samples(sess.points),
    );
    Ok(report)
}

fn fixture_appendix_a(sess: &Session) -> Result<VerificationReport, CliError> {
    let tol = sess.tol(TOL_FIXTURE);
    let mut rng = sess.rng();
    let q = sample_generic_q(&mut rng);
    let config = ModelConfig::new_unchecked(
        Rank::new(1, 0),
        q,
        vec![
            Site { w: Complex64::new(0.2, -0.1), b: Complex64::new(1.3, 0.2) },
            Site { w: Complex64::new(-0.3, 0.25), b: Complex64::new(0.0, 0.0) },
        ],
    );
    let sys = BaeSystem::appendix_a(&config)?;
    let mut starts = ChaCha8Rng::seed_from_u64(sess.seed.wrapping_add(4));
    let states = multi_start(&sys, &[1, 1], 64, 80, 1e-12, &mut starts);
    let mut report = VerificationReport::new("alternate-grading fixture", sess.seed);
    if states.is_empty() {
        report.push(CheckRecord::new(
            "a root state was found for the alternate grading",
            tol,
            false,
        ));
        return Ok(report);
    }
    report.push(
        CheckRecord::new("a root state was found for the alternate grading", tol, true)
            .with_note(format!("{} state(s) from 64 starts", states.len())),
    );

    let (sys, fun) = appendix_a_fixture(&config, &states[0])?;
    let ctx = fun.context().clone();

    let mut worst_t = 0.0f64;
    let mut used_t = 0usize;
    let mut worst_psi = 0.0f64;
    let mut used_psi = 0usize;
    for _ in 0..sess.points {
        let u = sample_unit_box(&mut rng) * 2.0;
        if let (Ok(got), Ok(want)) = (fun.eval(u), appendix_a_t11_reference(u, &ctx)) {
            worst_t = worst_t.max(rel_err(got, want));
            used_t += 1;
        }
        for letter in 1..=3usize {
            if let (Ok(got), Ok(want)) =
                (psi(letter, u, &ctx), appendix_a_vacuum_reference(letter, u, &ctx))
            {
                worst_psi = worst_psi.max(rel_err(got, want));
                used_psi += 1;
            }
        }
    }
    report.push(
        CheckRecord::new("eigenvalue matches the two-term reference", tol, used_t > 0 && worst_t < tol)
            .with_max_rel_err(worst_t)
            .with_samples(used_t),
    );
    report.push(
        CheckRecord::new("vacuum parts match their displayed products", tol, used_psi > 0 && worst_psi < tol)
            .with_max_rel_err(worst_psi)
            .with_samples(used_psi),
    );

    let scan = pole_scan(&fun, &sys, &PoleScanOptions::default())?;
    report.absorb(scan);
    Ok(report)
}

// ---------------------------------------------------------------------------
// shared helpers

fn build_system(config: &ModelConfig, grading: Grading) -> Result<BaeSystem, CliError> {
    match grading {
        Grading::Distinguished => Ok(BaeSystem::distinguished(config)),
        Grading::Alternate => Ok(BaeSystem::appendix_a(config)?),
    }
}

fn load_config(path: &Path) -> Result<ModelConfig, CliError> {
    ModelConfig::from_json_str(&read_text(path)?).map_err(CliError::from)
}

fn load_context(config: &Path, roots: Option<&Path>) -> Result<Arc<EvalContext>, CliError> {
    let config = load_config(config)?;
    let colors = config.rank.colors();
    let state = match roots {
        Some(path) => {
            let doc: serde_json::Value = serde_json::from_str(&read_text(path)?)?;
            BetheState::from_json(&doc, colors).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => BetheState::vacuum(colors),
    };
    Ok(Arc::new(EvalContext::new(config, state)?))
}

/// Context whose sites all share one inhomogeneity label, as the rank (0,1)
/// reference formulas require.
fn uniform_context<R: Rng>(rank: Rank, rng: &mut R) -> Result<Arc<EvalContext>, CliError> {
    let q = sample_generic_q(rng);
    let b = sample_unit_box(rng);
    let sites = (0..rng.gen_range(1..=2))
        .map(|_| Site { w: sample_unit_box(rng), b })
        .collect();
    let config = ModelConfig::new_unchecked(rank, q, sites);
    let state = sample_state(rank.colors(), 2, rng);
    Ok(Arc::new(EvalContext::new(config, state)?))
}

/// mu with c extra columns on the first r+1 rows.
fn widen(mu: &Partition, rank: Rank, c: usize) -> Result<Partition, CliError> {
    let rows = mu.num_rows().max(rank.r + 1);
    let widened: Vec<usize> = (1..=rows)
        .map(|i| mu.part(i) + if i <= rank.r + 1 { c } else { 0 })
        .collect();
    Ok(Partition::new(widened)?)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body.as_bytes())
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn rel_err(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm()).max(1.0);
    (a - b).norm() / scale
}

fn cjson(z: Complex64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im })
}

fn shape_label(shape: &SkewShape) -> String {
    if shape.inner().is_empty() {
        format!("mu={}", partition_label(shape.outer()))
    } else {
        format!(
            "mu={}/lambda={}",
            partition_label(shape.outer()),
            partition_label(shape.inner())
        )
    }
}

fn partition_label(p: &Partition) -> String {
    if p.is_empty() {
        return "()".to_string();
    }
    p.rows()
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_rank(s: &str) -> Result<Rank, String> {
    let (r, sdeg) = s
        .split_once(',')
        .ok_or_else(|| format!("expected \"r,s\", got `{s}`"))?;
    let r: usize = r.trim().parse().map_err(|e| format!("bad r: {e}"))?;
    let sdeg: usize = sdeg.trim().parse().map_err(|e| format!("bad s: {e}"))?;
    Ok(Rank::new(r, sdeg))
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|piece| piece.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_partition(s: &str) -> Result<Partition, String> {
    Partition::new(parse_usize_list(s)?).map_err(|e| e.to_string())
}

fn parse_shape(s: &str) -> Result<SkewShape, String> {
    let t = s.trim();
    if t.starts_with('{') {
        return serde_json::from_str(t).map_err(|e| e.to_string());
    }
    let mut mu: Option<Partition> = None;
    let mut lambda = Partition::empty();
    for piece in t.split('/') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (key, val) = piece
            .split_once('=')
            .ok_or_else(|| format!("expected key=rows in `{piece}`"))?;
        match key.trim() {
            "mu" => mu = Some(parse_partition(val)?),
            "lambda" => lambda = parse_partition(val)?,
            other => return Err(format!("unknown shape key `{other}`")),
        }
    }
    let mu = mu.ok_or("shape needs mu=...")?;
    SkewShape::new(mu, lambda).map_err(|e| e.to_string())
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    s.trim()
        .parse::<Complex64>()
        .map_err(|_| format!("expected a complex number like 0.37+0.21i, got `{s}`"))
}
