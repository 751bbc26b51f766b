//! `ballcert`: radius certification, iteration and envelope verification
//! from the command line.
//!
//! Exit codes: 0 on success, 2 when a verification fails, 1 on usage or
//! domain errors.

mod family;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use ballcert::{
    cross_validate, entry, estimate_constant, global_envelope, per_step_bounds, printed_example_c, q_factors,
    solve_radius, suite, two_step_newton, uniqueness_probe, ClosedFormId, CrossValidation, EnvelopeReport, Error,
    LAverage, LipschitzKind, QFactors, RadiusCertificate, RadiusCondition, StopRule, SuiteEntry, Termination,
    Theorem,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use family::{parse_family, parse_point};
use output::to_json;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ballcert", version, about = "Convergence-ball certification for the two-step Newton method")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Jsonl,
    Csv,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Largest radius satisfying a convergence condition.
    Radius {
        #[arg(long)]
        condition: String,
        /// constant:L | affine:GAMMA,L | holder:C,A | rational:GAMMA,C | tabulated:PATH
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1e-12)]
        rel_tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the two-step iteration on a suite problem.
    Iterate {
        #[arg(long)]
        problem: String,
        /// Starting point, comma separated; defaults to the entry's x0.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Iterate, then check the per-step and global envelopes.
    Verify {
        #[arg(long)]
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        theorem: String,
        /// Defaults to the entry's recommended family.
        #[arg(long)]
        family: Option<String>,
        /// Weak-average exponent for the T51 envelope.
        #[arg(long)]
        a: Option<f64>,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run every suite entry against every theorem.
    Suite {
        /// Only list the entries.
        #[arg(long)]
        list: bool,
        /// Restrict to one entry.
        #[arg(long)]
        entry: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Sample a Lipschitz-type constant over a ball around the root.
    EstimateL {
        #[arg(long)]
        problem: String,
        #[arg(long, value_parser = ["center", "radius"])]
        kind: String,
        /// Ball radius; defaults to the entry's ball.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        grid: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Compare every printed closed-form radius with its numeric solution.
    CrossValidate {
        #[arg(long, default_value = "1")]
        constant: String,
        #[arg(long, default_value = "0,1")]
        affine: String,
        #[arg(long, default_value = "1,0.5")]
        holder: String,
        #[arg(long, default_value = "1,1")]
        rational: String,
        #[arg(long, default_value_t = 1e-12)]
        rel_tol: f64,
    },
}

#[derive(clap::Args, Debug, Clone, Copy)]
struct StopArgs {
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-14)]
    x_tol: f64,
    #[arg(long, default_value_t = 1e-14)]
    f_tol: f64,
}

impl From<StopArgs> for StopRule {
    fn from(s: StopArgs) -> Self {
        StopRule {
            max_iter: s.max_iter,
            x_tol: s.x_tol,
            f_tol: s.f_tol,
        }
    }
}

/// Rendered output and the exit status it implies.
struct Outcome {
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, code: 0 }
    }
}

fn reject(format: Format, allowed: &[Format]) -> ballcert::Result<()> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("format {format:?} is not available for this command")))
    }
}

fn start_point(e: &SuiteEntry, x0: &Option<String>) -> ballcert::Result<Vec<f64>> {
    match x0 {
        Some(s) => parse_point(s),
        None => Ok(e.default_x0.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VerifyReport {
    problem: String,
    theorem: Theorem,
    family: LAverage,
    x0: Vec<f64>,
    radius: RadiusCertificate,
    x0_inside: bool,
    termination: Termination,
    iterations: usize,
    q: QFactors,
    per_step: EnvelopeReport,
    global: Option<EnvelopeReport>,
    note: Option<String>,
    printed_example_c: Option<f64>,
    all_hold: bool,
}

fn verify(
    e: &SuiteEntry,
    x0: Vec<f64>,
    theorem: Theorem,
    fam: LAverage,
    a: Option<f64>,
    stop: &StopRule,
) -> ballcert::Result<VerifyReport> {
    let radius = solve_radius(theorem.condition(a.is_some()), &fam, 1e-12)?;
    let x0_inside = ballcert::linalg::distance(&x0, e.root()) < radius.r;
    let trace = two_step_newton(&e.problem, &x0, stop)?;
    let s0 = &trace.steps[0];
    let (rho0_x, rho0_y) = (s0.rho_x.unwrap_or(0.0), s0.rho_y.unwrap_or(0.0));
    let mut q = q_factors(theorem, &fam, rho0_x, rho0_y)?;
    if let Some(a) = a {
        q = q.with_exponent(a)?;
    }
    let per_step = per_step_bounds(theorem, &fam, &trace)?;
    let (global, note) = match global_envelope(theorem, &q, &trace) {
        Ok(g) => (Some(g), None),
        Err(err @ Error::InvalidQ { .. }) => (None, Some(err.to_string())),
        Err(err) => return Err(err),
    };
    let printed = (e.name == "wang-osc" && x0.len() == 1).then(|| printed_example_c(x0[0], s0.y[0]));
    let all_hold = per_step.all_hold && global.as_ref().is_some_and(|g| g.all_hold);
    Ok(VerifyReport {
        problem: e.name.to_string(),
        theorem,
        family: fam,
        x0,
        radius,
        x0_inside,
        termination: trace.termination,
        iterations: trace.iterations(),
        q,
        per_step,
        global,
        note,
        printed_example_c: printed,
        all_hold,
    })
}

/// One cell of the suite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuiteCell {
    theorem: String,
    condition: RadiusCondition,
    r: Option<f64>,
    x0_inside: Option<bool>,
    /// Envelopes for T31/T51/T52; uniqueness for T41.
    all_hold: Option<bool>,
    /// The recommended family satisfies this theorem's hypothesis.
    certified: bool,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SuiteRow {
    entry: String,
    family: LAverage,
    x0: Vec<f64>,
    cells: Vec<SuiteCell>,
}

/// Recommended families bound the center condition, so only the
/// center-based theorems (T41, T52) are certified by them.
fn suite_row(e: &SuiteEntry, seed: u64) -> SuiteRow {
    let fam = &e.recommended_family;
    let stop = StopRule::default();
    let mut cells = Vec::new();
    for (label, condition) in [
        ("T31", RadiusCondition::T31),
        ("T41", RadiusCondition::T41),
        ("T51", RadiusCondition::T51a),
        ("T52", RadiusCondition::T52),
    ] {
        let certified = matches!(condition, RadiusCondition::T41 | RadiusCondition::T52);
        let result = solve_radius(condition, fam, 1e-12).and_then(|cert| {
            let inside = ballcert::linalg::distance(&e.default_x0, e.root()) < cert.r;
            let hold = if condition == RadiusCondition::T41 {
                uniqueness_probe(&e.problem, cert.r, 50, seed)?.distinct_roots_found == 1
            } else {
                let theorem: Theorem = label.parse()?;
                verify(e, e.default_x0.clone(), theorem, fam.clone(), None, &stop)?.all_hold
            };
            Ok((cert.r, inside, hold))
        });
        cells.push(match result {
            Ok((r, inside, hold)) => SuiteCell {
                theorem: label.into(),
                condition,
                r: Some(r),
                x0_inside: Some(inside),
                all_hold: Some(hold),
                certified,
                error: None,
            },
            Err(err) => SuiteCell {
                theorem: label.into(),
                condition,
                r: None,
                x0_inside: None,
                all_hold: None,
                certified,
                error: Some(err.to_string()),
            },
        });
    }
    SuiteRow {
        entry: e.name.to_string(),
        family: fam.clone(),
        x0: e.default_x0.clone(),
        cells,
    }
}

fn suite_table(rows: &[SuiteRow]) -> String {
    let mut out = format!("{:<10}", "entry");
    for c in ["T31", "T41", "T51", "T52"] {
        out.push_str(&format!("  {c:>22}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{:<10}", row.entry));
        for cell in &row.cells {
            let text = match (cell.r, cell.all_hold) {
                (Some(r), Some(h)) => format!(
                    "{r:.6} {}{}",
                    if h { "hold" } else { "FAIL" },
                    if cell.certified { "" } else { "*" }
                ),
                _ => "error".into(),
            };
            out.push_str(&format!("  {text:>22}"));
        }
        out.push('\n');
    }
    out.push_str("* hypothesis not certified by the recommended (center) family\n");
    out
}

fn run(cli: &Cli) -> ballcert::Result<Outcome> {
    match &cli.command {
        Command::Radius {
            condition,
            family,
            rel_tol,
            format,
        } => {
            reject(*format, &[Format::Json, Format::Table])?;
            let cert = solve_radius(condition.parse()?, &parse_family(family)?, *rel_tol)?;
            let text = match format {
                Format::Table => format!(
                    "condition {}\nr         {:.16e}\nresidual  {:.16e}\nfeasible  {}\nbracket   [{:.16e}, {:.16e}]",
                    cert.condition, cert.r, cert.residual, cert.feasible, cert.bracket.0, cert.bracket.1
                ),
                _ => to_json(&cert),
            };
            Ok(Outcome {
                text,
                code: if cert.feasible { 0 } else { EXIT_VERIFY },
            })
        }
        Command::Iterate {
            problem,
            x0,
            stop,
            format,
        } => {
            reject(*format, &[Format::Json, Format::Jsonl, Format::Csv])?;
            let e = entry(problem)?;
            let trace = two_step_newton(&e.problem, &start_point(&e, x0)?, &(*stop).into())?;
            let text = match format {
                Format::Csv => trace.to_csv()?.trim_end().to_string(),
                Format::Jsonl => trace.steps.iter().map(to_json).collect::<Vec<_>>().join("\n"),
                _ => to_json(&trace),
            };
            Ok(Outcome::ok(text))
        }
        Command::Verify {
            problem,
            x0,
            theorem,
            family,
            a,
            stop,
            format,
        } => {
            reject(*format, &[Format::Json, Format::Table])?;
            let e = entry(problem)?;
            let fam = match family {
                Some(f) => parse_family(f)?,
                None => e.recommended_family.clone(),
            };
            let report = verify(&e, start_point(&e, x0)?, theorem.parse()?, fam, *a, &(*stop).into())?;
            let text = match format {
                Format::Table => {
                    let mut t = report.per_step.to_table();
                    match &report.global {
                        Some(g) => t.push_str(&g.to_table()),
                        None => t.push_str(&format!("global envelope skipped: {}\n", report.note.clone().unwrap_or_default())),
                    }
                    t.trim_end().to_string()
                }
                _ => to_json(&report),
            };
            Ok(Outcome {
                text,
                code: if report.all_hold { 0 } else { EXIT_VERIFY },
            })
        }
        Command::Suite {
            list,
            entry: only,
            seed,
            format,
        } => {
            reject(*format, &[Format::Json, Format::Table])?;
            let entries = match only {
                Some(name) => vec![entry(name)?],
                None => suite(),
            };
            if *list {
                let listing: Vec<_> = entries.iter().map(SuiteEntry::listing).collect();
                return Ok(Outcome::ok(to_json(&listing)));
            }
            let rows: Vec<SuiteRow> = std::thread::scope(|s| {
                let handles: Vec<_> = entries.iter().map(|e| s.spawn(move || suite_row(e, *seed))).collect();
                handles.into_iter().map(|h| h.join().expect("suite worker panicked")).collect()
            });
            let failed = rows
                .iter()
                .flat_map(|r| &r.cells)
                .any(|c| c.certified && c.all_hold != Some(true));
            let text = match format {
                Format::Table => suite_table(&rows).trim_end().to_string(),
                _ => to_json(&rows),
            };
            Ok(Outcome {
                text,
                code: if failed { EXIT_VERIFY } else { 0 },
            })
        }
        Command::EstimateL {
            problem,
            kind,
            r,
            grid,
            seed,
        } => {
            let e = entry(problem)?;
            let kind: LipschitzKind = kind.parse()?;
            let r = r.unwrap_or_else(|| e.ball_radius());
            Ok(Outcome::ok(to_json(&estimate_constant(&e.problem, kind, r, *grid, *seed)?)))
        }
        Command::CrossValidate {
            constant,
            affine,
            holder,
            rational,
            rel_tol,
        } => {
            let fams = [
                parse_family(&format!("constant:{constant}"))?,
                parse_family(&format!("affine:{affine}"))?,
                parse_family(&format!("holder:{holder}"))?,
                parse_family(&format!("rational:{rational}"))?,
            ];
            let results = ClosedFormId::ALL
                .iter()
                .map(|id| {
                    let fam = fams.iter().find(|f| f.name() == id.family()).expect("one family per name");
                    cross_validate(*id, fam, *rel_tol)
                })
                .collect::<ballcert::Result<Vec<CrossValidation>>>()?;
            Ok(Outcome::ok(to_json(&results)))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            let text = out.text + "\n";
            let written = match &cli.output {
                Some(path) => std::fs::write(path, text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
