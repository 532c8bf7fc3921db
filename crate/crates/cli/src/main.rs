//! Command-line runner for the verification suites and the catenoid solver.
//!
//! Exit codes: 0 when every regular check passes, 1 when a check fails,
//! 2 for usage, configuration or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wsphase::suite::{emit_report, run_suite, CatenoidProblem, ReportFormat, SuiteConfig, SUITES};

#[derive(Parser)]
#[command(name = "wsphase", version, about = "Worldsheet geometry and phase-space verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named suite and write its report.
    Verify {
        suite: String,
        /// JSON configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Finest grid resolution; the level ladder is rescaled to end here.
        #[arg(long)]
        grid: Option<usize>,
        /// Output directory.
        #[arg(long, env = "WSPHASE_OUT_DIR")]
        out: Option<PathBuf>,
        /// Comma-separated report formats: json, csv, svg.
        #[arg(long, value_delimiter = ',')]
        format: Option<Vec<String>>,
    },
    /// List the available suites.
    ListSuites,
    /// Relax a minimal surface.
    Solve {
        #[command(subcommand)]
        problem: Problem,
    },
}

#[derive(Subcommand)]
enum Problem {
    /// Minimal surface spanning two coaxial circles.
    Catenoid {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the relaxed surface as CSV.
        #[arg(long, env = "WSPHASE_OUT_DIR")]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn verify(
    suite: &str,
    config: Option<&Path>,
    grid: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Vec<String>>,
) -> anyhow::Result<bool> {
    let base = match config {
        Some(p) => SuiteConfig::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SuiteConfig::default(),
    };
    let mut cfg = base.for_suite(suite)?;
    if let Some(n) = grid {
        cfg = cfg.with_finest(n)?;
    }
    if let Some(f) = format {
        cfg.output.formats = f.iter().map(|s| s.parse::<ReportFormat>()).collect::<Result<_, _>>()?;
    }
    let dir = out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("reports"));
    let report = run_suite(&cfg)?;
    let written = emit_report(&report, &dir, &cfg.output.formats)?;
    for c in &report.checks {
        let order = c.order.map_or(String::new(), |p| format!(" order {p:.2}"));
        let last = c.residuals.last().map_or(String::new(), |r| format!(" residual {r:.3e}"));
        println!("{:<16} {}{last}{order} [{}]", format!("{:?}", c.status), c.name, c.reference);
        if !c.as_expected() {
            if let Some(d) = &c.detail {
                println!("{:<16} {d}", "");
            }
        }
    }
    let s = &report.summary;
    println!(
        "{}: {} checks, {} passed, {} failed, {} errors, {} expected failures",
        report.suite, s.total, s.passed, s.failed, s.errors, s.expected_failures
    );
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(s.ok)
}

fn solve_catenoid(config: Option<&Path>, out: Option<PathBuf>) -> anyhow::Result<bool> {
    let problem = match config {
        Some(p) => CatenoidProblem::from_json(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => CatenoidProblem::default(),
    };
    let sol = match problem.solve() {
        Ok(s) => s,
        Err(e @ wsphase::Error::NonConvergence { .. }) => {
            println!("relaxation failed: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    println!("iterations {}", sol.iterations);
    println!("area {:.8}", sol.area);
    if let Some(exact) = sol.exact_area {
        println!("catenoid area {exact:.8} (relative error {:.3e})", (sol.area / exact - 1.0).abs());
    }
    if let Some(r) = sol.neck_ratio {
        println!("neck ratio {r:.4}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("catenoid.csv");
        sol.sheet.write_csv(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Verify {
            suite,
            config,
            grid,
            out,
            format,
        } => verify(&suite, config.as_deref(), grid, out, format),
        Command::ListSuites => {
            for s in SUITES.iter() {
                println!("{:<20} levels {:?}  {}", s.name, s.levels, s.description);
            }
            Ok(true)
        }
        Command::Solve {
            problem: Problem::Catenoid { config, out },
        } => solve_catenoid(config.as_deref(), out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
