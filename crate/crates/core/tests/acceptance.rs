//! Acceptance suite: one line per criterion, every suite at its default levels.
//! Runs without the test harness so the lines are always printed.

use std::fs;
use std::time::Instant;

use wsphase::suite::{emit_report, run_suite, ReportFormat, SuiteConfig, VerificationReport};

struct Outcome {
    passed: bool,
    detail: String,
}

fn suite_outcome(name: &str) -> Outcome {
    match run_suite(&SuiteConfig::named(name)) {
        Ok(report) => judge(&report),
        Err(e) => Outcome {
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn judge(report: &VerificationReport) -> Outcome {
    let bad: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.as_expected())
        .map(|c| format!("{} {:?} residuals {:?} order {:?}", c.name, c.status, c.residuals, c.order))
        .collect();
    let s = &report.summary;
    Outcome {
        passed: s.ok && bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{} checks, {} negative controls failed as expected", s.total, s.expected_failures)
        } else {
            bad.join("; ")
        },
    }
}

fn report_json_without_timestamp(dir: &std::path::Path, cfg: &SuiteConfig) -> Result<String, String> {
    let report = run_suite(cfg).map_err(|e| e.to_string())?;
    let paths = emit_report(&report, dir, &[ReportFormat::Json]).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(&paths[0]).map_err(|e| e.to_string())?;
    Ok(text.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n"))
}

fn determinism() -> Outcome {
    let run = || -> Result<bool, String> {
        let mut all = true;
        for name in ["nilpotency", "gauss-bonnet"] {
            let cfg = SuiteConfig::named(name);
            let a = tempfile::tempdir().map_err(|e| e.to_string())?;
            let b = tempfile::tempdir().map_err(|e| e.to_string())?;
            all &= report_json_without_timestamp(a.path(), &cfg)? == report_json_without_timestamp(b.path(), &cfg)?;
        }
        Ok(all)
    };
    match run() {
        Ok(same) => Outcome {
            passed: same,
            detail: if same { "reports byte-identical".into() } else { "reports differ".into() },
        },
        Err(e) => Outcome {
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn main() {
    let criteria: [(&str, &str); 12] = [
        ("projector algebra", "projectors"),
        ("adjusted Ricci", "adjusted-ricci"),
        ("Gauss-Bonnet", "gauss-bonnet"),
        ("pure-divergence identities", "divergence-forms"),
        ("Palatini-type identity", "palatini"),
        ("topological potential agreement", "psi-agreement"),
        ("DNG dynamics", "dng-dynamics"),
        ("symplectic current", "conservation-dng"),
        ("slice independence", "slice-independence"),
        ("nilpotency", "nilpotency"),
        ("Yang-Mills", "yang-mills"),
        ("linearized gravity", "linearized-gr"),
    ];
    let mut failures = Vec::new();
    for (k, (label, suite)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = suite_outcome(suite);
        println!(
            "{} {:>2} {label} ({suite}, {:.1}s): {}",
            if o.passed { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failures.push(k + 1);
        }
    }
    let t = Instant::now();
    let o = determinism();
    println!(
        "{} 13 report determinism ({:.1}s): {}",
        if o.passed { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        o.detail
    );
    if !o.passed {
        failures.push(13);
    }
    if !failures.is_empty() {
        eprintln!("failed criteria: {failures:?}");
        std::process::exit(1);
    }
}
