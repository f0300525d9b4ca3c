//! Report assembly and emission: versioned JSON plus a flat CSV of every
//! check and z statistic. Identical configurations produce byte-identical
//! files except for the single `timing` block of the JSON report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use girsanov::suite::SuiteReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, serde::Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run: String,
    pub pass: bool,
    /// Source revision the binary ran against.
    pub git_describe: String,
    /// Full merged configuration echo.
    pub config: BTreeMap<String, String>,
    pub suite: SuiteReport,
    /// The only non-deterministic block: wall-clock data.
    pub timing: Timing,
}

#[derive(Debug, serde::Serialize)]
pub struct Timing {
    pub timestamp_unix_ms: u128,
    pub runtime_ms: u64,
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| format!("untracked-{}", env!("CARGO_PKG_VERSION")))
}

pub fn assemble(
    run: &str,
    suite: SuiteReport,
    config: BTreeMap<String, String>,
    runtime_ms: u64,
) -> RunReport {
    RunReport {
        schema_version: SCHEMA_VERSION,
        run: run.to_string(),
        pass: suite.passed(),
        git_describe: git_describe(),
        config,
        suite,
        timing: Timing {
            timestamp_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            runtime_ms,
        },
    }
}

pub fn to_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Flat CSV: one row per check and one per drift-test z statistic.
pub fn to_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "run", "kind", "id", "window_start", "window_end", "functional", "value", "se",
        "threshold", "passed",
    ])
    .unwrap();
    for c in &report.suite.checks {
        w.write_record([
            report.run.as_str(),
            "check",
            c.id.as_str(),
            "",
            "",
            "",
            &c.value.to_string(),
            "",
            &c.threshold.to_string(),
            &c.passed.to_string(),
        ])
        .unwrap();
    }
    for t in &report.suite.drift_reports {
        for row in &t.rows {
            w.write_record([
                report.run.as_str(),
                "z",
                t.test_id.as_str(),
                &row.window_start.to_string(),
                &row.window_end.to_string(),
                row.functional.as_str(),
                &row.z.to_string(),
                &row.se.to_string(),
                &t.z_max.to_string(),
                &(row.z.abs() <= t.z_max).to_string(),
            ])
            .unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn write_reports(
    report: &RunReport,
    out_dir: &Path,
    json: bool,
    csv: bool,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let stem = format!("{}-seed{}", report.run, report.config.get("seed").map_or("0", |s| s));
    if json {
        let path = out_dir.join(format!("{stem}.report.json"));
        fs::write(&path, to_json(report))?;
        written.push(path);
    }
    if csv {
        let path = out_dir.join(format!("{stem}.report.csv"));
        fs::write(&path, to_csv(report))?;
        written.push(path);
    }
    Ok(written)
}
