//! End-to-end tests of the binary: exit codes, report emission, and the
//! determinism contract.

use std::path::Path;
use std::process::{Command, Output};

fn girsanov(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_girsanov"))
        .args(args)
        .current_dir(dir)
        .env_remove("GIRSANOV_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

#[test]
fn strong_orth_preset_passes_and_reports_compensator_jump() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &["run", "--preset", "strong-orth", "--p", "0.3", "--out", "r"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("r/strong-orth-seed19.report.json"))
        .expect("json report written");
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["pass"], true);
    let comp = v["suite"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["id"] == "compensator-jump")
        .expect("compensator check present");
    assert_eq!(comp["value"], -0.15);
    assert!(dir.path().join("r/strong-orth-seed19.report.csv").exists());
}

#[test]
fn sec5_1_preset_small_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &[
            "run",
            "--preset",
            "sec5-1",
            "--T",
            "0.25",
            "--paths",
            "40000",
            "--grid",
            "64",
            "--seed",
            "7",
            "--out",
            "r",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("transform-closed-form"));
}

#[test]
fn identities_preset_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &[
            "run", "--preset", "identities", "--paths", "2000", "--grid", "400", "--out", "r",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("integral-transform-commutation"));
}

#[test]
fn unknown_preset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(&["run", "--preset", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn bad_horizon_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &["run", "--preset", "sec5-1", "--T", "0.4", "--paths", "10"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preset_and_model_together_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &["run", "--preset", "sec5-1", "--model", "brownian"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn honest_inline_brownian_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &[
            "run", "--model", "brownian", "--paths", "20000", "--grid", "4", "--seed", "3",
            "--out", "r",
        ],
        dir.path(),
    );
    assert!(out.status.success());
}

#[test]
fn drifted_negative_control_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(
        &[
            "run", "--model", "brownian", "--drift", "0.5", "--paths", "20000", "--grid",
            "4", "--seed", "3", "--out", "r",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# roundtrip at a coarse grid\npreset = roundtrip\npaths = 40\ngrid = 200\nseed = 5\n",
    )
    .unwrap();
    let out = girsanov(
        &["run", "--config", "run.cfg", "--paths", "60", "--out", "r"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("r/roundtrip-seed5.report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["config"]["paths"], "60");
    assert_eq!(v["config"]["grid"], "200");
}

#[test]
fn reports_byte_identical_modulo_timing() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let out = girsanov(
            &[
                "run", "--preset", "roundtrip", "--paths", "30", "--grid", "300", "--seed",
                "21", "--out", "r",
            ],
            dir,
        );
        assert!(out.status.success());
    }
    let scrub = |dir: &Path| -> String {
        let text =
            std::fs::read_to_string(dir.join("r/roundtrip-seed21.report.json")).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        serde_json::to_string_pretty(&v).unwrap()
    };
    assert_eq!(scrub(dir_a.path()), scrub(dir_b.path()));
    // The CSV has no timing block at all: byte identical.
    let csv_a = std::fs::read(dir_a.path().join("r/roundtrip-seed21.report.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.path().join("r/roundtrip-seed21.report.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_girsanov"))
        .args(["run", "--preset", "roundtrip", "--paths", "20", "--grid", "200"])
        .current_dir(dir.path())
        .env("GIRSANOV_OUT_DIR", "env-reports")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("env-reports/roundtrip-seed13.report.json").exists());
}

#[test]
fn list_presets_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(&["list-presets"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["sec5-1", "strong-orth", "usual-orth", "roundtrip", "identities", "dimension-finite"]
    {
        assert!(text.contains(name), "missing {name} in listing");
    }
    let out = girsanov(&["list-presets", "--format", "json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
    assert!(v[0]["defaults"]["paths"].is_number());

    let out = girsanov(&["list-presets", "--format", "yaml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_schema_prints_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = girsanov(&["report-schema"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["properties"]["schema_version"]["const"], 1);
}

#[test]
fn inline_models_run() {
    let dir = tempfile::tempdir().unwrap();
    for (model, extra) in [
        ("poisson", vec!["--rate", "1.0"]),
        ("continuous", vec!["--theta", "0.5"]),
    ] {
        let mut args = vec![
            "run", "--model", model, "--paths", "20000", "--grid", "16", "--seed", "9",
            "--out", "r",
        ];
        args.extend(extra);
        let out = girsanov(&args, dir.path());
        assert!(
            out.status.success(),
            "{model}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
