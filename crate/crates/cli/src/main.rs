//! Scenario runner: preset reproductions and inline drift checks with
//! JSON/CSV reports and CI-friendly exit codes (0 pass, 1 check failure,
//! 2 configuration error).

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{RawConfig, ReportFormat, RunConfig};
use girsanov::mc::{
    default_functionals, drift_test, DriftTestConfig, MeasureKind,
};
use girsanov::models::{build_continuous, simulate_brownian, simulate_poisson, RngStream};
use girsanov::path::align;
use girsanov::suite::{self, default_params, run_preset, SuiteReport};

/// Default output directory environment variable.
const OUT_ENV: &str = "GIRSANOV_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "girsanov",
    about = "Measure-change verification suite: preset reproductions, drift tests, reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a preset or inline scenario and write reports.
    Run(RunArgs),
    /// List the available presets.
    ListPresets(ListArgs),
    /// Print the versioned JSON report schema.
    ReportSchema,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name (see `list-presets`). Exactly one of --preset/--model.
    #[arg(long)]
    preset: Option<String>,
    /// Inline scenario family (brownian, poisson, continuous).
    #[arg(long)]
    model: Option<String>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Base grid steps on [0, T].
    #[arg(long)]
    grid: Option<usize>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Base seed; path i uses stream id i.
    #[arg(long)]
    seed: Option<u64>,
    /// Flag probability of the finite-space presets.
    #[arg(long)]
    p: Option<f64>,
    /// Estimator: `mean` or `median-of-means:<k>`.
    #[arg(long)]
    estimator: Option<String>,
    /// Report directory (default: $GIRSANOV_OUT_DIR or ./reports).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report formats, comma separated: json,csv.
    #[arg(long)]
    format: Option<String>,
    /// Exponential drift scale of the inline continuous model.
    #[arg(long)]
    theta: Option<f64>,
    /// Jump intensity of the inline poisson model.
    #[arg(long)]
    rate: Option<f64>,
    /// Injected drift for the inline brownian model (negative control;
    /// a nonzero value should make the drift test fail).
    #[arg(long)]
    drift: Option<f64>,
}

#[derive(Args)]
struct ListArgs {
    /// Emit the listing as JSON.
    #[arg(long)]
    format: Option<String>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Run(args) => match run(args) {
            Ok(pass) => {
                if pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Cmd::ListPresets(args) => list_presets(args),
        Cmd::ReportSchema => {
            print!("{}", include_str!("../report-schema.json"));
            ExitCode::SUCCESS
        }
    }
}

fn resolve_config(args: RunArgs) -> Result<RunConfig, config::ConfigError> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config::ConfigError(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::from_file(&text)?
        }
        None => RawConfig::default(),
    };
    raw.set_if("preset", args.preset);
    raw.set_if("model", args.model);
    raw.set_if("paths", args.paths.map(|v| v.to_string()));
    raw.set_if("grid", args.grid.map(|v| v.to_string()));
    raw.set_if("T", args.horizon.map(|v| v.to_string()));
    raw.set_if("seed", args.seed.map(|v| v.to_string()));
    raw.set_if("p", args.p.map(|v| v.to_string()));
    raw.set_if("estimator", args.estimator);
    raw.set_if("out", args.out.map(|v| v.display().to_string()));
    raw.set_if("format", args.format);
    raw.set_if("theta", args.theta.map(|v| v.to_string()));
    raw.set_if("rate", args.rate.map(|v| v.to_string()));
    raw.set_if("drift", args.drift.map(|v| v.to_string()));
    let default_out = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("reports"));
    raw.resolve(default_out)
}

fn run(args: RunArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let cfg = resolve_config(args)?;
    let started = Instant::now();
    let (run_name, suite_report) = if let Some(preset) = &cfg.preset {
        let r = run_preset(preset, cfg.params)
            .map_err(|e| config::ConfigError(e.to_string()))?;
        (preset.clone(), r)
    } else {
        let model = cfg.model.clone().unwrap();
        (format!("inline-{model}"), inline_suite(&cfg, &model))
    };

    for c in &suite_report.checks {
        println!(
            "{} {:<44} value {:.6e}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.value,
            if c.threshold > 0.0 {
                format!("  (budget {:.3e})", c.threshold)
            } else {
                String::new()
            }
        );
    }
    for w in &suite_report.warnings {
        eprintln!("warning: {w}");
    }

    let pass = suite_report.passed();
    let report = report::assemble(
        &run_name,
        suite_report,
        cfg.echo.clone(),
        started.elapsed().as_millis() as u64,
    );
    let written = report::write_reports(
        &report,
        &cfg.out_dir,
        cfg.formats.contains(&ReportFormat::Json),
        cfg.formats.contains(&ReportFormat::Csv),
    )?;
    for path in written {
        println!("wrote {}", path.display());
    }
    println!(
        "{}: {} ({} checks, {} ms)",
        run_name,
        if pass { "PASS" } else { "FAIL" },
        report.suite.checks.len(),
        report.timing.runtime_ms
    );
    Ok(pass)
}

/// Inline runs: drift-test the model's martingale components under the
/// base measure (and the transformed component under the weighted measure
/// for the continuous family).
fn inline_suite(cfg: &RunConfig, model: &str) -> SuiteReport {
    let started = Instant::now();
    let params = cfg.params;
    let mut report = SuiteReport {
        preset: format!("inline-{model}"),
        params: BTreeMap::from([
            ("T".to_string(), params.horizon),
            ("paths".to_string(), params.paths as f64),
            ("grid".to_string(), params.grid as f64),
            ("seed".to_string(), params.seed as f64),
        ]),
        checks: Vec::new(),
        drift_reports: Vec::new(),
        warnings: Vec::new(),
        runtime_ms: 0,
    };
    let mut cfg_drift = DriftTestConfig::new(params.horizon, params.paths)
        .with_estimator(params.estimator);
    let theta = cfg.theta;
    let rate = cfg.rate;
    let drift = cfg.drift;
    let (component, measure, build): (
        &str,
        MeasureKind,
        Box<dyn Fn(u64) -> girsanov::Scenario + Sync>,
    ) = match model {
        "brownian" => {
            cfg_drift = cfg_drift.with_functionals(default_functionals(false));
            (
                "W",
                MeasureKind::P,
                Box::new(move |i| {
                    let mut w = simulate_brownian(
                        params.horizon,
                        params.grid,
                        RngStream::new(params.seed, i),
                    );
                    if drift != 0.0 {
                        for (t, v) in w.times.clone().iter().zip(w.values.iter_mut()) {
                            *v += drift * t;
                        }
                        w.left_limits = w.values.clone();
                    }
                    scenario_of(model, params.seed, i, params.horizon, align(&[("W", &w)]))
                }),
            )
        }
        "poisson" => {
            cfg_drift = cfg_drift.with_functionals(default_functionals(false));
            (
                "M",
                MeasureKind::P,
                Box::new(move |i| {
                    let p = simulate_poisson(rate, params.horizon, RngStream::new(params.seed, i));
                    // Rebuild on a base grid so checkpoint lookups see the
                    // compensator drift exactly.
                    let grid = girsanov::path::merge_events(
                        &girsanov::path::uniform_grid(params.horizon, params.grid.max(4)),
                        &p.jump_times,
                        params.horizon,
                    );
                    let n = p.counting.resample(&grid);
                    let m = girsanov::CadlagPath {
                        times: grid.clone(),
                        values: grid
                            .iter()
                            .zip(&n.values)
                            .map(|(t, c)| c - rate * t)
                            .collect(),
                        left_limits: grid
                            .iter()
                            .zip(&n.left_limits)
                            .map(|(t, c)| c - rate * t)
                            .collect(),
                        jump_flags: n.jump_flags.clone(),
                        diffusive: false,
                    };
                    scenario_of(
                        model,
                        params.seed,
                        i,
                        params.horizon,
                        align(&[("N", &n), ("M", &m)]),
                    )
                }),
            )
        }
        _ => (
            "Xhat",
            MeasureKind::QWeighted { z_component: "Z".into() },
            Box::new(move |i| {
                let s = build_continuous(theta, params.horizon, params.grid, RngStream::new(params.seed, i));
                let xhat = girsanov::measure::lenglart_transform_null_comp(
                    s.component("X"),
                    s.component("Z"),
                    girsanov::measure::DEFAULT_FLOOR,
                )
                .unwrap();
                let mut panel = s.panel.clone();
                panel.insert("Xhat", xhat);
                girsanov::Scenario { panel, ..s }
            }),
        ),
    };
    match drift_test(component, &build, &measure, &cfg_drift) {
        Ok(t) => {
            report.checks.push(suite::CheckResult {
                id: format!("inline-drift-{component}"),
                passed: t.pass,
                value: t.max_abs_z(),
                threshold: t.z_max,
                detail: format!("max |z| across {} statistics", t.rows.len()),
            });
            report.warnings.extend(t.warnings.clone());
            report.drift_reports.push(t);
        }
        Err(e) => {
            report.checks.push(suite::CheckResult {
                id: format!("inline-drift-{component}"),
                passed: false,
                value: f64::NAN,
                threshold: 0.0,
                detail: e.to_string(),
            });
        }
    }
    report.runtime_ms = started.elapsed().as_millis() as u64;
    report
}

fn scenario_of(
    model: &str,
    seed: u64,
    stream_id: u64,
    horizon: f64,
    panel: girsanov::PathPanel,
) -> girsanov::Scenario {
    girsanov::Scenario {
        panel,
        horizon,
        meta: girsanov::models::ScenarioMeta {
            model: model.to_string(),
            params: BTreeMap::new(),
            seed,
            stream_id,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: girsanov::Accessibility::Infinite,
        },
        stopping_times: BTreeMap::new(),
        integrands: BTreeMap::new(),
        exact: BTreeMap::new(),
        aux: BTreeMap::new(),
    }
}

fn list_presets(args: ListArgs) -> ExitCode {
    let machine = matches!(args.format.as_deref(), Some("json"));
    if let Some(f) = args.format.as_deref() {
        if f != "json" && f != "table" {
            eprintln!("configuration error: unknown listing format '{f}'");
            return ExitCode::from(2);
        }
    }
    if machine {
        let rows: Vec<serde_json::Value> = suite::PRESETS
            .iter()
            .map(|name| {
                let d = default_params(name);
                serde_json::json!({
                    "name": name,
                    "description": suite::preset_description(name),
                    "defaults": {
                        "T": d.horizon,
                        "paths": d.paths,
                        "grid": d.grid,
                        "seed": d.seed,
                        "p": d.p,
                        "estimator": config::render_estimator(d.estimator),
                    },
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows).unwrap());
    } else {
        println!("{:<18} description", "preset");
        for name in suite::PRESETS {
            println!("{name:<18} {}", suite::preset_description(name));
        }
    }
    ExitCode::SUCCESS
}
