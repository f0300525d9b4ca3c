//! Preset check suites: each preset reproduces one worked scenario with
//! its full ladder of exact and Monte Carlo checks, returning a
//! serializable report with one pass/fail line per check.

use std::collections::BTreeMap;
use std::time::Instant;

use num::{BigRational, One, ToPrimitive, Zero};
use rand::Rng;

use crate::batch;
use crate::calculus::{
    divergence_probe, ito_reciprocal_check, quadratic_covariation, stochastic_integral,
    IntegrandPath,
};
use crate::finite::{
    self, dimension_check, lenglart_discrete, martingale_check_exact,
    predictable_compensator_discrete, strong_orthogonality_discrete, two_coin_space,
    DiscreteProcess, Q,
};
use crate::mc::{
    default_functionals, drift_test_on, DriftTestConfig, EstimatorMode, MeasureKind, TestReport,
};
use crate::measure::{
    girsanov_classical, inverse_transform, lenglart_transform_null_comp, BracketVariation,
    MeasureError, DEFAULT_FLOOR,
};
use crate::models::{
    build_continuous, build_sec5_1, build_usual_orth, sec5_1_transformed_closed_form,
    simulate_step_density, ModelError, RngStream, Scenario,
};
use crate::path::CadlagPath;
use crate::quad;
use crate::representation::usual_orthogonality_drift;
use crate::tol;

/// One named check with its headline number and budget.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    /// Headline numeric outcome (residual, estimate, count, ...).
    pub value: f64,
    /// Budget the value was held against (0 when the check is exact or
    /// structural).
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn bounded(id: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { id: id.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    fn flag(id: &str, passed: bool, value: f64, detail: impl Into<String>) -> Self {
        Self { id: id.into(), passed, value, threshold: 0.0, detail: detail.into() }
    }
}

/// Full result of one preset run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SuiteReport {
    pub preset: String,
    pub params: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub drift_reports: Vec<TestReport>,
    pub warnings: Vec<String>,
    /// Wall-clock runtime; excluded from serialized reports so identical
    /// configurations emit identical bytes.
    #[serde(skip_serializing)]
    pub runtime_ms: u64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn new(preset: &str) -> Self {
        Self {
            preset: preset.to_string(),
            params: BTreeMap::new(),
            checks: Vec::new(),
            drift_reports: Vec::new(),
            warnings: Vec::new(),
            runtime_ms: 0,
        }
    }
}

/// Run parameters shared by the presets; each preset reads the fields it
/// uses and ships defaults for the rest.
#[derive(Debug, Clone, Copy)]
pub struct SuiteParams {
    pub horizon: f64,
    pub paths: u64,
    pub grid: usize,
    pub seed: u64,
    pub p: f64,
    pub estimator: EstimatorMode,
}

pub const PRESETS: [&str; 6] = [
    "sec5-1",
    "strong-orth",
    "usual-orth",
    "roundtrip",
    "identities",
    "dimension-finite",
];

/// One-line description per preset.
pub fn preset_description(name: &str) -> &'static str {
    match name {
        "sec5-1" => {
            "single-jump scaled-Poisson integral: non-integrable bracket, closed-form \
             transform, sqrt(pi) moment, divergence probe, weighted drift test"
        }
        "strong-orth" => {
            "four-atom exact oracle where strong orthogonality of the pair is lost \
             under the reweighted measure"
        }
        "usual-orth" => {
            "jump-exponential pair: usual-sense orthogonality fails after the change \
             of measure; intensity-compensated control passes"
        }
        "roundtrip" => "transform / inverse-transform round trips, continuous and pure-jump",
        "identities" => {
            "reciprocal-density, commutation, round-trip and classical-agreement \
             identity residuals"
        }
        "dimension-finite" => {
            "exact martingale-transfer equivalence and dimension monotonicity on \
             finite spaces"
        }
        _ => "",
    }
}

/// Spec of defaults per preset.
pub fn default_params(preset: &str) -> SuiteParams {
    match preset {
        "sec5-1" => SuiteParams {
            horizon: 0.25,
            paths: 1_000_000,
            grid: 64,
            seed: 7,
            p: 0.3,
            estimator: EstimatorMode::MedianOfMeans { blocks: 32 },
        },
        "usual-orth" => SuiteParams {
            horizon: 1.0,
            paths: 100_000,
            grid: 1_000,
            seed: 11,
            p: 0.3,
            estimator: EstimatorMode::Mean,
        },
        "roundtrip" => SuiteParams {
            horizon: 1.0,
            paths: 200,
            grid: 1_000,
            seed: 13,
            p: 0.3,
            estimator: EstimatorMode::Mean,
        },
        "identities" => SuiteParams {
            horizon: 1.0,
            paths: 10_000,
            grid: 1_000,
            seed: 17,
            p: 0.3,
            estimator: EstimatorMode::Mean,
        },
        _ => SuiteParams {
            horizon: 1.0,
            paths: 1_000,
            grid: 64,
            seed: 19,
            p: 0.3,
            estimator: EstimatorMode::Mean,
        },
    }
}

/// Run a preset by name.
pub fn run_preset(preset: &str, params: SuiteParams) -> Result<SuiteReport, ModelError> {
    match preset {
        "sec5-1" => sec5_1_suite(params),
        "strong-orth" => Ok(strong_orth_suite(params)),
        "usual-orth" => Ok(usual_orth_suite(params)),
        "roundtrip" => roundtrip_suite(params),
        "identities" => identities_suite(params),
        "dimension-finite" => Ok(dimension_finite_suite(params)),
        other => panic!("unknown preset '{other}' (validate before dispatch)"),
    }
}

// ---------------------------------------------------------------------------
// strong-orth: the exact four-atom oracle.
// ---------------------------------------------------------------------------

pub fn strong_orth_suite(params: SuiteParams) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("strong-orth");
    report.params.insert("p".into(), params.p);

    let p_rat = BigRational::from_float(params.p).expect("p must be finite");
    let tc = two_coin_space(p_rat.clone());
    let space = &tc.space;
    let w_p = space.weights();
    let z = &tc.x;
    let w_q = space.reweight(&z.stage_column(2));
    let half_p = &p_rat / finite::q_int(2);

    // Compensator of the component jump at the density's death time.
    let comp =
        predictable_compensator_discrete(&finite::jump_at_eta(&tc.x, z, space), space).unwrap();
    let comp_jump = comp.increment(0, 2);
    report.checks.push(CheckResult::flag(
        "compensator-jump",
        comp_jump == -half_p.clone(),
        comp_jump.to_f64().unwrap(),
        format!("jump of the dual predictable projection; must equal -p/2 = {}", -params.p / 2.0),
    ));

    let xhat = lenglart_discrete(&tc.x, z, space).unwrap();
    let yhat = lenglart_discrete(&tc.y, z, space).unwrap();

    // Transformed jump products on the surviving sign atoms: -(p/2) * xi.
    let prod_plus = xhat.increment(2, 2) * yhat.increment(2, 2);
    let prod_minus = xhat.increment(3, 2) * yhat.increment(3, 2);
    report.checks.push(CheckResult::flag(
        "transformed-jump-product",
        prod_plus == -half_p.clone() && prod_minus == half_p.clone(),
        prod_plus.to_f64().unwrap(),
        "dXhat * dYhat at the jump time on the surviving sign atoms must be -+ p/2 exactly",
    ));

    let (x_ok, x_viol) = martingale_check_exact(&xhat, space, &w_q);
    let (y_ok, y_viol) = martingale_check_exact(&yhat, space, &w_q);
    report.checks.push(CheckResult::flag(
        "transform-q-martingale-x",
        x_ok && x_viol == 0.0,
        x_viol,
        "exact martingale check of the transformed first component under the reweighted measure",
    ));
    report.checks.push(CheckResult::flag(
        "transform-q-martingale-y",
        y_ok && y_viol == 0.0,
        y_viol,
        "exact martingale check of the transformed second component",
    ));

    let (orth_p, sup_p) = strong_orthogonality_discrete(&tc.x, &tc.y, space, &w_p);
    report.checks.push(CheckResult::flag(
        "base-pair-strongly-orthogonal",
        orth_p && sup_p == 0.0,
        sup_p,
        "the base pair never jumps together: bracket identically zero",
    ));

    let (orth_q, sup_q) = strong_orthogonality_discrete(&xhat, &yhat, space, &w_q);
    report.checks.push(CheckResult::flag(
        "transformed-pair-not-strongly-orthogonal",
        !orth_q && (BigRational::from_float(sup_q).unwrap() == half_p.clone()),
        sup_q,
        "verdict: NOT strongly orthogonal under the new measure (bracket sup = p/2)",
    ));

    // The sufficient condition fails here: the component jumps at the
    // accessible death time.
    let eta_atom = 1usize;
    let eta_jump = tc.x.increment(eta_atom, 2);
    report.checks.push(CheckResult::flag(
        "jump-at-accessible-eta-violated",
        !eta_jump.is_zero(),
        eta_jump.to_f64().unwrap(),
        "the component jump at the accessible zero-hit time is nonzero, so loss of \
         strong orthogonality is expected",
    ));

    // Reweighted atom masses: (p, 0, (1-p)/2, (1-p)/2).
    let expected_q: [Q; 4] = [
        p_rat.clone(),
        Q::zero(),
        (Q::one() - &p_rat) / finite::q_int(2),
        (Q::one() - &p_rat) / finite::q_int(2),
    ];
    report.checks.push(CheckResult::flag(
        "reweighted-atom-masses",
        w_q.iter().zip(expected_q.iter()).all(|(a, b)| a == b),
        w_q[0].to_f64().unwrap(),
        "density-weighted atom masses equal (p, 0, (1-p)/2, (1-p)/2)",
    ));

    let d_p = dimension_check(space, &[&tc.x, &tc.y], &w_p);
    report.checks.push(CheckResult::flag(
        "pair-dimension",
        d_p == 2,
        d_p as f64,
        "the pair spans a two-generator stable family under the base measure",
    ));

    report.runtime_ms = started.elapsed().as_millis() as u64;
    report
}

// ---------------------------------------------------------------------------
// sec5-1: the single-jump scenario.
// ---------------------------------------------------------------------------

/// Stream-id offsets decorrelating the sub-checks of one preset run.
const STREAM_BLOCK: u64 = 1 << 33;

pub fn sec5_1_suite(params: SuiteParams) -> Result<SuiteReport, ModelError> {
    let started = Instant::now();
    // Validate the horizon once up front.
    build_sec5_1(params.horizon, 2, RngStream::new(params.seed, 0))?;

    let mut report = SuiteReport::new("sec5-1");
    report.params.insert("T".into(), params.horizon);
    report.params.insert("paths".into(), params.paths as f64);
    report.params.insert("grid".into(), params.grid as f64);
    report.params.insert("seed".into(), params.seed as f64);
    let horizon = params.horizon;
    let seed = params.seed;

    if params.estimator == EstimatorMode::Mean {
        report.warnings.push(
            "heavy-tailed preset run with the plain mean estimator; results may have \
             unstable standard errors"
                .into(),
        );
    }

    // Per-path bracket identity sqrt([X]_end) = 1/sqrt(tau1), full grid.
    let ident_paths = params.paths.min(10_000);
    let worst_ident = batch::fold_indexed(
        ident_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_sec5_1(horizon, params.grid, RngStream::new(seed, i)).unwrap();
            let x = s.component("X");
            let tau1 = s.stopping_times["tau1"].value;
            let engine = quadratic_covariation(x, x).values.last().unwrap().sqrt();
            acc.max((engine - 1.0 / tau1.sqrt()).abs())
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "bracket-identity",
        worst_ident,
        tol::BRACKET_IDENTITY_TOL,
        format!("per-path |sqrt([X]_end) - 1/sqrt(tau1)| over {ident_paths} paths"),
    ));

    // Closed-form match of the transform, pure-jump exact at any grid.
    let match_paths = params.paths.min(100_000);
    let worst_match = batch::fold_indexed(
        match_paths,
        || 0.0f64,
        |acc, i| {
            let s =
                build_sec5_1(horizon, params.grid, RngStream::new(seed, STREAM_BLOCK + i))
                    .unwrap();
            let x = s.component("X");
            let z = s.component("Z");
            let tau1 = s.stopping_times["tau1"].value;
            let xhat = lenglart_transform_null_comp(x, z, DEFAULT_FLOOR).unwrap();
            let mut worst = acc;
            for (k, &t) in xhat.times.iter().enumerate() {
                let closed = sec5_1_transformed_closed_form(t, tau1, horizon);
                worst = worst.max((xhat.values[k] - closed).abs());
            }
            worst
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "transform-closed-form",
        worst_match,
        tol::PURE_JUMP_TOL,
        format!("pathwise transform vs. three-term closed form over {match_paths} paths"),
    ));

    // Quadrature of the first moment of 1/sqrt(tau).
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let quad_value = quad::sqrt_pi_integral(1e-10);
    report.checks.push(CheckResult::bounded(
        "sqrt-pi-quadrature",
        (quad_value - sqrt_pi).abs(),
        1e-6,
        format!("quadrature of the exponential inverse-sqrt moment: {quad_value:.7}"),
    ));

    // Monte Carlo pass on the minimal exact grid: the panel is exact at
    // event times for any base grid (verified by the grid-independence
    // test), so the heavy batches run on 4 base steps.
    let mc_grid = 4usize;
    let truncations = [1e-2, 1e-3, 1e-4];
    // Per path: the jump time, the bracket at the horizon (what the
    // truncated divergence series measures) and the bracket at the panel
    // end, which always contains the jump and carries the full identity
    // [X]^(1/2) = 1/sqrt(tau1).
    let raw: Vec<(f64, f64, f64)> = batch::map_indexed(params.paths, |i| {
        let s = build_sec5_1(horizon, mc_grid, RngStream::new(seed, 2 * STREAM_BLOCK + i))
            .unwrap();
        let x = s.component("X");
        let tau1 = s.stopping_times["tau1"].value;
        let bracket = quadratic_covariation(x, x);
        (tau1, bracket.value_at(horizon), *bracket.values.last().unwrap())
    });
    let samples: Vec<(f64, f64)> = raw.iter().map(|&(tau, bh, _)| (tau, bh)).collect();
    let sqrt_samples: Vec<f64> = raw.iter().map(|&(_, _, be)| be.sqrt()).collect();
    let worst_ident_mc = raw
        .iter()
        .map(|&(tau, _, be)| (be.sqrt() - 1.0 / tau.sqrt()).abs())
        .fold(0.0f64, f64::max);
    report.checks.push(CheckResult::bounded(
        "bracket-identity-mc-batch",
        worst_ident_mc,
        tol::BRACKET_IDENTITY_TOL,
        format!("per-path |sqrt([X]_end) - 1/sqrt(tau1)| over the full {} path batch", params.paths),
    ));
    let est = crate::mc::estimate(params.estimator, &sqrt_samples);
    report.checks.push(CheckResult::bounded(
        "sqrt-pi-mc",
        (est.value - sqrt_pi).abs() / sqrt_pi,
        0.05,
        format!(
            "median-of-means of sqrt([X]_T captured at the jump) over {} paths: {:.5}",
            params.paths, est.value
        ),
    ));

    let rows = divergence_probe(&samples, horizon, &truncations);
    for row in &rows {
        // Robust estimate of the truncated mean.
        let trunc_samples: Vec<f64> = samples
            .iter()
            .map(|&(tau, b)| if tau > row.epsilon { b } else { 0.0 })
            .collect();
        let trunc_est = crate::mc::estimate(params.estimator, &trunc_samples);
        report.checks.push(CheckResult::bounded(
            &format!("divergence-mc-eps-{:.0e}", row.epsilon),
            (trunc_est.value - row.quadrature).abs() / row.quadrature,
            0.05,
            format!(
                "truncated bracket mean {:.4} vs quadrature {:.4}",
                trunc_est.value, row.quadrature
            ),
        ));
    }
    let mut growth_ok = true;
    let mut growths = Vec::new();
    for w in rows.windows(2) {
        let g = w[1].quadrature - w[0].quadrature;
        growths.push(g);
        if !((g - 10f64.ln()).abs() <= 0.05 && g > 0.0) {
            growth_ok = false;
        }
    }
    report.checks.push(CheckResult::flag(
        "divergence-growth-per-decade",
        growth_ok,
        growths.first().copied().unwrap_or(0.0),
        format!("quadrature series grows by {growths:?} per decade (log 10 = 2.3026)"),
    ));

    // Weighted drift test of the transform.
    let cfg = DriftTestConfig {
        checkpoints: (1..=4).map(|k| horizon * k as f64 / 4.0).collect(),
        functionals: default_functionals(true),
        z_max: 4.0,
        batch: params.paths,
        estimator: params.estimator,
    };
    let build = move |i: u64| {
        build_sec5_1(horizon, mc_grid, RngStream::new(seed, 3 * STREAM_BLOCK + i)).unwrap()
    };
    let drift = drift_test_on(
        "transform-q-drift",
        &build,
        move |s| {
            lenglart_transform_null_comp(s.component("X"), s.component("Z"), DEFAULT_FLOOR)
                .unwrap()
        },
        &MeasureKind::QWeighted { z_component: "Z".into() },
        &cfg,
    )
    .expect("drift statistics");
    report.checks.push(CheckResult::flag(
        "transform-q-drift",
        drift.pass,
        drift.max_abs_z(),
        format!("max |z| over {} statistics, weighted at window right endpoints", drift.rows.len()),
    ));
    report.warnings.extend(drift.warnings.clone());
    report.drift_reports.push(drift);

    // Weighted expectation of the transform at the horizon: a martingale
    // started at zero.
    let q_batch = params.paths.min(200_000);
    let build_q = move |i: u64| {
        build_sec5_1(horizon, mc_grid, RngStream::new(seed, 4 * STREAM_BLOCK + i)).unwrap()
    };
    let lazy = crate::measure::LazyBatch { size: q_batch, build: &build_q };
    let qe = crate::measure::q_expectation(
        &lazy,
        &|s: &Scenario| {
            lenglart_transform_null_comp(s.component("X"), s.component("Z"), DEFAULT_FLOOR)
                .unwrap()
                .value_at(s.horizon)
        },
        horizon,
        "Z",
        params.estimator,
    );
    report.checks.push(CheckResult::flag(
        "q-expectation-transform-terminal",
        qe.estimate.abs() <= 4.0 * qe.std_error,
        qe.estimate,
        format!(
            "weighted terminal mean {:.5} +- {:.5} must sit within 4 spreads of 0",
            qe.estimate, qe.std_error
        ),
    ));

    // The classical transform must refuse this scenario.
    let s0 = build_sec5_1(horizon, 4, RngStream::new(seed, 0)).unwrap();
    let pcov = CadlagPath::constant(s0.component("X").times.clone(), 0.0);
    let refused = girsanov_classical(
        s0.component("X"),
        s0.component("Z"),
        &pcov,
        if s0.meta.brackets_locally_integrable {
            BracketVariation::LocallyIntegrable
        } else {
            BracketVariation::NotLocallyIntegrable
        },
        DEFAULT_FLOOR,
    );
    report.checks.push(CheckResult::flag(
        "classical-transform-refuses",
        refused == Err(MeasureError::NotApplicable),
        1.0,
        "classical correction is inapplicable: the bracket has no locally integrable variation",
    ));

    report.runtime_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

// ---------------------------------------------------------------------------
// usual-orth: the jump-exponential pair.
// ---------------------------------------------------------------------------

pub fn usual_orth_suite(params: SuiteParams) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("usual-orth");
    report.params.insert("T".into(), params.horizon);
    report.params.insert("paths".into(), params.paths as f64);
    report.params.insert("grid".into(), params.grid as f64);
    report.params.insert("seed".into(), params.seed as f64);
    let horizon = params.horizon;
    let grid = params.grid;
    let seed = params.seed;

    // Pathwise jump identities and closed-form match on a subsample.
    let sub = params.paths.min(2_000);
    let (worst_jump, worst_closed) = batch::fold_indexed(
        sub,
        || (0.0f64, 0.0f64),
        |(wj, wc), i| {
            let s = build_usual_orth(horizon, grid, RngStream::new(seed, i));
            let x = s.component("X");
            let y = s.component("Y");
            let tau = s.stopping_times["tau"];
            let mut wj = wj;
            if tau.value <= horizon {
                let k = x.index_at(tau.value);
                wj = wj.max((x.jump(k) - x.left_limits[k]).abs() / x.left_limits[k].abs());
                wj = wj.max((y.jump(k) + y.left_limits[k]).abs() / y.left_limits[k].abs());
            }
            let scale_x = s.exact["X"].sup_norm().max(1.0);
            let scale_y = s.exact["Y"].sup_norm().max(1.0);
            let wc = wc
                .max(x.sup_distance(&s.exact["X"]) / scale_x)
                .max(y.sup_distance(&s.exact["Y"]) / scale_y);
            (wj, wc)
        },
        |a, b| (a.0.max(b.0), a.1.max(b.1)),
    );
    report.checks.push(CheckResult::bounded(
        "jump-identities",
        worst_jump,
        1e-12,
        "dX_tau / X_tau- = 1 and dY_tau / Y_tau- = -1, relative",
    ));
    report.checks.push(CheckResult::bounded(
        "exponential-closed-form",
        worst_closed,
        tol::tol_c(tol::C_STOCH_EXP, grid),
        format!("engine exponentials vs closed forms over {sub} paths, relative"),
    ));

    // The base-measure orthogonality identity and the drift pair.
    let cfg = DriftTestConfig {
        checkpoints: (1..=4).map(|k| horizon * k as f64 / 4.0).collect(),
        functionals: default_functionals(true),
        z_max: 4.0,
        batch: params.paths,
        estimator: params.estimator,
    };
    let build = move |i: u64| build_usual_orth(horizon, grid, RngStream::new(seed, i));
    let orth = usual_orthogonality_drift(&build, &cfg, DEFAULT_FLOOR).expect("drift statistics");
    report.checks.push(CheckResult::bounded(
        "orthogonality-identity",
        orth.identity_residual_rel,
        tol::tol_c(tol::C_ORTH_IDENTITY, grid),
        "sup |[X,Y] + (X_- Y_-).M| normalized by the running product scale",
    ));
    report.checks.push(CheckResult::flag(
        "product-drift-detected",
        !orth.raw.pass && orth.raw.max_abs_z() > 4.0,
        orth.raw.max_abs_z(),
        "the transformed-pair product must fail the drift test (it is no martingale)",
    ));
    report.checks.push(CheckResult::flag(
        "compensated-product-passes",
        orth.compensated.pass,
        orth.compensated.max_abs_z(),
        "removing the intensity compensator restores the martingale property",
    ));
    report.drift_reports.push(orth.raw);
    report.drift_reports.push(orth.compensated);

    report.runtime_ms = started.elapsed().as_millis() as u64;
    report
}

// ---------------------------------------------------------------------------
// roundtrip: transform / inverse-transform.
// ---------------------------------------------------------------------------

pub fn roundtrip_suite(params: SuiteParams) -> Result<SuiteReport, ModelError> {
    let started = Instant::now();
    let mut report = SuiteReport::new("roundtrip");
    report.params.insert("paths".into(), params.paths as f64);
    report.params.insert("grid".into(), params.grid as f64);
    report.params.insert("seed".into(), params.seed as f64);
    let seed = params.seed;
    let grid = params.grid;

    // Continuous panel: density from a scaled Brownian exponential.
    let cont_paths = params.paths.min(200);
    let worst_cont = batch::fold_indexed(
        cont_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_continuous(0.5, 1.0, grid, RngStream::new(seed, i));
            let x = s.component("X");
            let z = s.component("Z");
            let xhat = lenglart_transform_null_comp(x, z, DEFAULT_FLOOR).unwrap();
            let back = inverse_transform(&xhat, z, DEFAULT_FLOOR).unwrap();
            acc.max(back.sup_distance(x))
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "roundtrip-continuous",
        worst_cont,
        tol::tol_c(tol::C_ROUND_TRIP, grid),
        format!("inverse(transform(W)) vs W over {cont_paths} continuous paths"),
    ));

    // Pure-jump panel with a strictly positive density.
    let jump_paths = params.paths.min(500);
    let worst_jump = batch::fold_indexed(
        jump_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_sec5_1(0.2, 32, RngStream::new(seed, STREAM_BLOCK + i)).unwrap();
            let x = s.component("X");
            let z = s.component("Z");
            let xhat = lenglart_transform_null_comp(x, z, DEFAULT_FLOOR).unwrap();
            let back = inverse_transform(&xhat, z, DEFAULT_FLOOR).unwrap();
            acc.max(back.sup_distance(x))
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "roundtrip-pure-jump",
        worst_jump,
        tol::PURE_JUMP_TOL,
        format!("exact round trip over {jump_paths} single-jump paths"),
    ));

    // Unit density: both directions are the identity.
    let s = build_continuous(0.5, 1.0, grid.min(256), RngStream::new(seed, 0));
    let x = s.component("X");
    let ones = CadlagPath::constant(x.times.clone(), 1.0);
    let fwd = lenglart_transform_null_comp(x, &ones, DEFAULT_FLOOR).unwrap();
    let back = inverse_transform(&fwd, &ones, DEFAULT_FLOOR).unwrap();
    report.checks.push(CheckResult::bounded(
        "unit-density-identity",
        fwd.sup_distance(x).max(back.sup_distance(x)),
        0.0,
        "a unit density changes nothing, to machine precision",
    ));

    report.runtime_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

// ---------------------------------------------------------------------------
// identities: reciprocal, commutation, agreement.
// ---------------------------------------------------------------------------

fn random_step_integrand<R: Rng>(grid: &[f64], horizon: f64, rng: &mut R) -> IntegrandPath {
    let pieces = 4 + (rng.random::<u32>() % 5) as usize;
    let mut breaks: Vec<f64> = (0..pieces - 1)
        .map(|_| rng.random::<f64>() * horizon)
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let levels: Vec<f64> = (0..=breaks.len())
        .map(|_| 2.0 * rng.random::<f64>() - 1.0)
        .collect();
    IntegrandPath::step(grid, &breaks, &levels)
}

/// Residual of the integral/transform commutation on one panel:
/// `sup |transform(H.M) - H.transform(M)|`.
fn commutation_residual(h: &IntegrandPath, m: &CadlagPath, z: &CadlagPath) -> f64 {
    let hm = stochastic_integral(h, m);
    let lhs = lenglart_transform_null_comp(&hm, z, DEFAULT_FLOOR).unwrap();
    let mhat = lenglart_transform_null_comp(m, z, DEFAULT_FLOOR).unwrap();
    let rhs = stochastic_integral(h, &mhat);
    lhs.sup_distance(&rhs)
}

pub fn identities_suite(params: SuiteParams) -> Result<SuiteReport, ModelError> {
    let started = Instant::now();
    let mut report = SuiteReport::new("identities");
    report.params.insert("paths".into(), params.paths as f64);
    report.params.insert("grid".into(), params.grid as f64);
    report.params.insert("seed".into(), params.seed as f64);
    let seed = params.seed;
    let grid = params.grid;

    // Reciprocal identity, pure-jump exact case: piecewise-constant
    // strictly positive densities.
    let step_paths = params.paths.min(200);
    let worst_step = batch::fold_indexed(
        step_paths,
        || 0.0f64,
        |acc, i| {
            let z = simulate_step_density(1.0, 8, RngStream::new(seed, i));
            acc.max(ito_reciprocal_check(&z, DEFAULT_FLOOR).unwrap())
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "ito-reciprocal-pure-jump",
        worst_step,
        tol::PURE_JUMP_TOL,
        format!("reciprocal identity on {step_paths} piecewise-constant densities"),
    ));

    // Reciprocal identity on the single-jump density: its deterministic
    // flow between events carries a first-order grid error.
    let fv_paths = params.paths.min(200);
    let worst_fv = batch::fold_indexed(
        fv_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_sec5_1(0.2, grid, RngStream::new(seed, STREAM_BLOCK + i)).unwrap();
            acc.max(ito_reciprocal_check(s.component("Z"), DEFAULT_FLOOR).unwrap())
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "ito-reciprocal-single-jump",
        worst_fv,
        tol::tol_c(tol::C_ITO_FV_FLOW, grid),
        format!("reciprocal identity on {fv_paths} single-jump densities"),
    ));

    // Reciprocal identity on a continuous density, relative to its scale.
    let cont_paths = params.paths.min(100);
    let worst_cont = batch::fold_indexed(
        cont_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_continuous(0.5, 1.0, grid, RngStream::new(seed, 2 * STREAM_BLOCK + i));
            let z = s.component("Z");
            let scale = z.values.iter().fold(1.0f64, |m, &v| m.max(1.0 / v));
            acc.max(ito_reciprocal_check(z, DEFAULT_FLOOR).unwrap() / scale)
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "ito-reciprocal-continuous",
        worst_cont,
        tol::tol_c(tol::C_ITO_RECIPROCAL, grid),
        format!("reciprocal identity on {cont_paths} continuous densities, relative"),
    ));

    // Commutation of predictable integration with the transform, 20
    // random step integrands on each of the three scenario families, all
    // at one effective grid so the budget matches the runs.
    let integrands_per_model = 20u64;
    let paths_per_integrand = 5u64;
    let n_comm = grid.min(512);
    let mut worst_commutation = 0.0f64;
    for (model_idx, model) in ["continuous", "sec5-1", "usual-orth"].iter().enumerate() {
        let w = batch::fold_indexed(
            integrands_per_model * paths_per_integrand,
            || 0.0f64,
            |acc, j| {
                let stream =
                    RngStream::new(seed, (10 + model_idx as u64) * STREAM_BLOCK + j);
                let s = match *model {
                    "continuous" => build_continuous(0.5, 1.0, n_comm, stream),
                    "sec5-1" => build_sec5_1(0.2, n_comm, stream).unwrap(),
                    _ => build_usual_orth(1.0, n_comm, stream),
                };
                let m = s.component("X");
                let z = s.component("Z");
                let mut hrng = RngStream::new(seed ^ 0xA5A5, j / paths_per_integrand).rng();
                let h = random_step_integrand(&m.times, s.horizon, &mut hrng);
                acc.max(commutation_residual(&h, m, z))
            },
            f64::max,
        );
        worst_commutation = worst_commutation.max(w);
    }
    report.checks.push(CheckResult::bounded(
        "integral-transform-commutation",
        worst_commutation,
        tol::tol_c(tol::C_COMMUTATION, n_comm),
        format!(
            "transform(H.M) vs H.transform(M), 20 random step integrands x 3 scenario \
             families at {n_comm} grid steps"
        ),
    ));

    // Round trips (the focused preset has larger batches).
    let rt = roundtrip_suite(SuiteParams { paths: params.paths.min(100), ..params })?;
    report.checks.extend(rt.checks);

    // Classical and general transforms agree on the continuous scenario.
    let agree_paths = params.paths.min(200);
    let worst_agree = batch::fold_indexed(
        agree_paths,
        || 0.0f64,
        |acc, i| {
            let s = build_continuous(0.5, 1.0, grid, RngStream::new(seed, 3 * STREAM_BLOCK + i));
            let x = s.component("X");
            let z = s.component("Z");
            let pcov = &s.aux["pcov_X_Z"];
            let classical = girsanov_classical(
                x,
                z,
                pcov,
                BracketVariation::LocallyIntegrable,
                DEFAULT_FLOOR,
            )
            .unwrap();
            let general = lenglart_transform_null_comp(x, z, DEFAULT_FLOOR).unwrap();
            acc.max(classical.sup_distance(&general))
        },
        f64::max,
    );
    report.checks.push(CheckResult::bounded(
        "classical-general-agreement",
        worst_agree,
        tol::tol_c(tol::C_GIRSANOV_AGREEMENT, grid),
        format!("both correction forms over {agree_paths} continuous paths"),
    ));

    // The classical transform removes the drift exactly on this scenario:
    // weighted drift test on X' = W - theta t.
    let theta = 0.5;
    let drift_grid = 16usize;
    let cfg = DriftTestConfig {
        checkpoints: (1..=4).map(|k| k as f64 / 4.0).collect(),
        functionals: default_functionals(true),
        z_max: 4.0,
        batch: params.paths.max(20_000).min(100_000),
        estimator: EstimatorMode::Mean,
    };
    let build = move |i: u64| {
        build_continuous(theta, 1.0, drift_grid, RngStream::new(seed, 4 * STREAM_BLOCK + i))
    };
    let drift = drift_test_on(
        "classical-q-drift",
        &build,
        move |s| {
            let x = s.component("X");
            let z = s.component("Z");
            girsanov_classical(
                x,
                z,
                &s.aux["pcov_X_Z"],
                BracketVariation::LocallyIntegrable,
                DEFAULT_FLOOR,
            )
            .unwrap()
        },
        &MeasureKind::QWeighted { z_component: "Z".into() },
        &cfg,
    )
    .expect("drift statistics");
    report.checks.push(CheckResult::flag(
        "classical-q-drift",
        drift.pass,
        drift.max_abs_z(),
        "the classically corrected component is drift-free under the weighted measure",
    ));
    report.drift_reports.push(drift);

    report.runtime_ms = started.elapsed().as_millis() as u64;
    Ok(report)
}

// ---------------------------------------------------------------------------
// dimension-finite: equivalence and dimension monotonicity.
// ---------------------------------------------------------------------------

/// Martingale closed by a terminal column under possibly degenerate
/// weights (dead cells get value zero; they carry no mass).
fn martingale_from_terminal(
    space: &finite::FiniteSpace,
    weights: &[Q],
    terminal: &[Q],
) -> DiscreteProcess {
    let stages = space.stage_count();
    let atoms = space.atom_count();
    let mut rows = vec![vec![Q::zero(); stages]; atoms];
    for a in 0..atoms {
        rows[a][stages - 1] = terminal[a].clone();
    }
    for j in (0..stages - 1).rev() {
        let col: Vec<Q> = (0..atoms).map(|a| rows[a][j + 1].clone()).collect();
        for cell in &space.partitions[j] {
            let mass: Q = cell.iter().map(|&a| weights[a].clone()).sum();
            if mass.is_zero() {
                continue;
            }
            let ev: Q = cell.iter().map(|&a| &weights[a] * &col[a]).sum::<Q>() / mass;
            for &a in cell {
                rows[a][j] = ev.clone();
            }
        }
    }
    DiscreteProcess::from_rows(rows)
}

pub fn dimension_finite_suite(params: SuiteParams) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("dimension-finite");
    report.params.insert("p".into(), params.p);

    let p_rat = BigRational::from_float(params.p).expect("p must be finite");
    let tc = two_coin_space(p_rat);
    let space = &tc.space;
    let w_p = space.weights();

    // Martingale-transfer equivalence: X martingale under the reweighted
    // measure iff Z X martingale under the base measure, over randomized
    // densities and adapted processes plus constructed positives.
    let mut counterexamples = 0u64;
    let mut cases = 0u64;
    for salt in 0..50u64 {
        let z = finite::random_density(space, salt);
        let w_q = space.reweight(&z.stage_column(space.stage_count() - 1));
        let x = finite::random_adapted_process(space, salt.wrapping_add(1_000));
        let zx = DiscreteProcess::from_rows(
            (0..space.atom_count())
                .map(|a| {
                    (0..space.stage_count())
                        .map(|j| &z.values[a][j] * &x.values[a][j])
                        .collect()
                })
                .collect(),
        );
        let (q_mart, _) = martingale_check_exact(&x, space, &w_q);
        let (p_mart, _) = martingale_check_exact(&zx, space, &w_p);
        cases += 1;
        if q_mart != p_mart {
            counterexamples += 1;
        }
        // Constructed positive case: a genuine reweighted-measure
        // martingale must transfer to a base-measure one.
        let terminal: Vec<Q> = (0..space.atom_count())
            .map(|a| finite::q((salt as i64 % 7) + a as i64, 3))
            .collect();
        let n = martingale_from_terminal(space, &w_q, &terminal);
        let zn = DiscreteProcess::from_rows(
            (0..space.atom_count())
                .map(|a| {
                    (0..space.stage_count())
                        .map(|j| &z.values[a][j] * &n.values[a][j])
                        .collect()
                })
                .collect(),
        );
        let (q_mart, _) = martingale_check_exact(&n, space, &w_q);
        let (p_mart, _) = martingale_check_exact(&zn, space, &w_p);
        cases += 1;
        if !(q_mart && p_mart) {
            counterexamples += 1;
        }
    }
    report.checks.push(CheckResult::flag(
        "martingale-transfer-equivalence",
        counterexamples == 0,
        counterexamples as f64,
        format!("{cases} randomized exact equivalence cases, zero counterexamples required"),
    ));

    // Dimension checks on the four-atom space.
    let d_pair = dimension_check(space, &[&tc.x, &tc.y], &w_p);
    let d_full = dimension_check(space, &[&tc.x, &tc.y, &tc.u], &w_p);
    report.checks.push(CheckResult::flag(
        "dimension-pair-base",
        d_pair == 2,
        d_pair as f64,
        "the strongly orthogonal pair generates a two-dimensional stable family",
    ));
    report.checks.push(CheckResult::flag(
        "dimension-full-base",
        d_full == 3,
        d_full as f64,
        "the completed basis spans the full martingale space (dimension 3)",
    ));

    let z = &tc.x;
    let w_q = space.reweight(&z.stage_column(2));
    let xhat = lenglart_discrete(&tc.x, z, space).unwrap();
    let yhat = lenglart_discrete(&tc.y, z, space).unwrap();
    let uhat = lenglart_discrete(&tc.u, z, space).unwrap();
    let d_q = dimension_check(space, &[&xhat, &yhat, &uhat], &w_q);
    report.checks.push(CheckResult::flag(
        "dimension-transformed",
        d_q == 2 && d_q <= d_full,
        d_q as f64,
        "with the degenerate atom removed the transformed basis spans dimension 2 <= 3",
    ));

    // Monotonicity under 20 randomized reweightings.
    let mut violations = 0u64;
    for salt in 100..120u64 {
        let zr = finite::random_density(space, salt);
        let w_qr = space.reweight(&zr.stage_column(2));
        let xh = lenglart_discrete(&tc.x, &zr, space).unwrap();
        let yh = lenglart_discrete(&tc.y, &zr, space).unwrap();
        let uh = lenglart_discrete(&tc.u, &zr, space).unwrap();
        let d_qr = dimension_check(space, &[&xh, &yh, &uh], &w_qr);
        if d_qr > d_full {
            violations += 1;
        }
    }
    report.checks.push(CheckResult::flag(
        "dimension-monotone-under-reweighting",
        violations == 0,
        violations as f64,
        "20 randomized reweightings: transformed dimension never exceeds the base dimension",
    ));

    // Equivalent reweightings preserve the dimension on the binary-walk
    // space (strictly positive densities).
    let (walk_space, walk) = finite::binary_walk_space();
    let d_walk = dimension_check(&walk_space, &[&walk], &walk_space.weights());
    let mut equiv_ok = true;
    let mut found = 0;
    let mut salt = 0u64;
    while found < 10 && salt < 200 {
        let zr = finite::random_density(&walk_space, salt);
        salt += 1;
        let terminal = zr.stage_column(walk_space.stage_count() - 1);
        if terminal.iter().any(|v| v.is_zero()) {
            continue;
        }
        found += 1;
        let w_qr = walk_space.reweight(&terminal);
        let wh = lenglart_discrete(&walk, &zr, &walk_space).unwrap();
        if dimension_check(&walk_space, &[&wh], &w_qr) != d_walk {
            equiv_ok = false;
        }
    }
    report.checks.push(CheckResult::flag(
        "dimension-invariant-under-equivalent-reweighting",
        equiv_ok && d_walk == 1 && found == 10,
        d_walk as f64,
        "strictly positive reweightings preserve the walk driver's dimension 1",
    ));

    report.runtime_ms = started.elapsed().as_millis() as u64;
    report
}

// ---------------------------------------------------------------------------
// Tester calibration (size and power of the drift test).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize)]
pub struct CalibrationReport {
    pub martingale_pass_count: u32,
    pub drift_control_fail_count: u32,
    pub suites: u32,
}

/// Run the drift tester over many independent seed suites: a true
/// martingale (Brownian motion) and a drifted negative control.
pub fn calibration_run(suites: u32, batch: u64) -> CalibrationReport {
    let mut martingale_pass_count = 0;
    let mut drift_control_fail_count = 0;
    for suite in 0..suites {
        let seed = 40_000 + suite as u64;
        let cfg = DriftTestConfig {
            checkpoints: (1..=4).map(|k| k as f64 / 4.0).collect(),
            functionals: default_functionals(false),
            z_max: 4.0,
            batch,
            estimator: EstimatorMode::Mean,
        };
        let build = move |i: u64| brownian_scenario(seed, i);
        let honest = drift_test_on(
            "calibration-martingale",
            &build,
            |s| s.component("W").clone(),
            &MeasureKind::P,
            &cfg,
        )
        .expect("drift statistics");
        if honest.pass {
            martingale_pass_count += 1;
        }
        let drifted = drift_test_on(
            "calibration-drift-control",
            &build,
            |s| {
                let w = s.component("W");
                CadlagPath {
                    times: w.times.clone(),
                    values: w
                        .times
                        .iter()
                        .zip(&w.values)
                        .map(|(t, v)| v + 0.5 * t)
                        .collect(),
                    left_limits: w
                        .times
                        .iter()
                        .zip(&w.left_limits)
                        .map(|(t, v)| v + 0.5 * t)
                        .collect(),
                    jump_flags: w.jump_flags.clone(),
                    diffusive: true,
                }
            },
            &MeasureKind::P,
            &cfg,
        )
        .expect("drift statistics");
        if !drifted.pass {
            drift_control_fail_count += 1;
        }
    }
    CalibrationReport { martingale_pass_count, drift_control_fail_count, suites }
}

fn brownian_scenario(seed: u64, i: u64) -> Scenario {
    let w = crate::models::simulate_brownian(1.0, 4, RngStream::new(seed, i));
    let panel = crate::path::align(&[("W", &w)]);
    Scenario {
        panel,
        horizon: 1.0,
        meta: crate::models::ScenarioMeta {
            model: "brownian".into(),
            params: BTreeMap::new(),
            seed,
            stream_id: i,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: crate::measure::Accessibility::Infinite,
        },
        stopping_times: BTreeMap::new(),
        integrands: BTreeMap::new(),
        exact: BTreeMap::new(),
        aux: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(preset: &str) -> SuiteParams {
        let mut p = default_params(preset);
        p.paths = p.paths.min(4_000);
        p.grid = p.grid.min(512);
        p
    }

    #[test]
    fn strong_orth_suite_passes_quickly() {
        let report = strong_orth_suite(default_params("strong-orth"));
        for c in &report.checks {
            assert!(c.passed, "{}: value {} detail {}", c.id, c.value, c.detail);
        }
        assert!(report.runtime_ms < 1_000, "runtime {} ms", report.runtime_ms);
    }

    #[test]
    fn sec5_1_suite_small_batch_passes() {
        let mut p = small("sec5-1");
        p.paths = 60_000;
        let report = sec5_1_suite(p).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: value {} vs {} ({})", c.id, c.value, c.threshold, c.detail);
        }
    }

    #[test]
    fn sec5_1_refuses_bad_horizon() {
        let mut p = default_params("sec5-1");
        p.horizon = 0.4;
        assert!(sec5_1_suite(p).is_err());
    }

    #[test]
    fn usual_orth_suite_small_batch() {
        let mut p = small("usual-orth");
        p.paths = 20_000;
        p.grid = 250;
        let report = usual_orth_suite(p);
        for c in &report.checks {
            assert!(c.passed, "{}: value {} vs {} ({})", c.id, c.value, c.threshold, c.detail);
        }
    }

    #[test]
    fn roundtrip_suite_passes() {
        let report = roundtrip_suite(small("roundtrip")).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: value {} vs {}", c.id, c.value, c.threshold);
        }
    }

    #[test]
    fn identities_suite_passes() {
        let report = identities_suite(small("identities")).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: value {} vs {} ({})", c.id, c.value, c.threshold, c.detail);
        }
    }

    #[test]
    fn dimension_finite_suite_passes() {
        let report = dimension_finite_suite(default_params("dimension-finite"));
        for c in &report.checks {
            assert!(c.passed, "{}: value {} ({})", c.id, c.value, c.detail);
        }
        assert!(report.runtime_ms < 10_000);
    }

    #[test]
    fn calibration_small_run() {
        let cal = calibration_run(10, 20_000);
        assert_eq!(cal.drift_control_fail_count, 10);
        assert!(cal.martingale_pass_count >= 9);
    }
}
