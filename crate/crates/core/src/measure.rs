//! Density processes and measure changes: detection of the density's
//! zero-hit times, compensators of the jump at the zero-hit, the general
//! (Lenglart) and classical Girsanov transforms, the inverse transform,
//! and likelihood-ratio expectations.
//!
//! Two division conventions coexist and are deliberately kept apart:
//! the general transform integrates the *running* (right) value of `1/Z`
//! against the bracket, while the classical transform uses the left limit
//! `1/Z_-` against the predictable covariation. They differ whenever the
//! density jumps at the same instant as the integrator and must never be
//! merged into one code path.

use std::sync::Arc;

use thiserror::Error;

use crate::calculus::{
    quadratic_covariation, reciprocal, running_value_integral, stochastic_integral,
    CalculusError, IntegrandPath,
};
use crate::mc::{estimate, EstimatorMode};
use crate::models::Scenario;
use crate::path::{CadlagPath, StoppingKind, StoppingTimeObs};
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("density at or below floor {floor:e} on an evaluated segment at t={time}")]
    ZeroDensity { time: f64, floor: f64 },
    #[error("compensator mode {mode} incompatible with {accessibility:?} zero-hit")]
    ModeMismatch { mode: &'static str, accessibility: Accessibility },
    #[error("classical transform inapplicable: the bracket is not locally integrable")]
    NotApplicable,
}

impl From<CalculusError> for MeasureError {
    fn from(e: CalculusError) -> Self {
        match e {
            CalculusError::ZeroDensity { time, floor } => MeasureError::ZeroDensity { time, floor },
        }
    }
}

/// Nature of the density's jump-to-zero time. Declared by the model:
/// accessibility is a filtration property invisible to finitely many paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Accessibility {
    /// Announced by earlier times (e.g. a fixed date).
    Accessible,
    /// Never announced (e.g. an exponential jump).
    TotallyInaccessible,
    /// The zero-hit jump never happens.
    Infinite,
}

/// The density's first zero-touching time and its restriction to paths
/// where the density jumps to zero from a positive left limit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoppingTimeRecord {
    pub zeta: StoppingTimeObs,
    pub eta: StoppingTimeObs,
    /// Whether the path lies in the set where the zero is reached by a
    /// jump from a positive left limit.
    pub lambda_flag: bool,
    pub accessibility: Accessibility,
}

impl StoppingTimeRecord {
    /// Record for a jump-style stopping time that is not a density
    /// zero-hit (used to reuse the compensator machinery for other jumps).
    pub fn at_jump(time: StoppingTimeObs, accessibility: Accessibility) -> Self {
        Self { zeta: time, eta: time, lambda_flag: time.is_finite(), accessibility }
    }
}

/// Locate the density's first zero touch on the grid: the first entry where
/// either the stored left limit or the value is exactly zero (the shipped
/// models produce exact zeros at event times or at the horizon). The
/// zero-hit is a jump event only when the left limit there is positive.
pub fn detect_zeta_eta(z: &CadlagPath, declared: Accessibility) -> StoppingTimeRecord {
    for k in 0..z.len() {
        if z.left_limits[k] == 0.0 || z.values[k] == 0.0 {
            let t = z.times[k];
            let lambda = z.left_limits[k] > 0.0;
            let kind = if lambda { StoppingKind::Jump } else { StoppingKind::Hit };
            let zeta = StoppingTimeObs { value: t, kind };
            let (eta, accessibility) = if lambda {
                (zeta, declared)
            } else {
                (StoppingTimeObs::never(), Accessibility::Infinite)
            };
            return StoppingTimeRecord { zeta, eta, lambda_flag: lambda, accessibility };
        }
    }
    StoppingTimeRecord {
        zeta: StoppingTimeObs::never(),
        eta: StoppingTimeObs::never(),
        lambda_flag: false,
        accessibility: Accessibility::Infinite,
    }
}

/// Declared justification for a null compensator, mirroring the structural
/// conditions under which the zero-hit jump term vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullJustification {
    /// The zero-hit jump time is infinite on every path.
    EtaInfinite,
    /// The measures are locally equivalent.
    LocallyEquivalent,
    /// The component is quasi-left-continuous.
    QuasiLeftContinuous,
    /// The component does not jump on the density's zero set.
    NoJumpAtZeroSet,
}

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type GridFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Declaration of the jump-at-zero-hit structure.
pub enum CompensatorSpec {
    /// No compensator needed; the tag records why.
    Null(NullJustification),
    /// Totally inaccessible zero-hit with a time intensity; the jump size
    /// is evaluated from pre-jump state at grid entries.
    Intensity { rate: TimeFn, jump_size: GridFn },
    /// Finite-space scenario: the exact discrete compensator, computed by
    /// the finite oracle and carried here as a path.
    FiniteExact(CadlagPath),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CompensatorModeTag {
    Null,
    Intensity,
    FiniteExact,
}

/// A dual-predictable-projection path together with the mode that produced
/// it. Intensity-mode paths are continuous; finite-exact paths jump only at
/// the discrete predictable times of their filtration.
#[derive(Debug, Clone)]
pub struct CompensatorPath {
    pub path: CadlagPath,
    pub mode: CompensatorModeTag,
}

/// Build the compensator of `jump_size 1_{[eta, inf)}` on the given grid.
///
/// Intensity mode integrates `jump_size(s) * rate(s)` by the trapezoid rule
/// up to `t /\ eta` (the integrand is smooth between events); it requires a
/// totally inaccessible time. Finite-exact mode requires an accessible time.
pub fn compensator(
    spec: &CompensatorSpec,
    record: &StoppingTimeRecord,
    grid: &[f64],
) -> Result<CompensatorPath, MeasureError> {
    match spec {
        CompensatorSpec::Null(_) => Ok(CompensatorPath {
            path: CadlagPath::constant(grid.to_vec(), 0.0),
            mode: CompensatorModeTag::Null,
        }),
        CompensatorSpec::Intensity { rate, jump_size } => {
            if record.eta.is_finite() && record.accessibility != Accessibility::TotallyInaccessible
            {
                return Err(MeasureError::ModeMismatch {
                    mode: "intensity",
                    accessibility: record.accessibility,
                });
            }
            let eta = record.eta.value;
            let n = grid.len();
            let mut values = Vec::with_capacity(n);
            values.push(0.0);
            let f = |k: usize, t: f64| jump_size(k, t) * rate(t);
            for k in 1..n {
                let (a, b) = (grid[k - 1], grid[k]);
                let inc = if a >= eta {
                    0.0
                } else {
                    let hi = b.min(eta);
                    0.5 * (f(k - 1, a) + f(k, hi)) * (hi - a)
                };
                values.push(values[k - 1] + inc);
            }
            Ok(CompensatorPath {
                path: CadlagPath {
                    times: grid.to_vec(),
                    left_limits: values.clone(),
                    values,
                    jump_flags: vec![false; n],
                    diffusive: false,
                },
                mode: CompensatorModeTag::Intensity,
            })
        }
        CompensatorSpec::FiniteExact(path) => {
            if record.eta.is_finite() && record.accessibility != Accessibility::Accessible {
                return Err(MeasureError::ModeMismatch {
                    mode: "finite_exact",
                    accessibility: record.accessibility,
                });
            }
            Ok(CompensatorPath { path: path.clone(), mode: CompensatorModeTag::FiniteExact })
        }
    }
}

/// The general measure-change transform
/// `Xhat = X - (1/Z) . [X, Z] + compensator`,
/// with `1/Z` evaluated at the running (right) value: jump contributions
/// divide by the post-jump density, flow contributions by the density at
/// the previous grid point.
///
/// Paths whose density hits the floor on an evaluated (nonzero-increment)
/// segment raise `ZeroDensity`; zero bracket increments never divide, so a
/// density that dies while the bracket is already flat stays transformable.
pub fn lenglart_transform(
    x: &CadlagPath,
    z: &CadlagPath,
    comp: &CompensatorPath,
    floor: f64,
) -> Result<CadlagPath, MeasureError> {
    assert_eq!(x.times, z.times, "align the panel first");
    assert_eq!(x.times, comp.path.times, "compensator grid must match");
    let bracket = quadratic_covariation(x, z);
    let n = x.len();
    let mut corr_vals = Vec::with_capacity(n);
    let mut corr_left = Vec::with_capacity(n);
    corr_vals.push(0.0);
    corr_left.push(0.0);
    let mut acc = 0.0f64;
    for k in 1..n {
        let flow = bracket.flow(k);
        let flow_contrib = if flow == 0.0 {
            0.0
        } else {
            if z.values[k - 1] <= floor {
                return Err(MeasureError::ZeroDensity { time: z.times[k - 1], floor });
            }
            flow / z.values[k - 1]
        };
        let jump = bracket.jump(k);
        let jump_contrib = if jump == 0.0 {
            0.0
        } else {
            if z.values[k] <= floor {
                return Err(MeasureError::ZeroDensity { time: z.times[k], floor });
            }
            jump / z.values[k]
        };
        let pre = acc + flow_contrib;
        acc = pre + jump_contrib;
        corr_left.push(pre);
        corr_vals.push(acc);
    }
    Ok(CadlagPath {
        times: x.times.clone(),
        values: (0..n)
            .map(|k| x.values[k] - corr_vals[k] + comp.path.values[k])
            .collect(),
        left_limits: (0..n)
            .map(|k| x.left_limits[k] - corr_left[k] + comp.path.left_limits[k])
            .collect(),
        jump_flags: x.jump_flags.clone(),
        diffusive: x.diffusive,
    })
}

/// Convenience: the transform with a null compensator (zero-hit jump never
/// contributes), as in every locally equivalent scenario.
pub fn lenglart_transform_null_comp(
    x: &CadlagPath,
    z: &CadlagPath,
    floor: f64,
) -> Result<CadlagPath, MeasureError> {
    let comp = CompensatorPath {
        path: CadlagPath::constant(x.times.clone(), 0.0),
        mode: CompensatorModeTag::Null,
    };
    lenglart_transform(x, z, &comp, floor)
}

/// Whether `[X, Z]` has locally integrable variation, as declared by the
/// scenario. The classical transform refuses to run without it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketVariation {
    LocallyIntegrable,
    NotLocallyIntegrable,
}

/// The classical Girsanov transform `X' = X - (1/Z_-) . <X, Z>`, with the
/// caller-supplied predictable covariation and the *left-limit* density
/// evaluation.
pub fn girsanov_classical(
    x: &CadlagPath,
    z: &CadlagPath,
    predictable_cov: &CadlagPath,
    variation: BracketVariation,
    floor: f64,
) -> Result<CadlagPath, MeasureError> {
    if variation == BracketVariation::NotLocallyIntegrable {
        return Err(MeasureError::NotApplicable);
    }
    assert_eq!(x.times, z.times);
    assert_eq!(x.times, predictable_cov.times);
    for k in 0..z.len() {
        if z.values[k] <= floor || z.left_limits[k] <= floor {
            return Err(MeasureError::ZeroDensity { time: z.times[k], floor });
        }
    }
    let inv_left = IntegrandPath {
        times: z.times.clone(),
        at_event: z.left_limits.iter().map(|v| 1.0 / v).collect(),
        on_cell: z.values.iter().map(|v| 1.0 / v).collect(),
        closed_form: None,
    };
    let corr = stochastic_integral(&inv_left, predictable_cov);
    let n = x.len();
    Ok(CadlagPath {
        times: x.times.clone(),
        values: (0..n).map(|k| x.values[k] - corr.values[k]).collect(),
        left_limits: (0..n).map(|k| x.left_limits[k] - corr.left_limits[k]).collect(),
        jump_flags: x.jump_flags.clone(),
        diffusive: x.diffusive,
    })
}

/// Inverse of the general transform in the locally equivalent regime:
/// `X = Xhat - Z . [Xhat, 1/Z]`, the transform under the new measure with
/// density `1/Z`, again with running-value evaluation.
pub fn inverse_transform(
    xhat: &CadlagPath,
    z: &CadlagPath,
    floor: f64,
) -> Result<CadlagPath, MeasureError> {
    assert_eq!(xhat.times, z.times);
    let inv = reciprocal(z, floor)?;
    let bracket = quadratic_covariation(xhat, &inv);
    let corr = running_value_integral(|k| z.values[k], &bracket);
    let n = xhat.len();
    Ok(CadlagPath {
        times: xhat.times.clone(),
        values: (0..n).map(|k| xhat.values[k] - corr.values[k]).collect(),
        left_limits: (0..n)
            .map(|k| xhat.left_limits[k] - corr.left_limits[k])
            .collect(),
        jump_flags: xhat.jump_flags.clone(),
        diffusive: xhat.diffusive,
    })
}

/// Result of a weighted or direct expectation under the target measure.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct QExpectation {
    pub estimate: f64,
    pub std_error: f64,
    pub excluded_path_count: u64,
}

/// A lazily generated scenario batch: path `i` is built on demand from its
/// own stream, so batches of any size run in constant memory.
pub struct LazyBatch<'a> {
    pub size: u64,
    pub build: &'a (dyn Fn(u64) -> Scenario + Sync),
}

impl<'a> LazyBatch<'a> {
    pub fn collect_samples(&self, f: &(dyn Fn(&Scenario) -> f64 + Sync)) -> Vec<f64> {
        crate::batch::map_indexed(self.size, |i| f(&(self.build)(i)))
    }
}

/// Expectation under the target measure by likelihood-ratio weighting:
/// the average of `Z_t * f(path)` under the base measure. Dying paths
/// enter with their (zero) weight, so nothing is excluded.
pub fn q_expectation(
    batch: &LazyBatch,
    f: &(dyn Fn(&Scenario) -> f64 + Sync),
    t: f64,
    z_component: &str,
    mode: EstimatorMode,
) -> QExpectation {
    let samples = batch.collect_samples(&|s: &Scenario| {
        let w = s.component(z_component).value_at(t);
        if w == 0.0 {
            0.0
        } else {
            w * f(s)
        }
    });
    let (estimate, std_error) = estimate(mode, &samples).as_mean_and_se();
    QExpectation { estimate, std_error, excluded_path_count: 0 }
}

/// Direct evaluation on scenarios simulated under the target measure
/// itself (models with known target dynamics only). Paths rejected by the
/// validity predicate are excluded and counted.
pub fn q_expectation_direct(
    batch: &LazyBatch,
    f: &(dyn Fn(&Scenario) -> f64 + Sync),
    valid: &(dyn Fn(&Scenario) -> bool + Sync),
    mode: EstimatorMode,
) -> QExpectation {
    let raw = crate::batch::map_indexed(batch.size, |i| {
        let s = (batch.build)(i);
        if valid(&s) {
            Some(f(&s))
        } else {
            None
        }
    });
    let excluded = raw.iter().filter(|v| v.is_none()).count() as u64;
    let samples: Vec<f64> = raw.into_iter().flatten().collect();
    let (estimate, std_error) = estimate(mode, &samples).as_mean_and_se();
    QExpectation { estimate, std_error, excluded_path_count: excluded }
}

/// Default division floor re-exported where transforms are configured.
pub const DEFAULT_FLOOR: f64 = tol::DENSITY_FLOOR;
