//! Scenario generators: Brownian motion, Poisson processes, stochastic
//! exponentials, and the coupled (X, Z) scenarios the verification suite
//! runs on. Every generator is a deterministic function of its parameters
//! and an [`RngStream`], and models with closed-form solutions carry them
//! alongside the simulated paths for oracle comparison.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::calculus::IntegrandPath;
use crate::measure::Accessibility;
use crate::path::{
    merge_events, uniform_grid, CadlagPath, PathPanel, StoppingTimeObs,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("horizon {0} outside (0, 1/4]: the density 1 + X^T would go negative")]
    BadHorizon(f64),
}

/// Reproducible random source: identical `(seed, stream_id)` pairs yield
/// bit-identical paths. Batches parallelize over `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id.into());
        rng
    }
}

/// Exponential draw by inversion, so jump times are exact and never
/// grid-rounded.
pub fn exponential_inversion<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        let tau = -(1.0 - u).ln() / rate;
        if tau > 0.0 {
            return tau;
        }
    }
}

/// Scenario metadata: model identity, parameters, and the structural flags
/// the measure-change machinery needs (declared, not inferred).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScenarioMeta {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub stream_id: u64,
    /// Statistics on this model must use a robust estimator.
    pub heavy_tails: bool,
    /// Whether `[X, Z]` has locally integrable variation; the classical
    /// Girsanov transform refuses scenarios where it does not.
    pub brackets_locally_integrable: bool,
    /// Declared nature of the density's jump-to-zero time, if any.
    pub eta_accessibility: Accessibility,
}

/// A coupled family of simulated paths plus the per-path exact data the
/// oracles compare against.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub panel: PathPanel,
    pub horizon: f64,
    pub meta: ScenarioMeta,
    pub stopping_times: BTreeMap<String, StoppingTimeObs>,
    /// Closed-form integrands supplied by the model (e.g. the density's
    /// representation against the driver).
    pub integrands: BTreeMap<String, IntegrandPath>,
    /// Closed-form companion paths for simulated components.
    pub exact: BTreeMap<String, CadlagPath>,
    /// Auxiliary closed-form paths (e.g. predictable covariations).
    pub aux: BTreeMap<String, CadlagPath>,
}

impl Scenario {
    pub fn component(&self, name: &str) -> &CadlagPath {
        self.panel.expect(name)
    }
}

/// Brownian path on the uniform `n`-step grid over `[0, T]`: Gaussian
/// increments with variance equal to the step size.
pub fn simulate_brownian(horizon: f64, n: usize, stream: RngStream) -> CadlagPath {
    let mut rng = stream.rng();
    brownian_on_grid(&uniform_grid(horizon, n), &mut rng)
}

pub(crate) fn brownian_on_grid<R: Rng>(grid: &[f64], rng: &mut R) -> CadlagPath {
    let n = grid.len();
    let mut values = Vec::with_capacity(n);
    values.push(0.0);
    for k in 1..n {
        let dt = grid[k] - grid[k - 1];
        let z: f64 = rng.sample(StandardNormal);
        values.push(values[k - 1] + dt.sqrt() * z);
    }
    CadlagPath {
        times: grid.to_vec(),
        left_limits: values.clone(),
        values,
        jump_flags: vec![false; n],
        diffusive: true,
    }
}

/// Poisson paths on the minimal event grid `{0} + jump times + {T}`.
pub struct PoissonPaths {
    /// Counting process `N`.
    pub counting: CadlagPath,
    /// Compensated martingale `M = N - rate * t`.
    pub compensated: CadlagPath,
    /// First jump time, exact (may exceed the horizon).
    pub first_jump: StoppingTimeObs,
    /// All jump times within the horizon.
    pub jump_times: Vec<f64>,
}

/// Simulate a Poisson process with the given rate on `[0, T]`; jump times
/// are exponential spacings drawn by inversion.
pub fn simulate_poisson(rate: f64, horizon: f64, stream: RngStream) -> PoissonPaths {
    let mut rng = stream.rng();
    poisson_on_horizon(rate, horizon, &mut rng)
}

pub(crate) fn poisson_on_horizon<R: Rng>(
    rate: f64,
    horizon: f64,
    rng: &mut R,
) -> PoissonPaths {
    assert!(rate > 0.0 && horizon > 0.0);
    let mut jump_times = Vec::new();
    let mut t = exponential_inversion(rng, rate);
    let first = t;
    while t <= horizon {
        jump_times.push(t);
        t += exponential_inversion(rng, rate);
    }
    let grid = merge_events(&[0.0, horizon], &jump_times, horizon);
    let (counting, compensated) = poisson_paths_on_grid(&grid, &jump_times, rate);
    PoissonPaths {
        counting,
        compensated,
        first_jump: StoppingTimeObs::jump(first),
        jump_times,
    }
}

pub(crate) fn poisson_paths_on_grid(
    grid: &[f64],
    jump_times: &[f64],
    rate: f64,
) -> (CadlagPath, CadlagPath) {
    let n = grid.len();
    let mut count_vals = Vec::with_capacity(n);
    let mut count_left = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    let mut jumps_seen = 0usize;
    for &t in grid {
        let is_jump = jump_times.get(jumps_seen) == Some(&t);
        count_left.push(jumps_seen as f64);
        if is_jump {
            jumps_seen += 1;
        }
        count_vals.push(jumps_seen as f64);
        flags.push(is_jump);
    }
    // Time 0 is never a jump; fix the left limit convention there.
    count_left[0] = count_vals[0];
    let counting = CadlagPath {
        times: grid.to_vec(),
        values: count_vals.clone(),
        left_limits: count_left.clone(),
        jump_flags: flags.clone(),
        diffusive: false,
    };
    let compensated = CadlagPath {
        times: grid.to_vec(),
        values: grid
            .iter()
            .zip(&count_vals)
            .map(|(&t, &c)| c - rate * t)
            .collect(),
        left_limits: grid
            .iter()
            .zip(&count_left)
            .map(|(&t, &c)| c - rate * t)
            .collect(),
        jump_flags: flags,
        diffusive: false,
    };
    (counting, compensated)
}

/// Doleans-Dade stochastic exponential of a driver path: log-space Euler
/// step for the flow (with the quadratic correction only when the flow is
/// diffusive) and the exact factor `1 + jump` at jump events.
pub fn stochastic_exponential(driver: &CadlagPath) -> CadlagPath {
    let n = driver.len();
    let mut values = Vec::with_capacity(n);
    let mut left_limits = Vec::with_capacity(n);
    values.push(1.0);
    left_limits.push(1.0);
    for k in 1..n {
        let flow = driver.flow(k);
        let factor = if driver.diffusive {
            (flow - 0.5 * flow * flow).exp()
        } else {
            flow.exp()
        };
        let pre = values[k - 1] * factor;
        let jump = driver.jump(k);
        let post = if jump == 0.0 { pre } else { pre * (1.0 + jump) };
        left_limits.push(pre);
        values.push(post);
    }
    CadlagPath {
        times: driver.times.clone(),
        values,
        left_limits,
        jump_flags: driver.jump_flags.clone(),
        diffusive: driver.diffusive,
    }
}

/// Pointwise linear combination `a*X + b*Y` of two paths on one grid.
pub fn linear_combination(a: f64, x: &CadlagPath, b: f64, y: &CadlagPath) -> CadlagPath {
    assert_eq!(x.times, y.times);
    CadlagPath {
        times: x.times.clone(),
        values: x
            .values
            .iter()
            .zip(&y.values)
            .map(|(u, v)| a * u + b * v)
            .collect(),
        left_limits: x
            .left_limits
            .iter()
            .zip(&y.left_limits)
            .map(|(u, v)| a * u + b * v)
            .collect(),
        jump_flags: x
            .jump_flags
            .iter()
            .zip(&y.jump_flags)
            .map(|(p, q)| *p || *q)
            .collect(),
        diffusive: x.diffusive || y.diffusive,
    }
}

/// Pointwise product path `X * Y`.
pub fn product(x: &CadlagPath, y: &CadlagPath) -> CadlagPath {
    assert_eq!(x.times, y.times);
    CadlagPath {
        times: x.times.clone(),
        values: x.values.iter().zip(&y.values).map(|(u, v)| u * v).collect(),
        left_limits: x
            .left_limits
            .iter()
            .zip(&y.left_limits)
            .map(|(u, v)| u * v)
            .collect(),
        jump_flags: x
            .jump_flags
            .iter()
            .zip(&y.jump_flags)
            .map(|(p, q)| *p || *q)
            .collect(),
        diffusive: x.diffusive || y.diffusive,
    }
}

fn panel_from(parts: Vec<(&str, CadlagPath)>) -> PathPanel {
    let refs: Vec<(&str, &CadlagPath)> = parts.iter().map(|(n, p)| (*n, p)).collect();
    crate::path::align(&refs)
}

/// The single-jump scenario: `X = int 1/sqrt(u) dM^tau1`, density
/// `Z = 1 + X^T` with `T` in `(0, 1/4]` so `Z >= 0`. The bracket `[X, Z]`
/// fails to be locally integrable, so the classical Girsanov transform is
/// inapplicable while the general transform still produces a closed form.
///
/// The pure-jump part and the deterministic flow are written down at event
/// times from the closed forms, so the panel is exact at every grid time
/// regardless of `n`; the grid merges a uniform `n`-step base on `[0, T]`
/// with the exact jump time (kept even when it exceeds `T`, so the full
/// bracket of `X` is always on the panel).
pub fn build_sec5_1(
    horizon: f64,
    n: usize,
    stream: RngStream,
) -> Result<Scenario, ModelError> {
    if !(horizon > 0.0 && horizon <= 0.25) {
        return Err(ModelError::BadHorizon(horizon));
    }
    let mut rng = stream.rng();
    let tau1 = exponential_inversion(&mut rng, 1.0);
    let cap = horizon.max(tau1);
    let grid = merge_events(&uniform_grid(horizon, n), &[tau1], cap);

    let x_pre = |t: f64| -2.0 * t.sqrt();
    let x_post = 1.0 / tau1.sqrt() - 2.0 * tau1.sqrt();

    let nk = grid.len();
    let mut xv = Vec::with_capacity(nk);
    let mut xl = Vec::with_capacity(nk);
    let mut flags = Vec::with_capacity(nk);
    for &t in &grid {
        if t < tau1 {
            xv.push(x_pre(t));
            xl.push(x_pre(t));
            flags.push(false);
        } else if t == tau1 {
            xv.push(x_post);
            xl.push(x_pre(tau1));
            flags.push(true);
        } else {
            xv.push(x_post);
            xl.push(x_post);
            flags.push(false);
        }
    }
    let x = CadlagPath {
        times: grid.clone(),
        values: xv,
        left_limits: xl,
        jump_flags: flags,
        diffusive: false,
    };

    // Z = 1 + X stopped at T.
    let xt = x.stop(StoppingTimeObs::hit(horizon));
    let z = CadlagPath {
        times: grid.clone(),
        values: xt.values.iter().map(|v| 1.0 + v).collect(),
        left_limits: xt.left_limits.iter().map(|v| 1.0 + v).collect(),
        jump_flags: xt.jump_flags.clone(),
        diffusive: false,
    };

    let jump_in_grid = if tau1 <= cap { vec![tau1] } else { vec![] };
    let (_, m) = poisson_paths_on_grid(&grid, &jump_in_grid, 1.0);
    let m = m.stop(StoppingTimeObs::jump(tau1));

    let h = IntegrandPath::unit_until(&grid, horizon);

    let mut stopping_times = BTreeMap::new();
    stopping_times.insert("tau1".to_string(), StoppingTimeObs::jump(tau1));
    let mut integrands = BTreeMap::new();
    integrands.insert("H".to_string(), h);

    Ok(Scenario {
        panel: panel_from(vec![("X", x), ("Z", z), ("M", m)]),
        horizon,
        meta: ScenarioMeta {
            model: "sec5-1".to_string(),
            params: BTreeMap::from([("T".to_string(), horizon)]),
            seed: stream.seed,
            stream_id: stream.stream_id,
            heavy_tails: true,
            brackets_locally_integrable: false,
            eta_accessibility: Accessibility::Infinite,
        },
        stopping_times,
        integrands,
        exact: BTreeMap::new(),
        aux: BTreeMap::new(),
    })
}

/// The closed form of the transformed component in the single-jump
/// scenario, evaluated at `t` given the jump time and the density horizon.
pub fn sec5_1_transformed_closed_form(t: f64, tau1: f64, horizon: f64) -> f64 {
    let base = if tau1 <= t {
        1.0 / tau1.sqrt() - 2.0 * tau1.sqrt()
    } else {
        -2.0 * t.sqrt()
    };
    let correction = if tau1 <= t.min(horizon) {
        1.0 / (tau1.sqrt() * (1.0 + tau1.sqrt() - 2.0 * tau1))
    } else {
        0.0
    };
    base - correction
}

/// The jump-exponential pair: `X = E(W + M)`, `Y = E(W - M)` for a Brownian
/// motion `W` and an independent compensated unit-rate Poisson `M`, with
/// density `Z = X` stopped at the first Poisson jump. `X` and `Y` are
/// orthogonal in the usual sense under the base measure but not strongly
/// orthogonal, and the product of their transforms loses the martingale
/// property under the new measure.
pub fn build_usual_orth(horizon: f64, n: usize, stream: RngStream) -> Scenario {
    let mut rng = stream.rng();
    let poisson = poisson_on_horizon(1.0, horizon, &mut rng);
    let grid = merge_events(&uniform_grid(horizon, n), &poisson.jump_times, horizon);
    let w = brownian_on_grid(&grid, &mut rng);
    let (counting, m) = poisson_paths_on_grid(&grid, &poisson.jump_times, 1.0);
    let tau = poisson.first_jump;

    let driver_plus = linear_combination(1.0, &w, 1.0, &m);
    let driver_minus = linear_combination(1.0, &w, -1.0, &m);
    let x = stochastic_exponential(&driver_plus);
    let y = stochastic_exponential(&driver_minus);
    let z = x.stop(tau);

    // Closed forms: X = exp(W - 3t/2) 2^N and Y = exp(W + t/2) 1_{t < tau}.
    let x_exact = CadlagPath {
        times: grid.clone(),
        values: (0..grid.len())
            .map(|k| (w.values[k] - 1.5 * grid[k]).exp() * 2f64.powf(counting.values[k]))
            .collect(),
        left_limits: (0..grid.len())
            .map(|k| {
                (w.left_limits[k] - 1.5 * grid[k]).exp()
                    * 2f64.powf(counting.left_limits[k])
            })
            .collect(),
        jump_flags: counting.jump_flags.clone(),
        diffusive: true,
    };
    let y_exact = CadlagPath {
        times: grid.clone(),
        values: (0..grid.len())
            .map(|k| {
                if grid[k] < tau.value {
                    (w.values[k] + 0.5 * grid[k]).exp()
                } else {
                    0.0
                }
            })
            .collect(),
        left_limits: (0..grid.len())
            .map(|k| {
                if grid[k] <= tau.value {
                    (w.left_limits[k] + 0.5 * grid[k]).exp()
                } else {
                    0.0
                }
            })
            .collect(),
        jump_flags: counting.jump_flags.clone(),
        diffusive: true,
    };

    let mut stopping_times = BTreeMap::new();
    stopping_times.insert("tau".to_string(), tau);

    Scenario {
        panel: panel_from(vec![
            ("W", w),
            ("N", counting),
            ("M", m),
            ("X", x),
            ("Y", y),
            ("Z", z),
        ]),
        horizon,
        meta: ScenarioMeta {
            model: "usual-orth".to_string(),
            params: BTreeMap::from([("T".to_string(), horizon)]),
            seed: stream.seed,
            stream_id: stream.stream_id,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: Accessibility::Infinite,
        },
        stopping_times,
        integrands: BTreeMap::new(),
        exact: BTreeMap::from([("X".to_string(), x_exact), ("Y".to_string(), y_exact)]),
        aux: BTreeMap::new(),
    }
}

/// Continuous control scenario: `X = W`, density `Z = E(theta W)`. Both
/// Girsanov forms apply and must agree; the predictable covariation
/// `<X, Z> = theta int_0^t Z_u du` is supplied in closed form (left-rule
/// quadrature on the grid).
pub fn build_continuous(theta: f64, horizon: f64, n: usize, stream: RngStream) -> Scenario {
    let mut rng = stream.rng();
    let grid = uniform_grid(horizon, n);
    let w = brownian_on_grid(&grid, &mut rng);
    let driver = CadlagPath {
        times: grid.clone(),
        values: w.values.iter().map(|v| theta * v).collect(),
        left_limits: w.left_limits.iter().map(|v| theta * v).collect(),
        jump_flags: w.jump_flags.clone(),
        diffusive: true,
    };
    let z = stochastic_exponential(&driver);
    let z_exact = CadlagPath {
        times: grid.clone(),
        values: (0..grid.len())
            .map(|k| (theta * w.values[k] - 0.5 * theta * theta * grid[k]).exp())
            .collect(),
        left_limits: (0..grid.len())
            .map(|k| (theta * w.values[k] - 0.5 * theta * theta * grid[k]).exp())
            .collect(),
        jump_flags: vec![false; grid.len()],
        diffusive: true,
    };
    // <X, Z>_t = theta int_0^t Z_u du, left rule on the grid.
    let mut pcov_vals = Vec::with_capacity(grid.len());
    pcov_vals.push(0.0);
    for k in 1..grid.len() {
        let dt = grid[k] - grid[k - 1];
        pcov_vals.push(pcov_vals[k - 1] + theta * z.values[k - 1] * dt);
    }
    let pcov = CadlagPath {
        times: grid.clone(),
        left_limits: pcov_vals.clone(),
        values: pcov_vals,
        jump_flags: vec![false; grid.len()],
        diffusive: false,
    };

    Scenario {
        panel: panel_from(vec![("X", w), ("Z", z)]),
        horizon,
        meta: ScenarioMeta {
            model: "continuous".to_string(),
            params: BTreeMap::from([
                ("T".to_string(), horizon),
                ("theta".to_string(), theta),
            ]),
            seed: stream.seed,
            stream_id: stream.stream_id,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: Accessibility::Infinite,
        },
        stopping_times: BTreeMap::new(),
        integrands: BTreeMap::new(),
        exact: BTreeMap::from([("Z".to_string(), z_exact)]),
        aux: BTreeMap::from([("pcov_X_Z".to_string(), pcov)]),
    }
}

/// Two independent Brownian components with a density driven by the first:
/// the transformed components must stay strongly orthogonal.
pub fn build_orthogonal_pair(
    theta: f64,
    horizon: f64,
    n: usize,
    stream: RngStream,
) -> Scenario {
    let mut rng = stream.rng();
    let grid = uniform_grid(horizon, n);
    let w1 = brownian_on_grid(&grid, &mut rng);
    let w2 = brownian_on_grid(&grid, &mut rng);
    let driver = CadlagPath {
        times: grid.clone(),
        values: w1.values.iter().map(|v| theta * v).collect(),
        left_limits: w1.left_limits.iter().map(|v| theta * v).collect(),
        jump_flags: w1.jump_flags.clone(),
        diffusive: true,
    };
    let z = stochastic_exponential(&driver);
    Scenario {
        panel: panel_from(vec![("X1", w1), ("X2", w2), ("Z", z)]),
        horizon,
        meta: ScenarioMeta {
            model: "orthogonal-pair".to_string(),
            params: BTreeMap::from([
                ("T".to_string(), horizon),
                ("theta".to_string(), theta),
            ]),
            seed: stream.seed,
            stream_id: stream.stream_id,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: Accessibility::Infinite,
        },
        stopping_times: BTreeMap::new(),
        integrands: BTreeMap::new(),
        exact: BTreeMap::new(),
        aux: BTreeMap::new(),
    }
}

/// A strictly positive piecewise-constant path with multiplicative jumps
/// at uniform random times: the genuinely pure-jump density the exact
/// reciprocal-identity checks run on.
pub fn simulate_step_density(
    horizon: f64,
    jump_count: usize,
    stream: RngStream,
) -> CadlagPath {
    let mut rng = stream.rng();
    let mut jumps: Vec<f64> = (0..jump_count)
        .map(|_| {
            let u: f64 = rng.random();
            u * horizon
        })
        .filter(|&t| t > 0.0)
        .collect();
    jumps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    jumps.dedup();
    let grid = merge_events(&[0.0, horizon], &jumps, horizon);
    let mut values = Vec::with_capacity(grid.len());
    let mut left = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    let mut level = 1.0f64;
    let mut next_jump = 0usize;
    for &t in &grid {
        let is_jump = jumps.get(next_jump) == Some(&t);
        left.push(level);
        if is_jump {
            // Multiplicative factor in [1/2, 2], never zero.
            let u: f64 = rng.random();
            level *= 0.5 + 1.5 * u;
            next_jump += 1;
        }
        values.push(level);
        flags.push(is_jump);
    }
    CadlagPath { times: grid, values, left_limits: left, jump_flags: flags, diffusive: false }
}

/// Two independent compensated single-jump martingales (unit-rate first
/// jumps), for the independence side of the product-martingale tests.
/// The base grid must contain any later lookup times: the compensator
/// drift between events is linear in `t`, and carry-forward lookup is
/// exact only at grid times.
pub fn build_jump_pair(horizon: f64, n: usize, stream: RngStream) -> Scenario {
    let mut rng = stream.rng();
    let tau_a = exponential_inversion(&mut rng, 1.0);
    let tau_b = exponential_inversion(&mut rng, 1.0);
    let grid = merge_events(&uniform_grid(horizon, n), &[tau_a, tau_b], horizon);
    let single = |tau: f64| -> CadlagPath {
        let jumps = if tau <= horizon { vec![tau] } else { vec![] };
        let (_, m) = poisson_paths_on_grid(&grid, &jumps, 1.0);
        m.stop(StoppingTimeObs::jump(tau))
    };
    let ua = single(tau_a);
    let ub = single(tau_b);
    let mut stopping_times = BTreeMap::new();
    stopping_times.insert("tau_a".to_string(), StoppingTimeObs::jump(tau_a));
    stopping_times.insert("tau_b".to_string(), StoppingTimeObs::jump(tau_b));
    Scenario {
        panel: panel_from(vec![("A", ua), ("B", ub)]),
        horizon,
        meta: ScenarioMeta {
            model: "jump-pair".to_string(),
            params: BTreeMap::from([("T".to_string(), horizon)]),
            seed: stream.seed,
            stream_id: stream.stream_id,
            heavy_tails: false,
            brackets_locally_integrable: true,
            eta_accessibility: Accessibility::Infinite,
        },
        stopping_times,
        integrands: BTreeMap::new(),
        exact: BTreeMap::new(),
        aux: BTreeMap::new(),
    }
}
