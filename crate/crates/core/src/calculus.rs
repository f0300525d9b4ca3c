//! Pathwise stochastic integration, quadratic covariation, and the
//! reciprocal-density identity, computed on aligned grids.
//!
//! Conventions, fixed once and enforced by [`IntegrandPath`]:
//!
//! * Integrands are predictable. The contribution of a jump at `t` is the
//!   integrand's left limit at `t` times the jump; the contribution of the
//!   flow over `(t[k-1], t[k]]` uses the integrand's value on the open cell
//!   (the right value at `t[k-1]` for cadlag-backed integrands).
//! * Covariations accumulate exact jump products always, and flow products
//!   only when both paths are diffusive: a finite-variation flow carries no
//!   quadratic variation, and summing its grid increments would pollute the
//!   exact pure-jump identities with spurious `O(1/n)` terms.
//! * Zero increments contribute exactly zero, even against a non-finite
//!   integrand value (relevant for integrands singular at 0 integrated
//!   against pure-jump paths).

use crate::path::CadlagPath;
use crate::quad;
use crate::tol;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalculusError {
    #[error("density hits zero (<= {floor:e}) at t={time}")]
    ZeroDensity { time: f64, floor: f64 },
}

/// A predictable integrand on a grid.
///
/// `at_event[k]` is the value used against the jump at `times[k]` (the left
/// limit there); `on_cell[k]` is the value on the open cell
/// `(times[k], times[k+1])`, used against the flow ending at `times[k+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandPath {
    pub times: Vec<f64>,
    pub at_event: Vec<f64>,
    pub on_cell: Vec<f64>,
    /// Optional tag describing a closed form this integrand came from.
    pub closed_form: Option<String>,
}

impl IntegrandPath {
    /// Predictable evaluation of a cadlag path: left limits at events,
    /// right values on open cells.
    pub fn from_cadlag(path: &CadlagPath) -> Self {
        Self {
            times: path.times.clone(),
            at_event: path.left_limits.clone(),
            on_cell: path.values.clone(),
            closed_form: None,
        }
    }

    /// Deterministic function of time, assumed continuous on each cell:
    /// the left limit at a grid point is the function value there.
    pub fn from_fn<F: Fn(f64) -> f64>(times: &[f64], f: F) -> Self {
        let at_event: Vec<f64> = times.iter().map(|&t| f(t)).collect();
        Self {
            times: times.to_vec(),
            on_cell: at_event.clone(),
            at_event,
            closed_form: None,
        }
    }

    pub fn constant(times: &[f64], c: f64) -> Self {
        Self {
            times: times.to_vec(),
            at_event: vec![c; times.len()],
            on_cell: vec![c; times.len()],
            closed_form: None,
        }
    }

    /// Left-continuous step function `sum_i v_i 1_{(b_i, b_{i+1}]}` with
    /// `b_0 = -inf` implied: value `levels[i]` applies at grid times in
    /// `(breaks[i-1], breaks[i]]` and on the corresponding open cells.
    /// `breaks` must be increasing; `levels` has one more entry than
    /// `breaks` (the final level applies after the last break).
    pub fn step(times: &[f64], breaks: &[f64], levels: &[f64]) -> Self {
        assert_eq!(levels.len(), breaks.len() + 1);
        let level_at = |t: f64| -> f64 {
            let mut i = 0;
            while i < breaks.len() && t > breaks[i] {
                i += 1;
            }
            levels[i]
        };
        // at_event[k]: limit from the left at times[k] = level on (.., times[k]].
        let at_event: Vec<f64> = times.iter().map(|&t| level_at(t)).collect();
        // on_cell[k]: level on the open cell just after times[k].
        let on_cell: Vec<f64> = times
            .iter()
            .map(|&t| {
                let mut i = 0;
                while i < breaks.len() && t >= breaks[i] {
                    i += 1;
                }
                levels[i]
            })
            .collect();
        Self { times: times.to_vec(), at_event, on_cell, closed_form: None }
    }

    /// The indicator `1_{[0, cap]}` as a predictable integrand.
    pub fn unit_until(times: &[f64], cap: f64) -> Self {
        Self::step(times, &[cap], &[1.0, 0.0])
    }

    pub fn scale_by<F: Fn(f64) -> f64>(mut self, f: F) -> Self {
        for (t, v) in self.times.iter().zip(self.at_event.iter_mut()) {
            *v *= f(*t);
        }
        for (t, v) in self.times.iter().zip(self.on_cell.iter_mut()) {
            *v *= f(*t);
        }
        self
    }

    fn assert_grid(&self, m: &CadlagPath) {
        assert_eq!(
            self.times, m.times,
            "integrand and integrator must share the grid (align first)"
        );
    }
}

#[inline]
fn guarded_mul(a: f64, inc: f64) -> f64 {
    if inc == 0.0 {
        0.0
    } else {
        a * inc
    }
}

/// Left-point pathwise integral `(H . M)_t = int_(0,t] H_u dM_u`, starting
/// at zero. Jump events contribute exactly `H(t-) * dM(t)`.
pub fn stochastic_integral(h: &IntegrandPath, m: &CadlagPath) -> CadlagPath {
    h.assert_grid(m);
    let n = m.len();
    let mut values = Vec::with_capacity(n);
    let mut left_limits = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    values.push(0.0);
    left_limits.push(0.0);
    for k in 1..n {
        let flow_contrib = guarded_mul(h.on_cell[k - 1], m.flow(k));
        let jump_contrib = guarded_mul(h.at_event[k], m.jump(k));
        let pre = acc + flow_contrib;
        acc = pre + jump_contrib;
        left_limits.push(pre);
        values.push(acc);
    }
    CadlagPath {
        times: m.times.clone(),
        values,
        left_limits,
        jump_flags: m.jump_flags.clone(),
        diffusive: m.diffusive,
    }
}

/// Pathwise quadratic covariation `[X, Y]` on a shared grid: exact jump
/// products at every entry, plus flow products when both paths are
/// diffusive. Starts at zero; the result is a finite-variation path.
pub fn quadratic_covariation(x: &CadlagPath, y: &CadlagPath) -> CadlagPath {
    assert_eq!(x.times, y.times, "paths must share the grid (align first)");
    let include_flow = x.diffusive && y.diffusive;
    let n = x.len();
    let mut values = Vec::with_capacity(n);
    let mut left_limits = Vec::with_capacity(n);
    let mut jump_flags = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    values.push(0.0);
    left_limits.push(0.0);
    jump_flags.push(false);
    for k in 1..n {
        let flow_contrib = if include_flow {
            guarded_mul(x.flow(k), y.flow(k))
        } else {
            0.0
        };
        let jump_contrib = guarded_mul(x.jump(k), y.jump(k));
        let pre = acc + flow_contrib;
        acc = pre + jump_contrib;
        left_limits.push(pre);
        values.push(acc);
        jump_flags.push(jump_contrib != 0.0);
    }
    CadlagPath {
        times: x.times.clone(),
        values,
        left_limits,
        jump_flags,
        diffusive: false,
    }
}

/// Integral of a *running-value* (right-evaluated) integrand against a
/// finite-variation path: jump contributions use the integrand's value at
/// the event time itself, flow contributions use the previous grid value.
/// This is the evaluation the general measure-change transform requires and
/// must not be conflated with the predictable left-limit form.
pub fn running_value_integral<F: Fn(usize) -> f64>(
    value_at: F,
    b: &CadlagPath,
) -> CadlagPath {
    let n = b.len();
    let mut values = Vec::with_capacity(n);
    let mut left_limits = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    values.push(0.0);
    left_limits.push(0.0);
    for k in 1..n {
        let flow_contrib = guarded_mul(value_at(k - 1), b.flow(k));
        let jump_contrib = guarded_mul(value_at(k), b.jump(k));
        let pre = acc + flow_contrib;
        acc = pre + jump_contrib;
        left_limits.push(pre);
        values.push(acc);
    }
    CadlagPath {
        times: b.times.clone(),
        values,
        left_limits,
        jump_flags: b.jump_flags.clone(),
        diffusive: false,
    }
}

/// Pointwise reciprocal `1/Z` of a strictly positive path.
pub fn reciprocal(z: &CadlagPath, floor: f64) -> Result<CadlagPath, CalculusError> {
    for k in 0..z.len() {
        if z.values[k] <= floor || z.left_limits[k] <= floor {
            return Err(CalculusError::ZeroDensity { time: z.times[k], floor });
        }
    }
    Ok(CadlagPath {
        times: z.times.clone(),
        values: z.values.iter().map(|v| 1.0 / v).collect(),
        left_limits: z.left_limits.iter().map(|v| 1.0 / v).collect(),
        jump_flags: z.jump_flags.clone(),
        diffusive: z.diffusive,
    })
}

/// Residual of the reciprocal-density identity
/// `1/Z = 1/Z_0 - (1/Z_-^2) . (Z - (1/Z) . [Z])`,
/// with the inner integral evaluated at the running value and the outer one
/// predictably. Returns the sup-norm difference between the two sides.
pub fn ito_reciprocal_check(z: &CadlagPath, floor: f64) -> Result<f64, CalculusError> {
    let inv = reciprocal(z, floor)?;
    let bracket = quadratic_covariation(z, z);
    let inner = running_value_integral(|k| inv.values[k], &bracket);
    // R = Z - (1/Z).[Z]
    let n = z.len();
    let r = CadlagPath {
        times: z.times.clone(),
        values: (0..n).map(|k| z.values[k] - inner.values[k]).collect(),
        left_limits: (0..n).map(|k| z.left_limits[k] - inner.left_limits[k]).collect(),
        jump_flags: z.jump_flags.clone(),
        diffusive: z.diffusive,
    };
    let outer = stochastic_integral(
        &IntegrandPath {
            times: z.times.clone(),
            at_event: z.left_limits.iter().map(|v| 1.0 / (v * v)).collect(),
            on_cell: z.values.iter().map(|v| 1.0 / (v * v)).collect(),
            closed_form: None,
        },
        &r,
    );
    let mut residual = 0.0f64;
    for k in 0..n {
        let rhs = inv.values[0] - outer.values[k];
        residual = residual.max((inv.values[k] - rhs).abs());
    }
    Ok(residual)
}

/// One row of the divergence probe: the truncation level, the Monte Carlo
/// estimate of the truncated bracket mean, and the quadrature reference.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DivergenceRow {
    pub epsilon: f64,
    pub mc_estimate: f64,
    pub quadrature: f64,
    pub sample_count: usize,
}

/// Probe for a non-integrable bracket: compares Monte Carlo estimates of
/// `E[[X,Z]_t 1_{tau > eps}]` against the quadrature of
/// `int_eps^t exp(-u)/u du` (the exponential-law reference with unit rate)
/// for a decreasing sequence of truncations. Monotone growth of the series
/// as `eps` decreases makes the divergence observable.
pub fn divergence_probe(
    samples: &[(f64, f64)], // (first jump time tau, bracket value at t)
    t: f64,
    truncations: &[f64],
) -> Vec<DivergenceRow> {
    truncations
        .iter()
        .map(|&eps| {
            let mut sum = 0.0;
            for &(tau, bracket) in samples {
                if tau > eps {
                    sum += bracket;
                }
            }
            let quadrature = if eps >= t {
                0.0
            } else {
                quad::truncated_reciprocal_exp_integral(eps, t, tol::QUADRATURE_TOL)
            };
            DivergenceRow {
                epsilon: eps,
                mc_estimate: sum / samples.len() as f64,
                quadrature,
                sample_count: samples.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::make_path;

    /// Brute-force oracle: a pure-jump integral is the explicit sum of
    /// integrand-left-limit times jump over the jump times up to t.
    fn pure_jump_integral_oracle(
        jumps: &[(f64, f64)],
        h: impl Fn(f64) -> f64,
        t: f64,
    ) -> f64 {
        jumps
            .iter()
            .filter(|(s, _)| *s <= t)
            .map(|(s, dz)| h(*s) * dz)
            .sum()
    }

    fn three_jump_path() -> CadlagPath {
        // Jumps +1.0 at 0.25, -0.5 at 0.5, +2.0 at 0.75 from 0.
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let values = vec![0.0, 1.0, 0.5, 2.5, 2.5];
        let left = vec![0.0, 0.0, 1.0, 0.5, 2.5];
        let flags = vec![false, true, true, true, false];
        make_path(times, values, left, flags)
            .unwrap()
            .with_diffusive(false)
    }

    #[test]
    fn unit_integrand_reproduces_increments() {
        let m = three_jump_path();
        let h = IntegrandPath::constant(&m.times, 1.0);
        let i = stochastic_integral(&h, &m);
        for k in 0..m.len() {
            assert!((i.values[k] - (m.values[k] - m.values[0])).abs() < 1e-15);
        }
    }

    #[test]
    fn pure_jump_integral_matches_bruteforce_oracle() {
        let m = three_jump_path();
        let hf = |t: f64| 2.0 * t - 0.3;
        let h = IntegrandPath::from_fn(&m.times, hf);
        let i = stochastic_integral(&h, &m);
        let jumps = [(0.25, 1.0), (0.5, -0.5), (0.75, 2.0)];
        for (k, &t) in m.times.iter().enumerate() {
            let oracle = pure_jump_integral_oracle(&jumps, hf, t);
            assert!((i.values[k] - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_integrand_against_counting_path_keeps_exact_jump_term() {
        // H(u) = 1/sqrt(u) against the counting part of a stopped Poisson
        // path: the only contribution is the jump term 1/sqrt(tau).
        let tau = 0.37;
        let counting = make_path(
            vec![0.0, tau, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![false, true, false],
        )
        .unwrap()
        .with_diffusive(false);
        let h = IntegrandPath::from_fn(&counting.times, |u| 1.0 / u.sqrt());
        assert!(h.at_event[0].is_infinite());
        let i = stochastic_integral(&h, &counting);
        assert_eq!(i.values[0], 0.0);
        assert!((i.value_at(tau) - 1.0 / tau.sqrt()).abs() < 1e-15);
        assert!((i.value_at(1.0) - 1.0 / tau.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn associativity_on_pure_jump_path() {
        let m = three_jump_path();
        let g = IntegrandPath::from_fn(&m.times, |t| t + 0.1);
        let h = IntegrandPath::from_fn(&m.times, |t| 1.0 - t);
        let hm = stochastic_integral(&h, &m);
        let lhs = stochastic_integral(&g, &hm);
        let gh = IntegrandPath::from_fn(&m.times, |t| (t + 0.1) * (1.0 - t));
        let rhs = stochastic_integral(&gh, &m);
        assert!(lhs.sup_distance(&rhs) < 1e-15);
    }

    #[test]
    fn covariation_of_disjoint_single_jumps_vanishes() {
        // The two single-jump paths with jump supports eps*xi and
        // (1-eps)*xi never jump together: [X,Y] = 0 identically.
        let x = make_path(
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![false, true],
        )
        .unwrap();
        let y = make_path(
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![false, true],
        )
        .unwrap();
        let b = quadratic_covariation(&x, &y);
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covariation_bilinear() {
        let x = three_jump_path();
        let y = {
            let times = x.times.clone();
            let values = vec![0.0, 0.2, 0.2, -1.0, -1.0];
            let left = vec![0.0, 0.0, 0.2, 0.2, -1.0];
            let flags = vec![false, true, false, true, false];
            make_path(times, values, left, flags).unwrap().with_diffusive(false)
        };
        let (a, b) = (2.5, -1.25);
        let combo = {
            let values: Vec<f64> = x
                .values
                .iter()
                .zip(&y.values)
                .map(|(u, v)| a * u + b * v)
                .collect();
            let left: Vec<f64> = x
                .left_limits
                .iter()
                .zip(&y.left_limits)
                .map(|(u, v)| a * u + b * v)
                .collect();
            let flags = x
                .jump_flags
                .iter()
                .zip(&y.jump_flags)
                .map(|(p, q)| *p || *q)
                .collect();
            make_path(x.times.clone(), values, left, flags)
                .unwrap()
                .with_diffusive(false)
        };
        let lhs = quadratic_covariation(&combo, &x);
        let qxx = quadratic_covariation(&x, &x);
        let qyx = quadratic_covariation(&y, &x);
        for k in 0..x.len() {
            let rhs = a * qxx.values[k] + b * qyx.values[k];
            assert!((lhs.values[k] - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn integration_by_parts_exact_on_pure_jump_panel() {
        let x = three_jump_path();
        let y = {
            let times = x.times.clone();
            let values = vec![1.0, 1.0, 3.0, 3.0, 2.0];
            let left = vec![1.0, 1.0, 1.0, 3.0, 3.0];
            let flags = vec![false, false, true, false, true];
            make_path(times, values, left, flags).unwrap().with_diffusive(false)
        };
        let xy_minus = stochastic_integral(&IntegrandPath::from_cadlag(&x), &y);
        let yx_minus = stochastic_integral(&IntegrandPath::from_cadlag(&y), &x);
        let bracket = quadratic_covariation(&x, &y);
        for k in 0..x.len() {
            let lhs = x.values[k] * y.values[k] - x.values[0] * y.values[0];
            let rhs = xy_minus.values[k] + yx_minus.values[k] + bracket.values[k];
            assert!((lhs - rhs).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn ito_reciprocal_constant_density_is_zero() {
        let z = CadlagPath::constant(vec![0.0, 0.5, 1.0], 1.0);
        assert_eq!(ito_reciprocal_check(&z, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn ito_reciprocal_pure_jump_exact() {
        // Z jumps 1 -> 3 -> 0.5, strictly positive.
        let z = make_path(
            vec![0.0, 0.4, 0.8],
            vec![1.0, 3.0, 0.5],
            vec![1.0, 1.0, 3.0],
            vec![false, true, true],
        )
        .unwrap()
        .with_diffusive(false);
        let r = ito_reciprocal_check(&z, 1e-12).unwrap();
        assert!(r < 1e-14, "residual {r}");
    }

    #[test]
    fn ito_reciprocal_rejects_zero_density() {
        let z = make_path(
            vec![0.0, 0.4],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![false, true],
        )
        .unwrap();
        assert!(matches!(
            ito_reciprocal_check(&z, 1e-12),
            Err(CalculusError::ZeroDensity { .. })
        ));
    }

    #[test]
    fn divergence_probe_empty_interval_vanishes() {
        // t below every truncation: both series are zero.
        let samples = vec![(0.5, 2.0), (1.5, 0.7)];
        let rows = divergence_probe(&samples, 1e-3, &[1e-2]);
        assert_eq!(rows[0].quadrature, 0.0);
    }

    #[test]
    fn step_integrand_levels() {
        let times = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let h = IntegrandPath::step(&times, &[0.5], &[2.0, 7.0]);
        // Left-continuity: at t=0.5 the left limit is still 2.
        assert_eq!(h.at_event, vec![2.0, 2.0, 2.0, 7.0, 7.0]);
        assert_eq!(h.on_cell, vec![2.0, 2.0, 7.0, 7.0, 7.0]);
    }

    #[test]
    fn unit_until_covers_cap_inclusively() {
        let times = vec![0.0, 0.5, 1.0, 1.5];
        let h = IntegrandPath::unit_until(&times, 1.0);
        assert_eq!(h.at_event, vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(h.on_cell, vec![1.0, 1.0, 0.0, 0.0]);
    }
}
