//! Canonical representation of cadlag paths on event-augmented time grids.
//!
//! A path is stored as a strictly increasing grid of event times together
//! with, at each time, the right value, the left limit, and a flag marking
//! genuine jump events. Every genuine jump is a grid entry, so pure-jump
//! integrals and covariations are exact rather than discretized; a uniform
//! base grid merged with the event times carries any diffusive motion.
//!
//! The grid increment over `(t[k-1], t[k]]` splits into a *flow* part
//! `left_limits[k] - values[k-1]` (motion between events) and a *jump* part
//! `values[k] - left_limits[k]` (the event itself). Continuous paths store
//! `left_limits[k] == values[k]`; piecewise-constant paths store
//! `left_limits[k] == values[k-1]` at their jumps.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("times must be strictly increasing from 0 (violation near index {0})")]
    NonMonotoneTimes(usize),
    #[error("times, values, left_limits and jump_flags must have equal length")]
    LengthMismatch,
    #[error("non-jump entry {index} at t={time} has value != left limit")]
    InconsistentLeftLimit { index: usize, time: f64 },
    #[error("path must contain at least the time-0 entry")]
    Empty,
}

/// Observation of a stopping time on one path.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoppingTimeObs {
    /// The observed value; `f64::INFINITY` if the time never occurs.
    pub value: f64,
    pub kind: StoppingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum StoppingKind {
    /// Level hit or deterministic time.
    Hit,
    /// Jump event of a driving process.
    Jump,
    /// Never occurs (value is infinite).
    Never,
}

impl StoppingTimeObs {
    pub fn hit(value: f64) -> Self {
        assert!(value >= 0.0);
        Self { value, kind: StoppingKind::Hit }
    }

    pub fn jump(value: f64) -> Self {
        assert!(value >= 0.0);
        Self { value, kind: StoppingKind::Jump }
    }

    pub fn never() -> Self {
        Self { value: f64::INFINITY, kind: StoppingKind::Never }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// One realized cadlag path on an event-augmented grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    pub times: Vec<f64>,
    /// Right-limit value at each grid time.
    pub values: Vec<f64>,
    /// Left limit at each grid time; equals `values` wherever the path is
    /// continuous and the pre-jump value at jump entries.
    pub left_limits: Vec<f64>,
    /// Marks entries that are genuine jump events (as opposed to grid
    /// sampling of continuous motion).
    pub jump_flags: Vec<bool>,
    /// Whether the motion *between* events carries quadratic variation.
    /// True for paths with a Brownian component; false for pure-jump and
    /// deterministic/finite-variation flows, whose between-event increments
    /// contribute exactly zero to covariations.
    pub diffusive: bool,
}

impl CadlagPath {
    /// Validated constructor. `diffusive` defaults to true, which is always
    /// safe: a piecewise-constant path has zero flow increments anyway.
    pub fn new(
        times: Vec<f64>,
        values: Vec<f64>,
        left_limits: Vec<f64>,
        jump_flags: Vec<bool>,
    ) -> Result<Self, PathError> {
        let n = times.len();
        if n == 0 {
            return Err(PathError::Empty);
        }
        if values.len() != n || left_limits.len() != n || jump_flags.len() != n {
            return Err(PathError::LengthMismatch);
        }
        if times[0] != 0.0 {
            return Err(PathError::NonMonotoneTimes(0));
        }
        for k in 1..n {
            if !(times[k] > times[k - 1]) {
                return Err(PathError::NonMonotoneTimes(k));
            }
        }
        if left_limits[0] != values[0] {
            return Err(PathError::InconsistentLeftLimit { index: 0, time: 0.0 });
        }
        for k in 0..n {
            if !jump_flags[k] && values[k] != left_limits[k] {
                return Err(PathError::InconsistentLeftLimit { index: k, time: times[k] });
            }
        }
        Ok(Self { times, values, left_limits, jump_flags, diffusive: true })
    }

    pub fn with_diffusive(mut self, diffusive: bool) -> Self {
        self.diffusive = diffusive;
        self
    }

    /// Constant path `c` on the given grid.
    pub fn constant(times: Vec<f64>, c: f64) -> Self {
        let n = times.len();
        Self {
            times,
            values: vec![c; n],
            left_limits: vec![c; n],
            jump_flags: vec![false; n],
            diffusive: false,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Flow part of the grid increment ending at entry `k`
    /// (zero for `k = 0`).
    #[inline]
    pub fn flow(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.left_limits[k] - self.values[k - 1]
        }
    }

    /// Jump part of the grid increment at entry `k`.
    #[inline]
    pub fn jump(&self, k: usize) -> f64 {
        self.values[k] - self.left_limits[k]
    }

    /// Index of the last grid time `<= t` (carry-forward lookup).
    pub fn index_at(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        }
    }

    /// Right value at time `t` (grid carry-forward between entries).
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    /// Left limit at time `t`: the stored left limit if `t` is a grid
    /// time, otherwise the carried value from the previous entry.
    pub fn left_limit_at(&self, t: f64) -> f64 {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => self.left_limits[k],
            Err(0) => self.values[0],
            Err(k) => self.values[k - 1],
        }
    }

    /// Maximum absolute value over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .chain(self.left_limits.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute difference against another path on the same grid.
    pub fn sup_distance(&self, other: &CadlagPath) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "grids differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Path stopped at `sigma`: equal on `[0, sigma]`, frozen afterwards.
    /// `sigma` is inserted as a grid time if absent (carry-forward value).
    pub fn stop(&self, sigma: StoppingTimeObs) -> CadlagPath {
        let s = sigma.value;
        if s >= self.horizon() {
            return self.clone();
        }
        let mut times = Vec::with_capacity(self.len() + 1);
        let mut values = Vec::with_capacity(self.len() + 1);
        let mut left_limits = Vec::with_capacity(self.len() + 1);
        let mut jump_flags = Vec::with_capacity(self.len() + 1);
        let mut frozen = None;
        for k in 0..self.len() {
            let t = self.times[k];
            if t <= s {
                times.push(t);
                values.push(self.values[k]);
                left_limits.push(self.left_limits[k]);
                jump_flags.push(self.jump_flags[k]);
                continue;
            }
            if frozen.is_none() {
                // First entry past sigma: insert sigma if it was not a grid
                // time, then freeze.
                let stop_value = if times.last() == Some(&s) {
                    *values.last().unwrap()
                } else {
                    let v = self.value_at(s);
                    times.push(s);
                    values.push(v);
                    left_limits.push(v);
                    jump_flags.push(false);
                    v
                };
                frozen = Some(stop_value);
            }
            let v = frozen.unwrap();
            times.push(t);
            values.push(v);
            left_limits.push(v);
            jump_flags.push(false);
        }
        if frozen.is_none() && times.last() != Some(&s) {
            // sigma lies strictly between the last grid time and... cannot
            // happen: s < horizon was checked, so some entry exceeds s.
            unreachable!();
        }
        CadlagPath {
            times,
            values,
            left_limits,
            jump_flags,
            diffusive: self.diffusive,
        }
    }

    /// Resample onto a superset grid with exact carry-forward of right
    /// values. Inserted entries are flat (left limit = carried value) and
    /// unflagged for this component.
    pub fn resample(&self, grid: &[f64]) -> CadlagPath {
        let n = grid.len();
        let mut values = Vec::with_capacity(n);
        let mut left_limits = Vec::with_capacity(n);
        let mut jump_flags = Vec::with_capacity(n);
        let mut src = 0usize;
        for &t in grid {
            if src < self.len() && self.times[src] == t {
                values.push(self.values[src]);
                left_limits.push(self.left_limits[src]);
                jump_flags.push(self.jump_flags[src]);
                src += 1;
            } else {
                debug_assert!(src == 0 || self.times[src - 1] < t);
                let carried = if src == 0 { self.values[0] } else { self.values[src - 1] };
                values.push(carried);
                left_limits.push(carried);
                jump_flags.push(false);
            }
        }
        assert_eq!(src, self.len(), "grid must contain all event times of the path");
        CadlagPath {
            times: grid.to_vec(),
            values,
            left_limits,
            jump_flags,
            diffusive: self.diffusive,
        }
    }

    /// CSV serialization with columns `time,left_limit,value,jump_flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,left_limit,value,jump_flag\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.times[k],
                self.left_limits[k],
                self.values[k],
                u8::from(self.jump_flags[k]),
            ));
        }
        out
    }

    /// Parse the CSV produced by [`CadlagPath::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, PathError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut left_limits = Vec::new();
        let mut jump_flags = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |_what: &str| -> Result<f64, PathError> {
                cols.next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or(PathError::LengthMismatch)
            };
            times.push(next("time")?);
            left_limits.push(next("left_limit")?);
            values.push(next("value")?);
            jump_flags.push(next("jump_flag")? != 0.0);
        }
        CadlagPath::new(times, values, left_limits, jump_flags)
    }
}

/// Validated constructor mirroring the four-sequence layout.
pub fn make_path(
    times: Vec<f64>,
    values: Vec<f64>,
    left_limits: Vec<f64>,
    jump_flags: Vec<bool>,
) -> Result<CadlagPath, PathError> {
    CadlagPath::new(times, values, left_limits, jump_flags)
}

/// A coupled family of paths on one shared event grid.
#[derive(Debug, Clone)]
pub struct PathPanel {
    pub times: Vec<f64>,
    /// Union of the components' jump flags.
    pub jump_flags: Vec<bool>,
    names: Vec<String>,
    components: Vec<CadlagPath>,
}

impl PathPanel {
    pub fn component_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&CadlagPath> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.components[i])
    }

    pub fn expect(&self, name: &str) -> &CadlagPath {
        self.get(name)
            .unwrap_or_else(|| panic!("panel has no component '{name}'"))
    }

    pub fn insert(&mut self, name: &str, path: CadlagPath) {
        assert_eq!(path.times, self.times, "component grid must match the panel");
        for (f, pf) in self.jump_flags.iter_mut().zip(&path.jump_flags) {
            *f = *f || *pf;
        }
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.components[i] = path;
        } else {
            self.names.push(name.to_string());
            self.components.push(path);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Merge named paths onto the union of their event times.
///
/// Each component is resampled with exact carry-forward; jump flags are
/// unioned. Alignment never drops an event time, is idempotent, and does
/// not depend on the argument order beyond the component naming.
pub fn align(paths: &[(&str, &CadlagPath)]) -> PathPanel {
    assert!(!paths.is_empty(), "align requires at least one path");
    let mut grid: Vec<f64> = Vec::new();
    for (_, p) in paths {
        assert_eq!(p.times[0], 0.0, "all paths must start at time 0");
        grid.extend_from_slice(&p.times);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let mut names = Vec::with_capacity(paths.len());
    let mut components = Vec::with_capacity(paths.len());
    let mut jump_flags = vec![false; grid.len()];
    for (name, p) in paths {
        let r = p.resample(&grid);
        for (f, pf) in jump_flags.iter_mut().zip(&r.jump_flags) {
            *f = *f || *pf;
        }
        names.push((*name).to_string());
        components.push(r);
    }
    // Components share the union flags so that panel-level jump bookkeeping
    // is uniform; a non-jumping component has a zero jump part there.
    for c in &mut components {
        c.jump_flags = jump_flags.clone();
    }
    PathPanel { times: grid, jump_flags, names, components }
}

/// Uniform grid of `n` steps on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    assert!(horizon > 0.0 && n >= 1);
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// Sorted deduplicated merge of a base grid with extra event times
/// restricted to `[0, cap]`.
pub fn merge_events(base: &[f64], events: &[f64], cap: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = base.to_vec();
    grid.extend(events.iter().copied().filter(|&t| t > 0.0 && t <= cap));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_jump_path() -> CadlagPath {
        // Unit jump from 1 at t=1: values [1,2], left limits [1,1].
        make_path(
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![false, true],
        )
        .unwrap()
    }

    #[test]
    fn constant_path_is_valid_with_zero_jumps() {
        let p = make_path(vec![0.0, 1.0], vec![3.0, 3.0], vec![3.0, 3.0], vec![false, false])
            .unwrap();
        assert_eq!(p.jump(0), 0.0);
        assert_eq!(p.jump(1), 0.0);
        assert_eq!(p.flow(1), 0.0);
    }

    #[test]
    fn single_jump_layout() {
        let p = single_jump_path();
        assert_eq!(p.values, vec![1.0, 2.0]);
        assert_eq!(p.left_limits, vec![1.0, 1.0]);
        assert_eq!(p.jump(1), 1.0);
        assert_eq!(p.flow(1), 0.0);
    }

    #[test]
    fn duplicate_time_rejected() {
        let e = make_path(
            vec![0.0, 0.5, 0.5],
            vec![0.0; 3],
            vec![0.0; 3],
            vec![false; 3],
        )
        .unwrap_err();
        assert_eq!(e, PathError::NonMonotoneTimes(2));
    }

    #[test]
    fn nonjump_entry_with_mismatched_left_limit_rejected() {
        let e = make_path(
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            vec![false, false],
        )
        .unwrap_err();
        assert!(matches!(e, PathError::InconsistentLeftLimit { index: 1, .. }));
    }

    #[test]
    fn lookup_consistency() {
        let p = single_jump_path();
        assert_eq!(p.value_at(1.0), 2.0);
        assert_eq!(p.left_limit_at(1.0), 1.0);
        assert_eq!(p.value_at(0.5), 1.0);
        assert_eq!(p.left_limit_at(0.5), 1.0);
    }

    #[test]
    fn stop_at_infinity_is_identity() {
        let p = single_jump_path();
        assert_eq!(p.stop(StoppingTimeObs::never()), p);
    }

    #[test]
    fn stop_at_zero_freezes_initial_value() {
        let p = single_jump_path();
        let s = p.stop(StoppingTimeObs::hit(0.0));
        assert!(s.values.iter().all(|&v| v == 1.0));
        assert!(s.jump_flags.iter().all(|&f| !f));
    }

    #[test]
    fn stop_inserts_missing_event_time() {
        let p = make_path(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![false; 3],
        )
        .unwrap();
        let s = p.stop(StoppingTimeObs::hit(0.5));
        assert_eq!(s.times, vec![0.0, 0.5, 1.0, 2.0]);
        assert_eq!(s.values, vec![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn stop_is_idempotent() {
        let p = single_jump_path();
        let sigma = StoppingTimeObs::hit(0.7);
        let once = p.stop(sigma);
        assert_eq!(once.stop(sigma), once);
    }

    #[test]
    fn stop_keeps_jump_at_stop_time() {
        // Counting path of a Poisson process stopped at its first jump
        // stays at 1 (the jump at tau itself is included).
        let p = make_path(
            vec![0.0, 0.4, 1.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.0, 1.0],
            vec![false, true, true],
        )
        .unwrap();
        let s = p.stop(StoppingTimeObs::jump(0.4));
        assert_eq!(s.value_at(0.4), 1.0);
        assert_eq!(s.value_at(1.0), 1.0);
        assert_eq!(s.jump(1), 1.0);
    }

    #[test]
    fn align_single_path_is_identity() {
        let p = single_jump_path();
        let panel = align(&[("x", &p)]);
        assert_eq!(panel.times, p.times);
        assert_eq!(panel.expect("x").values, p.values);
    }

    #[test]
    fn align_disjoint_jump_times_carries_flat_values() {
        let a = make_path(
            vec![0.0, 0.3],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![false, true],
        )
        .unwrap();
        let b = make_path(
            vec![0.0, 0.7],
            vec![5.0, 6.0],
            vec![5.0, 5.0],
            vec![false, true],
        )
        .unwrap();
        let panel = align(&[("a", &a), ("b", &b)]);
        assert_eq!(panel.times, vec![0.0, 0.3, 0.7]);
        let ra = panel.expect("a");
        let rb = panel.expect("b");
        assert_eq!(ra.values, vec![0.0, 1.0, 1.0]);
        assert_eq!(ra.jump(2), 0.0);
        assert_eq!(rb.values, vec![5.0, 5.0, 6.0]);
        assert_eq!(rb.jump(1), 0.0);
        assert_eq!(panel.jump_flags, vec![false, true, true]);
    }

    #[test]
    fn align_is_idempotent() {
        let a = single_jump_path();
        let b = CadlagPath::constant(vec![0.0, 0.5, 2.0], 1.5);
        let panel = align(&[("a", &a), ("b", &b)]);
        let again = align(&[("a", panel.expect("a")), ("b", panel.expect("b"))]);
        assert_eq!(again.times, panel.times);
        assert_eq!(again.expect("a").values, panel.expect("a").values);
        assert_eq!(again.expect("b").left_limits, panel.expect("b").left_limits);
    }

    #[test]
    fn csv_round_trip() {
        let p = single_jump_path();
        let q = CadlagPath::from_csv(&p.to_csv()).unwrap();
        assert_eq!(p.times, q.times);
        assert_eq!(p.values, q.values);
        assert_eq!(p.left_limits, q.left_limits);
        assert_eq!(p.jump_flags, q.jump_flags);
    }
}
