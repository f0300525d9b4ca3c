//! Exact computation on finite probability spaces with discrete
//! filtrations: conditional expectations, compensators, martingale checks,
//! measure-change transforms and dimension counts, all in rational
//! arithmetic. This module is the ground truth every "exactly zero" claim
//! in the suite is checked against.
//!
//! Predictable `t-` stages are first-class grid points: conditioning on
//! the information just before a jump time is a column lookup, not a
//! limit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Q = BigRational;

/// Rational from an integer pair.
pub fn q(num: i64, den: i64) -> Q {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn q_int(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

#[derive(Debug, Error, PartialEq)]
pub enum FiniteError {
    #[error("conditioning cell has zero total weight")]
    ZeroCell,
    #[error("weights must sum to 1 (off by {0})")]
    BadWeights(f64),
    #[error("partition at stage {0} does not refine the previous stage")]
    NotRefining(usize),
    #[error("stage-0 partition must be trivial")]
    NonTrivialStart,
    #[error("process is not adapted at stage {stage} (atoms {a} and {b} share a cell)")]
    NotAdapted { stage: usize, a: usize, b: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no representation: target increment outside the basis span at stage {0}")]
    NotRepresentable(usize),
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub id: String,
    pub weight: Q,
}

/// A filtration stage: a time point, possibly the predictable `t-` stage
/// announcing the time.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub label: String,
    pub time: f64,
    pub predictable: bool,
}

/// Finite atom space with a discrete filtration given as partition
/// refinements, one partition per stage.
#[derive(Debug, Clone)]
pub struct FiniteSpace {
    pub atoms: Vec<Atom>,
    pub stages: Vec<Stage>,
    /// `partitions[j]` lists the cells (atom index sets) of stage `j`.
    pub partitions: Vec<Vec<Vec<usize>>>,
}

impl FiniteSpace {
    pub fn new(
        atoms: Vec<Atom>,
        stages: Vec<Stage>,
        partitions: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self, FiniteError> {
        let total: Q = atoms.iter().map(|a| a.weight.clone()).sum();
        let off = (&total - Q::one()).to_f64().unwrap_or(f64::NAN).abs();
        if off > 1e-14 {
            return Err(FiniteError::BadWeights(off));
        }
        assert_eq!(stages.len(), partitions.len());
        if partitions[0].len() != 1 || partitions[0][0].len() != atoms.len() {
            return Err(FiniteError::NonTrivialStart);
        }
        for j in 1..partitions.len() {
            if !refines(&partitions[j], &partitions[j - 1]) {
                return Err(FiniteError::NotRefining(j));
            }
        }
        Ok(Self { atoms, stages, partitions })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn weights(&self) -> Vec<Q> {
        self.atoms.iter().map(|a| a.weight.clone()).collect()
    }

    pub fn atom_index(&self, id: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.id == id)
    }

    /// Reweighted measure `w_Q[a] = w_P[a] * density_terminal[a]`.
    pub fn reweight(&self, density_terminal: &[Q]) -> Vec<Q> {
        self.weights()
            .iter()
            .zip(density_terminal)
            .map(|(w, z)| w * z)
            .collect()
    }
}

fn refines(fine: &[Vec<usize>], coarse: &[Vec<usize>]) -> bool {
    fine.iter().all(|cell| {
        coarse
            .iter()
            .any(|big| cell.iter().all(|a| big.contains(a)))
    })
}

/// Atom-by-stage table of rational values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProcess {
    pub values: Vec<Vec<Q>>, // [atom][stage]
}

impl DiscreteProcess {
    pub fn constant(space: &FiniteSpace, c: Q) -> Self {
        Self { values: vec![vec![c; space.stage_count()]; space.atom_count()] }
    }

    pub fn from_rows(rows: Vec<Vec<Q>>) -> Self {
        Self { values: rows }
    }

    pub fn stage_column(&self, j: usize) -> Vec<Q> {
        self.values.iter().map(|row| row[j].clone()).collect()
    }

    pub fn increment(&self, atom: usize, stage: usize) -> Q {
        if stage == 0 {
            Q::zero()
        } else {
            &self.values[atom][stage] - &self.values[atom][stage - 1]
        }
    }

    /// Check adaptedness: constant on every cell of its stage partition.
    pub fn is_adapted(&self, space: &FiniteSpace) -> Result<(), FiniteError> {
        for (j, cells) in space.partitions.iter().enumerate() {
            for cell in cells {
                for pair in cell.windows(2) {
                    if self.values[pair[0]][j] != self.values[pair[1]][j] {
                        return Err(FiniteError::NotAdapted { stage: j, a: pair[0], b: pair[1] });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64().unwrap()).collect())
            .collect()
    }
}

/// Cell-wise weighted average of a stage column: exact conditional
/// expectation given the partition.
pub fn conditional_expectation(
    column: &[Q],
    partition: &[Vec<usize>],
    weights: &[Q],
) -> Result<Vec<Q>, FiniteError> {
    let mut out = vec![Q::zero(); column.len()];
    for cell in partition {
        let mass: Q = cell.iter().map(|&a| weights[a].clone()).sum();
        if mass.is_zero() {
            return Err(FiniteError::ZeroCell);
        }
        let ev: Q = cell
            .iter()
            .map(|&a| &weights[a] * &column[a])
            .sum::<Q>()
            / mass;
        for &a in cell {
            out[a] = ev.clone();
        }
    }
    Ok(out)
}

/// Cell-wise average where zero-weight cells are tolerated (their value is
/// left at zero); used under reweighted measures that kill atoms.
fn conditional_expectation_lenient(
    column: &[Q],
    partition: &[Vec<usize>],
    weights: &[Q],
) -> Vec<Q> {
    let mut out = vec![Q::zero(); column.len()];
    for cell in partition {
        let mass: Q = cell.iter().map(|&a| weights[a].clone()).sum();
        if mass.is_zero() {
            continue;
        }
        let ev: Q = cell
            .iter()
            .map(|&a| &weights[a] * &column[a])
            .sum::<Q>()
            / mass;
        for &a in cell {
            out[a] = ev.clone();
        }
    }
    out
}

/// Exact dual predictable projection of an adapted finite-variation
/// process starting at zero: cumulative conditional expectations of the
/// increments given each previous stage.
pub fn predictable_compensator_discrete(
    a: &DiscreteProcess,
    space: &FiniteSpace,
) -> Result<DiscreteProcess, FiniteError> {
    a.is_adapted(space)?;
    let weights = space.weights();
    let atoms = space.atom_count();
    let stages = space.stage_count();
    let mut out = vec![vec![Q::zero(); stages]; atoms];
    for j in 1..stages {
        let inc: Vec<Q> = (0..atoms).map(|at| a.increment(at, j)).collect();
        let proj = conditional_expectation(&inc, &space.partitions[j - 1], &weights)?;
        for at in 0..atoms {
            out[at][j] = &out[at][j - 1] + &proj[at];
        }
    }
    Ok(DiscreteProcess::from_rows(out))
}

/// Exact martingale check of an adapted process under the given weights:
/// on every positive-weight cell, the conditional expectation of the next
/// stage must equal the current value. Returns the pass flag and the
/// largest absolute violation.
pub fn martingale_check_exact(
    x: &DiscreteProcess,
    space: &FiniteSpace,
    weights: &[Q],
) -> (bool, f64) {
    let mut max_violation = Q::zero();
    for j in 0..space.stage_count() - 1 {
        let next = x.stage_column(j + 1);
        let proj = conditional_expectation_lenient(&next, &space.partitions[j], weights);
        for cell in &space.partitions[j] {
            let mass: Q = cell.iter().map(|&a| weights[a].clone()).sum();
            if mass.is_zero() {
                continue;
            }
            for &a in cell {
                let v = (&proj[a] - &x.values[a][j]).abs();
                if v > max_violation {
                    max_violation = v;
                }
            }
        }
    }
    (max_violation.is_zero(), max_violation.to_f64().unwrap())
}

// ---------------------------------------------------------------------------
// Exact linear algebra.
// ---------------------------------------------------------------------------

/// Rank of a rational matrix (rows of equal length) by Gaussian
/// elimination.
pub fn rank(mut rows: Vec<Vec<Q>>) -> usize {
    let nrows = rows.len();
    if nrows == 0 {
        return 0;
    }
    let ncols = rows[0].len();
    let mut r = 0;
    for c in 0..ncols {
        let Some(pivot) = (r..nrows).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, pivot);
        let pv = rows[r][c].clone();
        for i in 0..nrows {
            if i != r && !rows[i][c].is_zero() {
                let factor = &rows[i][c] / &pv;
                for k in c..ncols {
                    let sub = &factor * &rows[r][k];
                    rows[i][k] = &rows[i][k] - sub;
                }
            }
        }
        r += 1;
        if r == nrows {
            break;
        }
    }
    r
}

/// Solve `A x = b` exactly if consistent (free variables set to zero).
pub fn solve_exact(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let nrows = a.len();
    let ncols = if nrows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..nrows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let pv = m[r][c].clone();
        for k in c..=ncols {
            m[r][k] = &m[r][k] / &pv;
        }
        for i in 0..nrows {
            if i != r && !m[i][c].is_zero() {
                let factor = m[i][c].clone();
                for k in c..=ncols {
                    let sub = &factor * &m[r][k];
                    m[i][k] = &m[i][k] - sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == nrows {
            break;
        }
    }
    // Inconsistent if a zeroed row keeps a nonzero right-hand side.
    for row in m.iter().skip(r) {
        if !row[ncols].is_zero() {
            return None;
        }
    }
    let mut x = vec![Q::zero(); ncols];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = m[i][ncols].clone();
    }
    Some(x)
}

/// Minimal number of generators of the stable family spanned by the basis
/// components under the given weights: the maximum, over filtration
/// transitions and positive-weight cells, of the rank of the basis
/// increment vectors restricted to the cell's surviving atoms.
pub fn dimension_check(
    space: &FiniteSpace,
    basis: &[&DiscreteProcess],
    weights: &[Q],
) -> usize {
    let mut d = 0;
    for j in 1..space.stage_count() {
        for cell in &space.partitions[j - 1] {
            let alive: Vec<usize> = cell
                .iter()
                .copied()
                .filter(|&a| !weights[a].is_zero())
                .collect();
            if alive.is_empty() {
                continue;
            }
            let rows: Vec<Vec<Q>> = basis
                .iter()
                .map(|x| alive.iter().map(|&a| x.increment(a, j)).collect())
                .collect();
            d = d.max(rank(rows));
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Measure-change machinery on the oracle.
// ---------------------------------------------------------------------------

/// Per-atom stage index of the density's jump to zero from a positive
/// value, if any.
pub fn eta_stage(z: &DiscreteProcess, atom: usize) -> Option<usize> {
    let row = &z.values[atom];
    for j in 0..row.len() {
        if row[j].is_zero() {
            return if j > 0 && !row[j - 1].is_zero() { Some(j) } else { None };
        }
    }
    None
}

/// The raw jump process `dX_eta 1_{[eta, inf)}` of a component.
pub fn jump_at_eta(
    x: &DiscreteProcess,
    z: &DiscreteProcess,
    space: &FiniteSpace,
) -> DiscreteProcess {
    let stages = space.stage_count();
    let mut out = vec![vec![Q::zero(); stages]; space.atom_count()];
    for a in 0..space.atom_count() {
        if let Some(j) = eta_stage(z, a) {
            let jump = x.increment(a, j);
            for s in j..stages {
                out[a][s] = jump.clone();
            }
        }
    }
    DiscreteProcess::from_rows(out)
}

/// Exact measure-change transform on the oracle:
/// `Xhat = X - sum (1/Z_s) dX_s dZ_s + (dX_eta 1_{[eta, inf)})^p`.
/// Correction accumulation stops on an atom once its density is dead (the
/// values there are irrelevant under the reweighted measure but stay
/// finite).
pub fn lenglart_discrete(
    x: &DiscreteProcess,
    z: &DiscreteProcess,
    space: &FiniteSpace,
) -> Result<DiscreteProcess, FiniteError> {
    let comp = predictable_compensator_discrete(&jump_at_eta(x, z, space), space)?;
    let stages = space.stage_count();
    let mut out = vec![vec![Q::zero(); stages]; space.atom_count()];
    for a in 0..space.atom_count() {
        let mut corr = Q::zero();
        for j in 0..stages {
            if j > 0 {
                let dx = x.increment(a, j);
                let dz = z.increment(a, j);
                let prod = &dx * &dz;
                if !prod.is_zero() && !z.values[a][j].is_zero() {
                    corr += prod / &z.values[a][j];
                }
            }
            out[a][j] = &x.values[a][j] - &corr + &comp.values[a][j];
        }
    }
    Ok(DiscreteProcess::from_rows(out))
}

/// Pathwise bracket `[X, Y]` on the oracle (every stage transition is an
/// exact jump product).
pub fn bracket_discrete(
    x: &DiscreteProcess,
    y: &DiscreteProcess,
    space: &FiniteSpace,
) -> DiscreteProcess {
    let stages = space.stage_count();
    let mut out = vec![vec![Q::zero(); stages]; space.atom_count()];
    for a in 0..space.atom_count() {
        for j in 1..stages {
            let prod = x.increment(a, j) * y.increment(a, j);
            out[a][j] = &out[a][j - 1] + prod;
        }
    }
    DiscreteProcess::from_rows(out)
}

/// Strong-orthogonality verdict for a pair on the oracle: the sup of
/// |[X, Y]| over positive-weight atoms, and whether it is zero.
pub fn strong_orthogonality_discrete(
    x: &DiscreteProcess,
    y: &DiscreteProcess,
    space: &FiniteSpace,
    weights: &[Q],
) -> (bool, f64) {
    let b = bracket_discrete(x, y, space);
    let mut sup = Q::zero();
    for a in 0..space.atom_count() {
        if weights[a].is_zero() {
            continue;
        }
        for j in 0..space.stage_count() {
            let v = b.values[a][j].abs();
            if v > sup {
                sup = v;
            }
        }
    }
    (sup.is_zero(), sup.to_f64().unwrap())
}

// ---------------------------------------------------------------------------
// Exact martingale representation.
// ---------------------------------------------------------------------------

/// Predictable integrand table: `coeffs[i][atom][stage]` multiplies the
/// increment of basis component `i` into each stage.
#[derive(Debug, Clone)]
pub struct DiscreteIntegrand {
    pub coeffs: Vec<Vec<Vec<Q>>>,
}

impl DiscreteIntegrand {
    pub fn zero(space: &FiniteSpace, basis_len: usize) -> Self {
        Self {
            coeffs: vec![
                vec![vec![Q::zero(); space.stage_count()]; space.atom_count()];
                basis_len
            ],
        }
    }

    /// The integral `sum_i (coeffs_i . X_i)` as a process started at zero.
    pub fn integrate(&self, basis: &[&DiscreteProcess], space: &FiniteSpace) -> DiscreteProcess {
        let stages = space.stage_count();
        let mut out = vec![vec![Q::zero(); stages]; space.atom_count()];
        for a in 0..space.atom_count() {
            for j in 1..stages {
                let mut inc = Q::zero();
                for (i, x) in basis.iter().enumerate() {
                    inc += &self.coeffs[i][a][j] * x.increment(a, j);
                }
                out[a][j] = &out[a][j - 1] + inc;
            }
        }
        DiscreteProcess::from_rows(out)
    }
}

/// Exact representation of a process against a basis: per transition and
/// per cell of the previous partition, solve for predictable coefficients
/// matching the target increments on every positive-weight atom.
pub fn solve_representation(
    target: &DiscreteProcess,
    basis: &[&DiscreteProcess],
    space: &FiniteSpace,
    weights: &[Q],
) -> Result<DiscreteIntegrand, FiniteError> {
    let mut k = DiscreteIntegrand::zero(space, basis.len());
    for j in 1..space.stage_count() {
        for cell in &space.partitions[j - 1] {
            let alive: Vec<usize> = cell
                .iter()
                .copied()
                .filter(|&a| !weights[a].is_zero())
                .collect();
            if alive.is_empty() {
                continue;
            }
            let a_mat: Vec<Vec<Q>> = alive
                .iter()
                .map(|&at| basis.iter().map(|x| x.increment(at, j)).collect())
                .collect();
            let b: Vec<Q> = alive.iter().map(|&at| target.increment(at, j)).collect();
            let coeff = solve_exact(&a_mat, &b).ok_or(FiniteError::NotRepresentable(j))?;
            for (i, c) in coeff.into_iter().enumerate() {
                for &at in cell {
                    k.coeffs[i][at][j] = c.clone();
                }
            }
        }
    }
    Ok(k)
}

/// The constructive measure-change integrand
/// `phi = (1/Z_-) (K - N_- H)` componentwise, on the stages where the
/// previous-stage density is positive.
pub fn construct_integrand_discrete(
    h: &DiscreteIntegrand,
    k: &DiscreteIntegrand,
    z: &DiscreteProcess,
    n: &DiscreteProcess,
    space: &FiniteSpace,
) -> DiscreteIntegrand {
    let basis_len = h.coeffs.len();
    let mut phi = DiscreteIntegrand::zero(space, basis_len);
    for i in 0..basis_len {
        for a in 0..space.atom_count() {
            for j in 1..space.stage_count() {
                let z_prev = &z.values[a][j - 1];
                if z_prev.is_zero() {
                    continue;
                }
                let n_prev = &n.values[a][j - 1];
                phi.coeffs[i][a][j] =
                    (&k.coeffs[i][a][j] - n_prev * &h.coeffs[i][a][j]) / z_prev;
            }
        }
    }
    phi
}

/// Residual `sup |N - N_0 - phi . Xhat|` over positive-weight atoms.
pub fn verify_representation_discrete(
    n: &DiscreteProcess,
    phi: &DiscreteIntegrand,
    basis_hat: &[&DiscreteProcess],
    space: &FiniteSpace,
    weights: &[Q],
) -> Q {
    let integral = phi.integrate(basis_hat, space);
    let mut sup = Q::zero();
    for a in 0..space.atom_count() {
        if weights[a].is_zero() {
            continue;
        }
        for j in 0..space.stage_count() {
            let v = (&n.values[a][j] - &n.values[a][0] - &integral.values[a][j]).abs();
            if v > sup {
                sup = v;
            }
        }
    }
    sup
}

// ---------------------------------------------------------------------------
// The two-flag example space.
// ---------------------------------------------------------------------------

/// Atoms of the two-independent-flags space, in table order.
pub const TWO_COIN_ATOMS: [&str; 4] = ["e1+", "e1-", "e0+", "e0-"];

/// The four-atom space of two independent flags revealed at time 1: a
/// Bernoulli(p) flag `eps` and a fair sign `xi`. Stages are 0, 1- and 1;
/// nothing is observable before the jump, so the 1- partition is trivial.
///
/// Processes: `X = 1 + eps*xi 1_{t>=1}` and `Y = 1 + (1-eps)*xi 1_{t>=1}`
/// are strongly orthogonal martingales (their jump supports are disjoint);
/// `U = (eps - p) 1_{t>=1}` completes them to a full-rank basis. The
/// density `Z = X` kills the atom `(eps=1, xi=-1)`.
pub struct TwoCoinSpace {
    pub space: FiniteSpace,
    pub x: DiscreteProcess,
    pub y: DiscreteProcess,
    pub u: DiscreteProcess,
    pub p: Q,
}

pub fn two_coin_space(p: Q) -> TwoCoinSpace {
    assert!(p > Q::zero() && p < Q::one());
    let half = q(1, 2);
    let weights = [
        &p * &half,
        &p * &half,
        (Q::one() - &p) * &half,
        (Q::one() - &p) * &half,
    ];
    let atoms: Vec<Atom> = TWO_COIN_ATOMS
        .iter()
        .zip(weights.iter())
        .map(|(id, w)| Atom { id: (*id).to_string(), weight: w.clone() })
        .collect();
    let stages = vec![
        Stage { label: "0".into(), time: 0.0, predictable: false },
        Stage { label: "1-".into(), time: 1.0, predictable: true },
        Stage { label: "1".into(), time: 1.0, predictable: false },
    ];
    let partitions = vec![
        vec![vec![0, 1, 2, 3]],
        vec![vec![0, 1, 2, 3]],
        vec![vec![0], vec![1], vec![2], vec![3]],
    ];
    let space = FiniteSpace::new(atoms, stages, partitions).unwrap();

    let eps = [1i64, 1, 0, 0];
    let xi = [1i64, -1, 1, -1];
    let row = |f: &dyn Fn(usize) -> Q| -> Vec<Vec<Q>> {
        (0..4)
            .map(|a| vec![Q::one(), Q::one(), Q::one() + f(a)])
            .collect()
    };
    let x = DiscreteProcess::from_rows(row(&|a| q_int(eps[a] * xi[a])));
    let y = DiscreteProcess::from_rows(row(&|a| q_int((1 - eps[a]) * xi[a])));
    let u = DiscreteProcess::from_rows(
        (0..4)
            .map(|a| vec![Q::zero(), Q::zero(), q_int(eps[a]) - p.clone()])
            .collect(),
    );
    TwoCoinSpace { space, x, y, u, p }
}

/// A three-step binary-split space with a random-walk driver: dimension 1
/// under every equivalent reweighting.
pub fn binary_walk_space() -> (FiniteSpace, DiscreteProcess) {
    let n_atoms = 8usize;
    let atoms: Vec<Atom> = (0..n_atoms)
        .map(|a| Atom { id: format!("b{a:03b}"), weight: q(1, 8) })
        .collect();
    let stages = (0..4)
        .map(|j| Stage { label: format!("{j}"), time: j as f64, predictable: false })
        .collect();
    let mut partitions = Vec::new();
    for j in 0..4usize {
        let cells: Vec<Vec<usize>> = (0..(1usize << j))
            .map(|c| {
                (0..n_atoms)
                    .filter(|&a| a >> (3 - j) == c)
                    .collect::<Vec<usize>>()
            })
            .collect();
        partitions.push(cells);
    }
    let space = FiniteSpace::new(atoms, stages, partitions).unwrap();
    // Walk: steps +1/-1 from the bits, most significant first.
    let rows: Vec<Vec<Q>> = (0..n_atoms)
        .map(|a| {
            let mut v = vec![Q::zero()];
            let mut acc = 0i64;
            for j in 0..3 {
                let bit = (a >> (2 - j)) & 1;
                acc += if bit == 1 { 1 } else { -1 };
                v.push(q_int(acc));
            }
            v
        })
        .collect();
    (space, DiscreteProcess::from_rows(rows))
}

// ---------------------------------------------------------------------------
// Structured text format.
// ---------------------------------------------------------------------------

/// A parsed space file: the space plus its named process tables.
pub struct SpaceFile {
    pub space: FiniteSpace,
    pub processes: BTreeMap<String, DiscreteProcess>,
}

/// Parse a rational literal: `3/10`, `-2/5`, `1`, or an exact decimal
/// like `0.3` (digits over a power of ten).
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        let i: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits.parse().ok()?
        };
        let f: BigInt = if frac_part.is_empty() {
            BigInt::zero()
        } else {
            frac_part.parse().ok()?
        };
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let magnitude = i * &scale + f;
        let signed = if negative { -magnitude } else { magnitude };
        return Some(BigRational::new(signed, scale));
    }
    let n: BigInt = s.parse().ok()?;
    Some(BigRational::from_integer(n))
}

/// Parse the structured text format (see `docs/finite-space-format.md` in
/// the repository for the grammar): `atom`, `stage`, `partition` and
/// `process` lines, `#` comments.
pub fn parse_space_file(text: &str) -> Result<SpaceFile, FiniteError> {
    let err = |line: usize, message: &str| FiniteError::Parse {
        line,
        message: message.to_string(),
    };
    let mut atoms: Vec<Atom> = Vec::new();
    let mut stages: Vec<Stage> = Vec::new();
    let mut partition_lines: Vec<(usize, String, String)> = Vec::new();
    let mut process_lines: Vec<(usize, String, String, Vec<String>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        match keyword {
            "atom" => {
                let id = parts.next().ok_or_else(|| err(lineno + 1, "atom needs an id"))?;
                let w = parts
                    .next()
                    .and_then(parse_rational)
                    .ok_or_else(|| err(lineno + 1, "atom needs a rational weight"))?;
                atoms.push(Atom { id: id.to_string(), weight: w });
            }
            "stage" => {
                let label =
                    parts.next().ok_or_else(|| err(lineno + 1, "stage needs a label"))?;
                let time: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(lineno + 1, "stage needs a time"))?;
                let predictable = matches!(parts.next(), Some("pre"));
                stages.push(Stage { label: label.to_string(), time, predictable });
            }
            "partition" => {
                let label = parts
                    .next()
                    .ok_or_else(|| err(lineno + 1, "partition needs a stage label"))?;
                let rest = line
                    .splitn(3, char::is_whitespace)
                    .nth(2)
                    .unwrap_or("")
                    .to_string();
                partition_lines.push((lineno + 1, label.to_string(), rest));
            }
            "process" => {
                let name =
                    parts.next().ok_or_else(|| err(lineno + 1, "process needs a name"))?;
                let atom = parts
                    .next()
                    .ok_or_else(|| err(lineno + 1, "process needs an atom id"))?;
                let vals: Vec<String> = parts.map(str::to_string).collect();
                process_lines.push((lineno + 1, name.to_string(), atom.to_string(), vals));
            }
            other => return Err(err(lineno + 1, &format!("unknown keyword '{other}'"))),
        }
    }

    let find_atom = |id: &str| atoms.iter().position(|a| a.id == id);
    let mut partitions: Vec<Vec<Vec<usize>>> = vec![Vec::new(); stages.len()];
    for (lineno, label, cells_text) in partition_lines {
        let stage_idx = stages
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| err(lineno, &format!("unknown stage '{label}'")))?;
        let mut cells = Vec::new();
        for cell_text in cells_text.split('|') {
            let cell: Option<Vec<usize>> = cell_text.split_whitespace().map(find_atom).collect();
            let cell = cell.ok_or_else(|| err(lineno, "unknown atom id in partition"))?;
            if !cell.is_empty() {
                cells.push(cell);
            }
        }
        partitions[stage_idx] = cells;
    }
    for (j, p) in partitions.iter().enumerate() {
        if p.is_empty() {
            return Err(err(0, &format!("missing partition for stage '{}'", stages[j].label)));
        }
    }

    let n_atoms = atoms.len();
    let n_stages = stages.len();
    let space = FiniteSpace::new(atoms, stages, partitions)?;

    let mut processes: BTreeMap<String, DiscreteProcess> = BTreeMap::new();
    for (lineno, name, atom, vals) in process_lines {
        let a = space
            .atom_index(&atom)
            .ok_or_else(|| err(lineno, &format!("unknown atom '{atom}'")))?;
        if vals.len() != n_stages {
            return Err(err(
                lineno,
                &format!("expected {n_stages} values, got {}", vals.len()),
            ));
        }
        let row: Option<Vec<Q>> = vals.iter().map(|v| parse_rational(v)).collect();
        let row = row.ok_or_else(|| err(lineno, "bad rational value"))?;
        let entry = processes.entry(name).or_insert_with(|| DiscreteProcess {
            values: vec![vec![Q::zero(); n_stages]; n_atoms],
        });
        entry.values[a] = row;
    }
    Ok(SpaceFile { space, processes })
}

/// Render a space (and optional processes) in the text format.
pub fn render_space_file(
    space: &FiniteSpace,
    processes: &BTreeMap<String, DiscreteProcess>,
) -> String {
    let mut out = String::new();
    for a in &space.atoms {
        let _ = writeln!(out, "atom {} {}", a.id, a.weight);
    }
    for s in &space.stages {
        let _ = writeln!(
            out,
            "stage {} {}{}",
            s.label,
            s.time,
            if s.predictable { " pre" } else { "" }
        );
    }
    for (j, cells) in space.partitions.iter().enumerate() {
        let rendered: Vec<String> = cells
            .iter()
            .map(|cell| {
                cell.iter()
                    .map(|&a| space.atoms[a].id.clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let _ = writeln!(out, "partition {} {}", space.stages[j].label, rendered.join(" | "));
    }
    for (name, p) in processes {
        for (a, row) in p.values.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "process {} {} {}", name, space.atoms[a].id, vals.join(" "));
        }
    }
    out
}

/// Random adapted process on a space: small rationals constant on each
/// cell, driven by a deterministic integer mixer so oracle tests are
/// reproducible without an RNG dependency.
pub fn random_adapted_process(space: &FiniteSpace, salt: u64) -> DiscreteProcess {
    let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        ((state % 17) as i64) - 8
    };
    let stages = space.stage_count();
    let mut rows = vec![vec![Q::zero(); stages]; space.atom_count()];
    for (j, cells) in space.partitions.iter().enumerate() {
        for cell in cells {
            let v = q(next(), 4);
            for &a in cell {
                rows[a][j] = v.clone();
            }
        }
    }
    DiscreteProcess::from_rows(rows)
}

/// Random nonnegative density martingale with unit start: built backwards
/// from random nonnegative terminal values by projecting onto each stage.
pub fn random_density(space: &FiniteSpace, salt: u64) -> DiscreteProcess {
    let mut state = salt.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(3);
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 9) as i64
    };
    let weights = space.weights();
    let atoms = space.atom_count();
    let stages = space.stage_count();
    let mut terminal: Vec<Q> = (0..atoms).map(|_| q(next(), 2)).collect();
    let mean: Q = terminal.iter().zip(&weights).map(|(v, w)| v * w).sum();
    if mean.is_zero() {
        terminal = vec![Q::one(); atoms];
    } else {
        for v in &mut terminal {
            *v = &*v / &mean;
        }
    }
    let mut rows = vec![vec![Q::zero(); stages]; atoms];
    for a in 0..atoms {
        rows[a][stages - 1] = terminal[a].clone();
    }
    for j in (0..stages - 1).rev() {
        let col: Vec<Q> = (0..atoms).map(|a| rows[a][j + 1].clone()).collect();
        let proj = conditional_expectation(&col, &space.partitions[j], &weights).unwrap();
        for a in 0..atoms {
            rows[a][j] = proj[a].clone();
        }
    }
    DiscreteProcess::from_rows(rows)
}
