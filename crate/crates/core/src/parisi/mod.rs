//! The Parisi functional of a mixed even-spin model.
//!
//! A discrete order parameter is a triplet `(k, m, q)` encoding a
//! probability measure `μ` on `[0, 1]` with `μ([0, q_p]) = m_p`. The
//! functional is
//!
//! ```text
//! P_k(m, q) = log 2 + X_0 − ½ Σ_p m_p (θ(q_{p+1}) − θ(q_p))
//! ```
//!
//! where `X_0 = E A_0(h)` comes from the backward recursion
//! `A_{k+2} = log cosh`,
//! `A_p(x) = (1/m_p) log E exp(m_p A_{p+1}(x + z_p))` with independent
//! Gaussian increments of variance `ξ'(q_{p+1}) − ξ'(q_p)`. The same
//! recursion, stopped at an intermediate `q`, gives the profile `Φ_μ(·, q)`.
//!
//! Each `A_p` is tabulated on a symmetric grid together with its first
//! three derivatives, which are propagated exactly through the tilted
//! Gaussian expectations rather than by finite differences.

mod grid;
mod optimize;
mod pde;

pub use grid::{log_cosh_all, Grid, GridFunction};
pub use optimize::{minimize_functional, minimize_functional_with, MinimizeOptions, MinimizeResult};
pub use pde::{phi_pde_solve, PdeSolution};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::mixture::{FieldMarginal, MixtureSpec};
use crate::numerics::{hermite_rule, QuadratureRule};
use crate::{Error, Result};

use grid::ValueGrid;

/// Default number of Gauss–Hermite nodes per Gaussian layer.
pub const DEFAULT_QUAD_N: usize = 40;
/// Default number of grid points for level tables.
pub const DEFAULT_GRID_POINTS: usize = 4097;
/// Quadrature weights below this are dropped from inner expectations.
const PRUNE: f64 = 1e-18;

/// Discrete order parameter `(k, m, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterTriplet {
    pub k: usize,
    pub m: Vec<f64>,
    pub q: Vec<f64>,
}

impl OrderParameterTriplet {
    /// Validates `m_0 = 0 ≤ … ≤ m_{k+1} = 1` and
    /// `q_0 = 0 ≤ … ≤ q_{k+2} = 1`.
    pub fn new(m: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if m.len() < 2 || q.len() != m.len() + 1 {
            return Err(Error::Invalid(format!(
                "need m of length k+2 and q of length k+3, got {} and {}",
                m.len(),
                q.len()
            )));
        }
        let k = m.len() - 2;
        let t = Self { k, m, q };
        t.validate()?;
        Ok(t)
    }

    /// Replica-symmetric triplet `δ_c`: `k = 0`, `m = (0, 1)`, `q = (0, c, 1)`.
    pub fn rs(c: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![0.0, c, 1.0])
    }

    /// Triplet of the measure with the given `(location, mass)` atoms.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.to_vec();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || (total - 1.0).abs() > 1e-12 || atoms.iter().any(|a| a.1 < 0.0) {
            return Err(Error::Invalid("atom masses must be nonnegative and sum to 1".into()));
        }
        let mut m = vec![0.0];
        let mut q = vec![0.0];
        let mut acc = 0.0;
        for (i, &(loc, mass)) in atoms.iter().enumerate() {
            acc += mass;
            q.push(loc);
            m.push(if i + 1 == atoms.len() { 1.0 } else { acc.min(1.0) });
        }
        q.push(1.0);
        Self::new(m, q)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, q, k) = (&self.m, &self.q, self.k);
        if m.len() != k + 2 || q.len() != k + 3 {
            return Err(Error::Invalid("triplet lengths do not match k".into()));
        }
        if m[0] != 0.0 || m[k + 1] != 1.0 {
            return Err(Error::Invalid("need m_0 = 0 and m_{k+1} = 1".into()));
        }
        if q[0] != 0.0 || q[k + 2] != 1.0 {
            return Err(Error::Invalid("need q_0 = 0 and q_{k+2} = 1".into()));
        }
        if m.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Invalid(format!("m must be nondecreasing: {m:?}")));
        }
        if q.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Invalid(format!("q must be nondecreasing: {q:?}")));
        }
        Ok(())
    }

    /// Atoms `(q_p, m_p − m_{p−1})`, `p = 1..k+1`, including zero masses.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        (1..=self.k + 1).map(|p| (self.q[p], self.m[p] - self.m[p - 1])).collect()
    }

    /// `μ([0, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut v = 0.0;
        for p in 0..=self.k + 1 {
            if self.q[p] <= x {
                v = self.m[p];
            }
        }
        v
    }

    /// Canonical triplet of the same measure: zero-mass atoms dropped and
    /// atoms at equal locations merged.
    pub fn normalized(&self) -> Self {
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for (loc, mass) in self.atoms() {
            if mass <= 0.0 {
                continue;
            }
            match atoms.last_mut() {
                Some(last) if last.0 == loc => last.1 += mass,
                _ => atoms.push((loc, mass)),
            }
        }
        let mut m = vec![0.0];
        let mut q = vec![0.0];
        let mut acc = 0.0;
        for (i, &(loc, mass)) in atoms.iter().enumerate() {
            acc += mass;
            q.push(loc);
            m.push(if i + 1 == atoms.len() { 1.0 } else { acc });
        }
        q.push(1.0);
        Self { k: atoms.len() - 1, m, q }
    }

    /// Lexicographic comparison of `(m, q)`, used to break ties.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        let a = self.m.iter().chain(&self.q);
        let b = other.m.iter().chain(&other.q);
        for (x, y) in a.zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        (self.m.len() + self.q.len()).cmp(&(other.m.len() + other.q.len()))
    }
}

/// `∫₀¹ |μ([0, x]) − μ'([0, x])| dx`, computed exactly.
pub fn measure_distance(t1: &OrderParameterTriplet, t2: &OrderParameterTriplet) -> f64 {
    let mut breaks: Vec<f64> = t1.q.iter().chain(&t2.q).copied().collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
        .windows(2)
        .map(|w| (w[1] - w[0]) * (t1.cdf(w[0]) - t2.cdf(w[0])).abs())
        .sum()
}

/// Numerical resolution of the level recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParisiSettings {
    pub quad_n: usize,
    pub grid_points: usize,
}

impl Default for ParisiSettings {
    fn default() -> Self {
        Self { quad_n: DEFAULT_QUAD_N, grid_points: DEFAULT_GRID_POINTS }
    }
}

impl ParisiSettings {
    pub fn with_quad_n(quad_n: usize) -> Self {
        Self { quad_n, ..Self::default() }
    }

    /// Grid wide enough for the field and the total Gaussian variance.
    pub fn grid_for(&self, spec: &MixtureSpec, field: FieldMarginal) -> Result<Grid> {
        let half = (field.mean.abs() + 6.0 * (spec.xi(1.0, 1) + field.std * field.std).sqrt()).max(8.0);
        Grid::new(half, self.grid_points)
    }
}

/// Result of evaluating the functional at one triplet.
#[derive(Debug, Clone)]
pub struct ParisiSolution {
    pub spec: MixtureSpec,
    pub field: FieldMarginal,
    /// Canonical form of the evaluated triplet.
    pub triplet: OrderParameterTriplet,
    /// `P_k(m, q)`.
    pub value: f64,
    /// `X_0 = E A_0(h)`.
    pub x0: f64,
    /// `½ Σ m_p (θ(q_{p+1}) − θ(q_p))`.
    pub penalty: f64,
    /// `A_0, …, A_{k+2}` for the canonical triplet.
    pub level_tables: Vec<GridFunction>,
    rule: QuadratureRule,
    field_rule: QuadratureRule,
}

/// Tilted Gaussian step: the profile
/// `x ↦ (1/m) log E exp(m f(x + σz))` and its derivatives on the grid of
/// `next` (or a plain expectation when `m = 0`).
fn convolve(next: &GridFunction, grid: Grid, sigma: f64, m: f64, rule: &QuadratureRule) -> Result<GridFunction> {
    let n = grid.points();
    let mid = grid.mid();
    let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let nodes = rule.len();
    let mut vals = vec![[0.0f64; 4]; nodes];
    for i in mid..n {
        let x = grid.x(i);
        for (j, z) in rule.nodes.iter().enumerate() {
            vals[j] = next.eval(x + sigma * z);
        }
        let out = tilted_moments(&vals, &rule.weights, m)
            .ok_or_else(|| Error::Numerical(format!("tilted weights degenerate at x = {x}")))?;
        for k in 0..4 {
            d[k][i] = out[k];
        }
    }
    for i in 0..mid {
        let j = n - 1 - i;
        d[0][i] = d[0][j];
        d[1][i] = -d[1][j];
        d[2][i] = d[2][j];
        d[3][i] = -d[3][j];
    }
    d[1][mid] = 0.0;
    d[3][mid] = 0.0;
    GridFunction::new(grid, d[0].clone(), d[1].clone(), d[2].clone(), d[3].clone())
}

/// `(A, A', A'', A''')` for `A = (1/m) log Σ w_j exp(m f_j)` given
/// `(f_j, f_j', f_j'', f_j''')`.
fn tilted_moments(vals: &[[f64; 4]], w: &[f64], m: f64) -> Option<[f64; 4]> {
    if m == 0.0 {
        let mut out = [0.0; 4];
        for (v, &wj) in vals.iter().zip(w) {
            for k in 0..4 {
                out[k] += wj * v[k];
            }
        }
        return Some(out);
    }
    let fmax = vals.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    let (mut e1, mut e2, mut e3, mut e11, mut e12, mut e111) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (v, &wj) in vals.iter().zip(w) {
        let t = wj * (m * (v[0] - fmax)).exp();
        s += t;
        e1 += t * v[1];
        e2 += t * v[2];
        e3 += t * v[3];
        e11 += t * v[1] * v[1];
        e12 += t * v[1] * v[2];
        e111 += t * v[1] * v[1] * v[1];
    }
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    let (e1, e2, e3, e11, e12, e111) = (e1 / s, e2 / s, e3 / s, e11 / s, e12 / s, e111 / s);
    Some([
        fmax + s.ln() / m,
        e1,
        e2 + m * (e11 - e1 * e1),
        e3 + 3.0 * m * (e12 - e1 * e2) + m * m * (e111 - 3.0 * e11 * e1 + 2.0 * e1 * e1 * e1),
    ])
}

/// Nonnegative Gaussian increments `ξ'(q_{p+1}) − ξ'(q_p)`, `p = 0..k+1`.
fn increments(spec: &MixtureSpec, t: &OrderParameterTriplet) -> Result<Vec<f64>> {
    (0..=t.k + 1)
        .map(|p| {
            let v = spec.xi(t.q[p + 1], 1) - spec.xi(t.q[p], 1);
            if v < -1e-12 {
                Err(Error::Invalid(format!("negative variance increment {v} at level {p}")))
            } else {
                Ok(v.max(0.0))
            }
        })
        .collect()
}

/// Level tables `A_0, …, A_{k+2}` of a canonical triplet.
fn level_tables(
    spec: &MixtureSpec,
    t: &OrderParameterTriplet,
    grid: Grid,
    rule: &QuadratureRule,
) -> Result<Vec<GridFunction>> {
    let inc = increments(spec, t)?;
    let k = t.k;
    let mut tables = vec![GridFunction::log_cosh(grid); k + 3];
    // m_{k+1} = 1 on top of log cosh: E cosh(x + z) = cosh(x) e^{v/2}
    tables[k + 1].shift(0.5 * inc[k + 1]);
    for p in (0..=k).rev() {
        tables[p] = if inc[p] == 0.0 {
            tables[p + 1].clone()
        } else {
            convolve(&tables[p + 1], grid, inc[p].sqrt(), t.m[p], rule)?
        };
    }
    Ok(tables)
}

fn field_rule(field: FieldMarginal, rule: &QuadratureRule) -> QuadratureRule {
    if field.std == 0.0 {
        QuadratureRule { nodes: vec![0.0], weights: vec![1.0] }
    } else {
        rule.clone()
    }
}

/// Evaluates `P_k(m, q)` with `quad_n` nodes per Gaussian layer.
pub fn evaluate_functional(
    spec: &MixtureSpec,
    field: FieldMarginal,
    triplet: &OrderParameterTriplet,
    quad_n: usize,
) -> Result<ParisiSolution> {
    evaluate_functional_with(spec, field, triplet, &ParisiSettings::with_quad_n(quad_n))
}

/// [`evaluate_functional`] with explicit grid settings.
pub fn evaluate_functional_with(
    spec: &MixtureSpec,
    field: FieldMarginal,
    triplet: &OrderParameterTriplet,
    settings: &ParisiSettings,
) -> Result<ParisiSolution> {
    triplet.validate()?;
    let t = triplet.normalized();
    let grid = settings.grid_for(spec, field)?;
    let full = hermite_rule(settings.quad_n)?;
    let rule = full.pruned(PRUNE);
    let tables = level_tables(spec, &t, grid, &rule)?;
    let frule = field_rule(field, &full);
    let x0 = frule.expect(|g| tables[0].eval(field.mean + field.std * g)[0]);
    let penalty = 0.5
        * (1..=t.k + 1)
            .map(|p| t.m[p] * (spec.theta(t.q[p + 1]) - spec.theta(t.q[p])))
            .sum::<f64>();
    let value = std::f64::consts::LN_2 + x0 - penalty;
    if !value.is_finite() {
        return Err(Error::Numerical("functional value is not finite".into()));
    }
    Ok(ParisiSolution {
        spec: spec.clone(),
        field,
        triplet: t,
        value,
        x0,
        penalty,
        level_tables: tables,
        rule,
        field_rule: frule,
    })
}

impl ParisiSolution {
    pub fn grid(&self) -> Grid {
        *self.level_tables[0].grid()
    }

    /// `Φ_μ(·, q)` and its derivatives on the solution grid.
    pub fn profile(&self, q: f64) -> Result<GridFunction> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("q = {q} outside [0, 1]")));
        }
        let t = &self.triplet;
        if q >= 1.0 {
            return Ok(self.level_tables[t.k + 2].clone());
        }
        // bracketing level: q_p ≤ q < q_{p+1}
        let p = (0..=t.k + 1).rev().find(|&p| t.q[p] <= q).unwrap_or(0);
        let var = (self.spec.xi(t.q[p + 1], 1) - self.spec.xi(q, 1)).max(0.0);
        let next = &self.level_tables[p + 1];
        if var == 0.0 {
            return Ok(next.clone());
        }
        if p == t.k + 1 {
            // between the last atom and 1 the profile is log cosh shifted
            let mut out = next.clone();
            out.shift(0.5 * var);
            return Ok(out);
        }
        convolve(next, self.grid(), var.sqrt(), t.m[p], &self.rule)
    }

    /// `∂Φ/∂x(x, q)` evaluated through a freshly built profile.
    pub fn phi_x(&self, q: f64, x: f64) -> Result<f64> {
        Ok(self.profile(q)?.eval(x)[1])
    }

    /// Expectation over this system's field `h`.
    pub fn field_expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let fm = self.field;
        self.field_rule.expect(|g| f(fm.mean + fm.std * g))
    }
}

/// `Φ_μ(·, q_eval)` on the supplied grid via the representation formula.
pub fn phi_profile(
    spec: &MixtureSpec,
    triplet: &OrderParameterTriplet,
    q_eval: f64,
    grid: Grid,
    quad_n: usize,
) -> Result<GridFunction> {
    if !(0.0..=1.0).contains(&q_eval) {
        return Err(Error::Domain(format!("q = {q_eval} outside [0, 1]")));
    }
    triplet.validate()?;
    let t = triplet.normalized();
    let rule = hermite_rule(quad_n)?.pruned(PRUNE);
    let tables = level_tables(spec, &t, grid, &rule)?;
    let sol = ParisiSolution {
        spec: spec.clone(),
        field: FieldMarginal::zero(),
        triplet: t,
        value: f64::NAN,
        x0: f64::NAN,
        penalty: f64::NAN,
        level_tables: tables,
        rule: rule.clone(),
        field_rule: rule,
    };
    sol.profile(q_eval)
}

/// Boundary tolerance below which `q_1` counts as zero.
pub const Q1_BOUNDARY: f64 = 1e-6;

/// One stationarity residual `E W_1⋯W_{r−1} A_r'(ζ_r)² − q_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityResidual {
    /// 1-based atom index in the canonical triplet.
    pub r: usize,
    pub q_r: f64,
    pub residual: f64,
}

/// Residuals of the stationarity equations in the atom locations.
///
/// `ζ_r = h + z_0 + … + z_{r−1}` and
/// `W_p = exp(m_p (A_{p+1}(ζ_{p+1}) − A_p(ζ_p)))`; the nested expectation
/// is evaluated backwards on the grid. The atom `r = 1` is included only
/// when `q_1 ≥ 1e−6`.
pub fn stationarity_residuals(
    spec: &MixtureSpec,
    field: FieldMarginal,
    triplet: &OrderParameterTriplet,
    quad_n: usize,
) -> Result<Vec<StationarityResidual>> {
    let sol = evaluate_functional(spec, field, triplet, quad_n)?;
    sol.stationarity_residuals()
}

impl ParisiSolution {
    /// See [`stationarity_residuals`].
    pub fn stationarity_residuals(&self) -> Result<Vec<StationarityResidual>> {
        let t = &self.triplet;
        let inc = increments(&self.spec, t)?;
        let grid = self.grid();
        let n = grid.points();
        let mid = grid.mid();
        let mut out = Vec::new();
        for r in 1..=t.k + 1 {
            if (r == 1 && t.q[1] < Q1_BOUNDARY) || t.q[r] >= 1.0 {
                continue;
            }
            let a_r = &self.level_tables[r];
            let mut b = ValueGrid::new(grid, (0..n).map(|i| a_r.node(i)[1].powi(2)).collect());
            for p in (0..r).rev() {
                let sigma = inc[p].sqrt();
                let next = &self.level_tables[p + 1];
                let mut vals = vec![0.0; n];
                for i in mid..n {
                    let x = grid.x(i);
                    let mut s = 0.0;
                    let mut acc = 0.0;
                    let ys: Vec<f64> = self.rule.nodes.iter().map(|z| x + sigma * z).collect();
                    let fmax = if t.m[p] == 0.0 {
                        0.0
                    } else {
                        ys.iter().map(|&y| next.eval(y)[0]).fold(f64::NEG_INFINITY, f64::max)
                    };
                    for (&y, &w) in ys.iter().zip(&self.rule.weights) {
                        let wt = if t.m[p] == 0.0 { w } else { w * (t.m[p] * (next.eval(y)[0] - fmax)).exp() };
                        s += wt;
                        acc += wt * b.eval(y);
                    }
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numerical(format!("change-of-measure weights underflow at level {p}")));
                    }
                    vals[i] = acc / s;
                }
                for i in 0..mid {
                    vals[i] = vals[n - 1 - i];
                }
                b = ValueGrid::new(grid, vals);
            }
            let e = self.field_expect(|h| b.eval(h));
            out.push(StationarityResidual { r, q_r: t.q[r], residual: e - t.q[r] });
        }
        Ok(out)
    }
}
