//! Uniform symmetric grids and sampled profiles with derivatives.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric uniform grid `x_i = (i − M) h`, `i = 0..2M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    points: usize,
}

impl Grid {
    /// `points` must be odd and at least 5 so that `x = 0` is a node.
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!("grid half-width {half_width} must be positive")));
        }
        if points < 5 || points.is_multiple_of(2) {
            return Err(Error::Domain(format!("grid needs an odd point count >= 5, got {points}")));
        }
        Ok(Self { half_width, points })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Index of the node at `x = 0`.
    pub fn mid(&self) -> usize {
        (self.points - 1) / 2
    }

    pub fn step(&self) -> f64 {
        self.half_width / self.mid() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.mid() as f64) * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }
}

/// Quintic Hermite interpolation on `[0, 1]` from values, slopes and
/// curvatures at both ends (slopes and curvatures already scaled by the
/// cell width).
#[inline]
fn quintic(t: f64, f0: f64, d0: f64, s0: f64, f1: f64, d1: f64, s1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    h0 * f0 + h1 * d0 + h2 * s0 + h3 * s1 + h4 * d1 + h5 * f1
}

#[inline]
fn cubic(t: f64, f0: f64, d0: f64, f1: f64, d1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * d0 + (3.0 * t2 - 2.0 * t3) * f1 + (t3 - t2) * d1
}

/// An even function of `x` sampled on a [`Grid`] with its first three
/// derivatives.
///
/// Between nodes the value and slope use quintic Hermite interpolation,
/// the curvature cubic Hermite and the third derivative linear
/// interpolation. Beyond the grid the profile is continued with the
/// saturating tail `|x| + C − ε e^{−2(|x|−L)} / 2` that every profile of
/// the form `Φ(·, q)` approaches.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    d: [Vec<f64>; 4],
}

impl GridFunction {
    /// Builds a profile from full-grid arrays of `Φ, Φ', Φ'', Φ'''`.
    pub fn new(grid: Grid, d0: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>, d3: Vec<f64>) -> Result<Self> {
        let n = grid.points();
        if [d0.len(), d1.len(), d2.len(), d3.len()].iter().any(|&l| l != n) {
            return Err(Error::Invalid("grid function arrays must match the grid".into()));
        }
        Ok(Self { grid, d: [d0, d1, d2, d3] })
    }

    /// Samples `log cosh` and its derivatives.
    pub fn log_cosh(grid: Grid) -> Self {
        let n = grid.points();
        let mut d = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let v = log_cosh_all(grid.x(i));
            for (k, dk) in d.iter_mut().enumerate() {
                dk[i] = v[k];
            }
        }
        Self { grid, d }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x_grid(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.d[0]
    }

    /// The `k`-th derivative array, `k ≤ 3`.
    pub fn derivative(&self, k: usize) -> &[f64] {
        &self.d[k]
    }

    /// `(Φ, Φ', Φ'', Φ''')` at the grid node `i`.
    pub fn node(&self, i: usize) -> [f64; 4] {
        [self.d[0][i], self.d[1][i], self.d[2][i], self.d[3][i]]
    }

    /// Adds a constant to the values.
    pub(crate) fn shift(&mut self, c: f64) {
        for v in &mut self.d[0] {
            *v += c;
        }
    }

    /// `(Φ, Φ', Φ'', Φ''')` at an arbitrary `x`, using evenness.
    pub fn eval(&self, x: f64) -> [f64; 4] {
        let ax = x.abs();
        let mut out = self.eval_nonneg(ax);
        if x < 0.0 {
            out[1] = -out[1];
            out[3] = -out[3];
        }
        out
    }

    /// Value and first derivative only.
    pub fn eval01(&self, x: f64) -> (f64, f64) {
        let [v, d, _, _] = self.eval(x);
        (v, d)
    }

    fn eval_nonneg(&self, x: f64) -> [f64; 4] {
        let g = &self.grid;
        let h = g.step();
        let last = g.points() - 1;
        let pos = x / h + g.mid() as f64;
        if pos >= last as f64 {
            let l = g.half_width();
            let [f, d1, _, _] = self.node(last);
            let eps = (1.0 - d1).max(0.0);
            let e = (-2.0 * (x - l)).exp();
            return [
                f + (x - l) - 0.5 * eps * (1.0 - e),
                1.0 - eps * e,
                2.0 * eps * e,
                -4.0 * eps * e,
            ];
        }
        let i = (pos.floor() as usize).min(last - 1);
        let t = pos - i as f64;
        let a = self.node(i);
        let b = self.node(i + 1);
        [
            quintic(t, a[0], a[1] * h, a[2] * h * h, b[0], b[1] * h, b[2] * h * h),
            quintic(t, a[1], a[2] * h, a[3] * h * h, b[1], b[2] * h, b[3] * h * h),
            cubic(t, a[2], a[3] * h, b[2], b[3] * h),
            a[3] + t * (b[3] - a[3]),
        ]
    }
}

/// `(log cosh x, tanh x, sech² x, −2 tanh x sech² x)` computed stably.
pub fn log_cosh_all(x: f64) -> [f64; 4] {
    let ax = x.abs();
    let v = ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2;
    let t = x.tanh();
    let s = 1.0 - t * t;
    [v, t, s, -2.0 * t * s]
}

/// Values-only even profile with Catmull–Rom interpolation and constant
/// continuation beyond the grid.
#[derive(Debug, Clone)]
pub(crate) struct ValueGrid {
    grid: Grid,
    v: Vec<f64>,
}

impl ValueGrid {
    pub(crate) fn new(grid: Grid, v: Vec<f64>) -> Self {
        Self { grid, v }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let last = g.points() - 1;
        let pos = x.abs() / g.step() + g.mid() as f64;
        if pos >= last as f64 {
            return self.v[last];
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        let at = |j: isize| -> f64 {
            let j = j.clamp(0, last as isize) as usize;
            self.v[j]
        };
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        let m1 = 0.5 * (p2 - p0);
        let m2 = 0.5 * (p3 - p1);
        cubic(t, p1, m1, p2, m2)
    }
}
