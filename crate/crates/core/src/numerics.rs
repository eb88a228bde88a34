//! Quadrature rules for Gaussian expectations and a bracketing root finder.
//!
//! Every expectation over Gaussian variables in the crate is discretized
//! with the Gauss–Hermite rules built here, scaled to the standard normal
//! density.

use crate::mixture::CoupledModelSpec;
use crate::{Error, Result};

/// A one-dimensional rule for `E f(z)`, `z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(z)` under the rule.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }

    /// The same rule with nodes whose weight falls below `tol` removed
    /// and the remaining weights renormalized.
    pub fn pruned(&self, tol: f64) -> QuadratureRule {
        let (nodes, weights): (Vec<f64>, Vec<f64>) = self
            .nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w >= tol)
            .map(|(&z, &w)| (z, w))
            .unzip();
        let s: f64 = weights.iter().sum();
        QuadratureRule { nodes, weights: weights.into_iter().map(|w| w / s).collect() }
    }
}

/// Number of eigenvalues below `x` of the Jacobi matrix of the
/// probabilists' Hermite polynomials (zero diagonal, off-diagonal `√k`).
fn sturm_count(n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..n {
        let qq = if q == 0.0 { f64::EPSILON } else { q };
        q = -x - k as f64 / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Orthonormal Hermite values `(P̃_{n−1}(x), P̃_n(x), Σ_{k<n} P̃_k(x)²)`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / (k as f64 + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur, sumsq)
}

/// `n`-point Gauss–Hermite rule for the standard normal density.
///
/// Nodes are the eigenvalues of the Jacobi matrix, isolated by Sturm
/// bisection and polished by Newton steps; weights are the Christoffel
/// numbers `1 / Σ_k P̃_k(x)²`.
pub fn hermite_rule(n: usize) -> Result<QuadratureRule> {
    if !(1..=256).contains(&n) {
        return Err(Error::Domain(format!("hermite rule size {n} not in 1..=256")));
    }
    let bound = 2.0 * (n as f64).sqrt() + 1.0;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;
    // largest nodes first; the lower half follows by symmetry
    for i in 0..half {
        let target = n - 1 - i;
        let (mut lo, mut hi) = (0.0, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(n, mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..3 {
            let (pm1, pn, _) = orthonormal_hermite(n, x);
            let d = (n as f64).sqrt() * pm1;
            if d == 0.0 {
                break;
            }
            let step = pn / d;
            if !(x - step > lo && x - step < hi) {
                break;
            }
            x -= step;
        }
        nodes[target] = x;
        nodes[i] = -x;
    }
    for i in half..n - half {
        nodes[i] = 0.0;
    }
    for i in 0..n {
        let (_, _, s) = orthonormal_hermite(n, nodes[i]);
        weights[i] = 1.0 / s;
    }
    for i in 0..half {
        weights[i] = weights[n - 1 - i];
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `n`-point Gauss–Legendre rule on `[a, b]` (plain Lebesgue weight).
pub fn legendre_rule(n: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if !(1..=512).contains(&n) {
        return Err(Error::Domain(format!("legendre rule size {n} not in 1..=512")));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    let (xm, xl) = (0.5 * (b + a), 0.5 * (b - a));
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Ok(QuadratureRule { nodes, weights })
}

/// A discrete law of a pair of real random variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRule {
    pub nodes: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl PairRule {
    /// `E f(a, b)` under the rule.
    pub fn expect(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&(a, b), &w)| w * f(a, b)).sum()
    }

    /// Rule-weighted covariance triple `(E a², E b², E ab)` about zero.
    pub fn second_moments(&self) -> (f64, f64, f64) {
        let mut m = (0.0, 0.0, 0.0);
        for (&(a, b), &w) in self.nodes.iter().zip(&self.weights) {
            m.0 += w * a * a;
            m.1 += w * b * b;
            m.2 += w * a * b;
        }
        m
    }
}

/// Tensor rule for a bivariate Gaussian with the given means and
/// covariance, built from the Cholesky factor of the covariance.
///
/// Degenerate directions collapse to fewer nodes.
pub fn gaussian_pair_rule(
    mean: (f64, f64),
    var1: f64,
    var2: f64,
    cov: f64,
    base: &QuadratureRule,
) -> Result<PairRule> {
    let tol = 1e-12 * (1.0 + var1.abs() + var2.abs());
    if var1 < -tol || var2 < -tol || cov * cov > var1.max(0.0) * var2.max(0.0) + tol {
        return Err(Error::NotPsd(format!("var1={var1} var2={var2} cov={cov}")));
    }
    let (s1, s2) = (var1.max(0.0).sqrt(), var2.max(0.0).sqrt());
    let (m1, m2) = mean;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if s1 == 0.0 && s2 == 0.0 {
        nodes.push((m1, m2));
        weights.push(1.0);
    } else if s1 == 0.0 || s2 == 0.0 {
        for (&z, &w) in base.nodes.iter().zip(&base.weights) {
            nodes.push((m1 + s1 * z, m2 + s2 * z));
            weights.push(w);
        }
    } else {
        let rho = (cov / (s1 * s2)).clamp(-1.0, 1.0);
        if 1.0 - rho.abs() < 1e-14 {
            let sgn = rho.signum();
            for (&z, &w) in base.nodes.iter().zip(&base.weights) {
                nodes.push((m1 + s1 * z, m2 + sgn * s2 * z));
                weights.push(w);
            }
        } else {
            let r = (1.0 - rho * rho).sqrt();
            for (&z1, &w1) in base.nodes.iter().zip(&base.weights) {
                for (&z2, &w2) in base.nodes.iter().zip(&base.weights) {
                    nodes.push((m1 + s1 * z1, m2 + s2 * (rho * z1 + r * z2)));
                    weights.push(w1 * w2);
                }
            }
        }
    }
    Ok(PairRule { nodes, weights })
}

/// Discretization of the correlated pair `(χ¹, χ²)` with
/// `E (χ¹)² = ξ'_{1,1}(v1)`, `E (χ²)² = ξ'_{2,2}(v2)` and
/// `E χ¹χ² = ξ'_{1,2}(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPairRule {
    pub rule: PairRule,
    pub v1: f64,
    pub v2: f64,
    pub u: f64,
    pub eta: f64,
}

/// Builds `χ¹ = √a (√η w + √(1−η) w₁)` and
/// `χ² = √b (sign(u) √η w + √(1−η) w₂)` over a tensor rule in
/// `(w, w₁, w₂)`, where `a = ξ'_{1,1}(v1)`, `b = ξ'_{2,2}(v2)` and
/// `η = ξ'_{1,2}(|u|) / √(ab)`.
pub fn correlated_pair_rule(
    coupled: &CoupledModelSpec,
    v1: f64,
    v2: f64,
    u: f64,
    n: usize,
) -> Result<JointPairRule> {
    for v in [v1, v2] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("v = {v} outside (0, 1]")));
        }
    }
    if u.abs() > (v1 * v2).sqrt() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("|u| = {} exceeds sqrt(v1 v2)", u.abs())));
    }
    if !coupled.spec1.is_nontrivial() || !coupled.spec2.is_nontrivial() {
        return Err(Error::Domain("correlated pair needs nonzero mixtures".into()));
    }
    let a = coupled.xi_jj(1, 1, v1, 1);
    let b = coupled.xi_jj(2, 2, v2, 1);
    let eta = (coupled.xi_jj(1, 2, u.abs(), 1) / (a.sqrt() * b.sqrt())).clamp(0.0, 1.0);
    let sgn = if u < 0.0 { -1.0 } else { 1.0 };
    let base = hermite_rule(n)?;
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    if eta == 0.0 {
        for (&w1, &p1) in base.nodes.iter().zip(&base.weights) {
            for (&w2, &p2) in base.nodes.iter().zip(&base.weights) {
                nodes.push((sa * w1, sb * w2));
                weights.push(p1 * p2);
            }
        }
    } else if 1.0 - eta < 1e-15 {
        for (&w, &p) in base.nodes.iter().zip(&base.weights) {
            nodes.push((sa * w, sgn * sb * w));
            weights.push(p);
        }
    } else {
        let (re, rc) = (eta.sqrt(), (1.0 - eta).sqrt());
        for (&w, &p) in base.nodes.iter().zip(&base.weights) {
            for (&w1, &p1) in base.nodes.iter().zip(&base.weights) {
                for (&w2, &p2) in base.nodes.iter().zip(&base.weights) {
                    nodes.push((sa * (re * w + rc * w1), sb * (sgn * re * w + rc * w2)));
                    weights.push(p * p1 * p2);
                }
            }
        }
    }
    Ok(JointPairRule { rule: PairRule { nodes, weights }, v1, v2, u, eta })
}

/// Root of `f` on `[lo, hi]`, alternating Illinois secant steps with
/// bisection.
///
/// Returns once `|f(x)| ≤ tol` or the bracket is narrower than `tol`.
pub fn find_root(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Numerical("non-finite value at bracket end".into()));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Domain(format!("no sign change on [{lo}, {hi}]")));
    }
    let mut side = 0i8;
    for iter in 0..400 {
        if (b - a).abs() <= tol {
            break;
        }
        let secant = (a * fb - b * fa) / (fb - fa);
        let inside = secant > a.min(b) && secant < a.max(b);
        let c = if iter % 2 == 0 && inside { secant } else { 0.5 * (a + b) };
        let fc = f(c);
        if !fc.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at {c}")));
        }
        if fc.abs() <= tol || fc == 0.0 {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Standard-normal expectation of `f` using an `n`-point Hermite rule.
pub fn gauss_expect(n: usize, f: impl FnMut(f64) -> f64) -> Result<f64> {
    Ok(hermite_rule(n)?.expect(f))
}
