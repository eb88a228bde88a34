//! Two-system Guerra bounds on the coupled free energy
//!
//! ```text
//! p_{N,u} = (1/N) E log Σ_{R(σ,τ)=u} exp(H¹(σ) + H²(τ)).
//! ```
//!
//! [`coupled_rsb_bound`] evaluates the replica-symmetry-breaking bound for a
//! schedule `(κ, n, ρ)` and a Lagrange parameter `λ`. The auxiliary `Y_0(λ)`
//! is computed by nested quadrature over the correlated level pairs
//! `(y_p¹, y_p²)` without interpolation, so the computed `Y_0` is exactly
//! the functional of a discrete model and inherits `0 ≤ Y_0'' ≤ 1`.
//!
//! [`manageable_bound`] and [`chaos_band_bound`] are the closed-form
//! consequences built from two single-system Parisi solutions and the map
//! `φ` of [`crate::chaos`].

use serde::Serialize;

use crate::chaos::{CouplingMap, COUPLING_QUAD_N};
use crate::mixture::CoupledModelSpec;
use crate::numerics::{gaussian_pair_rule, hermite_rule, legendre_rule, PairRule, QuadratureRule};
use crate::parisi::{evaluate_functional, OrderParameterTriplet, ParisiSolution, DEFAULT_QUAD_N};
use crate::{Error, Result};

/// Default Hermite nodes per axis for the nested `Y_0` quadrature.
pub const DEFAULT_Y0_QUAD_N: usize = 8;
const PSD_TOL: f64 = 1e-12;
const LAMBDA_RANGE: f64 = 30.0;

/// Schedule of the coupled bound: `n_0 = 0 ≤ … ≤ n_κ = 1` and four overlap
/// paths `ρ^{1,1}, ρ^{2,2}, ρ^{1,2}, ρ^{2,1}` of length `κ + 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledBoundParams {
    kappa: usize,
    n: Vec<f64>,
    rho: [Vec<f64>; 4],
    /// Per-level covariances `(Δ11, Δ22, Δ12)`, `p = 0..=κ`.
    increments: Vec<(f64, f64, f64)>,
}

impl CoupledBoundParams {
    /// Validates the orderings, the end points and that every level
    /// covariance is positive semidefinite.
    pub fn new(
        coupled: &CoupledModelSpec,
        n: Vec<f64>,
        rho11: Vec<f64>,
        rho22: Vec<f64>,
        rho12: Vec<f64>,
        rho21: Vec<f64>,
    ) -> Result<Self> {
        if n.len() < 2 {
            return Err(Error::Invalid("kappa must be at least 1".into()));
        }
        let kappa = n.len() - 1;
        if n[0] != 0.0 || n[kappa] != 1.0 || n.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Invalid(format!("n must increase from 0 to 1: {n:?}")));
        }
        let rho = [rho11, rho22, rho12, rho21];
        if rho.iter().any(|r| r.len() != kappa + 2) {
            return Err(Error::Invalid(format!("rho paths need kappa + 2 = {} entries", kappa + 2)));
        }
        if rho.iter().any(|r| r[0] != 0.0 || r.iter().any(|x| !(x.abs() <= 1.0))) {
            return Err(Error::Invalid("rho paths must start at 0 and stay in [-1, 1]".into()));
        }
        if rho[0][kappa + 1] != 1.0 || rho[1][kappa + 1] != 1.0 {
            return Err(Error::Invalid("diagonal rho paths must end at 1".into()));
        }
        if rho[2][kappa + 1] != rho[3][kappa + 1] {
            return Err(Error::Invalid("cross rho paths must end at the same u".into()));
        }
        let mut increments = Vec::with_capacity(kappa + 1);
        for p in 0..=kappa {
            let d = |j: usize, jp: usize, r: &[f64]| coupled.xi_jj(j, jp, r[p + 1], 1) - coupled.xi_jj(j, jp, r[p], 1);
            let d11 = d(1, 1, &rho[0]);
            let d22 = d(2, 2, &rho[1]);
            let d12 = d(1, 2, &rho[2]);
            let d21 = d(2, 1, &rho[3]);
            if (d12 - d21).abs() > PSD_TOL {
                return Err(Error::Invalid(format!("level {p}: cross covariances differ ({d12} vs {d21})")));
            }
            let tr = d11 + d22;
            let det = d11 * d22 - d12 * d12;
            let disc = (0.25 * (d11 - d22).powi(2) + d12 * d12).sqrt();
            let eig_min = 0.5 * tr - disc;
            if eig_min < -PSD_TOL || det < -PSD_TOL {
                return Err(Error::NotPsd(format!("level {p}: covariance [[{d11}, {d12}], [{d12}, {d22}]]")));
            }
            increments.push((d11.max(0.0), d22.max(0.0), d12));
        }
        Ok(Self { kappa, n, rho, increments })
    }

    /// The schedule that turns the coupled bound into the manageable bound:
    /// `κ = k − ι + 2`, `n = (0, m_ι, …, m_{k+1})`,
    /// `ρ^{j,j} = (0, q^j_ι, …, q^j_{k+2})` and `ρ^{1,2} = ρ^{2,1} = (0, u, …, u)`.
    pub fn manageable(
        coupled: &CoupledModelSpec,
        t1: &OrderParameterTriplet,
        t2: &OrderParameterTriplet,
        iota: usize,
        u: f64,
    ) -> Result<Self> {
        check_shared(t1, t2, iota)?;
        let k = t1.k;
        let kappa = k - iota + 2;
        let mut n = vec![0.0];
        n.extend_from_slice(&t1.m[iota..=k + 1]);
        let path = |t: &OrderParameterTriplet| {
            let mut r = vec![0.0];
            r.extend_from_slice(&t.q[iota..=k + 2]);
            r
        };
        let mut cross = vec![u; kappa + 2];
        cross[0] = 0.0;
        Self::new(coupled, n, path(t1), path(t2), cross.clone(), cross)
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn n(&self) -> &[f64] {
        &self.n
    }

    /// Path `ρ^{j,j'}` for `j, j' ∈ {1, 2}`.
    pub fn rho(&self, j: usize, jp: usize) -> &[f64] {
        match (j, jp) {
            (1, 1) => &self.rho[0],
            (2, 2) => &self.rho[1],
            (1, 2) => &self.rho[2],
            _ => &self.rho[3],
        }
    }

    /// The cross end point `u`.
    pub fn u(&self) -> f64 {
        self.rho[2][self.kappa + 1]
    }
}

fn check_shared(t1: &OrderParameterTriplet, t2: &OrderParameterTriplet, iota: usize) -> Result<()> {
    t1.validate()?;
    t2.validate()?;
    if t1.k != t2.k || t1.m.iter().zip(&t2.m).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Invalid("triplets must share k and m".into()));
    }
    if iota == 0 || iota > t1.k + 1 {
        return Err(Error::Domain(format!("iota = {iota} outside 1..={}", t1.k + 1)));
    }
    Ok(())
}

#[inline]
fn log_sum_exp4(v: [f64; 4]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Nested evaluator of `Y_0(λ)` for fixed params.
struct Y0Tree<'a> {
    params: &'a CoupledBoundParams,
    rules: Vec<PairRule>,
}

impl<'a> Y0Tree<'a> {
    fn new(coupled: &CoupledModelSpec, params: &'a CoupledBoundParams, quad_n: usize) -> Result<Self> {
        let base = hermite_rule(quad_n)?.pruned(1e-16);
        let f = &coupled.field;
        let mut rules = Vec::with_capacity(params.kappa);
        // level 0 merged with the fields; levels 1..κ−1 centered; level κ in closed form
        for p in 0..params.kappa {
            let (d11, d22, d12) = params.increments[p];
            let (mean, v1, v2, c) = if p == 0 {
                ((f.mean1, f.mean2), d11 + f.std1 * f.std1, d22 + f.std2 * f.std2, d12 + f.cross_cov())
            } else {
                ((0.0, 0.0), d11, d22, d12)
            };
            let lim = (v1 * v2).sqrt();
            rules.push(gaussian_pair_rule(mean, v1, v2, c.clamp(-lim, lim), &base)?);
        }
        Ok(Self { params, rules })
    }

    /// `Y_κ(a, b) = log E exp Y_{κ+1}(a + y¹, b + y²)` in closed form.
    fn top(&self, a: f64, b: f64, lambda: f64) -> f64 {
        let (d11, d22, d12) = self.params.increments[self.params.kappa];
        let s = 0.5 * (d11 + d22);
        log_sum_exp4([
            a + b + lambda + s + d12,
            -a - b + lambda + s + d12,
            a - b - lambda + s - d12,
            -a + b - lambda + s - d12,
        ]) - 4f64.ln()
    }

    fn level(&self, p: usize, a: f64, b: f64, lambda: f64) -> f64 {
        if p == self.params.kappa {
            return self.top(a, b, lambda);
        }
        let r = &self.rules[p];
        let m = if p == 0 { 0.0 } else { self.params.n[p] };
        if m == 0.0 {
            let mut acc = 0.0;
            for (&(y1, y2), &w) in r.nodes.iter().zip(&r.weights) {
                acc += w * self.level(p + 1, a + y1, b + y2, lambda);
            }
            return acc;
        }
        let vals: Vec<f64> = r.nodes.iter().map(|&(y1, y2)| m * self.level(p + 1, a + y1, b + y2, lambda)).collect();
        let mx = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = vals.iter().zip(&r.weights).map(|(v, w)| w * (v - mx).exp()).sum();
        (mx + s.ln()) / m
    }

    fn y0(&self, lambda: f64) -> f64 {
        self.level(0, 0.0, 0.0, lambda)
    }
}

/// `Y_0(λ)` with `quad_n` Hermite nodes per axis on every nested level.
pub fn y0_recursion(
    coupled: &CoupledModelSpec,
    params: &CoupledBoundParams,
    lambda: f64,
    quad_n: usize,
) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda = {lambda} must be finite")));
    }
    Ok(Y0Tree::new(coupled, params, quad_n)?.y0(lambda))
}

/// `½ Σ_{j,j'} Σ_p n_p (θ_{j,j'}(ρ_{p+1}) − θ_{j,j'}(ρ_p))`.
fn theta_correction(coupled: &CoupledModelSpec, params: &CoupledBoundParams) -> f64 {
    let mut acc = 0.0;
    for (j, jp) in [(1, 1), (2, 2), (1, 2), (2, 1)] {
        let r = params.rho(j, jp);
        for p in 0..=params.kappa {
            acc += params.n[p] * (coupled.theta_jj(j, jp, r[p + 1]) - coupled.theta_jj(j, jp, r[p]));
        }
    }
    0.5 * acc
}

/// Value of the coupled bound together with the `λ` it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RsbBound {
    pub value: f64,
    pub lambda: f64,
}

/// `2 log 2 + Y_0(λ) − λu − ½ Σ n_p Δθ`, at `lambda` or, when `lambda` is
/// `None`, minimized over `λ ∈ [−30, 30]` by golden-section search
/// (`Y_0(λ) − λu` is convex).
pub fn coupled_rsb_bound(
    coupled: &CoupledModelSpec,
    params: &CoupledBoundParams,
    lambda: Option<f64>,
    quad_n: usize,
) -> Result<RsbBound> {
    let tree = Y0Tree::new(coupled, params, quad_n)?;
    let u = params.u();
    let base = 2.0 * std::f64::consts::LN_2 - theta_correction(coupled, params);
    let f = |l: f64| tree.y0(l) - l * u;
    let lambda = match lambda {
        Some(l) if l.is_finite() => l,
        Some(l) => return Err(Error::Domain(format!("lambda = {l} must be finite"))),
        None => golden_min(f, -LAMBDA_RANGE, LAMBDA_RANGE, 1e-7),
    };
    Ok(RsbBound { value: base + f(lambda), lambda })
}

fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Terms of a closed-form bound `P¹ + P² − penalty + extra`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub u: f64,
    pub bound: f64,
    pub p1: f64,
    pub p2: f64,
    /// `½ (φ(u) − u)²`.
    pub penalty: f64,
    /// Sub-`ι` θ sums or positive parts.
    pub extra: f64,
    pub phi: f64,
}

/// The manageable bound for two triplets sharing `m`, prepared for
/// evaluation at many `u`.
#[derive(Debug, Clone)]
pub struct ManageableBound {
    map: CouplingMap,
    p1: f64,
    p2: f64,
    extra: f64,
}

impl ManageableBound {
    pub fn new(
        coupled: &CoupledModelSpec,
        t1: &OrderParameterTriplet,
        t2: &OrderParameterTriplet,
        iota: usize,
    ) -> Result<Self> {
        check_shared(t1, t2, iota)?;
        let (v1, v2) = (t1.q[iota], t2.q[iota]);
        if !(v1 > 0.0 && v1 < 1.0 && v2 > 0.0 && v2 < 1.0) {
            return Err(Error::Domain(format!("v1 = {v1}, v2 = {v2} must lie in (0, 1)")));
        }
        let s1 = evaluate_functional(&coupled.spec1, coupled.field.marginal(1), t1, DEFAULT_QUAD_N)?;
        let s2 = evaluate_functional(&coupled.spec2, coupled.field.marginal(2), t2, DEFAULT_QUAD_N)?;
        let mut extra = 0.0;
        for (j, t) in [(1, t1), (2, t2)] {
            for p in 0..iota {
                extra += 0.5 * t.m[p] * (coupled.theta_jj(j, j, t.q[p + 1]) - coupled.theta_jj(j, j, t.q[p]));
            }
        }
        let map = CouplingMap::new(coupled, &s1, &s2, v1, v2, COUPLING_QUAD_N)?;
        Ok(Self { map, p1: s1.value, p2: s2.value, extra })
    }

    pub fn terms(&self, u: f64) -> Result<BoundTerms> {
        let phi = self.map.value(u)?;
        let penalty = 0.5 * (phi - u).powi(2);
        Ok(BoundTerms { u, bound: self.p1 + self.p2 - penalty + self.extra, p1: self.p1, p2: self.p2, penalty, extra: self.extra, phi })
    }
}

/// `P¹ + P² − ½(φ̃(u) − u)² + ½ Σ_{p<ι} m_p Δθ_{1,1} + ½ Σ_{p<ι} m_p Δθ_{2,2}`
/// with `φ̃` built from the two triplets at `v_j = q^j_ι`.
pub fn manageable_bound(
    coupled: &CoupledModelSpec,
    t1: &OrderParameterTriplet,
    t2: &OrderParameterTriplet,
    iota: usize,
    u: f64,
) -> Result<f64> {
    Ok(ManageableBound::new(coupled, t1, t2, iota)?.terms(u)?.bound)
}

/// The band bound built from minimized functionals, prepared for many `u`.
#[derive(Debug, Clone)]
pub struct ChaosBand {
    map: CouplingMap,
    p1: f64,
    p2: f64,
    extra: f64,
}

impl ChaosBand {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        coupled: &CoupledModelSpec,
        sol1: &ParisiSolution,
        sol2: &ParisiSolution,
        c1: f64,
        c2: f64,
        v1: f64,
        v2: f64,
    ) -> Result<Self> {
        for v in [v1, v2] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!("v = {v} outside (0, 1)")));
            }
        }
        let pos = |j: usize, v: f64, c: f64| (coupled.theta_jj(j, j, v) - coupled.theta_jj(j, j, c)).max(0.0);
        let extra = pos(1, v1, c1) + pos(2, v2, c2);
        let map = CouplingMap::new(coupled, sol1, sol2, v1, v2, COUPLING_QUAD_N)?;
        Ok(Self { map, p1: sol1.value, p2: sol2.value, extra })
    }

    pub fn bound(&self) -> f64 {
        self.map.bound()
    }

    pub fn terms(&self, u: f64) -> Result<BoundTerms> {
        let phi = self.map.value(u)?;
        let penalty = 0.5 * (phi - u).powi(2);
        Ok(BoundTerms { u, bound: self.p1 + self.p2 - penalty + self.extra, p1: self.p1, p2: self.p2, penalty, extra: self.extra, phi })
    }
}

/// `P¹ + P² − ½(φ_{v1,v2}(u) − u)² + (θ_{1,1}(v1) − θ_{1,1}(c1))₊ + (θ_{2,2}(v2) − θ_{2,2}(c2))₊`.
#[allow(clippy::too_many_arguments)]
pub fn chaos_band_bound(
    coupled: &CoupledModelSpec,
    sol1: &ParisiSolution,
    sol2: &ParisiSolution,
    c1: f64,
    c2: f64,
    v1: f64,
    v2: f64,
    u: f64,
) -> Result<f64> {
    Ok(ChaosBand::new(coupled, sol1, sol2, c1, c2, v1, v2)?.terms(u)?.bound)
}

/// Sign of the overlap region handled by [`identical_band_integrand`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OverlapSign {
    Positive,
    Negative,
}

/// `∫_{c_lo}^{c_hi} E F_u(h¹, h², ξ'(q)) ξ''(q) dq` for two identical
/// mixtures, where `F_u(x₁, x₂, w) = E (tanh(x₁ + z√w) ∓ tanh(x₂ ∓ z√w))²`.
pub fn identical_band_integrand(
    coupled: &CoupledModelSpec,
    c_lo: f64,
    c_hi: f64,
    sign: OverlapSign,
) -> Result<f64> {
    if !coupled.is_identical() {
        return Err(Error::Invalid("identical_band_integrand needs identical systems".into()));
    }
    if !(0.0 < c_lo && c_lo < c_hi && c_hi < 1.0) {
        return Err(Error::Domain(format!("need 0 < c_lo < c_hi < 1, got {c_lo}, {c_hi}")));
    }
    let spec = &coupled.spec1;
    let f = &coupled.field;
    let base: QuadratureRule = hermite_rule(48)?.pruned(1e-18);
    let qs = legendre_rule(32, c_lo, c_hi)?;
    let s = if sign == OverlapSign::Positive { 1.0 } else { -1.0 };
    let mut total = 0.0;
    for (&q, &wq) in qs.nodes.iter().zip(&qs.weights) {
        let w = spec.xi(q, 1);
        // (h¹ + z√w, h² ± z√w) is one bivariate Gaussian
        let (v1, v2) = (f.std1 * f.std1 + w, f.std2 * f.std2 + w);
        let lim = (v1 * v2).sqrt();
        let cov = (f.cross_cov() + s * w).clamp(-lim, lim);
        let rule = gaussian_pair_rule((f.mean1, f.mean2), v1, v2, cov, &base)?;
        let e = rule.expect(|a, b| (a.tanh() - s * b.tanh()).powi(2));
        total += wq * e * spec.xi(q, 2);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::rs_fixed_point;
    use crate::mixture::{FieldLaw, MixtureSpec};

    fn zero_coupled(field: FieldLaw) -> CoupledModelSpec {
        let z = MixtureSpec::new(vec![0.0]).unwrap();
        CoupledModelSpec::new(z.clone(), z, vec![0.0], field).unwrap()
    }

    fn simple_params(c: &CoupledModelSpec, u: f64) -> CoupledBoundParams {
        CoupledBoundParams::new(c, vec![0.0, 1.0], vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0], vec![0.0, u, u], vec![0.0, u, u])
            .unwrap()
    }

    #[test]
    fn zero_mixture_closed_forms() {
        let c = zero_coupled(FieldLaw::default());
        let p = simple_params(&c, 0.0);
        assert_eq!(y0_recursion(&c, &p, 0.0, 8).unwrap(), 0.0);
        for l in [-1.3, 0.2, 2.5] {
            let y = y0_recursion(&c, &p, l, 8).unwrap();
            assert!((y - f64::cosh(l).ln()).abs() < 1e-14);
        }
        let b = coupled_rsb_bound(&c, &p, None, 8).unwrap();
        assert!((b.value - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(b.lambda.abs() < 1e-6);
        let u: f64 = 0.5;
        let p = simple_params(&c, u);
        let b = coupled_rsb_bound(&c, &p, None, 8).unwrap();
        let entropy = 0.5 * (1.0 + u) * (1.0 + u).ln() + 0.5 * (1.0 - u) * (1.0 - u).ln();
        assert!((b.value - (2.0 * std::f64::consts::LN_2 - entropy)).abs() < 1e-12);
        assert!((b.lambda - u.atanh()).abs() < 1e-6);
    }

    #[test]
    fn params_are_validated() {
        let spec = MixtureSpec::sk(1.0).unwrap();
        let c = CoupledModelSpec::new(spec.clone(), spec, vec![1.0], FieldLaw::default()).unwrap();
        let ok = |n: Vec<f64>, r11: Vec<f64>, r12: Vec<f64>| {
            CoupledBoundParams::new(&c, n, r11.clone(), r11, r12.clone(), r12)
        };
        assert!(ok(vec![0.0, 1.0], vec![0.0, 0.4, 1.0], vec![0.0, 0.4, 0.4]).is_ok());
        assert!(matches!(ok(vec![0.0, 1.0], vec![0.0, 0.4, 1.0], vec![0.0, 0.6, 0.6]), Err(Error::NotPsd(_))));
        assert!(ok(vec![0.0, 0.5], vec![0.0, 0.4, 1.0], vec![0.0, 0.4, 0.4]).is_err());
        assert!(ok(vec![0.0, 1.0], vec![0.0, 0.4, 0.9], vec![0.0, 0.4, 0.4]).is_err());
        assert!(ok(vec![0.0, 1.0], vec![0.0, 0.4], vec![0.0, 0.4]).is_err());
    }

    #[test]
    fn independent_levels_split_into_single_systems() {
        let field = FieldLaw { mean1: 0.3, mean2: -0.2, std1: 0.4, std2: 0.5, corr: 0.7 };
        let coupled = CoupledModelSpec::new(
            MixtureSpec::new(vec![0.7, 0.3]).unwrap(),
            MixtureSpec::sk(0.9).unwrap(),
            vec![0.5, 0.5],
            field,
        )
        .unwrap();
        let t1 = OrderParameterTriplet::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 0.2, 0.5, 0.8, 1.0]).unwrap();
        let t2 = OrderParameterTriplet::new(vec![0.0, 0.3, 0.6, 1.0], vec![0.0, 0.1, 0.3, 0.7, 1.0]).unwrap();
        // n = m, ρ^{j,j} = q^j, ρ^{1,2} ≡ 0
        let zeros = vec![0.0; 5];
        let params =
            CoupledBoundParams::new(&coupled, t1.m.clone(), t1.q.clone(), t2.q.clone(), zeros.clone(), zeros).unwrap();
        let p1 = evaluate_functional(&coupled.spec1, field.marginal(1), &t1, 40).unwrap().value;
        let p2 = evaluate_functional(&coupled.spec2, field.marginal(2), &t2, 40).unwrap().value;
        let b = coupled_rsb_bound(&coupled, &params, Some(0.0), 24).unwrap();
        assert!((b.value - (p1 + p2)).abs() < 1e-9, "{} {}", b.value, p1 + p2);
    }

    fn sk_pair() -> (CoupledModelSpec, ParisiSolution, ParisiSolution, f64, f64) {
        let field = FieldLaw { mean1: 0.4, mean2: 0.3, std1: 0.5, std2: 0.6, corr: 0.3 };
        let coupled = CoupledModelSpec::new(
            MixtureSpec::sk(0.4).unwrap(),
            MixtureSpec::sk(0.5).unwrap(),
            vec![0.7],
            field,
        )
        .unwrap();
        let c1 = rs_fixed_point(&coupled.spec1, field.marginal(1));
        let c2 = rs_fixed_point(&coupled.spec2, field.marginal(2));
        let s1 = evaluate_functional(&coupled.spec1, field.marginal(1), &OrderParameterTriplet::rs(c1).unwrap(), 40)
            .unwrap();
        let s2 = evaluate_functional(&coupled.spec2, field.marginal(2), &OrderParameterTriplet::rs(c2).unwrap(), 40)
            .unwrap();
        (coupled.clone(), s1, s2, c1, c2)
    }

    #[test]
    fn manageable_bound_dominates_optimized_guerra_bound() {
        let (coupled, _, _, c1, c2) = sk_pair();
        let t1 = OrderParameterTriplet::new(vec![0.0, 0.4, 1.0], vec![0.0, c1, 0.8, 1.0]).unwrap();
        let t2 = OrderParameterTriplet::new(vec![0.0, 0.4, 1.0], vec![0.0, c2, 0.7, 1.0]).unwrap();
        let mb = ManageableBound::new(&coupled, &t1, &t2, 1).unwrap();
        let b = (c1 * c2).sqrt();
        for u in [-0.9 * b, -0.3 * b, 0.0, 0.5 * b, b] {
            let params = CoupledBoundParams::manageable(&coupled, &t1, &t2, 1, u).unwrap();
            let g = coupled_rsb_bound(&coupled, &params, None, 10).unwrap();
            let m = mb.terms(u).unwrap();
            assert!(g.value <= m.bound + 1e-6, "u={u}: {} > {}", g.value, m.bound);
            assert!(m.bound <= m.p1 + m.p2 + 1e-12);
        }
    }

    #[test]
    fn manageable_bound_penalty_vanishes_at_fixed_point() {
        let (coupled, _, _, c1, c2) = sk_pair();
        let t1 = OrderParameterTriplet::rs(c1).unwrap();
        let t2 = OrderParameterTriplet::rs(c2).unwrap();
        let mb = ManageableBound::new(&coupled, &t1, &t2, 1).unwrap();
        assert_eq!(mb.extra, 0.0);
        let b = (c1 * c2).sqrt();
        let uf = crate::numerics::find_root(|u| mb.map.value(u).unwrap() - u, -b, b, 1e-15).unwrap();
        let t = mb.terms(uf).unwrap();
        assert!(t.penalty < 1e-24);
        assert!((t.bound - t.p1 - t.p2).abs() < 1e-12);
        assert!(manageable_bound(&coupled, &t1, &t2, 1, 1.01 * b).is_err());
        assert!(manageable_bound(&coupled, &t1, &t2, 2, 0.0).is_err());
    }

    #[test]
    fn band_bound_at_fixed_point_and_positive_parts() {
        let (coupled, s1, s2, c1, c2) = sk_pair();
        let band = ChaosBand::new(&coupled, &s1, &s2, c1, c2, c1, c2).unwrap();
        let b = band.bound();
        let uf = crate::numerics::find_root(|u| band.map.value(u).unwrap() - u, -b, b, 1e-15).unwrap();
        let t = band.terms(uf).unwrap();
        assert!((t.bound - s1.value - s2.value).abs() < 1e-12);
        let wide = ChaosBand::new(&coupled, &s1, &s2, c1, c2, c1 + 0.1, c2 + 0.05).unwrap();
        assert!(wide.extra > 0.0);
        for i in 0..=10 {
            let u = -b + 2.0 * b * i as f64 / 10.0;
            let t = band.terms(u).unwrap();
            if (u - uf).abs() >= 0.1 {
                assert!(t.bound < s1.value + s2.value - 1e-3, "u={u}");
            }
        }
    }

    #[test]
    fn y0_is_convex_with_bounded_curvature() {
        let field = FieldLaw { mean1: 0.2, mean2: 0.1, std1: 0.3, std2: 0.2, corr: 0.5 };
        let coupled = CoupledModelSpec::new(
            MixtureSpec::new(vec![1.0, 0.4]).unwrap(),
            MixtureSpec::new(vec![0.8, 0.6]).unwrap(),
            vec![0.9, 0.4],
            field,
        )
        .unwrap();
        let params = CoupledBoundParams::new(
            &coupled,
            vec![0.0, 0.3, 1.0],
            vec![0.0, 0.2, 0.6, 1.0],
            vec![0.0, 0.3, 0.5, 1.0],
            vec![0.0, 0.2, 0.2, 0.2],
            vec![0.0, 0.2, 0.2, 0.2],
        )
        .unwrap();
        let d = 1e-3;
        for i in 0..=20 {
            let l = -2.0 + 0.2 * i as f64;
            let y = |x: f64| y0_recursion(&coupled, &params, x, 8).unwrap();
            let second = (y(l + d) - 2.0 * y(l) + y(l - d)) / (d * d);
            assert!((-1e-6..=1.0 + 1e-6).contains(&second), "lambda={l}: {second}");
        }
    }

    #[test]
    fn identical_band_integrand_cases() {
        let spec = MixtureSpec::new(vec![0.8, 0.3]).unwrap();
        let same = FieldLaw { mean1: 0.3, mean2: 0.3, std1: 0.5, std2: 0.5, corr: 1.0 };
        let c = CoupledModelSpec::new(spec.clone(), spec.clone(), vec![1.0, 1.0], same).unwrap();
        assert!(identical_band_integrand(&c, 0.2, 0.6, OverlapSign::Positive).unwrap().abs() < 1e-14);
        let flipped = FieldLaw { mean1: 0.3, mean2: -0.3, std1: 0.5, std2: 0.5, corr: -1.0 };
        let c = CoupledModelSpec::new(spec.clone(), spec.clone(), vec![1.0, 1.0], flipped).unwrap();
        assert!(identical_band_integrand(&c, 0.2, 0.6, OverlapSign::Negative).unwrap().abs() < 1e-14);
        let other = CoupledModelSpec::new(spec.clone(), MixtureSpec::sk(0.8).unwrap(), vec![1.0, 1.0], same).unwrap();
        assert!(identical_band_integrand(&other, 0.2, 0.6, OverlapSign::Positive).is_err());
        assert!(identical_band_integrand(&c, 0.6, 0.2, OverlapSign::Positive).is_err());
    }

    #[test]
    fn identical_band_integrand_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let spec = MixtureSpec::new(vec![0.8, 0.3]).unwrap();
        let field = FieldLaw { mean1: 0.0, mean2: 0.0, std1: 1.0, std2: 1.0, corr: 0.0 };
        let c = CoupledModelSpec::new(spec.clone(), spec.clone(), vec![1.0, 1.0], field).unwrap();
        let (lo, hi) = (0.2, 0.6);
        for sign in [OverlapSign::Positive, OverlapSign::Negative] {
            let v = identical_band_integrand(&c, lo, hi, sign).unwrap();
            assert!(v > 0.0);
            let s = if sign == OverlapSign::Positive { 1.0 } else { -1.0 };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let n = 2_000_000;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..n {
                // q uniform on [lo, hi] with weight (hi − lo)
                let q = lo + (hi - lo) * rng.gen::<f64>();
                let (h1, h2, z): (f64, f64, f64) =
                    (rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                let w = spec.xi(q, 1).sqrt();
                let x = ((h1 + z * w).tanh() - s * (h2 + s * z * w).tanh()).powi(2) * spec.xi(q, 2) * (hi - lo);
                sum += x;
                sum2 += x * x;
            }
            let mean = sum / n as f64;
            let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!((v - mean).abs() < 3.0 * se, "{v} {mean} {se}");
        }
    }
}
