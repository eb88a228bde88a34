//! Replica-symmetric consistency, the AT index, and the coupled map
//!
//! ```text
//! φ(u) = E ∂_xΦ₁(h¹ + χ¹, v1) ∂_xΦ₂(h² + χ², v2),
//! ```
//!
//! where `(χ¹, χ²)` is centered Gaussian with `E (χ^j)² = ξ'_{j,j}(v_j)`
//! and `E χ¹χ² = ξ'_{1,2}(u)`, independent of the fields. Its fixed point
//! `u_f` on `[−√(c1c2), √(c1c2)]` locates the cross overlap of two coupled
//! systems.
//!
//! The fields and the pair `(χ¹, χ²)` are merged into one bivariate
//! Gaussian before integrating.

use serde::Serialize;

use crate::mixture::{CoupledModelSpec, FieldMarginal, MixtureSpec};
use crate::numerics::{find_root, gaussian_pair_rule, hermite_rule, PairRule, QuadratureRule};
use crate::parisi::{GridFunction, OrderParameterTriplet, ParisiSolution};
use crate::{Error, Result};

/// Hermite nodes for one-dimensional RS expectations.
const RS_QUAD_N: usize = 120;
/// Hermite nodes per axis of the bivariate rule behind `φ`.
pub const COUPLING_QUAD_N: usize = 64;

fn rs_rule() -> QuadratureRule {
    hermite_rule(RS_QUAD_N).expect("fixed rule size is valid").pruned(1e-300)
}

/// `E f(h + z √(ξ'(c)))` over the field marginal and an independent `z`.
fn rs_expect(rule: &QuadratureRule, spec: &MixtureSpec, field: FieldMarginal, c: f64, f: impl Fn(f64) -> f64) -> f64 {
    let sd = (field.std * field.std + spec.xi(c, 1)).sqrt();
    rule.expect(|z| f(field.mean + sd * z))
}

fn rs_gap(rule: &QuadratureRule, spec: &MixtureSpec, field: FieldMarginal, c: f64) -> f64 {
    rs_expect(rule, spec, field, c, |y| y.tanh().powi(2)) - c
}

/// Sign changes of `g(c) = E tanh²(h + z√ξ'(c)) − c` on `[0, 1)` refined to
/// roots, scanning `cells` uniform cells. `c = 0` is included when `g(0) = 0`.
fn rs_scan(spec: &MixtureSpec, field: FieldMarginal, cells: usize) -> Vec<f64> {
    let rule = rs_rule();
    let g = |c: f64| rs_gap(&rule, spec, field, c);
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut glo = g(0.0);
    if glo == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=cells {
        let hi = i as f64 / cells as f64 * (1.0 - 1e-12);
        let ghi = g(hi);
        if glo != 0.0 && ghi != 0.0 && glo.signum() != ghi.signum() {
            if let Ok(r) = find_root(g, lo, hi, 1e-15) {
                roots.push(r);
            }
        } else if ghi == 0.0 {
            roots.push(hi);
        }
        lo = hi;
        glo = ghi;
    }
    roots
}

/// Smallest `c ∈ [0, 1)` with `c = E tanh²(h + z√ξ'(c))`.
///
/// With a vanishing field this is the trivial root `c = 0`; further roots
/// are reported by [`rs_roots`].
pub fn rs_fixed_point(spec: &MixtureSpec, field: FieldMarginal) -> f64 {
    if field.is_zero() {
        return 0.0;
    }
    rs_scan(spec, field, 256).first().copied().unwrap_or(0.0)
}

/// Every root of the RS consistency equation found by a sign-change scan
/// over 1024 cells of `[0, 1)`.
pub fn rs_roots(spec: &MixtureSpec, field: FieldMarginal) -> Vec<f64> {
    rs_scan(spec, field, 1024)
}

/// `ξ''(c) E sech⁴(h + z√ξ'(c))`; values above one signal RS instability.
pub fn at_index(spec: &MixtureSpec, field: FieldMarginal, c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Domain(format!("c = {c} outside [0, 1)")));
    }
    let rule = rs_rule();
    let e = rs_expect(&rule, spec, field, c, |y| {
        let s = 1.0 / y.cosh();
        (s * s) * (s * s)
    });
    Ok(spec.xi(c, 2) * e)
}

/// Smallest atom location with mass above `mass_tol`; falls back to the
/// heaviest atom when none qualifies.
pub fn support_min(triplet: &OrderParameterTriplet, mass_tol: f64) -> f64 {
    let atoms = triplet.normalized().atoms();
    atoms
        .iter()
        .find(|(_, w)| *w > mass_tol)
        .or_else(|| atoms.iter().max_by(|a, b| a.1.total_cmp(&b.1)))
        .map(|(q, _)| *q)
        .unwrap_or(0.0)
}

/// The map `u ↦ φ_{v1,v2}(u)` with both profiles built once.
#[derive(Debug, Clone)]
pub struct CouplingMap {
    coupled: CoupledModelSpec,
    prof1: GridFunction,
    prof2: GridFunction,
    v1: f64,
    v2: f64,
    base: QuadratureRule,
}

impl CouplingMap {
    /// Builds the profiles `Φ_j(·, v_j)` from the two Parisi solutions.
    pub fn new(
        coupled: &CoupledModelSpec,
        sol1: &ParisiSolution,
        sol2: &ParisiSolution,
        v1: f64,
        v2: f64,
        quad_n: usize,
    ) -> Result<Self> {
        for v in [v1, v2] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain(format!("v = {v} outside (0, 1]")));
            }
        }
        Ok(Self {
            coupled: coupled.clone(),
            prof1: sol1.profile(v1)?,
            prof2: sol2.profile(v2)?,
            v1,
            v2,
            base: hermite_rule(quad_n)?.pruned(1e-18),
        })
    }

    /// `√(v1 v2)`, the half-width of the admissible interval.
    pub fn bound(&self) -> f64 {
        (self.v1 * self.v2).sqrt()
    }

    fn rule(&self, u: f64) -> Result<PairRule> {
        let b = self.bound();
        if u.abs() > b * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("|u| = {} exceeds sqrt(v1 v2) = {b}", u.abs())));
        }
        let f = &self.coupled.field;
        let var1 = f.std1 * f.std1 + self.coupled.xi_jj(1, 1, self.v1, 1);
        let var2 = f.std2 * f.std2 + self.coupled.xi_jj(2, 2, self.v2, 1);
        let cov = f.cross_cov() + self.coupled.xi_jj(1, 2, u, 1);
        // clip roundoff past the Cauchy–Schwarz boundary
        let lim = (var1 * var2).sqrt();
        gaussian_pair_rule((f.mean1, f.mean2), var1, var2, cov.clamp(-lim, lim), &self.base)
    }

    /// `φ(u)`.
    pub fn value(&self, u: f64) -> Result<f64> {
        let r = self.rule(u)?;
        Ok(r.expect(|a, b| self.prof1.eval(a)[1] * self.prof2.eval(b)[1]))
    }

    /// `ξ''_{1,2}(u) E ∂²_xΦ₁ ∂²_xΦ₂`, the derivative of `φ` by Gaussian
    /// integration by parts.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        let r = self.rule(u)?;
        let e = r.expect(|a, b| self.prof1.eval(a)[2] * self.prof2.eval(b)[2]);
        Ok(self.coupled.xi_jj(1, 2, u, 2) * e)
    }
}

/// `φ_{v1,v2}(u)` for the given Parisi solutions.
pub fn phi_coupling(
    coupled: &CoupledModelSpec,
    sol1: &ParisiSolution,
    sol2: &ParisiSolution,
    v1: f64,
    v2: f64,
    u: f64,
) -> Result<f64> {
    CouplingMap::new(coupled, sol1, sol2, v1, v2, COUPLING_QUAD_N)?.value(u)
}

/// Result of [`find_uf`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointResult {
    pub u_f: f64,
    /// `|φ(u_f) − u_f|`.
    pub residual: f64,
    pub iterations: usize,
    /// Largest finite-difference `|φ'|` over interior grid points.
    pub max_abs_derivative: f64,
    pub bracket: (f64, f64),
    /// False when `max_abs_derivative ≥ 1 − 1e−6`.
    pub contracting: bool,
    /// Whether the bisection fallback produced `u_f`.
    pub used_bisection: bool,
}

const DERIVATIVE_PROBES: usize = 41;

/// Fixed point of `φ_{c1,c2}` by damped iteration from `u = 0`, falling
/// back to bracketed root finding on `φ(u) − u`. An end point of
/// `[−√(c1c2), √(c1c2)]` where `φ` points outward is the fixed point of
/// the map clamped to that interval and is returned as such.
pub fn find_uf(
    coupled: &CoupledModelSpec,
    sol1: &ParisiSolution,
    sol2: &ParisiSolution,
    c1: f64,
    c2: f64,
    tol: f64,
) -> Result<FixedPointResult> {
    let map = CouplingMap::new(coupled, sol1, sol2, c1, c2, COUPLING_QUAD_N)?;
    find_uf_with(&map, tol)
}

/// [`find_uf`] for a prebuilt map.
pub fn find_uf_with(map: &CouplingMap, tol: f64) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let b = map.bound();
    let mut u = 0.0;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < 500 {
        let g = map.value(u)? - u;
        residual = g.abs();
        if residual <= tol {
            break;
        }
        u = (u + 0.5 * g).clamp(-b, b);
        iterations += 1;
    }
    let mut used_bisection = false;
    if residual > tol {
        let (g_lo, g_hi) = (map.value(-b)? + b, map.value(b)? - b);
        if g_hi >= 0.0 {
            u = b;
            residual = g_hi;
        } else if g_lo <= 0.0 {
            u = -b;
            residual = -g_lo;
        } else {
            used_bisection = true;
            let g = |x: f64| map.value(x).map(|v| v - x).unwrap_or(f64::NAN);
            u = find_root(g, -b, b, tol * 1e-3)?;
            residual = (map.value(u)? - u).abs();
        }
    }
    let delta = 1e-5 * b;
    let mut max_d: f64 = 0.0;
    for i in 1..=DERIVATIVE_PROBES {
        let x = -b + 2.0 * b * i as f64 / (DERIVATIVE_PROBES + 1) as f64;
        let d = (map.value(x + delta)? - map.value(x - delta)?) / (2.0 * delta);
        max_d = max_d.max(d.abs());
    }
    Ok(FixedPointResult {
        u_f: u,
        residual,
        iterations,
        max_abs_derivative: max_d,
        bracket: (-b, b),
        contracting: max_d < 1.0 - 1e-6,
        used_bisection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::FieldLaw;
    use crate::numerics::legendre_rule;
    use crate::parisi::evaluate_functional;

    fn sk(b: f64) -> MixtureSpec {
        MixtureSpec::sk(b).unwrap()
    }

    /// `E tanh²(h + s z)` by Gauss–Legendre on `[−12, 12]` against the density.
    fn legendre_tanh2(h: f64, s: f64) -> f64 {
        let r = legendre_rule(200, -12.0, 12.0).unwrap();
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        r.expect(|z| (h + s * z).tanh().powi(2) * (-0.5 * z * z).exp() / norm)
    }

    #[test]
    fn rs_fixed_point_examples() {
        assert_eq!(rs_fixed_point(&sk(0.3), FieldMarginal::zero()), 0.0);
        let c = rs_fixed_point(&sk(0.3), FieldMarginal::constant(0.5));
        // coarse scan then a 1e−6 grid inside the bracket
        let g = |c: f64| legendre_tanh2(0.5, (0.18 * c).sqrt()) - c;
        let coarse = (0..1000).find(|&i| g((i + 1) as f64 * 1e-3) < 0.0).unwrap();
        let lo = coarse as f64 * 1e-3;
        let fine = (0..=1000).find(|&i| g(lo + i as f64 * 1e-6) < 0.0).unwrap();
        let oracle = lo + fine as f64 * 1e-6;
        assert!((c - oracle).abs() <= 1e-6, "{c} {oracle}");
    }

    #[test]
    fn low_temperature_trivial_and_nonzero_roots() {
        let spec = sk(1.2);
        assert_eq!(rs_fixed_point(&spec, FieldMarginal::zero()), 0.0);
        let roots = rs_roots(&spec, FieldMarginal::zero());
        assert_eq!(roots[0], 0.0);
        let r = *roots.iter().find(|&&r| r > 0.01).unwrap();
        assert!((legendre_tanh2(0.0, (2.88 * r).sqrt()) - r).abs() < 1e-10);
    }

    #[test]
    fn at_index_examples() {
        for b in [0.3, 0.5, 0.9] {
            assert!((at_index(&sk(b), FieldMarginal::zero(), 0.0).unwrap() - 2.0 * b * b).abs() < 1e-14);
        }
        let f = FieldMarginal::constant(0.5);
        let c = rs_fixed_point(&sk(0.3), f);
        assert!(at_index(&sk(0.3), f, c).unwrap() < 1.0);
        assert!(at_index(&sk(0.3), f, 1.0).is_err());
        assert!(at_index(&sk(0.3), f, -0.1).is_err());
    }

    #[test]
    fn at_index_is_lipschitz() {
        let spec = MixtureSpec::new(vec![0.8, 0.5]).unwrap();
        let f = FieldMarginal::new(0.2, 0.3).unwrap();
        let scale = 10.0 * (spec.xi(1.0, 3) + spec.xi(1.0, 2).powi(2));
        let mut prev = at_index(&spec, f, 0.0).unwrap();
        for i in 1..=990 {
            let v = at_index(&spec, f, i as f64 * 1e-3).unwrap();
            assert!((v - prev).abs() / 1e-3 <= scale);
            prev = v;
        }
        let spec = sk(0.6);
        let mut prev = at_index(&spec, f, 0.0).unwrap();
        for i in 1..=990 {
            let v = at_index(&spec, f, i as f64 * 1e-3).unwrap();
            assert!((v - prev).abs() < 1e-3, "c={}", i as f64 * 1e-3);
            prev = v;
        }
    }

    #[test]
    fn support_min_examples() {
        assert_eq!(support_min(&OrderParameterTriplet::rs(0.0).unwrap(), 0.01), 0.0);
        let t = OrderParameterTriplet::from_atoms(&[(0.3, 0.4), (0.7, 0.6)]).unwrap();
        assert_eq!(support_min(&t, 0.01), 0.3);
        let t = OrderParameterTriplet::from_atoms(&[(0.1, 0.005), (0.7, 0.995)]).unwrap();
        assert_eq!(support_min(&t, 0.01), 0.7);
    }

    fn rs_solution(spec: &MixtureSpec, field: FieldMarginal, c: f64) -> ParisiSolution {
        evaluate_functional(spec, field, &OrderParameterTriplet::rs(c).unwrap(), 40).unwrap()
    }

    fn independent_symmetric() -> (CoupledModelSpec, ParisiSolution, ParisiSolution, f64, f64) {
        let field = FieldLaw { std1: 0.6, std2: 0.4, ..Default::default() };
        let coupled = CoupledModelSpec::new(sk(0.5), sk(0.4), vec![0.0], field).unwrap();
        let (f1, f2) = (field.marginal(1), field.marginal(2));
        let c1 = rs_fixed_point(&coupled.spec1, f1);
        let c2 = rs_fixed_point(&coupled.spec2, f2);
        (coupled.clone(), rs_solution(&coupled.spec1, f1, c1), rs_solution(&coupled.spec2, f2, c2), c1, c2)
    }

    fn identical(h: FieldMarginal) -> (CoupledModelSpec, ParisiSolution, f64) {
        let field = FieldLaw { mean1: h.mean, mean2: h.mean, std1: h.std, std2: h.std, corr: 1.0 };
        let coupled = CoupledModelSpec::new(sk(0.6), sk(0.6), vec![1.0], field).unwrap();
        let c = rs_fixed_point(&coupled.spec1, h);
        (coupled.clone(), rs_solution(&coupled.spec1, h, c), c)
    }

    #[test]
    fn phi_vanishes_for_independent_symmetric_fields() {
        let (coupled, s1, s2, c1, c2) = independent_symmetric();
        assert!(phi_coupling(&coupled, &s1, &s2, c1, c2, 0.0).unwrap().abs() < 1e-14);
        let r = find_uf(&coupled, &s1, &s2, c1, c2, 1e-12).unwrap();
        assert!(r.u_f.abs() <= 1e-8);
    }

    #[test]
    fn identical_systems_fix_c() {
        for h in [FieldMarginal::new(0.3, 0.5).unwrap(), FieldMarginal::constant(0.7)] {
            let (coupled, s, c) = identical(h);
            let phi = phi_coupling(&coupled, &s, &s, c, c, c).unwrap();
            assert!((phi - c).abs() < 1e-9, "{phi} {c}");
            let r = find_uf(&coupled, &s, &s, c, c, 1e-12).unwrap();
            assert!((r.u_f - c).abs() <= 1e-6, "{} {c}", r.u_f);
            assert!(r.contracting);
        }
    }

    #[test]
    fn rs_phi_matches_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let field = FieldLaw { mean1: 0.2, mean2: -0.1, std1: 0.5, std2: 0.3, corr: 0.4 };
        let coupled = CoupledModelSpec::new(sk(0.5), sk(0.7), vec![0.6], field).unwrap();
        let (v1, v2, u) = (0.4, 0.3, 0.2);
        // RS triplets with the atom at v_j make ∂_xΦ_j(·, v_j) = tanh
        let s1 = rs_solution(&coupled.spec1, field.marginal(1), v1);
        let s2 = rs_solution(&coupled.spec2, field.marginal(2), v2);
        let phi = phi_coupling(&coupled, &s1, &s2, v1, v2, u).unwrap();
        let a = coupled.xi_jj(1, 1, v1, 1);
        let b = coupled.xi_jj(2, 2, v2, 1);
        let eta = coupled.xi_jj(1, 2, u, 1) / (a * b).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        let rc = (1.0 - field.corr * field.corr).sqrt();
        for _ in 0..n {
            let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let h1 = field.mean1 + field.std1 * z[0];
            let h2 = field.mean2 + field.std2 * (field.corr * z[0] + rc * z[1]);
            let x1 = a.sqrt() * (eta.sqrt() * z[2] + (1.0 - eta).sqrt() * z[3]);
            let x2 = b.sqrt() * (eta.sqrt() * z[2] + (1.0 - eta).sqrt() * z[4]);
            let v = (h1 + x1).tanh() * (h2 + x2).tanh();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((phi - mean).abs() < 3.0 * se, "{phi} {mean} {se}");
    }

    fn generic() -> (CoupledModelSpec, ParisiSolution, ParisiSolution, f64, f64) {
        let field = FieldLaw { mean1: 0.3, mean2: 0.2, std1: 0.5, std2: 0.4, corr: 0.5 };
        let coupled = CoupledModelSpec::new(
            MixtureSpec::new(vec![0.4, 0.2]).unwrap(),
            MixtureSpec::new(vec![0.5, 0.1]).unwrap(),
            vec![0.8, 0.5],
            field,
        )
        .unwrap();
        let (f1, f2) = (field.marginal(1), field.marginal(2));
        let c1 = rs_fixed_point(&coupled.spec1, f1);
        let c2 = rs_fixed_point(&coupled.spec2, f2);
        (coupled.clone(), rs_solution(&coupled.spec1, f1, c1), rs_solution(&coupled.spec2, f2, c2), c1, c2)
    }

    #[test]
    fn generic_fixed_point_is_unique_and_inside() {
        let (coupled, s1, s2, c1, c2) = generic();
        let r = find_uf(&coupled, &s1, &s2, c1, c2, 1e-10).unwrap();
        assert!(r.residual <= 1e-8);
        assert!(r.u_f.abs() <= (c1 * c2).sqrt() + 1e-12);
        assert!(r.max_abs_derivative < 1.0 - 1e-4);
        let map = CouplingMap::new(&coupled, &s1, &s2, c1, c2, COUPLING_QUAD_N).unwrap();
        let b = map.bound();
        let g: Vec<f64> = (0..=400).map(|i| -b + 2.0 * b * i as f64 / 400.0).map(|u| map.value(u).unwrap() - u).collect();
        let changes = g.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn self_mapping_and_integration_by_parts() {
        let (coupled, s1, s2, c1, c2) = generic();
        let map = CouplingMap::new(&coupled, &s1, &s2, c1, c2, COUPLING_QUAD_N).unwrap();
        let b = map.bound();
        for i in 0..=20 {
            let u = -b + 2.0 * b * i as f64 / 20.0;
            assert!(map.value(u).unwrap().abs() <= b + 1e-10);
        }
        for i in 1..20 {
            let u = -b + 2.0 * b * i as f64 / 20.0;
            let d = 1e-4;
            let fd = (map.value(u + d).unwrap() - map.value(u - d).unwrap()) / (2.0 * d);
            assert!((fd - map.derivative(u).unwrap()).abs() < 1e-5, "u={u}");
        }
        assert!(map.value(1.01 * b).is_err());
    }

    #[test]
    fn phi_is_odd_without_fields() {
        let coupled = CoupledModelSpec::new(sk(1.1), sk(0.9), vec![0.7], FieldLaw::default()).unwrap();
        let t1 = OrderParameterTriplet::from_atoms(&[(0.0, 0.4), (0.5, 0.6)]).unwrap();
        let t2 = OrderParameterTriplet::from_atoms(&[(0.0, 0.5), (0.3, 0.5)]).unwrap();
        let s1 = evaluate_functional(&coupled.spec1, FieldMarginal::zero(), &t1, 40).unwrap();
        let s2 = evaluate_functional(&coupled.spec2, FieldMarginal::zero(), &t2, 40).unwrap();
        let map = CouplingMap::new(&coupled, &s1, &s2, 0.5, 0.3, COUPLING_QUAD_N).unwrap();
        for u in [0.05, 0.2, 0.38] {
            assert!((map.value(u).unwrap() + map.value(-u).unwrap()).abs() < 1e-10);
        }
    }
}
