//! Mixture functions of mixed even-spin models.
//!
//! A mixture is a finite sequence `β_1, β_2, …` where `β_p` weighs the
//! interaction of order `2p`. Everything else in the crate is expressed
//! through `ξ(x) = Σ β_p² x^{2p}`, its derivatives, and
//! `θ(x) = x ξ'(x) − ξ(x)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Evaluates `Σ_p c_p x^{2p}` or one of its first three derivatives.
fn even_series(len: usize, coef: impl Fn(usize) -> f64, x: f64, order: u32) -> f64 {
    let mut acc = 0.0;
    for i in 0..len {
        let c = coef(i);
        if c == 0.0 {
            continue;
        }
        let d = 2 * (i as i32 + 1);
        let mut factor = 1.0;
        for j in 0..order as i32 {
            factor *= f64::from(d - j);
        }
        if factor == 0.0 {
            continue;
        }
        acc += c * factor * x.powi(d - order as i32);
    }
    acc
}

fn check_unit(x: f64) -> Result<()> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("argument {x} outside [-1, 1]")));
    }
    Ok(())
}

fn check_order(order: u32) -> Result<()> {
    if order > 2 {
        return Err(Error::Domain(format!("derivative order {order} not in {{0,1,2}}")));
    }
    Ok(())
}

/// Coefficients `β_p` of a mixed even-spin model; `betas[0]` is `β_1`.
///
/// Equality ignores trailing zero coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    betas: Vec<f64>,
}

impl PartialEq for MixtureSpec {
    fn eq(&self, other: &Self) -> bool {
        let n = self.max_order();
        n == other.max_order() && self.betas[..n] == other.betas[..n]
    }
}

impl MixtureSpec {
    /// Builds a mixture, rejecting negative or non-finite coefficients.
    ///
    /// All-zero mixtures are accepted: they describe the free model and
    /// several closed-form checks rely on them.
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if let Some(b) = betas.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::Domain(format!("beta_p must be finite and nonnegative, got {b}")));
        }
        Ok(Self { betas })
    }

    /// Shorthand for the Sherrington–Kirkpatrick mixture `ξ(x) = β² x²`.
    pub fn sk(beta: f64) -> Result<Self> {
        Self::new(vec![beta])
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// True when some `β_p` is positive.
    pub fn is_nontrivial(&self) -> bool {
        self.betas.iter().any(|&b| b > 0.0)
    }

    /// Largest half-degree `p` with `β_p > 0`, or 0 for the free model.
    pub fn max_order(&self) -> usize {
        self.betas.iter().rposition(|&b| b > 0.0).map_or(0, |i| i + 1)
    }

    /// `ξ`, `ξ'` or `ξ''` at `x` without domain checks.
    pub fn xi(&self, x: f64, order: u32) -> f64 {
        even_series(self.betas.len(), |i| self.betas[i] * self.betas[i], x, order)
    }

    /// `θ(x) = x ξ'(x) − ξ(x)` without domain checks.
    pub fn theta(&self, x: f64) -> f64 {
        // x ξ'(x) − ξ(x) = Σ (2p − 1) β_p² x^{2p}
        self.betas
            .iter()
            .enumerate()
            .map(|(i, b)| b * b * (2.0 * i as f64 + 1.0) * x.powi(2 * (i as i32 + 1)))
            .sum()
    }

    /// Largest value of `ξ''` on `[0, 1]`, attained at 1.
    pub fn max_xi2(&self) -> f64 {
        self.xi(1.0, 2)
    }
}

/// Checked `ξ^{(order)}(x)` for `|x| ≤ 1` and `order ∈ {0, 1, 2}`.
pub fn xi_eval(spec: &MixtureSpec, x: f64, order: u32) -> Result<f64> {
    check_unit(x)?;
    check_order(order)?;
    Ok(spec.xi(x, order))
}

/// Checked `θ(x)` for `|x| ≤ 1`.
pub fn theta_eval(spec: &MixtureSpec, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(spec.theta(x))
}

/// Marginal law `mean + std·g` of one system's external field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FieldMarginal {
    pub mean: f64,
    pub std: f64,
}

impl FieldMarginal {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::Domain(format!("invalid field marginal mean={mean} std={std}")));
        }
        Ok(Self { mean, std })
    }

    /// Deterministic field `h`.
    pub fn constant(h: f64) -> Self {
        Self { mean: h, std: 0.0 }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.mean == 0.0 && self.std == 0.0
    }
}

/// Joint law of the two fields: `(x¹ + s₁g¹, x² + s₂g²)` with `E g¹g² = corr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FieldLaw {
    #[serde(default)]
    pub mean1: f64,
    #[serde(default)]
    pub mean2: f64,
    #[serde(default)]
    pub std1: f64,
    #[serde(default)]
    pub std2: f64,
    #[serde(default)]
    pub corr: f64,
}

impl FieldLaw {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mean1, self.mean2, self.std1, self.std2, self.corr];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field parameters must be finite".into()));
        }
        if self.std1 < 0.0 || self.std2 < 0.0 {
            return Err(Error::Domain("field std must be nonnegative".into()));
        }
        if self.corr.abs() > 1.0 {
            return Err(Error::Domain("field corr must lie in [-1,1]".into()));
        }
        Ok(())
    }

    /// Marginal of system `j ∈ {1, 2}`.
    pub fn marginal(&self, j: usize) -> FieldMarginal {
        match j {
            1 => FieldMarginal { mean: self.mean1, std: self.std1 },
            _ => FieldMarginal { mean: self.mean2, std: self.std2 },
        }
    }

    /// Covariance `E (h¹ − x¹)(h² − x²)`.
    pub fn cross_cov(&self) -> f64 {
        self.corr * self.std1 * self.std2
    }
}

/// Two mixtures coupled through correlated disorder and correlated fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledModelSpec {
    pub spec1: MixtureSpec,
    pub spec2: MixtureSpec,
    t: Vec<f64>,
    pub field: FieldLaw,
}

impl CoupledModelSpec {
    /// Pads the three sequences with zeros to a common length.
    pub fn new(spec1: MixtureSpec, spec2: MixtureSpec, t: Vec<f64>, field: FieldLaw) -> Result<Self> {
        if let Some(tp) = t.iter().find(|tp| !(**tp >= 0.0 && **tp <= 1.0)) {
            return Err(Error::Domain(format!("t_p must lie in [0,1], got {tp}")));
        }
        field.validate()?;
        let len = spec1.betas.len().max(spec2.betas.len()).max(t.len());
        let pad = |mut v: Vec<f64>| {
            v.resize(len, 0.0);
            v
        };
        Ok(Self {
            spec1: MixtureSpec { betas: pad(spec1.betas) },
            spec2: MixtureSpec { betas: pad(spec2.betas) },
            t: pad(t),
            field,
        })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn spec(&self, j: usize) -> &MixtureSpec {
        if j == 1 {
            &self.spec1
        } else {
            &self.spec2
        }
    }

    /// Coefficient of `x^{2p}` in `ξ_{j,j'}`, for the 0-based index `p`.
    pub fn coefficient(&self, j: usize, jp: usize, p: usize) -> f64 {
        let (a, b) = (self.spec(j).betas(), self.spec(jp).betas());
        if j == jp {
            a[p] * a[p]
        } else {
            self.t[p] * a[p] * b[p]
        }
    }

    /// `ξ_{j,j'}^{(order)}(x)` without domain checks; `order ≤ 3`.
    pub fn xi_jj(&self, j: usize, jp: usize, x: f64, order: u32) -> f64 {
        even_series(self.t.len(), |p| self.coefficient(j, jp, p), x, order)
    }

    /// `θ_{j,j'}(x) = x ξ'_{j,j'}(x) − ξ_{j,j'}(x)`.
    pub fn theta_jj(&self, j: usize, jp: usize, x: f64) -> f64 {
        x * self.xi_jj(j, jp, x, 1) - self.xi_jj(j, jp, x, 0)
    }

    /// True when both mixtures coincide and every `t_p` with a live
    /// coefficient equals one.
    pub fn is_identical(&self) -> bool {
        self.spec1 == self.spec2
            && self.spec1.betas.iter().zip(&self.t).all(|(&b, &t)| b == 0.0 || t == 1.0)
    }
}

/// Checked cross mixture `ξ_{1,2}^{(order)}(x)`.
pub fn cross_xi_eval(coupled: &CoupledModelSpec, x: f64, order: u32) -> Result<f64> {
    check_unit(x)?;
    check_order(order)?;
    Ok(coupled.xi_jj(1, 2, x, order))
}

/// `ξ'_{1,1}(v1)^{1/2} ξ'_{2,2}(v2)^{1/2} − ξ'_{1,2}(√(v1 v2))`.
pub fn cauchy_schwarz_gap(coupled: &CoupledModelSpec, v1: f64, v2: f64) -> Result<f64> {
    for v in [v1, v2] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("v = {v} outside (0, 1]")));
        }
    }
    let a = coupled.xi_jj(1, 1, v1, 1).sqrt() * coupled.xi_jj(2, 2, v2, 1).sqrt();
    Ok(a - coupled.xi_jj(1, 2, (v1 * v2).sqrt(), 1))
}

/// Structure of the pair of mixtures relevant to the temperature conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// Common ratio `β_{2,p} / β_{1,p}` on [`Self::proportional_set`].
    pub proportionality_nu: Option<f64>,
    /// Half-degrees (1-based) on which the common ratio holds.
    pub proportional_set: Vec<usize>,
    /// Smallest half-degree in the joint support breaking proportionality.
    pub deviating_index: Option<usize>,
    /// Half-degrees where both `β_{1,p}` and `β_{2,p}` are positive.
    pub shared_support: Vec<usize>,
    /// Whether the infinite-support density requirement can be checked.
    /// Always false: a finite truncation never witnesses it.
    pub density_verifiable: bool,
    pub notes: String,
}

/// Reports where the two mixtures are proportional.
///
/// Ratios are compared on the shared support; the largest class of equal
/// ratios wins, ties going to the class with the smallest index.
pub fn diagnose_conditions(coupled: &CoupledModelSpec) -> ConditionReport {
    let (b1, b2) = (coupled.spec1.betas(), coupled.spec2.betas());
    let shared: Vec<usize> = (0..b1.len()).filter(|&p| b1[p] > 0.0 && b2[p] > 0.0).collect();
    let mut notes = String::new();
    if !coupled.spec1.is_nontrivial() || !coupled.spec2.is_nontrivial() {
        notes.push_str("a mixture is identically zero; ");
    }
    let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
    for &p in &shared {
        let r = b2[p] / b1[p];
        match classes.iter_mut().find(|(nu, _)| (*nu - r).abs() <= 1e-12 * nu.abs().max(r.abs())) {
            Some((_, set)) => set.push(p),
            None => classes.push((r, vec![p])),
        }
    }
    let best = classes
        .into_iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.1[0].cmp(&a.1[0])));
    let report = match best {
        None => {
            notes.push_str("no shared support, no common ratio");
            ConditionReport {
                proportionality_nu: None,
                proportional_set: Vec::new(),
                deviating_index: None,
                shared_support: Vec::new(),
                density_verifiable: false,
                notes,
            }
        }
        Some((nu, set)) => {
            let deviating = (0..b1.len())
                .filter(|p| !set.contains(p))
                .find(|&p| b1[p] > 0.0 || b2[p] > 0.0)
                .map(|p| p + 1);
            notes.push_str(
                "finite truncation: the density of the proportional monomials cannot be verified",
            );
            ConditionReport {
                proportionality_nu: Some(nu),
                proportional_set: set.iter().map(|p| p + 1).collect(),
                deviating_index: deviating,
                shared_support: shared.iter().map(|p| p + 1).collect(),
                density_verifiable: false,
                notes,
            }
        }
    };
    report
}
