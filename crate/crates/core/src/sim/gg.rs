//! Ghirlanda–Guerra type residuals from exact Gibbs spectra.
//!
//! Every overlap is `R_e = N⁻¹ Σ_i s_u(i) s_v(i)` for an edge `e = (u, v)`
//! between two replicas. Replicas are independent under `⟨·⟩`, so
//!
//! ```text
//! ⟨Π_k R_{e_k}⟩ = N^{−d} Σ_{i_1..i_d} Π_ν ⟨σ_{S_ν}⟩,
//! ```
//!
//! where `S_ν` is the symmetric difference of the sites `i_k` attached to
//! replica `ν`. The single-replica correlations `⟨σ_S⟩` are read off the
//! Walsh spectrum of each system's Gibbs measure.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::enumerate::gibbs_transforms;
use super::stats::mean_var;
use super::{DisorderSampler, Scheme};
use crate::mixture::CoupledModelSpec;
use crate::{Error, Result};

/// Largest replica count `n`.
pub const MAX_REPLICAS: usize = 4;
/// Largest degree of `f` and of `ψ`.
pub const MAX_DEGREE: u32 = 6;
/// Largest number of index tuples visited per realization.
pub const MAX_TUPLES: f64 = 1e7;

/// A replica: system (0 or 1) and replica label (from 1).
type Node = (u8, u8);

/// Variables of a [`FunctionSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Argument of `ψ`.
    X,
    /// `R¹_{a,b}` with `a < b`.
    R1(u8, u8),
    /// `R²_{a,b}` with `a < b`.
    R2(u8, u8),
    /// `R_{a,b} = R(σ^a, τ^b)`.
    R(u8, u8),
}

impl Var {
    fn edge(self) -> Option<(Node, Node)> {
        match self {
            Var::X => None,
            Var::R1(a, b) => Some(((0, a), (0, b))),
            Var::R2(a, b) => Some(((1, a), (1, b))),
            Var::R(a, b) => Some(((0, a), (1, b))),
        }
    }

    fn max_replica(self) -> u8 {
        match self {
            Var::X => 0,
            Var::R1(a, b) | Var::R2(a, b) | Var::R(a, b) => a.max(b),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => write!(f, "x"),
            Var::R1(a, b) => write!(f, "R1_{a}{b}"),
            Var::R2(a, b) => write!(f, "R2_{a}{b}"),
            Var::R(a, b) => write!(f, "R_{a}{b}"),
        }
    }
}

/// Monomial as sorted `(variable, power)` pairs.
type Monomial = Vec<(Var, u32)>;

#[derive(Debug, Clone, PartialEq, Default)]
struct Poly(BTreeMap<Monomial, f64>);

impl Poly {
    fn constant(c: f64) -> Self {
        let mut m = BTreeMap::new();
        if c != 0.0 {
            m.insert(Vec::new(), c);
        }
        Poly(m)
    }

    fn var(v: Var) -> Self {
        Poly(BTreeMap::from([(vec![(v, 1)], 1.0)]))
    }

    fn add_term(&mut self, mono: Monomial, c: f64) {
        let e = self.0.entry(mono).or_insert(0.0);
        *e += c;
    }

    fn add(mut self, other: &Poly, sign: f64) -> Self {
        for (m, c) in &other.0 {
            self.add_term(m.clone(), sign * c);
        }
        self.0.retain(|_, c| *c != 0.0);
        self
    }

    fn mul(&self, other: &Poly) -> Self {
        let mut out = Poly::default();
        for (ma, ca) in &self.0 {
            for (mb, cb) in &other.0 {
                out.add_term(merge(ma, mb), ca * cb);
            }
        }
        out.0.retain(|_, c| *c != 0.0);
        out
    }

    fn pow(&self, k: u32) -> Self {
        (0..k).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }

    fn degree(&self) -> u32 {
        self.0.keys().map(|m| m.iter().map(|(_, p)| p).sum()).max().unwrap_or(0)
    }

    /// Replaces `x` by `replacement`.
    fn substitute_x(&self, replacement: &Poly) -> Self {
        let mut out = Poly::default();
        for (m, c) in &self.0 {
            let mut term = Poly::constant(*c);
            for &(v, p) in m {
                let factor = if v == Var::X { replacement.pow(p) } else { Poly(BTreeMap::from([(vec![(v, p)], 1.0)])) };
                term = term.mul(&factor);
            }
            out = out.add(&term, 1.0);
        }
        out
    }
}

fn merge(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<Var, u32> = a.iter().copied().collect();
    for &(v, p) in b {
        *map.entry(v).or_insert(0) += p;
    }
    map.into_iter().collect()
}

/// Polynomial in `x` or in replica overlaps, parsed from text.
///
/// Grammar: `poly := term (('+' | '-') term)*`, `term := factor ('*' factor)*`,
/// `factor := number | var ['^' int] | '(' poly ')' ['^' int]`, with
/// variables `x`, `R1_ab`, `R2_ab` and `R_ab` for single-digit replica
/// labels `a, b`. Self-overlaps `R1_aa`, `R2_aa` equal 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    source: String,
    poly: Poly,
}

impl FunctionSpec {
    pub fn parse(s: &str) -> Result<Self> {
        s.parse()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    pub fn uses_x(&self) -> bool {
        self.poly.0.keys().any(|m| m.iter().any(|(v, _)| *v == Var::X))
    }

    pub fn uses_overlaps(&self) -> bool {
        self.poly.0.keys().any(|m| m.iter().any(|(v, _)| *v != Var::X))
    }

    /// Largest replica label in the expression.
    pub fn max_replica(&self) -> usize {
        self.poly.0.keys().flat_map(|m| m.iter().map(|(v, _)| v.max_replica())).max().unwrap_or(0) as usize
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for FunctionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut p = Parser { tokens, pos: 0 };
        let poly = p.poly()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Invalid(format!("unexpected token {:?} in {s:?}", p.tokens[p.pos])));
        }
        Ok(Self { source: s.trim().to_string(), poly })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Var(Option<Var>),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse().map_err(|_| Error::Invalid(format!("bad number {text:?}")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token::Var(parse_var(&word)?));
        } else {
            return Err(Error::Invalid(format!("unexpected character {c:?} in {s:?}")));
        }
    }
    Ok(out)
}

/// `None` stands for a self-overlap, which equals 1.
fn parse_var(word: &str) -> Result<Option<Var>> {
    if word == "x" {
        return Ok(Some(Var::X));
    }
    let bad = || Error::Invalid(format!("unknown variable {word:?}"));
    let (head, idx) = word.split_once('_').ok_or_else(bad)?;
    let digits: Vec<u8> = idx.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect::<Option<_>>().ok_or_else(bad)?;
    let [a, b] = digits[..] else { return Err(bad()) };
    if a == 0 || b == 0 {
        return Err(Error::Invalid(format!("replica labels start at 1 in {word:?}")));
    }
    let (lo, hi) = (a.min(b), a.max(b));
    Ok(match head {
        "R1" if a == b => None,
        "R2" if a == b => None,
        "R1" => Some(Var::R1(lo, hi)),
        "R2" => Some(Var::R2(lo, hi)),
        "R" => Some(Var::R(a, b)),
        _ => return Err(bad()),
    })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn poly(&mut self) -> Result<Poly> {
        let mut sign = 1.0;
        if self.peek() == Some(&Token::Op('-')) {
            self.pos += 1;
            sign = -1.0;
        } else if self.peek() == Some(&Token::Op('+')) {
            self.pos += 1;
        }
        let mut acc = Poly::default().add(&self.term()?, sign);
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let t = self.term()?;
            acc = acc.add(&t, if c == '+' { 1.0 } else { -1.0 });
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.factor()?;
        while self.peek() == Some(&Token::Op('*')) {
            self.pos += 1;
            acc = acc.mul(&self.factor()?);
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly> {
        let base = match self.next() {
            Some(Token::Num(v)) => return Ok(Poly::constant(v)),
            Some(Token::Var(Some(v))) => Poly::var(v),
            Some(Token::Var(None)) => Poly::constant(1.0),
            Some(Token::Op('(')) => {
                let p = self.poly()?;
                if self.next() != Some(Token::Op(')')) {
                    return Err(Error::Invalid("unbalanced parenthesis".into()));
                }
                p
            }
            other => return Err(Error::Invalid(format!("expected a factor, found {other:?}"))),
        };
        if self.peek() == Some(&Token::Op('^')) {
            self.pos += 1;
            match self.next() {
                Some(Token::Num(e)) if e >= 0.0 && e.fract() == 0.0 && e <= 64.0 => Ok(base.pow(e as u32)),
                other => Err(Error::Invalid(format!("exponent must be a small non-negative integer, found {other:?}"))),
            }
        } else {
            Ok(base)
        }
    }
}

/// The four functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GgFunctional {
    Phi1,
    Psi1,
    Phi2,
    Psi2,
}

impl fmt::Display for GgFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GgFunctional::Phi1 => "Phi_1",
            GgFunctional::Psi1 => "Psi_1",
            GgFunctional::Phi2 => "Phi_2",
            GgFunctional::Psi2 => "Psi_2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GgEstimate {
    pub functional: GgFunctional,
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GgReport {
    pub n_sites: usize,
    pub samples: usize,
    pub estimates: Vec<GgEstimate>,
}

impl GgReport {
    pub fn get(&self, functional: GgFunctional) -> &GgEstimate {
        self.estimates.iter().find(|e| e.functional == functional).expect("all functionals are reported")
    }
}

/// Multiset of edges with replicas relabeled by first appearance.
type EdgeMonomial = Vec<(Node, Node)>;

fn canonical(edges: &[(Node, Node)]) -> EdgeMonomial {
    let mut cur: Vec<(Node, Node)> = edges.iter().map(|&(u, v)| if u <= v { (u, v) } else { (v, u) }).collect();
    cur.sort();
    for _ in 0..8 {
        let mut labels: BTreeMap<Node, u8> = BTreeMap::new();
        let mut next = [1u8, 1u8];
        let mut relabel = |n: Node| {
            *labels.entry(n).or_insert_with(|| {
                let l = next[n.0 as usize];
                next[n.0 as usize] += 1;
                l
            })
        };
        let mut out: Vec<(Node, Node)> = cur
            .iter()
            .map(|&(u, v)| {
                let (u2, v2) = ((u.0, relabel(u)), (v.0, relabel(v)));
                if u2 <= v2 {
                    (u2, v2)
                } else {
                    (v2, u2)
                }
            })
            .collect();
        out.sort();
        if out == cur {
            break;
        }
        cur = out;
    }
    cur
}

/// Linear combination of edge monomials.
#[derive(Debug, Clone, Default)]
struct Combination(BTreeMap<EdgeMonomial, f64>);

/// Integer multiples of polynomial coefficients, grouped by monomial so
/// that terms cancelling across replicas cancel exactly.
#[derive(Debug, Clone, Default)]
struct CombinationBuilder(BTreeMap<EdgeMonomial, BTreeMap<u64, i64>>);

impl CombinationBuilder {
    fn add_poly(&mut self, p: &Poly, weight: i64) {
        for (m, c) in &p.0 {
            let mut edges = Vec::new();
            for &(v, k) in m {
                let e = v.edge().expect("x is substituted before expansion");
                edges.extend(std::iter::repeat_n(e, k as usize));
            }
            *self.0.entry(canonical(&edges)).or_default().entry(c.to_bits()).or_insert(0) += weight;
        }
    }

    fn finish(self) -> Combination {
        let mut out = BTreeMap::new();
        for (m, parts) in self.0 {
            let c: f64 = parts.iter().map(|(bits, w)| f64::from_bits(*bits) * *w as f64).sum();
            if c != 0.0 {
                out.insert(m, c);
            }
        }
        Combination(out)
    }
}

impl Combination {
    fn cost(&self, n_sites: usize) -> f64 {
        self.0.keys().map(|m| (n_sites as f64).powi(m.len() as i32)).sum()
    }

    fn evaluate(&self, spectrum: &[Vec<f64>; 2], n_sites: usize) -> f64 {
        self.0.iter().map(|(m, c)| c * monomial_value(m, spectrum, n_sites)).sum()
    }
}

fn monomial_value(edges: &[(Node, Node)], spectrum: &[Vec<f64>; 2], n_sites: usize) -> f64 {
    if edges.is_empty() {
        return 1.0;
    }
    let mut nodes: Vec<Node> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    nodes.sort();
    nodes.dedup();
    let idx = |n: Node| nodes.binary_search(&n).expect("node is listed");
    let ends: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (idx(u), idx(v))).collect();
    let systems: Vec<usize> = nodes.iter().map(|n| n.0 as usize).collect();
    let mut masks = vec![0usize; nodes.len()];
    let total = visit(0, &ends, &systems, spectrum, n_sites, &mut masks);
    total / (n_sites as f64).powi(edges.len() as i32)
}

fn visit(
    k: usize,
    ends: &[(usize, usize)],
    systems: &[usize],
    spectrum: &[Vec<f64>; 2],
    n_sites: usize,
    masks: &mut [usize],
) -> f64 {
    if k == ends.len() {
        return masks.iter().zip(systems).map(|(&m, &s)| spectrum[s][m]).product();
    }
    let (u, v) = ends[k];
    let mut acc = 0.0;
    for i in 0..n_sites {
        masks[u] ^= 1 << i;
        masks[v] ^= 1 << i;
        acc += visit(k + 1, ends, systems, spectrum, n_sites, masks);
        masks[u] ^= 1 << i;
        masks[v] ^= 1 << i;
    }
    acc
}

/// Per-realization pieces of one functional, scaled by `n`:
/// `n Φ = E[main] − E[left] E[right]`.
struct FunctionalPlan {
    functional: GgFunctional,
    main: Combination,
    product: Option<(Combination, Combination)>,
}

fn build_plans(n: usize, psi: &FunctionSpec, f: &FunctionSpec) -> Vec<FunctionalPlan> {
    let r = (n + 1) as u8;
    let at = |v: Var| psi.poly.substitute_x(&Poly::var(v));
    let f_times = |v: Var| f.poly.mul(&at(v));
    let mut plans = Vec::new();
    for (sys, functional) in [(0usize, GgFunctional::Phi1), (1, GgFunctional::Phi2)] {
        let r_sys = |a: u8, b: u8| if sys == 0 { Var::R1(a, b) } else { Var::R2(a, b) };
        let mut main = CombinationBuilder::default();
        main.add_poly(&f_times(r_sys(1, r)), n as i64);
        for l in 2..=n as u8 {
            main.add_poly(&f_times(r_sys(1, l)), -1);
        }
        let mut left = CombinationBuilder::default();
        left.add_poly(&f.poly, 1);
        let mut right = CombinationBuilder::default();
        right.add_poly(&at(r_sys(1, 2)), 1);
        plans.push(FunctionalPlan { functional, main: main.finish(), product: Some((left.finish(), right.finish())) });
    }
    for (cross, functional) in
        [(Var::R as fn(u8, u8) -> Var, GgFunctional::Psi1), (|a, b| Var::R(b, a), GgFunctional::Psi2)]
    {
        let mut main = CombinationBuilder::default();
        main.add_poly(&f_times(cross(1, r)), n as i64);
        for l in 1..=n as u8 {
            main.add_poly(&f_times(cross(1, l)), -1);
        }
        plans.push(FunctionalPlan { functional, main: main.finish(), product: None });
    }
    plans.sort_by_key(|p| p.functional as u8);
    plans
}

/// Estimates `Φ_{1,n}`, `Ψ_{1,n}`, `Φ_{2,n}`, `Ψ_{2,n}` for `f` and `ψ`
/// over `m` realizations at size `n_sites`.
///
/// Disorder products `E⟨f⟩ E⟨ψ(R_{1,2})⟩` use the unbiased U-statistic
/// over distinct realizations; standard errors are jackknife estimates.
#[allow(clippy::too_many_arguments)]
pub fn gg_residuals(
    coupled: &CoupledModelSpec,
    n_sites: usize,
    m: usize,
    n: usize,
    psi: &FunctionSpec,
    f: &FunctionSpec,
    seed: u64,
    scheme: Scheme,
) -> Result<GgReport> {
    if n == 0 || n > MAX_REPLICAS {
        return Err(Error::Guard(format!("replica count must be in 1..={MAX_REPLICAS}, got {n}")));
    }
    if m < 3 {
        return Err(Error::Domain(format!("at least 3 disorder samples are required, got {m}")));
    }
    if psi.uses_overlaps() {
        return Err(Error::Invalid(format!("psi must be a polynomial in x, got {psi}")));
    }
    if f.uses_x() {
        return Err(Error::Invalid(format!("f must not use x, got {f}")));
    }
    if f.max_replica() > n {
        return Err(Error::Invalid(format!("f uses replica {} but n = {n}", f.max_replica())));
    }
    for (name, spec) in [("psi", psi), ("f", f)] {
        if spec.degree() > MAX_DEGREE {
            return Err(Error::Guard(format!("{name} has degree {} > {MAX_DEGREE}", spec.degree())));
        }
    }
    let plans = build_plans(n, psi, f);
    let cost: f64 = plans
        .iter()
        .map(|p| p.main.cost(n_sites) + p.product.as_ref().map_or(0.0, |(a, b)| a.cost(n_sites) + b.cost(n_sites)))
        .sum();
    if cost > MAX_TUPLES {
        return Err(Error::Guard(format!("replica moments need {cost:.3e} index tuples per realization")));
    }
    let sampler = DisorderSampler::new(coupled, n_sites, scheme)?;
    let rows: Vec<Vec<[f64; 3]>> = super::enumerate::realizations(&sampler, m, seed, |real| {
        let g = gibbs_transforms(&real);
        plans
            .iter()
            .map(|p| {
                let a = p.main.evaluate(&g.spectrum, n_sites);
                let (b, c) = p
                    .product
                    .as_ref()
                    .map_or((0.0, 0.0), |(l, r)| (l.evaluate(&g.spectrum, n_sites), r.evaluate(&g.spectrum, n_sites)));
                [a, b, c]
            })
            .collect()
    });
    let estimates = plans
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let samples: Vec<[f64; 3]> = rows.iter().map(|r| r[k]).collect();
            let (estimate, se) = jackknife(&samples, p.product.is_some());
            GgEstimate { functional: p.functional, n, estimate: estimate / n as f64, se: se / n as f64 }
        })
        .collect();
    Ok(GgReport { n_sites, samples: m, estimates })
}

/// `mean(a) − U(b, c)` and its jackknife standard error.
fn jackknife(samples: &[[f64; 3]], with_product: bool) -> (f64, f64) {
    let m = samples.len() as f64;
    let sa: f64 = samples.iter().map(|s| s[0]).sum();
    let sb: f64 = samples.iter().map(|s| s[1]).sum();
    let sc: f64 = samples.iter().map(|s| s[2]).sum();
    let sbc: f64 = samples.iter().map(|s| s[1] * s[2]).sum();
    let u = |sb: f64, sc: f64, sbc: f64, m: f64| if with_product { (sb * sc - sbc) / (m * (m - 1.0)) } else { 0.0 };
    let full = sa / m - u(sb, sc, sbc, m);
    let loo: Vec<f64> = samples
        .iter()
        .map(|s| (sa - s[0]) / (m - 1.0) - u(sb - s[1], sc - s[2], sbc - s[1] * s[2], m - 1.0))
        .collect();
    let (_, var) = mean_var(&loo);
    let se = ((m - 1.0) * (m - 1.0) / m * var).sqrt();
    (full, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{FieldLaw, MixtureSpec};

    fn sk_pair(t: f64) -> CoupledModelSpec {
        let field = FieldLaw { std1: 0.4, std2: 0.4, corr: 0.5, ..Default::default() };
        CoupledModelSpec::new(MixtureSpec::sk(0.9).unwrap(), MixtureSpec::sk(1.1).unwrap(), vec![t], field).unwrap()
    }

    #[test]
    fn parser_expands_and_normalizes() {
        let a = FunctionSpec::parse("(R1_21 + 1)^2 - 2*R1_12 - 1").unwrap();
        let b = FunctionSpec::parse("R1_12^2").unwrap();
        assert_eq!(a.poly, b.poly);
        assert_eq!(FunctionSpec::parse("R1_33 * 3").unwrap().poly, Poly::constant(3.0));
        assert_eq!(FunctionSpec::parse("x^3 - 0.5*x").unwrap().degree(), 3);
        assert_eq!(FunctionSpec::parse("R_21").unwrap().max_replica(), 2);
        assert!(FunctionSpec::parse("-x + 2e-1").is_ok());
        for bad in ["y", "R3_12", "R1_1", "x^", "(x", "x^-1", "R_01", "x $"] {
            assert!(FunctionSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_form_ignores_labels() {
        let a = canonical(&[((0, 1), (1, 3)), ((0, 1), (1, 3))]);
        let b = canonical(&[((0, 1), (1, 1)), ((1, 1), (0, 1))]);
        assert_eq!(a, b);
    }

    #[test]
    fn monomials_match_brute_force() {
        let c = sk_pair(0.5);
        let n = 4;
        let real = DisorderSampler::new(&c, n, Scheme::Tensor).unwrap().sample(4, 0);
        let g = gibbs_transforms(&real);
        let w: Vec<Vec<f64>> = [1, 2]
            .iter()
            .map(|&j| {
                let h = real.hamiltonian(j);
                let z: f64 = h.iter().map(|x| x.exp()).sum();
                h.iter().map(|x| x.exp() / z).collect()
            })
            .collect();
        let overlap = |x: usize, y: usize| 1.0 - 2.0 * (x ^ y).count_ones() as f64 / n as f64;
        // ⟨R_11² (R¹_12)⟩ with replicas σ¹, σ², τ¹
        let mut brute = 0.0;
        for s1 in 0..16 {
            for s2 in 0..16 {
                for t1 in 0..16 {
                    brute += w[0][s1] * w[0][s2] * w[1][t1] * overlap(s1, t1).powi(2) * overlap(s1, s2);
                }
            }
        }
        let edges = [((0, 1), (1, 1)), ((0, 1), (1, 1)), ((0, 1), (0, 2))];
        let fast = monomial_value(&edges, &g.spectrum, n);
        assert!((fast - brute).abs() < 1e-13, "{fast} {brute}");
    }

    #[test]
    fn constant_f_cancels_cross_functionals() {
        let c = sk_pair(0.5);
        let psi = FunctionSpec::parse("x^2 + 0.3*x").unwrap();
        let one = FunctionSpec::parse("1").unwrap();
        for n in 1..=3 {
            let rep = gg_residuals(&c, 5, 6, n, &psi, &one, 2, Scheme::Tensor).unwrap();
            assert_eq!(rep.get(GgFunctional::Psi1).estimate, 0.0);
            assert_eq!(rep.get(GgFunctional::Psi2).estimate, 0.0);
        }
    }

    #[test]
    fn relabeling_replicas_is_invisible() {
        let c = sk_pair(0.3);
        let psi = FunctionSpec::parse("x^2").unwrap();
        let f = FunctionSpec::parse("R1_12^2 + R_13 - 0.5*R2_23").unwrap();
        let g = FunctionSpec::parse("R1_13^2 + R_12 - 0.5*R2_32").unwrap();
        let a = gg_residuals(&c, 5, 8, 3, &psi, &f, 9, Scheme::Tensor).unwrap();
        let b = gg_residuals(&c, 5, 8, 3, &psi, &g, 9, Scheme::Tensor).unwrap();
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            assert!((x.estimate - y.estimate).abs() < 1e-13);
            assert!((x.se - y.se).abs() < 1e-13);
        }
    }

    #[test]
    fn psi_11_is_minus_half_square_gap() {
        // Ψ_{1,1}(R_11², x²) = −½ E⟨(R_11² − R_12²)²⟩ ≤ 0
        let c = sk_pair(0.5);
        let rep = gg_residuals(
            &c,
            5,
            10,
            1,
            &FunctionSpec::parse("x^2").unwrap(),
            &FunctionSpec::parse("R_11^2").unwrap(),
            1,
            Scheme::Tensor,
        )
        .unwrap();
        let sampler = DisorderSampler::new(&c, 5, Scheme::Tensor).unwrap();
        let mut acc = 0.0;
        for r in 0..10 {
            let g = gibbs_transforms(&sampler.sample(1, r));
            let e11 = ((0, 1), (1, 1));
            let e12 = ((0, 1), (1, 2));
            let a = monomial_value(&[e11; 4], &g.spectrum, 5);
            let b = monomial_value(&[e11, e11, e12, e12], &g.spectrum, 5);
            acc += -(a - b);
        }
        let est = rep.get(GgFunctional::Psi1).estimate;
        assert!((est - acc / 10.0).abs() < 1e-13);
        assert!(est <= 0.0);
    }

    #[test]
    fn jackknife_without_product_is_standard_error() {
        let s: Vec<[f64; 3]> = (0..20).map(|i| [(i as f64).sin(), 0.0, 0.0]).collect();
        let (est, se) = jackknife(&s, false);
        let a: Vec<f64> = s.iter().map(|x| x[0]).collect();
        let ms = super::super::MeanSe::from_samples(&a);
        assert!((est - ms.mean).abs() < 1e-14);
        assert!((se - ms.se).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let c = sk_pair(0.5);
        let psi = FunctionSpec::parse("x^2").unwrap();
        let f = FunctionSpec::parse("R1_12").unwrap();
        assert!(matches!(gg_residuals(&c, 4, 5, 5, &psi, &f, 0, Scheme::Tensor), Err(Error::Guard(_))));
        assert!(matches!(gg_residuals(&c, 4, 5, 1, &psi, &f, 0, Scheme::Tensor), Err(Error::Invalid(_))));
        assert!(gg_residuals(&c, 4, 2, 2, &psi, &f, 0, Scheme::Tensor).is_err());
        let big = FunctionSpec::parse("x^7").unwrap();
        assert!(matches!(gg_residuals(&c, 4, 5, 2, &big, &f, 0, Scheme::Tensor), Err(Error::Guard(_))));
        let heavy = FunctionSpec::parse("R1_12^6").unwrap();
        assert!(matches!(
            gg_residuals(&c, 20, 5, 2, &FunctionSpec::parse("x^6").unwrap(), &heavy, 0, Scheme::Tensor),
            Err(Error::Guard(_))
        ));
    }
}
