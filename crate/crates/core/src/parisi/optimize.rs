//! Local minimization of the functional over `k`-step triplets.
//!
//! Ordered `(m, q)` sequences are parameterized by softmax logits of their
//! increments, so every point of `ℝ^{2k+1}` is a valid triplet. Each
//! restart runs a few sweeps of golden-section coordinate search followed
//! by a Nelder–Mead polish; restarts start from stratified random
//! triplets and are merged by value, then lexicographically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mixture::{FieldMarginal, MixtureSpec};
use crate::Result;

use super::{evaluate_functional_with, OrderParameterTriplet, ParisiSettings};

const LOGIT_BOUND: f64 = 30.0;

/// Tuning of [`minimize_functional_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Resolution used for the final evaluation of the best triplet.
    pub settings: ParisiSettings,
    /// Grid points used while searching.
    pub search_grid_points: usize,
    /// Evaluation budget of one Nelder–Mead polish.
    pub polish_evals: usize,
}

impl MinimizeOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            settings: ParisiSettings::default(),
            search_grid_points: 513,
            polish_evals: 300,
        }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    /// Best triplet found (canonical form).
    pub triplet: OrderParameterTriplet,
    /// Functional value at [`Self::triplet`] at full resolution.
    pub value: f64,
    /// Whether the best restart's simplex collapsed within budget.
    pub converged: bool,
    pub evaluations: usize,
    /// Search-resolution value reached by each restart.
    pub restart_values: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|a| (a - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn cumulative(parts: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for (i, p) in parts.iter().enumerate() {
        acc += p;
        out.push(if i + 1 == parts.len() { 1.0 } else { acc.min(1.0) });
    }
    out
}

/// Maps `θ = (a_0..a_k, b_1..b_k)` to a triplet: `q` increments are the
/// softmax of `(a, 0)`, `m` increments the softmax of `(b, 0)`.
fn decode(theta: &[f64], k: usize) -> OrderParameterTriplet {
    let mut a: Vec<f64> = theta[..k + 1].to_vec();
    a.push(0.0);
    let mut b: Vec<f64> = theta[k + 1..].to_vec();
    b.push(0.0);
    let mut q = cumulative(&softmax(&a));
    // q has k+3 entries ending at 1 = q_{k+2}
    q[k + 2] = 1.0;
    let m = cumulative(&softmax(&b));
    OrderParameterTriplet { k, m, q }
}

fn encode(q_atoms: &[f64], m_inner: &[f64]) -> Vec<f64> {
    let mut inc = Vec::new();
    let mut prev = 0.0;
    for &q in q_atoms.iter().chain(std::iter::once(&1.0)) {
        inc.push((q - prev).max(1e-12));
        prev = q;
    }
    let last = *inc.last().unwrap();
    let mut theta: Vec<f64> = inc[..inc.len() - 1].iter().map(|d| (d / last).ln()).collect();
    let mut inc = Vec::new();
    let mut prev = 0.0;
    for &m in m_inner.iter().chain(std::iter::once(&1.0)) {
        inc.push((m - prev).max(1e-12));
        prev = m;
    }
    let last = *inc.last().unwrap();
    theta.extend(inc[..inc.len() - 1].iter().map(|d| (d / last).ln()));
    theta.iter().map(|t| t.clamp(-LOGIT_BOUND, LOGIT_BOUND)).collect()
}

struct Objective<'a> {
    spec: &'a MixtureSpec,
    field: FieldMarginal,
    k: usize,
    settings: ParisiSettings,
    evals: usize,
}

impl Objective<'_> {
    fn eval(&mut self, theta: &[f64]) -> f64 {
        self.evals += 1;
        let t = decode(theta, self.k);
        evaluate_functional_with(self.spec, self.field, &t, &self.settings)
            .map(|s| s.value)
            .unwrap_or(f64::INFINITY)
    }
}

fn golden(obj: &mut Objective, theta: &mut [f64], fval: &mut f64, i: usize, radius: f64) {
    let lo = (theta[i] - radius).max(-LOGIT_BOUND);
    let hi = (theta[i] + radius).min(LOGIT_BOUND);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x = theta.to_vec();
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    x[i] = c;
    let mut fc = obj.eval(&x);
    x[i] = d;
    let mut fd = obj.eval(&x);
    while b - a > 1e-3 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            x[i] = c;
            fc = obj.eval(&x);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            x[i] = d;
            fd = obj.eval(&x);
        }
    }
    let (best_x, best_f) = if fc < fd { (c, fc) } else { (d, fd) };
    if best_f < *fval {
        theta[i] = best_x;
        *fval = best_f;
    }
}

/// Nelder–Mead with standard coefficients; returns whether the simplex
/// collapsed before the budget ran out.
fn nelder_mead(obj: &mut Objective, theta: &mut Vec<f64>, fval: &mut f64, budget: usize) -> bool {
    let n = theta.len();
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|t| *t = t.clamp(-LOGIT_BOUND, LOGIT_BOUND));
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(theta.clone(), *fval)];
    for i in 0..n {
        let mut v = theta.clone();
        v[i] += if v[i] > 0.0 { -0.5 } else { 0.5 };
        let f = obj.eval(&v);
        simplex.push((v, f));
    }
    let start = obj.evals;
    let mut converged = false;
    while obj.evals - start < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= 1e-13 && size <= 1e-4 || size <= 1e-7 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64).collect();
        let point = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect();
            clamp(&mut p);
            p
        };
        let xr = point(-1.0);
        let fr = obj.eval(&xr);
        if fr < simplex[0].1 {
            let xe = point(-2.0);
            let fe = obj.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = point(-0.5);
                let f = obj.eval(&x);
                (x, f)
            } else {
                let x = point(0.5);
                let f = obj.eval(&x);
                (x, f)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let mut v: Vec<f64> = best.iter().zip(&s.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    clamp(&mut v);
                    let f = obj.eval(&v);
                    *s = (v, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if simplex[0].1 < *fval {
        *theta = simplex[0].0.clone();
        *fval = simplex[0].1;
    }
    converged
}

/// Starting point of restart `r` out of `total`: the largest atom is drawn
/// from the `r`-th stratum of `(0, 1)`.
fn initial_theta(k: usize, r: usize, total: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64 + 1);
    let top = (r as f64 + rng.gen::<f64>()) / total as f64;
    let mut q: Vec<f64> = (0..k + 1).map(|_| rng.gen::<f64>()).collect();
    q.sort_by(f64::total_cmp);
    let qmax = *q.last().unwrap();
    let q: Vec<f64> = q.iter().map(|v| v / qmax * top).collect();
    let mut m: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    m.sort_by(f64::total_cmp);
    encode(&q, &m)
}

/// Minimizes `P_k` over `k`-step triplets with `restarts` starting points.
pub fn minimize_functional(
    spec: &MixtureSpec,
    field: FieldMarginal,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<MinimizeResult> {
    minimize_functional_with(spec, field, k, &MinimizeOptions::new(restarts, seed))
}

/// [`minimize_functional`] with explicit options.
pub fn minimize_functional_with(
    spec: &MixtureSpec,
    field: FieldMarginal,
    k: usize,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let restarts = opts.restarts.max(1);
    let search = ParisiSettings { grid_points: opts.search_grid_points, ..opts.settings };
    let runs: Vec<(Vec<f64>, f64, bool, usize)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut obj = Objective { spec, field, k, settings: search, evals: 0 };
            let mut theta = initial_theta(k, r, restarts, opts.seed);
            let mut f = obj.eval(&theta);
            for radius in [8.0, 3.0, 1.0] {
                for i in 0..theta.len() {
                    golden(&mut obj, &mut theta, &mut f, i, radius);
                }
            }
            let converged = nelder_mead(&mut obj, &mut theta, &mut f, opts.polish_evals);
            (theta, f, converged, obj.evals)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.3).sum();
    let restart_values: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let mut candidates: Vec<(OrderParameterTriplet, f64, bool)> =
        runs.into_iter().map(|(t, f, c, _)| (decode(&t, k), f, c)).collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.lex_cmp(&b.0)));
    let (best, _, converged) = candidates.swap_remove(0);
    let sol = evaluate_functional_with(spec, field, &best, &opts.settings)?;
    Ok(MinimizeResult { triplet: sol.triplet.clone(), value: sol.value, converged, evaluations, restart_values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_is_valid_and_inverts_encode() {
        let theta = encode(&[0.1, 0.4, 0.7], &[0.3, 0.8]);
        let t = decode(&theta, 2);
        t.validate().unwrap();
        for (a, b) in t.q.iter().zip([0.0, 0.1, 0.4, 0.7, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in t.m.iter().zip([0.0, 0.3, 0.8, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let extreme = decode(&[30.0, -30.0, 30.0, -30.0, 30.0], 2);
        extreme.validate().unwrap();
    }

    #[test]
    fn free_model_minimum_is_log_two() {
        let zero = MixtureSpec::new(vec![0.0]).unwrap();
        let r = minimize_functional(&zero, FieldMarginal::zero(), 1, 1, 3).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-14);
    }
}
